// Command-line front end: dataset generation, training, indexing,
// evaluation, audience matching and the line-oriented serve loop.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "bcl/contrastive/correlation.hpp"
#include "bcl/datagen/datagen.hpp"
#include "bcl/errors.hpp"
#include "bcl/io/formats.hpp"
#include "bcl/pipeline/match.hpp"
#include "bcl/retrieval/index.hpp"
#include "bcl/training/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json read_json_file(const std::string& path) {
  auto in = bcl::io::open_input(path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw bcl::FormatError(path + ": " + e.what());
  }
}

std::string data_file(const std::string& dir, const char* name) { return (fs::path(dir) / name).string(); }

struct Dataset {
  std::vector<bcl::SongContent> catalog;
  std::vector<bcl::ScoredPair> train;
  std::vector<bcl::ScoredPair> test;
};

Dataset load_dataset(const std::string& dir, bool with_test) {
  namespace f = bcl::datagen::files;
  Dataset d;
  d.catalog = bcl::io::load_catalog(data_file(dir, f::catalog));
  d.train = bcl::io::load_pairs(data_file(dir, f::train));
  if (with_test) d.test = bcl::io::load_pairs(data_file(dir, f::test));
  return d;
}

// Applies a flag value over the config-file value when the flag was given
// and records where each setting came from.
struct Sources {
  std::vector<std::string> flagged;
  std::vector<std::string> filed;

  template <typename T>
  void apply(CLI::Option* opt, const T& value, T& field, const char* key) {
    if (opt->count() > 0) {
      field = value;
      flagged.push_back(key);
    }
  }
  void log(const json& effective) const {
    std::string msg = "config:";
    for (const auto& [k, v] : effective.items()) {
      const bool f = std::find(flagged.begin(), flagged.end(), k) != flagged.end();
      const bool c = std::find(filed.begin(), filed.end(), k) != filed.end();
      msg += " " + k + "=" + v.dump() + (f ? "(flag)" : c ? "(file)" : "");
    }
    std::cerr << msg << '\n';
  }
};

std::vector<std::string> keys_of(const json& j) {
  std::vector<std::string> keys;
  for (const auto& [k, _] : j.items()) keys.push_back(k);
  return keys;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cold-start song retrieval and audience targeting"};
  app.require_subcommand(1);

  // gen -------------------------------------------------------------------
  auto* gen = app.add_subcommand("gen", "Generate a synthetic dataset");
  std::string gen_config, gen_out;
  std::uint64_t gen_seed = 0;
  std::size_t gen_songs = 0, gen_users = 0;
  double gen_threshold = 0.0;
  gen->add_option("--config", gen_config, "Generator config JSON")->check(CLI::ExistingFile);
  gen->add_option("--out", gen_out, "Output directory")->required();
  auto* gen_seed_opt = gen->add_option("--seed", gen_seed);
  auto* gen_songs_opt = gen->add_option("--n-songs", gen_songs);
  auto* gen_users_opt = gen->add_option("--n-users", gen_users);
  auto* gen_thr_opt = gen->add_option("--threshold", gen_threshold);

  // train -----------------------------------------------------------------
  auto* train = app.add_subcommand("train", "Train the content encoder");
  std::string train_data, train_out, train_config, train_log, train_corr;
  bool train_validate = false;
  bcl::TrainConfig flags;
  std::string ablation;
  train->add_option("--data", train_data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  train->add_option("--out", train_out, "Checkpoint path")->required();
  train->add_option("--config", train_config, "Training config JSON")->check(CLI::ExistingFile);
  train->add_option("--log", train_log, "Per-epoch JSON-lines log (default: stderr)");
  train->add_option("--correlation-out", train_corr, "Write the final feature correlation TSV");
  train->add_flag("--validate", train_validate, "Log held-out Recall@50 after every epoch");
  auto* o_epochs = train->add_option("--epochs", flags.epochs);
  auto* o_seed = train->add_option("--seed", flags.seed);
  auto* o_ablation = train->add_option("--ablation", ablation)
                         ->check(CLI::IsMember({"full_bcl", "base", "feature_dropout",
                                                "static_corr_mask_only"}));
  auto* o_lr = train->add_option("--lr", flags.lr);
  auto* o_l1 = train->add_option("--lambda1", flags.lambda1);
  auto* o_l2 = train->add_option("--lambda2", flags.lambda2);
  auto* o_tau = train->add_option("--tau", flags.tau);
  auto* o_ratio = train->add_option("--ratio", flags.ratio);
  auto* o_noise = train->add_option("--noise", flags.noise);
  auto* o_alpha = train->add_option("--alpha", flags.alpha);
  auto* o_refresh = train->add_option("--refresh-interval", flags.refresh_interval);
  auto* o_bbpr = train->add_option("--batch-bpr", flags.batch_size_bpr);
  auto* o_bcl = train->add_option("--batch-cl", flags.batch_size_cl);
  auto* o_incl = train->add_flag("--include-positive", flags.include_positive_in_denominator,
                                 "Keep the positive pair in the contrastive denominator");

  // index -----------------------------------------------------------------
  auto* index = app.add_subcommand("index", "Encode the catalog into a song pool index");
  std::string idx_ckpt, idx_data, idx_out;
  index->add_option("--ckpt", idx_ckpt)->required()->check(CLI::ExistingFile);
  index->add_option("--data", idx_data)->required()->check(CLI::ExistingDirectory);
  index->add_option("--out", idx_out)->required();

  // eval ------------------------------------------------------------------
  auto* eval = app.add_subcommand("eval", "Recall/NDCG over held-out pairs");
  std::string ev_ckpt, ev_data, ev_index, ev_out;
  std::size_t ev_k = 50;
  eval->add_option("--ckpt", ev_ckpt)->required()->check(CLI::ExistingFile);
  eval->add_option("--data", ev_data)->required()->check(CLI::ExistingDirectory);
  eval->add_option("--index", ev_index, "Prebuilt index (must match the checkpoint)")
      ->check(CLI::ExistingFile);
  eval->add_option("--k", ev_k)->check(CLI::PositiveNumber);
  eval->add_option("--out", ev_out, "Also write the report here");

  // export ----------------------------------------------------------------
  auto* exp = app.add_subcommand("export", "Export song representations as TSV");
  std::string ex_ckpt, ex_data, ex_out, ex_corr;
  exp->add_option("--ckpt", ex_ckpt)->required()->check(CLI::ExistingFile);
  exp->add_option("--data", ex_data)->required()->check(CLI::ExistingDirectory);
  exp->add_option("--out", ex_out)->required();
  exp->add_option("--correlation", ex_corr, "Also write the checkpoint's correlation matrix");

  // match / serve ---------------------------------------------------------
  struct OnlineArgs {
    std::string ckpt, index, events, users, cat_config;
    bool no_timings = false;
  };
  auto add_online = [](CLI::App* sub, OnlineArgs& a) {
    sub->add_option("--ckpt", a.ckpt, "Checkpoint used to encode request content")
        ->required()->check(CLI::ExistingFile);
    sub->add_option("--index", a.index)->required()->check(CLI::ExistingFile);
    sub->add_option("--events", a.events)->required()->check(CLI::ExistingFile);
    sub->add_option("--users", a.users)->required()->check(CLI::ExistingFile);
    sub->add_option("--cat-config", a.cat_config)->check(CLI::ExistingFile);
    sub->add_flag("--no-timings", a.no_timings, "Leave stage timings out of responses");
  };
  auto* match = app.add_subcommand("match", "Match one request to target audiences");
  OnlineArgs match_args;
  std::string match_request = "-";
  add_online(match, match_args);
  match->add_option("--request", match_request, "MatchRequest JSON file ('-' for stdin)");

  auto* serve = app.add_subcommand("serve", "Answer MatchRequest JSON lines from stdin");
  OnlineArgs serve_args;
  add_online(serve, serve_args);

  // target ----------------------------------------------------------------
  auto* tgt = app.add_subcommand("target", "Audience targeting for given seed songs");
  std::string tg_events, tg_users, tg_cat;
  std::vector<bcl::SongId> tg_songs;
  std::size_t tg_m = 100;
  tgt->add_option("--events", tg_events)->required()->check(CLI::ExistingFile);
  tgt->add_option("--users", tg_users)->required()->check(CLI::ExistingFile);
  tgt->add_option("--songs", tg_songs, "Seed song ids")->required()->delimiter(',');
  tgt->add_option("--m", tg_m)->check(CLI::PositiveNumber);
  tgt->add_option("--cat-config", tg_cat)->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << e.what() << '\n';
    return 2;
  }

  auto load_cat = [](const std::string& path) {
    bcl::CatConfig c;
    if (!path.empty()) c = read_json_file(path).get<bcl::CatConfig>();
    return c;
  };

  try {
    if (*gen) {
      bcl::datagen::GenConfig cfg;
      Sources src;
      if (!gen_config.empty()) {
        const json j = read_json_file(gen_config);
        cfg = j.get<bcl::datagen::GenConfig>();
        src.filed = keys_of(j);
      }
      src.apply(gen_seed_opt, gen_seed, cfg.seed, "seed");
      src.apply(gen_songs_opt, gen_songs, cfg.n_songs, "n_songs");
      src.apply(gen_users_opt, gen_users, cfg.n_users, "n_users");
      src.apply(gen_thr_opt, gen_threshold, cfg.threshold, "threshold");
      cfg.validate();
      src.log(json(cfg));
      const auto world = bcl::datagen::generate_world(cfg);
      bcl::datagen::write_world(world, gen_out);
      std::cout << bcl::datagen::stats_json(world.stats).dump() << '\n';
    } else if (*train) {
      bcl::TrainConfig cfg;
      Sources src;
      if (!train_config.empty()) {
        const json j = read_json_file(train_config);
        cfg = j.get<bcl::TrainConfig>();
        src.filed = keys_of(j);
      }
      src.apply(o_epochs, flags.epochs, cfg.epochs, "epochs");
      src.apply(o_seed, flags.seed, cfg.seed, "seed");
      if (o_ablation->count() > 0) {
        cfg.ablation = bcl::parse_ablation(ablation);
        src.flagged.push_back("ablation");
      }
      src.apply(o_lr, flags.lr, cfg.lr, "lr");
      src.apply(o_l1, flags.lambda1, cfg.lambda1, "lambda1");
      src.apply(o_l2, flags.lambda2, cfg.lambda2, "lambda2");
      src.apply(o_tau, flags.tau, cfg.tau, "tau");
      src.apply(o_ratio, flags.ratio, cfg.ratio, "ratio");
      src.apply(o_noise, flags.noise, cfg.noise, "noise");
      src.apply(o_alpha, flags.alpha, cfg.alpha, "alpha");
      src.apply(o_refresh, flags.refresh_interval, cfg.refresh_interval, "refresh_interval");
      src.apply(o_bbpr, flags.batch_size_bpr, cfg.batch_size_bpr, "batch_size_bpr");
      src.apply(o_bcl, flags.batch_size_cl, cfg.batch_size_cl, "batch_size_cl");
      src.apply(o_incl, flags.include_positive_in_denominator,
                cfg.include_positive_in_denominator, "include_positive_in_denominator");
      cfg.validate();
      src.log(json(cfg));

      const Dataset data = load_dataset(train_data, train_validate);
      std::ofstream log_file;
      if (!train_log.empty()) log_file = bcl::io::open_output(train_log);
      std::ostream& log = train_log.empty() ? std::cerr : log_file;

      std::function<std::optional<double>(const bcl::EncoderModel&)> validate;
      if (train_validate) {
        validate = [&](const bcl::EncoderModel& model) -> std::optional<double> {
          std::vector<bcl::SongId> ids;
          bcl::Matrix reps = bcl::encode_contents(data.catalog, model);
          std::vector<std::size_t> order(data.catalog.size());
          for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
          std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return data.catalog[a].song_id < data.catalog[b].song_id;
          });
          bcl::Matrix sorted(reps.rows(), reps.cols());
          for (std::size_t i = 0; i < order.size(); ++i) {
            ids.push_back(data.catalog[order[i]].song_id);
            std::copy(reps.row(order[i]).begin(), reps.row(order[i]).end(), sorted.row(i).begin());
          }
          const bcl::SongPoolIndex idx(std::move(ids), std::move(sorted), 0);
          return bcl::evaluate(idx, data.catalog, data.train, data.test, 50).recall;
        };
      }
      const bcl::Checkpoint ckpt = bcl::train(
          cfg, data.catalog, data.train, validate,
          [&](const bcl::EpochLog& e, const bcl::EncoderModel&) {
            log << bcl::epoch_log_json(e).dump() << '\n' << std::flush;
          });
      bcl::save_checkpoint(ckpt, train_out);
      if (!train_corr.empty() && !ckpt.correlation.empty()) {
        auto out = bcl::io::open_output(train_corr);
        bcl::write_correlation_tsv(out, ckpt.correlation, ckpt.encoder.feature_names());
      }
      std::cerr << "checkpoint: " << train_out << " fingerprint "
                << bcl::checkpoint_fingerprint(ckpt) << '\n';
    } else if (*index) {
      const auto ckpt = bcl::load_checkpoint(idx_ckpt);
      const auto catalog = bcl::io::load_catalog(data_file(idx_data, bcl::datagen::files::catalog));
      const auto built = bcl::build_index(ckpt, catalog);
      bcl::save_index(built, idx_out);
      std::cout << json{{"songs", built.size()}, {"dim", built.dim()},
                        {"fingerprint", built.fingerprint()}}.dump()
                << '\n';
    } else if (*eval) {
      const auto ckpt = bcl::load_checkpoint(ev_ckpt);
      const Dataset data = load_dataset(ev_data, true);
      bcl::SongPoolIndex idx;
      if (!ev_index.empty()) {
        idx = bcl::load_index(ev_index);
        if (idx.fingerprint() != bcl::checkpoint_fingerprint(ckpt))
          throw bcl::ContractError("index " + ev_index + " was not built from " + ev_ckpt);
      } else {
        idx = bcl::build_index(ckpt, data.catalog);
      }
      const auto report = bcl::evaluate(idx, data.catalog, data.train, data.test, ev_k);
      const std::string text = bcl::report_json(report).dump(2);
      std::cout << text << '\n';
      if (!ev_out.empty()) bcl::io::open_output(ev_out) << text << '\n';
    } else if (*exp) {
      const auto ckpt = bcl::load_checkpoint(ex_ckpt);
      const auto catalog = bcl::io::load_catalog(data_file(ex_data, bcl::datagen::files::catalog));
      const auto idx = bcl::build_index(ckpt, catalog);
      auto out = bcl::io::open_output(ex_out);
      bcl::export_representations(out, idx, catalog);
      if (!ex_corr.empty()) {
        if (ckpt.correlation.empty())
          throw bcl::ContractError("checkpoint holds no correlation matrix (trained without it)");
        auto corr = bcl::io::open_output(ex_corr);
        bcl::write_correlation_tsv(corr, ckpt.correlation, ckpt.encoder.feature_names());
      }
    } else if (*match || *serve) {
      const OnlineArgs& a = *match ? match_args : serve_args;
      const bcl::MatchContext ctx(bcl::load_checkpoint(a.ckpt), bcl::load_index(a.index),
                                  bcl::io::load_events(a.events),
                                  bcl::io::load_user_embeddings(a.users), load_cat(a.cat_config));
      if (*match) {
        json req;
        if (match_request == "-") {
          std::stringstream ss;
          ss << std::cin.rdbuf();
          req = json::parse(ss.str(), nullptr, false);
        } else {
          auto in = bcl::io::open_input(match_request);
          req = json::parse(in, nullptr, false);
        }
        if (req.is_discarded()) throw bcl::FormatError("match request is not valid JSON");
        const auto resp = ctx.run(bcl::parse_match_request(req));
        std::cout << bcl::response_json(resp, !a.no_timings).dump() << '\n';
      } else {
        std::string line;
        std::size_t n = 0;
        while (std::getline(std::cin, line)) {
          ++n;
          if (line.empty() || line == "\r") continue;
          json out;
          try {
            const json req = json::parse(line);
            out = bcl::response_json(ctx.run(bcl::parse_match_request(req)), !a.no_timings);
          } catch (const json::exception& e) {
            out = {{"error", {{"kind", "format"}, {"message", e.what()}, {"line", n}}}};
          } catch (const bcl::Error& e) {
            out = {{"error", {{"kind", e.kind()}, {"message", e.what()}, {"line", n}}}};
          }
          std::cout << out.dump() << '\n' << std::flush;
        }
      }
    } else if (*tgt) {
      const auto resp =
          bcl::run_targeting(tg_songs, tg_m, bcl::io::load_events(tg_events),
                             bcl::io::load_user_embeddings(tg_users), load_cat(tg_cat));
      std::cout << bcl::response_json(resp, false).dump() << '\n';
    }
  } catch (const bcl::Error& e) {
    std::cerr << "error: " << e.kind() << ": " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
