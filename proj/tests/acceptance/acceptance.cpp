// Acceptance run: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset, e.g. `acceptance 1 4 7`.

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "bcl/cat/cat.hpp"
#include "bcl/contrastive/augment.hpp"
#include "bcl/contrastive/correlation.hpp"
#include "bcl/contrastive/grouping.hpp"
#include "bcl/contrastive/info_nce.hpp"
#include "bcl/datagen/datagen.hpp"
#include "bcl/errors.hpp"
#include "bcl/io/binary.hpp"
#include "bcl/numerics/gradcheck.hpp"
#include "bcl/pipeline/match.hpp"
#include "bcl/retrieval/index.hpp"
#include "bcl/training/bpr.hpp"
#include "bcl/training/trainer.hpp"
#include "support/helpers.hpp"
#include "support/world.hpp"

using namespace bcl;
using testing_support::random_matrix;
using testing_support::to_rows;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Collects failed checks with a short reason; only the first few are kept.
struct Outcome {
  std::vector<std::string> failures;
  std::vector<std::string> notes;
  std::size_t checks = 0;

  void check(bool ok, const std::string& what) {
    ++checks;
    if (!ok && failures.size() < 5) failures.push_back(what);
    if (!ok && failures.size() == 5) failures.push_back("...");
  }
  void note(const std::string& s) { notes.push_back(s); }
  bool passed() const { return failures.empty(); }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

bool bitwise_equal(const Matrix& a, std::size_t ra, const Matrix& b, std::size_t rb) {
  return a.cols() == b.cols() &&
         std::memcmp(a.row(ra).data(), b.row(rb).data(), a.cols() * sizeof(double)) == 0;
}

// ---------------------------------------------------------------------------
// 1. distance correlation

void distance_correlation_oracle(Outcome& out) {
  const auto t0 = Clock::now();
  std::mt19937_64 gen(101);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 4 + gen() % 29, p = 1 + gen() % 8, q = 1 + gen() % 8;
    Matrix x = random_matrix(n, p, gen), y = random_matrix(n, q, gen);
    if (trial % 4 == 0) {  // dependent pair
      for (std::size_t r = 0; r < n; ++r) y(r, 0) = x(r, 0) * x(r, 0) + 0.1 * y(r, 0);
    }
    const double got = distance_correlation(x, y);
    const double want = oracle::distance_correlation(to_rows(x), to_rows(y));
    worst = std::max(worst, std::abs(got - want));
    out.check(std::abs(got - want) <= 1e-12, "trial " + std::to_string(trial) + " differs by " +
                                                 fmt("%.3g", std::abs(got - want)));
    out.check(distance_correlation(x, x) == 1.0, "dCor(X,X) != 1 in trial " + std::to_string(trial));
    Matrix c(n, q, 0.25 * static_cast<double>(trial % 7));
    out.check(distance_correlation(x, c) == 0.0 && distance_correlation(c, x) == 0.0,
              "constant column not 0 in trial " + std::to_string(trial));
  }
  const double t = seconds_since(t0);
  out.check(t < 5.0, "runtime " + fmt("%.2f s", t));
  out.note("max |dCor - oracle| " + fmt("%.2e", worst) + ", " + fmt("%.2f s", t));
}

// ---------------------------------------------------------------------------
// 2. gradients

double max_rel_error(const Matrix& analytic, const std::vector<double>& numeric) {
  double worst = 0.0;
  for (std::size_t i = 0; i < numeric.size(); ++i)
    worst = std::max(worst, oracle::relative_error(analytic.values()[i], numeric[i], 1e-6));
  return worst;
}

std::vector<double> flat(const Matrix& m) { return {m.values().begin(), m.values().end()}; }

void gradient_suite(Outcome& out) {
  const auto t0 = Clock::now();
  constexpr double h = 1e-5, tol = 1e-4;
  std::mt19937_64 gen(202);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst_bpr = 0.0, worst_nce[2] = {0.0, 0.0}, worst_full[2] = {0.0, 0.0};

  for (int cfg_i = 0; cfg_i < 20; ++cfg_i) {
    const std::string tag = "config " + std::to_string(cfg_i);

    // BPR on free representations.
    {
      const std::size_t b = 2 + gen() % 6, d = 2 + gen() % 6;
      Matrix q = random_matrix(b, d, gen), p = random_matrix(b, d, gen), n = random_matrix(b, d, gen);
      const BprResult r = bpr_loss(q, p, n);
      auto along = [&](int which) {
        return [&, which](const std::vector<double>& v) {
          Matrix x(b, d, v);
          return bpr_loss(which == 0 ? x : q, which == 1 ? x : p, which == 2 ? x : n).loss;
        };
      };
      const double e = std::max({max_rel_error(r.grad_query, oracle::numeric_gradient(along(0), flat(q), h)),
                                 max_rel_error(r.grad_positive, oracle::numeric_gradient(along(1), flat(p), h)),
                                 max_rel_error(r.grad_negative, oracle::numeric_gradient(along(2), flat(n), h))});
      worst_bpr = std::max(worst_bpr, e);
      out.check(e < tol, tag + " bpr rel error " + fmt("%.2e", e));
    }

    // Contrastive loss, both denominators.
    for (int include = 0; include < 2; ++include) {
      const std::size_t n = 2 + gen() % 6, d = 2 + gen() % 5;
      const double tau = 0.1 + 0.9 * u(gen);
      Matrix a = random_matrix(n, d, gen), b = random_matrix(n, d, gen);
      const InfoNceResult r = info_nce(a, b, tau, include == 1);
      auto fa = [&](const std::vector<double>& v) {
        return info_nce(Matrix(n, d, v), b, tau, include == 1, false).loss;
      };
      auto fb = [&](const std::vector<double>& v) {
        return info_nce(a, Matrix(n, d, v), tau, include == 1, false).loss;
      };
      const double e = std::max(max_rel_error(r.grad_first, oracle::numeric_gradient(fa, flat(a), h)),
                                max_rel_error(r.grad_second, oracle::numeric_gradient(fb, flat(b), h)));
      worst_nce[include] = std::max(worst_nce[include], e);
      out.check(e < tol, tag + " contrastive(include=" + std::to_string(include) + ") rel error " +
                             fmt("%.2e", e));
    }

    // Full multi-task objective through the encoder, randomness frozen.
    datagen::GenConfig g = testing_support::small_gen_config(1000 + cfg_i);
    g.n_songs = 120;
    g.n_users = 80;
    g.n_attributes = 2 + gen() % 3;
    g.feature_dim = 3 + gen() % 6;
    g.vocab_size = 4 + gen() % 3;
    const datagen::World world = datagen::generate_world(g);
    TrainConfig cfg;
    cfg.hidden1 = 4 + gen() % 9;
    cfg.hidden2 = 3 + gen() % 8;
    cfg.rep_dim = 3 + gen() % 6;
    cfg.proj_hidden = 3 + gen() % 6;
    cfg.proj_dim = 2 + gen() % 5;
    cfg.proj_hidden_layer = gen() % 2 == 0;
    cfg.batch_size_bpr = 3 + gen() % 4;
    cfg.batch_size_cl = 3 + gen() % 4;
    cfg.lambda1 = 0.1 + 0.9 * u(gen);
    cfg.lambda2 = 1e-3 + 1e-2 * u(gen);
    cfg.tau = 0.1 + 0.9 * u(gen);
    cfg.ratio = 0.2 + 0.3 * u(gen);
    cfg.noise = 0.01 + 0.1 * u(gen);
    cfg.refresh_interval = 2;
    cfg.lr = 1e-2;
    cfg.seed = static_cast<std::uint64_t>(cfg_i);
    const int include = cfg_i % 2;
    cfg.include_positive_in_denominator = include == 1;
    Trainer t(cfg, world.catalog.songs, world.split.train);
    auto triples = t.epoch_triples();
    for (std::size_t s = 0; s < 3; ++s)
      t.train_step(std::span(triples).subspan(s * cfg.batch_size_bpr, cfg.batch_size_bpr),
                   t.next_contrastive_batch());
    const PreparedStep step = t.prepare(std::span(triples).subspan(0, cfg.batch_size_bpr),
                                        t.next_contrastive_batch());
    const ObjectiveWeights w{cfg.lambda1, cfg.lambda2, cfg.tau, include == 1};
    const EncoderConfig ec = t.model().config();
    LossFn loss = [&](const ParamStore& p, GradMap* grads) {
      return evaluate_objective(EncoderModel(ec, p), step, w, grads).total;
    };
    const GradCheckResult r = finite_diff_check(loss, t.model().params(), h, 1e-6);
    worst_full[include] = std::max(worst_full[include], r.max_rel_error);
    out.check(r.max_rel_error < tol, tag + " full objective rel error " + fmt("%.2e", r.max_rel_error) +
                                         " at " + r.worst_tensor + "[" + std::to_string(r.worst_index) + "]");
  }
  const double t = seconds_since(t0);
  out.check(t < 60.0, "runtime " + fmt("%.1f s", t));
  out.note("max rel error: bpr " + fmt("%.1e", worst_bpr) + ", contrastive " +
           fmt("%.1e", worst_nce[0]) + "/" + fmt("%.1e", worst_nce[1]) + ", full " +
           fmt("%.1e", worst_full[0]) + "/" + fmt("%.1e", worst_full[1]) + ", " + fmt("%.1f s", t));
}

// ---------------------------------------------------------------------------
// 3. correlated group sampling

void gumbel_fidelity(Outcome& out) {
  const Matrix c = Matrix::from_rows(
      {{1, 0.6, 0.3, 0.1}, {0.6, 1, 0.4, 0.4}, {0.3, 0.4, 1, 0.4}, {0.1, 0.4, 0.4, 1}});
  const std::vector<double> probs{0.6, 0.3, 0.1};
  RngStream rng(303, Stream::grouping);
  std::vector<double> counts(3, 0.0);
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) counts[sample_groups_from_seed(c, 0, rng).group_a.at(1) - 1] += 1;
  const double chi = oracle::chi_square(counts, probs);
  const double p = oracle::chi_square_sf(chi, 2);
  out.check(p > 0.01, "chi-square p = " + fmt("%.4f", p));
  out.note("first-pick frequencies " + fmt("%.4f", counts[0] / draws) + "/" +
           fmt("%.4f", counts[1] / draws) + "/" + fmt("%.4f", counts[2] / draws) + ", chi2 " +
           fmt("%.2f", chi) + ", p " + fmt("%.3f", p));

  std::mt19937_64 gen(304);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::size_t total = 0;
  for (std::size_t k = 2; k <= 12; ++k) {
    Matrix corr(k, k, 1.0);
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = i + 1; j < k; ++j) corr(i, j) = corr(j, i) = u(gen);
    for (int trial = 0; trial < 2000; ++trial, ++total) {
      const AugmentedGroupPair g = sample_groups(corr, rng);
      const std::size_t n = correlated_pick_count(k);
      std::vector<std::size_t> all(g.group_a);
      all.insert(all.end(), g.group_b.begin(), g.group_b.end());
      std::sort(all.begin(), all.end());
      std::vector<std::size_t> expect(k);
      std::iota(expect.begin(), expect.end(), 0);
      const bool ok = g.group_a.size() == n + 1 && g.group_b.size() == k - n - 1 &&
                      !g.group_a.empty() && g.group_a.front() == g.seed_feature && all == expect &&
                      std::is_sorted(g.group_b.begin(), g.group_b.end());
      out.check(ok, "partition invariant broken for k=" + std::to_string(k));
    }
  }
  out.note(std::to_string(total) + " partitions checked for k in 2..12");
}

// ---------------------------------------------------------------------------
// 4. contrastive hand example

void contrastive_hand_example(Outcome& out) {
  const Matrix z = Matrix::from_rows({{1, 0}, {0, 1}});
  const double off = info_nce(z, z, 1.0, false).loss;
  const double on = info_nce(z, z, 1.0, true).loss;
  out.check(std::abs(off + 2.0) <= 1e-9, "flag off gives " + fmt("%.12f", off));
  out.check(std::abs(on - 2.0 * std::log(1.0 + std::exp(-1.0))) <= 1e-9, "flag on gives " + fmt("%.12f", on));
  out.check(std::abs(on - 0.62652) <= 1e-5, "flag on gives " + fmt("%.12f", on));
  out.note("off " + fmt("%.10f", off) + ", on " + fmt("%.10f", on));
}

// ---------------------------------------------------------------------------
// 5. augmentation invariants

struct AugCase {
  Matrix x;
  std::vector<std::size_t> group;
  double ratio;
};

AugCase random_case(std::mt19937_64& gen) {
  const std::size_t k = 2 + gen() % 9, d = 1 + gen() % 64;
  AugCase c{random_matrix(k, d, gen, 0.1, 2.0), {}, std::uniform_real_distribution<double>(0, 1)(gen)};
  for (std::size_t f = 0; f < k; ++f)
    if (gen() % 2) c.group.push_back(f);
  if (c.group.empty()) c.group.push_back(gen() % k);
  return c;
}

// Out-of-group rows are untouched bit for bit.
bool others_preserved(const AugCase& c, const Matrix& v) {
  std::set<std::size_t> in(c.group.begin(), c.group.end());
  for (std::size_t f = 0; f < c.x.rows(); ++f)
    if (!in.count(f) && !bitwise_equal(v, f, c.x, f)) return false;
  return true;
}

void augmentation_invariants(Outcome& out) {
  std::mt19937_64 gen(505);
  RngStream rng(505, Stream::augmentation);
  for (int trial = 0; trial < 1000; ++trial) {
    const AugCase c = random_case(gen);
    const std::size_t d = c.x.cols(), want = static_cast<std::size_t>(std::floor(c.ratio * d));
    const AugmentedView v = random_mask(c.x, c.group, c.ratio, rng);
    bool ok = others_preserved(c, v.values);
    for (std::size_t f : c.group) {
      std::size_t zeros = 0;
      for (std::size_t t = 0; t < d; ++t) {
        if (v.values(f, t) == 0.0) ++zeros;
        else ok = ok && std::bit_cast<std::uint64_t>(v.values(f, t)) == std::bit_cast<std::uint64_t>(c.x(f, t));
      }
      ok = ok && zeros == want;
    }
    out.check(ok, "random mask case " + std::to_string(trial));
  }
  for (int trial = 0; trial < 1000; ++trial) {
    const AugCase c = random_case(gen);
    const std::size_t d = c.x.cols(), want = static_cast<std::size_t>(std::floor(c.ratio * d));
    const AugmentedView v = span_mask(c.x, c.group, c.ratio, rng);
    bool ok = others_preserved(c, v.values);
    for (std::size_t f : c.group) {
      std::vector<std::size_t> zeros;
      for (std::size_t t = 0; t < d; ++t) {
        if (v.values(f, t) == 0.0) zeros.push_back(t);
        else ok = ok && std::bit_cast<std::uint64_t>(v.values(f, t)) == std::bit_cast<std::uint64_t>(c.x(f, t));
      }
      ok = ok && zeros.size() == want && (zeros.empty() || zeros.back() - zeros.front() + 1 == want);
    }
    out.check(ok, "span mask case " + std::to_string(trial));
  }
  for (int trial = 0; trial < 1000; ++trial) {
    const AugCase c = random_case(gen);
    const double eps = 0.5 * c.ratio;
    const AugmentedView v = uniform_noise(c.x, c.group, eps, rng);
    bool ok = others_preserved(c, v.values);
    for (std::size_t f : c.group)
      for (std::size_t t = 0; t < c.x.cols(); ++t) ok = ok && std::abs(v.values(f, t) - c.x(f, t)) <= eps;
    out.check(ok, "noise case " + std::to_string(trial));
  }
  out.note("3 x 1000 randomized cases");
}

// ---------------------------------------------------------------------------
// 6. end-to-end synthetic benchmark

void synthetic_benchmark(Outcome& out) {
  const auto t0 = Clock::now();
  const datagen::World world = datagen::generate_world(datagen::GenConfig{});
  const std::vector<std::uint64_t> seeds{42, 43, 44};
  double base_sum = 0.0, bcl_sum = 0.0;
  int tail_wins = 0;
  for (std::uint64_t seed : seeds) {
    EvalReport reports[2];
    for (int v = 0; v < 2; ++v) {
      TrainConfig cfg;
      cfg.seed = seed;
      cfg.ablation = v == 0 ? Ablation::base : Ablation::full_bcl;
      const auto ts = Clock::now();
      const Checkpoint ckpt = train(cfg, world.catalog.songs, world.split.train);
      reports[v] = evaluate(build_index(ckpt, world.catalog.songs), world.catalog.songs,
                            world.split.train, world.split.test, 50);
      std::printf("  seed %llu %-8s recall@50 %.4f  tail %.4f  ndcg@50 %.4f  random %.4f  (%.0f s)\n",
                  static_cast<unsigned long long>(seed), v == 0 ? "base" : "full_bcl",
                  reports[v].recall, reports[v].tail.recall, reports[v].ndcg,
                  reports[v].random_recall, seconds_since(ts));
      std::fflush(stdout);
    }
    const EvalReport& base = reports[0];
    const EvalReport& full = reports[1];
    out.check(base.recall >= 5.0 * base.random_recall,
              "seed " + std::to_string(seed) + " base recall " + fmt("%.4f", base.recall) +
                  " < 5 x random " + fmt("%.4f", base.random_recall));
    base_sum += base.recall;
    bcl_sum += full.recall;
    if (full.tail.recall > base.tail.recall) ++tail_wins;
  }
  const double n = static_cast<double>(seeds.size());
  out.check(bcl_sum / n >= base_sum / n, "mean recall full_bcl " + fmt("%.4f", bcl_sum / n) +
                                             " < base " + fmt("%.4f", base_sum / n));
  out.check(tail_wins >= 2, "full_bcl wins the tail slice in " + std::to_string(tail_wins) + " of 3 seeds");
  const double t = seconds_since(t0);
  out.check(t < 900.0, "runtime " + fmt("%.0f s", t) + " exceeds 15 min");
  out.note("mean recall@50 base " + fmt("%.4f", base_sum / n) + ", full_bcl " + fmt("%.4f", bcl_sum / n) +
           "; tail wins " + std::to_string(tail_wins) + "/3; " + fmt("%.0f s", t));
}

// ---------------------------------------------------------------------------
// 7. metric oracles

SongPoolIndex index_of_rows(const std::vector<std::vector<double>>& rows) {
  std::vector<SongId> ids;
  Matrix reps(rows.size(), rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    ids.push_back(static_cast<SongId>(r));
    std::copy(rows[r].begin(), rows[r].end(), reps.row(r).begin());
  }
  return SongPoolIndex(ids, reps, 0);
}

std::vector<SongContent> catalog_with_genres(const std::vector<std::uint32_t>& genres) {
  std::vector<SongContent> out(genres.size());
  for (std::size_t i = 0; i < genres.size(); ++i) {
    out[i].song_id = static_cast<SongId>(i);
    out[i].genre = genres[i];
  }
  return out;
}

void metric_oracles(Outcome& out) {
  const SongPoolIndex idx = index_of_rows({{1, 0}, {0.75, 0.25}, {0.5, 0.5}, {0.25, 0.75}, {-1, 0}});
  const auto catalog = catalog_with_genres({0, 0, 1, 1, 1});
  const std::vector<ScoredPair> train{{0, 1, 3}}, test{{0, 3, 3}, {2, 4, 3}};
  // Hand rankings after masking: q0 -> 2,3,4; q2 -> 0,1,3,4 (ties by id);
  // q3 -> 2,1,0,4; q4 -> 3,2,1,0. Held-out partners sit at ranks 2, 4, 3, 2.
  const double r2 = 1.0 / std::log2(3.0), r3 = 0.5, r4 = 1.0 / std::log2(5.0);

  const EvalReport at3 = evaluate(idx, catalog, train, test, 3);
  out.check(at3.queries == 4, "query count");
  out.check(at3.recall == 0.75, "recall@3 " + fmt("%.17g", at3.recall));
  out.check(at3.ndcg == (r2 + 0.0 + r3 + r2) / 4.0, "ndcg@3 " + fmt("%.17g", at3.ndcg));

  const EvalReport at50 = evaluate(idx, catalog, train, test, 50);
  out.check(at50.recall == 1.0, "recall@50 " + fmt("%.17g", at50.recall));
  out.check(at50.ndcg == (r2 + r4 + r3 + r2) / 4.0, "ndcg@50 " + fmt("%.17g", at50.ndcg));
  out.check(at50.per_genre.at(0).recall == 1.0 && at50.per_genre.at(1).queries == 3, "per-genre slice");

  const std::vector<SongId> ranked{7, 8, 9, 10};
  const std::vector<SongId> truth{9};
  out.check(ndcg_at_k(ranked, truth, 50) == 0.5, "single hit at rank 3 != 0.5");
  out.check(recall_at_k(ranked, truth, 50) == 1.0 && recall_at_k(ranked, truth, 2) == 0.0, "recall cut-off");
  out.note("recall@50 " + fmt("%.4f", at50.recall) + ", ndcg@50 " + fmt("%.6f", at50.ndcg) +
           ", ndcg@3 " + fmt("%.6f", at3.ndcg));
}

// ---------------------------------------------------------------------------
// 8. retrieval exactness

void retrieval_exactness(Outcome& out) {
  std::mt19937_64 gen(808);
  const std::size_t n = 600, dim = 16;
  Matrix reps = random_matrix(n, dim, gen);
  for (double& v : reps.values()) v = static_cast<double>(static_cast<float>(v));
  for (std::size_t r = 0; r < n; r += 37) std::copy(reps.row(1).begin(), reps.row(1).end(), reps.row(r).begin());
  std::vector<SongId> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = static_cast<SongId>(3 * i + 1);
  const SongPoolIndex idx(ids, reps, 0);

  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t k = 1 + gen() % 80;
    Matrix q = random_matrix(1, dim, gen);
    if (trial % 5 == 0) std::copy(reps.row(1).begin(), reps.row(1).end(), q.row(0).begin());
    std::set<SongId> excluded;
    for (int e = 0; e < trial % 12; ++e) excluded.insert(ids[gen() % n]);
    const std::vector<SongId> excl(excluded.begin(), excluded.end());

    std::vector<Ranked> naive;
    for (std::size_t r = 0; r < n; ++r) {
      if (excluded.count(ids[r])) continue;
      double s = 0.0;
      for (std::size_t c = 0; c < dim; ++c) s += reps(r, c) * q(0, c);
      naive.push_back({ids[r], s});
    }
    std::sort(naive.begin(), naive.end(), [](const Ranked& a, const Ranked& b) {
      return a.score != b.score ? a.score > b.score : a.id < b.id;
    });
    naive.resize(std::min(k, naive.size()));
    const TopK got = top_k(idx, q.row(0), k, excl);
    bool same = got.items.size() == naive.size();
    for (std::size_t i = 0; same && i < naive.size(); ++i)
      same = got.items[i].id == naive[i].id &&
             std::abs(got.items[i].score - naive[i].score) <= 1e-12 * (1.0 + std::abs(naive[i].score));
    out.check(same, "top_k differs from full sort in query " + std::to_string(trial));
  }

  // Evaluation against a direct recomputation that masks the query and its
  // training partners by hand.
  std::vector<SongId> small_ids(200);
  std::iota(small_ids.begin(), small_ids.end(), 0);
  Matrix small = random_matrix(200, 8, gen);
  const SongPoolIndex sidx(small_ids, small, 0);
  std::set<std::pair<SongId, SongId>> seen;
  std::vector<ScoredPair> train, test;
  while (train.size() + test.size() < 700) {
    SongId a = static_cast<SongId>(gen() % 200), b = static_cast<SongId>(gen() % 200);
    if (a == b || seen.count({std::min(a, b), std::max(a, b)})) continue;
    seen.insert({std::min(a, b), std::max(a, b)});
    (gen() % 5 == 0 ? test : train).push_back({std::min(a, b), std::max(a, b), 2});
  }
  const PositiveSets tr(train), te(test);
  const std::size_t k = 10;
  double recall = 0.0;
  std::size_t queries = 0, leaks = 0;
  for (SongId qid : small_ids) {
    if (te.degree(qid) == 0) continue;
    ++queries;
    std::vector<Ranked> cands;
    for (SongId c : small_ids) {
      if (c == qid || tr.linked(qid, c)) continue;
      double s = 0.0;
      for (std::size_t t = 0; t < 8; ++t) s += small(qid, t) * small(c, t);
      cands.push_back({c, s});
    }
    std::sort(cands.begin(), cands.end(), [](const Ranked& a, const Ranked& b) {
      return a.score != b.score ? a.score > b.score : a.id < b.id;
    });
    std::vector<SongId> excl{qid};
    for (SongId p : tr.partners(qid)) excl.push_back(p);
    std::sort(excl.begin(), excl.end());
    const TopK lib = top_k(sidx, small.row(qid), k, excl);
    for (const auto& item : lib.items)
      if (item.id == qid || tr.linked(qid, item.id)) ++leaks;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < k && i < cands.size(); ++i) hits += te.linked(qid, cands[i].id);
    recall += static_cast<double>(hits) / static_cast<double>(te.degree(qid));
  }
  recall /= static_cast<double>(queries);
  const EvalReport r = evaluate(sidx, catalog_with_genres(std::vector<std::uint32_t>(200, 0)), train, test, k);
  out.check(leaks == 0, std::to_string(leaks) + " masked songs leaked into candidate lists");
  out.check(r.queries == queries && std::abs(r.recall - recall) <= 1e-12,
            "evaluate recall " + fmt("%.6f", r.recall) + " vs masked recomputation " + fmt("%.6f", recall));

  // Query and training partners outscore everything: the held-out partner
  // is first only if they are masked.
  std::vector<std::vector<double>> rows;
  for (int i = 0; i < 60; ++i) rows.push_back({0.01 * i, 0});
  rows[10] = {10, 0};
  rows[11] = {9, 0};
  rows[12] = {8, 0};
  rows[13] = {7, 0};
  const EvalReport m = evaluate(index_of_rows(rows), catalog_with_genres(std::vector<std::uint32_t>(60, 0)),
                                std::vector<ScoredPair>{{10, 11, 2}, {10, 12, 2}},
                                std::vector<ScoredPair>{{10, 13, 2}}, 1);
  out.check(m.recall == 1.0, "masking construction recall " + fmt("%.3f", m.recall));
  out.note("100 top_k queries; evaluate matches masked recomputation over " + std::to_string(queries) + " queries");
}

// ---------------------------------------------------------------------------
// 9. audience targeting

std::vector<cat::AudienceCandidate> random_pool(std::size_t n, std::size_t dim, std::mt19937_64& gen) {
  const Matrix m = random_matrix(n, dim, gen);
  std::vector<cat::AudienceCandidate> pool;
  for (std::size_t i = 0; i < n; ++i)
    pool.push_back({static_cast<UserId>(7 * i + 2), {m.row(i).begin(), m.row(i).end()}, {1}});
  return pool;
}

std::vector<UserId> ranking(const cat::TargetSet& t) {
  std::vector<UserId> out;
  for (const auto& u : t.users) out.push_back(u.user_id);
  return out;
}

void cat_properties(Outcome& out) {
  std::mt19937_64 gen(909);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 10 + gen() % 90, d = 2 + gen() % 8, k = 1 + gen() % 8;
    Matrix pts = random_matrix(n, d, gen);
    if (trial % 10 == 0)
      for (std::size_t r = 1; r < n; r += 2) std::copy(pts.row(0).begin(), pts.row(0).end(), pts.row(r).begin());
    RngStream rng(static_cast<std::uint64_t>(trial), Stream::clustering);
    const cat::KMeansResult km = cat::kmeans(pts, k, 100, rng);
    bool mono = true;
    for (std::size_t i = 1; i < km.inertia_history.size(); ++i)
      mono = mono && km.inertia_history[i] <= km.inertia_history[i - 1];
    out.check(mono, "inertia increased in instance " + std::to_string(trial));
  }

  for (int trial = 0; trial < 20; ++trial) {
    auto pool = random_pool(40 + gen() % 60, 2 + gen() % 6, gen);
    const RngStream rng(static_cast<std::uint64_t>(trial), Stream::clustering);
    const cat::BaggingOptions opts{4, 3, 0.8, 50};
    const auto cls = cat::bagged_centroids(cat::pool_matrix(pool), opts, rng);
    const auto base = cat::target(pool, cls, pool.size());

    // Per-user rescaling against fixed classifiers.
    auto scaled = pool;
    std::uniform_real_distribution<double> f(0.1, 10.0);
    for (auto& c : scaled) {
      const double s = f(gen);
      for (double& v : c.embedding) v *= s;
    }
    const auto s0 = cat::score_audiences(pool, cls), s1 = cat::score_audiences(scaled, cls);
    double drift = 0.0;
    for (std::size_t i = 0; i < s0.size(); ++i) drift = std::max(drift, std::abs(s0[i].score - s1[i].score));
    out.check(drift <= 1e-12, "per-user rescaling moved a score by " + fmt("%.2e", drift));

    // Whole-pool rescaling with clustering rerun.
    for (double factor : {2.0, 0.5}) {
      auto all = pool;
      for (auto& c : all)
        for (double& v : c.embedding) v *= factor;
      const auto cls2 = cat::bagged_centroids(cat::pool_matrix(all), opts, rng);
      out.check(ranking(cat::target(all, cls2, all.size())) == ranking(base),
                "ranking changed under global rescaling in trial " + std::to_string(trial));
    }

    // target(m) is contained in target(m + 1).
    std::set<UserId> prev;
    for (std::size_t m = 1; m <= pool.size() + 1; ++m) {
      const auto cur = ranking(cat::target(pool, cls, m));
      const std::set<UserId> now(cur.begin(), cur.end());
      out.check(std::includes(now.begin(), now.end(), prev.begin(), prev.end()),
                "target(" + std::to_string(m - 1) + ") not inside target(" + std::to_string(m) + ")");
      prev = now;
    }

    // One run over the full pool is plain k-means.
    const auto bag = cat::bagged_centroids(cat::pool_matrix(pool), {5, 1, 1.0, 50}, rng);
    RngStream child = rng.fork(0);
    const cat::KMeansResult km = cat::kmeans(cat::pool_matrix(pool), 5, 50, child);
    std::vector<cat::WeakClassifier> plain;
    for (std::size_t c = 0; c < km.centroids.rows(); ++c) {
      const double size = static_cast<double>(std::count(km.assignments.begin(), km.assignments.end(), c));
      plain.push_back({{km.centroids.row(c).begin(), km.centroids.row(c).end()},
                       size / static_cast<double>(pool.size()), 0});
    }
    out.check(cat::score_audiences(pool, bag) == cat::score_audiences(pool, plain),
              "B=1 bagging differs from plain k-means scoring in trial " + std::to_string(trial));
  }
  out.note("100 k-means instances; 20 pools for rescaling, nesting and B=1");
}

// ---------------------------------------------------------------------------
// 10. determinism and round-trips

std::string file_bytes(const std::filesystem::path& p) { return io::read_file_bytes(p.string()); }

template <typename Load>
void corruption_suite(Outcome& out, const std::string& what, const std::string& bytes, Load load,
                      std::mt19937_64& gen) {
  std::size_t rejected = 0, attempts = 0;
  auto expect_format_error = [&](const std::string& b, const std::string& how) {
    ++attempts;
    try {
      load(b);
      out.check(false, what + ": " + how + " accepted");
    } catch (const FormatError&) {
      ++rejected;
    } catch (const std::exception& e) {
      out.check(false, what + ": " + how + " raised a non-format error: " + e.what());
    }
  };
  for (std::size_t len = 0; len < bytes.size(); len += (len < 256 ? 1 : 1 + gen() % 97))
    expect_format_error(bytes.substr(0, len), "truncation to " + std::to_string(len));
  for (int i = 0; i < 2000; ++i) {
    std::string b = bytes;
    const std::size_t at = gen() % b.size();
    b[at] = static_cast<char>(b[at] ^ static_cast<char>(1 + gen() % 255));
    expect_format_error(b, "byte flip at " + std::to_string(at));
  }
  expect_format_error(bytes + "x", "trailing byte");
  std::string garbage(bytes.size(), '\0');
  for (char& c : garbage) c = static_cast<char>(gen());
  expect_format_error(garbage, "random garbage");
  out.note(what + ": " + std::to_string(rejected) + "/" + std::to_string(attempts) + " corruptions rejected");
}

void determinism_and_round_trips(Outcome& out) {
  namespace fs = std::filesystem;
  const fs::path root = fs::temp_directory_path() / ("bcl_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(root);

  // Datasets.
  const datagen::GenConfig g{};
  datagen::write_world(datagen::generate_world(g), root / "a");
  datagen::write_world(datagen::generate_world(g), root / "b");
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(root / "a")) {
    ++files;
    out.check(fs::exists(root / "b" / e.path().filename()) &&
                  file_bytes(e.path()) == file_bytes(root / "b" / e.path().filename()),
              "dataset file " + e.path().filename().string() + " differs");
  }
  out.check(files >= 8, "only " + std::to_string(files) + " dataset files written");

  // Checkpoints and indexes.
  const auto& world = testing_support::small_world();
  TrainConfig cfg = testing_support::small_train_config();
  cfg.epochs = 2;
  const Checkpoint c1 = train(cfg, world.catalog.songs, world.split.train);
  const Checkpoint c2 = train(cfg, world.catalog.songs, world.split.train);
  const std::string ck = serialize_checkpoint(c1);
  out.check(ck == serialize_checkpoint(c2), "checkpoints differ between identical runs");
  save_checkpoint(c1, (root / "model.ckpt").string());
  out.check(file_bytes(root / "model.ckpt") == ck, "checkpoint file differs from serialization");
  const Checkpoint loaded = load_checkpoint((root / "model.ckpt").string());
  // Wall-clock epoch times are not persisted; everything else must survive.
  out.check(loaded.tensors == c1.tensors && loaded.correlation == c1.correlation &&
                loaded.config == c1.config && loaded.encoder == c1.encoder &&
                loaded.log.size() == c1.log.size() && serialize_checkpoint(loaded) == ck,
            "checkpoint round-trip not bitwise");

  const SongPoolIndex i1 = build_index(c1, world.catalog.songs);
  const SongPoolIndex i2 = build_index(loaded, world.catalog.songs);
  const std::string ix = serialize_index(i1);
  out.check(ix == serialize_index(i2), "indexes differ");
  save_index(i1, (root / "pool.idx").string());
  const SongPoolIndex iloaded = load_index((root / "pool.idx").string());
  out.check(iloaded == i1 && serialize_index(iloaded) == ix, "index round-trip not bitwise");

  // Match responses from two independently constructed contexts.
  std::vector<std::string> first, second;
  for (int pass = 0; pass < 2; ++pass) {
    const MatchContext ctx(pass == 0 ? c1 : loaded, pass == 0 ? i1 : iloaded, world.events,
                           world.embeddings, CatConfig{});
    for (SongId s : {0u, 17u, 42u, 99u, 200u}) {
      MatchRequest req;
      req.id = "r" + std::to_string(s);
      req.content = world.catalog.songs[s];
      req.k_songs = 10;
      req.m_audiences = 20;
      (pass == 0 ? first : second).push_back(response_json(ctx.run(req), false).dump());
    }
  }
  out.check(first == second, "match responses differ");

  std::mt19937_64 gen(1010);
  corruption_suite(out, "checkpoint", ck, [](const std::string& b) { deserialize_checkpoint(b); }, gen);
  corruption_suite(out, "index", ix, [](const std::string& b) { deserialize_index(b); }, gen);
  out.check([&] {
    try {
      deserialize_checkpoint(ix);
    } catch (const FormatError&) {
      return true;
    }
    return false;
  }(), "index bytes accepted as a checkpoint");

  fs::remove_all(root);
  out.note(std::to_string(files) + " dataset files, checkpoint " + std::to_string(ck.size()) +
           " bytes, index " + std::to_string(ix.size()) + " bytes");
}

struct Criterion {
  int number;
  const char* name;
  std::function<void(Outcome&)> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria{
      {1, "distance correlation oracle", distance_correlation_oracle},
      {2, "gradient suite", gradient_suite},
      {3, "gumbel-max fidelity and partitions", gumbel_fidelity},
      {4, "contrastive hand example", contrastive_hand_example},
      {5, "augmentation invariants", augmentation_invariants},
      {6, "end-to-end synthetic benchmark", synthetic_benchmark},
      {7, "metric oracles", metric_oracles},
      {8, "retrieval exactness", retrieval_exactness},
      {9, "audience targeting properties", cat_properties},
      {10, "determinism and round-trips", determinism_and_round_trips},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int failed = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.count(c.number)) continue;
    Outcome out;
    const auto t0 = Clock::now();
    try {
      c.run(out);
    } catch (const std::exception& e) {
      out.check(false, std::string("exception: ") + e.what());
    }
    const double t = seconds_since(t0);
    std::printf("criterion %2d %-36s %s  (%.1f s)\n", c.number, c.name, out.passed() ? "PASS" : "FAIL", t);
    for (const auto& n : out.notes) std::printf("    %s\n", n.c_str());
    for (const auto& f : out.failures) std::printf("    failed: %s\n", f.c_str());
    std::fflush(stdout);
    if (!out.passed()) ++failed;
  }
  return failed == 0 ? 0 : 1;
}
