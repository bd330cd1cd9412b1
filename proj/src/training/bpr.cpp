#include "bcl/training/bpr.hpp"

#include <algorithm>
#include <cmath>

#include "bcl/errors.hpp"

namespace bcl {
namespace {

// log(1 + exp(x)) without overflow.
double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

BprResult bpr_loss(const Matrix& query, const Matrix& positive, const Matrix& negative) {
  require_same_shape(query, positive, "bpr_loss positive batch");
  require_same_shape(query, negative, "bpr_loss negative batch");
  if (query.rows() == 0) throw ContractError("bpr_loss: empty batch");
  const std::size_t b = query.rows();
  const std::size_t d = query.cols();
  BprResult out;
  out.grad_query = Matrix(b, d);
  out.grad_positive = Matrix(b, d);
  out.grad_negative = Matrix(b, d);
  const double inv_b = 1.0 / static_cast<double>(b);
  double total = 0.0;
  for (std::size_t r = 0; r < b; ++r) {
    auto q = query.row(r);
    auto p = positive.row(r);
    auto n = negative.row(r);
    double sp = 0.0, sn = 0.0;
    for (std::size_t t = 0; t < d; ++t) {
      sp += q[t] * p[t];
      sn += q[t] * n[t];
    }
    const double gap = sp - sn;
    total += softplus(-gap);
    // d/dgap of -log sigmoid(gap) is -sigmoid(-gap).
    const double g = -sigmoid(-gap) * inv_b;
    auto gq = out.grad_query.row(r);
    auto gp = out.grad_positive.row(r);
    auto gn = out.grad_negative.row(r);
    for (std::size_t t = 0; t < d; ++t) {
      gq[t] = g * (p[t] - n[t]);
      gp[t] = g * q[t];
      gn[t] = -g * q[t];
    }
  }
  out.loss = total * inv_b;
  return out;
}

double multitask_loss(double bpr, double cl, const ParamStore& params, double lambda1,
                      double lambda2) {
  if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0))
    throw ContractError("multitask_loss: weights must be non-negative");
  double l = bpr + lambda1 * cl;
  if (lambda2 > 0.0) l += lambda2 * params.squared_norm();
  return l;
}

PositiveSets::PositiveSets(std::span<const ScoredPair> pairs) {
  for (const auto& p : pairs) {
    if (p.song_i == p.song_j) throw ContractError("positive pair links a song to itself");
    sets_[p.song_i].push_back(p.song_j);
    sets_[p.song_j].push_back(p.song_i);
  }
  for (auto& [_, v] : sets_) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  }
}

bool PositiveSets::linked(SongId a, SongId b) const {
  auto it = sets_.find(a);
  return it != sets_.end() && std::binary_search(it->second.begin(), it->second.end(), b);
}

std::size_t PositiveSets::degree(SongId a) const {
  auto it = sets_.find(a);
  return it == sets_.end() ? 0 : it->second.size();
}

std::span<const SongId> PositiveSets::partners(SongId a) const {
  auto it = sets_.find(a);
  if (it == sets_.end()) return {};
  return it->second;
}

std::vector<TrainTriple> sample_negatives(std::span<const std::pair<SongId, SongId>> positives,
                                          const PositiveSets& sets,
                                          std::span<const SongId> catalog_ids, std::size_t count,
                                          RngStream& rng) {
  std::vector<TrainTriple> out;
  out.reserve(positives.size() * count);
  for (const auto& [i, j] : positives) {
    if (i == j) throw ContractError("sample_negatives: self pair");
    // With distinct catalog ids a negative can only be missing when the
    // positive set plus i covers the whole catalog.
    if (sets.degree(i) + 1 >= catalog_ids.size()) {
      const bool any = std::any_of(catalog_ids.begin(), catalog_ids.end(),
                                   [&](SongId k) { return k != i && !sets.linked(i, k); });
      if (!any) {
        throw SamplingError("song " + std::to_string(i) +
                            " is positively linked to the whole catalog; no negative exists");
      }
    }
    for (std::size_t c = 0; c < count; ++c) {
      SongId k;
      do {
        k = catalog_ids[rng.below(catalog_ids.size())];
      } while (k == i || sets.linked(i, k));
      out.push_back({i, j, k});
    }
  }
  return out;
}

}  // namespace bcl
