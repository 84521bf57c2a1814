#include "magkey/estimate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "magkey/errors.hpp"

namespace magkey {

Posterior posterior(std::span<const MagSample> window, const Fingerprint& fp, Axes axes) {
  if (axes.empty()) throw DomainError("posterior needs at least one axis");
  if (window.empty()) throw DomainError("empty window");
  const int n = fp.cell_count();
  Posterior post;
  post.log_score.resize(static_cast<std::size_t>(n));
  for (CellId c = 0; c < n; ++c) post.log_score[static_cast<std::size_t>(c)] = cell_log_likelihood(window, fp, c, axes);

  const double top = *std::max_element(post.log_score.begin(), post.log_score.end());
  post.prob.resize(post.log_score.size());
  double z = 0.0;
  for (std::size_t c = 0; c < post.prob.size(); ++c) z += post.prob[c] = std::exp(post.log_score[c] - top);
  for (auto& p : post.prob) p /= z;

  post.ranking.resize(static_cast<std::size_t>(n));
  std::iota(post.ranking.begin(), post.ranking.end(), 0);
  std::stable_sort(post.ranking.begin(), post.ranking.end(), [&](CellId a, CellId b) {
    return post.log_score[static_cast<std::size_t>(a)] > post.log_score[static_cast<std::size_t>(b)];
  });
  return post;
}

const char* to_string(EstimateMode mode) {
  return mode == EstimateMode::kDiscrete ? "discrete" : "continuous";
}

Estimate estimate_from_posterior(const Posterior& post, const Fingerprint& fp, int k, int m) {
  if (k < 1 || k > fp.cell_count()) throw DomainError("k must be in [1, cell count]");
  Estimate est;
  est.k = k;
  est.m = m;
  est.board = fp.board();
  est.cell = post.argmax();
  est.mode = k == 1 ? EstimateMode::kDiscrete : EstimateMode::kContinuous;
  double wsum = 0.0;
  Vec2 acc = Vec2::Zero();
  for (int i = 0; i < k; ++i) {
    const CellId c = post.ranking[static_cast<std::size_t>(i)];
    const double p = post.prob[static_cast<std::size_t>(c)];
    est.top.emplace_back(c, p);
    acc += p * fp.board().centroid(c);
    wsum += p;
  }
  est.position = k == 1 ? fp.board().centroid(est.cell) : Vec2(acc / wsum);
  return est;
}

Estimate estimate_key_cell(std::span<const MagSample> window, const Fingerprint& fp, int k, Axes axes) {
  if (k < 1 || k > fp.cell_count()) throw DomainError("k must be in [1, cell count]");
  Estimate est = estimate_from_posterior(posterior(window, fp, axes), fp, k, static_cast<int>(window.size()));
  est.t_start = window.front().t;
  est.t_end = window.back().t;
  return est;
}

bool magnet_absent(std::span<const MagSample> window, const Fingerprint& fp) {
  if (window.empty()) return true;
  Vec3 mean = Vec3::Zero();
  for (const auto& s : window) mean += s.b;
  mean /= static_cast<double>(window.size());
  double weakest = INFINITY;
  for (CellId c = 0; c < fp.cell_count(); ++c) weakest = std::min(weakest, fp.cell_center(c).norm());
  return mean.norm() < 0.5 * weakest;
}

}  // namespace magkey
