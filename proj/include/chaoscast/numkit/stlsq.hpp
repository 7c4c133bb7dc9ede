// Sequentially thresholded least squares (sparse regression).
#pragma once

#include "chaoscast/numkit/ridge.hpp"

namespace chaoscast::numkit {

struct SparseModel {
  Mat weights;                              // feature_dim x output_dim
  std::vector<std::vector<bool>> active;    // per output column
  std::vector<std::size_t> active_history;  // total active count after each thresholding pass
  std::size_t iterations_run = 0;
  bool all_zero = false;

  Mat predict(const Eigen::Ref<const Mat>& features) const { return features * weights; }
};

/// Unpenalized least squares, then repeatedly zero every coefficient with
/// |w| < threshold and re-solve each output column on its surviving
/// features. Stops after `iterations` passes or once no coefficient is
/// removed.
inline SparseModel stlsq(const Eigen::Ref<const Mat>& X, const Eigen::Ref<const Mat>& Y, double threshold,
                         std::size_t iterations) {
  if (!(threshold >= 0.0)) throw DomainError("stlsq: threshold must be >= 0");
  if (iterations < 1) throw DomainError("stlsq: iterations must be >= 1");
  const GramSystem g = gram_system(X, Y);
  const Eigen::Index p = X.cols(), q = Y.cols();

  SparseModel model;
  model.weights = ridge_solve(g, 0.0);
  model.active.assign(static_cast<std::size_t>(q), std::vector<bool>(static_cast<std::size_t>(p), true));

  for (std::size_t it = 0; it < iterations; ++it) {
    ++model.iterations_run;
    bool changed = false;
    std::size_t count = 0;
    for (Eigen::Index c = 0; c < q; ++c) {
      auto& act = model.active[static_cast<std::size_t>(c)];
      for (Eigen::Index j = 0; j < p; ++j) {
        if (act[static_cast<std::size_t>(j)] && std::abs(model.weights(j, c)) < threshold) {
          act[static_cast<std::size_t>(j)] = false;
          changed = true;
        }
        if (!act[static_cast<std::size_t>(j)]) model.weights(j, c) = 0.0;
        else ++count;
      }
    }
    model.active_history.push_back(count);
    if (!changed) break;
    for (Eigen::Index c = 0; c < q; ++c) {
      const auto& act = model.active[static_cast<std::size_t>(c)];
      std::vector<Eigen::Index> idx;
      for (Eigen::Index j = 0; j < p; ++j)
        if (act[static_cast<std::size_t>(j)]) idx.push_back(j);
      model.weights.col(c).setZero();
      if (idx.empty()) continue;
      const auto k = static_cast<Eigen::Index>(idx.size());
      GramSystem sub;
      sub.rows = g.rows;
      sub.xtx.resize(k, k);
      sub.xty.resize(k, 1);
      for (Eigen::Index a = 0; a < k; ++a) {
        sub.xty(a, 0) = g.xty(idx[static_cast<std::size_t>(a)], c);
        for (Eigen::Index b = 0; b < k; ++b)
          sub.xtx(a, b) = g.xtx(idx[static_cast<std::size_t>(a)], idx[static_cast<std::size_t>(b)]);
      }
      const Mat w = ridge_solve(sub, 0.0);
      for (Eigen::Index a = 0; a < k; ++a) model.weights(idx[static_cast<std::size_t>(a)], c) = w(a, 0);
    }
  }
  model.all_zero = model.weights.isZero(0.0);
  return model;
}

}  // namespace chaoscast::numkit
