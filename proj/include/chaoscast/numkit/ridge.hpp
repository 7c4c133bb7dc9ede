// Ridge regression through the normal equations.
#pragma once

#include "chaoscast/core.hpp"

namespace chaoscast::numkit {

struct RidgeModel {
  Mat weights;  // feature_dim x output_dim
  double penalty = 0.0;

  Mat predict(const Eigen::Ref<const Mat>& features) const { return features * weights; }
  Vec predict_row(const Eigen::Ref<const Vec>& features) const { return weights.transpose() * features; }
};

/// Sufficient statistics X^T X and X^T Y. Sharing one GramSystem between
/// several penalties avoids recomputing the O(n p^2) product.
struct GramSystem {
  Mat xtx;
  Mat xty;
  Eigen::Index rows = 0;
};

inline GramSystem gram_system(const Eigen::Ref<const Mat>& X, const Eigen::Ref<const Mat>& Y) {
  if (X.rows() != Y.rows()) throw DimensionError("ridge: X and Y row counts differ");
  if (X.rows() < 1) throw DimensionError("ridge: need at least one row");
  if (!X.allFinite() || !Y.allFinite()) throw DomainError("ridge: non-finite input");
  GramSystem g;
  g.rows = X.rows();
  g.xtx = Mat::Zero(X.cols(), X.cols());
  g.xtx.selfadjointView<Eigen::Lower>().rankUpdate(X.transpose());
  g.xtx.triangularView<Eigen::StrictlyUpper>() = g.xtx.transpose();
  g.xty.noalias() = X.transpose() * Y;
  return g;
}

/// Below this reciprocal condition number (after diagonal equilibration)
/// an unpenalized system is considered numerically singular.
inline constexpr double kSingularRcond = 1e-15;

/// Solves (X^T X + lambda I) W = X^T Y.
///
/// The system is symmetrically equilibrated before the Cholesky
/// factorization, which leaves the minimizer unchanged. For lambda > 0 a
/// failed factorization is retried once with a diagonal jitter of 1e-12
/// (relative). At lambda = 0 a failed or numerically singular
/// factorization raises ConditioningError instead.
inline Mat ridge_solve(const GramSystem& g, double lambda) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw DomainError("ridge: penalty must be finite and >= 0");
  const Eigen::Index p = g.xtx.rows();
  Vec scale(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    const double d = g.xtx(j, j) + lambda;
    scale(j) = d > 0.0 ? 1.0 / std::sqrt(d) : 1.0;
  }
  Mat A = scale.asDiagonal() * g.xtx * scale.asDiagonal();
  A.diagonal() += lambda * scale.cwiseAbs2();
  const Mat B = scale.asDiagonal() * g.xty;

  Eigen::LLT<Mat> llt(A);
  const bool ok = llt.info() == Eigen::Success;
  if (lambda == 0.0) {
    if (!ok || llt.rcond() < kSingularRcond)
      throw ConditioningError("ridge: unpenalized system is numerically singular");
  } else if (!ok) {
    A.diagonal().array() += 1e-12 * A.diagonal().mean();
    llt.compute(A);
    if (llt.info() != Eigen::Success) throw ConditioningError("ridge: factorization failed after jitter");
  }
  Mat W = llt.solve(B);
  W = scale.asDiagonal() * W;
  if (!W.allFinite()) throw ConditioningError("ridge: non-finite solution");
  return W;
}

inline RidgeModel ridge_fit(const Eigen::Ref<const Mat>& X, const Eigen::Ref<const Mat>& Y, double lambda) {
  return RidgeModel{ridge_solve(gram_system(X, Y), lambda), lambda};
}

}  // namespace chaoscast::numkit
