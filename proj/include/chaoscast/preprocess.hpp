// Affine normalization of observations and its inverse.
#pragma once

#include "chaoscast/core.hpp"

#include <string>

namespace chaoscast::preprocess {

enum class NormalizationMode { full, scale_only, identity };

/// x -> whitener (x - mean) and back. Rows are states.
struct AffineNormalizer {
  NormalizationMode mode = NormalizationMode::identity;
  Vec mean;
  Mat whitener;
  Mat dewhitener;

  Mat apply(const Eigen::Ref<const Mat>& states) const {
    return (states.rowwise() - mean.transpose()) * whitener.transpose();
  }
  Mat invert(const Eigen::Ref<const Mat>& states) const {
    Mat out = states * dewhitener.transpose();
    out.rowwise() += mean.transpose();
    return out;
  }
  Vec apply_state(const Eigen::Ref<const Vec>& x) const { return whitener * (x - mean); }
  Vec invert_state(const Eigen::Ref<const Vec>& x) const { return dewhitener * x + mean; }

  /// Linear part only, for differences and derivatives.
  Mat apply_linear(const Eigen::Ref<const Mat>& v) const { return v * whitener.transpose(); }
  Mat invert_linear(const Eigen::Ref<const Mat>& v) const { return v * dewhitener.transpose(); }
};

inline AffineNormalizer identity_normalizer(Eigen::Index dim) {
  return {NormalizationMode::identity, Vec::Zero(dim), Mat::Identity(dim, dim), Mat::Identity(dim, dim)};
}

/// full: centre and whiten with the symmetric inverse square root of the
/// sample covariance (eigenvalues floored at 1e-12 * trace).
/// scale_only: divide by sqrt(sum_i |Y_i|^2 / (n - 1)); no centring, no
/// rotation, so sparsity of polynomial relations is preserved.
inline AffineNormalizer fit_normalizer(const Eigen::Ref<const Mat>& Y, NormalizationMode mode) {
  const Eigen::Index n = Y.rows(), d = Y.cols();
  if (mode == NormalizationMode::identity) return identity_normalizer(d);
  if (n < 2) throw DimensionError("normalizer: need at least two observations");
  if (!Y.allFinite()) throw DomainError("normalizer: non-finite observations");
  AffineNormalizer z;
  z.mode = mode;
  if (mode == NormalizationMode::scale_only) {
    const double s = std::sqrt(Y.squaredNorm() / static_cast<double>(n - 1));
    if (!(s > 0.0)) throw DomainError("normalizer: all observations are zero");
    z.mean = Vec::Zero(d);
    z.whitener = Mat::Identity(d, d) / s;
    z.dewhitener = Mat::Identity(d, d) * s;
    return z;
  }
  z.mean = Y.colwise().mean().transpose();
  const Mat centred = Y.rowwise() - z.mean.transpose();
  const Mat cov = centred.transpose() * centred / static_cast<double>(n - 1);
  const double trace = cov.trace();
  if (!(trace > 0.0)) throw DomainError("normalizer: degenerate (constant) data");
  Eigen::SelfAdjointEigenSolver<Mat> eig(cov);
  if (eig.info() != Eigen::Success) throw ConditioningError("normalizer: eigendecomposition failed");
  const Vec lam = eig.eigenvalues().cwiseMax(1e-12 * trace);
  const Mat& V = eig.eigenvectors();
  z.whitener = V * lam.cwiseSqrt().cwiseInverse().asDiagonal() * V.transpose();
  z.dewhitener = V * lam.cwiseSqrt().asDiagonal() * V.transpose();
  return z;
}

inline std::string to_string(NormalizationMode m) {
  switch (m) {
    case NormalizationMode::full: return "full";
    case NormalizationMode::scale_only: return "scale_only";
    case NormalizationMode::identity: return "identity";
  }
  return "?";
}

}  // namespace chaoscast::preprocess
