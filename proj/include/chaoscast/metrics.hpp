// Forecast error metrics: cumulative maximum error, sMAPE and valid time.
#pragma once

#include "chaoscast/core.hpp"

#include <optional>

namespace chaoscast::metrics {

/// Truth and prediction on a common time grid t_1 < ... < t_m after the
/// forecast start T. Rows of `prediction` with a non-finite entry are
/// absent; an empty `prediction` means the whole forecast is absent.
struct AlignedPair {
  double start_time = 0.0;  // T
  std::vector<double> times;
  Mat truth;
  Mat prediction;

  AlignedPair() = default;
  AlignedPair(double T, std::vector<double> t, Mat u, Mat u_hat)
      : start_time(T), times(std::move(t)), truth(std::move(u)), prediction(std::move(u_hat)) {
    validate();
  }

  std::size_t size() const noexcept { return times.size(); }
  bool all_absent() const noexcept { return prediction.rows() == 0; }
  bool present(Eigen::Index j) const { return !all_absent() && prediction.row(j).allFinite(); }

  void validate() const {
    const auto m = static_cast<Eigen::Index>(times.size());
    if (truth.rows() != m) throw DimensionError("metrics: truth and times differ in length");
    if (prediction.rows() != 0 && (prediction.rows() != m || prediction.cols() != truth.cols()))
      throw DimensionError("metrics: prediction shape does not match truth");
    if (!truth.allFinite()) throw DomainError("metrics: truth must be finite");
  }
};

struct MetricConfig {
  double kappa = 0.4;
};

struct SdMu {
  double sd;
  Vec mu;
};

// Sums below run sequentially in index order so results do not depend on
// Eigen's vectorized reduction order.

/// Mean state and root-mean-square Euclidean deviation from it.
inline SdMu sd_mu(const Eigen::Ref<const Mat>& truth) {
  const Eigen::Index m = truth.rows(), d = truth.cols();
  if (m < 1) throw DimensionError("sd_mu: need at least one state");
  SdMu r{0.0, Vec::Zero(d)};
  for (Eigen::Index j = 0; j < m; ++j)
    for (Eigen::Index i = 0; i < d; ++i) r.mu(i) += truth(j, i);
  r.mu /= static_cast<double>(m);
  double ss = 0.0;
  for (Eigen::Index j = 0; j < m; ++j)
    for (Eigen::Index i = 0; i < d; ++i) {
      const double x = truth(j, i) - r.mu(i);
      ss += x * x;
    }
  r.sd = std::sqrt(ss / static_cast<double>(m));
  return r;
}

inline double distance(const Eigen::Ref<const Mat>& a, const Eigen::Ref<const Mat>& b, Eigen::Index row) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < a.cols(); ++i) {
    const double x = a(row, i) - b(row, i);
    s += x * x;
  }
  return std::sqrt(s);
}

/// Normalized errors |u_hat(t_j) - u(t_j)| / sd; absent entries are +inf.
inline Vec normalized_errors(const AlignedPair& p, double sd) {
  const auto m = static_cast<Eigen::Index>(p.size());
  Vec e(m);
  for (Eigen::Index j = 0; j < m; ++j)
    e(j) = p.present(j) ? distance(p.prediction, p.truth, j) / sd : std::numeric_limits<double>::infinity();
  return e;
}

/// Discrete cumulative maximum error
///   (1/m) sum_j max_{k <= j} min(1, |u_hat(t_k) - u(t_k)| / sd).
/// Absent entries contribute 1. A constant truth (sd = 0) gives 0 for an
/// exact prediction and 1 otherwise.
inline double cme(const AlignedPair& p) {
  p.validate();
  const auto m = static_cast<Eigen::Index>(p.size());
  if (m < 1) throw DimensionError("cme: empty horizon");
  if (p.all_absent()) return 1.0;
  const double sd = sd_mu(p.truth).sd;
  if (sd == 0.0) {
    for (Eigen::Index j = 0; j < m; ++j)
      if (!p.present(j) || p.prediction.row(j) != p.truth.row(j)) return 1.0;
    return 0.0;
  }
  const Vec e = normalized_errors(p, sd);
  double running = 0.0, total = 0.0;
  for (Eigen::Index j = 0; j < m; ++j) {
    running = std::max(running, std::min(1.0, e(j)));
    total += running;
  }
  return total / static_cast<double>(m);
}

/// Symmetric mean absolute percent error over the present entries,
/// 200/m' sum |u_hat - u| / (|u_hat| + |u|). Returns nullopt when nothing
/// is present.
inline std::optional<double> smape(const AlignedPair& p) {
  p.validate();
  double total = 0.0;
  std::size_t count = 0;
  for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(p.size()); ++j) {
    if (!p.present(j)) continue;
    const double den = p.prediction.row(j).norm() + p.truth.row(j).norm();
    if (den == 0.0) throw DomainError("smape: prediction and truth are both zero");
    total += (p.prediction.row(j) - p.truth.row(j)).norm() / den;
    ++count;
  }
  if (count == 0) return std::nullopt;
  return 200.0 * total / static_cast<double>(count);
}

/// Time from T until the normalized error first exceeds kappa; the full
/// horizon t_m - T when it never does. Absent entries count as exceedances.
inline double valid_time(const AlignedPair& p, const MetricConfig& cfg = {}) {
  p.validate();
  if (!(cfg.kappa > 0.0)) throw DomainError("valid_time: kappa must be positive");
  if (p.size() < 1) throw DimensionError("valid_time: empty horizon");
  const double sd = sd_mu(p.truth).sd;
  if (sd == 0.0) throw DomainError("valid_time: truth has zero standard deviation");
  const Vec e = normalized_errors(p, sd);
  for (Eigen::Index j = 0; j < e.size(); ++j)
    if (e(j) > cfg.kappa) return p.times[static_cast<std::size_t>(j)] - p.start_time;
  return p.times.back() - p.start_time;
}

}  // namespace chaoscast::metrics
