// The fit/predict contract shared by every method.
#pragma once

#include "chaoscast/forecasters/method_config.hpp"
#include "chaoscast/preprocess.hpp"

#include <memory>

namespace chaoscast::forecasters {

struct ForecastProblem {
  double T = 0.0;                   // forecast start; u_T is the true state here
  Vec u_T;
  std::vector<double> target_times;  // increasing, all > T

  void validate(Eigen::Index dim) const {
    if (target_times.empty()) throw DimensionError("forecast: no target times");
    if (u_T.size() != dim) throw DimensionError("forecast: u_T has the wrong dimension");
    if (!u_T.allFinite()) throw DomainError("forecast: u_T must be finite");
    if (!(target_times.front() > T)) throw DomainError("forecast: target times must lie after T");
    for (std::size_t j = 1; j < target_times.size(); ++j)
      if (!(target_times[j] > target_times[j - 1])) throw DomainError("forecast: target times must increase");
  }

  /// Common stride of a uniform target grid T + j dt0, j = 1..m.
  double uniform_stride() const {
    const double dt0 = (target_times.back() - T) / static_cast<double>(target_times.size());
    for (std::size_t j = 0; j < target_times.size(); ++j) {
      const double expect = T + static_cast<double>(j + 1) * dt0;
      if (std::abs(target_times[j] - expect) > 1e-6 * dt0)
        throw DomainError("forecast: target grid is not uniform with first point T + dt0");
    }
    return dt0;
  }
};

/// Divergence guard for rollouts in normalized coordinates.
inline constexpr double kDivergenceNorm = 1e6;

inline bool diverged(const Eigen::Ref<const Vec>& x) { return !x.allFinite() || x.norm() > kDivergenceNorm; }

/// A fitted method. Fitting normalizes the training observations first;
/// predict() maps u_T into normalized coordinates, runs the method and maps
/// the forecast back. Rows of NaN mark missing predictions.
class FittedForecaster {
 public:
  FittedForecaster(MethodConfig cfg, preprocess::AffineNormalizer z) : config_(std::move(cfg)), norm_(std::move(z)) {}
  virtual ~FittedForecaster() = default;

  const MethodConfig& config() const noexcept { return config_; }
  const preprocess::AffineNormalizer& normalizer() const noexcept { return norm_; }

  TimeSeries predict(const ForecastProblem& problem) const {
    problem.validate(norm_.mean.size());
    const Mat z = predict_normalized(norm_.apply_state(problem.u_T), problem);
    if (z.rows() != static_cast<Eigen::Index>(problem.target_times.size()))
      throw DimensionError("forecast: method returned the wrong number of states");
    return TimeSeries(problem.target_times, norm_.invert(z));
  }

 protected:
  /// Forecast in normalized coordinates, one row per target time.
  virtual Mat predict_normalized(const Vec& u_T, const ForecastProblem& problem) const = 0;

 private:
  MethodConfig config_;
  preprocess::AffineNormalizer norm_;
};

using ForecasterPtr = std::unique_ptr<FittedForecaster>;

inline TimeSeries normalized_series(const TimeSeries& train, const preprocess::AffineNormalizer& z) {
  return TimeSeries(train.times, z.apply(train.states));
}

inline void check_train(const TimeSeries& train, std::size_t min_points, const std::string& who) {
  if (train.size() < min_points)
    throw DimensionError(who + ": need at least " + std::to_string(min_points) + " training points");
  if (!train.states.allFinite()) throw DomainError(who + ": non-finite training observations");
  for (std::size_t i = 1; i < train.size(); ++i)
    if (!(train.times[i] > train.times[i - 1])) throw DomainError(who + ": training times must increase");
}

}  // namespace chaoscast::forecasters
