// Baselines that predict directly from the observations.
#pragma once

#include "chaoscast/forecasters/forecaster.hpp"
#include "chaoscast/numkit/interp.hpp"

namespace chaoscast::forecasters {

/// Climatology: the mean of the training observations at every target time.
class ConstMean final : public FittedForecaster {
 public:
  ConstMean(MethodConfig cfg, const TimeSeries& train)
      : FittedForecaster(std::move(cfg), preprocess::identity_normalizer(train.dim())),
        mean_(train.states.colwise().mean().transpose()) {}

 protected:
  Mat predict_normalized(const Vec&, const ForecastProblem& p) const override {
    return mean_.transpose().replicate(static_cast<Eigen::Index>(p.target_times.size()), 1);
  }

 private:
  Vec mean_;
};

/// Persistence: u(T) at every target time.
class ConstLast final : public FittedForecaster {
 public:
  ConstLast(MethodConfig cfg, Eigen::Index dim)
      : FittedForecaster(std::move(cfg), preprocess::identity_normalizer(dim)) {}

 protected:
  Mat predict_normalized(const Vec& u_T, const ForecastProblem& p) const override {
    return u_T.transpose().replicate(static_cast<Eigen::Index>(p.target_times.size()), 1);
  }
};

namespace detail {

inline bool uniform_times(std::span<const double> t, double stride, double rel_tol = 1e-9) {
  for (std::size_t i = 1; i < t.size(); ++i)
    if (std::abs((t[i] - t[i - 1]) - stride) > rel_tol * stride) return false;
  return true;
}

/// First index in [0, last] minimizing |Y_i - x|; ties go to the smallest i.
inline Eigen::Index closest_row(const Mat& Y, const Vec& x, Eigen::Index last) {
  Eigen::Index best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i <= last; ++i) {
    const double d = (Y.row(i).transpose() - x).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

}  // namespace detail

/// Method of analogues. Finds the observation closest to x (excluding the
/// last `margin` ones), replays the observed continuation from there, and
/// restarts from the last emitted value whenever the record runs out.
///
/// On a uniform record whose stride equals the target stride the replay
/// copies observations; otherwise it reads the piecewise linear interpolant
/// of the record at the analogue time plus the target offset.
inline Mat analog_predict(const TimeSeries& train, const Vec& u_T, double T, std::span<const double> target_times,
                          long margin) {
  if (train.empty()) throw DimensionError("analog: empty training set");
  if (margin < 1) throw DomainError("analog: margin must be >= 1");
  const auto n = static_cast<Eigen::Index>(train.size());
  if (n <= margin) throw DimensionError("analog: training series must be longer than the margin");
  const Eigen::Index last = n - 1 - margin;
  const Mat& Y = train.states;
  const auto m = static_cast<Eigen::Index>(target_times.size());
  Mat out(m, Y.cols());

  const double stride0 = target_times[0] - T;
  bool replay = n >= 2 && detail::uniform_times(train.times, train.times[1] - train.times[0]) &&
                detail::uniform_times(target_times, stride0) &&
                std::abs(stride0 - (train.times[1] - train.times[0])) <= 1e-9 * stride0;

  Vec x = u_T;
  Eigen::Index filled = 0;
  if (replay) {
    while (filled < m) {
      const Eigen::Index k = detail::closest_row(Y, x, last);
      const Eigen::Index jmax = std::min(n - 1 - k, m - filled);
      for (Eigen::Index j = 1; j <= jmax; ++j) out.row(filled++) = Y.row(k + j);
      x = Y.row(k + jmax).transpose();
    }
    return out;
  }

  if (n < 2) throw DimensionError("analog: interpolation needs two training points");
  const numkit::PiecewiseLinear path(train.times, Y);
  const double t_end = train.times.back();
  double anchor = T;
  while (filled < m) {
    const Eigen::Index k = detail::closest_row(Y, x, last);
    const double tk = train.times[static_cast<std::size_t>(k)];
    Eigen::Index emitted = 0;
    while (filled < m) {
      const double at = tk + (target_times[static_cast<std::size_t>(filled)] - anchor);
      // Always emit one value per analogue so that a long target gap cannot stall.
      if (at > t_end && emitted > 0) break;
      out.row(filled) = path.value(std::min(at, t_end)).transpose();
      ++filled;
      ++emitted;
    }
    x = out.row(filled - 1).transpose();
    anchor = target_times[static_cast<std::size_t>(filled - 1)];
  }
  return out;
}

class Analog final : public FittedForecaster {
 public:
  Analog(MethodConfig cfg, preprocess::AffineNormalizer z, TimeSeries normalized_train, long margin)
      : FittedForecaster(std::move(cfg), std::move(z)), train_(std::move(normalized_train)), margin_(margin) {}

 protected:
  Mat predict_normalized(const Vec& u_T, const ForecastProblem& p) const override {
    return analog_predict(train_, u_T, p.T, p.target_times, margin_);
  }

 private:
  TimeSeries train_;
  long margin_;
};

}  // namespace chaoscast::forecasters
