// Solution smoothers: estimate the trajectory and its time derivative,
// regress the derivative on the state to get a vector field, integrate it.
#pragma once

#include "chaoscast/forecasters/propagator.hpp"
#include "chaoscast/numkit/interp.hpp"
#include "chaoscast/numkit/rk4.hpp"
#include "chaoscast/numkit/stlsq.hpp"

namespace chaoscast::forecasters {

enum class SolutionEstimate { piecewise_linear, spline, local_linear, gp };

inline constexpr double kSolutionGpBandwidth = 0.1;
inline constexpr int kSmootherSubsteps = 10;
inline constexpr long kSindyDegree = 5;
inline constexpr std::size_t kSindyIterations = 100;

struct SolutionSpec {
  SolutionEstimate kind = SolutionEstimate::spline;
  double bandwidth = 0.0;  // local linear
  double nugget = 0.0;     // gp
};

/// Stage 1. Interpolating estimates are evaluated at the observation
/// times; the kernel smoothers on n equispaced points spanning them.
inline numkit::SmoothedPath estimate_solution(const TimeSeries& s, const SolutionSpec& spec) {
  const auto n = static_cast<Eigen::Index>(s.size());
  numkit::SmoothedPath out{Mat(n, s.dim()), Mat(n, s.dim())};
  switch (spec.kind) {
    case SolutionEstimate::piecewise_linear:
    case SolutionEstimate::spline: {
      std::unique_ptr<numkit::InterpolantWithDerivative> path;
      if (spec.kind == SolutionEstimate::spline) path = std::make_unique<numkit::CubicSpline>(s.times, s.states);
      else path = std::make_unique<numkit::PiecewiseLinear>(s.times, s.states);
      out.value = s.states;
      for (Eigen::Index i = 0; i < n; ++i) out.derivative.row(i) = path->derivative(s.times[static_cast<std::size_t>(i)]).transpose();
      return out;
    }
    case SolutionEstimate::local_linear:
    case SolutionEstimate::gp: {
      std::vector<double> grid(static_cast<std::size_t>(n));
      const double a = s.times.front(), b = s.times.back();
      for (Eigen::Index i = 0; i < n; ++i)
        grid[static_cast<std::size_t>(i)] = a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1);
      grid.back() = b;
      if (spec.kind == SolutionEstimate::local_linear)
        return numkit::local_linear_smooth(s.times, s.states, grid, spec.bandwidth);
      return numkit::gp_smooth_time(s.times, s.states, grid, kSolutionGpBandwidth, spec.nugget);
    }
  }
  throw DomainError("smoother: unknown solution estimate");
}

using VectorField = std::function<Vec(const Vec&)>;

/// Integrates u' = f(u) from u(T) with RK4 at dt0/10 and samples the
/// uniform target grid. After divergence every later target is missing.
inline Mat integrate_field(const VectorField& f, const Vec& u_T, double T, std::span<const double> target_times) {
  const ForecastProblem grid{T, u_T, {target_times.begin(), target_times.end()}};
  const double h = grid.uniform_stride() / kSmootherSubsteps;
  const auto m = static_cast<Eigen::Index>(target_times.size());
  Mat pred(m, u_T.size());
  Vec u = u_T;
  Eigen::Index j = 0;
  for (; j < m; ++j) {
    bool ok = true;
    for (int k = 0; k < kSmootherSubsteps && ok; ++k) {
      u = numkit::rk4_step(f, u, h);
      ok = !diverged(u);
    }
    if (!ok) break;
    pred.row(j) = u.transpose();
  }
  for (; j < m; ++j) pred.row(j) = missing_state(u_T.size()).transpose();
  return pred;
}

class SolutionSmoother final : public FittedForecaster {
 public:
  SolutionSmoother(MethodConfig mc, preprocess::AffineNormalizer z, VectorField field)
      : FittedForecaster(std::move(mc), std::move(z)), field_(std::move(field)) {}

  /// Estimated vector field in normalized coordinates.
  const VectorField& field() const noexcept { return field_; }

 protected:
  Mat predict_normalized(const Vec& u_T, const ForecastProblem& p) const override {
    return integrate_field(field_, u_T, p.T, p.target_times);
  }

 private:
  VectorField field_;
};

/// SINDy keeps its sparse model for inspection.
class SparseSmoother final : public FittedForecaster {
 public:
  SparseSmoother(MethodConfig mc, preprocess::AffineNormalizer z, numkit::FeatureMap map, numkit::SparseModel model)
      : FittedForecaster(std::move(mc), std::move(z)), map_(std::move(map)), model_(std::move(model)) {}

  Vec field(const Vec& x) const { return model_.weights.transpose() * map_(x); }
  const numkit::FeatureMap& feature_map() const noexcept { return map_; }
  const numkit::SparseModel& model() const noexcept { return model_; }

  /// Coefficients of the field in data units (rows: monomials of the
  /// feature map). Only defined for the scale-only normalization, where
  /// x = s y turns c y^e into c s^(1 - |e|) x^e.
  Mat coefficients_in_data_units() const {
    if (normalizer().mode != preprocess::NormalizationMode::scale_only)
      throw DomainError("SINDy: data-unit coefficients need scale-only normalization");
    const double s = normalizer().dewhitener(0, 0);
    Mat c = model_.weights;
    for (std::size_t m = 0; m < map_.monomial_count(); ++m) {
      int deg = 0;
      for (int e : map_.exponents(m)) deg += e;
      c.row(static_cast<Eigen::Index>(m)) *= std::pow(s, 1 - deg);
    }
    return c;
  }

 protected:
  Mat predict_normalized(const Vec& u_T, const ForecastProblem& p) const override {
    return integrate_field([this](const Vec& x) { return field(x); }, u_T, p.T, p.target_times);
  }

 private:
  numkit::FeatureMap map_;
  numkit::SparseModel model_;
};

namespace detail {

inline std::pair<preprocess::AffineNormalizer, numkit::SmoothedPath> smoother_stage1(
    const TimeSeries& train, const SolutionSpec& spec, preprocess::NormalizationMode mode, const std::string& who) {
  check_train(train, 10, who);
  auto z = preprocess::fit_normalizer(train.states, mode);
  auto path = estimate_solution(normalized_series(train, z), spec);
  return {std::move(z), std::move(path)};
}

}  // namespace detail

/// Stage 2 by nearest neighbour.
inline ForecasterPtr fit_smoother_nn(MethodConfig mc, const TimeSeries& train, const SolutionSpec& spec) {
  auto [z, path] = detail::smoother_stage1(train, spec, preprocess::NormalizationMode::full, mc.method);
  auto reg = std::make_shared<numkit::NearestNeighborRegressor>(path.value, path.derivative);
  return std::make_unique<SolutionSmoother>(std::move(mc), std::move(z), [reg](const Vec& x) { return (*reg)(x); });
}

/// Stage 2 by polynomial ridge regression of degree `degree`.
inline ForecasterPtr fit_smoother_poly(MethodConfig mc, const TimeSeries& train, const SolutionSpec& spec,
                                       long degree, double lambda) {
  if (degree < 1 || degree > 8) throw DomainError(mc.method + ": degree must lie in [1, 8]");
  auto [z, path] = detail::smoother_stage1(train, spec, preprocess::NormalizationMode::full, mc.method);
  auto map = std::make_shared<numkit::FeatureMap>(static_cast<std::size_t>(train.dim()), static_cast<std::size_t>(degree));
  auto w = std::make_shared<Mat>(numkit::ridge_fit(map->batch(path.value), path.derivative, lambda).weights);
  return std::make_unique<SolutionSmoother>(std::move(mc), std::move(z),
                                            [map, w](const Vec& x) -> Vec { return w->transpose() * (*map)(x); });
}

/// Stage 2 by a Gaussian process localized to the 50 nearest estimates.
inline ForecasterPtr fit_smoother_gp(MethodConfig mc, const TimeSeries& train, const SolutionSpec& spec,
                                     double bandwidth, double lambda) {
  auto [z, path] = detail::smoother_stage1(train, spec, preprocess::NormalizationMode::full, mc.method);
  auto reg = std::make_shared<numkit::GpRegressor>(path.value, path.derivative,
                                                   numkit::KernelSpec{bandwidth, lambda, kKernelNeighbors});
  return std::make_unique<SolutionSmoother>(std::move(mc), std::move(z), [reg](const Vec& x) { return (*reg)(x); });
}

/// Stage 2 by sequentially thresholded least squares on degree-5 monomials.
inline ForecasterPtr fit_sindy(MethodConfig mc, const TimeSeries& train, double threshold,
                               preprocess::NormalizationMode mode) {
  auto [z, path] = detail::smoother_stage1(train, {SolutionEstimate::spline}, mode, mc.method);
  numkit::FeatureMap map(static_cast<std::size_t>(train.dim()), kSindyDegree);
  auto model = numkit::stlsq(map.batch(path.value), path.derivative, threshold, kSindyIterations);
  return std::make_unique<SparseSmoother>(std::move(mc), std::move(z), std::move(map), std::move(model));
}

}  // namespace chaoscast::forecasters
