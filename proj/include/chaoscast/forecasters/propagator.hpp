// Propagator methods: learn the map from the recent state(s) to the next
// state (S) or to the difference quotient over the step (D), then iterate it.
#pragma once

#include "chaoscast/forecasters/forecaster.hpp"
#include "chaoscast/numkit/kernel.hpp"
#include "chaoscast/numkit/polynomial.hpp"
#include "chaoscast/numkit/ridge.hpp"

#include <functional>
#include <list>
#include <mutex>
#include <random>
#include <span>

namespace chaoscast::forecasters {

enum class Target { state, diff_quotient };

struct PropagatorConfig {
  Target target = Target::state;
  bool timestep_input = false;  // T suffix
  long past_steps = 0;          // K
  long skip = 1;                // s
  long forward_skip = 0;        // psi

  void validate() const {
    if (past_steps < 0 || past_steps > 32) throw DomainError("propagator: K must lie in [0, 32]");
    if (skip < 1 || skip > 9) throw DomainError("propagator: s must lie in [1, 9]");
    if (forward_skip < 0 || forward_skip > 64) throw DomainError("propagator: psi must lie in [0, 64]");
    if (forward_skip > 0 && past_steps > 0) throw DomainError("propagator: forward skip requires K = 0");
  }
  long history() const noexcept { return past_steps * skip; }
  std::size_t min_points() const noexcept {
    return std::max<std::size_t>(static_cast<std::size_t>(history() + 2 + forward_skip), 10);
  }
};

/// Regression data of a propagator. Row r of `inputs` is
/// concat(Y_{i-sK}, ..., Y_{i-s}, Y_i) followed, for T variants, by the
/// raw timestep dts[r] = t_{i+1+psi} - t_i; its target is Y_{i+1+psi} (S)
/// or (Y_{i+1+psi} - Y_i) / dts[r] (D).
struct PropagatorData {
  Mat inputs;
  Mat targets;
  std::vector<double> dts;
  std::vector<std::size_t> index;  // i of each row
};

inline PropagatorData build_propagator_data(const TimeSeries& train, const PropagatorConfig& cfg) {
  cfg.validate();
  const auto n = static_cast<long>(train.size());
  const long first = cfg.history();
  const long last = n - 2 - cfg.forward_skip;  // last usable i
  if (last < first) throw DimensionError("propagator: not enough history for the requested lags and skip");
  const Eigen::Index d = train.dim();
  const Eigen::Index lags = cfg.past_steps + 1;
  const auto rows = static_cast<Eigen::Index>(last - first + 1);
  PropagatorData out;
  out.inputs.resize(rows, lags * d + (cfg.timestep_input ? 1 : 0));
  out.targets.resize(rows, d);
  out.dts.resize(static_cast<std::size_t>(rows));
  out.index.resize(static_cast<std::size_t>(rows));
  for (Eigen::Index r = 0; r < rows; ++r) {
    const long i = first + r;
    for (Eigen::Index l = 0; l < lags; ++l) {
      const long src = i - (cfg.past_steps - l) * cfg.skip;
      out.inputs.block(r, l * d, 1, d) = train.states.row(src);
    }
    const long j = i + 1 + cfg.forward_skip;
    const double dt = train.times[static_cast<std::size_t>(j)] - train.times[static_cast<std::size_t>(i)];
    if (cfg.timestep_input) out.inputs(r, lags * d) = dt;
    out.dts[static_cast<std::size_t>(r)] = dt;
    out.index[static_cast<std::size_t>(r)] = static_cast<std::size_t>(i);
    if (cfg.target == Target::state) out.targets.row(r) = train.states.row(j);
    else out.targets.row(r) = (train.states.row(j) - train.states.row(i)) / dt;
  }
  return out;
}

/// Maps an input row (layout of build_propagator_data) to the propagator output.
using StepFunction = std::function<Vec(const Vec&)>;

/// Iterates the propagator from u(T). The chain advances by (1+psi) dt0 per
/// step; lags before T are filled with u(T). Target times between chain
/// nodes are linearly interpolated. Once the chain diverges every later
/// target is missing (NaN).
inline Mat propagator_rollout(const StepFunction& g, const Vec& u_T, double T, std::span<const double> target_times,
                              const PropagatorConfig& cfg) {
  cfg.validate();
  const ForecastProblem grid{T, u_T, {target_times.begin(), target_times.end()}};
  const double dt0 = grid.uniform_stride();
  const long stride = 1 + cfg.forward_skip;
  const double dt_chain = static_cast<double>(stride) * dt0;
  const auto m = static_cast<long>(target_times.size());
  const long nodes = (m + stride - 1) / stride;  // chain nodes after u(T)
  const Eigen::Index d = u_T.size();
  const Eigen::Index lags = cfg.past_steps + 1;

  std::vector<Vec> chain{u_T};
  chain.reserve(static_cast<std::size_t>(nodes + 1));
  Vec input(lags * d + (cfg.timestep_input ? 1 : 0));
  for (long q = 0; q < nodes; ++q) {
    for (Eigen::Index l = 0; l < lags; ++l) {
      const long src = q - (cfg.past_steps - l) * cfg.skip;
      input.segment(l * d, d) = chain[static_cast<std::size_t>(std::max(src, 0L))];
    }
    if (cfg.timestep_input) input(lags * d) = dt_chain;
    Vec out = g(input);
    Vec next = cfg.target == Target::state ? std::move(out) : Vec(chain.back() + dt_chain * out);
    if (diverged(next)) break;
    chain.push_back(std::move(next));
  }

  Mat pred(m, d);
  for (long j = 1; j <= m; ++j) {
    const long q = j / stride, r = j % stride;
    const auto row = static_cast<Eigen::Index>(j - 1);
    if (q >= static_cast<long>(chain.size()) || (r != 0 && q + 1 >= static_cast<long>(chain.size()))) {
      pred.row(row) = missing_state(d).transpose();
    } else if (r == 0) {
      pred.row(row) = chain[static_cast<std::size_t>(q)].transpose();
    } else {
      const double w = static_cast<double>(r) / static_cast<double>(stride);
      pred.row(row) = ((1.0 - w) * chain[static_cast<std::size_t>(q)] + w * chain[static_cast<std::size_t>(q + 1)]).transpose();
    }
  }
  return pred;
}

// ---------------------------------------------------------------------------
// Timestep input

/// The timestep enters models as (dt - mean) / mean over the training
/// pairs. On a constant grid this column would be zero (up to rounding), so
/// it is dropped and the T variant reduces to the plain one.
struct TimestepFeature {
  bool active = false;
  double mean = 1.0;

  static TimestepFeature fit(bool requested, std::span<const double> dts) {
    TimestepFeature f;
    if (!requested || dts.empty()) return f;
    double lo = dts[0], hi = dts[0], sum = 0.0;
    for (double v : dts) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
      sum += v;
    }
    f.mean = sum / static_cast<double>(dts.size());
    f.active = (hi - lo) > 1e-9 * f.mean;
    return f;
  }
  double operator()(double dt) const { return (dt - mean) / mean; }
};

/// Input rows of a propagator with the raw timestep column replaced by the
/// scaled feature (or removed when inactive).
inline Mat model_inputs(const PropagatorData& data, const PropagatorConfig& cfg, const TimestepFeature& tf) {
  const Eigen::Index state_cols = data.inputs.cols() - (cfg.timestep_input ? 1 : 0);
  Mat x(data.inputs.rows(), state_cols + (tf.active ? 1 : 0));
  x.leftCols(state_cols) = data.inputs.leftCols(state_cols);
  if (tf.active)
    for (Eigen::Index r = 0; r < x.rows(); ++r) x(r, state_cols) = tf(data.inputs(r, state_cols));
  return x;
}

inline Vec model_input(const Vec& raw, const PropagatorConfig& cfg, const TimestepFeature& tf) {
  const Eigen::Index state_cols = raw.size() - (cfg.timestep_input ? 1 : 0);
  Vec x(state_cols + (tf.active ? 1 : 0));
  x.head(state_cols) = raw.head(state_cols);
  if (tf.active) x(state_cols) = tf(raw(state_cols));
  return x;
}

// ---------------------------------------------------------------------------
// Lin* and LinPo*

/// Configurations whose polynomial map exceeds this many features are
/// rejected; the O(n p^2) Gram product is the bottleneck of tuning.
inline constexpr std::size_t kMaxLinFeatures = 1000;

namespace detail {

inline std::uint64_t fingerprint(const TimeSeries& s) {
  std::uint64_t h = fnv1a(std::string_view(reinterpret_cast<const char*>(s.times.data()), s.times.size() * sizeof(double)));
  const std::string_view bytes(reinterpret_cast<const char*>(s.states.data()),
                               static_cast<std::size_t>(s.states.size()) * sizeof(double));
  return splitmix64(h ^ fnv1a(bytes));
}

/// Process-wide cache of Gram systems keyed by data and feature layout, so
/// that several penalties on the same design share one product. Bounded by
/// a byte budget with least-recently-used eviction.
class GramCache {
 public:
  static GramCache& instance() {
    static GramCache cache;
    return cache;
  }

  template <class Build>
  std::shared_ptr<const numkit::GramSystem> get(const std::string& key, Build&& build) {
    {
      std::lock_guard lock(mu_);
      for (auto it = entries_.begin(); it != entries_.end(); ++it) {
        if (it->first == key) {
          entries_.splice(entries_.begin(), entries_, it);
          return it->second;
        }
      }
    }
    auto g = std::make_shared<const numkit::GramSystem>(build());
    std::lock_guard lock(mu_);
    entries_.emplace_front(key, g);
    bytes_ += bytes_of(*g);
    while (bytes_ > budget_ && entries_.size() > 1) {
      bytes_ -= bytes_of(*entries_.back().second);
      entries_.pop_back();
    }
    return g;
  }

  void clear() {
    std::lock_guard lock(mu_);
    entries_.clear();
    bytes_ = 0;
  }

 private:
  static std::size_t bytes_of(const numkit::GramSystem& g) {
    return static_cast<std::size_t>(g.xtx.size() + g.xty.size()) * sizeof(double);
  }

  std::mutex mu_;
  std::list<std::pair<std::string, std::shared_ptr<const numkit::GramSystem>>> entries_;
  std::size_t bytes_ = 0;
  std::size_t budget_ = std::size_t{512} << 20;
};

}  // namespace detail

class LinearPropagator final : public FittedForecaster {
 public:
  LinearPropagator(MethodConfig mc, preprocess::AffineNormalizer z, PropagatorConfig cfg, numkit::FeatureMap map,
                   TimestepFeature tf, Mat weights)
      : FittedForecaster(std::move(mc), std::move(z)), cfg_(cfg), map_(std::move(map)), tf_(tf), w_(std::move(weights)) {}

  const Mat& weights() const noexcept { return w_; }
  const numkit::FeatureMap& feature_map() const noexcept { return map_; }
  const PropagatorConfig& propagator() const noexcept { return cfg_; }

  Vec step(const Vec& raw) const {
    Vec f(map_.monomial_count());
    map_.eval_into(model_input(raw, cfg_, tf_), std::nullopt, f);
    return w_.transpose() * f;
  }

 protected:
  Mat predict_normalized(const Vec& u_T, const ForecastProblem& p) const override {
    return propagator_rollout([this](const Vec& in) { return step(in); }, u_T, p.T, p.target_times, cfg_);
  }

 private:
  PropagatorConfig cfg_;
  numkit::FeatureMap map_;
  TimestepFeature tf_;
  Mat w_;
};

inline ForecasterPtr fit_lin(MethodConfig mc, const TimeSeries& train, const PropagatorConfig& cfg, long degree,
                             double lambda) {
  cfg.validate();
  if (degree < 1 || degree > 8) throw DomainError("Lin: degree must lie in [1, 8]");
  check_train(train, cfg.min_points(), mc.method);
  auto z = preprocess::fit_normalizer(train.states, preprocess::NormalizationMode::full);
  const PropagatorData data = build_propagator_data(normalized_series(train, z), cfg);
  const TimestepFeature tf = TimestepFeature::fit(cfg.timestep_input, data.dts);
  const auto dim = static_cast<std::size_t>(train.dim() * (cfg.past_steps + 1)) + (tf.active ? 1 : 0);
  numkit::FeatureMap map(dim, static_cast<std::size_t>(degree));
  if (map.monomial_count() > kMaxLinFeatures)
    throw DomainError("Lin: " + std::to_string(map.monomial_count()) + " features exceed the limit of " +
                      std::to_string(kMaxLinFeatures));

  const std::string key = std::to_string(detail::fingerprint(train)) + "|" + std::to_string(cfg.past_steps) + "|" +
                          std::to_string(cfg.skip) + "|" + std::to_string(degree) + "|" +
                          (cfg.target == Target::state ? "S" : "D") + (tf.active ? "T" : "");
  auto gram = detail::GramCache::instance().get(key, [&] {
    return numkit::gram_system(map.batch(model_inputs(data, cfg, tf)), data.targets);
  });
  Mat w = numkit::ridge_solve(*gram, lambda);
  return std::make_unique<LinearPropagator>(std::move(mc), std::move(z), cfg, std::move(map), tf, std::move(w));
}

// ---------------------------------------------------------------------------
// RaFe*: random feature regression

inline constexpr Eigen::Index kRandomUnits = 400;

/// Uniform(-c, c) matrix drawn row-major from `rng`.
inline Mat uniform_matrix(Eigen::Index rows, Eigen::Index cols, double c, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-c, c);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = u(rng);
  return m;
}

class RandomFeaturePropagator final : public FittedForecaster {
 public:
  RandomFeaturePropagator(MethodConfig mc, preprocess::AffineNormalizer z, PropagatorConfig cfg, TimestepFeature tf,
                          Mat w_in, Vec bias, Mat readout)
      : FittedForecaster(std::move(mc), std::move(z)), cfg_(cfg), tf_(tf), w_in_(std::move(w_in)),
        bias_(std::move(bias)), readout_(std::move(readout)) {}

  /// Hidden features followed by a constant 1.
  Vec features(const Vec& x) const {
    Vec f(w_in_.rows() + 1);
    f.head(w_in_.rows()) = (w_in_ * x + bias_).array().tanh();
    f(w_in_.rows()) = 1.0;
    return f;
  }

  const Mat& input_weights() const noexcept { return w_in_; }
  const Vec& bias() const noexcept { return bias_; }
  const Mat& readout() const noexcept { return readout_; }

 protected:
  Mat predict_normalized(const Vec& u_T, const ForecastProblem& p) const override {
    return propagator_rollout([this](const Vec& in) -> Vec { return readout_.transpose() * features(model_input(in, cfg_, tf_)); },
                              u_T, p.T, p.target_times, cfg_);
  }

 private:
  PropagatorConfig cfg_;
  TimestepFeature tf_;
  Mat w_in_;
  Vec bias_;
  Mat readout_;
};

inline ForecasterPtr fit_rafe(MethodConfig mc, const TimeSeries& train, const PropagatorConfig& cfg, double scale,
                              double lambda, std::uint64_t seed) {
  cfg.validate();
  if (!(scale > 0.0)) throw DomainError("RaFe: input scale must be positive");
  check_train(train, cfg.min_points(), mc.method);
  auto z = preprocess::fit_normalizer(train.states, preprocess::NormalizationMode::full);
  const PropagatorData data = build_propagator_data(normalized_series(train, z), cfg);
  const TimestepFeature tf = TimestepFeature::fit(cfg.timestep_input, data.dts);
  const Mat x = model_inputs(data, cfg, tf);

  std::mt19937_64 rng(seed);
  Mat w_in = uniform_matrix(kRandomUnits, x.cols(), scale, rng);
  Vec bias = uniform_matrix(kRandomUnits, 1, scale, rng).col(0);
  Mat features(x.rows(), kRandomUnits + 1);
  features.leftCols(kRandomUnits) = ((x * w_in.transpose()).rowwise() + bias.transpose()).array().tanh();
  features.col(kRandomUnits).setOnes();
  Mat readout = numkit::ridge_fit(features, data.targets, lambda).weights;
  return std::make_unique<RandomFeaturePropagator>(std::move(mc), std::move(z), cfg, tf, std::move(w_in),
                                                   std::move(bias), std::move(readout));
}

// ---------------------------------------------------------------------------
// PgGp* and PgLl*: kernel propagators

inline constexpr std::size_t kKernelNeighbors = 50;

template <class Regressor>
class KernelPropagator final : public FittedForecaster {
 public:
  KernelPropagator(MethodConfig mc, preprocess::AffineNormalizer z, PropagatorConfig cfg, TimestepFeature tf,
                   Regressor reg)
      : FittedForecaster(std::move(mc), std::move(z)), cfg_(cfg), tf_(tf), reg_(std::move(reg)) {}

  Vec step(const Vec& raw) const { return reg_(model_input(raw, cfg_, tf_)); }

 protected:
  Mat predict_normalized(const Vec& u_T, const ForecastProblem& p) const override {
    return propagator_rollout([this](const Vec& in) { return step(in); }, u_T, p.T, p.target_times, cfg_);
  }

 private:
  PropagatorConfig cfg_;
  TimestepFeature tf_;
  Regressor reg_;
};

inline ForecasterPtr fit_pg_gp(MethodConfig mc, const TimeSeries& train, const PropagatorConfig& cfg,
                               double bandwidth, double lambda) {
  check_train(train, cfg.min_points(), mc.method);
  auto z = preprocess::fit_normalizer(train.states, preprocess::NormalizationMode::full);
  const PropagatorData data = build_propagator_data(normalized_series(train, z), cfg);
  const TimestepFeature tf = TimestepFeature::fit(cfg.timestep_input, data.dts);
  numkit::GpRegressor reg(model_inputs(data, cfg, tf), data.targets, {bandwidth, lambda, kKernelNeighbors});
  return std::make_unique<KernelPropagator<numkit::GpRegressor>>(std::move(mc), std::move(z), cfg, tf, std::move(reg));
}

inline ForecasterPtr fit_pg_ll(MethodConfig mc, const TimeSeries& train, const PropagatorConfig& cfg,
                               double bandwidth) {
  check_train(train, cfg.min_points(), mc.method);
  auto z = preprocess::fit_normalizer(train.states, preprocess::NormalizationMode::full);
  const PropagatorData data = build_propagator_data(normalized_series(train, z), cfg);
  const TimestepFeature tf = TimestepFeature::fit(cfg.timestep_input, data.dts);
  numkit::LocalLinearRegressor reg(model_inputs(data, cfg, tf), data.targets, bandwidth, kKernelNeighbors);
  return std::make_unique<KernelPropagator<numkit::LocalLinearRegressor>>(std::move(mc), std::move(z), cfg, tf,
                                                                          std::move(reg));
}

}  // namespace chaoscast::forecasters
