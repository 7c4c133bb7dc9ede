// Echo state network propagator.
#pragma once

#include "chaoscast/forecasters/propagator.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/Sparse>

#include <map>

namespace chaoscast::forecasters {

inline constexpr int kReservoirDegree = 6;
inline constexpr double kSpectralRadius = 0.1;
inline constexpr Eigen::Index kWashout = 50;

using SparseMat = Eigen::SparseMatrix<double, Eigen::RowMajor>;

struct Reservoir {
  SparseMat A;  // units x units, kReservoirDegree nonzeros per row
  Mat w_in;     // units x input_dim
  Vec bias;

  Vec advance(const Vec& r, const Vec& x) const { return (A * r + w_in * x + bias).array().tanh(); }
};

inline double spectral_radius(const SparseMat& A) {
  Eigen::EigenSolver<Mat> es(Mat(A), false);
  if (es.info() != Eigen::Success) throw ConditioningError("esn: eigenvalue computation failed");
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

/// Random sparse recurrence matrix scaled to spectral radius 0.1. Each row
/// gets kReservoirDegree distinct columns with Uniform(-1, 1) entries.
/// The radius is computed exactly from the eigenvalues; results are cached
/// per seed since tuning refits the same reservoir many times.
inline SparseMat reservoir_matrix(Eigen::Index units, std::uint64_t seed) {
  static std::mutex mu;
  static std::map<std::pair<Eigen::Index, std::uint64_t>, SparseMat> cache;
  {
    std::lock_guard lock(mu);
    auto it = cache.find({units, seed});
    if (it != cache.end()) return it->second;
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<Eigen::Triplet<double>> trip;
  std::vector<Eigen::Index> cols(static_cast<std::size_t>(units));
  for (Eigen::Index i = 0; i < units; ++i) {
    std::iota(cols.begin(), cols.end(), Eigen::Index{0});
    for (int k = 0; k < kReservoirDegree; ++k) {
      std::uniform_int_distribution<Eigen::Index> pick(k, units - 1);
      std::swap(cols[static_cast<std::size_t>(k)], cols[static_cast<std::size_t>(pick(rng))]);
      trip.emplace_back(i, cols[static_cast<std::size_t>(k)], u(rng));
    }
  }
  SparseMat A(units, units);
  A.setFromTriplets(trip.begin(), trip.end());
  const double rho = spectral_radius(A);
  if (!(rho > 0.0)) throw ConditioningError("esn: reservoir matrix is nilpotent");
  A *= kSpectralRadius / rho;
  std::lock_guard lock(mu);
  if (cache.size() > 64) cache.clear();
  cache.emplace(std::make_pair(units, seed), A);
  return A;
}

inline Reservoir make_reservoir(Eigen::Index input_dim, double scale, std::uint64_t seed) {
  Reservoir res;
  res.A = reservoir_matrix(kRandomUnits, derive_seed(seed, "esn-recurrence"));
  std::mt19937_64 rng(derive_seed(seed, "esn-input"));
  res.w_in = uniform_matrix(kRandomUnits, input_dim, scale, rng);
  res.bias = uniform_matrix(kRandomUnits, 1, scale, rng).col(0);
  return res;
}

/// Reservoir r_{q+1} = tanh(A r_q + W_in x_q + b) with a ridge readout from
/// (r, 1). With forward skip psi the network is driven by the observations
/// at index stride 1+psi (one sequence per phase, each with its own
/// washout), so that one network step matches one rollout step.
class EchoStateNetwork final : public FittedForecaster {
 public:
  EchoStateNetwork(MethodConfig mc, preprocess::AffineNormalizer z, PropagatorConfig cfg, TimestepFeature tf,
                   Reservoir res, Mat readout, Vec warm_state)
      : FittedForecaster(std::move(mc), std::move(z)), cfg_(cfg), tf_(tf), res_(std::move(res)),
        readout_(std::move(readout)), warm_(std::move(warm_state)) {}

  const Reservoir& reservoir() const noexcept { return res_; }
  const Mat& readout() const noexcept { return readout_; }

 protected:
  Mat predict_normalized(const Vec& u_T, const ForecastProblem& p) const override {
    // Each call runs on its own copy of the warmed state.
    Vec r = warm_;
    auto step = [this, &r](const Vec& in) -> Vec {
      r = res_.advance(r, model_input(in, cfg_, tf_));
      Vec f(r.size() + 1);
      f << r, 1.0;
      return readout_.transpose() * f;
    };
    return propagator_rollout(step, u_T, p.T, p.target_times, cfg_);
  }

 private:
  PropagatorConfig cfg_;
  TimestepFeature tf_;
  Reservoir res_;
  Mat readout_;
  Vec warm_;
};

inline ForecasterPtr fit_esn(MethodConfig mc, const TimeSeries& train, const PropagatorConfig& cfg, double scale,
                             double lambda, std::uint64_t seed) {
  cfg.validate();
  if (cfg.past_steps != 0) throw DomainError("Esn: past steps are not used");
  if (!(scale > 0.0)) throw DomainError("Esn: input scale must be positive");
  check_train(train, cfg.min_points(), mc.method);
  auto z = preprocess::fit_normalizer(train.states, preprocess::NormalizationMode::full);
  const TimeSeries zs = normalized_series(train, z);
  const auto n = static_cast<Eigen::Index>(zs.size());
  const Eigen::Index d = zs.dim();
  const Eigen::Index stride = 1 + cfg.forward_skip;

  std::vector<double> all_dts;
  for (Eigen::Index i = 0; i + stride < n; ++i)
    all_dts.push_back(zs.times[static_cast<std::size_t>(i + stride)] - zs.times[static_cast<std::size_t>(i)]);
  const TimestepFeature tf = TimestepFeature::fit(cfg.timestep_input, all_dts);
  const Eigen::Index in_dim = d + (tf.active ? 1 : 0);
  Reservoir res = make_reservoir(in_dim, scale, seed);

  auto input_at = [&](Eigen::Index i) {
    Vec x(in_dim);
    x.head(d) = zs.states.row(i).transpose();
    if (tf.active) x(d) = tf(zs.times[static_cast<std::size_t>(i + stride)] - zs.times[static_cast<std::size_t>(i)]);
    return x;
  };

  std::vector<Vec> feats;
  std::vector<Vec> targets;
  for (Eigen::Index phase = 0; phase < stride; ++phase) {
    Vec r = Vec::Zero(kRandomUnits);
    Eigen::Index q = 0;
    for (Eigen::Index i = phase; i + stride < n; i += stride, ++q) {
      r = res.advance(r, input_at(i));
      if (q < kWashout) continue;
      const Eigen::Index j = i + stride;
      Vec f(kRandomUnits + 1);
      f << r, 1.0;
      feats.push_back(std::move(f));
      if (cfg.target == Target::state) {
        targets.push_back(zs.states.row(j).transpose());
      } else {
        const double dt = zs.times[static_cast<std::size_t>(j)] - zs.times[static_cast<std::size_t>(i)];
        targets.push_back((zs.states.row(j) - zs.states.row(i)).transpose() / dt);
      }
    }
  }
  if (feats.size() < 2) throw DimensionError("Esn: training series too short for the washout");
  Mat F(static_cast<Eigen::Index>(feats.size()), kRandomUnits + 1), Y(F.rows(), d);
  for (Eigen::Index r = 0; r < F.rows(); ++r) {
    F.row(r) = feats[static_cast<std::size_t>(r)].transpose();
    Y.row(r) = targets[static_cast<std::size_t>(r)].transpose();
  }
  Mat readout = numkit::ridge_fit(F, Y, lambda).weights;

  // Warm-up over the phase sequence that ends at the last observation;
  // that observation itself is replaced by u(T) at prediction time.
  Vec warm = Vec::Zero(kRandomUnits);
  for (Eigen::Index i = (n - 1) % stride; i + stride < n; i += stride) warm = res.advance(warm, input_at(i));
  return std::make_unique<EchoStateNetwork>(std::move(mc), std::move(z), cfg, tf, std::move(res), std::move(readout),
                                            std::move(warm));
}

}  // namespace chaoscast::forecasters
