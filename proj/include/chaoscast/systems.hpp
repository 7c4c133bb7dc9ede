// The three Lorenz63 variants and instance generation under the
// observation schemes.
#pragma once

#include "chaoscast/numkit/rk4.hpp"

#include <array>
#include <memory>
#include <numbers>
#include <optional>
#include <random>

namespace chaoscast::systems {

using State = Eigen::Vector3d;

struct LorenzParams {
  double sigma = 10.0;
  double rho = 28.0;
  double beta = 8.0 / 3.0;
};

struct ParamInterval {
  double lo, hi;
};
inline constexpr ParamInterval kSigmaRange{5.0, 15.0};
inline constexpr ParamInterval kRhoRange{20.0, 80.0};
inline constexpr ParamInterval kBetaRange{2.0, 6.0};

inline State lorenz_rhs(const LorenzParams& p, const State& u) {
  return State(p.sigma * (u(1) - u(0)), u(0) * (p.rho - u(2)) - u(1), u(0) * u(1) - p.beta * u(2));
}

/// One random scalar function of the state: a random-Fourier-feature
/// realization of a squared-exponential Gaussian process,
///   g(u) = amplitude * sqrt(2/F) * sum_k c_k cos(w_k . u + phi_k),
/// mapped into [lo, hi] by lo + (hi - lo) * logistic(g(u)).
struct ParameterFunction {
  static constexpr int kFeatures = 64;
  static constexpr double kLengthScale = 20.0;
  static constexpr double kAmplitude = 2.0;

  Eigen::Matrix<double, kFeatures, 3> omega;
  Eigen::Matrix<double, kFeatures, 1> phase;
  Eigen::Matrix<double, kFeatures, 1> coef;  // includes amplitude * sqrt(2/F)
  ParamInterval range{0.0, 1.0};

  double latent(const State& u) const { return coef.dot((omega * u + phase).array().cos().matrix()); }

  double operator()(const State& u) const { return range.lo + (range.hi - range.lo) / (1.0 + std::exp(-latent(u))); }

  State gradient(const State& u) const {
    const double s = 1.0 / (1.0 + std::exp(-latent(u)));
    const Eigen::Matrix<double, kFeatures, 1> dcos = -(omega * u + phase).array().sin().matrix();
    const State dg = omega.transpose() * coef.cwiseProduct(dcos);
    return (range.hi - range.lo) * s * (1.0 - s) * dg;
  }

  static ParameterFunction sample(std::mt19937_64& rng, ParamInterval range) {
    ParameterFunction f;
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
    for (int k = 0; k < kFeatures; ++k) {
      for (int j = 0; j < 3; ++j) f.omega(k, j) = normal(rng) / kLengthScale;
      f.phase(k) = angle(rng);
      f.coef(k) = kAmplitude * std::sqrt(2.0 / kFeatures) * normal(rng);
    }
    f.range = range;
    return f;
  }
};

enum class SystemKind { standard, random, nonparametric };

/// Right-hand side of one Lorenz63 variant. For `random` the parameters
/// are fixed per instance; for `nonparametric` they depend on the state.
struct VectorFieldSpec {
  SystemKind kind = SystemKind::standard;
  LorenzParams params{};
  std::shared_ptr<const std::array<ParameterFunction, 3>> functions;  // nonparametric only

  LorenzParams params_at(const State& u) const {
    if (kind != SystemKind::nonparametric) return params;
    const auto& f = *functions;
    return LorenzParams{f[0](u), f[1](u), f[2](u)};
  }

  State operator()(const State& u) const { return lorenz_rhs(params_at(u), u); }
};

inline VectorFieldSpec standard_field() { return VectorFieldSpec{}; }

inline VectorFieldSpec random_field(const LorenzParams& p) {
  VectorFieldSpec s;
  s.kind = SystemKind::random;
  s.params = p;
  return s;
}

inline Vec eval_field(const VectorFieldSpec& spec, const Eigen::Ref<const Vec>& u) {
  if (u.size() != 3) throw DimensionError("eval_field: state must have dimension 3");
  if (!u.allFinite()) throw DomainError("eval_field: non-finite state");
  return spec(State(u));
}

inline LorenzParams sample_random_params(std::mt19937_64& rng) {
  // Drawn one after the other so the stream order is fixed.
  std::uniform_real_distribution<double> s(kSigmaRange.lo, kSigmaRange.hi);
  std::uniform_real_distribution<double> r(kRhoRange.lo, kRhoRange.hi);
  std::uniform_real_distribution<double> b(kBetaRange.lo, kBetaRange.hi);
  LorenzParams p;
  p.sigma = s(rng);
  p.rho = r(rng);
  p.beta = b(rng);
  return p;
}

inline VectorFieldSpec sample_nonpar_field(std::mt19937_64& rng) {
  auto fns = std::make_shared<std::array<ParameterFunction, 3>>();
  (*fns)[0] = ParameterFunction::sample(rng, kSigmaRange);
  (*fns)[1] = ParameterFunction::sample(rng, kRhoRange);
  (*fns)[2] = ParameterFunction::sample(rng, kBetaRange);
  VectorFieldSpec s;
  s.kind = SystemKind::nonparametric;
  s.functions = std::move(fns);
  return s;
}

// ---------------------------------------------------------------------------
// Integration on a fixed step grid

inline constexpr double kSolverDt = 1e-3;

inline State rk4_state_step(const VectorFieldSpec& f, const State& u, double dt) {
  return numkit::rk4_step<State>(f, u, dt);
}

/// States at t = k * dt for k = 0..steps. Throws DivergenceError when a
/// state becomes non-finite.
inline std::vector<State> integrate_grid(const VectorFieldSpec& f, const State& u0, double dt, long steps) {
  std::vector<State> out;
  out.reserve(static_cast<std::size_t>(steps) + 1);
  out.push_back(u0);
  State u = u0;
  for (long k = 1; k <= steps; ++k) {
    u = rk4_state_step(f, u, dt);
    if (!u.allFinite()) throw DivergenceError("integration diverged at step " + std::to_string(k), k);
    out.push_back(u);
  }
  return out;
}

namespace detail {

inline const State& burned_in_state() {
  static const State s = [] {
    const VectorFieldSpec f = standard_field();
    State u(1.0, 1.0, 1.0);
    const long steps = std::lround(100.0 / kSolverDt);
    for (long k = 1; k <= steps; ++k) {
      u = rk4_state_step(f, u, kSolverDt);
      if (!u.allFinite()) throw DivergenceError("burn-in diverged", k);
    }
    return u;
  }();
  return s;
}

}  // namespace detail

/// A point on the standard Lorenz63 attractor: the state at a uniformly
/// random solver step within the 100 time units that follow a 100-unit
/// burn-in from (1, 1, 1). The field argument is accepted for interface
/// symmetry; all variants start from the standard attractor.
inline State sample_initial_condition(const VectorFieldSpec& /*spec*/, std::mt19937_64& rng) {
  const long window = std::lround(100.0 / kSolverDt);
  std::uniform_int_distribution<long> pick(0, window);
  const long extra = pick(rng);
  const VectorFieldSpec f = standard_field();
  State u = detail::burned_in_state();
  for (long k = 1; k <= extra; ++k) u = rk4_state_step(f, u, kSolverDt);
  return u;
}

// ---------------------------------------------------------------------------
// Observation schemes and instances

enum class TimestepMode { constant, exponential };

struct ObservationScheme {
  TimestepMode timestep_mode = TimestepMode::constant;
  double base_dt = 1e-2;
  double noise_sd = 0.0;

  void validate() const {
    if (!(base_dt > 0.0)) throw DomainError("scheme: base_dt must be positive");
    if (!(noise_sd >= 0.0)) throw DomainError("scheme: noise_sd must be >= 0");
  }
};

inline const std::array<std::string, 4>& scheme_names() {
  static const std::array<std::string, 4> names{"const-noisefree", "const-noisy", "random-noisefree", "random-noisy"};
  return names;
}

inline ObservationScheme scheme_from_name(const std::string& name) {
  if (name == "const-noisefree") return {TimestepMode::constant, 1e-2, 0.0};
  if (name == "const-noisy") return {TimestepMode::constant, 1e-2, 0.1};
  if (name == "random-noisefree") return {TimestepMode::exponential, 1e-2, 0.0};
  if (name == "random-noisy") return {TimestepMode::exponential, 1e-2, 0.1};
  throw DomainError("unknown observation scheme '" + name + "'");
}

inline const std::array<std::string, 3>& system_names() {
  static const std::array<std::string, 3> names{"lorenz63std", "lorenz63random", "lorenz63nonpar"};
  return names;
}

inline SystemKind system_from_name(const std::string& name) {
  if (name == "lorenz63std") return SystemKind::standard;
  if (name == "lorenz63random") return SystemKind::random;
  if (name == "lorenz63nonpar") return SystemKind::nonparametric;
  throw DomainError("unknown system '" + name + "'");
}

struct GenerationConfig {
  double T = 100.0;
  double S = 10.0;
  double solver_dt = kSolverDt;
  // Fixed-point rejection for nonparametric fields.
  double tail_window = 20.0;
  double tail_variance_ratio = 1e-3;
  int max_rejections = 20;
};

struct GeneratedInstance {
  TimeSeries train;       // t_i in (0, T], observations Y_i
  TimeSeries truth_test;  // t_j = T + j * base_dt, j = 1..m, noise-free
  Vec u_T;                // noise-free state at T
  Vec u0;
  VectorFieldSpec field;
  std::uint64_t seed = 0;
  int rejections = 0;
};

namespace detail {

inline double total_variance(const std::vector<State>& traj, std::size_t from) {
  State mean = State::Zero();
  const auto n = static_cast<double>(traj.size() - from);
  for (std::size_t i = from; i < traj.size(); ++i) mean += traj[i];
  mean /= n;
  double v = 0.0;
  for (std::size_t i = from; i < traj.size(); ++i) v += (traj[i] - mean).squaredNorm();
  return v / n;
}

inline VectorFieldSpec sample_field(SystemKind kind, std::mt19937_64& rng) {
  switch (kind) {
    case SystemKind::standard: return standard_field();
    case SystemKind::random: return random_field(sample_random_params(rng));
    case SystemKind::nonparametric: return sample_nonpar_field(rng);
  }
  throw DomainError("unknown system kind");
}

}  // namespace detail

/// Draws a field of the given kind (fresh parameters per instance) and an
/// initial condition, integrates over [0, T + S] with RK4 at solver_dt and
/// samples the observations and the test truth.
///
/// Random-parameter and nonparametric draws whose trajectory settles onto a
/// fixed point (tail variance below tail_variance_ratio of the whole-run
/// variance) or diverges are redrawn. About a fifth of the uniform parameter
/// boxes give a stable equilibrium.
///
/// Exponential-scheme observation times fall between solver steps; they are
/// reached by a partial RK4 step from the preceding grid state.
inline GeneratedInstance generate_instance(SystemKind kind, const ObservationScheme& scheme, std::uint64_t seed,
                                           const GenerationConfig& cfg = {}) {
  scheme.validate();
  const double ratio = scheme.base_dt / cfg.solver_dt;
  const long stride = std::lround(ratio);
  if (stride < 1 || std::abs(ratio - static_cast<double>(stride)) > 1e-9)
    throw DomainError("generate: base_dt must be an integer multiple of the solver step");
  const long n_const = std::lround(cfg.T / scheme.base_dt);
  const long m = std::lround(cfg.S / scheme.base_dt);
  const long total_steps = (n_const + m) * stride;
  const long T_step = n_const * stride;

  std::mt19937_64 rng(seed);
  GeneratedInstance inst;
  inst.seed = seed;
  std::vector<State> traj;
  for (int attempt = 0;; ++attempt) {
    if (attempt > cfg.max_rejections)
      throw Error("generate: more than " + std::to_string(cfg.max_rejections) + " consecutive rejections");
    inst.field = detail::sample_field(kind, rng);
    const State u0 = sample_initial_condition(inst.field, rng);
    if (kind == SystemKind::standard) {
      traj = integrate_grid(inst.field, u0, cfg.solver_dt, total_steps);
      inst.u0 = u0;
      break;
    }
    try {
      traj = integrate_grid(inst.field, u0, cfg.solver_dt, total_steps);
    } catch (const DivergenceError&) {
      ++inst.rejections;
      continue;
    }
    const auto tail = static_cast<std::size_t>(std::lround(cfg.tail_window / cfg.solver_dt));
    const double whole = detail::total_variance(traj, 0);
    const double late = detail::total_variance(traj, traj.size() - std::min(tail, traj.size()));
    if (!(late >= cfg.tail_variance_ratio * whole)) {
      ++inst.rejections;
      continue;
    }
    inst.u0 = u0;
    break;
  }

  // Observation times.
  std::vector<double> times;
  std::vector<State> clean;
  if (scheme.timestep_mode == TimestepMode::constant) {
    for (long i = 1; i <= n_const; ++i) {
      times.push_back(static_cast<double>(i) * scheme.base_dt);
      clean.push_back(traj[static_cast<std::size_t>(i * stride)]);
    }
  } else {
    std::exponential_distribution<double> incr(1.0 / scheme.base_dt);
    double t = 0.0;
    for (;;) {
      t += incr(rng);
      if (t > cfg.T) break;
      const auto k = static_cast<long>(std::floor(t / cfg.solver_dt));
      const double rem = t - static_cast<double>(k) * cfg.solver_dt;
      const State& base = traj[static_cast<std::size_t>(k)];
      times.push_back(t);
      clean.push_back(rem > 0.0 ? rk4_state_step(inst.field, base, rem) : base);
    }
  }
  std::normal_distribution<double> noise(0.0, scheme.noise_sd);
  Mat obs(static_cast<Eigen::Index>(times.size()), 3);
  for (std::size_t i = 0; i < times.size(); ++i) {
    State y = clean[i];
    if (scheme.noise_sd > 0.0)
      for (int j = 0; j < 3; ++j) y(j) += noise(rng);
    obs.row(static_cast<Eigen::Index>(i)) = y.transpose();
  }
  inst.train = TimeSeries(std::move(times), std::move(obs));

  std::vector<double> test_times;
  Mat truth(m, 3);
  for (long j = 1; j <= m; ++j) {
    test_times.push_back(cfg.T + static_cast<double>(j) * scheme.base_dt);
    truth.row(j - 1) = traj[static_cast<std::size_t>(T_step + j * stride)].transpose();
  }
  inst.truth_test = TimeSeries(std::move(test_times), std::move(truth));
  inst.u_T = traj[static_cast<std::size_t>(T_step)];
  return inst;
}

}  // namespace chaoscast::systems
