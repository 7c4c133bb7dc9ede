// Evaluation of fitted methods on stored instances, aggregation with
// t-intervals, paired t-tests, rank tables and the sensitivity study of
// exact-solver forecasts to perturbed initial conditions and parameters.
#pragma once

#include "chaoscast/forecasters.hpp"
#include "chaoscast/io.hpp"
#include "chaoscast/metrics.hpp"
#include "chaoscast/systems.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <map>
#include <numeric>
#include <optional>
#include <thread>

namespace chaoscast::bench {

struct ScoreRecord {
  std::string method;
  std::string system;
  std::string scheme;
  std::string split;
  std::size_t rep = 0;
  double cme = 1.0;
  std::optional<double> smape;
  double valid_time = 0.0;
  double fit_seconds = 0.0;
  double predict_seconds = 0.0;
  bool failed = false;
  std::string error;
};

struct Labels {
  std::string system;
  std::string scheme;
  std::string split;
};

struct EvaluateOptions {
  std::uint64_t fit_seed = 0;
  unsigned jobs = 1;
  metrics::MetricConfig metric{};
};

struct Scores {
  double cme;
  std::optional<double> smape;
  double valid_time;
};

inline Scores score_forecast(const io::StoredInstance& inst, const TimeSeries& forecast,
                             const metrics::MetricConfig& cfg = {}) {
  const metrics::AlignedPair pair(inst.T, inst.truth.times, inst.truth.states, forecast.states);
  return {metrics::cme(pair), metrics::smape(pair), metrics::valid_time(pair, cfg)};
}

// ---------------------------------------------------------------------------
// Instances

inline constexpr const char* kValidation = "validation";
inline constexpr const char* kTest = "test";

/// Seed of one stored instance, a pure function of the master seed and
/// the instance coordinates.
inline std::uint64_t instance_seed(std::uint64_t master, const std::string& system, const std::string& scheme,
                                   const std::string& split, std::size_t rep) {
  return derive_seed(master, "instance/" + system + "/" + scheme + "/" + split, {rep});
}

/// Generates one repetition with every number rounded to the stored CSV
/// precision, so an in-memory instance equals its on-disk round trip.
inline io::StoredInstance make_instance(std::uint64_t master, const std::string& system, const std::string& scheme,
                                        const std::string& split, std::size_t rep,
                                        const systems::GenerationConfig& gen = {}) {
  const std::uint64_t seed = instance_seed(master, system, scheme, split, rep);
  const auto sch = systems::scheme_from_name(scheme);
  const auto g = systems::generate_instance(systems::system_from_name(system), sch, seed, gen);
  auto rounded = [](const TimeSeries& s) {
    TimeSeries r = s;
    for (auto& t : r.times) t = io::round_fixed(t);
    r.states = r.states.unaryExpr([](double v) { return io::round_fixed(v); });
    return r;
  };
  io::StoredInstance inst;
  inst.train = rounded(g.train);
  inst.truth = rounded(g.truth_test);
  inst.T = gen.T;
  inst.u_T = g.u_T.unaryExpr([](double v) { return io::round_fixed(v); });
  nlohmann::json field = {{"kind", system}};
  if (g.field.kind == systems::SystemKind::random)
    field["params"] = {{"sigma", g.field.params.sigma}, {"rho", g.field.params.rho}, {"beta", g.field.params.beta}};
  inst.meta = {{"system", system},
               {"scheme", scheme},
               {"split", split},
               {"rep", rep},
               {"master_seed", master},
               {"seed", seed},
               {"T", gen.T},
               {"S", gen.S},
               {"base_dt", sch.base_dt},
               {"noise_sd", sch.noise_sd},
               {"timestep", sch.timestep_mode == systems::TimestepMode::constant ? "constant" : "exponential"},
               {"rejections", g.rejections},
               {"field", field}};
  return inst;
}

inline std::size_t rep_index(const io::StoredInstance& inst, std::size_t position) {
  if (inst.meta.is_object() && inst.meta.contains("rep")) return inst.meta["rep"].get<std::size_t>();
  return position;
}

/// Fit on train, forecast at the truth times from u(T), score. A failed
/// repetition is recorded with CME 1 and no sMAPE.
inline ScoreRecord evaluate_one(const forecasters::MethodConfig& mc, const io::StoredInstance& inst,
                                const Labels& labels, std::size_t rep, const EvaluateOptions& opts) {
  using clock = std::chrono::steady_clock;
  ScoreRecord r;
  r.method = mc.method;
  r.system = labels.system;
  r.scheme = labels.scheme;
  r.split = labels.split;
  r.rep = rep;
  try {
    const auto t0 = clock::now();
    auto f = forecasters::fit(mc, inst.train, opts.fit_seed);
    const auto t1 = clock::now();
    const TimeSeries pred = f->predict({inst.T, inst.u_T, inst.truth.times});
    const auto t2 = clock::now();
    r.fit_seconds = std::chrono::duration<double>(t1 - t0).count();
    r.predict_seconds = std::chrono::duration<double>(t2 - t1).count();
    const Scores s = score_forecast(inst, pred, opts.metric);
    r.cme = s.cme;
    r.smape = s.smape;
    r.valid_time = s.valid_time;
  } catch (const std::exception& e) {
    r.cme = 1.0;
    r.smape.reset();
    r.valid_time = 0.0;
    r.failed = true;
    r.error = e.what();
  }
  return r;
}

/// One record per instance, in instance order regardless of `jobs`.
inline std::vector<ScoreRecord> evaluate(const forecasters::MethodConfig& mc,
                                         const std::vector<io::StoredInstance>& instances, const Labels& labels,
                                         const EvaluateOptions& opts = {}) {
  std::vector<ScoreRecord> out(instances.size());
  const unsigned workers = std::max(1u, std::min<unsigned>(opts.jobs, static_cast<unsigned>(instances.size())));
  auto work = [&](std::size_t i) { out[i] = evaluate_one(mc, instances[i], labels, rep_index(instances[i], i), opts); };
  if (workers == 1) {
    for (std::size_t i = 0; i < instances.size(); ++i) work(i);
    return out;
  }
  std::atomic<std::size_t> next{0};
  {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < instances.size(); i = next++) work(i);
      });
  }
  return out;
}

inline double mean_cme(const std::vector<ScoreRecord>& records) {
  if (records.empty()) throw DimensionError("mean_cme: no records");
  double s = 0.0;
  for (const auto& r : records) s += r.cme;
  return s / static_cast<double>(records.size());
}

// ---------------------------------------------------------------------------
// Aggregation

/// 95% Student-t half-width t_{0.975, n-1} sd / sqrt(n); absent for n < 2.
inline std::optional<double> ci_half_width(const std::vector<double>& x, double level = 0.95) {
  const std::size_t n = x.size();
  if (n < 2) return std::nullopt;
  if (std::all_of(x.begin(), x.end(), [&](double v) { return v == x.front(); })) return 0.0;
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  boost::math::students_t dist(static_cast<double>(n - 1));
  return boost::math::quantile(dist, 0.5 + level / 2.0) * sd / std::sqrt(static_cast<double>(n));
}

struct AggregateRow {
  std::string method;
  std::string system;
  std::string scheme;
  std::string split;
  std::size_t n = 0;
  double mean_cme = 0.0;
  std::optional<double> ci95;
  std::size_t rank = 0;
  std::optional<double> mean_smape;
  double mean_valid_time = 0.0;
  std::size_t failures = 0;
};

/// Per (system, scheme, split, method) means with CI; ranks by mean CME
/// within each (system, scheme, split), ties broken by method name.
inline std::vector<AggregateRow> aggregate(const std::vector<ScoreRecord>& records) {
  using Key = std::tuple<std::string, std::string, std::string, std::string>;
  std::map<Key, std::vector<const ScoreRecord*>> groups;
  for (const auto& r : records) groups[{r.system, r.scheme, r.split, r.method}].push_back(&r);

  std::vector<AggregateRow> rows;
  for (const auto& [key, recs] : groups) {
    AggregateRow a;
    std::tie(a.system, a.scheme, a.split, a.method) = key;
    a.n = recs.size();
    std::vector<double> cme;
    double smape_sum = 0.0;
    std::size_t smape_n = 0;
    for (const auto* r : recs) {
      cme.push_back(r->cme);
      a.mean_valid_time += r->valid_time;
      if (r->smape) {
        smape_sum += *r->smape;
        ++smape_n;
      }
      a.failures += r->failed ? 1 : 0;
    }
    a.mean_cme = std::accumulate(cme.begin(), cme.end(), 0.0) / static_cast<double>(a.n);
    a.mean_valid_time /= static_cast<double>(a.n);
    a.ci95 = ci_half_width(cme);
    if (smape_n) a.mean_smape = smape_sum / static_cast<double>(smape_n);
    rows.push_back(std::move(a));
  }

  std::map<std::tuple<std::string, std::string, std::string>, std::vector<AggregateRow*>> settings;
  for (auto& r : rows) settings[{r.system, r.scheme, r.split}].push_back(&r);
  for (auto& [_, v] : settings) {
    std::sort(v.begin(), v.end(), [](const AggregateRow* a, const AggregateRow* b) {
      if (a->mean_cme != b->mean_cme) return a->mean_cme < b->mean_cme;
      return a->method < b->method;
    });
    for (std::size_t i = 0; i < v.size(); ++i) v[i]->rank = i + 1;
  }
  std::sort(rows.begin(), rows.end(), [](const AggregateRow& a, const AggregateRow& b) {
    return std::tie(a.system, a.scheme, a.split, a.rank) < std::tie(b.system, b.scheme, b.split, b.rank);
  });
  return rows;
}

// ---------------------------------------------------------------------------
// Paired t-tests

struct TTest {
  double p = 1.0;
  double t = 0.0;
  std::size_t n = 0;
  bool degenerate = false;
};

/// One-sided test of H0: mean(diffs) >= 0 with the one-sample t statistic;
/// small p means the first method has the lower CME. Zero-variance
/// differences are degenerate: p = 1 if the mean is >= 0, else the
/// smallest positive double.
inline TTest paired_t_test(const std::vector<double>& diffs) {
  const std::size_t n = diffs.size();
  if (n < 2) throw DimensionError("paired_t_test: need at least two repetitions");
  const double mean = std::accumulate(diffs.begin(), diffs.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double d : diffs) ss += (d - mean) * (d - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  TTest r;
  r.n = n;
  if (sd == 0.0 || sd <= 1e-15 * std::abs(mean)) {
    r.degenerate = true;
    r.t = mean == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), mean);
    r.p = mean >= 0.0 ? 1.0 : std::numeric_limits<double>::min();
    return r;
  }
  r.t = mean / (sd / std::sqrt(static_cast<double>(n)));
  boost::math::students_t dist(static_cast<double>(n - 1));
  r.p = boost::math::cdf(dist, r.t);
  return r;
}

inline TTest paired_t_test(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw DimensionError("paired_t_test: samples differ in length");
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  return paired_t_test(d);
}

struct PairTest {
  std::string system;
  std::string scheme;
  std::string split;
  std::string method1;
  std::string method2;
  TTest test;
};

/// All ordered method pairs within each setting, paired on repetitions
/// present for both. Pairs with fewer than two shared repetitions are
/// skipped.
inline std::vector<PairTest> t_test_matrix(const std::vector<ScoreRecord>& records) {
  using Setting = std::tuple<std::string, std::string, std::string>;
  std::map<Setting, std::map<std::string, std::map<std::size_t, double>>> by;
  for (const auto& r : records) by[{r.system, r.scheme, r.split}][r.method][r.rep] = r.cme;
  std::vector<PairTest> out;
  for (const auto& [setting, methods] : by) {
    for (const auto& [m1, s1] : methods)
      for (const auto& [m2, s2] : methods) {
        if (m1 == m2) continue;
        std::vector<double> d;
        for (const auto& [rep, c1] : s1)
          if (auto it = s2.find(rep); it != s2.end()) d.push_back(c1 - it->second);
        if (d.size() < 2) continue;
        out.push_back({std::get<0>(setting), std::get<1>(setting), std::get<2>(setting), m1, m2, paired_t_test(d)});
      }
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV files

inline constexpr const char* kResultsHeader = "method,system,scheme,split,rep,cme,smape,tvalid,fit_s,predict_s";

inline void write_results_csv(std::ostream& os, const std::vector<ScoreRecord>& records) {
  os << kResultsHeader << '\n';
  for (const auto& r : records)
    os << r.method << ',' << r.system << ',' << r.scheme << ',' << r.split << ',' << r.rep << ',' << io::fixed(r.cme)
       << ',' << (r.smape ? io::fixed(*r.smape) : std::string()) << ',' << io::fixed(r.valid_time) << ','
       << io::fixed(r.fit_seconds) << ',' << io::fixed(r.predict_seconds) << '\n';
}

inline std::vector<ScoreRecord> read_results_csv(std::istream& is, const std::string& where) {
  std::string line;
  if (!std::getline(is, line) || line != kResultsHeader) throw DomainError(where + ": unexpected results header");
  std::vector<ScoreRecord> out;
  std::size_t row = 1;
  while (std::getline(is, line)) {
    ++row;
    if (line.empty()) continue;
    const auto c = io::split_csv_line(line);
    const std::string at = where + ":" + std::to_string(row);
    if (c.size() != 10) throw DomainError(at + ": expected 10 fields");
    ScoreRecord r;
    r.method = c[0];
    r.system = c[1];
    r.scheme = c[2];
    r.split = c[3];
    r.rep = static_cast<std::size_t>(io::parse_number(c[4], at));
    r.cme = io::parse_number(c[5], at);
    if (!c[6].empty()) r.smape = io::parse_number(c[6], at);
    r.valid_time = io::parse_number(c[7], at);
    r.fit_seconds = io::parse_number(c[8], at);
    r.predict_seconds = io::parse_number(c[9], at);
    out.push_back(std::move(r));
  }
  return out;
}

inline void write_aggregate_csv(std::ostream& os, const std::vector<AggregateRow>& rows) {
  os << "method,system,scheme,split,n,mean_cme,ci95,rank,mean_smape,mean_tvalid,failed\n";
  for (const auto& a : rows)
    os << a.method << ',' << a.system << ',' << a.scheme << ',' << a.split << ',' << a.n << ',' << io::fixed(a.mean_cme)
       << ',' << (a.ci95 ? io::fixed(*a.ci95) : std::string()) << ',' << a.rank << ','
       << (a.mean_smape ? io::fixed(*a.mean_smape) : std::string()) << ',' << io::fixed(a.mean_valid_time) << ','
       << a.failures << '\n';
}

inline void write_rank_csv(std::ostream& os, const std::vector<AggregateRow>& rows) {
  os << "system,scheme,split,rank,method,mean_cme\n";
  for (const auto& a : rows)
    os << a.system << ',' << a.scheme << ',' << a.split << ',' << a.rank << ',' << a.method << ','
       << io::fixed(a.mean_cme) << '\n';
}

/// p-values are written in scientific notation; fixed 8-digit output would
/// zero the significant ones.
inline void write_ttest_csv(std::ostream& os, const std::vector<PairTest>& tests) {
  os << "system,scheme,split,method1,method2,n,t,p,degenerate\n";
  char p[32];
  for (const auto& x : tests) {
    std::snprintf(p, sizeof p, "%.6e", x.test.p);
    os << x.system << ',' << x.scheme << ',' << x.split << ',' << x.method1 << ',' << x.method2 << ',' << x.test.n
       << ',' << (std::isfinite(x.test.t) ? io::fixed(x.test.t) : (x.test.t > 0 ? "inf" : "-inf")) << ',' << p << ','
       << (x.test.degenerate ? 1 : 0) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Sensitivity of exact-solver forecasts

enum class Perturbation { initial_condition, parameters };

inline std::string to_string(Perturbation p) {
  return p == Perturbation::initial_condition ? "initial" : "parameters";
}

struct PerturbationConfig {
  double horizon = 10.0;
  double output_dt = 1e-2;
  double solver_dt = 1e-3;
};

struct PerturbationRow {
  Perturbation kind;
  double radius;
  double median_cme;
  std::size_t reps;
};

namespace detail {

inline Vec uniform_on_sphere(std::mt19937_64& rng, Eigen::Index dim) {
  std::normal_distribution<double> nd;
  Vec v(dim);
  do {
    for (Eigen::Index k = 0; k < dim; ++k) v(k) = nd(rng);
  } while (v.norm() == 0.0);
  return v / v.norm();
}

/// Output-grid samples of an RK4 run; rows after a divergence are missing.
inline Mat sampled_run(const systems::VectorFieldSpec& f, const systems::State& u0, const PerturbationConfig& cfg) {
  const long stride = std::lround(cfg.output_dt / cfg.solver_dt);
  const long m = std::lround(cfg.horizon / cfg.output_dt);
  Mat out = Mat::Constant(m, 3, std::numeric_limits<double>::quiet_NaN());
  systems::State u = u0;
  for (long j = 0; j < m; ++j) {
    for (long k = 0; k < stride; ++k) u = systems::rk4_state_step(f, u, cfg.solver_dt);
    if (!u.allFinite() || u.norm() > 1e12) break;
    out.row(j) = u.transpose();
  }
  return out;
}

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace detail

/// For each radius, the median over repetitions of the CME between the
/// exact Lorenz63std solution from a random attractor point and the RK4
/// solution with u(0) (or (sigma, rho, beta)) moved by a uniform point on
/// the sphere of that radius. Each repetition uses one start point and one
/// direction for all radii.
inline std::vector<PerturbationRow> perturbation_study(const std::vector<double>& radii, std::size_t reps,
                                                       std::uint64_t seed, Perturbation kind,
                                                       const PerturbationConfig& cfg = {}) {
  if (reps == 0) throw DomainError("perturbation_study: need at least one repetition");
  for (double r : radii)
    if (!(r >= 0.0)) throw DomainError("perturbation_study: radii must be >= 0");
  const long m = std::lround(cfg.horizon / cfg.output_dt);
  std::vector<double> times(static_cast<std::size_t>(m));
  for (long j = 0; j < m; ++j) times[static_cast<std::size_t>(j)] = static_cast<double>(j + 1) * cfg.output_dt;

  const systems::VectorFieldSpec exact = systems::standard_field();
  std::vector<std::vector<double>> cme(radii.size());
  for (std::size_t rep = 0; rep < reps; ++rep) {
    std::mt19937_64 start_rng(derive_seed(seed, "perturb-start", {rep}));
    const systems::State u0 = systems::sample_initial_condition(exact, start_rng);
    std::mt19937_64 dir_rng(derive_seed(seed, "perturb-direction", {rep}));
    const Vec dir = detail::uniform_on_sphere(dir_rng, 3);
    const Mat truth = detail::sampled_run(exact, u0, cfg);
    for (std::size_t i = 0; i < radii.size(); ++i) {
      Mat pred;
      if (kind == Perturbation::initial_condition) {
        pred = detail::sampled_run(exact, u0 + radii[i] * dir, cfg);
      } else {
        const systems::LorenzParams base{};
        const systems::LorenzParams p{base.sigma + radii[i] * dir(0), base.rho + radii[i] * dir(1),
                                      base.beta + radii[i] * dir(2)};
        pred = detail::sampled_run(systems::random_field(p), u0, cfg);
      }
      cme[i].push_back(metrics::cme({0.0, times, truth, pred}));
    }
  }
  std::vector<PerturbationRow> out;
  for (std::size_t i = 0; i < radii.size(); ++i) out.push_back({kind, radii[i], detail::median(cme[i]), reps});
  return out;
}

inline void write_perturbation_csv(std::ostream& os, const std::vector<PerturbationRow>& rows) {
  os << "kind,radius,median_cme,reps\n";
  char r[32];
  for (const auto& x : rows) {
    std::snprintf(r, sizeof r, "%.3e", x.radius);
    os << to_string(x.kind) << ',' << r << ',' << io::fixed(x.median_cme) << ',' << x.reps << '\n';
  }
}

}  // namespace chaoscast::bench
