// Subcommand logic behind the command-line tool. Each command returns the
// process exit code: 0 success, 1 a subtask failed, 2 usage error.
#pragma once

#include "chaoscast/bench.hpp"
#include "chaoscast/tuner.hpp"

#include <iostream>
#include <set>

namespace chaoscast::cli {

namespace fs = std::filesystem;

inline constexpr int kOk = 0;
inline constexpr int kFailed = 1;
inline constexpr int kUsage = 2;

class UsageError : public Error {
 public:
  using Error::Error;
};

struct Context {
  fs::path root = "data";
  unsigned jobs = 1;
  std::ostream* log = &std::cerr;

  std::ostream& out() const { return *log; }
};

// ---------------------------------------------------------------------------
// Manifest

/// Everything needed to rebuild a run: stored at <root>/manifest.json.
struct Manifest {
  std::uint64_t seed = 0;
  std::vector<std::string> systems;
  std::vector<std::string> schemes;
  std::vector<std::string> methods;
  std::size_t validation_reps = 10;
  std::size_t test_reps = 10;
  unsigned jobs = 1;

  /// Fit seed shared by every repetition, so a network seed index r names
  /// the same network on all of them.
  std::uint64_t fit_seed() const { return derive_seed(seed, "fit"); }

  nlohmann::json to_json() const {
    return {{"seed", seed},           {"systems", systems},         {"schemes", schemes},
            {"methods", methods},     {"validation_reps", validation_reps}, {"test_reps", test_reps},
            {"jobs", jobs}};
  }

  static Manifest from_json(const nlohmann::json& j) {
    Manifest m;
    m.seed = j.value("seed", std::uint64_t{0});
    m.systems = j.value("systems", std::vector<std::string>{});
    m.schemes = j.value("schemes", std::vector<std::string>{});
    m.methods = j.value("methods", std::vector<std::string>{});
    m.validation_reps = j.value("validation_reps", std::size_t{10});
    m.test_reps = j.value("test_reps", std::size_t{10});
    m.jobs = j.value("jobs", 1u);
    return m;
  }
};

inline fs::path manifest_path(const fs::path& root) { return root / "manifest.json"; }

inline std::optional<Manifest> load_manifest(const fs::path& root) {
  if (!fs::exists(manifest_path(root))) return std::nullopt;
  return Manifest::from_json(io::read_json(manifest_path(root)));
}

namespace detail {

inline std::vector<std::string> or_all(const std::vector<std::string>& chosen, const auto& all) {
  if (!chosen.empty()) return chosen;
  return {all.begin(), all.end()};
}

inline void check_names(const std::vector<std::string>& systems, const std::vector<std::string>& schemes) {
  for (const auto& s : systems)
    if (std::find(systems::system_names().begin(), systems::system_names().end(), s) == systems::system_names().end())
      throw UsageError("unknown system '" + s + "'");
  for (const auto& s : schemes)
    if (std::find(systems::scheme_names().begin(), systems::scheme_names().end(), s) == systems::scheme_names().end())
      throw UsageError("unknown scheme '" + s + "'");
}

inline std::vector<std::string> check_methods(const std::vector<std::string>& methods) {
  std::vector<std::string> out;
  for (const auto& m : methods) {
    if (!forecasters::is_known_method(m)) throw UsageError("unknown method '" + m + "'");
    out.push_back(forecasters::canonical_method_name(m));
  }
  return out;
}

inline bool non_empty_dir(const fs::path& p) { return fs::is_directory(p) && !fs::is_empty(p); }

inline std::vector<io::StoredInstance> load_split(const fs::path& root, const std::string& system,
                                                  const std::string& scheme, const std::string& split) {
  const auto dirs = io::list_reps(root / system / scheme / split);
  if (dirs.empty()) throw Error("no instances under " + (root / system / scheme / split).string());
  std::vector<io::StoredInstance> out;
  for (const auto& d : dirs) out.push_back(io::read_instance(d));
  return out;
}

inline void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write " + path.string());
  os << text;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// generate

struct GenerateOptions {
  std::uint64_t seed = 0;
  std::vector<std::string> systems;
  std::vector<std::string> schemes;
  std::size_t validation_reps = 10;
  std::size_t test_reps = 10;
  bool force = false;
};

/// Writes <root>/<system>/<scheme>/{validation,test}/rep<NNNN>/ and merges
/// the selection into the manifest.
inline int cmd_generate(const Context& ctx, const GenerateOptions& opt) {
  const auto systems = detail::or_all(opt.systems, systems::system_names());
  const auto schemes = detail::or_all(opt.schemes, systems::scheme_names());
  detail::check_names(systems, schemes);

  auto manifest = load_manifest(ctx.root);
  if (manifest && manifest->seed != opt.seed && !opt.force)
    throw Error("data root was generated with seed " + std::to_string(manifest->seed) +
                     "; use --force to regenerate");
  for (const auto& sys : systems)
    for (const auto& sch : schemes)
      if (detail::non_empty_dir(ctx.root / sys / sch) && !opt.force)
        throw Error((ctx.root / sys / sch).string() + " exists and is not empty; use --force to overwrite");

  int status = kOk;
  for (const auto& sys : systems)
    for (const auto& sch : schemes) {
      fs::remove_all(ctx.root / sys / sch);
      for (const auto& [split, reps] :
           {std::pair<const char*, std::size_t>{bench::kValidation, opt.validation_reps}, {bench::kTest, opt.test_reps}})
        for (std::size_t r = 0; r < reps; ++r) {
          try {
            io::write_instance(io::instance_dir(ctx.root, sys, sch, split, r),
                               bench::make_instance(opt.seed, sys, sch, split, r));
          } catch (const std::exception& e) {
            ctx.out() << "generate " << sys << '/' << sch << '/' << split << '/' << r << ": " << e.what() << '\n';
            status = kFailed;
          }
        }
      ctx.out() << "generated " << sys << '/' << sch << " (" << opt.validation_reps << " validation, "
                << opt.test_reps << " test)\n";
    }

  Manifest m = manifest && manifest->seed == opt.seed ? *manifest : Manifest{};
  m.seed = opt.seed;
  m.validation_reps = opt.validation_reps;
  m.test_reps = opt.test_reps;
  m.jobs = ctx.jobs;
  auto merge = [](std::vector<std::string>& into, const std::vector<std::string>& add) {
    for (const auto& s : add)
      if (std::find(into.begin(), into.end(), s) == into.end()) into.push_back(s);
  };
  merge(m.systems, systems);
  merge(m.schemes, schemes);
  io::write_json(manifest_path(ctx.root), m.to_json());
  return status;
}

// ---------------------------------------------------------------------------
// tune

struct SelectionOptions {
  std::vector<std::string> methods;
  std::vector<std::string> systems;
  std::vector<std::string> schemes;
};

struct TuneOptions : SelectionOptions {
  std::size_t max_evals = 500;
};

inline fs::path tuned_path(const fs::path& root, const std::string& system, const std::string& scheme,
                           const std::string& method) {
  return root / "tuned" / system / scheme / (method + ".json");
}

/// Local grid search on the validation split; writes the winning config
/// and the JSONL trace next to it.
inline int cmd_tune(const Context& ctx, const TuneOptions& opt) {
  const auto manifest = load_manifest(ctx.root).value_or(Manifest{});
  const auto systems = detail::or_all(opt.systems, manifest.systems.empty() ? std::vector<std::string>(
                                                                                  systems::system_names().begin(),
                                                                                  systems::system_names().end())
                                                                            : manifest.systems);
  const auto schemes = detail::or_all(opt.schemes, manifest.schemes.empty() ? std::vector<std::string>(
                                                                                  systems::scheme_names().begin(),
                                                                                  systems::scheme_names().end())
                                                                            : manifest.schemes);
  detail::check_names(systems, schemes);
  const auto methods = detail::check_methods(detail::or_all(opt.methods, forecasters::method_names()));

  int status = kOk;
  for (const auto& sys : systems)
    for (const auto& sch : schemes) {
      std::vector<io::StoredInstance> validation;
      try {
        validation = detail::load_split(ctx.root, sys, sch, bench::kValidation);
      } catch (const std::exception& e) {
        ctx.out() << "tune " << sys << '/' << sch << ": " << e.what() << '\n';
        status = kFailed;
        continue;
      }
      const bench::Labels labels{sys, sch, bench::kValidation};
      for (const auto& method : methods) {
        bench::EvaluateOptions eo;
        eo.fit_seed = manifest.fit_seed();
        auto evaluator = [&](const forecasters::MethodConfig& c) {
          return bench::mean_cme(bench::evaluate(c, validation, labels, eo));
        };
        tuner::SearchOptions so;
        so.max_evals = opt.max_evals;
        so.jobs = ctx.jobs;
        const auto res = tuner::local_grid_search(evaluator, {method, {}}, tuner::default_grid(method), so);
        nlohmann::json out = {{"config", res.best.to_json()},
                              {"evaluations", res.trace.size()},
                              {"steps", res.steps},
                              {"system", sys},
                              {"scheme", sch}};
        out["mean_cme"] = res.best_score ? nlohmann::json(*res.best_score) : nlohmann::json(nullptr);
        const auto path = tuned_path(ctx.root, sys, sch, method);
        io::write_json(path, out);
        std::ostringstream trace;
        tuner::write_trace_jsonl(trace, res.trace);
        detail::write_text(fs::path(path).replace_extension(".trace.jsonl"), trace.str());
        ctx.out() << "tuned " << method << " on " << sys << '/' << sch << ": " << res.best.canonical_key() << " ("
                  << res.trace.size() << " evaluations";
        if (res.best_score) ctx.out() << ", mean CME " << io::fixed(*res.best_score);
        ctx.out() << ")\n";
        for (const auto& e : res.trace)
          if (e.failed) ctx.out() << "  failed " << e.config.canonical_key() << ": " << e.error << '\n';
      }
    }
  return status;
}

// ---------------------------------------------------------------------------
// run

struct RunOptions : SelectionOptions {
  bool untuned = false;  // use default parameters when no tuned config exists
};

inline fs::path results_path(const fs::path& root, const std::string& system, const std::string& scheme,
                             const std::string& method) {
  return root / "results" / system / scheme / (method + ".csv");
}

inline forecasters::MethodConfig resolve_config(const fs::path& root, const std::string& system,
                                                const std::string& scheme, const std::string& method, bool untuned) {
  const auto path = tuned_path(root, system, scheme, method);
  if (fs::exists(path)) return forecasters::MethodConfig::from_json(io::read_json(path).at("config"));
  if (tuner::default_grid(method).empty() || untuned) return {method, {}};
  throw Error(method + " has no tuned config for " + system + "/" + scheme + "; run tune first or pass --untuned");
}

/// Evaluates each method on the test split and writes one results CSV per
/// (system, scheme, method).
inline int cmd_run(const Context& ctx, const RunOptions& opt) {
  const auto manifest = load_manifest(ctx.root).value_or(Manifest{});
  const auto systems = detail::or_all(opt.systems, manifest.systems.empty() ? std::vector<std::string>(
                                                                                  systems::system_names().begin(),
                                                                                  systems::system_names().end())
                                                                            : manifest.systems);
  const auto schemes = detail::or_all(opt.schemes, manifest.schemes.empty() ? std::vector<std::string>(
                                                                                  systems::scheme_names().begin(),
                                                                                  systems::scheme_names().end())
                                                                            : manifest.schemes);
  detail::check_names(systems, schemes);
  const auto methods = detail::check_methods(detail::or_all(opt.methods, forecasters::method_names()));

  int status = kOk;
  for (const auto& sys : systems)
    for (const auto& sch : schemes) {
      std::vector<io::StoredInstance> test;
      try {
        test = detail::load_split(ctx.root, sys, sch, bench::kTest);
      } catch (const std::exception& e) {
        ctx.out() << "run " << sys << '/' << sch << ": " << e.what() << '\n';
        status = kFailed;
        continue;
      }
      for (const auto& method : methods) {
        forecasters::MethodConfig mc;
        try {
          mc = resolve_config(ctx.root, sys, sch, method, opt.untuned);
        } catch (const std::exception& e) {
          ctx.out() << "run: " << e.what() << '\n';
          status = kFailed;
          continue;
        }
        bench::EvaluateOptions eo;
        eo.fit_seed = manifest.fit_seed();
        eo.jobs = ctx.jobs;
        const auto recs = bench::evaluate(mc, test, {sys, sch, bench::kTest}, eo);
        std::ostringstream os;
        bench::write_results_csv(os, recs);
        detail::write_text(results_path(ctx.root, sys, sch, method), os.str());
        std::size_t failed = 0;
        for (const auto& r : recs)
          if (r.failed) {
            ++failed;
            ctx.out() << "  " << method << " rep " << r.rep << " failed: " << r.error << '\n';
          }
        ctx.out() << "ran " << mc.canonical_key() << " on " << sys << '/' << sch << ": mean CME "
                  << io::fixed(bench::mean_cme(recs)) << '\n';
        if (failed) status = kFailed;
      }
    }
  return status;
}

// ---------------------------------------------------------------------------
// report

/// Reads every results CSV under <root>/results and writes the aggregate,
/// rank and t-test tables to <root>/report.
inline int cmd_report(const Context& ctx) {
  const fs::path dir = ctx.root / "results";
  if (!fs::is_directory(dir)) throw Error("no results under " + dir.string() + "; run first");
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<bench::ScoreRecord> records;
  for (const auto& f : files) {
    std::ifstream is(f, std::ios::binary);
    auto recs = bench::read_results_csv(is, f.string());
    records.insert(records.end(), recs.begin(), recs.end());
  }
  const auto rows = bench::aggregate(records);
  const auto tests = bench::t_test_matrix(records);
  const fs::path out = ctx.root / "report";
  std::ostringstream agg, ranks, tt;
  bench::write_aggregate_csv(agg, rows);
  bench::write_rank_csv(ranks, rows);
  bench::write_ttest_csv(tt, tests);
  detail::write_text(out / "aggregate.csv", agg.str());
  detail::write_text(out / "ranks.csv", ranks.str());
  detail::write_text(out / "ttests.csv", tt.str());
  io::write_json(out / "report_meta.json",
                 {{"confidence_interval", "Student-t, 95%, over repetitions"},
                  {"t_test", "paired, one-sided, H0: CME(method1) >= CME(method2)"},
                  {"rank_ties", "broken by method name"},
                  {"failed_repetitions", "counted as CME 1"},
                  {"result_files", files.size()},
                  {"records", records.size()}});
  ctx.out() << "report: " << rows.size() << " rows from " << records.size() << " records in " << out.string() << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------
// perturb

struct PerturbOptions {
  std::vector<double> radii{0.0, 1e-14, 1e-12, 1e-10, 1e-8, 1e-6, 1e-4, 1e-2, 1.0, 1e2};
  std::size_t reps = 100;
  std::uint64_t seed = 0;
};

inline int cmd_perturb(const Context& ctx, const PerturbOptions& opt, std::ostream& out) {
  if (opt.reps == 0) throw UsageError("--reps must be positive");
  std::vector<bench::PerturbationRow> rows;
  for (auto kind : {bench::Perturbation::initial_condition, bench::Perturbation::parameters}) {
    auto r = bench::perturbation_study(opt.radii, opt.reps, opt.seed, kind);
    rows.insert(rows.end(), r.begin(), r.end());
  }
  bench::write_perturbation_csv(out, rows);
  ctx.out() << "perturb: " << rows.size() << " rows over " << opt.reps << " repetitions\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// metrics

struct MetricsOptions {
  fs::path truth;
  fs::path prediction;
  std::optional<double> start;  // forecast start T
  double kappa = 0.4;
};

/// Scores a prediction CSV against a truth CSV on the same time grid. The
/// start time defaults to one grid step before the first truth time.
inline int cmd_metrics(const Context& ctx, const MetricsOptions& opt, std::ostream& out) {
  const TimeSeries truth = io::read_series_csv(opt.truth);
  const TimeSeries pred = io::read_series_csv(opt.prediction);
  if (truth.size() != pred.size() || truth.dim() != pred.dim())
    throw UsageError("prediction and truth differ in shape");
  for (std::size_t i = 0; i < truth.size(); ++i)
    if (std::abs(truth.times[i] - pred.times[i]) > 1e-9 * (1.0 + std::abs(truth.times[i])))
      throw UsageError("prediction and truth times differ at row " + std::to_string(i + 1));
  double T;
  if (opt.start) {
    T = *opt.start;
  } else {
    if (truth.size() < 2) throw UsageError("--start is required for a single-row truth");
    T = truth.times[0] - (truth.times[1] - truth.times[0]);
  }
  io::StoredInstance inst;
  inst.truth = truth;
  inst.T = T;
  const auto s = bench::score_forecast(inst, pred, {opt.kappa});
  nlohmann::json j = {{"cme", s.cme}, {"tvalid", s.valid_time}, {"rows", truth.size()}};
  j["smape"] = s.smape ? nlohmann::json(*s.smape) : nlohmann::json(nullptr);
  out << j.dump() << '\n';
  (void)ctx;
  return kOk;
}

}  // namespace chaoscast::cli
