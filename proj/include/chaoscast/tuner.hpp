// Local grid search over hyperparameter domains and the default domains
// of every implemented method.
#pragma once

#include "chaoscast/forecasters/method_config.hpp"
#include "chaoscast/forecasters/registry.hpp"

#include <nlohmann/json.hpp>

#include <atomic>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

namespace chaoscast::tuner {

using forecasters::MethodConfig;
using forecasters::ParamValue;

enum class CategoricalPolicy { persistent, yielding };
enum class Scale { linear, exponential };

struct ParamDomain {
  std::string name;
  bool categorical = false;

  std::vector<ParamValue> options;
  CategoricalPolicy policy = CategoricalPolicy::persistent;

  Scale scale = Scale::linear;
  double step = 1.0;
  double lo = 0.0;
  double hi = 0.0;
  std::vector<double> initial;
  // Exponential scales only: 0 is a member of the domain below `lo`,
  // with neighbours {0, lo}.
  bool zero_start = false;

  static ParamDomain categorical_param(std::string name, std::vector<ParamValue> options, CategoricalPolicy policy) {
    ParamDomain d;
    d.name = std::move(name);
    d.categorical = true;
    d.options = std::move(options);
    d.policy = policy;
    d.validate();
    return d;
  }

  static ParamDomain linear(std::string name, double step, double lo, double hi, std::vector<double> initial) {
    ParamDomain d;
    d.name = std::move(name);
    d.scale = Scale::linear;
    d.step = step;
    d.lo = lo;
    d.hi = hi;
    d.initial = std::move(initial);
    d.validate();
    return d;
  }

  static ParamDomain exponential(std::string name, double factor, double lo, double hi, std::vector<double> initial,
                                 bool zero_start = false) {
    ParamDomain d;
    d.name = std::move(name);
    d.scale = Scale::exponential;
    d.step = factor;
    d.lo = lo;
    d.hi = hi;
    d.initial = std::move(initial);
    d.zero_start = zero_start;
    d.validate();
    return d;
  }

  bool contains(double v) const {
    if (zero_start && v == 0.0) return true;
    return v >= lo - 1e-12 * std::abs(lo) && v <= hi + 1e-12 * std::abs(hi);
  }

  void validate() const {
    if (name.empty()) throw DomainError("param domain: empty name");
    if (categorical) {
      if (options.empty()) throw DomainError("param domain " + name + ": no options");
      return;
    }
    if (initial.empty()) throw DomainError("param domain " + name + ": empty initial set");
    if (!(lo <= hi)) throw DomainError("param domain " + name + ": lo > hi");
    if (!(step > 0.0)) throw DomainError("param domain " + name + ": step must be positive");
    if (scale == Scale::exponential && !(lo > 0.0 && step > 1.0))
      throw DomainError("param domain " + name + ": exponential scale needs lo > 0 and factor > 1");
    if (zero_start && scale != Scale::exponential)
      throw DomainError("param domain " + name + ": zero start is only defined for exponential scales");
    for (double v : initial)
      if (!contains(v)) throw DomainError("param domain " + name + ": initial value outside bounds");
  }

  std::vector<ParamValue> initial_values() const {
    if (categorical) return options;
    return {initial.begin(), initial.end()};
  }

  /// Candidate values for the next step given the incumbent value.
  std::vector<ParamValue> neighbours(const ParamValue& best) const {
    if (categorical) {
      if (policy == CategoricalPolicy::persistent) return options;
      return {best};
    }
    const double a = std::get<double>(best);
    std::vector<double> cand;
    if (scale == Scale::linear) {
      cand = {a - step, a, a + step};
    } else if (zero_start && a == 0.0) {
      cand = {0.0, lo};
    } else {
      cand = {forecasters::round_significant(a / step), a, forecasters::round_significant(a * step)};
    }
    std::vector<ParamValue> out;
    for (double v : cand)
      if (contains(v)) out.emplace_back(v);
    return out;
  }
};

struct TraceEntry {
  MethodConfig config;
  double mean_cme = 1.0;
  std::size_t step = 0;
  bool failed = false;
  std::string error;

  nlohmann::json to_json() const {
    return {{"config", config.to_json()}, {"mean_cme", mean_cme}, {"step", step}};
  }
};

/// Evaluated configurations keyed by canonical serialization, and the
/// incumbent. `base` carries the method name and any fixed parameters.
struct TuneState {
  MethodConfig base;
  std::map<std::string, double> evaluated;
  std::optional<MethodConfig> best;
  double best_score = 1.0;
  std::size_t step = 0;

  bool seen(const MethodConfig& c) const { return evaluated.count(c.canonical_key()) > 0; }

  void record(const MethodConfig& c, double score) {
    evaluated.emplace(c.canonical_key(), score);
    if (!best || score < best_score) {
      best = c;
      best_score = score;
    }
  }
};

namespace detail {

inline std::vector<MethodConfig> cartesian(const MethodConfig& base, const std::vector<ParamDomain>& domains,
                                           const std::vector<std::vector<ParamValue>>& sets) {
  std::vector<MethodConfig> out{base};
  for (std::size_t j = 0; j < domains.size(); ++j) {
    std::vector<MethodConfig> next;
    next.reserve(out.size() * sets[j].size());
    for (const auto& c : out)
      for (const auto& v : sets[j]) {
        MethodConfig e = c;
        e.params[domains[j].name] = v;
        next.push_back(std::move(e));
      }
    out = std::move(next);
  }
  return out;
}

}  // namespace detail

/// Step-0 grid: the product of the initial sets, first domain outermost.
inline std::vector<MethodConfig> initial_grid(const MethodConfig& base, const std::vector<ParamDomain>& domains) {
  std::vector<std::vector<ParamValue>> sets;
  for (const auto& d : domains) sets.push_back(d.initial_values());
  return detail::cartesian(base, domains, sets);
}

/// Product of per-parameter neighbour sets around the incumbent, minus
/// configurations already evaluated. Empty means the search has converged.
inline std::vector<MethodConfig> next_grid(const TuneState& state, const std::vector<ParamDomain>& domains) {
  if (!state.best) throw DomainError("next_grid: no incumbent yet");
  std::vector<std::vector<ParamValue>> sets;
  for (const auto& d : domains) {
    auto it = state.best->params.find(d.name);
    if (it == state.best->params.end()) throw DomainError("next_grid: incumbent lacks parameter " + d.name);
    sets.push_back(d.neighbours(it->second));
  }
  std::vector<MethodConfig> out;
  for (auto& c : detail::cartesian(state.base, domains, sets))
    if (!state.seen(c)) out.push_back(std::move(c));
  return out;
}

using Evaluator = std::function<double(const MethodConfig&)>;

struct SearchOptions {
  std::size_t max_evals = 500;
  unsigned jobs = 1;
  /// Called in trace order after each step.
  std::function<void(const TraceEntry&)> on_evaluated;
};

struct SearchResult {
  MethodConfig best;
  std::optional<double> best_score;  // absent when nothing was tuned
  std::vector<TraceEntry> trace;
  std::size_t steps = 0;
};

namespace detail {

inline TraceEntry evaluate_one(const Evaluator& evaluator, const MethodConfig& c, std::size_t step) {
  TraceEntry e{c, 1.0, step, false, {}};
  try {
    const double s = evaluator(c);
    if (std::isfinite(s)) {
      e.mean_cme = s;
    } else {
      e.failed = true;
      e.error = "non-finite score";
    }
  } catch (const std::exception& ex) {
    e.failed = true;
    e.error = ex.what();
  }
  return e;
}

inline std::vector<TraceEntry> evaluate_grid(const Evaluator& evaluator, const std::vector<MethodConfig>& grid,
                                             std::size_t step, unsigned jobs) {
  std::vector<TraceEntry> out(grid.size());
  const unsigned workers = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(grid.size())));
  if (workers == 1) {
    for (std::size_t i = 0; i < grid.size(); ++i) out[i] = evaluate_one(evaluator, grid[i], step);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  for (unsigned w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < grid.size(); i = next++) out[i] = evaluate_one(evaluator, grid[i], step);
    });
  return out;
}

}  // namespace detail

/// Evaluate grid, update the incumbent, move to the neighbour grid; stop
/// when no unevaluated neighbours remain or after max_evals evaluations.
/// Failures score 1. The first minimal configuration in trace order wins.
inline SearchResult local_grid_search(const Evaluator& evaluator, const MethodConfig& base,
                                      const std::vector<ParamDomain>& domains, const SearchOptions& opts = {}) {
  SearchResult res{base, std::nullopt, {}, 0};
  if (domains.empty()) return res;
  for (const auto& d : domains) d.validate();

  TuneState state{base, {}, std::nullopt, 1.0, 0};
  std::vector<MethodConfig> grid = initial_grid(base, domains);
  while (!grid.empty() && res.trace.size() < opts.max_evals) {
    const std::size_t budget = opts.max_evals - res.trace.size();
    if (grid.size() > budget) grid.resize(budget);
    auto entries = detail::evaluate_grid(evaluator, grid, state.step, opts.jobs);
    for (auto& e : entries) {
      state.record(e.config, e.mean_cme);
      if (opts.on_evaluated) opts.on_evaluated(e);
      res.trace.push_back(std::move(e));
    }
    ++res.steps;
    ++state.step;
    grid = next_grid(state, domains);
  }
  res.best = *state.best;
  res.best_score = state.best_score;
  return res;
}

inline void write_trace_jsonl(std::ostream& os, const std::vector<TraceEntry>& trace) {
  for (const auto& e : trace) os << e.to_json().dump() << '\n';
}

// ---------------------------------------------------------------------------
// Default domains

namespace detail {

inline ParamDomain bandwidth() { return ParamDomain::exponential("h", 2, 1e-4, 10, {0.05, 0.2, 0.8}); }
inline ParamDomain penalty(const std::string& name = "lambda") {
  return ParamDomain::exponential(name, 10, 1e-15, 1e2, {1e-12, 1e-8, 1e-4});
}

}  // namespace detail

/// Domains for a method name; a trailing '*' selects a family ("Lin*",
/// "Esn*"). Tuning-free methods return no domains.
inline std::vector<ParamDomain> default_grid(const std::string& method) {
  std::string name = method;
  if (!name.empty() && name.back() == '*') name.pop_back();
  name = forecasters::canonical_method_name(name);
  const auto starts = [&](const char* p) { return name.rfind(p, 0) == 0; };

  if (starts("LinPo")) return {};
  if (starts("Lin"))
    return {ParamDomain::linear("K", 1, 0, 32, {0, 1, 4}), ParamDomain::linear("s", 1, 1, 9, {1, 2}),
            ParamDomain::linear("l", 1, 1, 8, {1, 4}), detail::penalty()};
  if (starts("RaFe") || starts("Esn"))
    return {ParamDomain::exponential("c", 2, 1e-7, 1e2, {0.025, 0.1, 0.4}), detail::penalty(),
            ParamDomain::exponential("psi", 2, 1, 64, {0, 1}, true),
            ParamDomain::categorical_param("r", {1.0, 2.0, 3.0, 4.0}, CategoricalPolicy::persistent)};
  if (starts("PgGp")) return {detail::bandwidth(), detail::penalty()};
  if (starts("PgLl")) return {detail::bandwidth()};
  if (name == "Analog")
    return {ParamDomain::categorical_param("omega", {1.0, 10.0, 100.0}, CategoricalPolicy::persistent)};
  if (name == "LlNn") return {detail::bandwidth()};
  if (name == "SpPo") return {ParamDomain::linear("l", 1, 1, 8, {2, 3, 4}), detail::penalty()};
  if (name == "SpGp") return {detail::bandwidth(), detail::penalty()};
  if (name == "GpGp") return {detail::bandwidth(), detail::penalty(), detail::penalty("mu")};
  if (name == "SINDy" || name == "SINDyN")
    return {ParamDomain::exponential("tau", 2, 1e-7, 1e2, {0.04, 0.16, 0.64})};
  if (name == "ConstM" || name == "ConstL" || name == "PwNn" || name == "SpNn" || name == "SpPo2" || name == "SpPo4")
    return {};
  throw DomainError("default_grid: unknown method '" + method + "'");
}

}  // namespace chaoscast::tuner
