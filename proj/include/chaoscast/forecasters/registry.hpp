// Method names and the fit() entry point.
#pragma once

#include "chaoscast/forecasters/baselines.hpp"
#include "chaoscast/forecasters/esn.hpp"
#include "chaoscast/forecasters/propagator.hpp"
#include "chaoscast/forecasters/smoothers.hpp"

#include <optional>

namespace chaoscast::forecasters {

inline const std::vector<std::string>& method_names() {
  static const std::vector<std::string> names = {
      "ConstM", "ConstL", "Analog",                                     //
      "LinS",   "LinD",   "LinST",  "LinDT",  "LinPo4", "LinPo6", "LinPo4T", "LinPo6T",
      "RaFeS",  "RaFeD",  "RaFeST", "RaFeDT",                           //
      "EsnS",   "EsnD",   "EsnST",  "EsnDT",                            //
      "PgGpS",  "PgGpD",  "PgGpST", "PgGpDT",                           //
      "PgLlS",  "PgLlD",  "PgLlST", "PgLlDT",                           //
      "PwNn",   "SpNn",   "LlNn",   "SpPo",   "SpPo2",  "SpPo4",  "SpGp", "GpGp", "SINDy", "SINDyN"};
  return names;
}

/// "PwlNn" is accepted as an alias of "PwNn".
inline std::string canonical_method_name(const std::string& name) { return name == "PwlNn" ? "PwNn" : name; }

inline bool is_known_method(const std::string& name) {
  const auto& v = method_names();
  return std::find(v.begin(), v.end(), canonical_method_name(name)) != v.end();
}

struct PropagatorName {
  std::string family;  // Lin, LinPo4, LinPo6, RaFe, Esn, PgGp, PgLl
  PropagatorConfig cfg;
};

/// Splits e.g. "RaFeDT" into family "RaFe" and its variant.
inline std::optional<PropagatorName> parse_propagator_name(const std::string& name) {
  for (const char* po : {"LinPo4", "LinPo6"}) {
    const std::string p = po;
    if (name == p || name == p + "T") {
      PropagatorName out{p, {}};
      out.cfg.target = Target::diff_quotient;
      out.cfg.timestep_input = name.size() > p.size();
      return out;
    }
  }
  for (const char* fam : {"Lin", "RaFe", "Esn", "PgGp", "PgLl"}) {
    const std::string f = fam;
    if (name.rfind(f, 0) != 0) continue;
    const std::string v = name.substr(f.size());
    if (v != "S" && v != "D" && v != "ST" && v != "DT") continue;
    PropagatorName out{f, {}};
    out.cfg.target = v[0] == 'S' ? Target::state : Target::diff_quotient;
    out.cfg.timestep_input = v.size() == 2;
    return out;
  }
  return std::nullopt;
}

/// Values used for hyperparameters absent from a config.
inline double default_param(const std::string& name) {
  static const std::map<std::string, double> d = {{"K", 0},         {"s", 1},   {"l", 4},   {"lambda", 1e-8},
                                                  {"c", 0.1},       {"psi", 0}, {"r", 1},   {"h", 0.2},
                                                  {"mu", 1e-8},     {"tau", 0.16}, {"omega", 10}};
  auto it = d.find(name);
  if (it == d.end()) throw DomainError("no default for parameter '" + name + "'");
  return it->second;
}

namespace detail {

inline void check_known_params(const MethodConfig& mc, std::initializer_list<const char*> allowed) {
  for (const auto& [k, v] : mc.params) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || k == a;
    if (!ok) throw DomainError(mc.method + ": unknown parameter '" + k + "'");
  }
}

inline double num(const MethodConfig& mc, const char* name) { return mc.number_or(name, default_param(name)); }
inline long integer(const MethodConfig& mc, const char* name) {
  return mc.integer_or(name, std::lround(default_param(name)));
}

inline double positive(const MethodConfig& mc, const char* name) {
  const double v = num(mc, name);
  if (!(v > 0.0) || !std::isfinite(v)) throw DomainError(mc.method + ": '" + name + "' must be positive");
  return v;
}

inline double nonnegative(const MethodConfig& mc, const char* name) {
  const double v = num(mc, name);
  if (!(v >= 0.0) || !std::isfinite(v)) throw DomainError(mc.method + ": '" + name + "' must be >= 0");
  return v;
}

}  // namespace detail

/// Fits `mc` on `train`. Every random draw derives from `seed` (and, for
/// the random-network methods, the network index r).
inline ForecasterPtr fit(MethodConfig mc, const TimeSeries& train, std::uint64_t seed = 0) {
  using detail::check_known_params;
  mc.method = canonical_method_name(mc.method);
  const std::string& m = mc.method;
  if (train.empty()) throw DimensionError(m + ": empty training set");

  if (m == "ConstM") {
    check_known_params(mc, {});
    check_train(train, 1, m);
    return std::make_unique<ConstMean>(mc, train);
  }
  if (m == "ConstL") {
    check_known_params(mc, {});
    return std::make_unique<ConstLast>(mc, train.dim());
  }
  if (m == "Analog") {
    check_known_params(mc, {"omega"});
    const long omega = detail::integer(mc, "omega");
    check_train(train, 2, m);
    auto z = preprocess::fit_normalizer(train.states, preprocess::NormalizationMode::full);
    TimeSeries zs = normalized_series(train, z);
    if (static_cast<long>(zs.size()) <= omega) throw DimensionError("Analog: training series must be longer than omega");
    return std::make_unique<Analog>(mc, std::move(z), std::move(zs), omega);
  }

  if (auto pn = parse_propagator_name(m)) {
    PropagatorConfig cfg = pn->cfg;
    if (pn->family == "LinPo4" || pn->family == "LinPo6") {
      check_known_params(mc, {});
      return fit_lin(mc, train, cfg, pn->family == "LinPo4" ? 4 : 6, 0.0);
    }
    if (pn->family == "Lin") {
      check_known_params(mc, {"K", "s", "l", "lambda"});
      cfg.past_steps = detail::integer(mc, "K");
      cfg.skip = detail::integer(mc, "s");
      return fit_lin(mc, train, cfg, detail::integer(mc, "l"), detail::nonnegative(mc, "lambda"));
    }
    if (pn->family == "RaFe" || pn->family == "Esn") {
      check_known_params(mc, {"c", "lambda", "psi", "r"});
      cfg.forward_skip = detail::integer(mc, "psi");
      const std::uint64_t r = static_cast<std::uint64_t>(detail::integer(mc, "r"));
      const double c = detail::positive(mc, "c"), lambda = detail::nonnegative(mc, "lambda");
      if (pn->family == "RaFe") return fit_rafe(mc, train, cfg, c, lambda, derive_seed(seed, "rafe", {r}));
      return fit_esn(mc, train, cfg, c, lambda, derive_seed(seed, "esn", {r}));
    }
    if (pn->family == "PgGp") {
      check_known_params(mc, {"h", "lambda"});
      return fit_pg_gp(mc, train, cfg, detail::positive(mc, "h"), detail::nonnegative(mc, "lambda"));
    }
    check_known_params(mc, {"h"});
    return fit_pg_ll(mc, train, cfg, detail::positive(mc, "h"));
  }

  if (m == "PwNn" || m == "SpNn") {
    check_known_params(mc, {});
    return fit_smoother_nn(mc, train,
                           {m == "PwNn" ? SolutionEstimate::piecewise_linear : SolutionEstimate::spline});
  }
  if (m == "LlNn") {
    check_known_params(mc, {"h"});
    return fit_smoother_nn(mc, train, {SolutionEstimate::local_linear, detail::positive(mc, "h")});
  }
  if (m == "SpPo") {
    check_known_params(mc, {"l", "lambda"});
    return fit_smoother_poly(mc, train, {SolutionEstimate::spline}, detail::integer(mc, "l"),
                             detail::nonnegative(mc, "lambda"));
  }
  if (m == "SpPo2" || m == "SpPo4") {
    check_known_params(mc, {});
    return fit_smoother_poly(mc, train, {SolutionEstimate::spline}, m == "SpPo2" ? 2 : 4, 0.0);
  }
  if (m == "SpGp") {
    check_known_params(mc, {"h", "lambda"});
    return fit_smoother_gp(mc, train, {SolutionEstimate::spline}, detail::positive(mc, "h"),
                           detail::nonnegative(mc, "lambda"));
  }
  if (m == "GpGp") {
    check_known_params(mc, {"h", "lambda", "mu"});
    return fit_smoother_gp(mc, train, {SolutionEstimate::gp, 0.0, detail::nonnegative(mc, "mu")},
                           detail::positive(mc, "h"), detail::nonnegative(mc, "lambda"));
  }
  if (m == "SINDy" || m == "SINDyN") {
    check_known_params(mc, {"tau"});
    return fit_sindy(mc, train, detail::nonnegative(mc, "tau"),
                     m == "SINDy" ? preprocess::NormalizationMode::scale_only : preprocess::NormalizationMode::full);
  }
  throw DomainError("unknown method '" + m + "'");
}

}  // namespace chaoscast::forecasters
