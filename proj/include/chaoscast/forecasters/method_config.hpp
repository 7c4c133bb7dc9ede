// Method identity plus hyperparameter assignment.
#pragma once

#include "chaoscast/core.hpp"

#include <nlohmann/json.hpp>

#include <cstdio>
#include <map>
#include <string>
#include <variant>

namespace chaoscast::forecasters {

using ParamValue = std::variant<double, std::string>;

/// Formats a number with 12 significant digits, the precision used for
/// canonical keys and for snapping tuner lattice values.
inline std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

inline double round_significant(double v) { return std::stod(format_number(v)); }

struct MethodConfig {
  std::string method;
  std::map<std::string, ParamValue> params;

  bool has(const std::string& name) const { return params.count(name) != 0; }

  double number(const std::string& name) const {
    auto it = params.find(name);
    if (it == params.end()) throw DomainError(method + ": missing parameter '" + name + "'");
    if (const double* v = std::get_if<double>(&it->second)) return *v;
    throw DomainError(method + ": parameter '" + name + "' is not numeric");
  }

  double number_or(const std::string& name, double fallback) const { return has(name) ? number(name) : fallback; }

  long integer_or(const std::string& name, long fallback) const {
    if (!has(name)) return fallback;
    const double v = number(name);
    if (v != std::round(v)) throw DomainError(method + ": parameter '" + name + "' must be an integer");
    return std::lround(v);
  }

  MethodConfig& set(const std::string& name, ParamValue v) {
    params[name] = std::move(v);
    return *this;
  }

  /// Serialization with sorted keys and numbers at 12 significant digits;
  /// equal configurations give equal keys.
  std::string canonical_key() const {
    std::string key = method + "{";
    bool first = true;
    for (const auto& [k, v] : params) {
      if (!first) key += ",";
      first = false;
      key += k + "=";
      if (const double* d = std::get_if<double>(&v)) key += format_number(*d);
      else key += "\"" + std::get<std::string>(v) + "\"";
    }
    return key + "}";
  }

  nlohmann::json to_json() const {
    nlohmann::json p = nlohmann::json::object();
    for (const auto& [k, v] : params) {
      if (const double* d = std::get_if<double>(&v)) {
        if (*d == std::round(*d) && std::abs(*d) < 1e15) p[k] = static_cast<long long>(*d);
        else p[k] = *d;
      } else {
        p[k] = std::get<std::string>(v);
      }
    }
    return {{"method", method}, {"params", p}};
  }

  static MethodConfig from_json(const nlohmann::json& j) {
    MethodConfig c;
    if (!j.is_object() || !j.contains("method") || !j["method"].is_string())
      throw DomainError("method config: expected an object with a string 'method'");
    c.method = j["method"].get<std::string>();
    if (j.contains("params")) {
      const auto& p = j["params"];
      if (!p.is_object()) throw DomainError("method config: 'params' must be an object");
      for (auto it = p.begin(); it != p.end(); ++it) {
        if (it->is_number()) c.params[it.key()] = it->get<double>();
        else if (it->is_string()) c.params[it.key()] = it->get<std::string>();
        else throw DomainError("method config: parameter '" + it.key() + "' must be a number or string");
      }
    }
    return c;
  }

  friend bool operator==(const MethodConfig& a, const MethodConfig& b) { return a.canonical_key() == b.canonical_key(); }
};

}  // namespace chaoscast::forecasters
