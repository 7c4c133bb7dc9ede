// Shared value types, error hierarchy and seed derivation.
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace chaoscast {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// ---------------------------------------------------------------------------
// Errors

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A linear system could not be solved to working accuracy.
class ConditioningError : public Error {
 public:
  using Error::Error;
};

/// Input outside the domain on which a quantity is defined (e.g. sd = 0).
class DomainError : public Error {
 public:
  using Error::Error;
};

class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, long step) : Error(what), step_(step) {}
  long step() const noexcept { return step_; }

 private:
  long step_;
};

// ---------------------------------------------------------------------------
// Time series

/// Ordered samples; row i of `states` is the state at `times[i]`.
///
/// Forecasts use the same type. A row containing a non-finite value marks
/// a missing prediction at that time.
struct TimeSeries {
  std::vector<double> times;
  Mat states;

  TimeSeries() = default;
  TimeSeries(std::vector<double> t, Mat s) : times(std::move(t)), states(std::move(s)) {
    if (static_cast<Eigen::Index>(times.size()) != states.rows())
      throw DimensionError("TimeSeries: times and states differ in length");
  }

  std::size_t size() const noexcept { return times.size(); }
  Eigen::Index dim() const noexcept { return states.cols(); }
  bool empty() const noexcept { return times.empty(); }

  Vec state(std::size_t i) const { return states.row(static_cast<Eigen::Index>(i)).transpose(); }
};

inline bool is_present(const Eigen::Ref<const Vec>& x) { return x.allFinite(); }

inline Vec missing_state(Eigen::Index dim) {
  return Vec::Constant(dim, std::numeric_limits<double>::quiet_NaN());
}

// ---------------------------------------------------------------------------
// Seeds
//
// Every random stream in the framework is seeded with
//   derive_seed(master, tag, {i0, i1, ...})
// which folds a FNV-1a hash of the role tag and each index into the master
// seed through the splitmix64 finalizer. Streams for distinct (tag, indices)
// are therefore independent for practical purposes and reproducible.

inline std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

inline std::uint64_t derive_seed(std::uint64_t master, std::string_view tag,
                                 std::initializer_list<std::uint64_t> indices = {}) noexcept {
  std::uint64_t h = splitmix64(master ^ fnv1a(tag));
  for (std::uint64_t i : indices) h = splitmix64(h ^ splitmix64(i));
  return h;
}

}  // namespace chaoscast
