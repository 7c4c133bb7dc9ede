// Polynomial feature maps.
#pragma once

#include "chaoscast/core.hpp"

#include <optional>
#include <span>

namespace chaoscast::numkit {

inline std::size_t binomial(std::size_t n, std::size_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  std::size_t r = 1;
  for (std::size_t i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

/// All monomials of an `input_dim`-vector up to total degree `degree`.
///
/// Order is graded lexicographic: the constant 1 first, then degree 1
/// (x1, x2, ...), then degree 2 (x1^2, x1 x2, ..., x2^2, ...), and so on.
/// Within a degree, a monomial x_{i1} x_{i2} ... x_{ik} with i1 <= ... <= ik
/// is ordered lexicographically by its index sequence. When
/// `append_timestep` is set, the timestep enters as one extra linear
/// feature after all monomials.
class FeatureMap {
 public:
  FeatureMap(std::size_t input_dim, std::size_t degree, bool append_timestep = false)
      : input_dim_(input_dim), degree_(degree), append_timestep_(append_timestep) {
    if (input_dim == 0) throw DimensionError("FeatureMap: input_dim must be positive");
    parent_.push_back(0);
    var_.push_back(0);
    last_.push_back(0);
    std::size_t begin = 0, end = 1;  // monomials of the previous degree
    for (std::size_t d = 1; d <= degree; ++d) {
      for (std::size_t m = begin; m < end; ++m) {
        const std::size_t from = (d == 1) ? 0 : last_[m];
        for (std::size_t j = from; j < input_dim; ++j) {
          parent_.push_back(m);
          var_.push_back(j);
          last_.push_back(j);
        }
      }
      begin = end;
      end = parent_.size();
    }
  }

  std::size_t input_dim() const noexcept { return input_dim_; }
  std::size_t degree() const noexcept { return degree_; }
  bool append_timestep() const noexcept { return append_timestep_; }
  std::size_t monomial_count() const noexcept { return parent_.size(); }
  std::size_t output_dim() const noexcept { return parent_.size() + (append_timestep_ ? 1 : 0); }

  /// Exponent vector of monomial `m`.
  std::vector<int> exponents(std::size_t m) const {
    std::vector<int> e(input_dim_, 0);
    while (m != 0) {
      ++e[var_[m]];
      m = parent_[m];
    }
    return e;
  }

  template <class In, class Out>
  void eval_into(const In& x, std::optional<double> dt, Out&& out) const {
    if (static_cast<std::size_t>(x.size()) != input_dim_)
      throw DimensionError("FeatureMap: input dimension mismatch");
    if (append_timestep_ && !dt) throw DimensionError("FeatureMap: timestep required but missing");
    if (!append_timestep_ && dt) throw DimensionError("FeatureMap: timestep supplied but not configured");
    out[0] = 1.0;
    for (std::size_t m = 1; m < parent_.size(); ++m) out[m] = out[parent_[m]] * x[var_[m]];
    if (append_timestep_) out[parent_.size()] = *dt;
  }

  Vec operator()(const Eigen::Ref<const Vec>& x, std::optional<double> dt = std::nullopt) const {
    Vec out(output_dim());
    eval_into(x, dt, out);
    return out;
  }

  /// Row-wise features of `inputs`; `dts` must hold one timestep per row
  /// iff the map appends a timestep.
  Mat batch(const Eigen::Ref<const Mat>& inputs, std::span<const double> dts = {}) const {
    if (append_timestep_ && dts.size() != static_cast<std::size_t>(inputs.rows()))
      throw DimensionError("FeatureMap: one timestep per row required");
    Mat out(inputs.rows(), output_dim());
    Vec row(output_dim());
    for (Eigen::Index i = 0; i < inputs.rows(); ++i) {
      std::optional<double> dt;
      if (append_timestep_) dt = dts[static_cast<std::size_t>(i)];
      eval_into(inputs.row(i), dt, row);
      out.row(i) = row.transpose();
    }
    return out;
  }

 private:
  std::size_t input_dim_;
  std::size_t degree_;
  bool append_timestep_;
  std::vector<std::size_t> parent_;  // monomial m = monomial parent_[m] * x[var_[m]]
  std::vector<std::size_t> var_;
  std::vector<std::size_t> last_;    // largest variable index in monomial m
};

inline Vec polynomial_features(const Eigen::Ref<const Vec>& x, const FeatureMap& map,
                               std::optional<double> dt = std::nullopt) {
  return map(x, dt);
}

}  // namespace chaoscast::numkit
