// Interpolants that also return their analytic first derivative.
#pragma once

#include "chaoscast/core.hpp"

#include <algorithm>
#include <span>

namespace chaoscast::numkit {

namespace detail {

inline void check_knots(std::span<const double> t, std::size_t min_count, Eigen::Index rows, const char* who) {
  if (t.size() < min_count)
    throw DimensionError(std::string(who) + ": need at least " + std::to_string(min_count) + " knots");
  if (static_cast<Eigen::Index>(t.size()) != rows) throw DimensionError(std::string(who) + ": times/values mismatch");
  for (std::size_t i = 1; i < t.size(); ++i)
    if (!(t[i] > t[i - 1])) throw DomainError(std::string(who) + ": times must be strictly increasing");
}

/// Index i of the interval [t_i, t_{i+1}] containing `x`, clamped to the
/// first/last interval. A knot belongs to the interval on its left.
inline std::size_t left_interval(std::span<const double> t, double x) {
  auto it = std::lower_bound(t.begin(), t.end(), x);
  std::size_t i = static_cast<std::size_t>(it - t.begin());
  if (i == 0) return 0;
  return std::min(i - 1, t.size() - 2);
}

}  // namespace detail

/// Common interface of the interpolating solution estimates.
class InterpolantWithDerivative {
 public:
  virtual ~InterpolantWithDerivative() = default;
  virtual Vec value(double t) const = 0;
  virtual Vec derivative(double t) const = 0;
  virtual std::span<const double> knot_times() const = 0;
};

class PiecewiseLinear final : public InterpolantWithDerivative {
 public:
  PiecewiseLinear(std::vector<double> times, Mat values) : t_(std::move(times)), y_(std::move(values)) {
    detail::check_knots(t_, 2, y_.rows(), "piecewise_linear");
  }

  Vec value(double x) const override {
    const std::size_t i = detail::left_interval(t_, x);
    const auto r = static_cast<Eigen::Index>(i);
    const double w = (x - t_[i]) / (t_[i + 1] - t_[i]);
    if (w == 0.0) return y_.row(r).transpose();
    if (w == 1.0) return y_.row(r + 1).transpose();
    return ((1.0 - w) * y_.row(r) + w * y_.row(r + 1)).transpose();
  }

  Vec derivative(double x) const override {
    const std::size_t i = detail::left_interval(t_, x);
    const auto r = static_cast<Eigen::Index>(i);
    return ((y_.row(r + 1) - y_.row(r)) / (t_[i + 1] - t_[i])).transpose();
  }

  std::span<const double> knot_times() const override { return t_; }

 private:
  std::vector<double> t_;
  Mat y_;
};

/// C2 cubic spline with not-a-knot end conditions (third derivative
/// continuous across the second and the second-to-last knot).
class CubicSpline final : public InterpolantWithDerivative {
 public:
  CubicSpline(std::vector<double> times, Mat values) : t_(std::move(times)), y_(std::move(values)) {
    detail::check_knots(t_, 4, y_.rows(), "cubic_spline");
    solve_moments();
  }

  Vec value(double x) const override {
    const std::size_t i = detail::left_interval(t_, x);
    const auto r = static_cast<Eigen::Index>(i);
    const double h = t_[i + 1] - t_[i];
    const double a = t_[i + 1] - x, b = x - t_[i];
    if (b == 0.0) return y_.row(r).transpose();
    if (a == 0.0) return y_.row(r + 1).transpose();
    return (m_.row(r) * (a * a * a / (6.0 * h)) + m_.row(r + 1) * (b * b * b / (6.0 * h)) +
            (y_.row(r) / h - m_.row(r) * (h / 6.0)) * a + (y_.row(r + 1) / h - m_.row(r + 1) * (h / 6.0)) * b)
        .transpose();
  }

  Vec derivative(double x) const override {
    const std::size_t i = detail::left_interval(t_, x);
    const auto r = static_cast<Eigen::Index>(i);
    const double h = t_[i + 1] - t_[i];
    const double a = t_[i + 1] - x, b = x - t_[i];
    return (-m_.row(r) * (a * a / (2.0 * h)) + m_.row(r + 1) * (b * b / (2.0 * h)) + (y_.row(r + 1) - y_.row(r)) / h -
            (m_.row(r + 1) - m_.row(r)) * (h / 6.0))
        .transpose();
  }

  /// Second derivatives at the knots.
  const Mat& moments() const noexcept { return m_; }
  std::span<const double> knot_times() const override { return t_; }

 private:
  // Interior equations h_{i-1} M_{i-1} + 2(h_{i-1}+h_i) M_i + h_i M_{i+1} = r_i
  // with M_0 and M_{n-1} eliminated through the not-a-knot conditions,
  // leaving a diagonally dominant tridiagonal system in M_1..M_{n-2}.
  void solve_moments() {
    const std::size_t n = t_.size();
    const Eigen::Index d = y_.cols();
    std::vector<double> h(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) h[i] = t_[i + 1] - t_[i];
    const std::size_t k = n - 2;  // unknowns M_1..M_{n-2}
    std::vector<double> lower(k, 0.0), diag(k, 0.0), upper(k, 0.0);
    Mat rhs(static_cast<Eigen::Index>(k), d);
    for (std::size_t j = 0; j < k; ++j) {
      const std::size_t i = j + 1;
      lower[j] = h[i - 1];
      diag[j] = 2.0 * (h[i - 1] + h[i]);
      upper[j] = h[i];
      rhs.row(static_cast<Eigen::Index>(j)) =
          6.0 * ((y_.row(static_cast<Eigen::Index>(i + 1)) - y_.row(static_cast<Eigen::Index>(i))) / h[i] -
                 (y_.row(static_cast<Eigen::Index>(i)) - y_.row(static_cast<Eigen::Index>(i - 1))) / h[i - 1]);
    }
    {  // M_0 = ((h0 + h1) M_1 - h0 M_2) / h1
      const double h0 = h[0], h1 = h[1];
      diag[0] = (h0 + h1) * (h0 + 2.0 * h1) / h1;
      upper[0] = (h1 * h1 - h0 * h0) / h1;
      lower[0] = 0.0;
    }
    {  // M_{n-1} = ((a + b) M_{n-2} - b M_{n-3}) / a, a = h_{n-3}, b = h_{n-2}
      const double a = h[n - 3], b = h[n - 2];
      diag[k - 1] = (a + b) * (2.0 * a + b) / a;
      lower[k - 1] = (a * a - b * b) / a;
      upper[k - 1] = 0.0;
    }
    // Thomas algorithm.
    for (std::size_t j = 1; j < k; ++j) {
      const double w = lower[j] / diag[j - 1];
      diag[j] -= w * upper[j - 1];
      rhs.row(static_cast<Eigen::Index>(j)) -= w * rhs.row(static_cast<Eigen::Index>(j - 1));
    }
    Mat inner(static_cast<Eigen::Index>(k), d);
    inner.row(static_cast<Eigen::Index>(k - 1)) = rhs.row(static_cast<Eigen::Index>(k - 1)) / diag[k - 1];
    for (std::size_t j = k - 1; j-- > 0;) {
      inner.row(static_cast<Eigen::Index>(j)) =
          (rhs.row(static_cast<Eigen::Index>(j)) - upper[j] * inner.row(static_cast<Eigen::Index>(j + 1))) / diag[j];
    }
    m_.resize(static_cast<Eigen::Index>(n), d);
    m_.middleRows(1, static_cast<Eigen::Index>(k)) = inner;
    m_.row(0) = ((h[0] + h[1]) * inner.row(0) - h[0] * inner.row(1)) / h[1];
    const double a = h[n - 3], b = h[n - 2];
    m_.row(static_cast<Eigen::Index>(n - 1)) =
        ((a + b) * inner.row(static_cast<Eigen::Index>(k - 1)) - b * inner.row(static_cast<Eigen::Index>(k - 2))) / a;
  }

  std::vector<double> t_;
  Mat y_;
  Mat m_;
};

inline CubicSpline cubic_spline(std::vector<double> times, Mat values) {
  return CubicSpline(std::move(times), std::move(values));
}

inline PiecewiseLinear piecewise_linear(std::vector<double> times, Mat values) {
  return PiecewiseLinear(std::move(times), std::move(values));
}

}  // namespace chaoscast::numkit
