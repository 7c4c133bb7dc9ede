// Kernel regression: Gaussian-process mean, local linear regression and
// their one-dimensional (time) smoother variants with derivatives.
#pragma once

#include "chaoscast/core.hpp"

#include <algorithm>
#include <numeric>
#include <optional>
#include <span>

namespace chaoscast::numkit {

struct KernelSpec {
  double bandwidth = 1.0;                // h > 0
  double regularization = 0.0;           // nugget lambda >= 0
  std::optional<std::size_t> neighbors;  // k >= 1: restrict to the k nearest inputs

  void validate() const {
    if (!(bandwidth > 0.0) || !std::isfinite(bandwidth)) throw DomainError("kernel: bandwidth must be positive");
    if (!(regularization >= 0.0)) throw DomainError("kernel: regularization must be >= 0");
    if (neighbors && *neighbors == 0) throw DomainError("kernel: neighbors must be >= 1");
  }
};

namespace detail {

inline bool row_less(const Mat& x, const Mat& y, Eigen::Index a, Eigen::Index b) {
  for (Eigen::Index j = 0; j < x.cols(); ++j)
    if (x(a, j) != x(b, j)) return x(a, j) < x(b, j);
  for (Eigen::Index j = 0; j < y.cols(); ++j)
    if (y(a, j) != y(b, j)) return y(a, j) < y(b, j);
  return false;
}

/// Training data stored in a canonical (lexicographic) row order so that
/// every prediction is independent of the order the caller supplied.
struct CanonicalData {
  Mat x;
  Mat y;

  CanonicalData(const Eigen::Ref<const Mat>& train_x, const Eigen::Ref<const Mat>& train_y) {
    if (train_x.rows() == 0) throw DimensionError("kernel regression: empty training set");
    if (train_x.rows() != train_y.rows()) throw DimensionError("kernel regression: x/y row mismatch");
    const Mat tx = train_x, ty = train_y;
    std::vector<Eigen::Index> order(static_cast<std::size_t>(tx.rows()));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](Eigen::Index a, Eigen::Index b) { return row_less(tx, ty, a, b); });
    x.resize(tx.rows(), tx.cols());
    y.resize(ty.rows(), ty.cols());
    for (std::size_t i = 0; i < order.size(); ++i) {
      x.row(static_cast<Eigen::Index>(i)) = tx.row(order[i]);
      y.row(static_cast<Eigen::Index>(i)) = ty.row(order[i]);
    }
  }

  struct Neighbor {
    Eigen::Index index;
    double sq_dist;
  };

  double sq_dist(Eigen::Index i, const Eigen::Ref<const Vec>& q) const {
    double s = 0.0;
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const double e = x(i, j) - q(j);
      s += e * e;
    }
    return s;
  }

  /// The k nearest rows to `query` under the order (distance, canonical
  /// index), returned in increasing canonical index; all rows when k is
  /// absent. Rows are sorted by their first coordinate, so the search walks
  /// outwards from the query and stops once that coordinate alone exceeds
  /// the current k-th distance.
  std::vector<Neighbor> nearest(const Eigen::Ref<const Vec>& query, std::optional<std::size_t> k) const {
    const Eigen::Index n = x.rows();
    std::vector<Neighbor> out;
    if (!k || *k >= static_cast<std::size_t>(n)) {
      out.reserve(static_cast<std::size_t>(n));
      for (Eigen::Index i = 0; i < n; ++i) out.push_back({i, sq_dist(i, query)});
      return out;
    }
    auto worse = [](const Neighbor& a, const Neighbor& b) {
      return a.sq_dist < b.sq_dist || (a.sq_dist == b.sq_dist && a.index < b.index);
    };
    const double q0 = query(0);
    const double* c0 = x.col(0).data();
    Eigen::Index hi = std::lower_bound(c0, c0 + n, q0) - c0;
    Eigen::Index lo = hi - 1;
    out.reserve(*k + 1);
    while (lo >= 0 || hi < n) {
      const double gl = lo >= 0 ? q0 - c0[lo] : std::numeric_limits<double>::infinity();
      const double gh = hi < n ? c0[hi] - q0 : std::numeric_limits<double>::infinity();
      const bool take_low = gl <= gh;
      const double gap = take_low ? gl : gh;
      if (out.size() == *k && gap * gap > out.front().sq_dist) break;
      const Eigen::Index i = take_low ? lo-- : hi++;
      const Neighbor cand{i, sq_dist(i, query)};
      if (out.size() < *k) {
        out.push_back(cand);
        std::push_heap(out.begin(), out.end(), worse);
      } else if (worse(cand, out.front())) {
        std::pop_heap(out.begin(), out.end(), worse);
        out.back() = cand;
        std::push_heap(out.begin(), out.end(), worse);
      }
    }
    std::sort(out.begin(), out.end(), [](const Neighbor& a, const Neighbor& b) { return a.index < b.index; });
    return out;
  }
};

/// Cholesky solve of an SPD kernel system, retried once with a relative
/// diagonal jitter of 1e-12.
inline Mat spd_solve(Mat K, const Mat& rhs) {
  Eigen::LLT<Mat> llt(K);
  if (llt.info() != Eigen::Success) {
    K.diagonal().array() += 1e-12 * std::max(K.diagonal().mean(), 1e-300);
    llt.compute(K);
    if (llt.info() != Eigen::Success) throw ConditioningError("kernel system is not positive definite");
  }
  return llt.solve(rhs);
}

}  // namespace detail

/// Kernel-ridge (Gaussian-process mean) regressor with kernel
/// exp(-|x - x'|^2 / (2 h^2)), nugget lambda and zero prior mean.
class GpRegressor {
 public:
  GpRegressor(const Eigen::Ref<const Mat>& train_x, const Eigen::Ref<const Mat>& train_y, KernelSpec spec)
      : data_(train_x, train_y), spec_(spec) {
    spec_.validate();
    if (!spec_.neighbors || *spec_.neighbors >= static_cast<std::size_t>(data_.x.rows())) {
      const Mat K = gram(data_.x) + spec_.regularization * Mat::Identity(data_.x.rows(), data_.x.rows());
      global_alpha_ = detail::spd_solve(K, data_.y);
    }
  }

  Vec operator()(const Eigen::Ref<const Vec>& query) const {
    if (query.size() != data_.x.cols()) throw DimensionError("gp: query dimension mismatch");
    const double inv2h2 = 1.0 / (2.0 * spec_.bandwidth * spec_.bandwidth);
    if (global_alpha_) {
      const Vec kq = (-(data_.x.rowwise() - query.transpose()).rowwise().squaredNorm() * inv2h2).array().exp();
      return global_alpha_->transpose() * kq;
    }
    const auto nb = data_.nearest(query, spec_.neighbors);
    const auto k = static_cast<Eigen::Index>(nb.size());
    Mat lx(k, data_.x.cols()), ly(k, data_.y.cols());
    for (Eigen::Index i = 0; i < k; ++i) {
      lx.row(i) = data_.x.row(nb[static_cast<std::size_t>(i)].index);
      ly.row(i) = data_.y.row(nb[static_cast<std::size_t>(i)].index);
    }
    const Mat K = gram(lx) + spec_.regularization * Mat::Identity(k, k);
    const Mat alpha = detail::spd_solve(K, ly);
    const Vec kq = (-(lx.rowwise() - query.transpose()).rowwise().squaredNorm() * inv2h2).array().exp();
    return alpha.transpose() * kq;
  }

  Eigen::Index input_dim() const noexcept { return data_.x.cols(); }
  Eigen::Index output_dim() const noexcept { return data_.y.cols(); }

 private:
  Mat gram(const Mat& x) const {
    const double inv2h2 = 1.0 / (2.0 * spec_.bandwidth * spec_.bandwidth);
    const Eigen::Index n = x.rows();
    Mat K(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
      K(j, j) = 1.0;
      for (Eigen::Index i = j + 1; i < n; ++i) {
        const double v = std::exp(-(x.row(i) - x.row(j)).squaredNorm() * inv2h2);
        K(i, j) = v;
        K(j, i) = v;
      }
    }
    return K;
  }

  detail::CanonicalData data_;
  KernelSpec spec_;
  std::optional<Mat> global_alpha_;
};

inline Vec gp_predict(const Eigen::Ref<const Mat>& train_x, const Eigen::Ref<const Mat>& train_y,
                      const Eigen::Ref<const Vec>& query, const KernelSpec& spec) {
  return GpRegressor(train_x, train_y, spec)(query);
}

/// Local linear regressor: weighted least-squares affine fit over the k
/// nearest inputs with weights exp(-|x - x_i|^2 / h^2), evaluated at the
/// query. A singular local system falls back to the weighted mean.
class LocalLinearRegressor {
 public:
  LocalLinearRegressor(const Eigen::Ref<const Mat>& train_x, const Eigen::Ref<const Mat>& train_y,
                       double bandwidth, std::size_t neighbors)
      : data_(train_x, train_y), bandwidth_(bandwidth), neighbors_(neighbors) {
    if (!(bandwidth > 0.0)) throw DomainError("local linear: bandwidth must be positive");
    if (neighbors == 0) throw DomainError("local linear: neighbors must be >= 1");
  }

  Vec operator()(const Eigen::Ref<const Vec>& query) const {
    const Eigen::Index d = data_.x.cols();
    if (query.size() != d) throw DimensionError("local linear: query dimension mismatch");
    const auto nb = data_.nearest(query, neighbors_);
    double dmin = std::numeric_limits<double>::infinity();
    for (const auto& e : nb) dmin = std::min(dmin, e.sq_dist);
    // Weights are rescaled by exp(dmin / h^2); weighted LS is invariant to
    // a common factor, and this keeps far queries from underflowing.
    const double inv_h2 = 1.0 / (bandwidth_ * bandwidth_);
    Mat A = Mat::Zero(d + 1, d + 1);
    Mat B = Mat::Zero(d + 1, data_.y.cols());
    Vec z(d + 1);
    Vec wsum_y = Vec::Zero(data_.y.cols());
    double wsum = 0.0;
    for (const auto& e : nb) {
      const Eigen::Index i = e.index;
      const double w = std::exp(-(e.sq_dist - dmin) * inv_h2);
      z(0) = 1.0;
      z.tail(d) = data_.x.row(i).transpose() - query;
      A.noalias() += w * z * z.transpose();
      B.noalias() += w * z * data_.y.row(i);
      wsum += w;
      wsum_y += w * data_.y.row(i).transpose();
    }
    Eigen::LLT<Mat> llt(A);
    if (llt.info() == Eigen::Success && llt.rcond() > 1e-12) {
      const Mat beta = llt.solve(B);
      if (beta.allFinite()) return beta.row(0).transpose();
    }
    return wsum_y / wsum;
  }

 private:
  detail::CanonicalData data_;
  double bandwidth_;
  std::size_t neighbors_;
};

inline Vec local_linear_predict(const Eigen::Ref<const Mat>& train_x, const Eigen::Ref<const Mat>& train_y,
                                const Eigen::Ref<const Vec>& query, double bandwidth, std::size_t neighbors) {
  return LocalLinearRegressor(train_x, train_y, bandwidth, neighbors)(query);
}

/// Nearest-neighbour regressor: the response of the closest training input
/// (ties to the lexicographically smallest training row).
class NearestNeighborRegressor {
 public:
  NearestNeighborRegressor(const Eigen::Ref<const Mat>& train_x, const Eigen::Ref<const Mat>& train_y)
      : data_(train_x, train_y) {}

  Vec operator()(const Eigen::Ref<const Vec>& query) const {
    if (query.size() != data_.x.cols()) throw DimensionError("nearest neighbour: query dimension mismatch");
    return data_.y.row(data_.nearest(query, 1).front().index).transpose();
  }

  const Mat& inputs() const noexcept { return data_.x; }
  const Mat& responses() const noexcept { return data_.y; }

 private:
  detail::CanonicalData data_;
};

// ---------------------------------------------------------------------------
// Smoothers in time. Both return the estimated value and its time
// derivative on `grid`.

struct SmoothedPath {
  Mat value;       // grid x d
  Mat derivative;  // grid x d
};

/// Local linear regression in time with weights exp(-(t - t_i)^2 / h^2).
/// Data points beyond 6h contribute less than e^-36 and are skipped.
inline SmoothedPath local_linear_smooth(std::span<const double> times, const Eigen::Ref<const Mat>& values,
                                        std::span<const double> grid, double bandwidth) {
  if (!(bandwidth > 0.0)) throw DomainError("local linear smoother: bandwidth must be positive");
  if (times.size() < 2) throw DimensionError("local linear smoother: need at least two points");
  const Eigen::Index d = values.cols();
  SmoothedPath out{Mat(static_cast<Eigen::Index>(grid.size()), d), Mat(static_cast<Eigen::Index>(grid.size()), d)};
  const double inv_h2 = 1.0 / (bandwidth * bandwidth);
  const double reach = 6.0 * bandwidth;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const double t = grid[g];
    auto lo = static_cast<std::size_t>(std::lower_bound(times.begin(), times.end(), t - reach) - times.begin());
    auto hi = static_cast<std::size_t>(std::upper_bound(times.begin(), times.end(), t + reach) - times.begin());
    // Guarantee a few points even when the window is sparse.
    while (hi - lo < 3 && (lo > 0 || hi < times.size())) {
      if (lo > 0 && (hi >= times.size() || t - times[lo - 1] <= times[hi] - t)) --lo;
      else ++hi;
    }
    double s0 = 0, s1 = 0, s2 = 0;
    Vec t0 = Vec::Zero(d), t1 = Vec::Zero(d);
    for (std::size_t i = lo; i < hi; ++i) {
      const double dt = times[i] - t;
      const double w = std::exp(-dt * dt * inv_h2);
      s0 += w;
      s1 += w * dt;
      s2 += w * dt * dt;
      t0 += w * values.row(static_cast<Eigen::Index>(i)).transpose();
      t1 += (w * dt) * values.row(static_cast<Eigen::Index>(i)).transpose();
    }
    const double det = s0 * s2 - s1 * s1;
    const auto gi = static_cast<Eigen::Index>(g);
    if (s0 > 0.0 && det > 1e-12 * s0 * s2) {
      out.value.row(gi) = ((s2 * t0 - s1 * t1) / det).transpose();
      out.derivative.row(gi) = ((s0 * t1 - s1 * t0) / det).transpose();
    } else {
      // Weighted mean; if every weight underflowed use the nearest point.
      if (s0 > 0.0) out.value.row(gi) = (t0 / s0).transpose();
      else out.value.row(gi) = values.row(static_cast<Eigen::Index>(lo));
      out.derivative.row(gi).setZero();
    }
  }
  return out;
}

/// Gaussian-process smoother in time, kernel exp(-(t - t')^2 / (2 h^2)),
/// nugget mu, zero prior mean. The grid is processed in blocks; each block
/// conditions on the observations within 8h of it (kernel < e^-32 beyond).
inline SmoothedPath gp_smooth_time(std::span<const double> times, const Eigen::Ref<const Mat>& values,
                                   std::span<const double> grid, double bandwidth, double nugget,
                                   std::size_t block = 100) {
  if (!(bandwidth > 0.0)) throw DomainError("gp smoother: bandwidth must be positive");
  if (!(nugget >= 0.0)) throw DomainError("gp smoother: nugget must be >= 0");
  if (times.empty()) throw DimensionError("gp smoother: empty training set");
  const Eigen::Index d = values.cols();
  SmoothedPath out{Mat(static_cast<Eigen::Index>(grid.size()), d), Mat(static_cast<Eigen::Index>(grid.size()), d)};
  const double inv2h2 = 1.0 / (2.0 * bandwidth * bandwidth);
  const double inv_h2 = 1.0 / (bandwidth * bandwidth);
  const double reach = 8.0 * bandwidth;
  for (std::size_t b0 = 0; b0 < grid.size(); b0 += block) {
    const std::size_t b1 = std::min(grid.size(), b0 + block);
    const double glo = *std::min_element(grid.begin() + static_cast<std::ptrdiff_t>(b0), grid.begin() + static_cast<std::ptrdiff_t>(b1));
    const double ghi = *std::max_element(grid.begin() + static_cast<std::ptrdiff_t>(b0), grid.begin() + static_cast<std::ptrdiff_t>(b1));
    auto lo = static_cast<std::size_t>(std::lower_bound(times.begin(), times.end(), glo - reach) - times.begin());
    auto hi = static_cast<std::size_t>(std::upper_bound(times.begin(), times.end(), ghi + reach) - times.begin());
    if (hi <= lo) {
      lo = lo > 0 ? lo - 1 : 0;
      hi = std::min(times.size(), lo + 1);
    }
    const auto m = static_cast<Eigen::Index>(hi - lo);
    Mat K(m, m);
    for (Eigen::Index j = 0; j < m; ++j) {
      K(j, j) = 1.0 + nugget;
      for (Eigen::Index i = j + 1; i < m; ++i) {
        const double dt = times[lo + static_cast<std::size_t>(i)] - times[lo + static_cast<std::size_t>(j)];
        K(i, j) = K(j, i) = std::exp(-dt * dt * inv2h2);
      }
    }
    const Mat alpha = detail::spd_solve(std::move(K), values.middleRows(static_cast<Eigen::Index>(lo), m));
    for (std::size_t g = b0; g < b1; ++g) {
      Vec kv(m), dk(m);
      for (Eigen::Index i = 0; i < m; ++i) {
        const double dt = grid[g] - times[lo + static_cast<std::size_t>(i)];
        kv(i) = std::exp(-dt * dt * inv2h2);
        dk(i) = -dt * inv_h2 * kv(i);
      }
      out.value.row(static_cast<Eigen::Index>(g)) = kv.transpose() * alpha;
      out.derivative.row(static_cast<Eigen::Index>(g)) = dk.transpose() * alpha;
    }
  }
  return out;
}

}  // namespace chaoscast::numkit
