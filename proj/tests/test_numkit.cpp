#include "chaoscast/numkit.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <functional>
#include <numeric>
#include <random>

using namespace chaoscast;
using namespace chaoscast::numkit;

namespace {

Mat random_mat(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Mat m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = n(rng);
  return m;
}

// All exponent vectors of total degree <= deg, ordered by degree and then by
// the sorted variable-index sequence.
std::vector<std::vector<int>> brute_monomials(int d, int deg) {
  std::vector<std::vector<int>> all;
  std::vector<int> e(static_cast<std::size_t>(d), 0);
  std::function<void(int, int)> rec = [&](int var, int left) {
    if (var == d) {
      all.push_back(e);
      return;
    }
    for (int k = 0; k <= left; ++k) {
      e[static_cast<std::size_t>(var)] = k;
      rec(var + 1, left - k);
    }
    e[static_cast<std::size_t>(var)] = 0;
  };
  rec(0, deg);
  auto seq = [](const std::vector<int>& ex) {
    std::vector<int> s;
    for (std::size_t v = 0; v < ex.size(); ++v)
      for (int k = 0; k < ex[v]; ++k) s.push_back(static_cast<int>(v));
    return s;
  };
  std::sort(all.begin(), all.end(), [&](const auto& a, const auto& b) {
    const auto sa = seq(a), sb = seq(b);
    if (sa.size() != sb.size()) return sa.size() < sb.size();
    return sa < sb;
  });
  return all;
}

}  // namespace

// ---------------------------------------------------------------------------
// Polynomial features

TEST(PolynomialFeatures, ScalarDegreeTwo) {
  FeatureMap map(1, 2);
  Vec x(1);
  x << 2.0;
  const Vec f = polynomial_features(x, map);
  ASSERT_EQ(f.size(), 3);
  EXPECT_EQ(f(0), 1.0);
  EXPECT_EQ(f(1), 2.0);
  EXPECT_EQ(f(2), 4.0);
}

TEST(PolynomialFeatures, DegreeZeroIsConstant) {
  FeatureMap map(3, 0);
  const Vec f = map(Vec::Constant(3, 7.0));
  ASSERT_EQ(f.size(), 1);
  EXPECT_EQ(f(0), 1.0);
}

TEST(PolynomialFeatures, CountMatchesEnumeration) {
  for (int d = 1; d <= 6; ++d)
    for (int l = 0; l <= 8; ++l) {
      const auto brute = brute_monomials(d, l);
      EXPECT_EQ(FeatureMap(static_cast<std::size_t>(d), static_cast<std::size_t>(l)).output_dim(), brute.size());
      EXPECT_EQ(binomial(static_cast<std::size_t>(d + l), static_cast<std::size_t>(l)), brute.size());
      EXPECT_EQ(FeatureMap(static_cast<std::size_t>(d), static_cast<std::size_t>(l), true).output_dim(),
                brute.size() + 1);
    }
  EXPECT_EQ(FeatureMap(3, 2).output_dim(), 10u);
}

TEST(PolynomialFeatures, GradedLexOrderAndValues) {
  std::mt19937_64 rng(3);
  for (int d = 1; d <= 4; ++d)
    for (int l = 0; l <= 5; ++l) {
      FeatureMap map(static_cast<std::size_t>(d), static_cast<std::size_t>(l));
      const auto brute = brute_monomials(d, l);
      const Vec x = random_mat(rng, d, 1).col(0);
      const Vec f = map(x);
      for (std::size_t m = 0; m < brute.size(); ++m) {
        ASSERT_EQ(map.exponents(m), brute[m]) << "d=" << d << " l=" << l << " m=" << m;
        double v = 1.0;
        for (int j = 0; j < d; ++j) v *= std::pow(x(j), brute[m][static_cast<std::size_t>(j)]);
        EXPECT_NEAR(f(static_cast<Eigen::Index>(m)), v, 1e-12 * std::max(1.0, std::abs(v)));
      }
    }
}

TEST(PolynomialFeatures, TimestepAppendedLast) {
  FeatureMap map(2, 1, true);
  const Vec f = map(Vec::Ones(2), 0.25);
  ASSERT_EQ(f.size(), 4);
  EXPECT_EQ(f(3), 0.25);
  EXPECT_THROW(map(Vec::Ones(2)), DimensionError);
  EXPECT_THROW(FeatureMap(2, 1)(Vec::Ones(2), 0.1), DimensionError);
  EXPECT_THROW(FeatureMap(2, 1)(Vec::Ones(3)), DimensionError);
}

// ---------------------------------------------------------------------------
// Ridge

TEST(Ridge, InterpolatesIdentity) {
  Mat Y(2, 1);
  Y << 1, 2;
  const RidgeModel m = ridge_fit(Mat::Identity(2, 2), Y, 0.0);
  EXPECT_NEAR(m.weights(0, 0), 1.0, 1e-14);
  EXPECT_NEAR(m.weights(1, 0), 2.0, 1e-14);
}

TEST(Ridge, ClosedFormFourThirds) {
  Mat X(2, 1), Y(2, 1);
  X << 1, 1;
  Y << 2, 2;
  EXPECT_NEAR(ridge_fit(X, Y, 1.0).weights(0, 0), 4.0 / 3.0, 1e-10);
}

TEST(Ridge, ShrinkageLimit) {
  std::mt19937_64 rng(1);
  const Mat X = random_mat(rng, 40, 5), Y = random_mat(rng, 40, 2);
  EXPECT_LT(ridge_fit(X, Y, 1e12).weights.norm(), 1e-6 * Y.norm());
}

TEST(Ridge, MatchesAugmentedQrOracle) {
  std::mt19937_64 rng(2);
  for (double lambda : {0.0, 1e-8, 1e-3, 1.0, 50.0}) {
    const Mat X = random_mat(rng, 60, 7), Y = random_mat(rng, 60, 3);
    // Independent route: least squares on [X; sqrt(lambda) I] by Householder QR.
    Mat Xa(67, 7), Ya = Mat::Zero(67, 3);
    Xa << X, std::sqrt(lambda) * Mat::Identity(7, 7);
    Ya.topRows(60) = Y;
    const Mat oracle = Xa.colPivHouseholderQr().solve(Ya);
    const Mat w = ridge_fit(X, Y, lambda).weights;
    EXPECT_LT((w - oracle).norm(), 1e-10 * std::max(1.0, oracle.norm())) << "lambda=" << lambda;
  }
}

TEST(Ridge, ResidualOrthogonalAtZeroPenalty) {
  std::mt19937_64 rng(4);
  for (int rep = 0; rep < 20; ++rep) {
    const Mat X = random_mat(rng, 50, 6, 3.0), Y = random_mat(rng, 50, 2);
    const Mat W = ridge_fit(X, Y, 0.0).weights;
    const Mat g = X.transpose() * (X * W - Y);
    EXPECT_LT(g.norm(), 1e-6 * X.norm() * Y.norm());
  }
}

TEST(Ridge, SingularUnpenalizedSystemThrows) {
  std::mt19937_64 rng(5);
  Mat X = random_mat(rng, 20, 3);
  X.col(2) = X.col(0) + X.col(1);
  const Mat Y = random_mat(rng, 20, 1);
  EXPECT_THROW(ridge_fit(X, Y, 0.0), ConditioningError);
  EXPECT_NO_THROW(ridge_fit(X, Y, 1e-6));
}

TEST(Ridge, RejectsBadInput) {
  Mat X = Mat::Ones(3, 2), Y = Mat::Ones(2, 1);
  EXPECT_THROW(ridge_fit(X, Y, 0.1), DimensionError);
  Mat Z = Mat::Ones(3, 1);
  X(0, 0) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(ridge_fit(X, Z, 0.1), DomainError);
  EXPECT_THROW(ridge_fit(Mat::Ones(3, 1), Z, -1.0), DomainError);
}

// ---------------------------------------------------------------------------
// Gaussian process

TEST(GaussianProcess, SinglePointInterpolates) {
  Mat x(1, 2), y(1, 3);
  x << 0.3, -0.2;
  y << 1, 2, 3;
  const Vec p = gp_predict(x, y, x.row(0).transpose(), KernelSpec{0.5, 0.0, {}});
  EXPECT_NEAR((p - y.row(0).transpose()).norm(), 0.0, 1e-14);
}

TEST(GaussianProcess, RevertsToZeroFarAway) {
  std::mt19937_64 rng(6);
  const Mat x = random_mat(rng, 30, 2), y = random_mat(rng, 30, 2);
  EXPECT_LT(gp_predict(x, y, Vec::Constant(2, 50.0), KernelSpec{0.5, 1e-3, {}}).norm(), 1e-6);
}

TEST(GaussianProcess, TwoPointClosedForm) {
  Mat x(2, 1), y(2, 1);
  x << 0.0, 1.0;
  y << 1.0, 3.0;
  const double h = 1.0, lam = 0.1, q = 0.4;
  // (K + lam I) alpha = y with K = [[1, k],[k, 1]], k = exp(-1/2).
  const double k = std::exp(-0.5);
  const double a = 1.0 + lam, det = a * a - k * k;
  const double alpha0 = (a * 1.0 - k * 3.0) / det, alpha1 = (a * 3.0 - k * 1.0) / det;
  const double expected = std::exp(-q * q / (2 * h * h)) * alpha0 + std::exp(-(q - 1) * (q - 1) / (2 * h * h)) * alpha1;
  Vec query(1);
  query << q;
  EXPECT_NEAR(gp_predict(x, y, query, KernelSpec{h, lam, {}})(0), expected, 1e-12);
  // A neighbour limit covering all points is the same predictor.
  EXPECT_NEAR(gp_predict(x, y, query, KernelSpec{h, lam, 2})(0), expected, 1e-12);
}

TEST(GaussianProcess, PermutationInvariantExactly) {
  std::mt19937_64 rng(7);
  const Mat x = random_mat(rng, 80, 3), y = random_mat(rng, 80, 3);
  std::vector<Eigen::Index> perm(80);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  Mat xp(80, 3), yp(80, 3);
  for (Eigen::Index i = 0; i < 80; ++i) {
    xp.row(i) = x.row(perm[static_cast<std::size_t>(i)]);
    yp.row(i) = y.row(perm[static_cast<std::size_t>(i)]);
  }
  for (auto k : {std::optional<std::size_t>{}, std::optional<std::size_t>{10}}) {
    const KernelSpec spec{0.7, 1e-4, k};
    for (int rep = 0; rep < 10; ++rep) {
      const Vec q = random_mat(rng, 3, 1).col(0);
      const Vec a = gp_predict(x, y, q, spec), b = gp_predict(xp, yp, q, spec);
      for (Eigen::Index j = 0; j < 3; ++j) EXPECT_EQ(a(j), b(j));
      const Vec c = local_linear_predict(x, y, q, 0.7, 15), d = local_linear_predict(xp, yp, q, 0.7, 15);
      for (Eigen::Index j = 0; j < 3; ++j) EXPECT_EQ(c(j), d(j));
    }
  }
}

TEST(GaussianProcess, NeighbourLimitUsesNearestOnly) {
  // Two clusters far apart: with k=2 the far cluster cannot influence the
  // prediction, so it equals the GP on the near cluster alone.
  Mat x(4, 1), y(4, 1);
  x << 0.0, 0.1, 5.0, 5.1;
  y << 1.0, 2.0, 100.0, 200.0;
  Vec q(1);
  q << 0.05;
  const KernelSpec spec{10.0, 1e-2, 2};
  const Vec near = gp_predict(x.topRows(2), y.topRows(2), q, KernelSpec{10.0, 1e-2, {}});
  EXPECT_NEAR(gp_predict(x, y, q, spec)(0), near(0), 1e-12);
  EXPECT_THROW(gp_predict(Mat(0, 1), Mat(0, 1), q, spec), Error);
}

// ---------------------------------------------------------------------------
// Local linear regression

TEST(LocalLinear, ReproducesAffineData) {
  std::mt19937_64 rng(8);
  const Mat x = random_mat(rng, 40, 3);
  const Mat A = random_mat(rng, 3, 2);
  const Vec b = random_mat(rng, 2, 1).col(0);
  Mat y = x * A;
  y.rowwise() += b.transpose();
  const Vec q = random_mat(rng, 3, 1).col(0);
  const Vec expected = A.transpose() * q + b;
  EXPECT_LT((local_linear_predict(x, y, q, 0.8, 20) - expected).norm(), 1e-8);
}

TEST(LocalLinear, ConstantTargets) {
  std::mt19937_64 rng(9);
  const Mat x = random_mat(rng, 25, 2);
  const Mat y = Mat::Constant(25, 2, 3.5);
  const Vec p = local_linear_predict(x, y, Vec::Zero(2), 0.5, 10);
  EXPECT_NEAR(p(0), 3.5, 1e-10);
  EXPECT_NEAR(p(1), 3.5, 1e-10);
}

TEST(LocalLinear, ThreePointCramerOracle) {
  // Three non-collinear points in 2-D: the weighted affine fit interpolates,
  // so solve the 3x3 interpolation system by Cramer's rule.
  Mat x(3, 2), y(3, 1);
  x << 0.0, 0.0, 1.0, 0.2, 0.3, 1.0;
  y << 1.0, 2.0, -1.0;
  const double qx = 0.4, qy = 0.5;
  auto det3 = [](double a, double b, double c, double d, double e, double f, double g, double h, double i) {
    return a * (e * i - f * h) - b * (d * i - f * g) + c * (d * h - e * g);
  };
  // Rows (1, x1, x2); coefficients (c0, c1, c2).
  const double D = det3(1, 0, 0, 1, 1, 0.2, 1, 0.3, 1);
  const double c0 = det3(1, 0, 0, 2, 1, 0.2, -1, 0.3, 1) / D;
  const double c1 = det3(1, 1, 0, 1, 2, 0.2, 1, -1, 1) / D;
  const double c2 = det3(1, 0, 1, 1, 1, 2, 1, 0.3, -1) / D;
  Vec q(2);
  q << qx, qy;
  EXPECT_NEAR(local_linear_predict(x, y, q, 0.6, 3)(0), c0 + c1 * qx + c2 * qy, 1e-10);
}

TEST(LocalLinear, CollinearInputsFallBackToWeightedMean) {
  // Collinear inputs leave the affine system singular in 2-D.
  Mat x(3, 2), y(3, 1);
  x << 0.0, 0.0, 1.0, 1.0, 2.0, 2.0;
  y << 1.0, 4.0, 2.0;
  Vec q(2);
  q << 0.3, 1.2;
  const double h = 1.5;
  double ws = 0.0, wy = 0.0;
  for (int i = 0; i < 3; ++i) {
    const double d2 = (x.row(i).transpose() - q).squaredNorm();
    const double w = std::exp(-d2 / (h * h));
    ws += w;
    wy += w * y(i, 0);
  }
  EXPECT_NEAR(local_linear_predict(x, y, q, h, 3)(0), wy / ws, 1e-12);
}

// ---------------------------------------------------------------------------
// Interpolants

TEST(CubicSpline, LinearDataHasConstantSlope) {
  std::vector<double> t{0.0, 0.3, 0.5, 1.2, 2.0};
  Mat v(5, 1);
  for (int i = 0; i < 5; ++i) v(i, 0) = 3.0 * t[static_cast<std::size_t>(i)] - 1.0;
  const auto s = cubic_spline(t, v);
  for (double q : {0.0, 0.1, 0.3, 0.77, 1.9, 2.0}) EXPECT_NEAR(s.derivative(q)(0), 3.0, 1e-12);
}

TEST(CubicSpline, SquareDerivativeAtMidKnot) {
  std::vector<double> t(11);
  Mat v(11, 1);
  for (int i = 0; i <= 10; ++i) {
    t[static_cast<std::size_t>(i)] = i / 10.0;
    v(i, 0) = t[static_cast<std::size_t>(i)] * t[static_cast<std::size_t>(i)];
  }
  EXPECT_NEAR(cubic_spline(t, v).derivative(0.5)(0), 1.0, 1e-6);
}

TEST(CubicSpline, KnotValuesExact) {
  std::mt19937_64 rng(10);
  std::vector<double> t{0.0, 0.4, 0.45, 1.0, 3.0, 3.1};
  const Mat v = random_mat(rng, 6, 3);
  const auto s = cubic_spline(t, v);
  for (std::size_t i = 0; i < t.size(); ++i) {
    const Vec got = s.value(t[i]);
    for (Eigen::Index j = 0; j < 3; ++j) EXPECT_EQ(got(j), v(static_cast<Eigen::Index>(i), j));
  }
}

TEST(CubicSpline, ReproducesCubicsOnRandomGrids) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.05, 1.0);
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t n = 4 + static_cast<std::size_t>(rep % 9);
    std::vector<double> t(n);
    t[0] = -1.0;
    for (std::size_t i = 1; i < n; ++i) t[i] = t[i - 1] + u(rng);
    const Vec c = random_mat(rng, 4, 1).col(0);
    auto f = [&](double x) { return c(0) + x * (c(1) + x * (c(2) + x * c(3))); };
    auto df = [&](double x) { return c(1) + x * (2 * c(2) + 3 * x * c(3)); };
    Mat v(static_cast<Eigen::Index>(n), 1);
    for (std::size_t i = 0; i < n; ++i) v(static_cast<Eigen::Index>(i), 0) = f(t[i]);
    const auto s = cubic_spline(t, v);
    for (int k = 0; k <= 40; ++k) {
      const double q = t.front() + (t.back() - t.front()) * k / 40.0;
      const double scale = 1.0 + std::abs(f(q)) + std::abs(df(q));
      EXPECT_NEAR(s.value(q)(0), f(q), 1e-9 * scale);
      EXPECT_NEAR(s.derivative(q)(0), df(q), 1e-8 * scale);
    }
  }
}

TEST(CubicSpline, RejectsBadKnots) {
  EXPECT_THROW(cubic_spline({0, 1, 2}, Mat::Zero(3, 1)), DimensionError);
  EXPECT_THROW(cubic_spline({0, 1, 1, 2}, Mat::Zero(4, 1)), DomainError);
  EXPECT_THROW(cubic_spline({0, 2, 1, 3}, Mat::Zero(4, 1)), DomainError);
}

TEST(PiecewiseLinear, MidpointSlopeAndKnots) {
  std::vector<double> t{0.0, 1.0, 3.0};
  Mat v(3, 1);
  v << 1.0, 3.0, -1.0;
  const auto p = piecewise_linear(t, v);
  EXPECT_DOUBLE_EQ(p.value(0.5)(0), 2.0);
  EXPECT_DOUBLE_EQ(p.value(2.0)(0), 1.0);
  EXPECT_DOUBLE_EQ(p.derivative(0.3)(0), 2.0);
  EXPECT_DOUBLE_EQ(p.derivative(2.5)(0), -2.0);
  EXPECT_EQ(p.value(1.0)(0), 3.0);
  EXPECT_EQ(p.value(3.0)(0), -1.0);
  EXPECT_DOUBLE_EQ(p.derivative(1.0)(0), 2.0);  // left segment at a knot
  EXPECT_THROW(piecewise_linear({0, 0}, Mat::Zero(2, 1)), DomainError);
}

// ---------------------------------------------------------------------------
// STLSQ

TEST(Stlsq, RecoversPlantedSparsePolynomial) {
  std::mt19937_64 rng(12);
  const FeatureMap map(2, 3);
  for (int rep = 0; rep < 10; ++rep) {
    const Mat x = random_mat(rng, 200, 2);
    const Mat X = map.batch(x);
    std::uniform_int_distribution<std::size_t> pick(0, map.output_dim() - 1);
    std::size_t a = pick(rng), b = pick(rng);
    while (b == a) b = pick(rng);
    std::uniform_real_distribution<double> mag(0.5, 2.0);
    Vec w = Vec::Zero(static_cast<Eigen::Index>(map.output_dim()));
    w(static_cast<Eigen::Index>(a)) = mag(rng);
    w(static_cast<Eigen::Index>(b)) = -mag(rng);
    const Mat Y = X * w;
    const SparseModel m = stlsq(X, Y, 0.1, 100);
    EXPECT_FALSE(m.all_zero);
    for (Eigen::Index j = 0; j < w.size(); ++j) {
      EXPECT_EQ(m.active[0][static_cast<std::size_t>(j)], w(j) != 0.0);
      EXPECT_NEAR(m.weights(j, 0), w(j), 1e-6);
    }
    // Small noise keeps the support.
    const Mat Yn = Y + random_mat(rng, 200, 1, 1e-3);
    const SparseModel mn = stlsq(X, Yn, 0.1, 100);
    for (Eigen::Index j = 0; j < w.size(); ++j) EXPECT_EQ(mn.active[0][static_cast<std::size_t>(j)], w(j) != 0.0);
  }
}

TEST(Stlsq, ZeroThresholdIsLeastSquares) {
  std::mt19937_64 rng(13);
  const Mat X = random_mat(rng, 50, 6), Y = random_mat(rng, 50, 2);
  const SparseModel m = stlsq(X, Y, 0.0, 100);
  const Mat W = ridge_fit(X, Y, 0.0).weights;
  EXPECT_EQ(m.weights, W);
  EXPECT_EQ(m.iterations_run, 1u);
}

TEST(Stlsq, LargeThresholdGivesZeroModel) {
  std::mt19937_64 rng(14);
  const Mat X = random_mat(rng, 50, 4), Y = random_mat(rng, 50, 1);
  const double big = ridge_fit(X, Y, 0.0).weights.cwiseAbs().maxCoeff() * 1.01;
  const SparseModel m = stlsq(X, Y, big, 100);
  EXPECT_TRUE(m.all_zero);
  EXPECT_TRUE(m.weights.isZero(0.0));
}

TEST(Stlsq, ActiveSetNonIncreasing) {
  std::mt19937_64 rng(15);
  for (int rep = 0; rep < 20; ++rep) {
    const Mat X = random_mat(rng, 80, 10), Y = random_mat(rng, 80, 3);
    const SparseModel m = stlsq(X, Y, 0.05 + 0.02 * rep, 100);
    for (std::size_t i = 1; i < m.active_history.size(); ++i)
      EXPECT_LE(m.active_history[i], m.active_history[i - 1]);
  }
}

// ---------------------------------------------------------------------------
// RK4

TEST(Rk4, ZeroFieldIsConstant) {
  Vec u0(2);
  u0 << 1.5, -2.0;
  const TimeSeries ts = rk4_integrate([](const Vec& u) { return Vec::Zero(u.size()); }, u0, 0.0, 0.1, 10);
  ASSERT_EQ(ts.size(), 11u);
  for (std::size_t i = 0; i < ts.size(); ++i) EXPECT_EQ(ts.state(i), u0);
  EXPECT_DOUBLE_EQ(ts.times.back(), 1.0);
}

TEST(Rk4, ExponentialGrowthMatchesE) {
  const TimeSeries ts = rk4_integrate([](const Vec& u) { return u; }, Vec::Ones(1), 0.0, 1e-2, 100);
  EXPECT_LT(std::abs(ts.states(100, 0) - std::exp(1.0)), 1e-8);
}

TEST(Rk4, EmpiricalOrderAtLeastFour) {
  auto err = [](double dt, long steps) {
    const TimeSeries ts = rk4_integrate([](const Vec& u) { return u; }, Vec::Ones(1), 0.0, dt, steps);
    return std::abs(ts.states(steps, 0) - std::exp(1.0));
  };
  for (long n : {10L, 20L, 40L}) {
    const double ratio = std::log2(err(1.0 / n, n) / err(0.5 / n, 2 * n));
    EXPECT_GE(ratio, 3.9) << "n=" << n;
  }
  // Nonlinear smooth field: pendulum, reference from a very fine run.
  auto pend = [](const Vec& u) {
    Vec d(2);
    d << u(1), -std::sin(u(0));
    return d;
  };
  Vec u0(2);
  u0 << 1.0, 0.0;
  const Vec ref = rk4_integrate(pend, u0, 0.0, 1.0 / 6400, 6400).state(6400);
  const double e1 = (rk4_integrate(pend, u0, 0.0, 1.0 / 20, 20).state(20) - ref).norm();
  const double e2 = (rk4_integrate(pend, u0, 0.0, 1.0 / 40, 40).state(40) - ref).norm();
  EXPECT_GE(std::log2(e1 / e2), 3.9);
}

TEST(Rk4, DivergenceCarriesStepIndex) {
  // A steep quadratic field overflows within a few steps.
  try {
    rk4_integrate([](const Vec& u) { return Vec(u.cwiseAbs2() * 1e200); }, Vec::Ones(1), 0.0, 0.1, 1000);
    FAIL() << "expected DivergenceError";
  } catch (const DivergenceError& e) {
    EXPECT_GE(e.step(), 1);
    EXPECT_LE(e.step(), 1000);
  }
  EXPECT_THROW(rk4_integrate([](const Vec& u) { return u; }, Vec::Ones(1), 0.0, 0.0, 10), DomainError);
}

TEST(NearestNeighbours, PrunedSearchMatchesBruteForce) {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Index n = 50 + 40 * trial;
    Mat x = random_mat(rng, n, 3);
    // Duplicate rows exercise the index tie-break.
    x.row(n - 1) = x.row(0);
    detail::CanonicalData data(x, Mat::Zero(n, 1));
    const Vec q = random_mat(rng, 3, 1).col(0);
    const std::size_t k = 1 + static_cast<std::size_t>(trial) * 3;
    std::vector<std::pair<double, Eigen::Index>> all;
    for (Eigen::Index i = 0; i < n; ++i) all.emplace_back((data.x.row(i).transpose() - q).squaredNorm(), i);
    std::sort(all.begin(), all.end());
    std::vector<Eigen::Index> expect;
    for (std::size_t i = 0; i < k; ++i) expect.push_back(all[i].second);
    std::sort(expect.begin(), expect.end());
    std::vector<Eigen::Index> got;
    for (const auto& e : data.nearest(q, k)) got.push_back(e.index);
    EXPECT_EQ(got, expect) << trial;
  }
}

TEST(NearestNeighbours, RegressorReturnsNearestResponse) {
  Mat x(3, 1), y(3, 1);
  x << 0, 1, 3;
  y << 10, 11, 13;
  NearestNeighborRegressor nn(x, y);
  EXPECT_EQ(nn(Vec::Constant(1, 0.4))(0), 10);
  EXPECT_EQ(nn(Vec::Constant(1, 2.1))(0), 13);
}
