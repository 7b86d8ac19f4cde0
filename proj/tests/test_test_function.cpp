#include "membrane/rng.hpp"
#include "membrane/test_function.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace membrane;

TEST(Cutoff, CappedDistanceValues) {
  const auto s = Surface::point(0.0);
  EXPECT_DOUBLE_EQ(capped_distance(s, make_vec({0.5}), 1), 0.5);
  EXPECT_DOUBLE_EQ(capped_distance(s, make_vec({2.5}), 1), 0.0);
  // η₁(1.5) = 1/2 for the symmetric smoothstep.
  EXPECT_NEAR(capped_distance(s, make_vec({-1.5}), 1), 0.75, 1e-15);
}

TEST(Cutoff, SmoothAtBothEnds) {
  for (double m : {1.0, 3.0}) {
    const auto lo = smooth_cutoff(m, m), hi = smooth_cutoff(m + 1.0, m);
    EXPECT_DOUBLE_EQ(lo.value, 1.0);
    EXPECT_DOUBLE_EQ(hi.value, 0.0);
    EXPECT_NEAR(smooth_cutoff(m + 1e-7, m).d1, 0.0, 1e-12);
    EXPECT_NEAR(smooth_cutoff(m + 1.0 - 1e-7, m).d1, 0.0, 1e-12);
    EXPECT_NEAR(smooth_cutoff(m + 1e-7, m).d2, 0.0, 1e-5);
  }
}

TEST(Cutoff, DerivativesMatchDifferences) {
  const double h = 1e-5;
  for (double d : {1.1, 1.37, 1.5, 1.93}) {
    const auto c = smooth_cutoff(d, 1.0);
    EXPECT_NEAR(c.d1, (smooth_cutoff(d + h, 1.0).value - smooth_cutoff(d - h, 1.0).value) / (2 * h), 1e-8);
    EXPECT_NEAR(c.d2, (smooth_cutoff(d + h, 1.0).d1 - smooth_cutoff(d - h, 1.0).d1) / (2 * h), 1e-6);
  }
}

TEST(Cutoff, CappedDistanceIncreasesToDistance) {
  const auto s = Surface::sphere(make_vec({0.0, 0.0}), 1.0);
  Philox rng(11, 0);
  for (int k = 0; k < 400; ++k) {
    const Vec x = make_vec({20.0 * (rng.uniform() - 0.5), 20.0 * (rng.uniform() - 0.5)});
    const double d = s.unsigned_distance(x);
    for (int m = 1; m < 8; ++m) {
      const double a = capped_distance(s, x, m), b = capped_distance(s, x, m + 1);
      EXPECT_LE(a, b + 1e-15);
      EXPECT_LE(b, d + 1e-15);
    }
  }
}

TEST(TestFunctionTest, KOfCappedDistanceIsOneForIdentity) {
  for (double q : {-1.0, 0.0, 0.3, 1.0}) {
    const auto spec = DiffusionSpec::isotropic(2, 1.0, q);
    const auto s = Surface::sphere(make_vec({0.0, 0.0}), 1.0);
    const auto f = TestFunction::capped_distance(s, 3);
    for (const auto& z : s.quadrature().points) {
      EXPECT_NEAR(f.conormal_derivative(0.0, z, Side::exterior, spec, s), 1.0, 1e-14);
      EXPECT_NEAR(f.conormal_derivative(0.0, z, Side::interior, spec, s), -1.0, 1e-14);
      EXPECT_NEAR(f.K(0.0, z, spec, s), 1.0, 1e-14);
    }
  }
}

TEST(TestFunctionTest, KOfCappedDistanceIsConormalPairingInGeneral) {
  // For general b, Kφ = (bν, ν); only the b = I value is 1.
  const auto spec = DiffusionSpec::diagonal(make_vec({1.0, 4.0}), 0.2);
  const auto s = Surface::hyperplane(make_vec({0.0, 1.0}), 0.0);
  const auto f = TestFunction::capped_distance(s, 2);
  EXPECT_NEAR(f.K(0.0, make_vec({0.3, 0.0}), spec, s), 4.0, 1e-14);
}

TEST(TestFunctionTest, PolynomialDerivatives) {
  Mat H(2, 2);
  H << 2.0, 0.5, 0.5, 1.0;
  const auto f = TestFunction::polynomial(1.0, make_vec({0.3, -0.2}), H, TimeFactor::bump(0.0, 2.0));
  const Vec x = make_vec({0.4, -0.7});
  const double t = 0.8, h = 1e-5;
  const auto d = f.eval(t, x);
  EXPECT_NEAR(d.dt, (f.value(t + h, x) - f.value(t - h, x)) / (2 * h), 1e-7);
  for (int i = 0; i < 2; ++i) {
    Vec e = Vec::Zero(2);
    e(i) = h;
    EXPECT_NEAR(d.grad(i), (f.value(t, x + e) - f.value(t, x - e)) / (2 * h), 1e-7);
  }
  const auto spec = DiffusionSpec::isotropic(2, 1.0);
  const double beta = TimeFactor::bump(0.0, 2.0).eval(t).first;
  EXPECT_NEAR(f.generator(t, x, spec) - d.dt, 0.5 * beta * H.trace(), 1e-12);
}

TEST(TestFunctionTest, PolynomialIsBoundedByCap) {
  const auto f = TestFunction::polynomial(0.0, make_vec({1.0}), Mat::Identity(1, 1), {}, 4.0);
  EXPECT_DOUBLE_EQ(f.value(0.0, make_vec({10.0})), 0.0);
  EXPECT_DOUBLE_EQ(f.value(0.0, make_vec({2.0})), 4.0);
}

TEST(TestFunctionTest, TimeBumpVanishesOutsideSupport) {
  const auto tf = TimeFactor::bump(0.2, 0.8);
  EXPECT_EQ(tf.eval(0.1).first, 0.0);
  EXPECT_EQ(tf.eval(0.9).first, 0.0);
  EXPECT_DOUBLE_EQ(tf.eval(0.5).first, 1.0);
  EXPECT_THROW(TimeFactor::bump(1.0, 0.5), InvalidInput);
}

TEST(TestFunctionTest, TabulatedOneSidedSlopes) {
  // Interior samples of 2x, exterior samples of 3x on a 0.1 grid.
  const auto s = Surface::point(0.0);
  std::vector<double> in, out;
  for (int i = 0; i < 11; ++i) in.push_back(2.0 * (-1.0 + 0.1 * i));
  for (int i = 0; i < 11; ++i) out.push_back(3.0 * 0.1 * i);
  const auto f = TestFunction::tabulated(s, 0.1, in, out);
  const auto spec = DiffusionSpec::isotropic(1, 2.0, 0.5);
  const Vec z = make_vec({0.0});
  EXPECT_NEAR(f.conormal_derivative(0.0, z, Side::exterior, spec, s), 6.0, 1e-9);
  EXPECT_NEAR(f.conormal_derivative(0.0, z, Side::interior, spec, s), 4.0, 1e-9);
  EXPECT_NEAR(f.K(0.0, z, spec, s), 0.75 * 6.0 - 0.25 * 4.0, 1e-9);
  EXPECT_NEAR(f.value(0.0, make_vec({0.45})), 1.35, 1e-12);
  EXPECT_THROW(TestFunction::tabulated(s, 0.1, in, std::vector<double>(11, 1.0)), InvalidInput);
}
