#include "membrane/volterra.hpp"

#include <boost/math/quadrature/tanh_sinh.hpp>
#include <gtest/gtest.h>

#include <cmath>

using namespace membrane;

namespace {

// Independent reference: adaptive quadrature on the raw integrand.
double reference_integral(double p, double c, double s0, double s1) {
  auto f = [&](double s) { return s <= 0.0 ? 0.0 : std::exp(p * std::log(s) - c / s); };
  boost::math::quadrature::tanh_sinh<double> ts;
  return ts.integrate(f, s0, s1);
}

}  // namespace

class PowExpPrimitive : public ::testing::TestWithParam<double> {};

TEST_P(PowExpPrimitive, MatchesQuadrature) {
  const double p = GetParam();
  for (double c : {0.01, 0.3, 2.0}) {
    for (auto [s0, s1] : {std::pair{0.0, 0.5}, std::pair{0.2, 1.7}, std::pair{1e-3, 4.0}}) {
      const double exact = detail::powexp_primitive(p, c, s1) - detail::powexp_primitive(p, c, s0);
      const double ref = reference_integral(p, c, s0, s1);
      EXPECT_NEAR(exact, ref, 1e-10 * (1.0 + std::abs(ref))) << "p=" << p << " c=" << c;
    }
  }
}

INSTANTIATE_TEST_SUITE_P(HalfIntegers, PowExpPrimitive, ::testing::Values(-2.5, -1.5, -0.5, 0.5, 1.5, 2.5));

TEST(TimeKernel, ZeroDistanceTermsAndZeroCoefficients) {
  const TimeKernel k({{2.0, -0.5, 0.0}, {0.0, -1.5, 0.0}});
  EXPECT_EQ(k.terms().size(), 1u);
  EXPECT_NEAR(k.integral(0.0, 4.0), 8.0, 1e-14);
  EXPECT_NEAR(k.moment(0.0, 1.0), 4.0 / 3.0, 1e-14);
  EXPECT_THROW(TimeKernel({{1.0, -1.5, 0.0}}).integral(0.0, 1.0), InvalidInput);
}

TEST(Convolve, HalfOrderKernelsGiveConstant) {
  // (s^{-1/2} * s^{-1/2})(t) = π for every t.
  const TimeKernel k({{1.0, -0.5, 0.0}});
  for (double t : {0.1, 1.0, 3.0}) EXPECT_NEAR(convolve(k, k, t, 200), M_PI, 2e-3);
}

TEST(Convolve, HeatSemigroupOnHittingDensities) {
  // Hitting-time densities add: h_a * h_b = h_{a+b}, h_a(s) = a/√(2π s³) e^{-a²/2s}.
  auto h = [](double a) { return TimeKernel({{a / std::sqrt(2.0 * M_PI), -1.5, 0.5 * a * a}}); };
  for (double t : {0.5, 2.0}) {
    const double v = convolve(h(0.3), h(0.5), t, 400);
    EXPECT_NEAR(v, h(0.8)(t), 1e-4 * h(0.8)(t) + 1e-8);
  }
}

TEST(Convolve, ConvergesAtSecondOrder) {
  auto h = [](double a) { return TimeKernel({{a / std::sqrt(2.0 * M_PI), -1.5, 0.5 * a * a}}); };
  const double exact = h(1.0)(1.0);
  const double e1 = std::abs(convolve(h(0.4), h(0.6), 1.0, 20) - exact);
  const double e2 = std::abs(convolve(h(0.4), h(0.6), 1.0, 40) - exact);
  EXPECT_GT(e1 / e2, 3.0);
}

TEST(ConvolutionWeights, ReproduceLinearConvolutionExactly) {
  // U(s) = 1 + 2s is piecewise linear, so the weights are exact.
  const TimeKernel k({{1.0, -0.5, 0.1}});
  const double dt = 0.05;
  const std::size_t n = 30;
  const ConvolutionWeights W(k, dt, n);
  std::vector<double> U(n + 1);
  for (std::size_t i = 0; i <= n; ++i) U[i] = 1.0 + 2.0 * dt * static_cast<double>(i);
  const double T = dt * n;
  // ∫₀ᵀ U(T - s) K(s) ds = (1 + 2T) ∫K - 2 ∫ s K.
  const double ref = (1.0 + 2.0 * T) * k.integral(0.0, T) - 2.0 * k.moment(0.0, T);
  EXPECT_NEAR(W.apply(U, n), ref, 1e-13);
  EXPECT_NEAR(W.apply_reversed(U, n), ref, 1e-13);
  // The anticipating form at step 0 is the same integral read forwards.
  std::vector<double> Urev(U.rbegin(), U.rend());
  EXPECT_NEAR(W.apply_forward(Urev, 0), ref, 1e-13);
}

TEST(VolterraMarch, AbelEquationSolution) {
  // U(t) = 1 - λ ∫₀ᵗ U(t-s) s^{-1/2} ds has U(t) = e^{λ²π t} erfc(λ√(π t)).
  const double lam = 0.7, dt = 1e-3;
  const std::size_t N = 1001;
  const TimeKernel k({{1.0, -0.5, 0.0}});
  const ConvolutionWeights W(k, dt, N);
  const auto U = volterra_march(std::vector<double>(N, 1.0), 1.0, -lam, W);
  for (std::size_t n : {100u, 500u, 1000u}) {
    const double t = dt * static_cast<double>(n);
    const double a = lam * std::sqrt(M_PI * t);
    EXPECT_NEAR(U[n], std::exp(a * a) * std::erfc(a), 2e-4) << "t=" << t;
  }
}

TEST(VolterraMarch, RejectsShortWeights) {
  const ConvolutionWeights W(TimeKernel({{1.0, -0.5, 0.0}}), 0.1, 3);
  EXPECT_THROW(volterra_march(std::vector<double>(10, 1.0), 0.0, 1.0, W), InvalidInput);
}
