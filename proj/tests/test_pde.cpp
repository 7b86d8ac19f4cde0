#include "membrane/pde.hpp"

#include <boost/math/quadrature/tanh_sinh.hpp>
#include <gtest/gtest.h>

#include <cmath>

using namespace membrane;

namespace {

Grid1D line_grid(double dt = 1e-4, double theta = 0.5, double t_end = 1.0) {
  return Grid1D::line(0.0, 8.0, 0.01, dt, t_end, theta);
}

}  // namespace

TEST(InterfaceHeat, ConstantsArePreserved) {
  for (double q : {-0.7, 0.0, 0.6}) {
    for (double r : {0.0, 1.0}) {
      const auto u = solve_interface_heat(DiffusionSpec::isotropic(1, 1.0, q, r), Surface::point(0.0),
                                          [](double) { return 2.5; }, line_grid(1e-3, 1.0, 0.5));
      EXPECT_NEAR(u.min_value(), 2.5, 1e-11);
      EXPECT_NEAR(u.max_value(), 2.5, 1e-11);
    }
  }
}

TEST(InterfaceHeat, TransparentMembraneMatchesGaussian) {
  // q = r = 0: the membrane is invisible and u(t,x) = (1+σ²t)^{-1/2} e^{-x²/2(1+σ²t)}.
  const double s2 = 1.5;
  const auto u = solve_interface_heat(DiffusionSpec::isotropic(1, s2), Surface::point(0.0),
                                      [](double x) { return std::exp(-0.5 * x * x); }, line_grid(5e-5));
  const double v = 1.0 + s2;
  double worst = 0.0;
  for (std::size_t j = 0; j < u.nodes.size(); ++j) {
    const double x = u.nodes[j];
    worst = std::max(worst, std::abs(u.values.back()[j] - std::exp(-0.5 * x * x / v) / std::sqrt(v)));
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(InterfaceHeat, SkewMembraneValueAtOrigin) {
  // For φ(y) = y e^{-y²/2} and a skew motion from the membrane,
  // u(t, 0) = q · 2√t / ((1 + t)√(2π)).
  for (double q : {-0.4, 0.5}) {
    Grid1D g = line_grid();
    g.save_times = {0.25, 1.0};
    const auto u = solve_interface_heat(DiffusionSpec::isotropic(1, 1.0, q), Surface::point(0.0),
                                        [](double y) { return y * std::exp(-0.5 * y * y); }, g);
    for (std::size_t k = 0; k < u.times.size(); ++k) {
      const double t = u.times[k];
      EXPECT_NEAR(u.at(k, 0.0), q * 2.0 * std::sqrt(t) / ((1.0 + t) * std::sqrt(2.0 * M_PI)), 1e-3) << t;
    }
  }
}

TEST(InterfaceHeat, MaximumPrincipleWithStickyMembrane) {
  const auto u = solve_interface_heat(DiffusionSpec::isotropic(1, 1.0, 0.3, 2.0), Surface::point(0.0),
                                      [](double x) { return x > 0.5 ? 1.0 : 0.0; }, line_grid());
  EXPECT_GE(u.min_value(), -1e-14);
  EXPECT_LE(u.max_value(), 1.0 + 1e-14);
}

TEST(InterfaceHeat, RadialTransparentSphereMatchesGaussian) {
  // d = 3 with q = r = 0: u = (1+t)^{-3/2} e^{-ρ²/2(1+t)}.
  const auto S = Surface::sphere(make_vec({0.0, 0.0, 0.0}), 1.0);
  const auto g = Grid1D::radial(1.0, 8.0, 0.01, 1e-4, 0.5, 1.0);
  const auto u = solve_interface_heat(DiffusionSpec::isotropic(3, 1.0), S,
                                      [](double rho) { return std::exp(-0.5 * rho * rho); }, g);
  for (double rho : {0.0, 0.5, 1.0, 1.7}) {
    EXPECT_NEAR(u.at(u.times.size() - 1, rho), std::pow(1.5, -1.5) * std::exp(-rho * rho / 3.0),
                1e-3)
        << rho;
  }
}

TEST(InterfaceHeat, CrankNicolsonRefusedWhenPositivityFails) {
  EXPECT_THROW(solve_interface_heat(DiffusionSpec::isotropic(1, 1.0), Surface::point(0.0),
                                    [](double) { return 1.0; }, line_grid(1e-3, 0.5)),
               InvalidInput);
  EXPECT_NO_THROW(solve_interface_heat(DiffusionSpec::isotropic(1, 1.0), Surface::point(0.0),
                                       [](double) { return 1.0; }, line_grid(1e-3, 1.0, 0.01)));
}

TEST(InterfaceHeat, GeometryMismatchRejected) {
  const auto g = Grid1D::radial(1.0, 4.0, 0.05, 1e-3, 0.1);
  EXPECT_THROW(solve_interface_heat(DiffusionSpec::isotropic(1, 1.0), Surface::point(0.0),
                                    [](double) { return 1.0; }, g),
               InvalidInput);
}

TEST(KOperator, OneSidedSlopesOfPiecewiseLinear) {
  GridFunction f;
  for (int j = -5; j <= 5; ++j) f.nodes.push_back(0.1 * j);
  f.membrane_index = 5;
  f.b_membrane = 2.0;
  f.q = 0.5;
  std::vector<double> row;
  for (double x : f.nodes) row.push_back(x < 0.0 ? 2.0 * x : 3.0 * x);
  f.values.push_back(row);
  f.times.push_back(0.0);
  const auto [plus, minus] = one_sided_slopes(f, 0);
  EXPECT_NEAR(plus, 3.0, 1e-12);
  EXPECT_NEAR(minus, 2.0, 1e-12);
  EXPECT_NEAR(evaluate_K(f, 0), 2.0 * (0.75 * 3.0 - 0.25 * 2.0), 1e-12);
}

TEST(KOperator, AnalyticFunctionMustSitOnSurface) {
  const auto S = Surface::point(0.0);
  const auto f = TestFunction::capped_distance(S, 2);
  const auto spec = DiffusionSpec::isotropic(1, 1.0, 0.2);
  EXPECT_NEAR(evaluate_K(f, spec, S, 0.0, make_vec({0.0})), 1.0, 1e-14);
  EXPECT_THROW(evaluate_K(f, spec, S, 0.0, make_vec({0.3})), InvalidInput);
}

TEST(Extension, KtildeOfTransparentMembrane) {
  // q = r = 0 and b = 1: Hh(t,x) = E h(t + τ_|x|), so
  // K̃h(t) = ∂⁺Hh(t) = ∫₀^{T₀-t} h'(t+s) √(2/(πs)) ds.
  const double T0 = 1.0;
  BoundaryData data{[](double t) { return t < 1.0 ? std::pow(std::sin(M_PI * t), 2) : 0.0; }, T0};
  const auto S = Surface::point(0.0);
  const auto hh = solve_extension_Hh(DiffusionSpec::isotropic(1, 1.0), S, data, Grid1D::line(0.0, 6.0, 0.01, 1e-4, T0, 0.5));
  const auto kt = evaluate_Ktilde(hh, S);
  boost::math::quadrature::tanh_sinh<double> ts;
  for (double t : {0.2, 0.5, 0.7}) {
    const double ref = ts.integrate(
        [&](double s) { return M_PI * std::sin(2.0 * M_PI * (t + s)) * std::sqrt(2.0 / (M_PI * s)); }, 0.0, T0 - t);
    EXPECT_NEAR(kt.at(t), ref, 2e-2 * (1.0 + std::abs(ref))) << t;
  }
  // Hh equals h on the membrane and vanishes at T₀.
  EXPECT_NEAR(hh.values[hh.time_index(0.5)][hh.membrane_index], 1.0, 1e-12);
  for (double v : hh.values.back()) EXPECT_EQ(v, 0.0);
}

TEST(Extension, BoundaryDataNeedsCompactSupport) {
  BoundaryData data{[](double) { return 1.0; }, 1.0};
  EXPECT_THROW(data.validate(), InvalidInput);
}
