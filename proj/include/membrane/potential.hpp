#pragma once

#include "membrane/coefficients.hpp"
#include "membrane/geometry.hpp"
#include "membrane/parallel.hpp"
#include "membrane/pde.hpp"
#include "membrane/volterra.hpp"

#include <Eigen/Cholesky>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace membrane {

/// Uniform time grid τ_n = nΔτ, n = 0..N.
struct TimeGrid {
  double dt = 1e-3;
  double t_end = 1.0;

  void validate() const {
    require(dt > 0.0 && t_end > 0.0, "time grid: dt and t_end must be positive");
    require(t_end / dt <= 2e5, "time grid: too many steps");
  }
  std::size_t steps() const { return static_cast<std::size_t>(std::llround(t_end / dt)); }
  double time(std::size_t n) const { return static_cast<double>(n) * dt; }
};

/// Fundamental solution of ∂u/∂t = ½ Σ b_ij ∂²u for constant b.
inline double g0(double t, const Vec& x, const Vec& y, const DiffusionSpec& spec) {
  require(spec.constant_b(), "g0 needs constant b");
  require(t > 0.0, "g0 needs t > 0");
  require(x.size() == spec.dim() && y.size() == spec.dim(), "g0: dimension mismatch");
  const Mat& b = spec.b.constant();
  const Vec z = x - y;
  const double quad = z.dot(Eigen::LLT<Mat>(b).solve(z));
  const double d = static_cast<double>(x.size());
  return std::exp(-quad / (2.0 * t)) / std::sqrt(std::pow(2.0 * M_PI * t, d) * b.determinant());
}

/// g0(·, x, y) as a kernel in the time variable (odd dimensions).
inline TimeKernel heat_kernel(const Vec& x, const Vec& y, const DiffusionSpec& spec) {
  require(spec.constant_b(), "heat kernel needs constant b");
  const int d = static_cast<int>(x.size());
  require(d % 2 == 1, "time-kernel form of g0 needs an odd dimension");
  const Mat& b = spec.b.constant();
  const Vec z = x - y;
  const double quad = z.dot(Eigen::LLT<Mat>(b).solve(z));
  const double a = 1.0 / std::sqrt(std::pow(2.0 * M_PI, d) * b.determinant());
  return TimeKernel({{a, -0.5 * d, 0.5 * quad}});
}

/// Values K(τ_n, x, y_i) for a fixed source x on the grid τ_1..τ_N.
struct KernelTable {
  std::vector<double> times;
  std::vector<Vec> points;
  std::vector<double> weights;              // surface weights when the points lie on S
  std::vector<std::vector<double>> values;  // [time][point]
  std::string singularity = "t^(-1/2) endpoint, exact product integration";

  double at(std::size_t k, std::size_t i) const { return values.at(k).at(i); }
  std::vector<double> column(std::size_t i) const {
    std::vector<double> c;
    for (const auto& row : values) c.push_back(row.at(i));
    return c;
  }
};

namespace detail {

/// ∫₀^{τ_n} A(τ) B(τ_n - τ) dτ for n = 0..N on the uniform grid, with the
/// same split rule as `convolve` but cell moments shared across n. The first
/// steps, where both factors may peak inside one cell, use `fine_cells` subcells.
inline std::vector<double> grid_convolution(const TimeKernel& A, const TimeKernel& B, double dt, std::size_t N,
                                            std::size_t fine_steps = 64, std::size_t fine_cells = 1024) {
  std::vector<double> a0(N), a1(N), b0(N), b1(N), av(N + 1), bv(N + 1);
  for (std::size_t m = 0; m < N; ++m) {
    const double s0 = static_cast<double>(m) * dt, s1 = s0 + dt;
    a0[m] = A.integral(s0, s1);
    a1[m] = A.moment(s0, s1);
    b0[m] = B.integral(s0, s1);
    b1[m] = B.moment(s0, s1);
  }
  for (std::size_t j = 0; j <= N; ++j) {
    av[j] = A(static_cast<double>(j) * dt);
    bv[j] = B(static_cast<double>(j) * dt);
  }
  std::vector<double> out(N + 1, 0.0);
  for (std::size_t n = 1; n <= N; ++n) {
    if (n <= fine_steps) {
      out[n] = convolve(A, B, static_cast<double>(n) * dt, fine_cells);
      continue;
    }
    double v = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double t0 = static_cast<double>(j) * dt, t1 = t0 + dt;
      if (2 * j < n) {
        v += bv[n - j] * (t1 * a0[j] - a1[j]) + bv[n - j - 1] * (a1[j] - t0 * a0[j]);
      } else {
        const std::size_t m = n - j - 1;
        const double s0 = static_cast<double>(m) * dt, s1 = s0 + dt;
        v += av[j + 1] * (s1 * b0[m] - b1[m]) + av[j] * (b1[m] - s0 * b0[m]);
      }
    }
    out[n] = v / dt;
  }
  return out;
}

/// ∫₀^{τ_n} U(τ) V(τ_n - τ) dτ for two piecewise-linear tables.
inline double linear_product_convolution(const std::vector<double>& U, const std::vector<double>& V,
                                         std::size_t n, double dt) {
  double v = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const double u0 = U[j], u1 = U[j + 1];
    const double v0 = V[n - j], v1 = V[n - j - 1];
    v += 2.0 * u0 * v0 + u0 * v1 + u1 * v0 + 2.0 * u1 * v1;
  }
  return v * dt / 6.0;
}

/// ∫₀^{T-τ_n} U(s) V(τ_n + s) ds for two piecewise-linear tables on [0, T].
inline double linear_product_forward(const std::vector<double>& U, const std::vector<double>& V, std::size_t n,
                                     double dt) {
  double v = 0.0;
  const std::size_t len = V.size() - 1 - n;
  for (std::size_t j = 0; j < len; ++j) {
    const double u0 = U[j], u1 = U[j + 1];
    const double v0 = V[n + j], v1 = V[n + j + 1];
    v += 2.0 * u0 * v0 + u0 * v1 + u1 * v0 + 2.0 * u1 * v1;
  }
  return v * dt / 6.0;
}

}  // namespace detail

/// Data of a point membrane {c} on the line with constant b = σ².
struct PointMembrane {
  double c = 0.0;
  double sigma2 = 1.0;
  double q = 0.0;
  double r = 0.0;

  PointMembrane(const DiffusionSpec& spec, const Surface& surface) {
    require(surface.kind() == SurfaceKind::point, "point-membrane potentials need S = {c} on the line");
    require(spec.constant_b(), "potentials need constant b");
    const Vec z = surface.center();
    c = surface.offset();
    sigma2 = spec.b.constant()(0, 0);
    q = spec.q(z);
    r = spec.r(z);
  }

  /// g0(·, x, y) in the time variable.
  TimeKernel heat(double x, double y) const {
    return TimeKernel({{1.0 / std::sqrt(2.0 * M_PI * sigma2), -0.5, (x - y) * (x - y) / (2.0 * sigma2)}});
  }
  /// ∂g0(s, z, y)/∂N(z) at z = c: the signed hitting density of c from y.
  TimeKernel flux(double y) const {
    return TimeKernel({{(y - c) / std::sqrt(2.0 * M_PI * sigma2), -1.5, (y - c) * (y - c) / (2.0 * sigma2)}});
  }
  /// The Abel kernel k(s) = g0(s, c, c).
  TimeKernel abel() const { return heat(c, c); }
};

/// Data of a sphere |x - c| = R in d = 3 with b = σ² I and constant q, r.
struct SphereMembrane {
  Vec center;
  double R = 1.0;
  double sigma2 = 1.0;
  double q = 0.0;
  double r = 0.0;

  SphereMembrane(const DiffusionSpec& spec, const Surface& surface) {
    require(surface.kind() == SurfaceKind::sphere && surface.dim() == 3, "sphere potentials are implemented for d = 3");
    const auto s2 = spec.scalar_diffusivity();
    require(s2.has_value(), "sphere potentials need b = sigma^2 I");
    center = surface.center();
    R = surface.radius();
    sigma2 = *s2;
    const auto quad = surface.quadrature();
    q = spec.q(quad.points.front());
    r = spec.r(quad.points.front());
    for (const auto& z : quad.points)
      require(std::abs(spec.q(z) - q) <= 1e-12 && std::abs(spec.r(z) - r) <= 1e-12,
              "sphere potentials need q and r constant on S");
  }

  double C() const { return 1.0 / std::sqrt(2.0 * M_PI * sigma2); }

  /// g0(·, center, y) with |y - center| = rho.
  TimeKernel heat_from_center(double rho) const {
    return TimeKernel({{std::pow(2.0 * M_PI * sigma2, -1.5), -1.5, rho * rho / (2.0 * sigma2)}});
  }
  /// ∫_S g0(s, z, y) dσ_z with |y - center| = rho.
  TimeKernel single_layer(double rho) const {
    if (rho < 1e-12 * R) return heat_from_center(R).scaled(4.0 * M_PI * R * R);
    const double a = (R / rho) * C();
    return TimeKernel({{a, -0.5, (rho - R) * (rho - R) / (2.0 * sigma2)},
                       {-a, -0.5, (rho + R) * (rho + R) / (2.0 * sigma2)}});
  }
  /// ∫_S ∂g0(s, z, y)/∂N(z) dσ_z with |y - center| = rho (unit double layer).
  TimeKernel double_layer(double rho) const {
    if (rho < 1e-12 * R) return center_flux().scaled(4.0 * M_PI * R * R);
    const double cm = (rho - R) * (rho - R) / (2.0 * sigma2), cp = (rho + R) * (rho + R) / (2.0 * sigma2);
    return TimeKernel({{-sigma2 / rho * C(), -0.5, cm},
                       {sigma2 / rho * C(), -0.5, cp},
                       {R * (rho - R) / rho * C(), -1.5, cm},
                       {R * (rho + R) / rho * C(), -1.5, cp}});
  }
  /// ∂g0(s, z, center)/∂N(z) for z on S.
  TimeKernel center_flux() const {
    return TimeKernel({{-R * std::pow(2.0 * M_PI * sigma2, -1.5), -2.5, R * R / (2.0 * sigma2)}});
  }
};

/// Ṽ(t, x, y) for y ∈ S: the solution of
/// Ṽ(t,x,y) = g0(t,x,y) + ∫₀ᵗ∫_S Ṽ(τ,x,z) ∂g0(t-τ,z,y)/∂N(z) q(z) dσ_z dτ.
/// Point membranes: any x. Spheres (d = 3): x must be the center.
inline KernelTable solve_Vtilde(const DiffusionSpec& spec, const Surface& surface, const Vec& x,
                                const TimeGrid& grid) {
  grid.validate();
  const std::size_t N = grid.steps();
  KernelTable out;
  for (std::size_t n = 1; n <= N; ++n) out.times.push_back(grid.time(n));
  if (surface.kind() == SurfaceKind::point) {
    const PointMembrane pm(spec, surface);
    out.points = {surface.center()};
    out.weights = {1.0};
    // The kernel at z = y = c is (y - c)/s · g0 = 0, so Ṽ = g0 on the grid.
    const TimeKernel kernel = pm.flux(pm.c).scaled(pm.q);
    const ConvolutionWeights W(kernel, grid.dt, N);
    std::vector<double> F(N + 1, 0.0);
    const TimeKernel src = pm.heat(x(0), pm.c);
    for (std::size_t n = 1; n <= N; ++n) F[n] = src(grid.time(n));
    const auto V = kernel.empty() ? F : volterra_march(F, 0.0, 1.0, W);
    for (std::size_t n = 1; n <= N; ++n) out.values.push_back({V[n]});
    return out;
  }
  const SphereMembrane sm(spec, surface);
  require((x - sm.center).norm() <= 1e-12 * sm.R, "sphere potentials are implemented for a source at the center");
  const auto quad = surface.quadrature();
  out.points = quad.points;
  out.weights = quad.weights;
  const ConvolutionWeights W(sm.double_layer(sm.R), grid.dt, N);
  std::vector<double> F(N + 1, 0.0);
  const TimeKernel src = sm.heat_from_center(sm.R);
  for (std::size_t n = 1; n <= N; ++n) F[n] = src(grid.time(n));
  const auto v = volterra_march(F, 0.0, sm.q, W);
  for (std::size_t n = 1; n <= N; ++n) out.values.emplace_back(out.points.size(), v[n]);
  return out;
}

/// Skew transition density G₀(t, x, ·) through the single-layer representation.
/// Off-surface targets only; one-sided limits on S come from `G0_limits`.
class G0Representation {
 public:
  G0Representation(const DiffusionSpec& spec, const Surface& surface, const Vec& x, const TimeGrid& grid)
      : x_(x), grid_(grid) {
    grid.validate();
    if (surface.kind() == SurfaceKind::point) {
      point_.emplace(spec, surface);
    } else {
      sphere_.emplace(spec, surface);
      require((x - sphere_->center).norm() <= 1e-12 * sphere_->R,
              "sphere potentials are implemented for a source at the center");
      const auto vt = solve_Vtilde(spec, surface, x, grid);
      v_.assign(grid.steps() + 1, 0.0);
      for (std::size_t n = 1; n <= grid.steps(); ++n) v_[n] = vt.values[n - 1][0];
    }
  }

  /// G₀(τ_n, x, y) for n = 0..N.
  std::vector<double> series(const Vec& y) const {
    const std::size_t N = grid_.steps();
    std::vector<double> out(N + 1, 0.0);
    if (point_) {
      const auto& pm = *point_;
      const TimeKernel direct = pm.heat(x_(0), y(0));
      const auto conv = detail::grid_convolution(pm.heat(x_(0), pm.c), pm.flux(y(0)), grid_.dt, N);
      for (std::size_t n = 1; n <= N; ++n) out[n] = direct(grid_.time(n)) + pm.q * conv[n];
      return out;
    }
    const auto& sm = *sphere_;
    const double rho = (y - sm.center).norm();
    const TimeKernel direct = sm.heat_from_center(rho);
    const ConvolutionWeights W(sm.double_layer(rho), grid_.dt, N);
    for (std::size_t n = 1; n <= N; ++n) out[n] = direct(grid_.time(n)) + sm.q * W.apply(v_, n);
    return out;
  }

  /// G₀(t, x, y) at an arbitrary t > 0 (point membranes) or a grid time (spheres).
  double value(double t, const Vec& y) const {
    if (point_) {
      const auto& pm = *point_;
      const auto cells = std::max<std::size_t>(8, 2 * static_cast<std::size_t>(std::ceil(t / grid_.dt)));
      return pm.heat(x_(0), y(0))(t) + pm.q * convolve(pm.heat(x_(0), pm.c), pm.flux(y(0)), t, cells);
    }
    const auto n = static_cast<std::size_t>(std::llround(t / grid_.dt));
    require(std::abs(grid_.time(n) - t) <= 1e-9 * t && n >= 1 && n <= grid_.steps(),
            "sphere G0 is available on grid times only");
    const auto& sm = *sphere_;
    const double rho = (y - sm.center).norm();
    const ConvolutionWeights W(sm.double_layer(rho), grid_.dt, n);
    return sm.heat_from_center(rho)(t) + sm.q * W.apply(v_, n);
  }

  /// ∫ φ G₀(t, x, y) dy by adaptive Gauss–Kronrod, split at the membrane.
  /// φ takes the line coordinate or, on spheres, the radius.
  double expectation(double t, const std::function<double(double)>& phi) const {
    using boost::math::quadrature::gauss_kronrod;
    if (point_) {
      const double c = point_->c;
      auto f = [&](double y) { return phi(y) * value(t, make_vec({y})); };
      const double lo = gauss_kronrod<double, 31>::integrate(f, -INFINITY, c, 12, 1e-11);
      const double hi = gauss_kronrod<double, 31>::integrate(f, c, INFINITY, 12, 1e-11);
      return lo + hi;
    }
    const auto& sm = *sphere_;
    auto f = [&](double rho) {
      Vec y = sm.center;
      y(0) += rho;
      return 4.0 * M_PI * rho * rho * phi(rho) * value(t, y);
    };
    const double in = gauss_kronrod<double, 31>::integrate(f, 0.0, sm.R, 8, 1e-10);
    const double out = gauss_kronrod<double, 31>::integrate(f, sm.R, sm.R + 12.0 * std::sqrt(sm.sigma2 * t), 8, 1e-10);
    return in + out;
  }

  double mass(double t) const {
    return expectation(t, [](double) { return 1.0; });
  }

  const TimeGrid& grid() const { return grid_; }
  const std::vector<double>& surface_density() const { return v_; }

 private:
  Vec x_;
  TimeGrid grid_;
  std::optional<PointMembrane> point_;
  std::optional<SphereMembrane> sphere_;
  std::vector<double> v_;
};

/// Table of G₀(τ_n, x, y_i) at off-surface targets.
inline KernelTable solve_G0(const DiffusionSpec& spec, const Surface& surface, const Vec& x,
                            const std::vector<Vec>& ys, const TimeGrid& grid) {
  const G0Representation rep(spec, surface, x, grid);
  KernelTable out;
  out.points = ys;
  const std::size_t N = grid.steps();
  for (std::size_t n = 1; n <= N; ++n) out.times.push_back(grid.time(n));
  out.values.assign(N, std::vector<double>(ys.size(), 0.0));
  std::vector<std::vector<double>> cols(ys.size());
  parallel_for(ys.size(), [&](std::size_t i) {
    if (surface.unsigned_distance(ys[i]) <= Surface::input_tolerance(ys[i]))
      throw InvalidInput("solve_G0: targets on S have two limits; use G0_limits");
    cols[i] = rep.series(ys[i]);
  });
  for (std::size_t i = 0; i < ys.size(); ++i)
    for (std::size_t n = 1; n <= N; ++n) out.values[n - 1][i] = cols[i][n];
  return out;
}

/// One-sided limits G₀(τ_n, x, y±) at a surface point y, by linear
/// extrapolation from the off-surface offsets δ and 2δ along the normal.
struct OneSidedLimits {
  std::vector<double> plus, minus;  // indexed by n = 0..N
};

inline OneSidedLimits G0_limits(const G0Representation& rep, const Surface& surface, const Vec& y, double delta) {
  const Vec nu = surface.normal(surface.project(y));
  OneSidedLimits lim;
  const auto p1 = rep.series(y + delta * nu), p2 = rep.series(y + 2.0 * delta * nu);
  const auto m1 = rep.series(y - delta * nu), m2 = rep.series(y - 2.0 * delta * nu);
  for (std::size_t n = 0; n < p1.size(); ++n) {
    lim.plus.push_back(2.0 * p1[n] - p2[n]);
    lim.minus.push_back(2.0 * m1[n] - m2[n]);
  }
  return lim;
}

/// Sup over grid times and targets of the transmission residual
/// (1+q)/2 ∂G₀(t,x+,y)/∂N(x) - (1-q)/2 ∂G₀(t,x-,y)/∂N(x) at a source x on S.
struct FluxReport {
  double max_residual = 0.0;
  double at_time = 0.0;
  std::size_t at_target = 0;
  double scale = 0.0;  // sup of the one-sided derivatives, for context
  double t_min = 0.0;  // residuals are taken over t >= t_min
};

namespace detail {

/// Second-order one-sided derivative from samples at 0, h, 2h.
inline double one_sided(double u0, double u1, double u2, double h) { return (-3.0 * u0 + 4.0 * u1 - u2) / (2.0 * h); }

}  // namespace detail

/// Point membranes: source x = c ± {0, 2Δx, 4Δx} for each target y.
/// Spheres (d = 3): target y = center and source radii R ± {0, 2Δx, 4Δx}.
inline FluxReport check_flux_condition(const DiffusionSpec& spec, const Surface& surface, const std::vector<Vec>& ys,
                                       const TimeGrid& grid, double dx, double t_min = 0.05) {
  grid.validate();
  require(dx > 0.0, "check_flux_condition: dx must be positive");
  FluxReport rep;
  rep.t_min = t_min;
  const std::size_t N = grid.steps();
  const double h = 2.0 * dx;
  if (surface.kind() == SurfaceKind::point) {
    const PointMembrane pm(spec, surface);
    const double p = 0.5 * (1.0 + pm.q);
    std::vector<std::vector<double>> res(ys.size());
    std::vector<double> scale(ys.size(), 0.0);
    parallel_for(ys.size(), [&](std::size_t i) {
      const double y = ys[i](0);
      auto series_from = [&](double x) {
        const TimeKernel direct = pm.heat(x, y);
        auto conv = detail::grid_convolution(pm.heat(x, pm.c), pm.flux(y), grid.dt, N);
        for (std::size_t n = 1; n <= N; ++n) conv[n] = direct(grid.time(n)) + pm.q * conv[n];
        return conv;
      };
      const auto u0 = series_from(pm.c), up1 = series_from(pm.c + h), up2 = series_from(pm.c + 2 * h);
      const auto um1 = series_from(pm.c - h), um2 = series_from(pm.c - 2 * h);
      res[i].assign(N + 1, 0.0);
      for (std::size_t n = 1; n <= N; ++n) {
        const double dp = pm.sigma2 * detail::one_sided(u0[n], up1[n], up2[n], h);
        const double dm = -pm.sigma2 * detail::one_sided(u0[n], um1[n], um2[n], h);
        res[i][n] = p * dp - (1.0 - p) * dm;
        scale[i] = std::max({scale[i], std::abs(dp), std::abs(dm)});
      }
    });
    for (std::size_t i = 0; i < ys.size(); ++i) {
      rep.scale = std::max(rep.scale, scale[i]);
      for (std::size_t n = 1; n <= N; ++n) {
        if (grid.time(n) < t_min) continue;
        if (std::abs(res[i][n]) > rep.max_residual) {
          rep.max_residual = std::abs(res[i][n]);
          rep.at_time = grid.time(n);
          rep.at_target = i;
        }
      }
    }
    return rep;
  }
  const SphereMembrane sm(spec, surface);
  const double p = 0.5 * (1.0 + sm.q);
  const ConvolutionWeights WE(sm.double_layer(sm.R), grid.dt, N);
  const ConvolutionWeights WD(sm.center_flux(), grid.dt, N);
  const TimeKernel E = sm.double_layer(sm.R);
  // m(τ, ρ) = ∫_S Ṽ(τ, x, z) dσ_z for |x - center| = ρ, split as S + m̃.
  auto series_at = [&](double rho) {
    const TimeKernel S = sm.single_layer(rho);
    const auto ES = detail::grid_convolution(S, E, grid.dt, N);
    std::vector<double> F(N + 1, 0.0);
    for (std::size_t n = 1; n <= N; ++n) F[n] = sm.q * ES[n];
    const auto mt = volterra_march(F, 0.0, sm.q, WE);
    const auto SD = detail::grid_convolution(S, sm.center_flux(), grid.dt, N);
    const TimeKernel direct = sm.heat_from_center(rho);
    std::vector<double> out(N + 1, 0.0);
    for (std::size_t n = 1; n <= N; ++n) out[n] = direct(grid.time(n)) + sm.q * (SD[n] + WD.apply(mt, n));
    return out;
  };
  std::vector<double> radii = {sm.R, sm.R + h, sm.R + 2 * h, sm.R - h, sm.R - 2 * h};
  std::vector<std::vector<double>> s(radii.size());
  parallel_for(radii.size(), [&](std::size_t j) { s[j] = series_at(radii[j]); });
  for (std::size_t n = 1; n <= N; ++n) {
    const double dp = sm.sigma2 * detail::one_sided(s[0][n], s[1][n], s[2][n], h);
    const double dm = -sm.sigma2 * detail::one_sided(s[0][n], s[3][n], s[4][n], h);
    rep.scale = std::max({rep.scale, std::abs(dp), std::abs(dm)});
    if (grid.time(n) < t_min) continue;
    const double v = std::abs(p * dp - (1.0 - p) * dm);
    if (v > rep.max_residual) {
      rep.max_residual = v;
      rep.at_time = grid.time(n);
      rep.at_target = 0;
    }
  }
  return rep;
}

/// Both routes to G_λ(τ_n, x, y_i) and their comparison with G₀.
struct GLambdaResult {
  double lambda = 0.0;
  KernelTable g0;
  KernelTable target_route;
  KernelTable source_route;
  std::vector<double> surface_values;  // G_λ(τ_n, x, c), n = 0..N (n = 0 unused)
  double discrepancy = 0.0;            // sup |target_route - source_route|
  double worst_bound_violation = 0.0;  // sup of max(-G, G - G₀) relative to G₀
  bool bounded = true;                 // 0 <= G_λ <= G₀ within 1e-8 relative
};

/// Point membranes only. The target route solves, per target, the Volterra
/// equation in the surface-restricted form; the source route goes through
/// the surface values G_λ(·, x, c).
///
/// Every convolution pairs a smooth table with an analytic kernel: G₀(·,c,y)
/// is split as g0(·,c,y) + q k*f_y (k = g0(·,c,c), f_y the signed hitting
/// density), and the target route's unknown is z = k*G_λ(·,c,y), which is bounded
/// and continuous, instead of the sharply peaked G_λ(·,c,y) itself.
inline GLambdaResult solve_G_lambda(double lambda, const DiffusionSpec& spec, const Surface& surface, const Vec& x,
                                    const std::vector<Vec>& ys, const TimeGrid& grid, double bound_tol = 1e-8) {
  require(lambda >= 0.0 && std::isfinite(lambda), "solve_G_lambda: lambda must be >= 0");
  const PointMembrane pm(spec, surface);
  const std::size_t N = grid.steps();
  const double lr = lambda * pm.r;
  const double dt = grid.dt;
  const Vec c = surface.center();
  const bool at_c = std::abs(x(0) - pm.c) <= Surface::input_tolerance(x);
  GLambdaResult out;
  out.lambda = lambda;
  out.g0 = solve_G0(spec, surface, x, ys, grid);
  const KernelTable g0c = at_c ? out.g0 : solve_G0(spec, surface, c, ys, grid);

  const TimeKernel k = pm.abel();
  const TimeKernel vx = pm.heat(x(0), pm.c);  // Ṽ(·, x, c) = g0(·, x, c) on the line
  const ConvolutionWeights Wk(k, dt, N);
  const ConvolutionWeights Wx(vx, dt, N);
  // H = k * G_λ(·, c, c) solves H = k*k - λr k*H with k*k = 1/(2σ²).
  const std::vector<double> half(N + 1, 0.5 / pm.sigma2);
  const auto H = volterra_march(half, half[0], -lr, Wk);
  const auto Px = detail::grid_convolution(vx, k, dt, N);  // g0(·,x,c) * k
  const auto Pc = detail::grid_convolution(k, k, dt, N);   // k * k

  // Surface values w(τ) = G_λ(τ, x, c) = Ṽ - λr Ṽ * Ḡ with Ḡ = k - λr H.
  std::vector<double> w(N + 1, 0.0);
  for (std::size_t n = 1; n <= N; ++n) {
    const double tn = grid.time(n);
    w[n] = at_c ? k(tn) - lr * H[n] : vx(tn) - lr * (Px[n] - lr * Wx.apply(H, n));
  }
  out.surface_values = w;
  // Tables convolved once more with k for the source route.
  std::vector<double> Hk(N + 1, 0.0), wk(N + 1, 0.0);
  for (std::size_t n = 1; n <= N; ++n) {
    Hk[n] = Wk.apply(H, n);
    wk[n] = at_c ? Pc[n] - lr * Hk[n] : Wk.apply(w, n);
  }

  auto make_table = [&] {
    KernelTable t;
    t.times = out.g0.times;
    t.points = ys;
    t.values.assign(N, std::vector<double>(ys.size(), 0.0));
    return t;
  };
  out.target_route = make_table();
  out.source_route = make_table();
  parallel_for(ys.size(), [&](std::size_t i) {
    const double y = ys[i](0);
    const TimeKernel gy = pm.heat(pm.c, y);
    const TimeKernel fy = pm.flux(y);
    const ConvolutionWeights Wg(gy, dt, N), Wf(fy, dt, N);
    const auto kg = detail::grid_convolution(k, gy, dt, N);
    // k * G₀(·,c,y) = k*g0(·,c,y) + q (k*k)*f_y
    std::vector<double> F(N + 1, 0.0);
    for (std::size_t n = 1; n <= N; ++n) F[n] = kg[n] + pm.q * Wf.apply(Pc, n);
    const auto z = volterra_march(F, 0.0, -lr, Wk);
    std::vector<double> xg;  // g0(·,x,c) * g0(·,c,y)
    if (!at_c) xg = detail::grid_convolution(vx, gy, dt, N);
    for (std::size_t n = 1; n <= N; ++n) {
      const double G0x = out.g0.values[n - 1][i];
      const double G0c = g0c.values[n - 1][i];
      double r11;
      if (at_c) {
        r11 = G0c - lr * z[n];
      } else {
        const double vG0c = xg[n] + pm.q * Wf.apply(Px, n);
        r11 = G0x - lr * vG0c + lr * lr * Wx.apply(z, n);
      }
      out.target_route.values[n - 1][i] = r11;
      // Source route: w * G₀(·,c,y) = w*g0(·,c,y) + q (w*k)*f_y, with w = k - λr H at x = c.
      double wG;
      if (at_c) {
        wG = kg[n] + pm.q * Wf.apply(Pc, n) - lr * (Wg.apply(H, n) + pm.q * Wf.apply(Hk, n));
      } else {
        wG = Wg.apply(w, n) + pm.q * Wf.apply(wk, n);
      }
      out.source_route.values[n - 1][i] = G0x - lr * wG;
    }
  });
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t i = 0; i < ys.size(); ++i) {
      const double a = out.target_route.values[n][i], b = out.source_route.values[n][i], g = out.g0.values[n][i];
      out.discrepancy = std::max(out.discrepancy, std::abs(a - b));
      const double scale = std::max(std::abs(g), 1e-300);
      const double viol = std::max({-a, a - g, -b, b - g}) / scale;
      out.worst_bound_violation = std::max(out.worst_bound_violation, viol);
    }
  }
  out.bounded = out.worst_bound_violation <= bound_tol;
  return out;
}

/// λ > 0 and a surface datum ψ(t) (constant along S) with support in [0, T).
struct ResolventProblem {
  double lambda = 1.0;
  std::function<double(double)> psi;
  double support_end = 1.0;

  void validate() const {
    require(lambda > 0.0 && std::isfinite(lambda), "resolvent: lambda must be positive");
    require(static_cast<bool>(psi), "resolvent: psi missing");
    require(support_end > 0.0 && std::isfinite(support_end), "resolvent: psi needs compact support [0, T)");
    for (double f : {1.0, 1.5, 2.0, 4.0}) require(psi(support_end * f) == 0.0, "resolvent: psi must vanish for t >= T");
  }
};

/// V_λ on the surface and on fringes c ± δ, δ ∈ {2Δx, 4Δx}, for t ∈ [0, T].
struct VLambdaTable {
  std::vector<double> times;                  // τ_n, n = 0..N, τ_N = T
  std::vector<double> trace;                  // V_λ(τ_n, c)
  std::vector<double> trace_march;            // backward march of the layer relation
  std::vector<double> trace_march_permuted;   // same march, reversed summation order
  std::vector<double> offsets;                // δ values
  std::vector<std::vector<double>> plus;      // V_λ(τ_n, c + δ_j)
  std::vector<std::vector<double>> minus;     // V_λ(τ_n, c - δ_j)
  double relation_residual = 0.0;             // sup |trace - layer relation applied to trace|
  double march_gap = 0.0;                     // sup |trace - trace_march|
  double uniqueness_gap = 0.0;                // sup |trace_march - trace_march_permuted|
  double lambda = 1.0, sigma2 = 1.0, q = 0.0, r = 0.0, dx = 0.0;
  std::vector<double> psi;
};

/// V_λ(t, c) = ∫_t^T G¹_λ(τ - t, c, c) ψ(τ) dτ (r = 0; G¹ the r ≡ 1 table),
/// and off the surface the single-layer form
/// V_λ(t, x) = ∫_t^T g0(τ - t, x, c) μ(τ) dτ, μ = ψ - λ V_λ + r ∂V_λ/∂t.
/// For r > 0 the trace is the backward march of that relation.
inline VLambdaTable solve_V_lambda(const ResolventProblem& prob, const DiffusionSpec& spec, const Surface& surface,
                                   double dt, double dx) {
  prob.validate();
  require(dt > 0.0 && dx > 0.0, "solve_V_lambda: steps must be positive");
  const PointMembrane pm(spec, surface);
  const auto N = static_cast<std::size_t>(std::ceil(prob.support_end / dt - 1e-9));
  const double T = static_cast<double>(N) * dt;
  VLambdaTable out;
  out.lambda = prob.lambda;
  out.sigma2 = pm.sigma2;
  out.q = pm.q;
  out.r = pm.r;
  out.dx = dx;
  for (std::size_t n = 0; n <= N; ++n) {
    out.times.push_back(static_cast<double>(n) * dt);
    out.psi.push_back(prob.psi(out.times.back()));
  }
  const double lam = prob.lambda;
  const TimeKernel k = pm.abel();
  const ConvolutionWeights Wk(k, dt, N);

  // Definition route with Ḡ¹ = k - λ H¹.
  const std::vector<double> half(N + 1, 0.5 / pm.sigma2);
  const auto H1 = volterra_march(half, half[0], -lam, Wk);
  std::vector<double> wdef(N + 1, 0.0);
  for (std::size_t n = 0; n < N; ++n)
    wdef[n] = Wk.apply_forward(out.psi, n) - lam * detail::linear_product_forward(H1, out.psi, n, dt);

  // Backward march of w = ∫ k(τ - t) μ(τ) dτ, μ = ψ - λw + r w'.
  auto march = [&](bool permuted) {
    std::vector<double> w(N + 1, 0.0), mu(N + 1, 0.0);
    for (std::size_t n = N; n-- > 0;) {
      const std::size_t len = N - n;
      double rest = 0.0;
      if (permuted) {
        for (std::size_t i = len; i >= 1; --i) rest += Wk.weight(len, i) * mu[n + i];
      } else {
        for (std::size_t i = 1; i <= len; ++i) rest += Wk.weight(len, i) * mu[n + i];
      }
      const double w0 = Wk.weight(len, 0);
      w[n] = (w0 * (out.psi[n] + pm.r * w[n + 1] / dt) + rest) / (1.0 + w0 * (lam + pm.r / dt));
      mu[n] = out.psi[n] - lam * w[n] + pm.r * (w[n + 1] - w[n]) / dt;
    }
    return std::pair{w, mu};
  };
  auto [wm, mu] = march(false);
  auto [wp, mup] = march(true);
  (void)mup;
  out.trace_march = wm;
  out.trace_march_permuted = wp;
  out.trace = pm.r > 0.0 ? wm : wdef;
  for (std::size_t n = 0; n <= N; ++n) {
    out.march_gap = std::max(out.march_gap, std::abs(wdef[n] - wm[n]));
    out.uniqueness_gap = std::max(out.uniqueness_gap, std::abs(wm[n] - wp[n]));
  }
  // Layer density from the chosen trace.
  std::vector<double> dens(N + 1, 0.0);
  for (std::size_t n = 0; n < N; ++n)
    dens[n] = out.psi[n] - lam * out.trace[n] + pm.r * (out.trace[n + 1] - out.trace[n]) / dt;
  for (std::size_t n = 0; n < N; ++n)
    out.relation_residual = std::max(out.relation_residual, std::abs(out.trace[n] - Wk.apply_forward(dens, n)));
  (void)T;
  for (double delta : {2.0 * dx, 4.0 * dx}) {
    out.offsets.push_back(delta);
    const ConvolutionWeights Wd(pm.heat(pm.c + delta, pm.c), dt, N);
    std::vector<double> v(N + 1, 0.0);
    for (std::size_t n = 0; n < N; ++n) v[n] = Wd.apply_forward(dens, n);
    out.plus.push_back(v);
    out.minus.push_back(v);  // the single layer on the line is even about c
  }
  return out;
}

/// Residual of λf - K̃f = ψ for the tabulated V_λ.
struct ResolventReport {
  double sup_residual = 0.0;
  double at_time = 0.0;
  std::vector<double> residual;  // per τ_n, n = 0..N-1
  double pde_residual = NAN;     // same equation with K̃ from the grid extension of the trace
  double uniqueness_gap = 0.0;
  double march_gap = 0.0;
};

/// Fringe one-sided derivatives (3-point, spacing 2Δx: Richardson of the
/// 2Δx and 4Δx difference quotients) and centered differences in t.
inline ResolventReport check_resolvent(const VLambdaTable& V, const Grid1D* pde_grid = nullptr,
                                       const DiffusionSpec* spec = nullptr, const Surface* surface = nullptr) {
  ResolventReport rep;
  const std::size_t N = V.times.size() - 1;
  const double h = V.offsets.at(0);
  require(std::abs(V.offsets.at(1) - 2.0 * h) <= 1e-12 * h, "check_resolvent: fringes must be δ and 2δ");
  const double p = 0.5 * (1.0 + V.q);
  const double dt = V.times[1] - V.times[0];
  for (std::size_t n = 0; n < N; ++n) {
    const double w = V.trace[n];
    const double dp = V.sigma2 * detail::one_sided(w, V.plus[0][n], V.plus[1][n], h);
    const double dm = -V.sigma2 * detail::one_sided(w, V.minus[0][n], V.minus[1][n], h);
    double dw = 0.0;
    if (V.r > 0.0) dw = n == 0 ? (V.trace[1] - V.trace[0]) / dt : (V.trace[n + 1] - V.trace[n - 1]) / (2.0 * dt);
    const double res = V.lambda * w - (p * dp - (1.0 - p) * dm) - V.r * dw - V.psi[n];
    rep.residual.push_back(res);
    if (std::abs(res) > rep.sup_residual) {
      rep.sup_residual = std::abs(res);
      rep.at_time = V.times[n];
    }
  }
  rep.uniqueness_gap = V.uniqueness_gap;
  rep.march_gap = V.march_gap;
  if (pde_grid && spec && surface) {
    const std::vector<double> times = V.times, trace = V.trace;
    const double T = times.back();
    BoundaryData data{[times, trace, T](double t) {
                        if (t >= T || t < 0.0) return 0.0;
                        const double d = times[1] - times[0];
                        const auto k = std::min(static_cast<std::size_t>(t / d), times.size() - 2);
                        const double w = (t - times[k]) / d;
                        return (1.0 - w) * trace[k] + w * trace[k + 1];
                      },
                      T};
    const auto hh = solve_extension_Hh(*spec, *surface, data, *pde_grid);
    const auto kt = evaluate_Ktilde(hh, *surface);
    double worst = 0.0;
    for (std::size_t k = 1; k + 1 < kt.times.size(); ++k) {
      const double t = kt.times[k];
      const double w = data.h(t);
      const double psi = V.psi[std::min(static_cast<std::size_t>(std::llround(t / dt)), N)];
      worst = std::max(worst, std::abs(V.lambda * w - kt.values[k][0] - psi));
    }
    rep.pde_residual = worst;
  }
  return rep;
}

}  // namespace membrane
