#pragma once

#include "membrane/coefficients.hpp"
#include "membrane/geometry.hpp"
#include "membrane/test_function.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>
#include <vector>

namespace membrane {

enum class Geometry { line, radial };

/// Spatial nodes (one of them on the membrane), time step and θ-weight.
/// Line grids cover [c - X, c + X]; radial grids cover [0, X] with the
/// membrane radius as a node.
struct Grid1D {
  Geometry geometry = Geometry::line;
  std::vector<double> nodes;
  std::size_t membrane_index = 0;
  double dt = 1e-4;
  double theta = 1.0;
  double t_end = 1.0;
  std::vector<double> save_times;  // empty: only t_end

  static Grid1D line(double c, double x_max, double dx, double dt, double t_end, double theta = 1.0) {
    require(dx > 0.0 && x_max > dx, "grid: need 0 < dx < X_max");
    Grid1D g;
    const auto n = static_cast<long>(std::ceil(x_max / dx - 1e-9));
    for (long j = -n; j <= n; ++j) g.nodes.push_back(c + static_cast<double>(j) * dx);
    g.nodes[static_cast<std::size_t>(n)] = c;
    g.membrane_index = static_cast<std::size_t>(n);
    g.dt = dt;
    g.t_end = t_end;
    g.theta = theta;
    g.validate();
    return g;
  }

  /// Uniform radial grid; the spacing is adjusted so that R is a node.
  static Grid1D radial(double R, double rho_max, double dx, double dt, double t_end, double theta = 1.0) {
    require(R > 0.0 && rho_max > R && dx > 0.0, "radial grid: need 0 < R < rho_max and dx > 0");
    Grid1D g;
    g.geometry = Geometry::radial;
    const auto nr = std::max<long>(1, std::lround(R / dx));
    const double h = R / static_cast<double>(nr);
    const auto n = static_cast<long>(std::ceil(rho_max / h - 1e-9));
    for (long j = 0; j <= n; ++j) g.nodes.push_back(static_cast<double>(j) * h);
    g.nodes[static_cast<std::size_t>(nr)] = R;
    g.membrane_index = static_cast<std::size_t>(nr);
    g.dt = dt;
    g.t_end = t_end;
    g.theta = theta;
    g.validate();
    return g;
  }

  void validate() const {
    require(nodes.size() >= 5, "grid: need at least 5 nodes");
    for (std::size_t j = 1; j < nodes.size(); ++j) require(nodes[j] > nodes[j - 1], "grid: nodes must increase");
    require(membrane_index >= 2 || geometry == Geometry::radial, "grid: membrane too close to the edge");
    require(membrane_index + 2 < nodes.size(), "grid: membrane too close to the far field");
    require(dt > 0.0 && t_end > 0.0, "grid: dt and t_end must be positive");
    require(theta >= 0.0 && theta <= 1.0, "grid: theta must lie in [0, 1]");
    if (geometry == Geometry::radial) require(nodes.front() == 0.0, "radial grid must start at 0");
  }

  double membrane() const { return nodes[membrane_index]; }
  std::size_t steps() const { return static_cast<std::size_t>(std::llround(t_end / dt)); }
};

/// Tabulated u(t_k, x_j) with the data needed to interpret it.
struct GridFunction {
  Geometry geometry = Geometry::line;
  int dim = 1;
  std::vector<double> nodes;
  std::size_t membrane_index = 0;
  std::vector<double> times;
  std::vector<std::vector<double>> values;
  double b_membrane = 1.0;  // (bν, ν) at the membrane
  double q = 0.0;
  double r = 0.0;

  /// Linear interpolation in x at saved time index k.
  double at(std::size_t k, double x) const {
    const auto& u = values.at(k);
    if (x <= nodes.front()) return u.front();
    if (x >= nodes.back()) return u.back();
    const auto it = std::upper_bound(nodes.begin(), nodes.end(), x);
    const auto j = static_cast<std::size_t>(it - nodes.begin());
    const double w = (x - nodes[j - 1]) / (nodes[j] - nodes[j - 1]);
    return (1.0 - w) * u[j - 1] + w * u[j];
  }

  /// Index of the saved time closest to t.
  std::size_t time_index(double t) const {
    std::size_t best = 0;
    for (std::size_t k = 1; k < times.size(); ++k)
      if (std::abs(times[k] - t) < std::abs(times[best] - t)) best = k;
    return best;
  }

  double min_value() const {
    double m = INFINITY;
    for (const auto& row : values) m = std::min(m, *std::min_element(row.begin(), row.end()));
    return m;
  }
  double max_value() const {
    double m = -INFINITY;
    for (const auto& row : values) m = std::max(m, *std::max_element(row.begin(), row.end()));
    return m;
  }
};

namespace detail {

struct Tridiag {
  std::vector<double> lo, di, up;
  explicit Tridiag(std::size_t n) : lo(n, 0.0), di(n, 0.0), up(n, 0.0) {}
};

/// Thomas elimination; the matrices built here are M-matrices, so no pivoting.
inline void solve_tridiag(const Tridiag& m, std::vector<double>& rhs) {
  const std::size_t n = rhs.size();
  std::vector<double> c(n);
  double beta = m.di[0];
  if (beta == 0.0) throw NumericalFailure("tridiagonal solve: zero pivot");
  rhs[0] /= beta;
  for (std::size_t i = 1; i < n; ++i) {
    c[i] = m.up[i - 1] / beta;
    beta = m.di[i] - m.lo[i] * c[i];
    if (beta == 0.0) throw NumericalFailure("tridiagonal solve: zero pivot");
    rhs[i] = (rhs[i] - m.lo[i] * rhs[i - 1]) / beta;
  }
  for (std::size_t i = n - 1; i-- > 0;) rhs[i] -= c[i + 1] * rhs[i + 1];
}

/// Finite-volume semi-discretization V u' = L u. Faces sit at midpoints, the
/// far field is a zero-flux face, and the radial origin has only its outer
/// face. The membrane cell weights its exterior half by 2p and its interior
/// half by 2(1 - p), p = (1 + q)/2, and carries the surface term r·|S|.
struct FVSystem {
  std::vector<double> volume;
  Tridiag op;
  explicit FVSystem(std::size_t n) : volume(n, 0.0), op(n) {}
};

struct MembraneData {
  double b_membrane, q, r;
  std::function<double(double)> b_face;  // (bν,ν) at a coordinate
};

inline MembraneData membrane_data(const DiffusionSpec& spec, const Surface& surface, Geometry geometry) {
  MembraneData md;
  if (geometry == Geometry::line) {
    require(surface.kind() == SurfaceKind::point, "line solver needs a point membrane in d = 1");
    const Vec c = surface.center();
    md.b_membrane = spec.b(c)(0, 0);
    md.q = spec.q(c);
    md.r = spec.r(c);
    if (spec.constant_b()) {
      const double b = md.b_membrane;
      md.b_face = [b](double) { return b; };
    } else {
      md.b_face = [&spec](double x) { return spec.b(make_vec({x}))(0, 0); };
    }
  } else {
    require(surface.kind() == SurfaceKind::sphere, "radial solver needs a sphere");
    const auto s2 = spec.scalar_diffusivity();
    require(s2.has_value(), "radial solver needs b = sigma^2 I");
    const Vec z = surface.center() + surface.radius() * Vec::Unit(surface.dim(), 0);
    md.b_membrane = *s2;
    md.q = spec.q(z);
    md.r = spec.r(z);
    // Radially constant q, r: sample a few more surface points.
    for (int i = 1; i < surface.dim() * 2; ++i) {
      Vec u = Vec::Zero(surface.dim());
      u(i % surface.dim()) = (i / surface.dim()) % 2 == 0 ? 1.0 : -1.0;
      const Vec zi = surface.center() + surface.radius() * u;
      require(std::abs(spec.q(zi) - md.q) <= 1e-12 && std::abs(spec.r(zi) - md.r) <= 1e-12,
              "radial solver needs q and r constant on the sphere");
    }
    const double b = *s2;
    md.b_face = [b](double) { return b; };
  }
  require(std::abs(md.q) <= 1.0 && md.r >= 0.0, "membrane coefficients out of range");
  return md;
}

inline FVSystem build_fv(const Grid1D& g, int dim, const MembraneData& md) {
  const auto& x = g.nodes;
  const std::size_t n = x.size();
  FVSystem sys(n);
  const bool radial = g.geometry == Geometry::radial;
  auto area = [&](double rho) { return radial ? std::pow(rho, dim - 1) : 1.0; };
  auto vol = [&](double a, double b) {
    return radial ? (std::pow(b, dim) - std::pow(a, dim)) / dim : b - a;
  };
  const std::size_t m = g.membrane_index;
  const double p = 0.5 * (1.0 + md.q);
  for (std::size_t j = 0; j + 1 < n; ++j) {
    const double xf = 0.5 * (x[j] + x[j + 1]);
    const double h = x[j + 1] - x[j];
    const double vl = vol(x[j], xf), vr = vol(xf, x[j + 1]);
    const double coef = 0.5 * md.b_face(xf) * area(xf) / h;
    // Half cells either side of the face; at the membrane weight by side.
    const double wl = j == m ? 2.0 * p : 1.0;
    const double wr = j + 1 == m ? 2.0 * (1.0 - p) : 1.0;
    sys.volume[j] += wl * vl;
    sys.volume[j + 1] += wr * vr;
    sys.op.di[j] -= wl * coef;
    sys.op.up[j] += wl * coef;
    sys.op.di[j + 1] -= wr * coef;
    sys.op.lo[j + 1] += wr * coef;
  }
  sys.volume[m] += md.r * area(x[m]);
  return sys;
}

/// Largest Δt keeping the explicit part of the θ-scheme nonnegative.
inline double max_stable_dt(const FVSystem& sys, double theta) {
  if (theta >= 1.0) return INFINITY;
  double best = INFINITY;
  for (std::size_t j = 0; j < sys.volume.size(); ++j) {
    const double off = -sys.op.di[j];
    if (off > 0.0) best = std::min(best, sys.volume[j] / ((1.0 - theta) * off));
  }
  return best;
}

inline void check_positivity(const FVSystem& sys, const Grid1D& g) {
  const double dt_max = max_stable_dt(sys, g.theta);
  if (g.dt > dt_max * (1.0 + 1e-12)) {
    std::ostringstream os;
    os << "theta-scheme with theta=" << g.theta << " loses diagonal dominance at dt=" << g.dt
       << "; use dt <= " << dt_max << " or theta=1";
    throw InvalidInput(os.str());
  }
}

/// One θ-step of V u' = L u, optionally with a Dirichlet value at `fixed`.
inline void theta_step(const FVSystem& sys, double dt, double theta, std::vector<double>& u,
                       std::optional<std::pair<std::size_t, double>> fixed = std::nullopt) {
  const std::size_t n = u.size();
  const auto& L = sys.op;
  std::vector<double> rhs(n);
  Tridiag A(n);
  for (std::size_t j = 0; j < n; ++j) {
    double lu = L.di[j] * u[j];
    if (j > 0) lu += L.lo[j] * u[j - 1];
    if (j + 1 < n) lu += L.up[j] * u[j + 1];
    rhs[j] = sys.volume[j] * u[j] + (1.0 - theta) * dt * lu;
    A.di[j] = sys.volume[j] - theta * dt * L.di[j];
    A.lo[j] = -theta * dt * L.lo[j];
    A.up[j] = -theta * dt * L.up[j];
  }
  if (fixed) {
    const auto [k, v] = *fixed;
    A.di[k] = 1.0;
    A.lo[k] = A.up[k] = 0.0;
    rhs[k] = v;
  }
  solve_tridiag(A, rhs);
  u.swap(rhs);
}

inline GridFunction empty_table(const Grid1D& g, int dim, const MembraneData& md) {
  GridFunction out;
  out.geometry = g.geometry;
  out.dim = dim;
  out.nodes = g.nodes;
  out.membrane_index = g.membrane_index;
  out.b_membrane = md.b_membrane;
  out.q = md.q;
  out.r = md.r;
  return out;
}

inline Geometry geometry_of(const Surface& s) {
  return s.kind() == SurfaceKind::sphere ? Geometry::radial : Geometry::line;
}

}  // namespace detail

/// θ-scheme for u_t = ½ Σ b_ij ∂²u off S with the membrane row
/// r u_t = (1+q)/2 ∂u/∂N⁺ - (1-q)/2 ∂u/∂N⁻ and a single membrane value.
/// `phi` is a profile in the line coordinate or the radius. At the membrane
/// node the initial value is the side-weighted average of the two limits.
inline GridFunction solve_interface_heat(const DiffusionSpec& spec, const Surface& surface,
                                         const std::function<double(double)>& phi, const Grid1D& grid) {
  grid.validate();
  require(grid.geometry == detail::geometry_of(surface), "grid geometry does not match the surface");
  const auto md = detail::membrane_data(spec, surface, grid.geometry);
  const auto sys = detail::build_fv(grid, surface.dim(), md);
  detail::check_positivity(sys, grid);

  const auto& x = grid.nodes;
  const std::size_t m = grid.membrane_index;
  std::vector<double> u(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) u[j] = phi(x[j]);
  {
    const double p = 0.5 * (1.0 + md.q);
    const double hp = x[m + 1] - x[m], hm = x[m] - x[m - 1];
    const double wp = p * hp, wm = (1.0 - p) * hm;
    u[m] = (wp * phi(x[m] + 0.25 * hp) + wm * phi(x[m] - 0.25 * hm)) / (wp + wm);
  }
  for (double v : u) require(std::isfinite(v), "initial data must be finite");

  GridFunction out = detail::empty_table(grid, surface.dim(), md);
  std::vector<double> saves = grid.save_times.empty() ? std::vector<double>{grid.t_end} : grid.save_times;
  std::sort(saves.begin(), saves.end());
  std::size_t next = 0;
  auto record = [&](std::size_t k) {
    const double t = static_cast<double>(k) * grid.dt;
    while (next < saves.size() && saves[next] <= t + 0.5 * grid.dt) {
      out.times.push_back(t);
      out.values.push_back(u);
      ++next;
    }
  };
  record(0);
  const std::size_t steps = grid.steps();
  for (std::size_t k = 1; k <= steps; ++k) {
    detail::theta_step(sys, grid.dt, grid.theta, u);
    record(k);
  }
  for (const auto& row : out.values)
    for (double v : row)
      if (!std::isfinite(v)) throw NumericalFailure("interface heat solve produced non-finite values");
  return out;
}

inline GridFunction solve_interface_heat(const DiffusionSpec& spec, const Surface& surface,
                                         const TestFunction& phi_init, const Grid1D& grid) {
  const int d = surface.dim();
  const bool radial = grid.geometry == Geometry::radial;
  const Vec c = surface.center();
  return solve_interface_heat(
      spec, surface,
      [&](double s) {
        Vec x = c;
        if (radial) {
          x(0) += s;
        } else {
          x(0) = s;
        }
        (void)d;
        return phi_init.value(0.0, x);
      },
      grid);
}

/// Surface boundary data h(t) (radially constant on spheres) with support in [0, T₀).
struct BoundaryData {
  std::function<double(double)> h;
  double support_end = 0.0;  // T₀: h(t) = 0 for t >= T₀

  void validate() const {
    require(static_cast<bool>(h), "boundary data missing");
    require(support_end > 0.0 && std::isfinite(support_end), "boundary data needs compact support [0, T0)");
    for (double f : {1.0, 1.5, 2.0, 4.0})
      require(h(support_end * f) == 0.0, "boundary data must vanish for t >= T0");
  }
};

/// Hh: solves ∂U/∂t + ½ Σ b_ij ∂²U = 0 on each side with U = h on S and
/// U(T₀) = 0, marching backwards from T₀. Rows are stored on the ascending
/// time grid 0, Δt, ..., T₀; Hh vanishes beyond T₀.
inline GridFunction solve_extension_Hh(const DiffusionSpec& spec, const Surface& surface, const BoundaryData& data,
                                       Grid1D grid) {
  data.validate();
  grid.t_end = data.support_end;
  grid.validate();
  require(grid.geometry == detail::geometry_of(surface), "grid geometry does not match the surface");
  auto md = detail::membrane_data(spec, surface, grid.geometry);
  const double q = md.q, r = md.r;
  md.q = 0.0;  // the membrane row is replaced by the Dirichlet trace
  md.r = 0.0;
  const auto sys = detail::build_fv(grid, surface.dim(), md);
  detail::check_positivity(sys, grid);
  const std::size_t steps = grid.steps();
  const std::size_t m = grid.membrane_index;
  std::vector<double> u(grid.nodes.size(), 0.0);
  std::vector<std::vector<double>> rows(steps + 1);
  rows[steps] = u;
  for (std::size_t k = steps; k-- > 0;) {
    const double t = static_cast<double>(k) * grid.dt;
    detail::theta_step(sys, grid.dt, grid.theta, u, std::pair{m, data.h(t)});
    rows[k] = u;
  }
  GridFunction out = detail::empty_table(grid, surface.dim(), md);
  out.q = q;
  out.r = r;
  for (std::size_t k = 0; k <= steps; ++k) out.times.push_back(static_cast<double>(k) * grid.dt);
  out.values = std::move(rows);
  return out;
}

/// One-sided second-order derivatives at the membrane node along the
/// outward normal (increasing coordinate): {exterior, interior}.
inline std::pair<double, double> one_sided_slopes(const GridFunction& f, std::size_t k) {
  const auto& u = f.values.at(k);
  const auto& x = f.nodes;
  const std::size_t m = f.membrane_index;
  require(m >= 2 && m + 2 < x.size(), "one-sided stencils need two nodes per side");
  auto three_point = [](double u0, double u1, double u2, double h1, double h2) {
    // derivative at 0 from samples at 0, h1, h1 + h2 (h1 signed)
    const double a = h1, b = h1 + h2;
    return u0 * (-(a + b) / (a * b)) + u1 * (b / (a * (b - a))) + u2 * (-a / (b * (b - a)));
  };
  const double plus = three_point(u[m], u[m + 1], u[m + 2], x[m + 1] - x[m], x[m + 2] - x[m + 1]);
  const double minus = three_point(u[m], u[m - 1], u[m - 2], x[m - 1] - x[m], x[m - 2] - x[m - 1]);
  return {plus, minus};
}

/// Kf at the membrane from a tabulated function (saved time index k).
inline double evaluate_K(const GridFunction& f, std::size_t k) {
  const auto [dp, dm] = one_sided_slopes(f, k);
  return 0.5 * (1.0 + f.q) * f.b_membrane * dp - 0.5 * (1.0 - f.q) * f.b_membrane * dm;
}

/// Kf for an analytic test function at a surface point.
inline double evaluate_K(const TestFunction& f, const DiffusionSpec& spec, const Surface& surface, double t,
                         const Vec& z) {
  if (surface.unsigned_distance(z) > Surface::input_tolerance(z))
    throw InvalidInput("evaluate_K: point is not on the surface");
  return f.K(t, z, spec, surface);
}

/// K̃h on the time grid × surface quadrature points.
struct SurfaceTable {
  std::vector<double> times;
  std::vector<Vec> points;
  std::vector<std::vector<double>> values;  // [time][point]

  /// Linear interpolation in time (zero beyond the table) at point i.
  double at(double t, std::size_t i = 0) const {
    if (t < times.front() || t > times.back()) return 0.0;
    const double dt = times[1] - times[0];
    const auto k = std::min(static_cast<std::size_t>((t - times.front()) / dt), times.size() - 2);
    const double w = (t - times[k]) / dt;
    return (1.0 - w) * values[k][i] + w * values[k + 1][i];
  }
};

/// K̃h = r ∂(Hh)/∂t + (1+q)/2 ∂(Hh)/∂N⁺ - (1-q)/2 ∂(Hh)/∂N⁻ from the
/// extension table: centered differences in t, one-sided stencils in x.
inline SurfaceTable evaluate_Ktilde(const GridFunction& hh, const Surface& surface) {
  require(hh.times.size() >= 3, "evaluate_Ktilde: extension table too short");
  SurfaceTable out;
  out.times = hh.times;
  const auto quad = surface.quadrature();
  out.points = quad.points;
  const std::size_t n = hh.times.size();
  const std::size_t m = hh.membrane_index;
  for (std::size_t k = 0; k < n; ++k) {
    double dudt;
    if (k == 0) {
      dudt = (hh.values[1][m] - hh.values[0][m]) / (hh.times[1] - hh.times[0]);
    } else if (k + 1 == n) {
      dudt = (hh.values[k][m] - hh.values[k - 1][m]) / (hh.times[k] - hh.times[k - 1]);
    } else {
      dudt = (hh.values[k + 1][m] - hh.values[k - 1][m]) / (hh.times[k + 1] - hh.times[k - 1]);
    }
    const double v = hh.r * dudt + evaluate_K(hh, k);
    out.values.emplace_back(out.points.size(), v);
  }
  return out;
}

}  // namespace membrane
