#pragma once

#include "membrane/pde.hpp"
#include "membrane/potential.hpp"
#include "membrane/simulate.hpp"
#include "membrane/stats.hpp"
#include "membrane/test_function.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace membrane {

/// Verdict of a mean-increment test on one compensated process.
///
/// The software only asserts agreement of finite-dimensional functionals;
/// passing says nothing about the full law of the path.
struct MartingaleReport {
  std::string id;
  std::vector<double> checkpoints;      // right ends of the tested increments
  std::vector<double> mean_increment;
  std::vector<double> standard_error;
  std::vector<double> z;
  double critical = 0.0;
  bool one_sided = false;               // submartingale: only z < -critical fails
  bool pass = true;
  std::size_t n_paths = 0;
  std::size_t diverged = 0;
};

/// Per-checkpoint z-statistics from per-path values M(t_0), ..., M(t_K);
/// increment k is M(t_{k+1}) - M(t_k). `values[p]` holds path p.
inline MartingaleReport increment_report(std::string id, const std::vector<std::vector<double>>& values,
                                         std::vector<double> checkpoints, double critical, bool one_sided) {
  require(!values.empty(), "increment_report: empty ensemble");
  const std::size_t K = checkpoints.size();
  MartingaleReport rep;
  rep.id = std::move(id);
  rep.checkpoints = std::move(checkpoints);
  rep.critical = critical;
  rep.one_sided = one_sided;
  rep.n_paths = values.size();
  for (std::size_t k = 0; k < K; ++k) {
    RunningStats s;
    for (const auto& v : values) s.add(v[k + 1] - v[k]);
    const double se = s.standard_error();
    // Increments that are deterministic up to rounding count as exact zeros.
    double z = 0.0;
    if (se > 1e-12) {
      z = s.mean() / se;
    } else if (std::abs(s.mean()) > 1e-10) {
      z = s.mean() > 0.0 ? INFINITY : -INFINITY;
    }
    rep.mean_increment.push_back(s.mean());
    rep.standard_error.push_back(se);
    rep.z.push_back(z);
    const bool ok = one_sided ? z >= -critical : std::abs(z) <= critical;
    rep.pass = rep.pass && ok;
  }
  return rep;
}

/// Accumulates M_f(t) = f(t, x(t)) - ∫ generator f du - ∫ (r ∂f/∂t + Kf) dγ
/// for a battery of test functions along one streamed path.
///
/// The base clock is the time spent off S (the delay r dη is the only time
/// on S), so the generator integral runs over the operational steps. The
/// spatial part and Kf use left endpoints. The ∂f/∂t parts are integrated
/// exactly with the state frozen: f(t₀+ds, x₀) - f(t₀, x₀) off S and
/// f(t₁, z) - f(t₀+ds, z) for the delay r dη at the contact point z.
/// Without this the deterministic part of a time-dependent f carries an
/// O(Δt) bias with zero variance, which a z-test rejects at any sample size.
/// Checkpoint t_k records M at the first step end t₁ >= t_k, a bounded
/// stopping time, so no interpolation bias enters the mean.
class CompensatorObserver {
 public:
  CompensatorObserver(const std::vector<TestFunction>& fs, const Model& model, const std::vector<double>& checkpoints,
                      const Vec& start)
      : fs_(&fs), model_(&model), cps_(&checkpoints), comp_(fs.size(), 0.0) {
    values_.resize(fs.size() * (checkpoints.size() + 1), 0.0);
    for (std::size_t f = 0; f < fs.size(); ++f) values_[f * stride()] = fs[f].value(0.0, start);
  }

  void on_step(const StepView& v) {
    if (next_ >= cps_->size()) return;
    const auto& spec = model_->spec();
    const double ds = v.s1 - v.s0;
    const double tb = v.t0 + ds;  // end of the off-S part of the step
    for (std::size_t f = 0; f < fs_->size(); ++f) {
      const TestFunction& fn = (*fs_)[f];
      const Derivs d0 = fn.eval(v.t0, v.x0);
      double inc = 0.5 * (spec.b(v.x0).cwiseProduct(d0.hess)).sum() * ds;
      if (fn.time_factor().active) inc += fn.value(tb, v.x0) - d0.value;
      if (v.d_eta > 0.0) {
        // γ grows uniformly over the delay [t₀+ds, t₁]; the delay is
        // O(√Δt), so the time argument of Kf matters.
        inc += fn.K(tb + 0.5 * v.delay, v.contact, spec, model_->surface()) * v.d_eta;
        if (v.delay > 0.0 && fn.time_factor().active) inc += fn.value(v.t1, v.contact) - fn.value(tb, v.contact);
      }
      comp_[f] += inc;
    }
    while (next_ < cps_->size() && v.t1 >= (*cps_)[next_] - 1e-9 * ds) {
      for (std::size_t f = 0; f < fs_->size(); ++f)
        values_[f * stride() + next_ + 1] = (*fs_)[f].value(v.t1, v.x1) - comp_[f];
      ++next_;
    }
  }

  /// Flattened [function][checkpoint 0..K] values of M.
  std::vector<double> result() const { return values_; }

 private:
  std::size_t stride() const { return cps_->size() + 1; }

  const std::vector<TestFunction>* fs_;
  const Model* model_;
  const std::vector<double>* cps_;
  std::vector<double> comp_;
  std::vector<double> values_;
  std::size_t next_ = 0;
};

/// The default battery: the first coordinate, ½|x|², the capped distance
/// φ_m, and a quadratic polynomial under a time bump.
inline std::vector<TestFunction> standard_battery(const Surface& surface, int cap_m = 5, double bump_a = 0.2,
                                                  double bump_b = 0.8) {
  const int d = surface.dim();
  Vec e1 = Vec::Zero(d);
  e1(0) = 1.0;
  const Mat I = Mat::Identity(d, d);
  return {TestFunction::polynomial(0.0, e1, Mat::Zero(d, d), {}, 1e3, "x"),
          TestFunction::polynomial(0.0, Vec::Zero(d), I, {}, 1e3, "half_sq"),
          TestFunction::capped_distance(surface, cap_m),
          TestFunction::polynomial(1.0, 0.5 * e1, I, TimeFactor::bump(bump_a, bump_b), 1e3, "poly_bump")};
}

/// Ensemble settings shared by the statistical checks.
struct EnsembleSpec {
  SimScheme scheme;
  Vec start;
  std::size_t n_paths = 10000;
  std::uint64_t first_index = 0;
};

/// Compensated values for every function of the battery: out[f][p][k].
inline std::vector<std::vector<std::vector<double>>> compensated_values(const std::vector<TestFunction>& battery,
                                                                        const Model& model, const EnsembleSpec& es,
                                                                        const std::vector<double>& checkpoints,
                                                                        std::size_t* diverged = nullptr) {
  require(!battery.empty(), "compensated_values: empty battery");
  require(!checkpoints.empty() && std::is_sorted(checkpoints.begin(), checkpoints.end()) && checkpoints.front() > 0.0,
          "checkpoints must be positive and increasing");
  require(checkpoints.back() <= es.scheme.t_end + 1e-12, "checkpoints beyond the scheme horizon");
  for (const auto& f : battery)
    require(f.has_time_derivative() && f.has_Kf(), "test function " + f.id() + " lacks required derivatives");
  const auto ens = run_ensemble(
      model, es.scheme, es.start, es.n_paths,
      [&](std::size_t) { return CompensatorObserver(battery, model, checkpoints, es.start); }, es.first_index);
  if (diverged) *diverged = ens.diverged;
  const std::size_t stride = checkpoints.size() + 1;
  std::vector<std::vector<std::vector<double>>> out(battery.size());
  for (std::size_t f = 0; f < battery.size(); ++f) {
    out[f].reserve(es.n_paths);
    for (std::size_t p = 0; p < es.n_paths; ++p) {
      if (ens.status[p] != PathStatus::ok) continue;
      const auto& v = ens.values[p];
      out[f].emplace_back(v.begin() + static_cast<long>(f * stride), v.begin() + static_cast<long>((f + 1) * stride));
    }
  }
  return out;
}

/// Two-sided mean-increment tests for every function of the battery.
/// `family_tests` is the Bonferroni family size at level `alpha`; by default
/// it is (functions × checkpoints) of this call.
inline std::vector<MartingaleReport> check_martingale(const std::vector<TestFunction>& battery, const Model& model,
                                                      const EnsembleSpec& es, const std::vector<double>& checkpoints,
                                                      double alpha = 0.01, int family_tests = 0) {
  if (family_tests <= 0) family_tests = static_cast<int>(battery.size() * checkpoints.size());
  const double zc = bonferroni_z(alpha, family_tests);
  std::size_t diverged = 0;
  const auto vals = compensated_values(battery, model, es, checkpoints, &diverged);
  std::vector<MartingaleReport> out;
  for (std::size_t f = 0; f < battery.size(); ++f) {
    out.push_back(increment_report(battery[f].id(), vals[f], checkpoints, zc, false));
    out.back().diverged = diverged;
  }
  return out;
}

/// Minimum of r ∂f/∂t + Kf over sample times and the surface quadrature.
inline double min_surface_drift(const TestFunction& f, const DiffusionSpec& spec, const Surface& surface,
                                double t_end, int time_samples = 64) {
  const auto quad = surface.quadrature();
  double m = INFINITY;
  for (int i = 0; i <= time_samples; ++i) {
    const double t = t_end * static_cast<double>(i) / time_samples;
    for (const auto& z : quad.points) {
      const double v = spec.r(z) * f.eval(t, z).dt + f.K(t, z, spec, surface);
      m = std::min(m, v);
    }
  }
  return m;
}

/// One-sided tests: the increments of X_f must not fall below -z SE.
/// Functions violating r ∂f/∂t + Kf >= 0 on the surface sample are rejected.
inline std::vector<MartingaleReport> check_submartingale(const std::vector<TestFunction>& battery, const Model& model,
                                                         const EnsembleSpec& es, const std::vector<double>& checkpoints,
                                                         double z_floor = 3.0) {
  for (const auto& f : battery) {
    const double m = min_surface_drift(f, model.spec(), model.surface(), es.scheme.t_end);
    if (m < -1e-12)
      throw InvalidInput("check_submartingale: " + f.id() + " has r df/dt + Kf < 0 on S (min " + std::to_string(m) +
                         ")");
  }
  std::size_t diverged = 0;
  const auto vals = compensated_values(battery, model, es, checkpoints, &diverged);
  std::vector<MartingaleReport> out;
  for (std::size_t f = 0; f < battery.size(); ++f) {
    out.push_back(increment_report(battery[f].id(), vals[f], checkpoints, z_floor, true));
    out.back().diverged = diverged;
  }
  return out;
}

/// Occupation identity ∫ 1_S du = ∫ r dγ at time t.
struct Corollary1Report {
  std::vector<double> eps;
  std::vector<double> lhs, lhs_se;  // physical time within the ε-band
  std::vector<double> rhs, rhs_se;  // ∫ r dγ
  std::vector<double> discrepancy;  // |lhs - rhs| / rhs per ε
  double lhs_extrapolated = 0.0;
  double rhs_mean = 0.0;
  double relative_discrepancy = 0.0;
  bool monotone = true;             // discrepancy shrinks with ε, one inversion allowed
  bool pass = false;
  double tolerance = 0.05;
};

namespace detail {

/// Band occupation and ∫ r dγ up to the first step end past t_end, with
/// band fractions of the step segment for several half-widths. A step with
/// dη > 0 touched S, so its segment runs through 0.
class OccupationObserver {
 public:
  OccupationObserver(const Model& model, const std::vector<double>& eps, double t_end)
      : model_(&model), eps_(&eps), t_end_(t_end), band_(eps.size(), 0.0) {}

  void on_step(const StepView& v) {
    if (done_) return;
    const Surface& s = model_->surface();
    const double a = std::abs(s.signed_distance(v.x0));
    double b = std::abs(s.signed_distance(v.x1));
    if (v.d_eta > 0.0) b = -b;
    for (std::size_t i = 0; i < eps_->size(); ++i)
      band_[i] += band_fraction(a, b, (*eps_)[i]) * (v.s1 - v.s0) + v.delay;
    rhs_ += v.delay;
    done_ = v.t1 >= t_end_;
  }

  std::vector<double> result() const {
    auto out = band_;
    out.push_back(rhs_);
    return out;
  }

 private:
  const Model* model_;
  const std::vector<double>* eps_;
  double t_end_;
  std::vector<double> band_;
  double rhs_ = 0.0;
  bool done_ = false;
};

}  // namespace detail

/// Compares the ensemble means of both sides at t. The band occupation has
/// an O(ε) excess (base-clock time near S), removed by linear Richardson
/// extrapolation over the two smallest half-widths.
inline Corollary1Report check_corollary1(const Model& model, const EnsembleSpec& es, std::vector<double> eps,
                                         double t, double tolerance = 0.05) {
  require(eps.size() >= 2, "check_corollary1: need at least two band widths");
  std::sort(eps.begin(), eps.end(), std::greater<>());
  require(eps.back() > 0.0, "check_corollary1: band widths must be positive");
  require(t > 0.0 && t <= es.scheme.t_end, "check_corollary1: t outside the horizon");
  const auto ens = run_ensemble(
      model, es.scheme, es.start, es.n_paths, [&](std::size_t) { return detail::OccupationObserver(model, eps, t); },
      es.first_index);
  Corollary1Report rep;
  rep.eps = eps;
  rep.tolerance = tolerance;
  std::vector<RunningStats> L(eps.size());
  RunningStats R;
  for (std::size_t p = 0; p < ens.values.size(); ++p) {
    if (ens.status[p] != PathStatus::ok) continue;
    for (std::size_t i = 0; i < eps.size(); ++i) L[i].add(ens.values[p][i]);
    R.add(ens.values[p].back());
  }
  rep.rhs_mean = R.mean();
  for (std::size_t i = 0; i < eps.size(); ++i) {
    rep.lhs.push_back(L[i].mean());
    rep.lhs_se.push_back(L[i].standard_error());
    rep.rhs.push_back(R.mean());
    rep.rhs_se.push_back(R.standard_error());
    const double scale = std::max(std::abs(R.mean()), 1e-300);
    rep.discrepancy.push_back(std::abs(L[i].mean() - R.mean()) / scale);
  }
  const std::size_t n = eps.size();
  const double e1 = eps[n - 2], e2 = eps[n - 1];
  rep.lhs_extrapolated = (e1 * rep.lhs[n - 1] - e2 * rep.lhs[n - 2]) / (e1 - e2);
  int inversions = 0;
  for (std::size_t i = 1; i < n; ++i) inversions += rep.discrepancy[i] > rep.discrepancy[i - 1] ? 1 : 0;
  rep.monotone = inversions <= 1;
  if (rep.rhs_mean == 0.0) {
    rep.relative_discrepancy = std::abs(rep.lhs_extrapolated);
    rep.pass = rep.relative_discrepancy == 0.0;
  } else {
    rep.relative_discrepancy = std::abs(rep.lhs_extrapolated - rep.rhs_mean) / std::abs(rep.rhs_mean);
    rep.pass = rep.relative_discrepancy <= tolerance;
  }
  return rep;
}

/// Fraction of paths from a start on S with γ(t) > 0.
inline double fraction_gamma_positive(const Model& model, const EnsembleSpec& es, double t) {
  require(model.surface().unsigned_distance(es.start) <= Surface::input_tolerance(es.start),
          "fraction_gamma_positive: start must lie on S");
  struct Obs {
    double t;
    double gamma = 0.0;
    bool done = false;
    void on_step(const StepView& v) {
      if (done) return;
      if (v.t0 < t) gamma = v.eta1;
      done = v.t1 >= t;
    }
    double result() const { return gamma; }
  };
  const auto ens = run_ensemble(model, es.scheme, es.start, es.n_paths, [&](std::size_t) { return Obs{t}; },
                                es.first_index);
  std::size_t pos = 0, ok = 0;
  for (std::size_t p = 0; p < ens.values.size(); ++p) {
    if (ens.status[p] != PathStatus::ok) continue;
    ++ok;
    pos += ens.values[p] > 0.0 ? 1 : 0;
  }
  require(ok > 0, "fraction_gamma_positive: every path diverged");
  return static_cast<double>(pos) / static_cast<double>(ok);
}

/// Mean-increment test of h(τ(θ)) - ∫₀^θ K̃h(τ(u)) du in the local-time clock.
struct BoundaryMartingaleReport {
  MartingaleReport test;
  double truncation_fraction = 0.0;  // paths with γ(T_end) below the last θ
  bool conclusive = true;            // false if truncation exceeds the limit
  bool pass = false;
};

namespace detail {

/// Streams the boundary process of a point membrane. On a step, γ rises
/// by dη over the delay [t₀+ds, t₁] (linearly) or at t₀+ds when r = 0, so a
/// θ-checkpoint passed inside the step gets τ(θ) interpolated there. The
/// compensator ∫ K̃h(τ(u)) du equals ∫ K̃h(t) dγ(t), taken with the
/// midpoint of the delay and split at θ. Beyond γ(T_end) the path sits in
/// the cemetery; both h and K̃h vanish there when T_end covers the support of h.
class BoundaryObserver {
 public:
  BoundaryObserver(const BoundaryData& h, const SurfaceTable& kt, const std::vector<double>& thetas)
      : h_(&h), kt_(&kt), thetas_(&thetas), values_(thetas.size() + 1, 0.0) {
    values_[0] = h.h(0.0);
  }

  void on_step(const StepView& v) {
    if (next_ >= thetas_->size() || v.d_eta <= 0.0) return;
    const double g0 = v.eta1 - v.d_eta;
    const double tb = v.t0 + (v.s1 - v.s0);
    while (next_ < thetas_->size() && (*thetas_)[next_] < v.eta1) {
      const double th = (*thetas_)[next_];
      const double frac = (th - g0) / v.d_eta;
      const double tau = tb + frac * v.delay;
      const double part = kt_->at(0.5 * (tb + tau)) * (th - g0);
      values_[next_ + 1] = h_->h(tau) - (integral_ + part);
      ++next_;
    }
    integral_ += kt_->at(tb + 0.5 * v.delay) * v.d_eta;
  }

  /// M at θ_0 = 0 and each checkpoint, plus a trailing truncation flag.
  std::vector<double> result() const {
    auto out = values_;
    // Cemetery: h = K̃h = 0 past the support, so M stays at -∫ K̃h dγ.
    for (std::size_t k = next_; k < thetas_->size(); ++k) out[k + 1] = -integral_;
    out.push_back(next_ < thetas_->size() ? 1.0 : 0.0);
    return out;
  }

 private:
  const BoundaryData* h_;
  const SurfaceTable* kt_;
  const std::vector<double>* thetas_;
  std::vector<double> values_;
  double integral_ = 0.0;
  std::size_t next_ = 0;
};

}  // namespace detail

/// Point membranes only; the start must be the membrane point and the
/// horizon must cover the support of h.
inline BoundaryMartingaleReport check_boundary_martingale(const BoundaryData& h, const SurfaceTable& ktilde,
                                                          const Model& model, const EnsembleSpec& es,
                                                          const std::vector<double>& thetas, double alpha = 0.01,
                                                          int family_tests = 0, double max_truncation = 0.2) {
  h.validate();
  require(model.surface().kind() == SurfaceKind::point, "check_boundary_martingale: point membranes only");
  require(model.surface().unsigned_distance(es.start) <= Surface::input_tolerance(es.start),
          "boundary process needs a start on S");
  require(es.scheme.t_end >= h.support_end, "check_boundary_martingale: horizon must cover the support of h");
  require(!thetas.empty() && thetas.front() > 0.0 && std::is_sorted(thetas.begin(), thetas.end()),
          "theta checkpoints must be positive and increasing");
  if (family_tests <= 0) family_tests = static_cast<int>(thetas.size());
  const auto ens = run_ensemble(
      model, es.scheme, es.start, es.n_paths, [&](std::size_t) { return detail::BoundaryObserver(h, ktilde, thetas); },
      es.first_index);
  std::vector<std::vector<double>> vals;
  std::size_t truncated = 0;
  for (std::size_t p = 0; p < ens.values.size(); ++p) {
    if (ens.status[p] != PathStatus::ok) continue;
    auto v = ens.values[p];
    truncated += v.back() > 0.0 ? 1 : 0;
    v.pop_back();
    vals.push_back(std::move(v));
  }
  BoundaryMartingaleReport rep;
  rep.test = increment_report("boundary", vals, thetas, bonferroni_z(alpha, family_tests), false);
  rep.test.diverged = ens.diverged;
  rep.truncation_fraction = static_cast<double>(truncated) / static_cast<double>(std::max<std::size_t>(1, vals.size()));
  rep.conclusive = rep.truncation_fraction <= max_truncation;
  rep.pass = rep.conclusive && rep.test.pass;
  return rep;
}

/// E_x φ(x(t)) by the three routes: Monte Carlo, the interface PDE and, for
/// r = 0 on a point membrane, quadrature against the G₀ density.
struct RouteComparison {
  std::string id;
  double t = 0.0;
  double mc = 0.0, mc_se = 0.0;
  double pde = 0.0;
  std::optional<double> density;
  double max_gap = 0.0;
  double budget = 0.0;  // 3 SE + grid budget for gaps involving MC, grid budget otherwise
  bool pass = false;
};

struct RouteFunction {
  std::string id;
  std::function<double(double)> phi;  // line coordinate or radius
};

struct UniquenessReport {
  std::vector<RouteComparison> rows;
  bool pass = true;
};

struct RouteSettings {
  EnsembleSpec mc;
  double pde_dx = 5e-3;
  double pde_dt = 1e-4;
  double pde_xmax = 8.0;
  TimeGrid density_grid{1e-3, 1.0};
  double grid_budget = 1e-2;
};

namespace detail {

/// Coordinate handed to φ: the line coordinate or the radius about the centre.
inline double route_coordinate(const Surface& s, const Vec& x) {
  return s.kind() == SurfaceKind::sphere ? (x - s.center()).norm() : x(0);
}

}  // namespace detail

inline UniquenessReport check_uniqueness_consistency(const Model& model, const std::vector<RouteFunction>& phis,
                                                     const std::vector<double>& times, const RouteSettings& rs) {
  require(!phis.empty() && !times.empty(), "check_uniqueness_consistency: empty battery");
  const Surface& S = model.surface();
  const DiffusionSpec& spec = model.spec();
  const bool line = S.kind() == SurfaceKind::point;
  require(line || S.kind() == SurfaceKind::sphere, "route comparison needs a point or a sphere");
  std::vector<double> ts = times;
  std::sort(ts.begin(), ts.end());
  auto scheme = rs.mc.scheme;
  scheme.t_end = std::max(scheme.t_end, ts.back());

  // (i) Monte Carlo: φ(x) at the first step end past each t.
  struct Obs {
    const std::vector<RouteFunction>* phis;
    const std::vector<double>* ts;
    const Surface* S;
    std::vector<double> out;
    std::size_t next = 0;
    void on_step(const StepView& v) {
      while (next < ts->size() && v.t1 >= (*ts)[next] - 1e-9 * (v.s1 - v.s0)) {
        const double c = detail::route_coordinate(*S, v.x1);
        for (std::size_t f = 0; f < phis->size(); ++f) out[next * phis->size() + f] = (*phis)[f].phi(c);
        ++next;
      }
    }
    std::vector<double> result() const { return out; }
  };
  const auto ens = run_ensemble(
      model, scheme, rs.mc.start, rs.mc.n_paths,
      [&](std::size_t) { return Obs{&phis, &ts, &S, std::vector<double>(ts.size() * phis.size(), 0.0)}; },
      rs.mc.first_index);

  // (ii) interface PDE, one run per φ with all times saved.
  const double x0 = detail::route_coordinate(S, rs.mc.start);
  std::vector<GridFunction> pde;
  for (const auto& f : phis) {
    Grid1D g = line ? Grid1D::line(S.offset(), rs.pde_xmax, rs.pde_dx, rs.pde_dt, ts.back())
                    : Grid1D::radial(S.radius(), rs.pde_xmax, rs.pde_dx, rs.pde_dt,
                                     ts.back());
    g.save_times = ts;
    pde.push_back(solve_interface_heat(spec, S, f.phi, g));
  }

  // (iii) density route where G₀ is the law: r = 0 on a point membrane.
  const bool density_route = line && spec.r.is_constant() && spec.r.constant() == 0.0 && spec.constant_b();
  std::optional<G0Representation> rep;
  if (density_route) {
    TimeGrid tg = rs.density_grid;
    tg.t_end = std::max(tg.t_end, ts.back());
    rep.emplace(spec, S, rs.mc.start, tg);
  }

  UniquenessReport out;
  for (std::size_t k = 0; k < ts.size(); ++k) {
    for (std::size_t f = 0; f < phis.size(); ++f) {
      RouteComparison row;
      row.id = phis[f].id;
      row.t = ts[k];
      RunningStats s;
      for (std::size_t p = 0; p < ens.values.size(); ++p)
        if (ens.status[p] == PathStatus::ok) s.add(ens.values[p][k * phis.size() + f]);
      row.mc = s.mean();
      row.mc_se = s.standard_error();
      const auto& G = pde[f];
      row.pde = G.at(G.time_index(ts[k]), x0);
      row.budget = 3.0 * row.mc_se + rs.grid_budget;
      row.max_gap = std::abs(row.mc - row.pde);
      bool ok = row.max_gap <= row.budget;
      if (rep) {
        row.density = rep->expectation(ts[k], phis[f].phi);
        const double g1 = std::abs(row.mc - *row.density), g2 = std::abs(row.pde - *row.density);
        ok = ok && g1 <= row.budget && g2 <= rs.grid_budget;
        row.max_gap = std::max({row.max_gap, g1, g2});
      }
      row.pass = ok;
      out.pass = out.pass && ok;
      out.rows.push_back(row);
    }
  }
  return out;
}

}  // namespace membrane
