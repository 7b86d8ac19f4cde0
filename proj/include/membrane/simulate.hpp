#pragma once

#include "membrane/coefficients.hpp"
#include "membrane/geometry.hpp"
#include "membrane/parallel.hpp"
#include "membrane/rng.hpp"

#include <boost/random/normal_distribution.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace membrane {

enum class SkewMode { crossing_resample, mollified_drift };

/// How the local-time functional η is accumulated along a discrete path.
///  - band:   (1/2ε) × time the linearly interpolated path spends within ε of S.
///  - bridge: exact draw of the Brownian-bridge local time of the normal
///            coordinate given the step end points (crossing mode only).
enum class EtaMethod { band, bridge };

struct SimScheme {
  double dt = 1e-4;
  SkewMode skew_mode = SkewMode::crossing_resample;
  double eps = 0.01;
  double eps_drift = 0.01;
  double t_end = 1.0;
  EtaMethod eta = EtaMethod::bridge;
  std::uint64_t seed = 0;

  void validate() const {
    require(dt > 0.0 && std::isfinite(dt), "scheme: dt must be positive");
    require(eps > 0.0, "scheme: band half-width must be positive");
    require(t_end > 0.0, "scheme: horizon must be positive");
    if (skew_mode == SkewMode::mollified_drift) {
      require(eps_drift > 0.0, "scheme: eps_drift must be positive");
      require(eta == EtaMethod::band, "scheme: mollified drift needs the band local-time estimator");
    }
  }
};

/// Coefficients plus surface with the per-run precomputation the stepper needs.
class Model {
 public:
  Model(DiffusionSpec spec, Surface surface, bool audit = true)
      : spec_(std::move(spec)), surface_(std::move(surface)) {
    require(spec_.dim() == surface_.dim(), "model: coefficient and surface dimensions differ");
    if (audit) {
      const JReport rep = validate_conditions_J(spec_, surface_, JAudit{256, 7, 5.0});
      if (!rep.pass) throw InvalidInput("model: " + rep.summary());
    }
    if (spec_.constant_b()) {
      sqrt_b_ = sqrt_spd(spec_.b.constant());
      if (surface_.kind() != SurfaceKind::sphere) {
        const Vec nu = surface_.plane_normal();
        conormal_ = spec_.b.constant() * nu;
        sigma_n2_ = nu.dot(conormal_);
        flat_const_ = true;
      }
    }
    if (surface_.kind() == SurfaceKind::point && flat_const_) {
      const Vec c = surface_.center();
      point_ = PointData{surface_.offset(), std::sqrt(sigma_n2_), spec_.q(c), spec_.r(c)};
    }
  }

  /// Scalar data for the point membrane on the line with constant b; the
  /// foot point is always c, so q and r are numbers.
  struct PointData {
    double c, sigma, q, r;
  };
  const std::optional<PointData>& point_data() const { return point_; }

  const DiffusionSpec& spec() const { return spec_; }
  const Surface& surface() const { return surface_; }
  int dim() const { return surface_.dim(); }

  Mat sqrt_b(const Vec& x) const { return spec_.constant_b() ? sqrt_b_ : sqrt_spd(spec_.b(x)); }

  /// Co-normal N and (bν, ν) at the foot point z.
  std::pair<Vec, double> conormal(const Vec& z) const {
    if (flat_const_) return {conormal_, sigma_n2_};
    const Vec nu = surface_.normal(z);
    Vec n = spec_.b(z) * nu;
    const double s2 = nu.dot(n);
    return {std::move(n), s2};
  }

  /// Moves x to the opposite side, keeping |signed distance|: along N for
  /// flat surfaces, radially for spheres.
  Vec flip_side(const Vec& x, const Vec& z) const {
    if (surface_.kind() == SurfaceKind::sphere) return surface_.reflect(x);
    const auto [n, s2] = conormal(z);
    return x - (2.0 * surface_.signed_distance(x) / s2) * n;
  }

 private:
  DiffusionSpec spec_;
  Surface surface_;
  Mat sqrt_b_;
  Vec conormal_;
  double sigma_n2_ = 1.0;
  bool flat_const_ = false;
  std::optional<PointData> point_;
};

/// Fraction of the segment a→b (signed distances, linear in between) lying in (-ε, ε).
inline double band_fraction(double a, double b, double eps) {
  if (a == b) return std::abs(a) < eps ? 1.0 : 0.0;
  double u0 = (-eps - a) / (b - a);
  double u1 = (eps - a) / (b - a);
  if (u0 > u1) std::swap(u0, u1);
  return std::max(0.0, std::min(1.0, u1) - std::max(0.0, u0));
}

/// Smooth bump on (-ε, ε) with unit integral.
inline double band_density(double s, double eps) {
  if (std::abs(s) >= eps) return 0.0;
  return (1.0 + std::cos(M_PI * s / eps)) / (2.0 * eps);
}

/// One operational step of the base (skewed, not yet time-changed) process.
struct BaseStep {
  Vec x_next;
  Vec contact;          // foot point where local time accrued
  double d_eta = 0.0;   // local-time increment (per `EtaMethod`)
  double band = 0.0;    // fraction of the step inside the ε-band
  bool hit = false;     // the step touched S
};

enum class PathStatus { ok, diverged };

/// Per-path step generator. Owns the path's counter-based random stream.
class BaseStepper {
 public:
  BaseStepper(const Model& model, const SimScheme& scheme, std::uint64_t path_index)
      : model_(model), scheme_(scheme), rng_(scheme.seed, path_index), sqdt_(std::sqrt(scheme.dt)) {}

  BaseStep step(const Vec& x) {
    const Surface& S = model_.surface();
    const int d = model_.dim();
    Vec dw(d);
    for (int i = 0; i < d; ++i) dw(i) = normal_(rng_);
    BaseStep out;
    const double a = S.signed_distance(x);
    if (scheme_.skew_mode == SkewMode::mollified_drift) {
      const Vec z = S.project(x);
      Vec y = x + sqdt_ * (model_.sqrt_b(x) * dw);
      const double w = band_density(a, scheme_.eps_drift);
      if (w > 0.0) {
        const double q = model_.spec().q(z);
        if (!(std::abs(q) < 1.0))
          throw InvalidInput("mollified drift needs |q| < 1 on the surface");
        const auto [n, s2] = model_.conormal(z);
        y += (std::atanh(q) * w * scheme_.dt) * n;
      }
      const double b = S.signed_distance(y);
      out.band = band_fraction(a, b, scheme_.eps);
      out.d_eta = out.band * scheme_.dt / (2.0 * scheme_.eps);
      out.contact = z;
      out.hit = (a > 0.0) != (b > 0.0);
      out.x_next = std::move(y);
      return out;
    }

    Vec y = x + sqdt_ * (model_.sqrt_b(x) * dw);
    const double b = S.signed_distance(y);
    // Foot point: linear crossing estimate when the sign changes, else start.
    const Vec z = ((a > 0.0) != (b > 0.0) && a != b) ? S.project(x + (a / (a - b)) * (y - x)) : S.project(x);
    const double s2 = model_.conormal(z).second;
    const double sn = std::sqrt(s2);
    const double al = std::abs(a) / sn, be = std::abs(b) / sn;
    const double jump2 = (b - a) * (b - a) / s2;
    // Local time of the normal coordinate given the end points:
    // P(L > l) = exp(-((|α|+|β|+l)² - (β-α)²) / 2dt).
    const double expo = ((al + be) * (al + be) - jump2) / (2.0 * scheme_.dt);
    double lt = 0.0;
    if (expo < 60.0) {
      const double u = rng_.uniform();
      lt = std::max(0.0, std::sqrt(jump2 - 2.0 * scheme_.dt * std::log(u)) - al - be);
    }
    out.hit = lt > 0.0;
    out.contact = z;
    if (out.hit) {
      const double p = 0.5 * (1.0 + model_.spec().q(z));
      const bool exterior = rng_.uniform() < p;
      if (exterior != (b > 0.0) && b != 0.0) y = model_.flip_side(y, z);
    }
    const double b2 = S.signed_distance(y);
    out.band = band_fraction(a, b2, scheme_.eps);
    out.d_eta = scheme_.eta == EtaMethod::bridge ? lt / sn : out.band * scheme_.dt / (2.0 * scheme_.eps);
    out.x_next = std::move(y);
    return out;
  }

  /// Same law as `step` for the point membrane with constant b, on scalars.
  struct ScalarStep {
    double y, d_eta, band;
    bool hit;
  };
  ScalarStep step_scalar(double x, const Model::PointData& pd) {
    const double dt = scheme_.dt;
    const double a = x - pd.c;
    double y = x + sqdt_ * pd.sigma * normal_(rng_);
    if (scheme_.skew_mode == SkewMode::mollified_drift) {
      const double w = band_density(a, scheme_.eps_drift);
      if (w > 0.0) {
        if (!(std::abs(pd.q) < 1.0)) throw InvalidInput("mollified drift needs |q| < 1 on the surface");
        y += std::atanh(pd.q) * w * dt * pd.sigma * pd.sigma;
      }
      const double band = band_fraction(a, y - pd.c, scheme_.eps);
      return {y, band * dt / (2.0 * scheme_.eps), band, (a > 0.0) != (y - pd.c > 0.0)};
    }
    const double b = y - pd.c;
    const double al = std::abs(a) / pd.sigma, be = std::abs(b) / pd.sigma;
    const double jump2 = (b - a) * (b - a) / (pd.sigma * pd.sigma);
    const double expo = ((al + be) * (al + be) - jump2) / (2.0 * dt);
    double lt = 0.0;
    if (expo < 60.0) lt = std::max(0.0, std::sqrt(jump2 - 2.0 * dt * std::log(rng_.uniform())) - al - be);
    const bool hit = lt > 0.0;
    if (hit) {
      const bool exterior = rng_.uniform() < 0.5 * (1.0 + pd.q);
      if (exterior != (b > 0.0) && b != 0.0) y = pd.c - b;
    }
    const double band = band_fraction(a, y - pd.c, scheme_.eps);
    const double d_eta = scheme_.eta == EtaMethod::bridge ? lt / pd.sigma : band * dt / (2.0 * scheme_.eps);
    return {y, d_eta, band, hit};
  }

 private:
  const Model& model_;
  const SimScheme& scheme_;
  Philox rng_;
  boost::random::normal_distribution<double> normal_;
  double sqdt_;
};

/// Everything an observer sees for one step of the time-changed process.
struct StepView {
  std::size_t k;
  double s0, s1;         // operational clock
  double t0, t1;         // physical clock: t1 = t0 + ds + r dη
  const Vec& x0;         // state at t0
  const Vec& x1;         // state at t1
  const Vec& contact;
  double d_eta;          // increment of η (= increment of γ on the physical clock)
  double eta1;           // η(s1) = γ(t1)
  double delay;          // r(contact) dη, time held on S
  double band_time;      // physical time within the ε-band (base occupation + delay)
};

/// Runs one path of the membrane process until the physical clock reaches
/// the horizon, feeding every step to `obs.on_step(const StepView&)`.
template <class Observer>
PathStatus stream_path(const Model& model, const SimScheme& scheme, const Vec& start,
                       std::uint64_t path_index, Observer& obs) {
  BaseStepper stepper(model, scheme, path_index);
  Vec x = start;
  double s = 0.0, t = 0.0, eta = 0.0;
  const double ds = scheme.dt;
  if (const auto& pd = model.point_data()) {
    Vec x1(1);
    const Vec& contact = model.surface().center();
    for (std::size_t k = 0; t < scheme.t_end; ++k) {
      const auto st = stepper.step_scalar(x(0), *pd);
      if (!std::isfinite(st.y)) return PathStatus::diverged;
      const double delay = st.d_eta > 0.0 ? pd->r * st.d_eta : 0.0;
      const double t1 = t + ds + delay;
      const double eta1 = eta + st.d_eta;
      x1(0) = st.y;
      StepView v{k, s, s + ds, t, t1, x, x1, contact, st.d_eta, eta1, delay, st.band * ds + delay};
      obs.on_step(v);
      x(0) = st.y;
      s += ds;
      t = t1;
      eta = eta1;
    }
    return PathStatus::ok;
  }
  for (std::size_t k = 0; t < scheme.t_end; ++k) {
    BaseStep st = stepper.step(x);
    if (!st.x_next.allFinite()) return PathStatus::diverged;
    const double delay = st.d_eta > 0.0 ? model.spec().r(st.contact) * st.d_eta : 0.0;
    const double t1 = t + ds + delay;
    const double eta1 = eta + st.d_eta;
    StepView v{k, s, s + ds, t, t1, x, st.x_next, st.contact, st.d_eta, eta1, delay, st.band * ds + delay};
    obs.on_step(v);
    x = std::move(st.x_next);
    s += ds;
    t = t1;
    eta = eta1;
  }
  return PathStatus::ok;
}

/// Per-path observer results of an ensemble, in path order.
template <class R>
struct Ensemble {
  std::vector<R> values;
  std::vector<PathStatus> status;
  std::size_t diverged = 0;
};

/// Streams `n_paths` independent paths (stream indices first_index + p);
/// `make(p)` builds the observer of path p, whose `result()` is collected.
template <class Factory>
auto run_ensemble(const Model& model, const SimScheme& scheme, const Vec& start, std::size_t n_paths,
                  Factory&& make, std::uint64_t first_index = 0) {
  scheme.validate();
  require(start.size() == model.dim(), "run_ensemble: start has wrong dimension");
  using Obs = decltype(make(std::size_t{0}));
  using R = decltype(std::declval<Obs&>().result());
  Ensemble<R> ens;
  ens.values.resize(n_paths);
  ens.status.assign(n_paths, PathStatus::ok);
  parallel_for(n_paths, [&](std::size_t p) {
    Obs obs = make(p);
    ens.status[p] = stream_path(model, scheme, start, first_index + p, obs);
    ens.values[p] = obs.result();
  });
  for (auto s : ens.status) ens.diverged += s == PathStatus::diverged ? 1 : 0;
  return ens;
}

/// Discretized trajectory: base layer on the operational grid and the
/// time-changed layer on the physical grid (one physical node per base node).
struct PathBundle {
  std::vector<double> base_times;
  std::vector<Vec> base_states;
  std::vector<double> eta;
  std::vector<Vec> contacts;
  std::vector<double> base_band;      // per-step band fraction (size n-1)
  std::vector<double> changed_times;
  std::vector<Vec> states;
  std::vector<double> gamma;
  std::vector<double> occupation_S;
  std::vector<bool> on_band;
  bool truncated = false;
  PathStatus status = PathStatus::ok;

  bool has_changed_layer() const { return !changed_times.empty(); }
};

/// Base layer only: x0 on the operational grid [0, t_end], with η from the
/// scheme's estimator.
inline std::vector<PathBundle> simulate_base(const Model& model, const Vec& start, const SimScheme& scheme,
                                             std::size_t n_paths, std::uint64_t first_index = 0) {
  scheme.validate();
  require(start.size() == model.dim(), "simulate_base: start has wrong dimension");
  std::vector<PathBundle> out(n_paths);
  const auto n_steps = static_cast<std::size_t>(std::ceil(scheme.t_end / scheme.dt - 1e-9));
  parallel_for(n_paths, [&](std::size_t p) {
    PathBundle& pb = out[p];
    BaseStepper stepper(model, scheme, first_index + p);
    pb.base_times.reserve(n_steps + 1);
    pb.base_times.push_back(0.0);
    pb.base_states.push_back(start);
    pb.eta.push_back(0.0);
    pb.contacts.push_back(model.surface().project(start));
    for (std::size_t k = 0; k < n_steps; ++k) {
      BaseStep st = stepper.step(pb.base_states.back());
      if (!st.x_next.allFinite()) {
        pb.status = PathStatus::diverged;
        break;
      }
      pb.base_times.push_back(static_cast<double>(k + 1) * scheme.dt);
      pb.eta.push_back(pb.eta.back() + st.d_eta);
      pb.base_band.push_back(st.band);
      pb.contacts.push_back(std::move(st.contact));
      pb.base_states.push_back(std::move(st.x_next));
    }
  });
  return out;
}

/// Band estimator η(s) = (1/2ε) ∫₀ˢ 1{d(x₀(u), S) < ε} du on the step grid,
/// with the signed distance interpolated linearly inside each step.
inline std::vector<double> estimate_eta(const PathBundle& path, const Surface& surface, double eps) {
  require(eps > 0.0, "estimate_eta: eps must be positive");
  require(!path.base_states.empty(), "estimate_eta: empty path");
  std::vector<double> eta(path.base_states.size(), 0.0);
  for (std::size_t k = 1; k < path.base_states.size(); ++k) {
    const double a = surface.signed_distance(path.base_states[k - 1]);
    const double b = surface.signed_distance(path.base_states[k]);
    const double ds = path.base_times[k] - path.base_times[k - 1];
    eta[k] = eta[k - 1] + band_fraction(a, b, eps) * ds / (2.0 * eps);
  }
  return eta;
}

/// Random time change: A(s) = s + ∫ r dη, ζ_t = inf{s : A(s) >= t},
/// x(t) = x₀(ζ_t), γ(t) = η(ζ_t). The changed layer is stored on the nodes
/// t_k = A(s_k); `occupation_S` counts base band time plus the delays.
/// `t_end` marks the physical horizon; if A(s_last) < t_end the path is flagged truncated.
inline void apply_time_change(PathBundle& path, const DiffusionSpec& spec, const Surface& surface,
                              double eps, std::optional<double> t_end = std::nullopt) {
  require(path.eta.size() == path.base_states.size(), "apply_time_change: η missing");
  const std::size_t n = path.base_states.size();
  path.changed_times.assign(n, 0.0);
  path.states = path.base_states;
  path.gamma = path.eta;
  path.occupation_S.assign(n, 0.0);
  path.on_band.assign(n, false);
  for (std::size_t k = 0; k < n; ++k) path.on_band[k] = surface.unsigned_distance(path.states[k]) < eps;
  for (std::size_t k = 1; k < n; ++k) {
    const double ds = path.base_times[k] - path.base_times[k - 1];
    const double de = path.eta[k] - path.eta[k - 1];
    const Vec& z = k < path.contacts.size() ? path.contacts[k] : path.contacts.back();
    const double delay = de > 0.0 ? spec.r(z) * de : 0.0;
    path.changed_times[k] = path.changed_times[k - 1] + ds + delay;
    const double a = surface.signed_distance(path.base_states[k - 1]);
    const double b = surface.signed_distance(path.base_states[k]);
    path.occupation_S[k] = path.occupation_S[k - 1] + band_fraction(a, b, eps) * ds + delay;
  }
  path.truncated = t_end.has_value() && path.changed_times.back() < *t_end;
}

/// Index of ζ_t on the grid: first k with A(s_k) >= t (last index if none).
inline std::size_t time_change_index(const PathBundle& path, double t) {
  const auto it = std::lower_bound(path.changed_times.begin(), path.changed_times.end(), t);
  if (it == path.changed_times.end()) return path.changed_times.size() - 1;
  return static_cast<std::size_t>(it - path.changed_times.begin());
}

/// Time-changed boundary process in the local-time clock θ.
struct BoundaryPath {
  std::vector<double> thetas;
  std::vector<double> tau;
  std::vector<Vec> y;
  std::optional<double> exhausted_at;  // θ beyond which (τ, y) is sent to the cemetery
};

/// τ(θ) = sup{t : γ(t) <= θ} on the grid (rightmost node on ties) and
/// y(θ) = projection of x(τ(θ)). Entries with θ >= γ(T_end) are omitted
/// and `exhausted_at` records γ(T_end).
inline BoundaryPath extract_boundary_process(const PathBundle& path, const Surface& surface,
                                             const std::vector<double>& thetas) {
  require(path.has_changed_layer(), "extract_boundary_process: apply the time change first");
  const Vec& x0 = path.states.front();
  if (surface.unsigned_distance(x0) > Surface::input_tolerance(x0))
    throw InvalidInput("extract_boundary_process: the boundary process needs a start on S");
  BoundaryPath bp;
  const double g_end = path.gamma.back();
  for (double th : thetas) {
    require(th >= 0.0, "extract_boundary_process: θ must be >= 0");
    if (th >= g_end) {
      bp.exhausted_at = g_end;
      break;
    }
    // last k with γ_k <= θ
    const auto it = std::upper_bound(path.gamma.begin(), path.gamma.end(), th);
    const auto k = static_cast<std::size_t>(it - path.gamma.begin()) - 1;
    bp.thetas.push_back(th);
    bp.tau.push_back(path.changed_times[k]);
    bp.y.push_back(surface.project(path.states[k]));
  }
  return bp;
}

/// Histogram estimate of a one-dimensional law with binomial standard errors.
struct DensityTable {
  std::vector<double> edges;
  std::vector<double> density;
  std::vector<double> se;
  double underflow = 0.0;  // probability mass below edges.front()
  double overflow = 0.0;
  std::size_t n = 0;

  double total_mass() const {
    double m = underflow + overflow;
    for (std::size_t i = 0; i < density.size(); ++i) m += density[i] * (edges[i + 1] - edges[i]);
    return m;
  }
};

inline DensityTable empirical_density(const std::vector<double>& samples, double lo, double hi, int bins) {
  require(!samples.empty(), "empirical_density: empty ensemble");
  require(hi > lo && bins >= 1, "empirical_density: bad binning");
  DensityTable t;
  t.n = samples.size();
  const double w = (hi - lo) / bins;
  for (int i = 0; i <= bins; ++i) t.edges.push_back(lo + w * i);
  t.edges.back() = hi;
  std::vector<std::size_t> counts(static_cast<std::size_t>(bins), 0);
  std::size_t under = 0, over = 0;
  for (double v : samples) {
    if (v < lo) {
      ++under;
    } else if (v >= hi) {
      ++over;
    } else {
      auto i = static_cast<std::size_t>((v - lo) / w);
      if (i >= counts.size()) i = counts.size() - 1;
      ++counts[i];
    }
  }
  const double n = static_cast<double>(samples.size());
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const double p = static_cast<double>(counts[i]) / n;
    const double width = t.edges[i + 1] - t.edges[i];
    t.density.push_back(p / width);
    t.se.push_back(std::sqrt(p * (1.0 - p) / n) / width);
  }
  t.underflow = static_cast<double>(under) / n;
  t.overflow = static_cast<double>(over) / n;
  return t;
}

}  // namespace membrane
