// Batch front end: membrane {simulate|pde|potential|resolvent|verify|all}.
// Exit codes: 0 pass, 1 numeric failure or failed verdict, 2 usage or config error.

#include "membrane/config.hpp"
#include "membrane/pde.hpp"
#include "membrane/potential.hpp"
#include "membrane/simulate.hpp"
#include "membrane/verify.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

namespace fs = std::filesystem;
using namespace membrane;

namespace {

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> paths;
  std::optional<double> dt, eps, lambda, grid_dx, grid_dt;
};

RunConfig resolve(const Overrides& o) {
  RunConfig c = o.config.empty() ? RunConfig{} : load_config(o.config);
  if (o.seed) c.seed = *o.seed;
  if (o.out) c.out = *o.out;
  if (o.paths) c.battery.paths = *o.paths;
  if (o.dt) c.scheme.dt = *o.dt;
  if (o.eps) c.scheme.eps = *o.eps;
  if (o.lambda) c.battery.lambda = *o.lambda;
  if (o.grid_dx) c.grids.dx = *o.grid_dx;
  if (o.grid_dt) c.grids.dt = *o.grid_dt;
  return c;
}

/// Everything a stage needs, built once from the config.
struct Setup {
  RunConfig cfg;
  DiffusionSpec spec;
  Surface surface;
  Model model;
  SimScheme scheme;
  Vec start;

  explicit Setup(RunConfig c)
      : cfg(std::move(c)),
        spec(make_spec(cfg.coefficients)),
        surface(make_surface(cfg.surface, cfg.coefficients.dim)),
        model(spec, surface),
        scheme(make_scheme(cfg.scheme, cfg.seed)),
        start(make_vec(cfg.battery.start)) {
    require(start.size() == surface.dim(), "config: battery.start has the wrong dimension");
  }

  fs::path dir(const std::string& stage) const {
    fs::path p = fs::path(cfg.out) / stage;
    fs::create_directories(p);
    return p;
  }

  /// Line coordinate or radius of a point, for profiles.
  double coordinate(const Vec& x) const {
    return surface.kind() == SurfaceKind::sphere ? (x - surface.center()).norm() : x(0);
  }

  Grid1D grid(double t_end) const {
    if (surface.kind() == SurfaceKind::point)
      return Grid1D::line(surface.offset(), cfg.grids.x_max, cfg.grids.dx, cfg.grids.dt, t_end, cfg.grids.theta);
    require(surface.kind() == SurfaceKind::sphere, "pde: needs a point or a sphere");
    return Grid1D::radial(surface.radius(), cfg.grids.x_max, cfg.grids.dx, cfg.grids.dt, t_end, cfg.grids.theta);
  }

  /// Indicator of the exterior side, as a profile.
  std::function<double(double)> exterior_indicator() const {
    const double m = surface.kind() == SurfaceKind::sphere ? surface.radius() : surface.offset();
    return [m](double y) { return y > m ? 1.0 : 0.0; };
  }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int run_simulate(const Setup& s) {
  const auto t0 = Clock::now();
  struct Obs {
    Vec x;
    double gamma = 0.0;
    void on_step(const StepView& v) {
      x = v.x1;
      gamma = v.eta1;
    }
    std::pair<Vec, double> result() const { return {x, gamma}; }
  };
  const auto ens = run_ensemble(s.model, s.scheme, s.start, s.cfg.battery.paths,
                                [&](std::size_t) { return Obs{s.start}; });
  const auto dir = s.dir("simulate");
  std::vector<std::string> header{"path_id"};
  for (int i = 0; i < s.surface.dim(); ++i) header.push_back("x_" + std::to_string(i + 1));
  header.push_back("gamma");
  CsvWriter csv(dir / "endpoints.csv", header);
  std::vector<double> coord;
  for (std::size_t p = 0; p < ens.values.size(); ++p) {
    if (ens.status[p] != PathStatus::ok) continue;
    std::vector<double> row{static_cast<double>(p)};
    for (int i = 0; i < s.surface.dim(); ++i) row.push_back(ens.values[p].first(i));
    row.push_back(ens.values[p].second);
    csv.row(row);
    coord.push_back(s.coordinate(ens.values[p].first));
  }
  const double lo = s.surface.kind() == SurfaceKind::sphere ? 0.0 : s.surface.offset() - 5.0;
  const double hi = s.surface.kind() == SurfaceKind::sphere ? s.surface.radius() + 5.0 : s.surface.offset() + 5.0;
  const auto dens = empirical_density(coord, lo, hi, 100);
  CsvWriter dcsv(dir / "density.csv", {"lo", "hi", "density", "se"});
  for (std::size_t i = 0; i < dens.density.size(); ++i)
    dcsv.row({dens.edges[i], dens.edges[i + 1], dens.density[i], dens.se[i]});
  RunningStats ext;
  const auto ind = s.exterior_indicator();
  for (double c : coord) ext.add(ind(c));
  Json res{{"paths", ens.values.size()},
           {"diverged", ens.diverged},
           {"exterior_fraction", ext.mean()},
           {"exterior_fraction_se", ext.standard_error()},
           {"histogram_mass", dens.total_mass()}};
  write_json(dir / "manifest.json", manifest(s.cfg, "simulate", seconds_since(t0), res));
  std::printf("simulate: %zu paths, P(exterior at T) = %.5f +- %.5f\n", ens.values.size(), ext.mean(),
              ext.standard_error());
  return ens.diverged == 0 ? 0 : 1;
}

int run_pde(const Setup& s) {
  const auto t0 = Clock::now();
  Grid1D g = s.grid(s.cfg.grids.t_end);
  g.save_times = s.cfg.battery.checkpoints;
  std::erase_if(g.save_times, [&](double t) { return t > g.t_end; });
  if (g.save_times.empty()) g.save_times = {g.t_end};
  const auto u = solve_interface_heat(s.spec, s.surface, s.exterior_indicator(), g);
  const auto dir = s.dir("pde");
  CsvWriter csv(dir / "field.csv", {"t", "x", "u"});
  for (std::size_t k = 0; k < u.times.size(); ++k)
    for (std::size_t j = 0; j < u.nodes.size(); ++j) csv.row({u.times[k], u.nodes[j], u.values[k][j]});
  const double x0 = s.coordinate(s.start);
  Json values = Json::array();
  for (std::size_t k = 0; k < u.times.size(); ++k) values.push_back({{"t", u.times[k]}, {"u_at_start", u.at(k, x0)}});
  Json res{{"min", u.min_value()}, {"max", u.max_value()}, {"values", values}};
  write_json(dir / "manifest.json", manifest(s.cfg, "pde", seconds_since(t0), res));
  std::printf("pde: u(T, start) = %.6f, range [%.3g, %.3g]\n", u.at(u.times.size() - 1, x0), u.min_value(),
              u.max_value());
  const bool bounded = u.min_value() >= -1e-12 && u.max_value() <= 1.0 + 1e-12;
  return bounded ? 0 : 1;
}

int run_potential(const Setup& s) {
  const auto t0 = Clock::now();
  const TimeGrid tg{s.cfg.grids.potential_dt, s.cfg.grids.t_end};
  const auto dir = s.dir("potential");
  Json res;
  bool ok = true;
  if (s.surface.kind() == SurfaceKind::point) {
    const double c = s.surface.offset();
    std::vector<Vec> ys;
    for (int i = -30; i <= 30; ++i)
      if (i != 0) ys.push_back(make_vec({c + 0.1 * i}));
    const double lambda = s.cfg.battery.lambda;
    const auto G = solve_G_lambda(lambda, s.spec, s.surface, s.start, ys, tg);
    CsvWriter csv(dir / "kernels.csv", {"t", "x", "y", "G0", "G_lambda_11", "G_lambda_12"});
    for (std::size_t n = 0; n < G.g0.times.size(); ++n) {
      if ((n + 1) % 10 != 0) continue;
      for (std::size_t i = 0; i < ys.size(); ++i)
        csv.row({G.g0.times[n], s.start(0), ys[i](0), G.g0.values[n][i], G.target_route.values[n][i],
                 G.source_route.values[n][i]});
    }
    const G0Representation rep(s.spec, s.surface, s.start, tg);
    const double mass = rep.mass(tg.t_end);
    std::vector<Vec> far;
    for (double y : {-1.0, -0.5, -0.25, 0.25, 0.5, 1.0}) far.push_back(make_vec({c + y}));
    const auto flux = check_flux_condition(s.spec, s.surface, far, tg, s.cfg.grids.dx);
    res = {{"mass_at_T", mass},
           {"exterior_probability", rep.expectation(tg.t_end, s.exterior_indicator())},
           {"flux_residual", flux.max_residual},
           {"flux_residual_time", flux.at_time},
           {"lambda", lambda},
           {"route_discrepancy", G.discrepancy},
           {"bound_violation", G.worst_bound_violation},
           {"bounded", G.bounded}};
    ok = std::abs(mass - 1.0) <= 5e-4 && flux.max_residual <= 5e-3 && G.bounded;
    std::printf("potential: mass %.8f, flux residual %.2e, route gap %.2e, bounded %d\n", mass,
                flux.max_residual, G.discrepancy, G.bounded);
  } else {
    require(s.surface.kind() == SurfaceKind::sphere && s.surface.dim() == 3,
            "potential: point membranes or spheres in d = 3");
    const G0Representation rep(s.spec, s.surface, s.start, tg);
    const double mass = rep.mass(tg.time(tg.steps()));
    const auto flux = check_flux_condition(s.spec, s.surface, {s.surface.center()}, tg, s.cfg.grids.dx);
    res = {{"mass_at_T", mass}, {"flux_residual", flux.max_residual}};
    ok = std::abs(mass - 1.0) <= 5e-4 && flux.max_residual <= 1e-2;
    std::printf("potential: mass %.8f, flux residual %.2e\n", mass, flux.max_residual);
  }
  write_json(dir / "manifest.json", manifest(s.cfg, "potential", seconds_since(t0), res));
  return ok ? 0 : 1;
}

int run_resolvent(const Setup& s) {
  const auto t0 = Clock::now();
  const auto& b = s.cfg.battery.psi_bump;
  require(b.size() == 2 && b[0] < b[1], "config: psi_bump must be [a, b] with a < b");
  const TimeFactor bump = TimeFactor::bump(b[0], b[1]);
  const ResolventProblem prob{s.cfg.battery.lambda, [bump](double t) { return bump.eval(t).first; }, b[1]};
  const double dt = s.cfg.grids.potential_dt, dx = s.cfg.grids.dx;
  const auto V = solve_V_lambda(prob, s.spec, s.surface, dt, dx);
  const auto rep = check_resolvent(V);
  const auto Vh = solve_V_lambda(prob, s.spec, s.surface, dt / 2, dx / 2);
  const auto reph = check_resolvent(Vh);
  const double ratio = reph.sup_residual > 0.0 ? rep.sup_residual / reph.sup_residual : INFINITY;
  const auto dir = s.dir("resolvent");
  CsvWriter csv(dir / "trace.csv", {"t", "V", "residual"});
  for (std::size_t n = 0; n + 1 < V.times.size(); ++n) csv.row({V.times[n], V.trace[n], rep.residual[n]});
  Json res{{"lambda", prob.lambda},        {"sup_residual", rep.sup_residual}, {"at_time", rep.at_time},
           {"sup_residual_halved", reph.sup_residual}, {"halving_ratio", ratio},
           {"uniqueness_gap", V.uniqueness_gap}, {"march_gap", V.march_gap}};
  write_json(dir / "report.json", res);
  write_json(dir / "manifest.json", manifest(s.cfg, "resolvent", seconds_since(t0), res));
  std::printf("resolvent: sup residual %.3e (halved %.3e, ratio %.2f)\n", rep.sup_residual, reph.sup_residual, ratio);
  return rep.sup_residual <= 5e-3 ? 0 : 1;
}

Json to_json(const MartingaleReport& r) {
  return {{"id", r.id},         {"checkpoints", r.checkpoints}, {"mean_increment", r.mean_increment},
          {"standard_error", r.standard_error}, {"z", r.z}, {"critical", r.critical},
          {"one_sided", r.one_sided}, {"pass", r.pass}, {"n_paths", r.n_paths}, {"diverged", r.diverged}};
}

int run_verify(const Setup& s) {
  const auto t0 = Clock::now();
  const auto& bb = s.cfg.battery.bump;
  require(bb.size() == 2 && bb[0] < bb[1], "config: bump must be [a, b] with a < b");
  const auto battery = standard_battery(s.surface, s.cfg.battery.cap_m, bb[0], bb[1]);
  EnsembleSpec es{s.scheme, s.start, s.cfg.battery.paths, 0};
  es.scheme.t_end = std::max(es.scheme.t_end, s.cfg.battery.checkpoints.back());
  // One Bonferroni family: martingale tests plus the submartingale test of φ_m.
  const int family = static_cast<int>((battery.size() + 1) * s.cfg.battery.checkpoints.size());
  const auto mart = check_martingale(battery, s.model, es, s.cfg.battery.checkpoints, s.cfg.battery.alpha, family);
  const auto sub = check_submartingale({battery[2]}, s.model, es, s.cfg.battery.checkpoints);
  Json reports = Json::array();
  bool ok = true;
  for (const auto& r : mart) {
    reports.push_back(to_json(r));
    ok = ok && r.pass;
    std::printf("verify: martingale %-10s %s\n", r.id.c_str(), r.pass ? "pass" : "FAIL");
  }
  for (const auto& r : sub) {
    reports.push_back(to_json(r));
    ok = ok && r.pass;
    std::printf("verify: submartingale %-7s %s\n", r.id.c_str(), r.pass ? "pass" : "FAIL");
  }
  Json res{{"note", "agreement of finite-dimensional functionals only; no claim on the full path law"},
           {"martingale", reports}};
  if (s.surface.kind() == SurfaceKind::point || s.surface.kind() == SurfaceKind::sphere) {
    RouteSettings rs;
    rs.mc = es;
    rs.mc.first_index = s.cfg.battery.paths;  // independent of the battery ensemble
    rs.pde_dx = s.cfg.grids.dx;
    rs.pde_dt = s.cfg.grids.dt;
    rs.pde_xmax = s.cfg.grids.x_max;
    rs.density_grid = TimeGrid{s.cfg.grids.potential_dt, s.cfg.grids.t_end};
    const auto routes = check_uniqueness_consistency(s.model, {{"exterior", s.exterior_indicator()}},
                                                     {s.cfg.grids.t_end}, rs);
    Json rows = Json::array();
    for (const auto& r : routes.rows) {
      rows.push_back({{"id", r.id}, {"t", r.t}, {"mc", r.mc}, {"mc_se", r.mc_se}, {"pde", r.pde},
                      {"density", r.density ? Json(*r.density) : Json()}, {"max_gap", r.max_gap},
                      {"budget", r.budget}, {"pass", r.pass}});
      std::printf("verify: routes %s t=%g mc %.4f pde %.4f%s %s\n", r.id.c_str(), r.t, r.mc, r.pde,
                  r.density ? (" density " + std::to_string(*r.density)).c_str() : "", r.pass ? "pass" : "FAIL");
    }
    res["routes"] = rows;
    ok = ok && routes.pass;
  }
  res["pass"] = ok;
  const auto dir = s.dir("verify");
  write_json(dir / "verdict.json", res);
  write_json(dir / "manifest.json", manifest(s.cfg, "verify", seconds_since(t0), res));
  std::printf("verify: %s\n", ok ? "PASS" : "FAIL");
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Diffusion with a skewing, delaying membrane: simulation, solvers and verification"};
  app.require_subcommand(1, 1);
  Overrides o;
  std::string stage;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "JSON run configuration")->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "master seed");
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--paths", o.paths, "number of Monte Carlo paths");
    sub->add_option("--dt", o.dt, "simulation step");
    sub->add_option("--eps", o.eps, "local-time band half-width");
    sub->add_option("--lambda", o.lambda, "resolvent rate");
    sub->add_option("--grid-dx", o.grid_dx, "spatial grid step");
    sub->add_option("--grid-dt", o.grid_dt, "PDE time step");
    sub->callback([&stage, sub] { stage = sub->get_name(); });
  };
  for (const char* name : {"simulate", "pde", "potential", "resolvent", "verify", "all"}) {
    add_common(app.add_subcommand(name, std::string("run the ") + name + " stage"));
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return 2;
  }
  try {
    const Setup s(resolve(o));
    if (stage == "simulate") return run_simulate(s);
    if (stage == "pde") return run_pde(s);
    if (stage == "potential") return run_potential(s);
    if (stage == "resolvent") return run_resolvent(s);
    if (stage == "verify") return run_verify(s);
    int worst = 0;
    for (auto fn : {run_simulate, run_pde, run_potential, run_resolvent, run_verify}) worst = std::max(worst, fn(s));
    return worst;
  } catch (const InvalidInput& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const NumericalFailure& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 1;
  }
}
