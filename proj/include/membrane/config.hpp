#pragma once

#include "membrane/coefficients.hpp"
#include "membrane/geometry.hpp"
#include "membrane/simulate.hpp"

#include <json.hpp>

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

namespace membrane {

using Json = nlohmann::json;

struct SurfaceConfig {
  std::string kind = "point";  // point | hyperplane | sphere
  double offset = 0.0;
  std::vector<double> normal;  // hyperplane unit normal
  std::vector<double> center;  // sphere centre
  double radius = 1.0;
};

/// Constant coefficients. `diffusion` holds one entry (b = σ² I) or the
/// diagonal of b.
struct CoefficientConfig {
  int dim = 1;
  std::vector<double> diffusion{1.0};
  double q = 0.0;
  double r = 0.0;
};

struct SchemeConfig {
  double dt = 1e-4;
  std::string skew_mode = "crossing_resample";  // or mollified_drift
  double eps = 0.01;
  double eps_drift = 0.01;
  double t_end = 1.0;
  std::string eta = "bridge";  // or band
};

struct GridConfig {
  double dx = 1e-2;
  double dt = 1e-4;
  double x_max = 8.0;
  double theta = 1.0;
  double potential_dt = 1e-3;
  double t_end = 1.0;
};

/// Verification battery and resolvent problem settings.
struct BatteryConfig {
  std::vector<double> start{0.0};
  std::size_t paths = 10000;
  std::vector<double> checkpoints{0.25, 0.5, 0.75, 1.0};
  double alpha = 0.01;
  int cap_m = 5;
  std::vector<double> bump{0.2, 0.8};       // time bump of the test battery
  double lambda = 1.0;
  std::vector<double> psi_bump{0.2, 0.6};   // support of the resolvent source
  std::vector<double> thetas{0.1, 0.2, 0.3, 0.4};
};

struct RunConfig {
  SurfaceConfig surface;
  CoefficientConfig coefficients;
  SchemeConfig scheme;
  GridConfig grids;
  BatteryConfig battery;
  std::uint64_t seed = 0;
  std::string out = "out";
};

namespace detail {

inline void reject_unknown(const Json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw InvalidInput("config: '" + where + "' must be an object");
  for (const auto& [k, v] : j.items()) {
    (void)v;
    if (!allowed.count(k)) throw InvalidInput("config: unknown key '" + k + "' in " + where);
  }
}

template <class T>
void read(const Json& j, const char* key, T& into) {
  if (j.contains(key)) {
    try {
      into = j.at(key).get<T>();
    } catch (const Json::exception& e) {
      throw InvalidInput(std::string("config: bad value for '") + key + "': " + e.what());
    }
  }
}

}  // namespace detail

inline Json to_json(const RunConfig& c) {
  Json j;
  j["surface"] = {{"kind", c.surface.kind},
                  {"offset", c.surface.offset},
                  {"normal", c.surface.normal},
                  {"center", c.surface.center},
                  {"radius", c.surface.radius}};
  j["coefficients"] = {{"dim", c.coefficients.dim},
                       {"diffusion", c.coefficients.diffusion},
                       {"q", c.coefficients.q},
                       {"r", c.coefficients.r}};
  j["scheme"] = {{"dt", c.scheme.dt},       {"skew_mode", c.scheme.skew_mode}, {"eps", c.scheme.eps},
                 {"eps_drift", c.scheme.eps_drift}, {"t_end", c.scheme.t_end}, {"eta", c.scheme.eta}};
  j["grids"] = {{"dx", c.grids.dx},       {"dt", c.grids.dt},
                {"x_max", c.grids.x_max}, {"theta", c.grids.theta},
                {"potential_dt", c.grids.potential_dt}, {"t_end", c.grids.t_end}};
  j["battery"] = {{"start", c.battery.start},     {"paths", c.battery.paths},   {"checkpoints", c.battery.checkpoints},
                  {"alpha", c.battery.alpha},     {"cap_m", c.battery.cap_m},   {"bump", c.battery.bump},
                  {"lambda", c.battery.lambda},   {"psi_bump", c.battery.psi_bump}, {"thetas", c.battery.thetas}};
  j["seed"] = c.seed;
  j["out"] = c.out;
  return j;
}

/// Parses and validates; every block is optional, unknown keys are errors.
inline RunConfig config_from_json(const Json& j) {
  using detail::read;
  detail::reject_unknown(j, {"surface", "coefficients", "scheme", "grids", "battery", "seed", "out"}, "config");
  RunConfig c;
  if (j.contains("surface")) {
    const auto& s = j["surface"];
    detail::reject_unknown(s, {"kind", "offset", "normal", "center", "radius"}, "surface");
    read(s, "kind", c.surface.kind);
    read(s, "offset", c.surface.offset);
    read(s, "normal", c.surface.normal);
    read(s, "center", c.surface.center);
    read(s, "radius", c.surface.radius);
  }
  if (j.contains("coefficients")) {
    const auto& s = j["coefficients"];
    detail::reject_unknown(s, {"dim", "diffusion", "q", "r"}, "coefficients");
    read(s, "dim", c.coefficients.dim);
    read(s, "diffusion", c.coefficients.diffusion);
    read(s, "q", c.coefficients.q);
    read(s, "r", c.coefficients.r);
  }
  if (j.contains("scheme")) {
    const auto& s = j["scheme"];
    detail::reject_unknown(s, {"dt", "skew_mode", "eps", "eps_drift", "t_end", "eta"}, "scheme");
    read(s, "dt", c.scheme.dt);
    read(s, "skew_mode", c.scheme.skew_mode);
    read(s, "eps", c.scheme.eps);
    read(s, "eps_drift", c.scheme.eps_drift);
    read(s, "t_end", c.scheme.t_end);
    read(s, "eta", c.scheme.eta);
  }
  if (j.contains("grids")) {
    const auto& s = j["grids"];
    detail::reject_unknown(s, {"dx", "dt", "x_max", "theta", "potential_dt", "t_end"}, "grids");
    read(s, "dx", c.grids.dx);
    read(s, "dt", c.grids.dt);
    read(s, "x_max", c.grids.x_max);
    read(s, "theta", c.grids.theta);
    read(s, "potential_dt", c.grids.potential_dt);
    read(s, "t_end", c.grids.t_end);
  }
  if (j.contains("battery")) {
    const auto& s = j["battery"];
    detail::reject_unknown(
        s, {"start", "paths", "checkpoints", "alpha", "cap_m", "bump", "lambda", "psi_bump", "thetas"}, "battery");
    read(s, "start", c.battery.start);
    read(s, "paths", c.battery.paths);
    read(s, "checkpoints", c.battery.checkpoints);
    read(s, "alpha", c.battery.alpha);
    read(s, "cap_m", c.battery.cap_m);
    read(s, "bump", c.battery.bump);
    read(s, "lambda", c.battery.lambda);
    read(s, "psi_bump", c.battery.psi_bump);
    read(s, "thetas", c.battery.thetas);
  }
  read(j, "seed", c.seed);
  read(j, "out", c.out);
  return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("config: cannot open " + path.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw InvalidInput("config: " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

inline Surface make_surface(const SurfaceConfig& s, int dim) {
  if (s.kind == "point") {
    require(dim == 1, "config: point surfaces live on the line");
    return Surface::point(s.offset);
  }
  if (s.kind == "hyperplane") {
    require(static_cast<int>(s.normal.size()) == dim, "config: hyperplane normal has the wrong dimension");
    return Surface::hyperplane(make_vec(s.normal), s.offset);
  }
  if (s.kind == "sphere") {
    std::vector<double> c = s.center.empty() ? std::vector<double>(static_cast<std::size_t>(dim), 0.0) : s.center;
    require(static_cast<int>(c.size()) == dim, "config: sphere centre has the wrong dimension");
    return Surface::sphere(make_vec(c), s.radius);
  }
  throw InvalidInput("config: unknown surface kind '" + s.kind + "'");
}

inline DiffusionSpec make_spec(const CoefficientConfig& c) {
  require(c.dim >= 1 && c.dim <= 3, "config: dim must be 1, 2 or 3");
  if (c.diffusion.size() == 1) return DiffusionSpec::isotropic(c.dim, c.diffusion[0], c.q, c.r);
  require(static_cast<int>(c.diffusion.size()) == c.dim, "config: diffusion needs 1 or dim entries");
  return DiffusionSpec::diagonal(make_vec(c.diffusion), c.q, c.r);
}

inline SimScheme make_scheme(const SchemeConfig& s, std::uint64_t seed) {
  SimScheme out;
  out.dt = s.dt;
  out.eps = s.eps;
  out.eps_drift = s.eps_drift;
  out.t_end = s.t_end;
  out.seed = seed;
  if (s.skew_mode == "crossing_resample") {
    out.skew_mode = SkewMode::crossing_resample;
  } else if (s.skew_mode == "mollified_drift") {
    out.skew_mode = SkewMode::mollified_drift;
  } else {
    throw InvalidInput("config: unknown skew_mode '" + s.skew_mode + "'");
  }
  if (s.eta == "bridge") {
    out.eta = EtaMethod::bridge;
  } else if (s.eta == "band") {
    out.eta = EtaMethod::band;
  } else {
    throw InvalidInput("config: unknown eta estimator '" + s.eta + "'");
  }
  out.validate();
  return out;
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

/// Hash of the canonical (key-sorted) serialization, which holds every
/// numeric input including the seed.
inline std::string config_hash(const RunConfig& c) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(to_json(c).dump())));
  return buf;
}

/// Round-trip decimal form with 17 significant digits, so equal runs give equal bytes.
inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Plain CSV with a header row.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header) : out_(path) {
    if (!out_) throw InvalidInput("cannot write " + path.string());
    row_strings(header);
  }

  void row(const std::vector<double>& values) {
    for (std::size_t i = 0; i < values.size(); ++i) out_ << (i ? "," : "") << fmt(values[i]);
    out_ << '\n';
  }

  void row_strings(const std::vector<std::string>& values) {
    for (std::size_t i = 0; i < values.size(); ++i) out_ << (i ? "," : "") << values[i];
    out_ << '\n';
  }

 private:
  std::ofstream out_;
};

inline void write_json(const std::filesystem::path& path, const Json& j) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

/// Run manifest: what produced the artifacts in a directory.
inline Json manifest(const RunConfig& c, const std::string& stage, double wall_seconds, const Json& extra = {}) {
  Json m;
  m["stage"] = stage;
  m["config"] = to_json(c);
  m["config_hash"] = config_hash(c);
  m["seed"] = c.seed;
  m["version"] = "0.1.0";
  m["compiler"] = __VERSION__;
  m["wall_seconds"] = wall_seconds;
  if (!extra.is_null()) m["results"] = extra;
  return m;
}

}  // namespace membrane
