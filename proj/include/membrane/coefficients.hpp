#pragma once

#include "membrane/geometry.hpp"
#include "membrane/rng.hpp"

#include <Eigen/Eigenvalues>

#include <functional>
#include <optional>
#include <string>
#include <utility>

namespace membrane {

/// Real-valued field, either constant or given by a callable.
class ScalarField {
 public:
  ScalarField(double c = 0.0) : constant_(c) {}  // NOLINT(google-explicit-constructor)
  explicit ScalarField(std::function<double(const Vec&)> fn) : fn_(std::move(fn)) {}

  double operator()(const Vec& x) const { return fn_ ? fn_(x) : constant_; }
  bool is_constant() const { return !fn_; }
  double constant() const { return constant_; }

 private:
  double constant_ = 0.0;
  std::function<double(const Vec&)> fn_;
};

/// Symmetric-matrix field b(x).
class MatrixField {
 public:
  explicit MatrixField(Mat c) : constant_(std::move(c)) {}
  MatrixField(int dim, std::function<Mat(const Vec&)> fn) : dim_(dim), fn_(std::move(fn)) {}

  Mat operator()(const Vec& x) const { return fn_ ? fn_(x) : *constant_; }
  bool is_constant() const { return !fn_; }
  const Mat& constant() const { return *constant_; }
  int dim() const { return fn_ ? dim_ : static_cast<int>(constant_->rows()); }

 private:
  std::optional<Mat> constant_;
  int dim_ = 0;
  std::function<Mat(const Vec&)> fn_;
};

/// Diffusion matrix, its claimed regularity constants and the membrane
/// functions q (skewness, values in [-1, 1]) and r (delay density, >= 0).
struct DiffusionSpec {
  MatrixField b;
  double C1 = 1.0;
  double C2 = 1.0;
  double L = 0.0;
  double alpha = 1.0;
  ScalarField q{0.0};
  ScalarField r{0.0};

  int dim() const { return b.dim(); }
  bool constant_b() const { return b.is_constant(); }

  /// sigma^2 when b = sigma^2 I is constant; empty otherwise.
  std::optional<double> scalar_diffusivity() const {
    if (!b.is_constant()) return std::nullopt;
    const Mat& m = b.constant();
    const double s = m(0, 0);
    if ((m - s * Mat::Identity(m.rows(), m.cols())).norm() > 1e-14 * std::abs(s)) return std::nullopt;
    return s;
  }

  /// A = q / r, defined only where r > 0.
  std::optional<double> drift_ratio(const Vec& x) const {
    const double rr = r(x);
    if (!(rr > 0.0)) return std::nullopt;
    return q(x) / rr;
  }

  static DiffusionSpec isotropic(int dim, double sigma2, ScalarField q = 0.0, ScalarField r = 0.0) {
    require(dim >= 1 && dim <= kMaxDim, "dimension must be in [1, 3]");
    require(sigma2 > 0.0, "diffusivity must be positive");
    DiffusionSpec s{MatrixField(sigma2 * Mat::Identity(dim, dim))};
    s.C1 = s.C2 = sigma2;
    s.q = std::move(q);
    s.r = std::move(r);
    return s;
  }

  static DiffusionSpec diagonal(const Vec& diag, ScalarField q = 0.0, ScalarField r = 0.0) {
    require(diag.size() >= 1 && diag.size() <= kMaxDim, "dimension must be in [1, 3]");
    require(diag.minCoeff() > 0.0, "diagonal entries must be positive");
    DiffusionSpec s{MatrixField(Mat(diag.asDiagonal()))};
    s.C1 = diag.minCoeff();
    s.C2 = diag.maxCoeff();
    s.q = std::move(q);
    s.r = std::move(r);
    return s;
  }
};

/// Outward unit normal ν and co-normal N = b ν at a surface point.
inline std::pair<Vec, Vec> normal_and_conormal(const Vec& x, const DiffusionSpec& spec,
                                               const Surface& surface) {
  if (surface.unsigned_distance(x) > Surface::input_tolerance(x))
    throw InvalidInput("normal_and_conormal: point is not on the surface");
  Vec nu = surface.normal(x);
  Vec n = spec.b(x) * nu;
  return {std::move(nu), std::move(n)};
}

/// Symmetric square root of a positive definite matrix.
inline Mat sqrt_spd(const Mat& m) {
  if (m.rows() == 1) {
    Mat s(1, 1);
    s(0, 0) = std::sqrt(m(0, 0));
    return s;
  }
  Eigen::SelfAdjointEigenSolver<Mat> es(m);
  return es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
         es.eigenvectors().transpose();
}

struct JAudit {
  int samples = 2000;
  std::uint64_t seed = 1;
  double box = 5.0;  // points drawn from [-box, box]^d
};

/// Outcome of the randomized audit; witnesses describe the worst sample.
struct JReport {
  bool pass = true;
  bool symmetric = true;
  bool elliptic = true;
  bool holder = true;
  bool q_in_range = true;
  bool r_nonnegative = true;
  double worst_symmetry_gap = 0.0;
  double worst_ellipticity_excess = 0.0;  // > 0 means a violation
  Vec ellipticity_x;
  Vec ellipticity_theta;
  double worst_holder_ratio = 0.0;  // max |Δb_ij| / |x - x'|^α
  Vec holder_x;
  Vec holder_x2;
  double worst_q = 0.0;
  double worst_r = 0.0;
  std::string summary() const {
    std::string s = pass ? "conditions J audit passed" : "conditions J audit failed:";
    if (!symmetric) s += " asymmetric b;";
    if (!elliptic) s += " ellipticity bounds violated;";
    if (!holder) s += " Hoelder bound violated;";
    if (!q_in_range) s += " |q| > 1;";
    if (!r_nonnegative) s += " r < 0;";
    return s;
  }
};

/// Randomized audit of symmetry, the bounds C1|θ|² <= (bθ,θ) <= C2|θ|², the
/// Hoelder bound |b_ij(x) - b_ij(x')| <= L|x - x'|^α and the ranges of q, r.
/// It samples; it does not prove.
inline JReport validate_conditions_J(const DiffusionSpec& spec, const Surface& surface,
                                     const JAudit& audit = {}) {
  const int d = spec.dim();
  require(d == surface.dim(), "coefficient and surface dimensions differ");
  JReport rep;
  Philox rng(audit.seed, 0x4a4a4a4aull);
  auto point = [&] {
    Vec x(d);
    for (int i = 0; i < d; ++i) x(i) = audit.box * (2.0 * rng.uniform() - 1.0);
    return x;
  };
  auto direction = [&](int k) {
    Vec th = Vec::Zero(d);
    if (k < 2 * d) {
      th(k / 2) = (k % 2 == 0) ? 1.0 : -1.0;
      return th;
    }
    for (int i = 0; i < d; ++i) th(i) = 2.0 * rng.uniform() - 1.0;
    const double n = th.norm();
    if (n == 0.0) th(0) = 1.0;
    return Vec(th / std::max(n, 1e-300));
  };
  const double slack = 1e-12;
  for (int s = 0; s < audit.samples; ++s) {
    const Vec x = point();
    const Mat b = spec.b(x);
    const double asym = (b - b.transpose()).cwiseAbs().maxCoeff();
    if (asym > rep.worst_symmetry_gap) rep.worst_symmetry_gap = asym;
    if (asym > slack * (1.0 + b.cwiseAbs().maxCoeff())) rep.symmetric = false;
    for (int k = 0; k < 2 * d + 2; ++k) {
      const Vec th = direction(k);
      const double quad = th.dot(b * th) / th.squaredNorm();
      const double excess = std::max(spec.C1 - quad, quad - spec.C2);
      if (rep.ellipticity_theta.size() == 0 || excess > rep.worst_ellipticity_excess) {
        rep.worst_ellipticity_excess = excess;
        rep.ellipticity_x = x;
        rep.ellipticity_theta = th;
      }
      if (excess > slack * spec.C2) rep.elliptic = false;
    }
    // Hoelder pairs at log-uniform separations in [1e-3, 1].
    const double h = std::pow(10.0, -3.0 * rng.uniform());
    const Vec x2 = x + h * direction(2 * d + 1);
    const double sep = (x2 - x).norm();
    const double diff = (spec.b(x2) - b).cwiseAbs().maxCoeff();
    const double ratio = diff / std::pow(sep, spec.alpha);
    if (ratio > rep.worst_holder_ratio) {
      rep.worst_holder_ratio = ratio;
      rep.holder_x = x;
      rep.holder_x2 = x2;
    }
    if (diff > spec.L * std::pow(sep, spec.alpha) + slack * (1.0 + b.cwiseAbs().maxCoeff()))
      rep.holder = false;

    const Vec z = surface.project(x);
    const double qz = spec.q(z), rz = spec.r(z);
    if (std::abs(qz) > std::abs(rep.worst_q)) rep.worst_q = qz;
    if (rz < rep.worst_r) rep.worst_r = rz;
    if (!(std::abs(qz) <= 1.0)) rep.q_in_range = false;
    if (!(rz >= 0.0)) rep.r_nonnegative = false;
  }
  rep.pass = rep.symmetric && rep.elliptic && rep.holder && rep.q_in_range && rep.r_nonnegative;
  return rep;
}

}  // namespace membrane
