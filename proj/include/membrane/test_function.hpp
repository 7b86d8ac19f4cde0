#pragma once

#include "membrane/coefficients.hpp"
#include "membrane/geometry.hpp"

#include <boost/math/interpolators/cardinal_cubic_b_spline.hpp>

#include <cmath>
#include <memory>
#include <string>
#include <vector>

namespace membrane {

/// C² cutoff: 1 on [0, m], 0 on [m + 1, ∞), quintic smoothstep in between.
/// Returns value, first and second derivative.
struct Cutoff {
  double value, d1, d2;
};

inline Cutoff smooth_cutoff(double d, double m) {
  const double u = d - m;
  if (u <= 0.0) return {1.0, 0.0, 0.0};
  if (u >= 1.0) return {0.0, 0.0, 0.0};
  const double u2 = u * u, u3 = u2 * u;
  const double s = u3 * (10.0 - 15.0 * u + 6.0 * u2);
  const double s1 = 30.0 * u2 * (1.0 - u) * (1.0 - u);
  const double s2 = 60.0 * u * (1.0 - u) * (1.0 - 2.0 * u);
  return {1.0 - s, -s1, -s2};
}

/// φ_m(x) = η_m(d(x, S)) d(x, S).
inline double capped_distance(const Surface& surface, const Vec& x, int m) {
  require(m >= 1, "capped_distance: m must be >= 1");
  const double d = surface.unsigned_distance(x);
  return smooth_cutoff(d, m).value * d;
}

/// Smooth compactly supported time factor; identically 1 when inactive.
/// The bump is exp(1 - 1/(1 - u²)) on the support, u mapped to (-1, 1).
struct TimeFactor {
  bool active = false;
  double a = 0.0;
  double b = 1.0;

  static TimeFactor bump(double a, double b) {
    require(b > a, "time bump needs a < b");
    return {true, a, b};
  }

  std::pair<double, double> eval(double t) const {
    if (!active) return {1.0, 0.0};
    if (t <= a || t >= b) return {0.0, 0.0};
    const double half = 0.5 * (b - a);
    const double u = (t - 0.5 * (a + b)) / half;
    const double w = 1.0 - u * u;
    const double v = std::exp(1.0 - 1.0 / w);
    return {v, v * (-2.0 * u / (w * w)) / half};
  }
};

/// Value and derivatives of a test function at an off-surface point.
struct Derivs {
  double value = 0.0;
  double dt = 0.0;
  Vec grad;
  Mat hess;
};

/// Test functions of the admissible class: bounded, C¹ in t, C² in x off the
/// membrane, with one-sided co-normal derivatives on it.
class TestFunction {
 public:
  enum class Kind { polynomial, capped_distance, tabulated };

  /// β(t) (c0 + g·x + ½ xᵀHx) η_M(|x|); the radial cap keeps it bounded and
  /// is inactive for |x| <= cap_radius.
  static TestFunction polynomial(double c0, Vec g, Mat H, TimeFactor tf = {},
                                 double cap_radius = 1e3, std::string id = "poly") {
    require(g.size() == H.rows() && H.rows() == H.cols(), "polynomial: inconsistent shapes");
    TestFunction f;
    f.kind_ = Kind::polynomial;
    f.c0_ = c0;
    f.g_ = std::move(g);
    f.H_ = std::move(H);
    f.tf_ = tf;
    f.cap_ = cap_radius;
    f.id_ = std::move(id);
    return f;
  }

  static TestFunction capped_distance(const Surface& s, int m, TimeFactor tf = {}) {
    require(m >= 1, "capped distance needs m >= 1");
    TestFunction f;
    f.kind_ = Kind::capped_distance;
    f.surface_ = std::make_shared<Surface>(s);
    f.m_ = m;
    f.tf_ = tf;
    f.id_ = "phi_m" + std::to_string(m);
    return f;
  }

  /// 1-D grid function with separate cubic splines on each side of the
  /// membrane point c: `interior` samples cover [c - (n-1)h, c] and
  /// `exterior` samples cover [c, c + (n-1)h]. Constant extension beyond.
  static TestFunction tabulated(const Surface& s, double h, std::vector<double> interior,
                                std::vector<double> exterior, TimeFactor tf = {},
                                std::string id = "tabulated") {
    require(s.kind() == SurfaceKind::point, "tabulated test functions live on the line");
    require(interior.size() >= 4 && exterior.size() >= 4, "tabulated: need >= 4 samples per side");
    require(h > 0.0, "tabulated: spacing must be positive");
    require(std::abs(interior.back() - exterior.front()) <= 1e-12 * (1.0 + std::abs(exterior.front())),
            "tabulated: sides must agree at the membrane");
    TestFunction f;
    f.kind_ = Kind::tabulated;
    f.surface_ = std::make_shared<Surface>(s);
    f.h_ = h;
    const double c = s.offset();
    f.lo_ = c - h * static_cast<double>(interior.size() - 1);
    f.hi_ = c + h * static_cast<double>(exterior.size() - 1);
    f.left_ = std::make_shared<Spline>(interior.begin(), interior.end(), f.lo_, h);
    f.right_ = std::make_shared<Spline>(exterior.begin(), exterior.end(), c, h);
    f.tf_ = tf;
    f.id_ = std::move(id);
    return f;
  }

  Kind kind() const { return kind_; }
  const std::string& id() const { return id_; }
  bool has_time_derivative() const { return true; }
  bool has_Kf() const { return true; }
  const TimeFactor& time_factor() const { return tf_; }

  double value(double t, const Vec& x) const { return eval(t, x).value; }

  Derivs eval(double t, const Vec& x) const {
    const auto [beta, dbeta] = tf_.eval(t);
    const int d = static_cast<int>(x.size());
    Derivs s;
    double v = 0.0;
    Vec grad = Vec::Zero(d);
    Mat hess = Mat::Zero(d, d);
    switch (kind_) {
      case Kind::polynomial: {
        require(g_.size() == x.size(), "polynomial: dimension mismatch");
        const double p = c0_ + g_.dot(x) + 0.5 * x.dot(H_ * x);
        const Vec dp = g_ + H_ * x;
        const double rho = x.norm();
        const Cutoff c = smooth_cutoff(rho, cap_);
        v = p * c.value;
        grad = dp * c.value;
        hess = H_ * c.value;
        if (c.d1 != 0.0 || c.d2 != 0.0) {
          const Vec u = x / rho;
          const Vec dc = c.d1 * u;
          const Mat ddc = c.d2 * u * u.transpose() +
                          (c.d1 / rho) * (Mat::Identity(d, d) - u * u.transpose());
          grad += p * dc;
          hess += dp * dc.transpose() + dc * dp.transpose() + p * ddc;
        }
        break;
      }
      case Kind::capped_distance: {
        const double sd = surface_->signed_distance(x);
        const double dist = std::abs(sd);
        const double sgn = sd >= 0.0 ? 1.0 : -1.0;
        const Cutoff c = smooth_cutoff(dist, m_);
        const double g0 = c.value * dist;
        const double g1 = c.d1 * dist + c.value;
        const double g2 = c.d2 * dist + 2.0 * c.d1;
        const Vec n = sgn * surface_->distance_gradient(x);
        const Mat hd = sgn * surface_->distance_hessian(x);
        v = g0;
        grad = g1 * n;
        hess = g2 * n * n.transpose() + g1 * hd;
        break;
      }
      case Kind::tabulated: {
        const double xx = x(0);
        const double c = surface_->offset();
        if (xx < lo_ || xx > hi_) {
          v = xx < lo_ ? (*left_)(lo_) : (*right_)(hi_);
        } else if (xx < c) {
          v = (*left_)(xx);
          grad(0) = left_->prime(xx);
          hess(0, 0) = left_->double_prime(xx);
        } else {
          v = (*right_)(xx);
          grad(0) = right_->prime(xx);
          hess(0, 0) = right_->double_prime(xx);
        }
        break;
      }
    }
    s.value = beta * v;
    s.dt = dbeta * v;
    s.grad = beta * grad;
    s.hess = beta * hess;
    return s;
  }

  /// One-sided limit of ∂f/∂N at a surface point z from the given side.
  double conormal_derivative(double t, const Vec& z, Side side, const DiffusionSpec& spec,
                             const Surface& surface) const {
    require(side != Side::on, "conormal_derivative: choose a side");
    const auto [nu, n] = normal_and_conormal(z, spec, surface);
    const double beta = tf_.eval(t).first;
    switch (kind_) {
      case Kind::polynomial: return n.dot(eval(t, z).grad);
      case Kind::capped_distance: {
        // d/dd (η_m(d) d) = 1 at d = 0 and ∇d = ±ν on the two sides.
        const double sgn = side == Side::exterior ? 1.0 : -1.0;
        return beta * sgn * n.dot(nu);
      }
      case Kind::tabulated: {
        const double c = surface_->offset();
        const double slope = side == Side::exterior ? right_->prime(c) : left_->prime(c);
        return beta * n(0) * slope;
      }
    }
    return 0.0;
  }

  /// Kf = (1+q)/2 ∂f/∂N(+) - (1-q)/2 ∂f/∂N(-).
  double K(double t, const Vec& z, const DiffusionSpec& spec, const Surface& surface) const {
    const double q = spec.q(z);
    return 0.5 * (1.0 + q) * conormal_derivative(t, z, Side::exterior, spec, surface) -
           0.5 * (1.0 - q) * conormal_derivative(t, z, Side::interior, spec, surface);
  }

  /// ∂f/∂t + ½ Σ b_ij ∂²f/∂x_i∂x_j at an off-surface point.
  double generator(double t, const Vec& x, const DiffusionSpec& spec) const {
    const Derivs s = eval(t, x);
    return s.dt + 0.5 * (spec.b(x).cwiseProduct(s.hess)).sum();
  }

 private:
  using Spline = boost::math::interpolators::cardinal_cubic_b_spline<double>;

  Kind kind_ = Kind::polynomial;
  std::string id_;
  TimeFactor tf_;
  double c0_ = 0.0;
  Vec g_;
  Mat H_;
  double cap_ = 1e3;
  std::shared_ptr<const Surface> surface_;
  int m_ = 1;
  double h_ = 0.0, lo_ = 0.0, hi_ = 0.0;
  std::shared_ptr<const Spline> left_, right_;
};

}  // namespace membrane
