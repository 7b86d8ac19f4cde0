#pragma once

#include "membrane/types.hpp"

#include <boost/math/constants/constants.hpp>

#include <cmath>
#include <vector>

namespace membrane {

enum class Side { interior, exterior, on };

enum class SurfaceKind { point, hyperplane, sphere };

/// Points and positive weights approximating the surface measure dσ.
struct SurfaceQuadrature {
  std::vector<Vec> points;
  std::vector<double> weights;
};

/// Closed membrane surface with closed-form distance, normal and projection.
///
/// Three kinds are admitted: a point on the line (d = 1, interior is x < c),
/// a hyperplane {n·x = offset} (interior is n·x < offset; unbounded, used as
/// the classical flat testbed), and a sphere |x - c| = R in d = 2 or 3.
/// All queries are const and the object is immutable after construction.
class Surface {
 public:
  static Surface point(double offset = 0.0, int quadrature_order = 1) {
    Surface s;
    s.kind_ = SurfaceKind::point;
    s.dim_ = 1;
    s.center_ = make_vec({offset});
    s.normal_ = make_vec({1.0});
    s.offset_ = offset;
    s.order_ = quadrature_order;
    require(quadrature_order >= 1, "quadrature_order must be >= 1");
    return s;
  }

  static Surface hyperplane(const Vec& unit_normal, double offset, int quadrature_order = 1) {
    require(unit_normal.size() >= 1 && unit_normal.size() <= kMaxDim,
            "hyperplane dimension must be in [1, 3]");
    require(std::abs(unit_normal.norm() - 1.0) <= 1e-12, "hyperplane normal must have unit norm");
    require(quadrature_order >= 1, "quadrature_order must be >= 1");
    Surface s;
    s.kind_ = SurfaceKind::hyperplane;
    s.dim_ = static_cast<int>(unit_normal.size());
    s.normal_ = unit_normal;
    s.offset_ = offset;
    s.center_ = unit_normal * offset;
    s.order_ = quadrature_order;
    return s;
  }

  static Surface sphere(const Vec& center, double radius, int quadrature_order = 64) {
    require(center.size() >= 2 && center.size() <= kMaxDim, "sphere dimension must be 2 or 3");
    require(radius > 0.0 && std::isfinite(radius), "sphere radius must be positive");
    require(quadrature_order >= 1, "quadrature_order must be >= 1");
    Surface s;
    s.kind_ = SurfaceKind::sphere;
    s.dim_ = static_cast<int>(center.size());
    s.center_ = center;
    s.radius_ = radius;
    s.order_ = quadrature_order;
    return s;
  }

  SurfaceKind kind() const { return kind_; }
  int dim() const { return dim_; }
  int quadrature_order() const { return order_; }
  const Vec& center() const { return center_; }
  double radius() const { return radius_; }
  double offset() const { return offset_; }
  const Vec& plane_normal() const { return normal_; }
  bool bounded() const { return kind_ != SurfaceKind::hyperplane; }

  /// Positive on the exterior side, negative inside.
  double signed_distance(const Vec& x) const {
    switch (kind_) {
      case SurfaceKind::point: return x(0) - offset_;
      case SurfaceKind::hyperplane: return normal_.dot(x) - offset_;
      case SurfaceKind::sphere: return (x - center_).norm() - radius_;
    }
    return 0.0;
  }

  double unsigned_distance(const Vec& x) const { return std::abs(signed_distance(x)); }

  /// Exact classification: ON iff the distance is exactly zero.
  Side side(const Vec& x) const { return classify(x, 0.0); }

  /// Classification with a tolerance band, for coordinates that did not come
  /// from our own projections.
  Side classify(const Vec& x, double tol) const {
    const double s = signed_distance(x);
    if (std::abs(s) <= tol) return Side::on;
    return s > 0.0 ? Side::exterior : Side::interior;
  }

  static double input_tolerance(const Vec& x) { return 1e-12 * (1.0 + x.norm()); }

  Vec project(const Vec& x) const {
    switch (kind_) {
      case SurfaceKind::point: return center_;
      case SurfaceKind::hyperplane: return x - signed_distance(x) * normal_;
      case SurfaceKind::sphere: {
        Vec d = x - center_;
        const double n = d.norm();
        if (n == 0.0) {
          d.setZero();
          d(0) = 1.0;
          return center_ + radius_ * d;
        }
        return center_ + (radius_ / n) * d;
      }
    }
    return x;
  }

  /// Outward unit normal at a surface point.
  Vec normal(const Vec& on_surface) const {
    switch (kind_) {
      case SurfaceKind::point:
      case SurfaceKind::hyperplane: return normal_;
      case SurfaceKind::sphere: {
        Vec d = on_surface - center_;
        const double n = d.norm();
        if (n == 0.0) {
          d.setZero();
          d(0) = 1.0;
          return d;
        }
        return d / n;
      }
    }
    return normal_;
  }

  /// Gradient of the signed distance (the outward normal at the foot point).
  Vec distance_gradient(const Vec& x) const { return normal(project(x)); }

  /// Hessian of the signed distance off the surface.
  Mat distance_hessian(const Vec& x) const {
    Mat h = Mat::Zero(dim_, dim_);
    if (kind_ == SurfaceKind::sphere) {
      const Vec d = x - center_;
      const double rho = d.norm();
      if (rho > 0.0) {
        const Vec u = d / rho;
        h = (Mat::Identity(dim_, dim_) - u * u.transpose()) / rho;
      }
    }
    return h;
  }

  /// Mirror image of x across the surface along the normal through its foot point.
  Vec reflect(const Vec& x) const {
    const double s = signed_distance(x);
    if (kind_ == SurfaceKind::sphere) {
      const Vec d = x - center_;
      const double rho = d.norm();
      const double target = std::max(radius_ - s, 0.0);
      if (rho == 0.0) return x;
      return center_ + (target / rho) * d;
    }
    return x - 2.0 * s * distance_gradient(x);
  }

  double area() const {
    using boost::math::double_constants::pi;
    switch (kind_) {
      case SurfaceKind::point: return 1.0;
      case SurfaceKind::hyperplane:
        throw InvalidInput("hyperplane has infinite area");
      case SurfaceKind::sphere:
        return dim_ == 2 ? 2.0 * pi * radius_ : 4.0 * pi * radius_ * radius_;
    }
    return 0.0;
  }

  /// Quadrature for dσ. The point carries counting measure; a circle uses a
  /// uniform angular grid of `quadrature_order` nodes; a 2-sphere uses
  /// Gauss-Legendre in cos(polar) times a uniform azimuthal grid.
  SurfaceQuadrature quadrature() const {
    using boost::math::double_constants::pi;
    SurfaceQuadrature q;
    switch (kind_) {
      case SurfaceKind::point:
        q.points.push_back(center_);
        q.weights.push_back(1.0);
        break;
      case SurfaceKind::hyperplane:
        throw InvalidInput("hyperplane has no finite surface quadrature");
      case SurfaceKind::sphere:
        if (dim_ == 2) {
          const double w = 2.0 * pi * radius_ / order_;
          for (int k = 0; k < order_; ++k) {
            const double a = 2.0 * pi * k / order_;
            q.points.push_back(center_ + radius_ * make_vec({std::cos(a), std::sin(a)}));
            q.weights.push_back(w);
          }
        } else {
          const auto [nodes, wts] = gauss_legendre(order_);
          const int n_phi = 2 * order_;
          for (std::size_t i = 0; i < nodes.size(); ++i) {
            const double c = nodes[i];
            const double s = std::sqrt(std::max(0.0, 1.0 - c * c));
            for (int k = 0; k < n_phi; ++k) {
              const double a = 2.0 * pi * k / n_phi;
              q.points.push_back(center_ + radius_ * make_vec({s * std::cos(a), s * std::sin(a), c}));
              q.weights.push_back(wts[i] * (2.0 * pi / n_phi) * radius_ * radius_);
            }
          }
        }
        break;
    }
    return q;
  }

 private:
  Surface() = default;

  // Legendre nodes by Newton iteration on the three-term recurrence.
  static std::pair<std::vector<double>, std::vector<double>> gauss_legendre(int n) {
    using boost::math::double_constants::pi;
    std::vector<double> x(static_cast<std::size_t>(n)), w(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      double z = std::cos(pi * (i + 0.75) / (n + 0.5));
      double dp = 0.0;
      for (int it = 0; it < 100; ++it) {
        double p0 = 1.0, p1 = z;
        for (int k = 2; k <= n; ++k) {
          const double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
          p0 = p1;
          p1 = p2;
        }
        dp = n * (z * p1 - p0) / (z * z - 1.0);
        const double dz = p1 / dp;
        z -= dz;
        if (std::abs(dz) < 1e-15) break;
      }
      x[static_cast<std::size_t>(i)] = z;
      w[static_cast<std::size_t>(i)] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    return {x, w};
  }

  SurfaceKind kind_ = SurfaceKind::point;
  int dim_ = 1;
  int order_ = 1;
  Vec center_;
  Vec normal_;
  double offset_ = 0.0;
  double radius_ = 0.0;
};

}  // namespace membrane
