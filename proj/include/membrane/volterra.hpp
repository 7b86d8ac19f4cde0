#pragma once

#include "membrane/types.hpp"

#include <cmath>
#include <functional>
#include <vector>

namespace membrane {

/// a · s^p · exp(-c/s) for s > 0, with p a half-integer in [-5/2, 5/2] and c >= 0.
struct PowExpTerm {
  double a = 0.0;
  double p = -0.5;
  double c = 0.0;
};

namespace detail {

/// Antiderivative of s^p e^{-c/s} on (0, ∞), vanishing at s = 0+.
inline double powexp_primitive(double p, double c, double s) {
  if (s <= 0.0) return 0.0;
  if (c == 0.0) {
    require(p > -1.0, "kernel s^p with p <= -1 is not integrable at 0");
    return std::pow(s, p + 1.0) / (p + 1.0);
  }
  const double e = std::exp(-c / s);
  // Base cases p = -3/2 and p = -1/2, then
  //   F_p     = (s^{p+1} e - c F_{p-1}) / (p + 1)   upward,
  //   F_{p-2} = (s^p e - p F_{p-1}) / c             downward.
  const double k = std::round(p + 0.5);  // p = k - 1/2
  require(std::abs(p + 0.5 - k) < 1e-12 && k >= -2 && k <= 3, "kernel exponent must be a half-integer in [-5/2, 5/2]");
  double lo = std::sqrt(M_PI / c) * std::erfc(std::sqrt(c / s));  // F_{-3/2}
  double hi = 2.0 * std::sqrt(s) * e - 2.0 * c * lo;              // F_{-1/2}
  if (k == -1) return lo;
  if (k == 0) return hi;
  if (k == -2) return (e / std::sqrt(s) + 0.5 * lo) / c;
  for (double q = 0.5; q <= p + 1e-12; q += 1.0) {
    const double next = (std::pow(s, q + 1.0) * e - c * hi) / (q + 1.0);
    lo = hi;
    hi = next;
  }
  return hi;
}

}  // namespace detail

/// Sum of PowExpTerms in the time variable s, with exact cell integrals and
/// first moments. Heat kernels, hitting densities and layer kernels on
/// points and spheres all have this form.
class TimeKernel {
 public:
  TimeKernel() = default;
  explicit TimeKernel(const std::vector<PowExpTerm>& terms) {
    for (const auto& t : terms) add(t);
  }

  /// Terms with a zero coefficient are dropped; they may sit at exponents
  /// that would not be integrable with c = 0.
  void add(PowExpTerm t) {
    if (t.a != 0.0) terms_.push_back(t);
  }
  const std::vector<PowExpTerm>& terms() const { return terms_; }
  bool empty() const { return terms_.empty(); }

  double operator()(double s) const {
    if (s <= 0.0) return 0.0;
    double v = 0.0;
    for (const auto& t : terms_) v += t.a * std::pow(s, t.p) * std::exp(-t.c / s);
    return v;
  }

  /// ∫_{s0}^{s1} K(s) ds.
  double integral(double s0, double s1) const {
    double v = 0.0;
    for (const auto& t : terms_)
      v += t.a * (detail::powexp_primitive(t.p, t.c, s1) - detail::powexp_primitive(t.p, t.c, s0));
    return v;
  }

  /// ∫_{s0}^{s1} s K(s) ds.
  double moment(double s0, double s1) const {
    double v = 0.0;
    for (const auto& t : terms_)
      v += t.a * (detail::powexp_primitive(t.p + 1.0, t.c, s1) - detail::powexp_primitive(t.p + 1.0, t.c, s0));
    return v;
  }

  TimeKernel scaled(double f) const {
    TimeKernel k = *this;
    for (auto& t : k.terms_) t.a *= f;
    return k;
  }

 private:
  std::vector<PowExpTerm> terms_;
};

/// Product-integration weights for ∫₀^{nΔ} U(nΔ - s) K(s) ds with U
/// piecewise linear on the grid: the integral equals Σ_{i=0}^{n} W_i U_{n-i}.
/// Each cell's kernel integral is exact; only U is interpolated.
class ConvolutionWeights {
 public:
  ConvolutionWeights(const TimeKernel& k, double dt, std::size_t n_max) : dt_(dt) {
    alpha_.resize(n_max);
    beta_.resize(n_max);
    for (std::size_t m = 0; m < n_max; ++m) {
      const double s0 = static_cast<double>(m) * dt, s1 = s0 + dt;
      const double i0 = k.integral(s0, s1), i1 = k.moment(s0, s1);
      alpha_[m] = (s1 * i0 - i1) / dt;  // weight of U at s = s0
      beta_[m] = (i1 - s0 * i0) / dt;   // weight of U at s = s1
    }
  }

  /// W_i for a convolution ending at step n.
  double weight(std::size_t n, std::size_t i) const {
    if (n == 0) return 0.0;
    double w = 0.0;
    if (i < n) w += alpha_[i];
    if (i >= 1) w += beta_[i - 1];
    return w;
  }

  /// Σ_{i=0}^{n} W_i U_{n-i} for a tabulated U (U[0] is the value at time 0).
  double apply(const std::vector<double>& U, std::size_t n) const {
    double v = 0.0;
    for (std::size_t i = 0; i <= n; ++i) v += weight(n, i) * U[n - i];
    return v;
  }

  /// Same sum with the terms added in reverse order.
  double apply_reversed(const std::vector<double>& U, std::size_t n) const {
    double v = 0.0;
    for (std::size_t i = n + 1; i-- > 0;) v += weight(n, i) * U[n - i];
    return v;
  }

  /// Σ W_i U_{n+i}: the anticipating form ∫₀^{T-t} K(s) U(t + s) ds at t = nΔ.
  double apply_forward(const std::vector<double>& U, std::size_t n) const {
    const std::size_t len = U.size() - 1 - n;  // cells available ahead of n
    double v = 0.0;
    for (std::size_t i = 0; i <= len; ++i) v += weight(len, i) * U[n + i];
    return v;
  }

  double dt() const { return dt_; }
  std::size_t size() const { return alpha_.size(); }

 private:
  double dt_;
  std::vector<double> alpha_, beta_;
};

/// ∫₀ᵗ A(τ) B(t - τ) dτ for two analytic kernels, over `cells` uniform cells.
/// On τ < t/2 the factor B is interpolated linearly and A integrated exactly;
/// on τ > t/2 the roles swap, so each endpoint singularity is integrated exactly.
inline double convolve(const TimeKernel& A, const TimeKernel& B, double t, std::size_t cells) {
  if (t <= 0.0) return 0.0;
  require(cells >= 2, "convolve: need at least two cells");
  if (cells % 2) ++cells;
  const double h = t / static_cast<double>(cells);
  double v = 0.0;
  for (std::size_t j = 0; j < cells; ++j) {
    const double t0 = static_cast<double>(j) * h, t1 = t0 + h;
    if (2 * j < cells) {
      // B(t - τ) linear in τ between its end values; A's moments in τ.
      const double b0 = B(t - t0), b1 = B(t - t1);
      const double i0 = A.integral(t0, t1), i1 = A.moment(t0, t1);
      v += (b0 * (t1 * i0 - i1) + b1 * (i1 - t0 * i0)) / h;
    } else {
      // A linear in s = t - τ; B's moments in s.
      const double s0 = t - t1, s1 = t - t0;
      const double a0 = A(t - s0), a1 = A(t - s1);
      const double i0 = B.integral(s0, s1), i1 = B.moment(s0, s1);
      v += (a0 * (s1 * i0 - i1) + a1 * (i1 - s0 * i0)) / h;
    }
  }
  return v;
}

/// Solves U_n = F_n + c · Σ_{i=0}^{n} W_i U_{n-i} for n >= 1 with U_0 given:
/// a second-kind Volterra equation marched forward in time.
inline std::vector<double> volterra_march(const std::vector<double>& F, double U0, double c,
                                          const ConvolutionWeights& W) {
  const std::size_t N = F.size();
  require(N >= 1 && W.size() + 1 >= N, "volterra_march: weights too short");
  std::vector<double> U(N, 0.0);
  U[0] = U0;
  for (std::size_t n = 1; n < N; ++n) {
    double hist = 0.0;
    for (std::size_t i = 1; i <= n; ++i) hist += W.weight(n, i) * U[n - i];
    const double denom = 1.0 - c * W.weight(n, 0);
    if (denom == 0.0 || !std::isfinite(denom)) throw NumericalFailure("volterra_march: singular step");
    U[n] = (F[n] + c * hist) / denom;
    if (!std::isfinite(U[n])) throw NumericalFailure("volterra_march: non-finite solution");
  }
  return U;
}

}  // namespace membrane
