#pragma once

#include <cmath>
#include <functional>
#include <numbers>

#include "sdha/core.hpp"
#include "sdha/noise.hpp"

namespace sdha {

// ---- damped Kubo oscillator ----

struct KuboParams {
  double q0 = 2, p0 = 0;
  double beta = 0.5;
  double nu = 0.5;

  void validate() const {
    if (!(nu >= 0 && nu < 2)) throw InvalidParameter("kubo: nu must lie in [0, 2)");
  }
  double omega() const { return 0.5 * std::sqrt(4 - nu * nu); }
};

inline ForcedHamiltonianSystem<1> kubo_system(const KuboParams& P) {
  P.validate();
  using S = State<1>;
  using V = Vec<1>;
  const double beta = P.beta, nu = P.nu;
  ForcedHamiltonianSystem<1> sys;
  sys.name = "kubo";
  sys.H = [](const S& z) { return 0.5 * (z.p[0] * z.p[0] + z.q[0] * z.q[0]); };
  sys.dH_dq = [](const S& z) { return z.q; };
  sys.dH_dp = [](const S& z) { return z.p; };
  sys.F = [nu](const S& z) -> V { return -nu * z.p; };
  NoiseChannel<1> c;
  c.h = [beta](const S& z) { return beta * 0.5 * (z.p[0] * z.p[0] + z.q[0] * z.q[0]); };
  c.dh_dq = [beta](const S& z) -> V { return beta * z.q; };
  c.dh_dp = [beta](const S& z) -> V { return beta * z.p; };
  c.f = [beta, nu](const S& z) -> V { return -beta * nu * z.p; };
  sys.noise.push_back(c);
  sys.separable = true;
  sys.linear_forcing = std::vector<Mat<1>>{Mat<1>::Constant(nu), Mat<1>::Constant(beta * nu)};
  return sys;
}

// Deterministic damped oscillator run for the shifted time t + beta W, starting from z.
inline State<1> kubo_flow(const KuboParams& P, const State<1>& z, double t, double W) {
  const double w = P.omega(), nu = P.nu;
  const double tau = t + P.beta * W;
  const double e = std::exp(-0.5 * nu * tau), c = std::cos(w * tau), s = std::sin(w * tau);
  const double q0 = z.q[0], p0 = z.p[0];
  State<1> out;
  out.q[0] = q0 * e * c + (p0 + 0.5 * nu * q0) / w * e * s;
  out.p[0] = p0 * e * c - (q0 + 0.5 * nu * p0) / w * e * s;
  return out;
}

inline State<1> kubo_exact(const KuboParams& P, double t, double W) {
  State<1> z0;
  z0.q[0] = P.q0;
  z0.p[0] = P.p0;
  return kubo_flow(P, z0, t, W);
}

// exact one-step map; flows compose, so stepping with Brownian increments samples the exact solution
inline State<1> kubo_exact_step(const KuboParams& P, const State<1>& z, double dt, std::span<const double> dW) {
  return kubo_flow(P, z, dt, dW[0]);
}

inline double kubo_mean_energy(const KuboParams& P, double t) {
  const double q0 = P.q0, p0 = P.p0, nu = P.nu, b2 = P.beta * P.beta, w = P.omega();
  const double d = 4 - nu * nu;
  const double a = 2 * (p0 * p0 + q0 * q0 + nu * p0 * q0) / d;
  const double b = -(nu * nu * (p0 * p0 + q0 * q0) + 4 * nu * p0 * q0) / (2 * d);
  const double c = nu * (q0 * q0 - p0 * p0) / (2 * std::sqrt(d));
  const double arg = 2 * (1 - b2 * nu) * w * t;
  return a * std::exp(-nu * (2 - b2 * nu) * t / 2) +
         std::exp(-((2 - nu * nu) * b2 + nu) * t) * (b * std::cos(arg) + c * std::sin(arg));
}

// ---- van der Pol with additive noise ----

inline ForcedHamiltonianSystem<1> vdp_system(double sigma, double nu) {
  if (!(sigma >= 0 && nu >= 0)) throw InvalidParameter("vdp: sigma and nu must be non-negative");
  using S = State<1>;
  using V = Vec<1>;
  ForcedHamiltonianSystem<1> sys;
  sys.name = "vdp";
  sys.H = [](const S& z) { return 0.5 * (z.p[0] * z.p[0] + z.q[0] * z.q[0]); };
  sys.dH_dq = [](const S& z) { return z.q; };
  sys.dH_dp = [](const S& z) { return z.p; };
  sys.F = [nu](const S& z) -> V { return V::Constant(nu * (1 - z.q[0] * z.q[0]) * z.p[0]); };
  NoiseChannel<1> c;
  c.h = [sigma](const S& z) { return -sigma * z.q[0]; };
  c.dh_dq = [sigma](const S&) -> V { return V::Constant(-sigma); };
  c.dh_dp = [](const S&) -> V { return V::Zero(); };
  c.f = [](const S&) -> V { return V::Zero(); };
  sys.noise.push_back(c);
  sys.separable = true;
  sys.metadata["H_erg_ref"] = 2.3165;
  return sys;
}

// ---- Vlasov-Fokker-Planck, Lenard-Bernstein collisions ----

struct VfpLbParams {
  double nu = 0.01, mu = 1, D = std::numbers::sqrt2, E0 = 3;
  double eps = 0.25, a = 0.5, v0 = 4, sigma = 0.5;

  void validate() const {
    if (!(nu > 0 && mu > 0 && D > 0 && E0 >= 0)) throw InvalidParameter("lb: nu, mu, D must be positive, E0 >= 0");
    if (!(std::abs(eps) < 1 && a >= 0 && sigma > 0)) throw InvalidParameter("lb: need |eps| < 1, a >= 0, sigma > 0");
  }
  double phi(double x) const { return -E0 / (4 * std::numbers::pi) * std::sin(4 * std::numbers::pi * x); }
};

inline ForcedHamiltonianSystem<1> vfp_lb_system(const VfpLbParams& P) {
  P.validate();
  using S = State<1>;
  using V = Vec<1>;
  const double E0 = P.E0, k = 4 * std::numbers::pi, g = std::sqrt(P.nu) * P.D, damp = P.nu * P.mu;
  ForcedHamiltonianSystem<1> sys;
  sys.name = "lb";
  sys.H = [P](const S& z) { return 0.5 * z.p[0] * z.p[0] - P.phi(z.q[0]); };
  sys.dH_dq = [E0, k](const S& z) -> V { return V::Constant(E0 * std::cos(k * z.q[0])); };
  sys.dH_dp = [](const S& z) { return z.p; };
  sys.F = [damp](const S& z) -> V { return -damp * z.p; };
  NoiseChannel<1> c;
  c.h = [g](const S& z) { return -g * z.q[0]; };
  c.dh_dq = [g](const S&) -> V { return V::Constant(-g); };
  c.dh_dp = [](const S&) -> V { return V::Zero(); };
  c.f = [](const S&) -> V { return V::Zero(); };
  sys.noise.push_back(c);
  sys.separable = true;
  sys.linear_forcing = std::vector<Mat<1>>{Mat<1>::Constant(damp), Mat<1>::Zero()};
  return sys;
}

namespace detail {

// composite Simpson on a rectangle, n x n intervals (n even)
template <class Fn>
double simpson_2d(Fn&& f, double x0, double x1, double y0, double y1, int n) {
  const double hx = (x1 - x0) / n, hy = (y1 - y0) / n;
  auto w = [n](int i) { return (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0); };
  double total = 0;
  for (int i = 0; i <= n; ++i) {
    const double x = x0 + i * hx;
    double row = 0;
    for (int j = 0; j <= n; ++j) row += w(j) * f(x, y0 + j * hy);
    total += w(i) * row;
  }
  return total * hx * hy / 9.0;
}

// doubles the grid until successive values differ by less than tol
template <class Fn>
double refine_2d(Fn&& f, double x0, double x1, double y0, double y1, double tol, int n0 = 32, int n_max = 8192) {
  double prev = simpson_2d(f, x0, x1, y0, y1, n0);
  for (int n = 2 * n0; n <= n_max; n *= 2) {
    const double cur = simpson_2d(f, x0, x1, y0, y1, n);
    if (std::abs(cur - prev) < tol) return cur;
    prev = cur;
  }
  throw QuadratureError("quadrature refinement did not converge");
}

}  // namespace detail

// Gibbs density exp(2 mu phi / D^2) exp(-mu v^2 / D^2) / Z on [0,1] x R, Z by quadrature over |v| <= v_max.
class LbGibbs {
 public:
  static constexpr double v_max = 10;

  explicit LbGibbs(const VfpLbParams& P, double tol = 1e-7) : P_(P) {
    P.validate();
    Z_ = detail::refine_2d([this](double x, double v) { return weight(x, v); }, 0, 1, -v_max, v_max, tol);
    const double num = detail::refine_2d(
        [this](double x, double v) { return (0.5 * v * v - P_.phi(x)) * weight(x, v); }, 0, 1, -v_max, v_max, tol);
    Herg_ = num / Z_;
  }

  double Z() const { return Z_; }
  double density(double x, double v) const { return weight(x, v) / Z_; }
  double ergodic_energy() const { return Herg_; }

  double weight(double x, double v) const {
    const double s = P_.D * P_.D;
    return std::exp(2 * P_.mu * P_.phi(x) / s) * std::exp(-P_.mu * v * v / s);
  }

 private:
  VfpLbParams P_;
  double Z_ = 0, Herg_ = 0;
};

inline double lb_gibbs_density(const VfpLbParams& P, double x, double v) { return LbGibbs(P).density(x, v); }

inline double lb_ergodic_energy(const VfpLbParams& P) { return LbGibbs(P).ergodic_energy(); }

// rejection from (1 + eps cos 2 pi x) on [0, 1) with envelope 1 + |eps|
inline double sample_cosine_perturbed(double eps, PathRng& rng) {
  for (;;) {
    const double x = rng.uniform();
    if (rng.uniform() * (1 + std::abs(eps)) <= 1 + eps * std::cos(2 * std::numbers::pi * x)) return x;
  }
}

inline State<1> sample_initial_lb(const VfpLbParams& P, PathRng& rng) {
  State<1> z;
  z.q[0] = sample_cosine_perturbed(P.eps, rng);
  if (rng.uniform() < 1 / (1 + P.a))
    z.p[0] = rng.normal();
  else
    z.p[0] = P.v0 + P.sigma * rng.normal();
  return z;
}

// ---- Vlasov with Lorentz (pitch-angle) collisions ----

struct VfpLorentzParams {
  double nu = 0.005, E0 = 3;
  double eps1 = 0.25, eps2 = 0.25;

  void validate() const {
    if (!(nu > 0 && E0 >= 0)) throw InvalidParameter("lorentz: nu must be positive, E0 >= 0");
    if (!(std::abs(eps1) < 1 && std::abs(eps2) < 1)) throw InvalidParameter("lorentz: need |eps1|, |eps2| < 1");
  }
  double phi(double x, double y) const {
    const double k = 4 * std::numbers::pi;
    return -E0 / k * std::sin(k * x) * std::sin(k * y);
  }
};

inline ForcedHamiltonianSystem<2> vfp_lorentz_system(const VfpLorentzParams& P) {
  P.validate();
  using S = State<2>;
  using V = Vec<2>;
  const double E0 = P.E0, k = 4 * std::numbers::pi, g = std::sqrt(2 * P.nu);
  ForcedHamiltonianSystem<2> sys;
  sys.name = "lorentz";
  sys.H = [P](const S& z) { return 0.5 * z.p.squaredNorm() - P.phi(z.q[0], z.q[1]); };
  sys.dH_dq = [E0, k](const S& z) -> V {
    return V(E0 * std::cos(k * z.q[0]) * std::sin(k * z.q[1]), E0 * std::sin(k * z.q[0]) * std::cos(k * z.q[1]));
  };
  sys.dH_dp = [](const S& z) { return z.p; };
  sys.F = [](const S&) -> V { return V::Zero(); };
  NoiseChannel<2> c;
  c.h = [](const S&) { return 0.0; };
  c.dh_dq = [](const S&) -> V { return V::Zero(); };
  c.dh_dp = [](const S&) -> V { return V::Zero(); };
  // perpendicular to the velocity, so H is conserved pathwise
  c.f = [g](const S& z) -> V { return V(g * z.p[1], -g * z.p[0]); };
  sys.noise.push_back(c);
  sys.separable = true;
  Mat<2> G1;
  G1 << 0, -g, g, 0;
  sys.linear_forcing = std::vector<Mat<2>>{Mat<2>::Zero(), G1};
  return sys;
}

inline State<2> sample_initial_lorentz(const VfpLorentzParams& P, PathRng& rng) {
  State<2> z;
  z.q[0] = sample_cosine_perturbed(P.eps1, rng);
  z.q[1] = sample_cosine_perturbed(P.eps2, rng);
  z.p[0] = rng.normal();
  z.p[1] = rng.normal();
  return z;
}

// ---- planar oscillator with radial forcing (rotation symmetric) ----

inline ForcedHamiltonianSystem<2> central_force_system(double nu, double beta) {
  using S = State<2>;
  using V = Vec<2>;
  ForcedHamiltonianSystem<2> sys;
  sys.name = "central";
  sys.H = [](const S& z) { return 0.5 * (z.p.squaredNorm() + z.q.squaredNorm()); };
  sys.dH_dq = [](const S& z) { return z.q; };
  sys.dH_dp = [](const S& z) { return z.p; };
  sys.F = [nu](const S& z) -> V { return -nu * z.q.dot(z.p) * z.q; };
  NoiseChannel<2> c;
  c.h = [beta](const S& z) { return beta * 0.5 * (z.p.squaredNorm() + z.q.squaredNorm()); };
  c.dh_dq = [beta](const S& z) -> V { return beta * z.q; };
  c.dh_dp = [beta](const S& z) -> V { return beta * z.p; };
  c.f = [](const S&) -> V { return V::Zero(); };
  sys.noise.push_back(c);
  sys.separable = true;
  return sys;
}

}  // namespace sdha
