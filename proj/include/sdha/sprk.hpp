#pragma once

#include <span>
#include <vector>

#include "sdha/core.hpp"
#include "sdha/solver.hpp"
#include "sdha/tableau.hpp"

namespace sdha {

template <int N>
using Vec2N = Eigen::Matrix<double, 2 * N, 1>;

namespace detail {

template <int N>
void check_increments(const ForcedHamiltonianSystem<N>& sys, std::span<const double> dW) {
  if (dW.size() != sys.noise.size())
    throw InvalidParameter("increment vector length " + std::to_string(dW.size()) + " != noise channels " +
                           std::to_string(sys.noise.size()));
}

// Everything the SPRK equations need from one stage point, with the noise channels already weighted by dW.
template <int N>
struct StageTerms {
  Vec<N> Hp, Hq, F, Wp, Wq, Wf;
};

template <int N>
void eval_terms(const ForcedHamiltonianSystem<N>& sys, const State<N>& z, std::span<const double> dW,
                StageTerms<N>& t) {
  t.Hp = sys.dH_dp(z);
  t.Hq = sys.dH_dq(z);
  t.F = sys.F(z);
  t.Wp.setZero();
  t.Wq.setZero();
  t.Wf.setZero();
  for (std::size_t r = 0; r < dW.size(); ++r) {
    if (dW[r] == 0.0) continue;
    const auto& c = sys.noise[r];
    t.Wp += dW[r] * c.dh_dp(z);
    t.Wq += dW[r] * c.dh_dq(z);
    t.Wf += dW[r] * c.f(z);
  }
}

// G(Z) = dt a(Z) + sum dW_r b_r(Z)
template <int N>
Vec2N<N> increment_field(const ForcedHamiltonianSystem<N>& sys, const State<N>& z, double dt,
                         std::span<const double> dW) {
  return dt * drift_field(sys, z) + noise_field(sys, z, dW);
}

// position part of G; for separable systems it depends on P only
template <int N>
Vec<N> increment_q(const ForcedHamiltonianSystem<N>& sys, const State<N>& z, double dt, std::span<const double> dW) {
  Vec<N> g = dt * sys.dH_dp(z);
  for (std::size_t r = 0; r < dW.size(); ++r)
    if (dW[r] != 0.0) g += dW[r] * sys.noise[r].dh_dp(z);
  return g;
}

template <int N>
Vec<N> increment_p(const ForcedHamiltonianSystem<N>& sys, const State<N>& z, double dt, std::span<const double> dW) {
  Vec<N> g = dt * (sys.F(z) - sys.dH_dq(z));
  for (std::size_t r = 0; r < dW.size(); ++r)
    if (dW[r] != 0.0) g += dW[r] * (sys.noise[r].f(z) - sys.noise[r].dh_dq(z));
  return g;
}

template <int N>
Vec<N> head(const SVec& x, int off = 0) {
  return x.segment(off, N);
}

// Solves Z = base + c G(Z) for the offset Z - base, so the residual carries no rounding from |base|. Separable systems substitute Q = base_q + c G_q(P) and iterate on P alone.
template <int N>
State<N> solve_stage(const ForcedHamiltonianSystem<N>& sys, const State<N>& base, double c, const State<N>& z,
                     double dt, std::span<const double> dW, const SolverConfig& cfg) {
  if (sys.separable) {
    auto q_of = [&](const Vec<N>& P) -> Vec<N> { return base.q + c * increment_q(sys, State<N>(z.q, P), dt, dW); };
    auto R = [&](const SVec& x) -> SVec {
      const Vec<N> P = base.p + head<N>(x);
      const State<N> Z(q_of(P), P);
      return SVec(head<N>(x) - c * increment_p(sys, Z, dt, dW));
    };
    SVec x0 = c * increment_p(sys, z, dt, dW);
    const SolveResult res = solve(R, x0, cfg, base.z().template lpNorm<Eigen::Infinity>());
    const Vec<N> P = base.p + head<N>(res.x);
    return State<N>(q_of(P), P);
  }
  auto R = [&](const SVec& x) -> SVec {
    const State<N> Z(base.q + head<N>(x), base.p + head<N>(x, N));
    return SVec(x - c * increment_field(sys, Z, dt, dW));
  };
  SVec x0 = c * increment_field(sys, z, dt, dW);
  const SolveResult res = solve(R, x0, cfg, base.z().template lpNorm<Eigen::Infinity>());
  return State<N>(base.q + head<N>(res.x), base.p + head<N>(res.x, N));
}

}  // namespace detail

// General s-stage engine: all 2sN stage unknowns (Q_1..Q_s, P_1..P_s) solved as one system.
template <int N>
State<N> sprk_step(const ForcedHamiltonianSystem<N>& sys, const SprkTableau& t, const State<N>& z, double dt,
                   std::span<const double> dW, const SolverConfig& cfg) {
  detail::check_increments(sys, dW);
  t.validate();
  const int s = t.s;
  const int d = 2 * s * N;
  check_unknowns(d);
  std::vector<detail::StageTerms<N>> T(s);

  // unknowns are stage offsets Q_i - q, P_i - p
  auto stage = [&](const SVec& x, int j) {
    return State<N>(z.q + x.segment(j * N, N), z.p + x.segment((s + j) * N, N));
  };
  auto rhs = [&](SVec& out) {
    out.resize(d);
    for (int i = 0; i < s; ++i) {
      Vec<N> Q = Vec<N>::Zero(), P = Vec<N>::Zero();
      for (int j = 0; j < s; ++j) {
        const auto& tj = T[j];
        Q += dt * t.a(i, j) * tj.Hp + t.b(i, j) * tj.Wp;
        P += -dt * t.abar(i, j) * tj.Hq - t.bbar(i, j) * tj.Wq + dt * t.ahat(i, j) * tj.F + t.bhat(i, j) * tj.Wf;
      }
      out.segment(i * N, N) = Q;
      out.segment((s + i) * N, N) = P;
    }
  };

  // predictor: stage equations with every stage frozen at z
  SVec x0(d);
  for (int j = 0; j < s; ++j) detail::eval_terms(sys, z, dW, T[j]);
  rhs(x0);

  auto R = [&](const SVec& x) -> SVec {
    for (int j = 0; j < s; ++j) detail::eval_terms(sys, stage(x, j), dW, T[j]);
    SVec y;
    rhs(y);
    return SVec(x - y);
  };
  const SolveResult res = solve(R, x0, cfg, z.z().template lpNorm<Eigen::Infinity>());
  for (int j = 0; j < s; ++j) detail::eval_terms(sys, stage(res.x, j), dW, T[j]);

  State<N> out = z;
  for (int i = 0; i < s; ++i) {
    const auto& ti = T[i];
    out.q += dt * t.alpha[i] * ti.Hp + t.beta[i] * ti.Wp;
    out.p += -dt * t.alpha[i] * ti.Hq - t.beta[i] * ti.Wq + dt * t.alphahat[i] * ti.F + t.betahat[i] * ti.Wf;
  }
  return out;
}

template <int N>
State<N> midpoint_step(const ForcedHamiltonianSystem<N>& sys, const State<N>& z, double dt,
                       std::span<const double> dW, const SolverConfig& cfg) {
  detail::check_increments(sys, dW);
  const State<N> Z = detail::solve_stage(sys, z, 0.5, z, dt, dW, cfg);
  return State<N>(2.0 * Z.q - z.q, 2.0 * Z.p - z.p);
}

template <int N>
State<N> stormer_verlet_step(const ForcedHamiltonianSystem<N>& sys, const State<N>& z, double dt,
                             std::span<const double> dW, const SolverConfig& cfg) {
  detail::check_increments(sys, dW);
  const Vec<N>& q = z.q;

  // 1) P1 = p + G_p(q, P1)/2
  Vec<N> P1;
  if (sys.separable && sys.linear_forcing) {
    // (I + gamma/2) P1 = p - (dt U0' + sum dW U_r')(q)/2 with gamma = dt Gamma0 + sum dW Gamma_r
    const auto& G = *sys.linear_forcing;
    Mat<N> g = dt * G[0];
    for (std::size_t r = 0; r < dW.size(); ++r) g += dW[r] * G[r + 1];
    const State<N> zq(q, z.p);
    Vec<N> rhs = dt * sys.dH_dq(zq);
    for (std::size_t r = 0; r < dW.size(); ++r)
      if (dW[r] != 0.0) rhs += dW[r] * sys.noise[r].dh_dq(zq);
    const Mat<N> M = Mat<N>::Identity() + 0.5 * g;
    P1 = M.partialPivLu().solve(z.p - 0.5 * rhs);
  } else if (sys.separable && !sys.forcing_depends_on_p) {
    P1 = z.p + 0.5 * detail::increment_p(sys, z, dt, dW);
  } else {
    auto R = [&](const SVec& x) -> SVec {
      const Vec<N> P = z.p + detail::head<N>(x);
      return SVec(detail::head<N>(x) - 0.5 * detail::increment_p(sys, State<N>(q, P), dt, dW));
    };
    SVec x0 = 0.5 * detail::increment_p(sys, z, dt, dW);
    P1 = z.p + detail::head<N>(solve(R, x0, cfg, z.z().template lpNorm<Eigen::Infinity>()).x);
  }

  // 2) q' = q + [G_q(q, P1) + G_q(q', P1)]/2
  const Vec<N> gq0 = detail::increment_q(sys, State<N>(q, P1), dt, dW);
  Vec<N> q1;
  if (sys.separable) {
    q1 = q + gq0;
  } else {
    auto R = [&](const SVec& x) -> SVec {
      const Vec<N> Q = q + detail::head<N>(x);
      return SVec(detail::head<N>(x) - 0.5 * gq0 - 0.5 * detail::increment_q(sys, State<N>(Q, P1), dt, dW));
    };
    SVec x0 = gq0;
    q1 = q + detail::head<N>(solve(R, x0, cfg, z.z().template lpNorm<Eigen::Infinity>()).x);
  }

  // 3) p' = P1 + G_p(q', P1)/2
  const Vec<N> p1 = P1 + 0.5 * detail::increment_p(sys, State<N>(q1, P1), dt, dW);
  return State<N>(q1, p1);
}

template <int N>
State<N> dirk_step(const ForcedHamiltonianSystem<N>& sys, double lambda, const State<N>& z, double dt,
                   std::span<const double> dW, const SolverConfig& cfg) {
  if (lambda == 0.0 || lambda == 1.0) return midpoint_step(sys, z, dt, dW, cfg);
  detail::check_increments(sys, dW);
  const double c1 = lambda / 2, c2 = (1 - lambda) / 2;
  const State<N> Z1 = detail::solve_stage(sys, z, c1, z, dt, dW, cfg);
  // G(Z1) recovered from the converged stage equation
  const Vec2N<N> G1 = (Z1.z() - z.z()) / c1;
  const State<N> base = State<N>::from_z(z.z() + lambda * G1);
  const State<N> Z2 = detail::solve_stage(sys, base, c2, Z1, dt, dW, cfg);
  const Vec2N<N> G2 = (Z2.z() - base.z()) / c2;
  return State<N>::from_z(z.z() + lambda * G1 + (1 - lambda) * G2);
}

// Stratonovich Heun predictor-corrector
template <int N>
State<N> heun_step(const ForcedHamiltonianSystem<N>& sys, const State<N>& z, double dt, std::span<const double> dW) {
  detail::check_increments(sys, dW);
  const Vec2N<N> a0 = drift_field(sys, z), b0 = noise_field(sys, z, dW);
  const State<N> zb = State<N>::from_z(z.z() + dt * a0 + b0);
  const Vec2N<N> a1 = drift_field(sys, zb), b1 = noise_field(sys, zb, dW);
  return State<N>::from_z(z.z() + 0.5 * dt * (a0 + a1) + 0.5 * (b0 + b1));
}

}  // namespace sdha
