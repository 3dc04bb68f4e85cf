#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "sdha/core.hpp"
#include "sdha/solver.hpp"
#include "sdha/sprk.hpp"
#include "sdha/tableau.hpp"

namespace sdha {

template <int N>
using StepMap = std::function<State<N>(const State<N>&, double, std::span<const double>)>;

template <int N>
using Mat2N = Eigen::Matrix<double, 2 * N, 2 * N>;

template <int N>
Mat2N<N> canonical_omega() {
  Mat2N<N> W = Mat2N<N>::Zero();
  W.template topRightCorner<N, N>().setIdentity();
  W.template bottomLeftCorner<N, N>() = -Mat<N>::Identity();
  return W;
}

template <int N>
struct JacobianReport {
  Mat2N<N> D;
  double det = 0;
  // |D^T W D - c W|_inf at the least-squares c
  double symplectic_residual = 0;
  double conformal_factor_fitted = 0;
  // |D^T W D - W|_inf
  double unit_residual = 0;
};

template <int N>
JacobianReport<N> jacobian_report(const Mat2N<N>& D) {
  JacobianReport<N> r;
  r.D = D;
  r.det = D.determinant();
  const Mat2N<N> W = canonical_omega<N>();
  const Mat2N<N> S = D.transpose() * W * D;
  r.conformal_factor_fitted = (S.cwiseProduct(W)).sum() / W.squaredNorm();
  r.symplectic_residual = (S - r.conformal_factor_fitted * W).cwiseAbs().maxCoeff();
  r.unit_residual = (S - W).cwiseAbs().maxCoeff();
  return r;
}

// central differences, column j perturbed by fd_step * max(1, |z_j|)
template <int N>
JacobianReport<N> step_jacobian(const StepMap<N>& step, const State<N>& z, double dt, std::span<const double> dW,
                                double fd_step = 1e-6) {
  if (!(fd_step > 0)) throw InvalidParameter("step_jacobian: fd_step must be positive");
  Mat2N<N> D;
  const Vec2N<N> z0 = z.z();
  for (int j = 0; j < 2 * N; ++j) {
    const double h = fd_step * std::max(1.0, std::abs(z0[j]));
    Vec2N<N> zp = z0, zm = z0;
    zp[j] += h;
    zm[j] -= h;
    D.col(j) = (step(State<N>::from_z(zp), dt, dW).z() - step(State<N>::from_z(zm), dt, dW).z()) / (2 * h);
  }
  return jacobian_report<N>(D);
}

// exp(-nu_0 dt - sum nu_i dW_i)
inline double conformal_factor(std::span<const double> nu, double dt, std::span<const double> dW) {
  if (nu.size() != dW.size() + 1) throw InvalidParameter("conformal_factor: nu must have length m + 1");
  double e = -nu[0] * dt;
  for (std::size_t i = 0; i < dW.size(); ++i) e -= nu[i + 1] * dW[i];
  return std::exp(e);
}

template <class M>
double volume_factor(const std::vector<M>& Gamma, double dt, std::span<const double> dW) {
  if (Gamma.size() != dW.size() + 1) throw InvalidParameter("volume_factor: need Gamma_0..Gamma_m");
  double e = 0;
  for (std::size_t i = 0; i < Gamma.size(); ++i) {
    if (Gamma[i].rows() != Gamma[i].cols()) throw InvalidParameter("volume_factor: Gamma must be square");
    e -= Gamma[i].trace() * (i == 0 ? dt : dW[i - 1]);
  }
  return std::exp(e);
}

// det(I + gamma (I - gamma/2)^{-1})
inline double quasi_symplectic_det(const Eigen::MatrixXd& gamma) {
  if (gamma.rows() != gamma.cols()) throw InvalidParameter("quasi_symplectic_det: gamma must be square");
  const int n = static_cast<int>(gamma.rows());
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
  const Eigen::MatrixXd eta = I - 0.5 * gamma;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(eta);
  lu.setThreshold(1e-14);
  if (!lu.isInvertible()) throw SingularMatrix("quasi_symplectic_det: I - gamma/2 is singular");
  return (I + gamma * lu.inverse()).determinant();
}

// Increment of the forcing's own linear map, -(dt Gamma_0 + sum dW_i Gamma_i). This is the gamma for which
// the Stormer-Verlet Jacobian determinant equals quasi_symplectic_det(gamma) when F = -Gamma_0 p.
template <int N>
Eigen::MatrixXd forcing_increment(const ForcedHamiltonianSystem<N>& sys, double dt, std::span<const double> dW) {
  if (!sys.linear_forcing) throw UnsupportedConfiguration("system has no linear forcing");
  const auto& G = *sys.linear_forcing;
  if (G.size() != dW.size() + 1) throw InvalidParameter("forcing_increment: increment length mismatch");
  Mat<N> g = dt * G[0];
  for (std::size_t i = 0; i < dW.size(); ++i) g += dW[i] * G[i + 1];
  return -Eigen::MatrixXd(g);
}

template <int N>
double momentum_map_so2(const State<N>& z) {
  if constexpr (N != 2) {
    throw UnsupportedConfiguration("momentum_map_so2 needs N = 2");
  } else {
    return z.q[0] * z.p[1] - z.q[1] * z.p[0];
  }
}

template <int N>
double noether_drift(const StepMap<N>& step, const ForcedHamiltonianSystem<N>& sys, const State<N>& z, double dt,
                     std::span<const double> dW) {
  detail::check_increments(sys, dW);
  return momentum_map_so2(step(z, dt, dW)) - momentum_map_so2(z);
}

template <int N>
struct DiscreteHamiltonian {
  double Hd = 0;
  Vec<N> F_minus = Vec<N>::Zero();
  Vec<N> F_plus = Vec<N>::Zero();
  Vec<N> p_k = Vec<N>::Zero();
  Vec<N> q_next = Vec<N>::Zero();
};

namespace detail {

template <int N>
struct MixedSolution {
  std::vector<Vec<N>> Q, P;
  Vec<N> p_k, q_next;
};

// Stage equations solved for (Q_i, P_i, p_k) given q_k and p_{k+1}.
template <int N>
MixedSolution<N> solve_mixed(const ForcedHamiltonianSystem<N>& sys, const SprkTableau& t, const Vec<N>& qk,
                             const Vec<N>& pk1, double dt, std::span<const double> dW, const SolverConfig& cfg) {
  const int s = t.s;
  const int d = 2 * s * N + N;
  check_unknowns(d);
  std::vector<StageTerms<N>> T(s);
  auto stage = [&](const SVec& x, int j) { return State<N>(x.segment(j * N, N), x.segment((s + j) * N, N)); };
  auto rhs = [&](const SVec& x, SVec& out) {
    out.resize(d);
    const Vec<N> pk = x.segment(2 * s * N, N);
    Vec<N> dp = Vec<N>::Zero();
    for (int i = 0; i < s; ++i) {
      Vec<N> Q = qk, P = pk;
      for (int j = 0; j < s; ++j) {
        const auto& tj = T[j];
        Q += dt * t.a(i, j) * tj.Hp + t.b(i, j) * tj.Wp;
        P += -dt * t.abar(i, j) * tj.Hq - t.bbar(i, j) * tj.Wq + dt * t.ahat(i, j) * tj.F + t.bhat(i, j) * tj.Wf;
      }
      out.segment(i * N, N) = Q;
      out.segment((s + i) * N, N) = P;
      const auto& ti = T[i];
      dp += -dt * t.alpha[i] * ti.Hq - t.beta[i] * ti.Wq + dt * t.alphahat[i] * ti.F + t.betahat[i] * ti.Wf;
    }
    out.segment(2 * s * N, N) = pk1 - dp;
  };
  SVec x0(d);
  for (int j = 0; j < s; ++j) {
    x0.segment(j * N, N) = qk;
    x0.segment((s + j) * N, N) = pk1;
  }
  x0.segment(2 * s * N, N) = pk1;
  auto R = [&](const SVec& x) -> SVec {
    for (int j = 0; j < s; ++j) eval_terms(sys, stage(x, j), dW, T[j]);
    SVec y;
    rhs(x, y);
    return SVec(x - y);
  };
  const SolveResult res = solve(R, x0, cfg);
  MixedSolution<N> out;
  for (int j = 0; j < s; ++j) {
    out.Q.push_back(res.x.segment(j * N, N));
    out.P.push_back(res.x.segment((s + j) * N, N));
    eval_terms(sys, stage(res.x, j), dW, T[j]);
  }
  out.p_k = res.x.segment(2 * s * N, N);
  out.q_next = qk;
  for (int i = 0; i < s; ++i) out.q_next += dt * t.alpha[i] * T[i].Hp + t.beta[i] * T[i].Wp;
  return out;
}

}  // namespace detail

template <int N>
DiscreteHamiltonian<N> evaluate_discrete_hamiltonian(const ForcedHamiltonianSystem<N>& sys, const SprkTableau& t,
                                                     const Vec<N>& qk, const Vec<N>& pk1, double dt,
                                                     std::span<const double> dW, const SolverConfig& cfg) {
  detail::check_increments(sys, dW);
  t.validate();
  const int s = t.s;
  const auto sol = detail::solve_mixed(sys, t, qk, pk1, dt, dW, cfg);

  DiscreteHamiltonian<N> out;
  out.p_k = sol.p_k;
  out.q_next = sol.q_next;
  out.Hd = pk1.dot(sol.q_next);
  for (int i = 0; i < s; ++i) {
    const State<N> Z(sol.Q[i], sol.P[i]);
    out.Hd -= dt * t.alpha[i] * (Z.p.dot(sys.dH_dp(Z)) - sys.H(Z));
    for (std::size_t r = 0; r < dW.size(); ++r) {
      const auto& c = sys.noise[r];
      out.Hd -= dW[r] * t.beta[i] * (Z.p.dot(c.dh_dp(Z)) - c.h(Z));
    }
  }

  // stage Jacobians dQ_i/dq_k and dQ_i/dp_{k+1}
  std::vector<Mat<N>> dQdq(s), dQdp(s);
  for (int j = 0; j < N; ++j) {
    for (int which = 0; which < 2; ++which) {
      Vec<N> qp = qk, qm = qk, pp = pk1, pm = pk1;
      const double x = which == 0 ? qk[j] : pk1[j];
      const double h = 1e-6 * std::max(1.0, std::abs(x));
      if (which == 0) {
        qp[j] += h;
        qm[j] -= h;
      } else {
        pp[j] += h;
        pm[j] -= h;
      }
      const auto sp = detail::solve_mixed(sys, t, qp, pp, dt, dW, cfg);
      const auto sm = detail::solve_mixed(sys, t, qm, pm, dt, dW, cfg);
      for (int i = 0; i < s; ++i) (which == 0 ? dQdq : dQdp)[i].col(j) = (sp.Q[i] - sm.Q[i]) / (2 * h);
    }
  }
  for (int i = 0; i < s; ++i) {
    const State<N> Z(sol.Q[i], sol.P[i]);
    Vec<N> force = dt * t.alphahat[i] * sys.F(Z);
    for (std::size_t r = 0; r < dW.size(); ++r) force += dW[r] * t.betahat[i] * sys.noise[r].f(Z);
    out.F_minus += dQdq[i].transpose() * force;
    out.F_plus += dQdp[i].transpose() * force;
  }
  return out;
}

struct GeneratingResidual {
  double r_q = 0;
  double r_p = 0;
};

// Steps forward, then checks q_{k+1} = D2 Hd - F+ and p_k = D1 Hd - F- at (q_k, p_{k+1}).
template <int N>
GeneratingResidual verify_generating_identity(const ForcedHamiltonianSystem<N>& sys, const SprkTableau& t,
                                              const State<N>& z, double dt, std::span<const double> dW,
                                              const SolverConfig& cfg) {
  const State<N> next = sprk_step(sys, t, z, dt, dW, cfg);
  const auto base = evaluate_discrete_hamiltonian(sys, t, z.q, next.p, dt, dW, cfg);
  auto Hd = [&](const Vec<N>& q, const Vec<N>& p) { return detail::solve_mixed(sys, t, q, p, dt, dW, cfg); };
  auto value = [&](const Vec<N>& q, const Vec<N>& p) {
    const auto sol = Hd(q, p);
    double v = p.dot(sol.q_next);
    for (int i = 0; i < t.s; ++i) {
      const State<N> Z(sol.Q[i], sol.P[i]);
      v -= dt * t.alpha[i] * (Z.p.dot(sys.dH_dp(Z)) - sys.H(Z));
      for (std::size_t r = 0; r < dW.size(); ++r)
        v -= dW[r] * t.beta[i] * (Z.p.dot(sys.noise[r].dh_dp(Z)) - sys.noise[r].h(Z));
    }
    return v;
  };
  Vec<N> D1, D2;
  for (int j = 0; j < N; ++j) {
    const double hq = 1e-6 * std::max(1.0, std::abs(z.q[j]));
    Vec<N> qp = z.q, qm = z.q;
    qp[j] += hq;
    qm[j] -= hq;
    D1[j] = (value(qp, next.p) - value(qm, next.p)) / (2 * hq);
    const double hp = 1e-6 * std::max(1.0, std::abs(next.p[j]));
    Vec<N> pp = next.p, pm = next.p;
    pp[j] += hp;
    pm[j] -= hp;
    D2[j] = (value(z.q, pp) - value(z.q, pm)) / (2 * hp);
  }
  GeneratingResidual g;
  g.r_q = (next.q - (D2 - base.F_plus)).cwiseAbs().maxCoeff();
  g.r_p = (z.p - (D1 - base.F_minus)).cwiseAbs().maxCoeff();
  return g;
}

}  // namespace sdha
