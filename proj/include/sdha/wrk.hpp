#pragma once

#include <array>
#include <span>
#include <vector>

#include "sdha/core.hpp"
#include "sdha/solver.hpp"
#include "sdha/sprk.hpp"
#include "sdha/tableau.hpp"

namespace sdha {

inline constexpr int kMaxWrkStages = 32;

// Stages that can influence the output: start from nonzero weights and close over the coupling matrices.
struct WrkStagePlan {
  std::vector<int> drift;  // family 0
  std::vector<int> noise;  // families 1..m
};

inline WrkStagePlan wrk_needed_stages(const WrkTableau& t) {
  t.validate();
  std::vector<char> in0(t.s, 0), in1(t.s, 0);
  for (int i = 0; i < t.s; ++i) {
    in0[i] = t.alpha[i] != 0.0;
    in1[i] = t.beta[i] != 0.0;
  }
  for (bool changed = true; changed;) {
    changed = false;
    auto mark = [&](std::vector<char>& v, int j) {
      if (!v[j]) v[j] = 1, changed = true;
    };
    for (int i = 0; i < t.s; ++i)
      for (int j = 0; j < t.s; ++j) {
        if (in0[i]) {
          if (t.a0(i, j) != 0.0) mark(in0, j);
          if (t.b0(i, j) != 0.0) mark(in1, j);
        }
        if (in1[i]) {
          if (t.a1(i, j) != 0.0) mark(in0, j);
          if (t.b1(i, j) != 0.0 || (!t.single_noise && t.b3(i, j) != 0.0)) mark(in1, j);
        }
      }
  }
  WrkStagePlan p;
  for (int i = 0; i < t.s; ++i) {
    if (in0[i]) p.drift.push_back(i);
    if (in1[i]) p.noise.push_back(i);
  }
  return p;
}

// One step of the weak partitioned scheme. I holds the three-point increments.
template <int N>
State<N> wrk_step(const ForcedHamiltonianSystem<N>& sys, const WrkTableau& t, const State<N>& z, double dt,
                  std::span<const double> I, const SolverConfig& cfg) {
  detail::check_increments(sys, I);
  const int m = sys.dim_m();
  if (t.single_noise && m > 1)
    throw UnsupportedConfiguration("tableau '" + t.name + "' is restricted to a single noise channel");
  const WrkStagePlan plan = wrk_needed_stages(t);
  // with b1 == b3 all noise families coincide and one shared family carries every channel
  const bool shared = m <= 1 || t.b1 == t.b3;
  const int L = m == 0 ? 0 : (shared ? 1 : m);
  const int n0 = static_cast<int>(plan.drift.size());
  const int n1 = m == 0 ? 0 : static_cast<int>(plan.noise.size());
  const int nn = L * n1;
  if (n0 > kMaxWrkStages || nn > kMaxWrkStages)
    throw UnsupportedConfiguration("weak tableau needs too many stages for this system");
  const bool sep = sys.separable;
  const int per = sep ? N : 2 * N;
  const int d = per * (n0 + nn);
  check_unknowns(d);

  std::array<Vec<N>, kMaxWrkStages> Q0, P0, Hp, Hq, Fd, Qn, Pn, Wp, Wq, Wf;
  const auto& S0 = plan.drift;
  const auto& S1 = plan.noise;

  auto noise_p = [&](int l, const State<N>& Z) -> Vec<N> {
    Vec<N> w = Vec<N>::Zero();
    if (shared) {
      for (int r = 0; r < m; ++r)
        if (I[r] != 0.0) w += I[r] * sys.noise[r].dh_dp(Z);
    } else if (I[l] != 0.0) {
      w = I[l] * sys.noise[l].dh_dp(Z);
    }
    return w;
  };
  auto noise_qf = [&](int l, const State<N>& Z, Vec<N>& wq, Vec<N>& wf) {
    wq.setZero();
    wf.setZero();
    for (int r = shared ? 0 : l; r < (shared ? m : l + 1); ++r) {
      if (I[r] == 0.0) continue;
      wq += I[r] * sys.noise[r].dh_dq(Z);
      wf += I[r] * sys.noise[r].f(Z);
    }
  };

  // right-hand sides of the stage equations as offsets from z, from the current term arrays
  auto rhs0 = [&](int i, Vec<N>& Q, Vec<N>& P) {
    Q.setZero();
    P.setZero();
    for (int jj = 0; jj < n0; ++jj) {
      const double c = t.a0(i, S0[jj]);
      if (c == 0.0) continue;
      Q += dt * c * Hp[jj];
      P += dt * c * (Fd[jj] - Hq[jj]);
    }
    for (int l = 0; l < L; ++l)
      for (int kk = 0; kk < n1; ++kk) {
        const double c = t.b0(i, S1[kk]);
        if (c == 0.0) continue;
        Q += c * Wp[l * n1 + kk];
        P += c * (Wf[l * n1 + kk] - Wq[l * n1 + kk]);
      }
  };
  auto rhsl = [&](int l, int i, Vec<N>& Q, Vec<N>& P) {
    Q.setZero();
    P.setZero();
    for (int jj = 0; jj < n0; ++jj) {
      const double c = t.a1(i, S0[jj]);
      if (c == 0.0) continue;
      Q += dt * c * Hp[jj];
      P += dt * c * (Fd[jj] - Hq[jj]);
    }
    for (int r = 0; r < L; ++r)
      for (int kk = 0; kk < n1; ++kk) {
        const double c = r == l ? t.b1(i, S1[kk]) : t.b3(i, S1[kk]);
        if (c == 0.0) continue;
        Q += c * Wp[r * n1 + kk];
        P += c * (Wf[r * n1 + kk] - Wq[r * n1 + kk]);
      }
  };
  auto eval_all = [&]() {
    for (int jj = 0; jj < n0; ++jj) {
      const State<N> Z(Q0[jj], P0[jj]);
      if (!sep) Hp[jj] = sys.dH_dp(Z);
      Hq[jj] = sys.dH_dq(Z);
      Fd[jj] = sys.F(Z);
    }
    for (int k = 0; k < nn; ++k) {
      const State<N> Z(Qn[k], Pn[k]);
      if (!sep) Wp[k] = noise_p(k / n1, Z);
      noise_qf(k / n1, Z, Wq[k], Wf[k]);
    }
  };

  // predictor: every stage frozen at z
  for (int jj = 0; jj < n0; ++jj) Q0[jj] = z.q, P0[jj] = z.p, Hp[jj] = sys.dH_dp(z);
  for (int k = 0; k < nn; ++k) Qn[k] = z.q, Pn[k] = z.p, Wp[k] = noise_p(k / n1, z);
  eval_all();
  SVec x0(d);
  {
    Vec<N> Q, P;
    for (int jj = 0; jj < n0; ++jj) {
      rhs0(S0[jj], Q, P);
      if (sep) {
        x0.segment(jj * N, N) = P;
      } else {
        x0.segment(jj * 2 * N, N) = Q;
        x0.segment(jj * 2 * N + N, N) = P;
      }
    }
    for (int k = 0; k < nn; ++k) {
      rhsl(k / n1, S1[k % n1], Q, P);
      const int off = (n0 + k) * per;
      if (sep) {
        x0.segment(off, N) = P;
      } else {
        x0.segment(off, N) = Q;
        x0.segment(off + N, N) = P;
      }
    }
  }

  auto R = [&](const SVec& x) -> SVec {
    SVec res(d);
    if (sep) {
      // momentum offsets are the unknowns; positions follow explicitly
      for (int jj = 0; jj < n0; ++jj) {
        P0[jj] = z.p + x.segment(jj * N, N);
        Hp[jj] = sys.dH_dp(State<N>(z.q, P0[jj]));
      }
      for (int k = 0; k < nn; ++k) {
        Pn[k] = z.p + x.segment((n0 + k) * N, N);
        Wp[k] = noise_p(k / n1, State<N>(z.q, Pn[k]));
      }
      Vec<N> Q, P;
      for (int jj = 0; jj < n0; ++jj) {
        rhs0(S0[jj], Q, P);
        Q0[jj] = z.q + Q;
      }
      for (int k = 0; k < nn; ++k) {
        rhsl(k / n1, S1[k % n1], Q, P);
        Qn[k] = z.q + Q;
      }
      eval_all();
      for (int jj = 0; jj < n0; ++jj) {
        rhs0(S0[jj], Q, P);
        res.segment(jj * N, N) = x.segment(jj * N, N) - P;
      }
      for (int k = 0; k < nn; ++k) {
        rhsl(k / n1, S1[k % n1], Q, P);
        res.segment((n0 + k) * N, N) = x.segment((n0 + k) * N, N) - P;
      }
    } else {
      for (int jj = 0; jj < n0; ++jj) {
        Q0[jj] = z.q + x.segment(jj * 2 * N, N);
        P0[jj] = z.p + x.segment(jj * 2 * N + N, N);
      }
      for (int k = 0; k < nn; ++k) {
        Qn[k] = z.q + x.segment((n0 + k) * 2 * N, N);
        Pn[k] = z.p + x.segment((n0 + k) * 2 * N + N, N);
      }
      eval_all();
      Vec<N> Q, P;
      for (int jj = 0; jj < n0; ++jj) {
        rhs0(S0[jj], Q, P);
        res.segment(jj * 2 * N, N) = x.segment(jj * 2 * N, N) - Q;
        res.segment(jj * 2 * N + N, N) = x.segment(jj * 2 * N + N, N) - P;
      }
      for (int k = 0; k < nn; ++k) {
        rhsl(k / n1, S1[k % n1], Q, P);
        res.segment((n0 + k) * 2 * N, N) = x.segment((n0 + k) * 2 * N, N) - Q;
        res.segment((n0 + k) * 2 * N + N, N) = x.segment((n0 + k) * 2 * N + N, N) - P;
      }
    }
    return res;
  };
  const SolveResult sol = solve(R, x0, cfg, z.z().template lpNorm<Eigen::Infinity>());
  R(sol.x);  // refresh the term arrays at the solution

  State<N> out = z;
  for (int jj = 0; jj < n0; ++jj) {
    const double w = t.alpha[S0[jj]];
    out.q += dt * w * Hp[jj];
    out.p += dt * w * (Fd[jj] - Hq[jj]);
  }
  for (int k = 0; k < nn; ++k) {
    const double w = t.beta[S1[k % n1]];
    out.q += w * Wp[k];
    out.p += w * (Wf[k] - Wq[k]);
  }
  return out;
}

}  // namespace sdha
