// Acceptance suite: one PASS/FAIL line per criterion. `acceptance --only N` runs a single criterion.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <iostream>
#include <random>
#include <sstream>
#include <string>

#include "sdha/cli.hpp"
#include "sdha/harness.hpp"
#include "sdha/models.hpp"
#include "sdha/structure.hpp"

using namespace sdha;

namespace {

std::string g(double x) {
  char b[32];
  std::snprintf(b, sizeof b, "%.4g", x);
  return b;
}

struct Check {
  bool pass = true;
  std::string detail;
  void require(bool ok, const std::string& what) {
    pass = pass && ok;
    detail += std::string(ok ? "  ok   " : "  FAIL ") + what + "\n";
  }
  void info(const std::string& what) { detail += "  info " + what + "\n"; }
};

State<1> s1(double q, double p) { return State<1>(Vec<1>::Constant(q), Vec<1>::Constant(p)); }

SolverConfig strict() {
  SolverConfig c;
  c.tol = 1e-14;
  c.mode = SolverMode::newton;
  return c;
}

template <int N>
StepMap<N> as_map(const ForcedHamiltonianSystem<N>& sys, const Method<N>& m) {
  return [&sys, m](const State<N>& z, double dt, std::span<const double> w) { return m.step(sys, z, dt, w, m.solver); };
}

// ---- 1 ----
Check tableau_conditions() {
  Check c;
  constexpr double tol = 1e-12;
  std::vector<SprkTableau> sprk{midpoint_tableau(), stormer_verlet_tableau()};
  for (double l : {0.0, 0.3, 0.5, 1.0}) {
    sprk.push_back(dirk_tableau(l));
    sprk.back().name = "dirk(" + g(l) + ")";
  }
  for (const auto& t : sprk) {
    const auto r = merge(check_sprk_symplectic_conditions(t, tol), check_sprk_order_conditions(t, tol));
    c.require(r.pass && r.max_violation <= tol, t.name + " max violation " + g(r.max_violation));
  }
  std::vector<WrkTableau> wrk;
  for (double l : {0.0, 0.5, 1.0}) {
    wrk.push_back(srkw1_tableau(l));
    wrk.back().name = "srkw1(" + g(l) + ")";
  }
  wrk.push_back(srkw2_tableau());
  for (const auto& t : wrk) {
    const auto r = check_wrk_symplectic_conditions(t, tol);
    c.require(r.pass && r.max_violation <= tol, t.name + " max violation " + g(r.max_violation));
  }
  return c;
}

// ---- 2 ----
Check reductions() {
  Check c;
  const auto sys = kubo_system({2, 0, 0.5, 0.5});
  std::mt19937_64 gen(2);
  std::uniform_real_distribution<double> U(-2, 2);
  const double dt = 0.1;
  std::normal_distribution<double> G(0, std::sqrt(dt));
  double d0 = 0, d1 = 0, dw = 0;
  for (int k = 0; k < 100; ++k) {
    const State<1> z = s1(U(gen), U(gen));
    const std::vector<double> w{G(gen)};
    const auto mid = midpoint_step(sys, z, dt, w, {});
    d0 = std::max(d0, (dirk_step(sys, 0.0, z, dt, w, {}).z() - mid.z()).cwiseAbs().maxCoeff());
    d1 = std::max(d1, (dirk_step(sys, 1.0, z, dt, w, {}).z() - mid.z()).cwiseAbs().maxCoeff());
    const std::vector<double> I{(k % 3 - 1) * std::sqrt(3 * dt)};
    dw = std::max(dw, (wrk_step(sys, srkw1_tableau(0.5), z, dt, I, {}).z() - midpoint_step(sys, z, dt, I, {}).z())
                          .cwiseAbs()
                          .maxCoeff());
  }
  c.require(d0 <= 1e-10, "dirk(0) vs midpoint max deviation " + g(d0));
  c.require(d1 <= 1e-10, "dirk(1) vs midpoint max deviation " + g(d1));
  c.require(dw <= 1e-10, "srkw1(1/2) vs midpoint, three-point increments, max deviation " + g(dw));
  return c;
}

// ---- 3 ----
Check ms_order() {
  Check c;
  const KuboParams P{2, 0, 0.5, 0.5};
  const auto sys = kubo_system(P);
  const std::function<State<1>(double, std::span<const double>)> exact = [P](double t, std::span<const double> W) {
    return kubo_exact(P, t, W[0]);
  };
  std::vector<double> dts;
  for (int k = 4; k <= 8; ++k) dts.push_back(std::ldexp(1.0, -k));
  for (const auto& m : {method_midpoint<1>(), method_stormer_verlet<1>(), method_dirk<1>(0.5)}) {
    const auto r = estimate_ms_order(sys, exact, m, dts, 1.0, 2000, 20240301, s1(P.q0, P.p0));
    std::string errs;
    for (double e : r.errors) errs += " " + g(e);
    c.info(m.name + " rms errors:" + errs);
    c.require(r.slope >= 0.85 && r.slope <= 1.15 && r.n_failed == 0,
              m.name + " slope " + g(r.slope) + " in [0.85, 1.15], failed paths " + std::to_string(r.n_failed));
  }
  return c;
}

// ---- 4 ----
Check weak_order() {
  Check c;
  const KuboParams P{2, 0, 0.5, 0.5};
  const auto sys = kubo_system(P);
  const std::vector<double> dts{0.05, 0.1, 0.2, 0.4};
  // T = 1 is not a multiple of dt = 0.4; 1.2 is the nearest horizon every dt divides
  const double T = 1.2;
  const std::size_t M = 1000000;
  c.info("T = 1.2, " + std::to_string(M) + " paths per dt, exact E(H)(T) = " + g(kubo_mean_energy(P, T)));
  // Kubo is linear, so one step is z' = M(I) z. Propagating S = E[z z^T] over the three increment
  // values gives the scheme's bias in E(H) with no sampling error.
  auto exact_bias = [&](Method<1> m) {
    m.solver = strict();
    std::vector<double> bias;
    for (double dt : dts) {
      const double a = std::sqrt(3 * dt);
      const double vals[3] = {-a, 0, a}, prob[3] = {1.0 / 6, 2.0 / 3, 1.0 / 6};
      Eigen::Matrix2d Ms[3];
      for (int v = 0; v < 3; ++v) {
        const std::vector<double> w{vals[v]};
        Ms[v].col(0) = m.step(sys, s1(1, 0), dt, w, m.solver).z();
        Ms[v].col(1) = m.step(sys, s1(0, 1), dt, w, m.solver).z();
      }
      const Eigen::Vector2d z0(P.q0, P.p0);
      Eigen::Matrix2d S = z0 * z0.transpose();
      for (long k = 0; k < std::lround(T / dt); ++k) {
        Eigen::Matrix2d next = Eigen::Matrix2d::Zero();
        for (int v = 0; v < 3; ++v) next += prob[v] * Ms[v] * S * Ms[v].transpose();
        S = next;
      }
      bias.push_back(std::abs(0.5 * S.trace() - kubo_mean_energy(P, T)));
    }
    std::string out;
    for (std::size_t i = 0; i < dts.size(); ++i) out += " dt=" + g(dts[i]) + ":" + g(bias[i]);
    return out + ", slope " + g(fit_loglog(dts, bias).slope);
  };
  struct Case {
    Method<1> m;
    double lo, hi;
    std::string label;
  };
  for (const auto& cs : {Case{method_srkw1<1>(0.0), 0.7, 1.3, "srkw1(0)"}, Case{method_srkw2<1>(), 1.7, 2.3, "srkw2"}}) {
    const auto r = estimate_weak_order<1>(sys, cs.m, dts, T, M, 777, sys.H,
                                          [P](double t) { return kubo_mean_energy(P, t); }, fixed_initial(s1(P.q0, P.p0)));
    std::string errs;
    for (std::size_t i = 0; i < dts.size(); ++i) errs += " dt=" + g(dts[i]) + ":" + g(r.errors[i]) + "+-" + g(r.sems[i]);
    c.info(cs.label + " bias:" + errs + (r.inconclusive ? " (inconclusive: bias not above 2 sem)" : ""));
    c.require(!r.inconclusive && r.slope >= cs.lo && r.slope <= cs.hi,
              cs.label + " weak slope " + g(r.slope) + " in [" + g(cs.lo) + ", " + g(cs.hi) + "]");
    c.info(cs.label + " exact-expectation bias:" + exact_bias(cs.m));
  }
  c.info("srkw1(1/2), for comparison, exact-expectation bias:" + exact_bias(method_srkw1<1>(0.5)));
  return c;
}

// ---- 5 ----
Check kubo_long_time() {
  Check c;
  const KuboParams P{2, 0, 0.5, 0.001};
  const auto sys = kubo_system(P);
  const std::vector<Observable<1>> obs{{"H", sys.H}};
  EnsembleOptions opt;
  opt.record_stride = 10;
  const auto dirk = run_ensemble(sys, method_dirk<1>(0.5), 0.1, 500, 10000, 5, obs, fixed_initial(s1(2, 0)), opt);
  const auto heun = run_ensemble(sys, method_heun<1>(), 0.1, 500, 10000, 5, obs, fixed_initial(s1(2, 0)), opt);
  double worst = -1e300;
  std::size_t bad = 0;
  for (std::size_t r = 0; r < dirk.times.size(); ++r) {
    const double dev = std::abs(dirk.mean[r][0] - kubo_mean_energy(P, dirk.times[r]));
    const double margin = dev - (3 * dirk.sem[r][0] + 0.01);
    worst = std::max(worst, margin);
    bad += margin > 0;
  }
  c.require(bad == 0 && dirk.n_failed == 0,
            "dirk(1/2) within 3 sem + 0.01 at all " + std::to_string(dirk.times.size()) + " recorded times (worst margin " +
                g(worst) + ", " + std::to_string(bad) + " outside)");
  const double exact = kubo_mean_energy(P, 500);
  const double ed = std::abs(dirk.mean.back()[0] - exact), eh = std::abs(heun.mean.back()[0] - exact);
  c.info("E(H)(500) exact " + g(exact) + ", dirk " + g(dirk.mean.back()[0]) + ", heun " + g(heun.mean.back()[0]));
  c.require(eh >= 5 * ed, "heun error " + g(eh) + " >= 5 x dirk error " + g(ed));
  return c;
}

// ---- 6 ----
Check qs_det() {
  Check c;
  const KuboParams P{2, 0, 0.5, 0.5};
  const auto sys = kubo_system(P);
  auto m = method_stormer_verlet<1>();
  m.solver = strict();
  std::mt19937_64 gen(6);
  std::uniform_real_distribution<double> U(-2, 2);
  const double dt = 0.1;
  std::normal_distribution<double> G(0, std::sqrt(dt));
  double rel = 0, spread = 0, rel_pos = 0;
  for (int n = 0; n < 5; ++n) {
    const std::vector<double> w{G(gen)};
    const double expect = quasi_symplectic_det(forcing_increment(sys, dt, w));
    const double pos = quasi_symplectic_det(Eigen::MatrixXd::Constant(1, 1, P.nu * dt + P.beta * P.nu * w[0]));
    double lo = 1e300, hi = -1e300;
    for (int k = 0; k < 20; ++k) {
      const double d = step_jacobian<1>(as_map(sys, m), s1(U(gen), U(gen)), dt, w).det;
      rel = std::max(rel, std::abs(d - expect) / std::abs(expect));
      rel_pos = std::max(rel_pos, std::abs(d - pos) / std::abs(pos));
      lo = std::min(lo, d), hi = std::max(hi, d);
    }
    spread = std::max(spread, hi - lo);
  }
  c.require(rel <= 1e-6, "det vs quasi_symplectic_det(gamma), gamma = -(dt nu + dW beta nu): max relative deviation " +
                             g(rel));
  c.require(spread <= 1e-8, "max spread of det across 20 states " + g(spread));
  c.info("same formula with gamma = +(dt nu + dW beta nu) deviates by " + g(rel_pos) + " (sign convention check)");
  return c;
}

// ---- 7 ----
Check generating() {
  Check c;
  const auto sys = kubo_system({2, 0, 0.5, 0.5});
  for (const auto& t : {midpoint_tableau(), stormer_verlet_tableau()}) {
    std::mt19937_64 gen(7);
    std::uniform_real_distribution<double> U(-2, 2);
    std::normal_distribution<double> G(0, std::sqrt(0.1));
    double rq = 0, rp = 0;
    for (int k = 0; k < 10; ++k) {
      const std::vector<double> w{G(gen)};
      const auto r = verify_generating_identity(sys, t, s1(U(gen), U(gen)), 0.1, w, strict());
      rq = std::max(rq, r.r_q);
      rp = std::max(rp, r.r_p);
    }
    c.require(rq <= 1e-5 && rp <= 1e-5, t.name + " max r_q " + g(rq) + ", max r_p " + g(rp));
  }
  return c;
}

// ---- 8 ----
Check symplecticity() {
  Check c;
  const auto sys = kubo_system({2, 0, 0.5, 0.0});
  std::vector<Method<1>> methods{method_midpoint<1>(), method_stormer_verlet<1>(), method_dirk<1>(0.3),
                                 method_srkw1<1>(0.0), method_srkw2<1>()};
  for (auto& m : methods) {
    m.solver = strict();
    std::mt19937_64 gen(8);
    std::uniform_real_distribution<double> U(-2, 2);
    std::normal_distribution<double> G(0, std::sqrt(0.1));
    double worst = 0;
    for (int k = 0; k < 10; ++k) {
      const std::vector<double> w{m.noise == NoiseKind::three_point ? (k % 3 - 1) * std::sqrt(0.3) : G(gen)};
      worst = std::max(worst, step_jacobian<1>(as_map(sys, m), s1(U(gen), U(gen)), 0.1, w).unit_residual);
    }
    c.require(worst <= 1e-6, m.name + " max |D^T W D - W| " + g(worst));
  }
  return c;
}

// ---- 9 ----
Check noether() {
  Check c;
  const auto sys = central_force_system(0.1, 0.3);
  const double dt = 0.05;
  const std::size_t K = 10000;
  auto mid = method_midpoint<2>();
  mid.solver = strict();
  const State<2> z0(Vec<2>(1, 0), Vec<2>(0, 1));
  auto drift = [&](const Method<2>& m) {
    BrownianDriver d(9, 0, 1, dt);
    std::vector<double> w(1);
    State<2> z = z0;
    for (std::size_t k = 0; k < K; ++k) {
      d.next(w);
      z = m.step(sys, z, dt, w, m.solver);
    }
    return std::abs(momentum_map_so2(z) - momentum_map_so2(z0));
  };
  const double dm = drift(mid), dh = drift(method_heun<2>());
  c.info("central force nu = 0.1, beta = 0.3, dt = 0.05, 10^4 steps, J0 = 1");
  c.require(dm <= 1e-8, "midpoint |J_K - J_0| = " + g(dm));
  c.require(dh >= 100 * 1e-8 && dh >= 100 * dm, "heun |J_K - J_0| = " + g(dh) + " >= 100 x 1e-8");
  return c;
}

// ---- 10 ----
Check lb_ergodic() {
  Check c;
  const VfpLbParams P;
  const double q = lb_ergodic_energy(P);
  c.require(std::abs(q - 0.471705) <= 1e-4, "quadrature H_erg = " + std::to_string(q));
  const auto sys = vfp_lb_system(P);
  const std::vector<Observable<1>> obs{{"H", sys.H}, {"x", [](const State<1>& z) { return z.q[0] - std::floor(z.q[0]); }},
                                       {"v", [](const State<1>& z) { return z.p[0]; }}};
  EnsembleOptions opt;
  opt.record_stride = 3000;
  opt.collect_final = {1, 2};
  const auto init = sampled_initial<1>(10, [P](PathRng& r) { return sample_initial_lb(P, r); });
  const auto es = run_ensemble(sys, method_dirk<1>(0.5), 0.1, 300, 100000, 10, obs, init, opt);
  const double mH = es.mean.back()[0];
  c.require(std::abs(mH - 0.471705) <= 0.02 && !es.degraded,
            "dirk(1/2) mean_H(300) = " + g(mH) + " +- " + g(es.sem.back()[0]) + ", failed " + std::to_string(es.n_failed));
  // marginals against the Gibbs density, for information
  const LbGibbs gibbs(P);
  const auto ex = uniform_edges(0, 1, 20), ev = uniform_edges(-4, 4, 32);
  const auto hx = histogram(es.final_values[0], ex, es.n_paths), hv = histogram(es.final_values[1], ev, es.n_paths);
  double sx = 0, sv = 0;
  for (std::size_t i = 0; i + 1 < ex.size(); ++i) {
    const double x = 0.5 * (ex[i] + ex[i + 1]);
    const double ref = detail::refine_2d([&](double, double v) { return gibbs.density(x, v); }, 0, 1, -10, 10, 1e-9);
    sx = std::max(sx, std::abs(hx.density[i] - ref));
  }
  for (std::size_t i = 0; i + 1 < ev.size(); ++i) {
    const double v = 0.5 * (ev[i] + ev[i + 1]);
    const double ref = detail::refine_2d([&](double x, double) { return gibbs.density(x, v); }, 0, 1, 0, 1, 1e-9);
    sv = std::max(sv, std::abs(hv.density[i] - ref));
  }
  c.info("sup-norm histogram vs Gibbs marginal (bin-centre values): x " + g(sx) + ", v " + g(sv));
  return c;
}

// ---- 11 ----
Check lorentz_energy() {
  Check c;
  const VfpLorentzParams P;
  const auto sys = vfp_lorentz_system(P);
  PathRng rng(11 ^ kInitialConditionDomain, 0);
  const State<2> z0 = sample_initial_lorentz(P, rng);
  const double H0 = sys.H(z0), T = 1e4;
  // one Brownian path at dt = 0.025; coarser steps sum its increments
  BrownianDriver drv(11, 0, 1, 0.025);
  const FinePath fine = make_fine_path(drv, 400000);
  auto drift = [&](const Method<2>& m, std::size_t factor) {
    const FinePath path = aggregate_path(fine, factor);
    State<2> z = z0;
    double worst = 0;
    for (std::size_t k = 0; k < path.steps(); ++k) {
      try {
        z = m.step(sys, z, path.dt, path.row(k), m.solver);
      } catch (const SolverFailure&) {
        return std::numeric_limits<double>::infinity();
      }
      if (!z.finite()) return std::numeric_limits<double>::infinity();
      worst = std::max(worst, std::abs(sys.H(z) - H0));
    }
    return worst;
  };
  const double dm = drift(method_midpoint<2>(), 4), dh = drift(method_heun<2>(), 4);
  c.info("H(0) = " + g(H0) + ", T = " + g(T) + ", dt = 0.1");
  c.require(dm <= 0.05 * H0, "midpoint max |H(t) - H(0)| = " + g(dm) + " <= 0.05 H(0) = " + g(0.05 * H0));
  c.require(dh >= 10 * dm, "heun max |H(t) - H(0)| = " + g(dh) + " >= 10 x midpoint");
  // refinement on the same path, for information
  for (std::size_t f : {4u, 2u, 1u}) {
    const double dt = 0.025 * f;
    c.info("dt = " + g(dt) + ": max |H(t) - H(0)| / H(0): midpoint " + g(drift(method_midpoint<2>(), f) / H0) +
           ", dirk(1/2) " + g(drift(method_dirk<2>(0.5), f) / H0) + ", heun " + g(drift(method_heun<2>(), f) / H0));
  }
  return c;
}

// ---- 12 ----
Check three_point() {
  Check c;
  const double dt = 0.01;
  const std::size_t M = 1000000;
  BrownianDriver d(12, 0, 1, dt, IncrementMode::three_point);
  double m[5] = {0, 0, 0, 0, 0};
  for (std::size_t i = 0; i < M; ++i) {
    const double w = d.next_three_point()[0];
    double p = 1;
    for (int k = 1; k <= 4; ++k) m[k] += (p *= w);
  }
  // normalised moments E w^k / dt^(k/2) against (0, 1, 0, 3)
  const double target[5] = {0, 0, 1, 0, 3};
  for (int k = 1; k <= 4; ++k) {
    const double v = m[k] / M / std::pow(dt, k / 2.0);
    c.require(std::abs(v - target[k]) <= 0.02 * std::max(1.0, target[k]),
              "E w^" + std::to_string(k) + " / dt^" + g(k / 2.0) + " = " + g(v) + " (target " + g(target[k]) + ")");
  }
  return c;
}

// ---- 13 ----
Check reproducibility() {
  Check c;
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "sdha_acceptance_13";
  fs::remove_all(dir);
  fs::create_directories(dir);
  auto read = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
  };
  const std::vector<std::pair<std::string, std::string>> configs{
      {"kubo",
       "model.name = kubo\nmethod.name = dirk\nmethod.lambda = 0.5\ndt = 0.1\nT = 20\nn_paths = 3000\nseed = 13\n"
       "record_stride = 10\nobservables = H, q, p\n"},
      {"lb",
       "model.name = lb\nmethod.name = midpoint\ndt = 0.1\nT = 10\nn_paths = 2000\nseed = 14\nrecord_stride = 20\n"
       "observables = H, p\nhistogram.observable = p\nhistogram.edges = -4, 8, 24\n"},
      {"lorentz", "model.name = lorentz\nmethod.name = srkw1\nmethod.lambda = 0\ndt = 0.1\nT = 5\nn_paths = 1000\n"
                  "seed = 15\nrecord_stride = 10\nobservables = H, J\n"}};
  for (const auto& [name, text] : configs) {
    std::string outs[2];
    int k = 0;
    for (int threads : {1, 8}) {
      const fs::path cfg = dir / (name + "_" + std::to_string(threads) + ".cfg");
      std::ofstream(cfg, std::ios::binary) << text << "threads = " << threads << "\n";
      const fs::path out = dir / (name + "_" + std::to_string(threads) + ".csv");
      std::ostringstream o, e;
      const int rc = cli::cmd_run(cfg.string(), out.string(), o, e);
      if (rc != 0) c.require(false, name + " threads=" + std::to_string(threads) + " exit " + std::to_string(rc) + ": " + e.str());
      outs[k++] = read(out);
    }
    c.require(!outs[0].empty() && outs[0] == outs[1],
              name + ": threads = 1 and threads = 8 CSV byte-identical (" + std::to_string(outs[0].size()) + " bytes)");
  }
  fs::remove_all(dir);
  return c;
}

struct Criterion {
  int id;
  const char* title;
  std::function<Check()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all{
      {1, "tableau condition checks", tableau_conditions},
      {2, "reductions to midpoint", reductions},
      {3, "mean-square order 1 on damped Kubo", ms_order},
      {4, "weak orders 1 and 2 on damped Kubo", weak_order},
      {5, "Kubo long-time mean energy", kubo_long_time},
      {6, "quasi-symplectic determinant", qs_det},
      {7, "generating-function identity", generating},
      {8, "symplecticity without forcing", symplecticity},
      {9, "momentum map conservation", noether},
      {10, "Lenard-Bernstein ergodic energy", lb_ergodic},
      {11, "Lorentz pathwise energy", lorentz_energy},
      {12, "three-point increment moments", three_point},
      {13, "thread-count reproducibility", reproducibility},
  };
  int only = 0;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--only" && i + 1 < argc) {
      only = std::atoi(argv[++i]);
    } else {
      std::cerr << "usage: acceptance [--only N]\n";
      return 1;
    }
  }
  if (only < 0 || only > static_cast<int>(all.size())) {
    std::cerr << "no criterion " << only << "\n";
    return 1;
  }
  int failed = 0;
  for (const auto& cr : all) {
    if (only && cr.id != only) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Check c;
    try {
      c = cr.run();
    } catch (const std::exception& e) {
      c.require(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << "criterion " << cr.id << ": " << (c.pass ? "PASS" : "FAIL") << "  " << cr.title << " (" << g(secs)
              << " s)\n"
              << c.detail << std::flush;
    failed += !c.pass;
  }
  return failed ? 1 : 0;
}
