#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "sdha/solver.hpp"
#include "sdha/sprk.hpp"

using namespace sdha;

namespace {

SVec scalar(double v) {
  SVec x(1);
  x[0] = v;
  return x;
}

double bisect(double (*f)(double), double lo, double hi) {
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (f(lo) * f(mid) <= 0 ? hi : lo) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

TEST(Solver, LinearFixedPoint) {
  SolverConfig cfg;
  cfg.mode = SolverMode::fixed_point;
  auto R = [](const SVec& x) -> SVec { return x - (0.5 * x + SVec::Ones(1)); };
  const auto res = solve(R, scalar(0), cfg);
  // residual |x/2 - 1| <= tol bounds the error by 2 tol
  EXPECT_NEAR(res.x[0], 2.0, 2 * cfg.tol);
  EXPECT_LE(res.residual_norm, cfg.tol);
}

TEST(Solver, NewtonMatchesBisection) {
  SolverConfig cfg;
  cfg.mode = SolverMode::newton;
  auto R = [](const SVec& x) -> SVec { return scalar(x[0] * x[0] - 4); };
  const auto res = solve(R, scalar(3), cfg);
  const double oracle = bisect([](double x) { return x * x - 4; }, 1.0, 3.0);
  EXPECT_NEAR(res.x[0], oracle, 1e-12);
  EXPECT_LE(std::abs(res.x[0] * res.x[0] - 4), cfg.tol);
}

TEST(Solver, DivergentFixedPointFails) {
  SolverConfig cfg;
  cfg.mode = SolverMode::fixed_point;
  auto R = [](const SVec& x) -> SVec { return x - 2 * x - SVec::Ones(1); };
  try {
    solve(R, scalar(0), cfg);
    FAIL() << "expected SolverFailure";
  } catch (const SolverFailure& e) {
    EXPECT_EQ(e.last_iterate.size(), 1u);
    EXPECT_GT(e.residual_norm, cfg.tol);
  }
}

TEST(Solver, HybridSwitchesToNewton) {
  // x <- x - R(x) = 2x + 1 diverges, so only the Newton half can converge; a small max_iter keeps the
  // fixed-point phase from overflowing
  SolverConfig cfg;
  cfg.mode = SolverMode::hybrid;
  cfg.max_iter = 20;
  auto R = [](const SVec& x) -> SVec { return x - 2 * x - SVec::Ones(1); };
  const auto res = solve(R, scalar(0), cfg);
  EXPECT_NEAR(res.x[0], -1.0, 1e-10);
  EXPECT_GE(res.iterations, cfg.max_iter / 2);
}

TEST(Solver, ResolveFromSolutionIsQuick) {
  SolverConfig cfg;
  auto R = [](const SVec& x) -> SVec {
    SVec r(2);
    r[0] = x[0] - 0.3 * std::cos(x[1]);
    r[1] = x[1] - 0.3 * std::sin(x[0]) - 1;
    return r;
  };
  SVec x0 = SVec::Zero(2);
  const auto first = solve(R, x0, cfg);
  const auto again = solve(R, first.x, cfg);
  EXPECT_LE(again.iterations, 2);
  EXPECT_LE(again.residual_norm, cfg.tol);
}

TEST(Solver, ConfigValidation) {
  SolverConfig c;
  c.tol = 0;
  EXPECT_THROW(c.validate(), InvalidParameter);
  c = {};
  c.max_iter = 0;
  EXPECT_THROW(c.validate(), InvalidParameter);
  c = {};
  c.fd_jacobian_step = -1;
  EXPECT_THROW(c.validate(), InvalidParameter);
  EXPECT_THROW(check_unknowns(kMaxUnknowns + 1), UnsupportedConfiguration);
}

TEST(Solver, ScaleRelaxesBoundAboveOne) {
  SolverConfig cfg;
  cfg.mode = SolverMode::fixed_point;
  cfg.max_iter = 1;
  // residual stuck at 5e-12
  auto R = [](const SVec& x) -> SVec { return SVec::Constant(1, 5e-12) + 0 * x; };
  const SVec x0 = SVec::Zero(1);
  EXPECT_THROW(solve(R, x0, cfg), SolverFailure);
  EXPECT_THROW(solve(R, x0, cfg, 0.5), SolverFailure);
  EXPECT_EQ(solve(R, x0, cfg, 10.0).iterations, 0);
}

TEST(Solver, MidpointStepFarFromOrigin) {
  // a periodic potential evaluated at |q| ~ 1e4 must still solve to the scaled bound
  ForcedHamiltonianSystem<1> sys;
  sys.H = [](const State<1>& z) { return 0.5 * z.p[0] * z.p[0] - 0.3 * std::sin(4 * std::numbers::pi * z.q[0]); };
  sys.dH_dq = [](const State<1>& z) { return Vec<1>::Constant(-0.3 * 4 * std::numbers::pi * std::cos(4 * std::numbers::pi * z.q[0])); };
  sys.dH_dp = [](const State<1>& z) { return z.p; };
  sys.F = [](const State<1>&) { return Vec<1>::Zero(); };
  sys.separable = true;
  for (double q : {0.3, 1234.567, 9876.123}) {
    const State<1> z(Vec<1>::Constant(q), Vec<1>::Constant(1.1));
    EXPECT_NO_THROW(midpoint_step(sys, z, 0.1, std::vector<double>{}, {})) << q;
  }
}
