#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sdha/errors.hpp"

namespace sdha {

inline constexpr int kMaxUnknowns = 64;

// heap-free up to kMaxUnknowns
using SVec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxUnknowns, 1>;
using SMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxUnknowns, kMaxUnknowns>;

enum class SolverMode { fixed_point, newton, hybrid };

struct SolverConfig {
  double tol = 1e-12;
  int max_iter = 100;
  double fd_jacobian_step = 1e-7;
  SolverMode mode = SolverMode::hybrid;

  void validate() const {
    if (!(tol > 0)) throw InvalidParameter("solver: tol must be positive");
    if (max_iter < 1) throw InvalidParameter("solver: max_iter must be >= 1");
    if (!(fd_jacobian_step > 0)) throw InvalidParameter("solver: fd_jacobian_step must be positive");
  }
};

struct SolveResult {
  SVec x;
  int iterations = 0;
  double residual_norm = 0;
};

inline void check_unknowns(int d) {
  if (d > kMaxUnknowns)
    throw UnsupportedConfiguration("stage system has " + std::to_string(d) + " unknowns, limit is " +
                                   std::to_string(kMaxUnknowns));
}

// Finds x with |R(x)|_inf <= tol * max(1, scale). Fixed point is x <- x - R(x).
// Steppers pass |z|_inf as scale: stage points z + x round at ulp(|z|), so a purely absolute bound
// stops being attainable once positions on R reach a few thousand.
template <class Residual>
SolveResult solve(Residual&& R, SVec x, const SolverConfig& cfg, double scale = 1.0) {
  const int d = static_cast<int>(x.size());
  check_unknowns(d);
  const double bound = cfg.tol * std::max(1.0, std::isfinite(scale) ? scale : 1.0);
  SVec r = R(x);
  double norm = r.size() ? r.template lpNorm<Eigen::Infinity>() : 0.0;
  int it = 0;
  while (!(norm <= bound)) {
    if (it >= cfg.max_iter || !std::isfinite(norm)) {
      throw SolverFailure("implicit solve did not converge (residual " + std::to_string(norm) + " after " +
                              std::to_string(it) + " iterations)",
                          std::vector<double>(x.data(), x.data() + d), norm, it);
    }
    const bool newton = cfg.mode == SolverMode::newton || (cfg.mode == SolverMode::hybrid && it >= cfg.max_iter / 2);
    if (!newton) {
      x -= r;
    } else {
      SMat J(d, d);
      for (int j = 0; j < d; ++j) {
        const double xj = x[j];
        const double h = cfg.fd_jacobian_step * std::max(1.0, std::abs(xj));
        x[j] = xj + h;
        J.col(j) = (R(x) - r) / h;
        x[j] = xj;
      }
      Eigen::PartialPivLU<SMat> lu(J);
      x -= lu.solve(r);
    }
    r = R(x);
    norm = r.template lpNorm<Eigen::Infinity>();
    ++it;
  }
  return {x, it, norm};
}

}  // namespace sdha
