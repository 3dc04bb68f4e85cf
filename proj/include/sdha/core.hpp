#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sdha/errors.hpp"

namespace sdha {

template <int N>
using Vec = Eigen::Matrix<double, N, 1>;
template <int N>
using Mat = Eigen::Matrix<double, N, N>;

template <int N>
struct State {
  static_assert(N >= 1);
  Vec<N> q = Vec<N>::Zero();
  Vec<N> p = Vec<N>::Zero();

  State() = default;
  State(const Vec<N>& q_, const Vec<N>& p_) : q(q_), p(p_) {}

  static State from(std::span<const double> q_, std::span<const double> p_) {
    if (q_.size() != static_cast<std::size_t>(N) || p_.size() != static_cast<std::size_t>(N))
      throw InvalidParameter("state: q and p must both have length " + std::to_string(N));
    State s;
    for (int i = 0; i < N; ++i) {
      s.q[i] = q_[i];
      s.p[i] = p_[i];
    }
    return s;
  }

  bool finite() const { return q.allFinite() && p.allFinite(); }

  Eigen::Matrix<double, 2 * N, 1> z() const {
    Eigen::Matrix<double, 2 * N, 1> v;
    v << q, p;
    return v;
  }
  static State from_z(const Eigen::Matrix<double, 2 * N, 1>& v) {
    return State(v.template head<N>(), v.template tail<N>());
  }
};

template <int N>
using ScalarField = std::function<double(const State<N>&)>;
template <int N>
using VectorField = std::function<Vec<N>(const State<N>&)>;

template <int N>
struct NoiseChannel {
  ScalarField<N> h;
  VectorField<N> dh_dq, dh_dp;
  VectorField<N> f;
};

// dq = H_p dt + sum h_p o dW,  dp = (-H_q + F) dt + sum (-h_q + f) o dW
template <int N>
struct ForcedHamiltonianSystem {
  static constexpr int dim_n = N;

  std::string name;
  ScalarField<N> H;
  VectorField<N> dH_dq, dH_dp;
  VectorField<N> F;
  std::vector<NoiseChannel<N>> noise;

  // H and every h_r split as T(p) + U(q)
  bool separable = false;
  // lets the Stormer-Verlet substep go explicit when false
  bool forcing_depends_on_p = true;
  // Gamma_0..Gamma_m with F = -Gamma_0 p, f_r = -Gamma_r p
  std::optional<std::vector<Mat<N>>> linear_forcing;
  std::map<std::string, double> metadata;

  int dim_m() const { return static_cast<int>(noise.size()); }
};

// drift a(z) = (H_p, -H_q + F)
template <int N>
inline Eigen::Matrix<double, 2 * N, 1> drift_field(const ForcedHamiltonianSystem<N>& sys, const State<N>& z) {
  Eigen::Matrix<double, 2 * N, 1> v;
  v << sys.dH_dp(z), -sys.dH_dq(z) + sys.F(z);
  return v;
}

// sum_r dW_r b_r(z), b_r = (h_r,p, -h_r,q + f_r)
template <int N>
inline Eigen::Matrix<double, 2 * N, 1> noise_field(const ForcedHamiltonianSystem<N>& sys, const State<N>& z,
                                                    std::span<const double> dW) {
  Eigen::Matrix<double, 2 * N, 1> v = Eigen::Matrix<double, 2 * N, 1>::Zero();
  for (std::size_t r = 0; r < sys.noise.size(); ++r) {
    if (dW[r] == 0.0) continue;
    const auto& c = sys.noise[r];
    v.template head<N>() += dW[r] * c.dh_dp(z);
    v.template tail<N>() += dW[r] * (c.f(z) - c.dh_dq(z));
  }
  return v;
}

template <int N>
struct Trajectory {
  std::vector<double> times;
  std::vector<State<N>> states;

  Trajectory(double t0, double dt, std::vector<State<N>> s) : states(std::move(s)) {
    if (!(dt > 0)) throw InvalidParameter("trajectory: dt must be positive");
    times.resize(states.size());
    for (std::size_t k = 0; k < states.size(); ++k) times[k] = t0 + static_cast<double>(k) * dt;
  }
  std::size_t steps() const { return states.empty() ? 0 : states.size() - 1; }
};

struct GradientDeviation {
  std::string callback;
  double max_deviation = 0;
  int worst_point = -1;
};

struct GradientCheckReport {
  bool pass = true;
  std::vector<GradientDeviation> callbacks;
  // first (point, callback) exceeding tol; -1 when none
  int first_failure_point = -1;
  std::string first_failure_callback;
};

namespace detail {

// central difference of a scalar field wrt coordinate j of (q, p)
template <int N>
double central_partial(const ScalarField<N>& fn, State<N> z, int j) {
  double& x = j < N ? z.q[j] : z.p[j - N];
  const double x0 = x;
  const double h = 1e-6 * std::max(1.0, std::abs(x0));
  x = x0 + h;
  const double fp = fn(z);
  x = x0 - h;
  const double fm = fn(z);
  return (fp - fm) / (2 * h);
}

}  // namespace detail

// Compares gradient callbacks against central differences at random points in [-2, 2]^{2N}.
template <int N>
GradientCheckReport self_check_gradients(const ForcedHamiltonianSystem<N>& sys, int n_points, double tol,
                                         std::uint64_t seed = 12345) {
  if (!(tol > 0)) throw InvalidParameter("self_check_gradients: tol must be positive");
  GradientCheckReport rep;
  struct Item {
    std::string name;
    const ScalarField<N>* fn;
    const VectorField<N>* dq;
    const VectorField<N>* dp;
  };
  std::vector<Item> items{{"H", &sys.H, &sys.dH_dq, &sys.dH_dp}};
  for (std::size_t r = 0; r < sys.noise.size(); ++r)
    items.push_back({"h" + std::to_string(r + 1), &sys.noise[r].h, &sys.noise[r].dh_dq, &sys.noise[r].dh_dp});
  for (const auto& it : items) {
    rep.callbacks.push_back({"d" + it.name + "_dq", 0, -1});
    rep.callbacks.push_back({"d" + it.name + "_dp", 0, -1});
  }

  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> U(-2.0, 2.0);
  for (int k = 0; k < n_points; ++k) {
    State<N> z;
    for (int i = 0; i < N; ++i) z.q[i] = U(gen);
    for (int i = 0; i < N; ++i) z.p[i] = U(gen);
    for (std::size_t c = 0; c < items.size(); ++c) {
      const Vec<N> gq = (*items[c].dq)(z);
      const Vec<N> gp = (*items[c].dp)(z);
      for (int j = 0; j < 2 * N; ++j) {
        const double fd = detail::central_partial<N>(*items[c].fn, z, j);
        const double cb = j < N ? gq[j] : gp[j - N];
        const double dev = std::abs(fd - cb) / std::max(1.0, std::abs(cb));
        auto& slot = rep.callbacks[2 * c + (j < N ? 0 : 1)];
        if (!(dev <= slot.max_deviation)) {
          slot.max_deviation = std::isfinite(dev) ? dev : INFINITY;
          slot.worst_point = k;
        }
        if (!(dev <= tol) && rep.first_failure_point < 0) {
          rep.first_failure_point = k;
          rep.first_failure_callback = slot.callback;
        }
      }
    }
  }
  rep.pass = rep.first_failure_point < 0;
  return rep;
}

}  // namespace sdha
