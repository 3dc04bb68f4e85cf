#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sdha/errors.hpp"

namespace sdha {

struct ConditionResult {
  std::string label;
  double violation = 0;
  bool skipped = false;
};

struct ConditionReport {
  bool pass = true;
  double max_violation = 0;
  std::vector<ConditionResult> conditions;
  std::vector<std::string> violated;

  void add(std::string label, double v, double tol) {
    conditions.push_back({label, v, false});
    if (!(v <= max_violation)) max_violation = v;
    if (!(v <= tol)) {
      pass = false;
      violated.push_back(std::move(label));
    }
  }
  void skip(std::string label) { conditions.push_back({std::move(label), 0, true}); }
};

inline ConditionReport merge(ConditionReport a, const ConditionReport& b) {
  for (const auto& c : b.conditions) a.conditions.push_back(c);
  for (const auto& v : b.violated) a.violated.push_back(v);
  a.pass = a.pass && b.pass;
  a.max_violation = std::max(a.max_violation, b.max_violation);
  return a;
}

struct SprkTableau {
  std::string name;
  int s = 0;
  Eigen::MatrixXd a, abar, ahat, b, bbar, bhat;
  Eigen::VectorXd alpha, alphahat, beta, betahat;

  void validate() const {
    if (s < 1) throw InvalidParameter("sprk tableau: s must be >= 1");
    for (const auto* M : {&a, &abar, &ahat, &b, &bbar, &bhat})
      if (M->rows() != s || M->cols() != s) throw InvalidParameter("sprk tableau '" + name + "': matrix is not s x s");
    for (const auto* v : {&alpha, &alphahat, &beta, &betahat})
      if (v->size() != s) throw InvalidParameter("sprk tableau '" + name + "': weight vector length != s");
  }
};

inline SprkTableau uniform_sprk(std::string name, const Eigen::MatrixXd& A, const Eigen::VectorXd& w) {
  SprkTableau t;
  t.name = std::move(name);
  t.s = static_cast<int>(w.size());
  t.a = t.abar = t.ahat = t.b = t.bbar = t.bhat = A;
  t.alpha = t.alphahat = t.beta = t.betahat = w;
  return t;
}

inline SprkTableau midpoint_tableau() {
  return uniform_sprk("midpoint", Eigen::MatrixXd::Constant(1, 1, 0.5), Eigen::VectorXd::Ones(1));
}

inline SprkTableau stormer_verlet_tableau() {
  SprkTableau t;
  t.name = "stormer_verlet";
  t.s = 2;
  Eigen::MatrixXd up(2, 2), lo(2, 2);
  up << 0, 0, 0.5, 0.5;
  lo << 0.5, 0, 0.5, 0;
  t.a = t.b = up;
  t.abar = t.ahat = t.bbar = t.bhat = lo;
  t.alpha = t.alphahat = t.beta = t.betahat = Eigen::Vector2d(0.5, 0.5);
  return t;
}

inline SprkTableau dirk_tableau(double lambda) {
  Eigen::MatrixXd A(2, 2);
  A << lambda / 2, 0, lambda, (1 - lambda) / 2;
  auto t = uniform_sprk("dirk", A, Eigen::Vector2d(lambda, 1 - lambda));
  return t;
}

namespace detail {

// max_ij |x_i M_ij + y_j N_ji - x_i y_j|
inline double pair_violation(const Eigen::VectorXd& x, const Eigen::MatrixXd& M, const Eigen::VectorXd& y,
                             const Eigen::MatrixXd& Nm) {
  double v = 0;
  for (int i = 0; i < x.size(); ++i)
    for (int j = 0; j < x.size(); ++j) v = std::max(v, std::abs(x[i] * M(i, j) + y[j] * Nm(j, i) - x[i] * y[j]));
  return v;
}

}  // namespace detail

inline ConditionReport check_sprk_symplectic_conditions(const SprkTableau& t, double tol) {
  t.validate();
  using detail::pair_violation;
  ConditionReport r;
  r.add("(a) alpha_i abar_ij + alpha_j a_ji = alpha_i alpha_j", pair_violation(t.alpha, t.abar, t.alpha, t.a), tol);
  r.add("(b) beta_i bbar_ij + beta_j b_ji = beta_i beta_j", pair_violation(t.beta, t.bbar, t.beta, t.b), tol);
  r.add("(c) beta_i abar_ij + alpha_j b_ji = beta_i alpha_j", pair_violation(t.beta, t.abar, t.alpha, t.b), tol);
  r.add("(d) alpha_i bbar_ij + beta_j a_ji = alpha_i beta_j", pair_violation(t.alpha, t.bbar, t.beta, t.a), tol);
  r.add("(e) alpha_i ahat_ij + alphahat_j a_ji = alpha_i alphahat_j", pair_violation(t.alpha, t.ahat, t.alphahat, t.a),
        tol);
  r.add("(f) alpha_i bhat_ij + betahat_j a_ji = alpha_i betahat_j", pair_violation(t.alpha, t.bhat, t.betahat, t.a),
        tol);
  r.add("(g) beta_i ahat_ij + alphahat_j b_ji = beta_i alphahat_j", pair_violation(t.beta, t.ahat, t.alphahat, t.b),
        tol);
  r.add("(h) beta_i bhat_ij + betahat_j b_ji = beta_i betahat_j", pair_violation(t.beta, t.bhat, t.betahat, t.b), tol);
  return r;
}

inline ConditionReport check_sprk_order_conditions(const SprkTableau& t, double tol) {
  t.validate();
  ConditionReport r;
  r.add("sum alpha = 1", std::abs(t.alpha.sum() - 1), tol);
  r.add("sum alphahat = 1", std::abs(t.alphahat.sum() - 1), tol);
  r.add("sum beta = 1", std::abs(t.beta.sum() - 1), tol);
  r.add("sum betahat = 1", std::abs(t.betahat.sum() - 1), tol);
  const Eigen::VectorXd e = Eigen::VectorXd::Ones(t.s);
  auto dbl = [&](const Eigen::VectorXd& w, const Eigen::MatrixXd& M) { return std::abs(w.dot(M * e) - 0.5); };
  r.add("beta b e = 1/2", dbl(t.beta, t.b), tol);
  r.add("beta bbar e = 1/2", dbl(t.beta, t.bbar), tol);
  r.add("beta bhat e = 1/2", dbl(t.beta, t.bhat), tol);
  r.add("betahat b e = 1/2", dbl(t.betahat, t.b), tol);
  r.add("betahat bbar e = 1/2", dbl(t.betahat, t.bbar), tol);
  r.add("betahat bhat e = 1/2", dbl(t.betahat, t.bhat), tol);
  return r;
}

// Weak partitioned tableau. Stage family 0 carries the drift, families 1..m the noise channels.
struct WrkTableau {
  std::string name;
  int s = 0;
  Eigen::MatrixXd a0, b0, a1, b1, b3;
  Eigen::VectorXd alpha, beta;
  // b3 unused; only valid for m = 1
  bool single_noise = false;

  void validate() const {
    if (s < 1) throw InvalidParameter("wrk tableau: s must be >= 1");
    for (const auto* M : {&a0, &b0, &a1, &b1, &b3})
      if (M->rows() != s || M->cols() != s) throw InvalidParameter("wrk tableau '" + name + "': matrix is not s x s");
    for (const auto* v : {&alpha, &beta})
      if (v->size() != s) throw InvalidParameter("wrk tableau '" + name + "': weight vector length != s");
  }
};

inline WrkTableau srkw1_tableau(double lambda) {
  WrkTableau t;
  t.name = "srkw1";
  t.s = 1;
  t.a0 = Eigen::MatrixXd::Constant(1, 1, 0.5);
  t.b0 = Eigen::MatrixXd::Constant(1, 1, lambda);
  t.a1 = Eigen::MatrixXd::Constant(1, 1, 1 - lambda);
  t.b1 = t.b3 = Eigen::MatrixXd::Constant(1, 1, 0.5);
  t.alpha = t.beta = Eigen::VectorXd::Ones(1);
  return t;
}

// lambda1..3 sit in a row that never influences the step
inline WrkTableau srkw2_tableau(double l1 = 0, double l2 = 0, double l3 = 0) {
  const double r3 = std::sqrt(3.0);
  WrkTableau t;
  t.name = "srkw2";
  t.s = 4;
  t.single_noise = true;
  t.a0.resize(4, 4);
  t.a0 << 1. / 8, 0, 0, 0,  //
      1. / 4, 1. / 8, 0, 0,   //
      1. / 4, 1. / 4, 1. / 8, 0, //
      1. / 4, 1. / 4, 1. / 4, 1. / 8;
  t.b0.resize(4, 4);
  t.b0 << 5. / 6 - r3 / 3, -0.5, 0, 0,  //
      -1. / 6 + r3 / 3, 0.5, 0, 0,       //
      0.5, 0.5, 0, 0,                    //
      -1. / 6, 0.5, 0, 0;
  t.a1.resize(4, 4);
  t.a1 << -1. / 6 + r3 / 6, 1. / 3 - r3 / 6, 0, 1. / 3,  //
      0.5, 0, 0, 0,                                      //
      0, 0, 0, 0,                                        //
      0, 0, 0, 0;
  t.b1.resize(4, 4);
  t.b1 << 0.25, 0.25 - r3 / 6, 0, 0,  //
      0.25 + r3 / 6, 0.25, 0, 0,       //
      l1, l2, 0, l3,                   //
      0, -0.5, 0, 0;
  t.b3 = Eigen::MatrixXd::Zero(4, 4);
  t.alpha = Eigen::Vector4d(0.25, 0.25, 0.25, 0.25);
  t.beta = Eigen::Vector4d(0.5, 0.5, 0, 0);
  return t;
}

inline ConditionReport check_wrk_symplectic_conditions(const WrkTableau& t, double tol) {
  t.validate();
  using detail::pair_violation;
  ConditionReport r;
  r.add("(a) alpha_i a0_ij + alpha_j a0_ji = alpha_i alpha_j", pair_violation(t.alpha, t.a0, t.alpha, t.a0), tol);
  r.add("(b) alpha_i b0_ij + beta_j a1_ji = alpha_i beta_j", pair_violation(t.alpha, t.b0, t.beta, t.a1), tol);
  r.add("(c) beta_i b1_ij + beta_j b1_ji = beta_i beta_j", pair_violation(t.beta, t.b1, t.beta, t.b1), tol);
  const std::string d = "(d) beta_i b3_ij + beta_j b3_ji = beta_i beta_j";
  if (t.single_noise)
    r.skip(d + " [single noise: b3 unused]");
  else
    r.add(d, pair_violation(t.beta, t.b3, t.beta, t.b3), tol);
  return r;
}

}  // namespace sdha
