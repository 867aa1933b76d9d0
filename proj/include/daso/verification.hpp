#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "daso/errors.hpp"
#include "daso/numerics.hpp"
#include "daso/rng.hpp"

namespace daso {

/// Inputs of one gradient-form evaluation: the shared starting state x_t,
/// the node-local gradients G_l(x_{l:t+k}) for k = 0, 1, ... and the
/// gradients G_p(x^i_{p:t}) of the P group members.
struct FormCheckInstance {
  int S = 1;
  int P = 1;
  double eta = 0.1;
  ParamVector x_t;
  std::vector<ParamVector> local_grads;
  std::vector<ParamVector> global_grads;
  std::uint64_t seed = 0;
};

namespace detail {

inline void check_instance(const FormCheckInstance& inst, std::size_t local_needed) {
  if (inst.S < 1 || inst.P < 1) throw ArgumentError("S and P must be >= 1");
  if (inst.local_grads.size() < local_needed) {
    throw ArgumentError("local gradient sequence has " + std::to_string(inst.local_grads.size()) +
                        " entries, " + std::to_string(local_needed) + " needed");
  }
  if (static_cast<int>(inst.global_grads.size()) != inst.P) {
    throw ArgumentError("expected one global gradient per group member");
  }
  for (const ParamVector& g : inst.local_grads) {
    if (g.size() != inst.x_t.size()) throw ShapeError("local gradient length differs from x_t");
  }
  for (const ParamVector& g : inst.global_grads) {
    if (g.size() != inst.x_t.size()) throw ShapeError("global gradient length differs from x_t");
  }
}

}  // namespace detail

/// x_t - eta / (2S + P) * (2S * sum_{k<S} G_l(x_{l:t+k}) + sum_i G_p(x^i_{p:t}))
inline ParamVector gradient_form_update(const FormCheckInstance& inst) {
  detail::check_instance(inst, static_cast<std::size_t>(inst.S));
  const double alpha = inst.eta / (2.0 * inst.S + inst.P);
  ParamVector out = inst.x_t;
  for (std::size_t i = 0; i < out.size(); ++i) {
    double local = 0.0;
    for (int k = 0; k < inst.S; ++k) local += inst.local_grads[k][i];
    double global = 0.0;
    for (const ParamVector& g : inst.global_grads) global += g[i];
    out[i] -= alpha * (2.0 * inst.S * local + global);
  }
  return out;
}

/// P * sum_{beta<S} G_l(x_{l:t+S-beta}) - 2S * G_l(x_{l:t+S-1}) + sum_i G_p(x^i_{p:t}),
/// indices taken literally, so local_grads must reach k = S.
inline ParamVector effective_daso_gradient(const FormCheckInstance& inst) {
  detail::check_instance(inst, static_cast<std::size_t>(inst.S) + 1);
  ParamVector out(inst.x_t.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    double local = 0.0;
    for (int beta = 0; beta < inst.S; ++beta) local += inst.local_grads[inst.S - beta][i];
    double global = 0.0;
    for (const ParamVector& g : inst.global_grads) global += g[i];
    out[i] = inst.P * local - 2.0 * inst.S * inst.local_grads[inst.S - 1][i] + global;
  }
  return out;
}

/// f(x) = 1/2 (x - c)^T A (x - c) with A symmetric positive definite and
/// largest eigenvalue L.
struct QuadraticProblem {
  Eigen::MatrixXd A;
  Eigen::VectorXd center;
  double L = 1.0;

  double value(const ParamVector& x) const {
    const Eigen::VectorXd e = to_eigen(x) - center;
    return 0.5 * e.dot(A * e);
  }

  ParamVector gradient(const ParamVector& x) const {
    const Eigen::VectorXd g = A * (to_eigen(x) - center);
    return ParamVector(std::vector<double>(g.data(), g.data() + g.size()));
  }

  static Eigen::VectorXd to_eigen(const ParamVector& x) {
    return Eigen::Map<const Eigen::VectorXd>(x.values().data(), static_cast<Eigen::Index>(x.size()));
  }
};

/// Random rotation of a diagonal spectrum in [mu, L]; L is attained exactly.
inline QuadraticProblem random_quadratic(int dim, double mu, double L, Rng& rng) {
  Eigen::MatrixXd gauss(dim, dim);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) gauss(i, j) = rng.normal();
  const Eigen::MatrixXd Q = Eigen::HouseholderQR<Eigen::MatrixXd>(gauss).householderQ();
  Eigen::VectorXd spectrum(dim);
  for (int i = 0; i < dim; ++i) spectrum[i] = rng.uniform(mu, L);
  spectrum[0] = L;
  QuadraticProblem q;
  q.A = Q * spectrum.asDiagonal() * Q.transpose();
  q.A = 0.5 * (q.A + q.A.transpose());
  q.center = Eigen::VectorXd(dim);
  for (int i = 0; i < dim; ++i) q.center[i] = rng.normal();
  q.L = L;
  return q;
}

struct FormReport {
  int S = 1;
  int P = 1;
  double eta = 0.0;
  double diff_sent_at_t = 0.0;
  double diff_after_one_step = 0.0;
  double max_abs_diff = 0.0;  // best of the two conventions
  std::string best_convention;
  std::string convention_note;
};

inline constexpr const char* kSentAtT = "sent_at_t";
inline constexpr const char* kAfterOneStep = "after_one_step";

/// Runs the parameter-form pipeline (S local steps on node-averaged
/// gradients, then the weighted stale merge with P group members that all
/// started from x_t) against the gradient-form update on the same random
/// quadratic problem, under both readings of what a group member sends.
inline FormReport check_forms_agree(int S, int P, double eta, std::uint64_t seed) {
  if (S < 1 || P < 1) throw ArgumentError("check_forms_agree: S and P must be >= 1");
  constexpr int kDim = 8;
  constexpr int kGpusPerNode = 2;
  Rng rng(derive_seed(seed, 0x666f726d73, static_cast<std::uint64_t>(S),
                      static_cast<std::uint64_t>(P)));  // "forms"

  // problems[node][gpu]; node 0 is the local node.
  std::vector<std::vector<QuadraticProblem>> problems(static_cast<std::size_t>(P));
  for (auto& node : problems) {
    for (int g = 0; g < kGpusPerNode; ++g) node.push_back(random_quadratic(kDim, 0.5, 2.0, rng));
  }
  auto node_gradient = [&](int node, const ParamVector& x) {
    std::vector<ParamVector> per_gpu;
    for (const QuadraticProblem& q : problems[node]) per_gpu.push_back(q.gradient(x));
    return average(per_gpu);
  };

  FormCheckInstance inst;
  inst.S = S;
  inst.P = P;
  inst.eta = eta;
  inst.seed = seed;
  inst.x_t = ParamVector(kDim);
  for (double& v : inst.x_t) v = rng.normal();

  ParamVector local = inst.x_t;
  for (int k = 0; k <= S; ++k) {
    inst.local_grads.push_back(node_gradient(0, local));
    if (k < S) local = axpy(-eta, inst.local_grads.back(), local);
  }
  for (int i = 0; i < P; ++i) {
    inst.global_grads.push_back(i == 0 ? inst.local_grads.front() : node_gradient(i, inst.x_t));
  }

  std::vector<ParamVector> sent_at_t(static_cast<std::size_t>(P), inst.x_t);
  std::vector<ParamVector> after_one_step;
  for (const ParamVector& g : inst.global_grads) after_one_step.push_back(axpy(-eta, g, inst.x_t));

  const ParamVector grad_form = gradient_form_update(inst);
  FormReport report;
  report.S = S;
  report.P = P;
  report.eta = eta;
  report.diff_sent_at_t = max_abs_diff(weighted_stale_average(local, sent_at_t, S), grad_form);
  report.diff_after_one_step =
      max_abs_diff(weighted_stale_average(local, after_one_step, S), grad_form);
  const bool after_wins = report.diff_after_one_step <= report.diff_sent_at_t;
  report.max_abs_diff = after_wins ? report.diff_after_one_step : report.diff_sent_at_t;
  report.best_convention = after_wins ? kAfterOneStep : kSentAtT;
  report.convention_note =
      "local term: state after S local steps from x_t; sent_at_t: members send x^i_{p:t}; "
      "after_one_step: members send x^i_{p:t} - eta * G_p(x^i_{p:t})";
  return report;
}

struct SmoothnessProbe {
  double L = 1.0;
  int samples = 1000;
};

struct TrajectoryPoint {
  ParamVector x;
  ParamVector grad_f;  // true gradient at x
  ParamVector step;    // gradient estimate the update used
  double f = 0.0;
};

/// Full-batch gradient descent on a quadratic; returns steps + 1 points.
inline std::vector<TrajectoryPoint> quadratic_descent(const QuadraticProblem& q, ParamVector x0,
                                                      double eta, int steps) {
  std::vector<TrajectoryPoint> traj;
  traj.reserve(static_cast<std::size_t>(steps) + 1);
  ParamVector x = std::move(x0);
  for (int t = 0; t <= steps; ++t) {
    ParamVector g = q.gradient(x);
    traj.push_back(TrajectoryPoint{x, g, g, q.value(x)});
    if (t < steps) x = axpy(-eta, g, x);
  }
  return traj;
}

/// Counts steps violating
///   f(x_{t+1}) - f(x_t) <= -eta grad_f(x_t)^T g_t + 1/2 eta^2 L |g_t|^2 + 1e-9.
inline int smoothness_bound_check(const SmoothnessProbe& probe,
                                  std::span<const TrajectoryPoint> trajectory, double eta) {
  if (!(probe.L > 0)) throw ArgumentError("smoothness probe needs L > 0");
  int violations = 0;
  for (std::size_t t = 0; t + 1 < trajectory.size(); ++t) {
    const TrajectoryPoint& cur = trajectory[t];
    const double lhs = trajectory[t + 1].f - cur.f;
    const double rhs = -eta * dot(cur.grad_f, cur.step) +
                       0.5 * eta * eta * probe.L * dot(cur.step, cur.step) + 1e-9;
    if (lhs > rhs) ++violations;
  }
  return violations;
}

}  // namespace daso
