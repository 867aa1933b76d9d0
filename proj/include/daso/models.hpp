#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "daso/errors.hpp"
#include "daso/numerics.hpp"
#include "daso/rng.hpp"

namespace daso {

enum class TaskKind { linreg, logreg, mlp };

inline std::string_view to_string(TaskKind t) {
  switch (t) {
    case TaskKind::linreg: return "linreg";
    case TaskKind::logreg: return "logreg";
    case TaskKind::mlp: return "mlp";
  }
  return "linreg";
}

inline TaskKind parse_task_kind(std::string_view s) {
  if (s == "linreg") return TaskKind::linreg;
  if (s == "logreg") return TaskKind::logreg;
  if (s == "mlp") return TaskKind::mlp;
  throw ConfigError("unknown task kind '" + std::string(s) + "'");
}

struct TaskDims {
  int d = 1;        // input features
  int hidden = 16;  // mlp hidden width
  int classes = 2;  // logreg classes

  friend bool operator==(const TaskDims&, const TaskDims&) = default;
};

// linreg: w (d). logreg: W (k x d, row major) then bias (k).
// mlp: W1 (h x d, row major), b1 (h), w2 (h), b2 (1).
inline std::size_t param_count(TaskKind task, const TaskDims& dims) {
  const auto d = static_cast<std::size_t>(dims.d);
  switch (task) {
    case TaskKind::linreg: return d;
    case TaskKind::logreg: return static_cast<std::size_t>(dims.classes) * (d + 1);
    case TaskKind::mlp: return static_cast<std::size_t>(dims.hidden) * (d + 2) + 1;
  }
  return 0;
}

struct SyntheticSpec {
  TaskKind task = TaskKind::linreg;
  int n = 1024;
  TaskDims dims{};
  double noise_sd = 0.1;
  std::uint64_t seed = 0;
};

/// Row-major n x d feature matrix with per-row targets. For logreg the
/// target holds the class index.
struct Dataset {
  TaskKind task = TaskKind::linreg;
  TaskDims dims{};
  int n = 0;
  std::uint64_t seed = 0;
  std::vector<double> features;
  std::vector<double> targets;
  ParamVector truth;  // generating parameters (w*, W*, or teacher network)

  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(features).subspan(i * dims.d, dims.d);
  }
};

struct ModelParams {
  ParamVector params;
  TaskKind task = TaskKind::linreg;
  TaskDims dims{};
};

namespace detail {

inline double mlp_output(std::span<const double> p, const TaskDims& dims,
                         std::span<const double> x, std::vector<double>* hidden_out) {
  const int d = dims.d;
  const int h = dims.hidden;
  const double* w1 = p.data();
  const double* b1 = w1 + static_cast<std::size_t>(h) * d;
  const double* w2 = b1 + h;
  const double b2 = w2[h];
  double y = b2;
  for (int j = 0; j < h; ++j) {
    double z = b1[j];
    for (int k = 0; k < d; ++k) z += w1[static_cast<std::size_t>(j) * d + k] * x[k];
    const double a = std::tanh(z);
    if (hidden_out) (*hidden_out)[j] = a;
    y += w2[j] * a;
  }
  return y;
}

// Softmax probabilities of a logreg model; returns log-sum-exp.
inline double logreg_probs(std::span<const double> p, const TaskDims& dims,
                           std::span<const double> x, std::vector<double>& probs) {
  const int d = dims.d;
  const int k = dims.classes;
  const double* bias = p.data() + static_cast<std::size_t>(k) * d;
  double zmax = -INFINITY;
  for (int c = 0; c < k; ++c) {
    double z = bias[c];
    for (int j = 0; j < d; ++j) z += p[static_cast<std::size_t>(c) * d + j] * x[j];
    probs[c] = z;
    zmax = std::max(zmax, z);
  }
  double sum = 0.0;
  for (int c = 0; c < k; ++c) {
    probs[c] = std::exp(probs[c] - zmax);
    sum += probs[c];
  }
  for (int c = 0; c < k; ++c) probs[c] /= sum;
  return zmax + std::log(sum);
}

inline void check_model(const ModelParams& m, const Dataset& data) {
  if (m.task != data.task || m.dims != data.dims) {
    throw ShapeError("model and dataset describe different tasks");
  }
  if (m.params.size() != param_count(m.task, m.dims)) {
    throw ShapeError("parameter vector has " + std::to_string(m.params.size()) +
                     " entries, task needs " + std::to_string(param_count(m.task, m.dims)));
  }
}

}  // namespace detail

inline Dataset make_synthetic(const SyntheticSpec& spec) {
  if (spec.n < 1 || spec.dims.d < 1) throw ConfigError("task: n and d must be >= 1");
  if (spec.task == TaskKind::mlp && spec.dims.hidden < 1) {
    throw ConfigError("task.hidden must be >= 1");
  }
  if (spec.task == TaskKind::logreg && spec.dims.classes < 2) {
    throw ConfigError("task.classes must be >= 2");
  }
  if (!(spec.noise_sd >= 0)) throw ConfigError("task.noise_sd must be >= 0");

  Dataset data;
  data.task = spec.task;
  data.dims = spec.dims;
  data.n = spec.n;
  data.seed = spec.seed;
  const auto d = static_cast<std::size_t>(spec.dims.d);
  const auto n = static_cast<std::size_t>(spec.n);

  Rng truth_rng(derive_seed(spec.seed, 0x7472757468));  // "truth"
  Rng feature_rng(derive_seed(spec.seed, 0x66656174));  // "feat"
  Rng noise_rng(derive_seed(spec.seed, 0x6e6f6973));    // "nois"

  data.truth = ParamVector(param_count(spec.task, spec.dims));
  switch (spec.task) {
    case TaskKind::linreg:
    case TaskKind::logreg:
      for (double& w : data.truth) w = truth_rng.normal();
      break;
    case TaskKind::mlp: {
      const int h = spec.dims.hidden;
      std::span<double> t = data.truth.span();
      const std::size_t nw1 = static_cast<std::size_t>(h) * d;
      for (std::size_t i = 0; i < nw1; ++i) t[i] = truth_rng.normal(0.0, 1.0 / std::sqrt(double(d)));
      for (int j = 0; j < h; ++j) t[nw1 + j] = truth_rng.normal(0.0, 0.1);
      for (int j = 0; j < h; ++j) t[nw1 + h + j] = truth_rng.normal(0.0, 1.0 / std::sqrt(double(h)));
      t[nw1 + 2 * h] = 0.0;
      break;
    }
  }

  data.features.resize(n * d);
  for (double& x : data.features) x = feature_rng.normal();
  data.targets.resize(n);

  std::vector<double> probs(static_cast<std::size_t>(spec.dims.classes));
  for (std::size_t i = 0; i < n; ++i) {
    const auto x = data.row(i);
    switch (spec.task) {
      case TaskKind::linreg: {
        double y = 0.0;
        for (std::size_t j = 0; j < d; ++j) y += x[j] * data.truth[j];
        data.targets[i] = y + spec.noise_sd * noise_rng.normal();
        break;
      }
      case TaskKind::logreg: {
        detail::logreg_probs(data.truth.span(), spec.dims, x, probs);
        const double u = noise_rng.uniform();
        int label = spec.dims.classes - 1;
        double acc = 0.0;
        for (int c = 0; c < spec.dims.classes; ++c) {
          acc += probs[c];
          if (u < acc) {
            label = c;
            break;
          }
        }
        data.targets[i] = label;
        break;
      }
      case TaskKind::mlp:
        data.targets[i] = detail::mlp_output(data.truth.span(), spec.dims, x, nullptr) +
                          spec.noise_sd * noise_rng.normal();
        break;
    }
  }
  return data;
}

inline ModelParams init_model(TaskKind task, const TaskDims& dims, std::uint64_t seed) {
  ModelParams m{ParamVector(param_count(task, dims)), task, dims};
  Rng rng(derive_seed(seed, 0x696e6974));  // "init"
  for (double& p : m.params) p = rng.normal(0.0, 0.1);
  return m;
}

struct Shard {
  int rank = 0;
  std::vector<std::size_t> indices;
};

/// Random permutation of the rows, dealt round robin to the ranks.
inline std::vector<Shard> shard_iid(const Dataset& data, int world_size, std::uint64_t seed) {
  if (world_size < 1) throw ConfigError("world_size must be >= 1");
  if (world_size > data.n) {
    throw ConfigError("world_size " + std::to_string(world_size) + " exceeds dataset size " +
                      std::to_string(data.n));
  }
  std::vector<std::size_t> perm(static_cast<std::size_t>(data.n));
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  Rng rng(derive_seed(seed, 0x7368617264));  // "shard"
  rng.shuffle(std::span<std::size_t>(perm));

  std::vector<Shard> shards(static_cast<std::size_t>(world_size));
  for (int r = 0; r < world_size; ++r) shards[r].rank = r;
  for (std::size_t i = 0; i < perm.size(); ++i) {
    shards[i % world_size].indices.push_back(perm[i]);
  }
  return shards;
}

struct LossGrad {
  double loss = 0.0;
  ParamVector grad;
};

/// Mean per-example loss over `rows` and its exact gradient.
inline LossGrad forward_backward(const ModelParams& m, const Dataset& data,
                                 std::span<const std::size_t> rows) {
  detail::check_model(m, data);
  if (rows.empty()) throw ArgumentError("forward_backward on an empty batch");
  const int d = m.dims.d;
  const std::span<const double> p = m.params.span();
  LossGrad out{0.0, ParamVector(m.params.size())};
  std::span<double> g = out.grad.span();

  std::vector<double> buf(static_cast<std::size_t>(std::max(m.dims.hidden, m.dims.classes)));
  for (std::size_t r : rows) {
    if (r >= static_cast<std::size_t>(data.n)) throw RangeError("batch row out of range");
    const auto x = data.row(r);
    const double y = data.targets[r];
    switch (m.task) {
      case TaskKind::linreg: {
        double pred = 0.0;
        for (int j = 0; j < d; ++j) pred += p[j] * x[j];
        const double e = pred - y;
        out.loss += 0.5 * e * e;
        for (int j = 0; j < d; ++j) g[j] += e * x[j];
        break;
      }
      case TaskKind::logreg: {
        const int k = m.dims.classes;
        const int label = static_cast<int>(y);
        const double lse = detail::logreg_probs(p, m.dims, x, buf);
        double z_label = p[static_cast<std::size_t>(k) * d + label];
        for (int j = 0; j < d; ++j) z_label += p[static_cast<std::size_t>(label) * d + j] * x[j];
        out.loss += lse - z_label;
        for (int c = 0; c < k; ++c) {
          const double delta = buf[c] - (c == label ? 1.0 : 0.0);
          for (int j = 0; j < d; ++j) g[static_cast<std::size_t>(c) * d + j] += delta * x[j];
          g[static_cast<std::size_t>(k) * d + c] += delta;
        }
        break;
      }
      case TaskKind::mlp: {
        const int h = m.dims.hidden;
        const std::size_t nw1 = static_cast<std::size_t>(h) * d;
        const double pred = detail::mlp_output(p, m.dims, x, &buf);
        const double e = pred - y;
        out.loss += 0.5 * e * e;
        for (int j = 0; j < h; ++j) {
          const double a = buf[j];
          const double w2 = p[nw1 + h + j];
          g[nw1 + h + j] += e * a;
          const double dz = e * w2 * (1.0 - a * a);
          g[nw1 + j] += dz;
          for (int k = 0; k < d; ++k) g[static_cast<std::size_t>(j) * d + k] += dz * x[k];
        }
        g[nw1 + 2 * h] += e;
        break;
      }
    }
  }
  const double inv = 1.0 / static_cast<double>(rows.size());
  out.loss *= inv;
  for (double& v : g) v *= inv;
  return out;
}

inline std::vector<std::size_t> all_rows(const Dataset& data) {
  std::vector<std::size_t> rows(static_cast<std::size_t>(data.n));
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  return rows;
}

inline double full_loss(const ModelParams& m, const Dataset& data) {
  return forward_backward(m, data, all_rows(data)).loss;
}

/// Higher is better: classification accuracy for logreg, coefficient of
/// determination (R^2) for the regression tasks.
inline double eval_metric(const ModelParams& m, const Dataset& data) {
  detail::check_model(m, data);
  const std::span<const double> p = m.params.span();
  const auto n = static_cast<std::size_t>(data.n);
  if (m.task == TaskKind::logreg) {
    std::vector<double> probs(static_cast<std::size_t>(m.dims.classes));
    std::size_t correct = 0;
    for (std::size_t i = 0; i < n; ++i) {
      detail::logreg_probs(p, m.dims, data.row(i), probs);
      const auto best = std::max_element(probs.begin(), probs.end()) - probs.begin();
      if (best == static_cast<long>(data.targets[i])) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(n);
  }
  double mean = 0.0;
  for (double y : data.targets) mean += y;
  mean /= static_cast<double>(n);
  double ss_tot = 0.0;
  for (double y : data.targets) ss_tot += (y - mean) * (y - mean);
  const double ss_res = 2.0 * full_loss(m, data) * static_cast<double>(n);
  return ss_tot > 0 ? 1.0 - ss_res / ss_tot : 0.0;
}

/// Ridge-regularized normal equations for linreg:
///   (X^T X / n + l2 I) w = X^T y / n
/// which minimizes mean 1/2 (x w - y)^2 + 1/2 l2 |w|^2.
inline ModelParams closed_form_optimum(const Dataset& data, double l2) {
  if (data.task != TaskKind::linreg) throw ArgumentError("closed form needs a linreg dataset");
  if (!(l2 >= 0)) throw ArgumentError("l2 must be nonnegative");
  const int d = data.dims.d;
  const int n = data.n;
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> X(
      data.features.data(), n, d);
  Eigen::Map<const Eigen::VectorXd> y(data.targets.data(), n);
  Eigen::MatrixXd A = X.transpose() * X / static_cast<double>(n);
  A.diagonal().array() += l2;
  const Eigen::VectorXd rhs = X.transpose() * y / static_cast<double>(n);

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
  if (qr.rank() < d) throw NumericalError("normal equations are singular");
  const Eigen::VectorXd w = qr.solve(rhs);

  ModelParams m{ParamVector(static_cast<std::size_t>(d)), TaskKind::linreg, data.dims};
  for (int j = 0; j < d; ++j) m.params[j] = w[j];
  return m;
}

}  // namespace daso
