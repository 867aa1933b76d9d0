#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "daso/errors.hpp"
#include "daso/localopt.hpp"
#include "daso/models.hpp"
#include "daso/netsim.hpp"
#include "daso/rng.hpp"
#include "daso/topology.hpp"

namespace daso {

/// Settings shared by every trainer so DASO and the baseline see the same
/// hyperparameters.
struct TrainerConfig {
  ClusterSpec cluster{};
  SgdConfig sgd{};
  LrSchedule schedule{};
  CostModel cost{};
  int batch_size_per_rank = 8;
  int total_epochs = 50;
  std::uint64_t seed = 0;

  void validate() const {
    cluster.validate();
    sgd.validate();
    schedule.validate();
    cost.validate();
    if (batch_size_per_rank < 1) throw ConfigError("run.batch_size_per_rank must be >= 1");
    if (total_epochs < 1) throw ConfigError("run.total_epochs must be >= 1");
  }
};

struct MetricsRow {
  int epoch = 0;
  int batch = -1;  // -1 marks the end-of-epoch row
  std::string phase;
  double sim_time_s = 0.0;
  double train_loss = 0.0;
  std::optional<double> eval_metric;  // epoch rows only
  double lr = 0.0;
  int B = 1;
  int W = 0;
  std::uint64_t inter_bytes_cum = 0;
  std::uint64_t intra_bytes_cum = 0;
};

struct Replica {
  ModelParams model;
  SgdState sgd;
};

struct RunResult {
  std::string method;
  std::vector<MetricsRow> rows;
  std::optional<std::string> divergence;
  ModelParams final_model;  // rank 0
  TrafficCounters counters;
  double sim_time_s = 0.0;
  int batches_per_epoch = 0;
};

/// Read-only view handed to observers after every batch.
struct BatchView {
  int epoch = 0;
  int batch = 0;
  const std::vector<Replica>& replicas;
  const GroupMap& groups;
  const Interconnect& net;
};

struct RunOptions {
  std::function<void(const BatchView&)> on_batch;
};

/// Per-rank batch order: sequential mini-batches over the rank's shard,
/// reshuffled each epoch from (seed, epoch, rank).
class BatchPlan {
 public:
  BatchPlan(const Dataset& data, int world_size, int batch_size, std::uint64_t seed)
      : shards_(shard_iid(data, world_size, seed)), batch_size_(batch_size), seed_(seed) {
    std::size_t smallest = shards_.front().indices.size();
    for (const Shard& s : shards_) smallest = std::min(smallest, s.indices.size());
    batches_per_epoch_ = static_cast<int>(smallest / static_cast<std::size_t>(batch_size));
    if (batches_per_epoch_ < 1) {
      throw ConfigError("run.batch_size_per_rank " + std::to_string(batch_size) +
                        " exceeds the smallest shard (" + std::to_string(smallest) + " rows)");
    }
  }

  int batches_per_epoch() const { return batches_per_epoch_; }
  int batch_size() const { return batch_size_; }

  std::vector<std::size_t> epoch_order(int rank, int epoch) const {
    std::vector<std::size_t> order = shards_[rank].indices;
    Rng rng(derive_seed(seed_, 0x6261746368, static_cast<std::uint64_t>(epoch),
                        static_cast<std::uint64_t>(rank)));  // "batch"
    rng.shuffle(std::span<std::size_t>(order));
    return order;
  }

 private:
  std::vector<Shard> shards_;
  int batch_size_;
  std::uint64_t seed_;
  int batches_per_epoch_ = 0;
};

namespace detail {

inline std::vector<ParamVector> gather_params(const std::vector<Replica>& reps,
                                              std::span<const int> ranks) {
  std::vector<ParamVector> out;
  out.reserve(ranks.size());
  for (int r : ranks) out.push_back(reps[r].model.params);
  return out;
}

inline void scatter_params(std::vector<Replica>& reps, std::span<const int> ranks,
                           const std::vector<ParamVector>& values) {
  for (std::size_t i = 0; i < ranks.size(); ++i) reps[ranks[i]].model.params = values[i];
}

}  // namespace detail

/// Epoch/batch loop shared by the trainers. `Method` supplies the
/// synchronization strategy:
///
///   std::string phase_label(int epoch);
///   void begin_epoch(int epoch);
///   void sync_and_step(std::vector<ParamVector>& grads, std::vector<Replica>&,
///                      double lr, Interconnect&);
///   void end_epoch(int epoch, std::vector<Replica>&, Interconnect&);
///   void after_eval(int epoch, double loss);
///   int B() const; int W() const;
template <class Method>
RunResult train_loop(const TrainerConfig& cfg, const Dataset& data, Method& method,
                     const RunOptions& options) {
  cfg.validate();
  const GroupMap groups = build_group_map(cfg.cluster);
  const int world = cfg.cluster.world_size();
  const BatchPlan plan(data, world, cfg.batch_size_per_rank, cfg.seed);

  const ModelParams init = init_model(data.task, data.dims, cfg.seed);
  std::vector<Replica> replicas(static_cast<std::size_t>(world),
                                Replica{init, SgdState::zeros(init.params.size())});
  Interconnect net(cfg.cluster, cfg.cost);

  RunResult result;
  result.batches_per_epoch = plan.batches_per_epoch();
  PlateauState lr_plateau;
  int lr_events = 0;

  auto diverged = [&](const std::string& what) {
    result.divergence = what;
    result.final_model = replicas.front().model;
    result.counters = net.counters();
    result.sim_time_s = net.now();
    return result;
  };

  const auto bs = static_cast<std::size_t>(cfg.batch_size_per_rank);
  std::vector<ParamVector> grads(static_cast<std::size_t>(world));
  for (int epoch = 0; epoch < cfg.total_epochs; ++epoch) {
    method.begin_epoch(epoch);
    const std::string phase = method.phase_label(epoch);
    const double lr = lr_at(cfg.schedule, epoch, lr_events);
    const int B = method.B();
    const int W = method.W();

    std::vector<std::vector<std::size_t>> orders;
    orders.reserve(replicas.size());
    for (int r = 0; r < world; ++r) orders.push_back(plan.epoch_order(r, epoch));

    for (int b = 0; b < plan.batches_per_epoch(); ++b) {
      net.compute(cfg.cost.compute_per_batch);
      double loss_sum = 0.0;
      for (int r = 0; r < world; ++r) {
        const std::span<const std::size_t> rows =
            std::span<const std::size_t>(orders[r]).subspan(static_cast<std::size_t>(b) * bs, bs);
        LossGrad lg = forward_backward(replicas[r].model, data, rows);
        if (!std::isfinite(lg.loss)) {
          return diverged("non-finite loss on rank " + std::to_string(r) + " at epoch " +
                          std::to_string(epoch) + ", batch " + std::to_string(b));
        }
        loss_sum += lg.loss;
        grads[r] = std::move(lg.grad);
      }

      method.sync_and_step(grads, replicas, lr, net);

      for (int r = 0; r < world; ++r) {
        if (!replicas[r].model.params.all_finite()) {
          return diverged("non-finite parameters on rank " + std::to_string(r) + " at epoch " +
                          std::to_string(epoch) + ", batch " + std::to_string(b));
        }
      }

      result.rows.push_back(MetricsRow{epoch, b, phase, net.now(), loss_sum / world,
                                       std::nullopt, lr, B, W, net.counters().inter_bytes,
                                       net.counters().intra_bytes});
      if (options.on_batch) options.on_batch(BatchView{epoch, b, replicas, groups, net});
    }

    method.end_epoch(epoch, replicas, net);

    const ModelParams& probe = replicas.front().model;
    const double loss = full_loss(probe, data);
    if (!std::isfinite(loss)) {
      return diverged("non-finite full-batch loss at epoch " + std::to_string(epoch));
    }
    const double metric = eval_metric(probe, data);
    if (epoch >= cfg.schedule.warmup_epochs && plateau_update(lr_plateau, cfg.schedule.plateau, loss)) {
      ++lr_events;
    }
    method.after_eval(epoch, loss);

    result.rows.push_back(MetricsRow{epoch, -1, phase, net.now(), loss, metric, lr, B, W,
                                     net.counters().inter_bytes, net.counters().intra_bytes});
  }

  result.final_model = replicas.front().model;
  result.counters = net.counters();
  result.sim_time_s = net.now();
  return result;
}

}  // namespace daso
