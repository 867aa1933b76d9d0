#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "daso/errors.hpp"
#include "daso/sync.hpp"
#include "daso/topology.hpp"
#include "daso/training.hpp"

namespace daso {

/// DASO synchronization strategy for train_loop.
///
/// Every batch: node-local gradient average, SGD step on every replica.
/// Warm-up / cool-down: blocking global average over the active group
/// (rotated per batch) followed by a node-local broadcast.
/// Cycling: a non-blocking exchange starts once per B batches and is merged
/// W batches later with the weighted stale average, then broadcast.
class DasoMethod {
 public:
  DasoMethod(const DasoConfig& cfg, const ClusterSpec& cluster, const SgdConfig& sgd)
      : cfg_(cfg), groups_(build_group_map(cluster)), sgd_(sgd), state_(DasoState::initial(cfg)) {
    cfg_.validate();
  }

  const DasoState& state() const { return state_; }
  int starts() const { return starts_; }
  int finishes() const { return finishes_; }
  int schedule_events() const { return schedule_events_; }

  std::string phase_label(int) const { return std::string(to_string(state_.phase)); }

  void begin_epoch(int epoch) {
    const Phase next = phase_of(epoch, cfg_);
    if (next == Phase::Cycling && state_.phase != Phase::Cycling) {
      state_.batch_in_cycle = 0;
      state_.sync_group = active_sync_group(groups_, state_.cycle_index);
    }
    state_.phase = next;
  }

  int B() const { return state_.phase == Phase::Cycling ? state_.B : 1; }
  int W() const { return state_.phase == Phase::Cycling ? state_.W : 0; }

  void sync_and_step(std::vector<ParamVector>& grads, std::vector<Replica>& replicas, double lr,
                     Interconnect& net) {
    {
      auto region = net.parallel();
      for (const auto& node : groups_.node_groups) {
        std::vector<ParamVector> node_grads;
        node_grads.reserve(node.size());
        for (int r : node) node_grads.push_back(std::move(grads[r]));
        local_sync(node_grads, net);
        for (std::size_t i = 0; i < node.size(); ++i) grads[node[i]] = std::move(node_grads[i]);
      }
    }
    for (std::size_t r = 0; r < replicas.size(); ++r) {
      sgd_step(replicas[r].model.params, grads[r], sgd_, replicas[r].sgd, lr);
    }

    if (state_.phase == Phase::Cycling) {
      cycling_round(replicas, net);
    } else {
      blocking_round(replicas, net);
    }

    if (state_.pending && state_.phase != Phase::Cycling) {
      throw ProtocolError("pending exchange outside the cycling phase");
    }
    if (state_.pending && state_.pending->elapsed > state_.pending->wait) {
      throw ProtocolError("pending exchange overran its wait");
    }
  }

  // A pending exchange never crosses a phase boundary or the end of training.
  void end_epoch(int epoch, std::vector<Replica>& replicas, Interconnect& net) {
    if (!state_.pending) return;
    const bool last_cycling = epoch + 1 >= cfg_.total_epochs ||
                              phase_of(epoch + 1, cfg_) != Phase::Cycling;
    if (last_cycling) finish_pending(std::max(1, state_.pending->elapsed), replicas, net);
  }

  void after_eval(int, double loss) {
    if (state_.phase != Phase::Cycling) return;
    const bool fired = plateau_update(bw_plateau_, cfg_.plateau, loss);
    if (fired) ++schedule_events_;
    schedule_step(state_, fired, cfg_);
  }

 private:
  void blocking_round(std::vector<Replica>& replicas, Interconnect& net) {
    const int g = active_sync_group(groups_, state_.cycle_index);
    state_.sync_group = g;
    const std::vector<int>& members = groups_.groups[g];
    std::vector<ParamVector> params = detail::gather_params(replicas, members);
    global_sync_blocking(params, cfg_.blocking_quant, net);
    detail::scatter_params(replicas, members, params);
    broadcast_from(members, replicas, net);
    ++state_.cycle_index;
  }

  void cycling_round(std::vector<Replica>& replicas, Interconnect& net) {
    if (state_.pending) {
      ++state_.pending->elapsed;
      if (state_.pending->elapsed == state_.pending->wait) {
        finish_pending(state_.pending->wait, replicas, net);
      }
    }
    // With a single node there is no peer to exchange with; merging with the
    // rank's own stale snapshot would only drag it backwards.
    if (state_.batch_in_cycle == 0 && !state_.pending && groups_.node_groups.size() > 1) {
      const std::vector<int>& members = groups_.groups[state_.sync_group];
      global_sync_start(state_, detail::gather_params(replicas, members), state_.sync_group, net);
      ++starts_;
    }
    if (++state_.batch_in_cycle >= state_.B) {
      state_.batch_in_cycle = 0;
      ++state_.cycle_index;
      state_.sync_group = active_sync_group(groups_, state_.cycle_index);
    }
  }

  void finish_pending(int S, std::vector<Replica>& replicas, Interconnect& net) {
    const std::vector<int>& members = groups_.groups[state_.pending->group];
    std::vector<ParamVector> locals = detail::gather_params(replicas, members);
    global_sync_finish(state_, locals, S, net);
    detail::scatter_params(replicas, members, locals);
    broadcast_from(members, replicas, net);
    ++finishes_;
  }

  // members[j] is the group's rank on node j.
  void broadcast_from(const std::vector<int>& members, std::vector<Replica>& replicas,
                      Interconnect& net) {
    auto region = net.parallel();
    for (std::size_t j = 0; j < groups_.node_groups.size(); ++j) {
      const std::vector<int>& node = groups_.node_groups[j];
      std::vector<ParamVector> node_params = detail::gather_params(replicas, node);
      local_update(replicas[members[j]].model.params, node_params, net);
      detail::scatter_params(replicas, node, node_params);
    }
  }

  DasoConfig cfg_;
  GroupMap groups_;
  SgdConfig sgd_;
  DasoState state_;
  PlateauState bw_plateau_;
  int starts_ = 0;
  int finishes_ = 0;
  int schedule_events_ = 0;
};

/// Runs DASO end to end. `daso.total_epochs` is taken from `cfg`.
inline RunResult run_daso(const TrainerConfig& cfg, const Dataset& data, DasoConfig daso_cfg,
                          const RunOptions& options = {}) {
  daso_cfg.total_epochs = cfg.total_epochs;
  DasoMethod method(daso_cfg, cfg.cluster, cfg.sgd);
  RunResult result = train_loop(cfg, data, method, options);
  result.method = "daso";
  return result;
}

}  // namespace daso
