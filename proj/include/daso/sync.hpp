#pragma once

#include <algorithm>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "daso/errors.hpp"
#include "daso/localopt.hpp"
#include "daso/netsim.hpp"
#include "daso/numerics.hpp"

namespace daso {

enum class Phase { Warmup, Cycling, Cooldown };

inline std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::Warmup: return "warmup";
    case Phase::Cycling: return "cycling";
    case Phase::Cooldown: return "cooldown";
  }
  return "warmup";
}

struct DasoConfig {
  int B_init = 4;
  int W_init = 1;
  int warmup_epochs = 5;
  int cooldown_epochs = 5;
  int total_epochs = 50;
  QuantFormat blocking_quant = QuantFormat::bf16;
  PlateauConfig plateau{};  // drives B/W cycling, independent of the LR detector

  static int default_wait(int B_init) { return std::max(1, B_init / 4); }

  void validate() const {
    if (B_init < 1) throw ConfigError("daso.B_init must be >= 1");
    if (W_init < 1 || W_init > B_init) throw ConfigError("daso.W_init must be in [1, B_init]");
    if (warmup_epochs < 0 || cooldown_epochs < 0) {
      throw ConfigError("daso.warmup_epochs and daso.cooldown_epochs must be >= 0");
    }
    if (total_epochs < 1) throw ConfigError("run.total_epochs must be >= 1");
    if (warmup_epochs + cooldown_epochs > total_epochs) {
      throw ConfigError("daso.warmup_epochs + daso.cooldown_epochs exceeds run.total_epochs");
    }
    plateau.validate("daso");
  }
};

inline Phase phase_of(int epoch, const DasoConfig& cfg) {
  if (epoch < cfg.warmup_epochs) return Phase::Warmup;
  if (epoch >= cfg.total_epochs - cfg.cooldown_epochs) return Phase::Cooldown;
  return Phase::Cycling;
}

/// In-flight non-blocking global exchange. `snapshot` holds the parameters
/// the group members sent; they are not touched by later local training.
struct PendingExchange {
  PendingHandle handle;
  std::vector<ParamVector> snapshot;
  int group = 0;
  int wait = 1;     // W at the time the exchange started
  int elapsed = 0;  // batches finished since the exchange started
};

struct DasoState {
  Phase phase = Phase::Warmup;
  int B = 1;
  int W = 1;
  int batch_in_cycle = 0;
  std::size_t cycle_index = 0;
  int sync_group = 0;
  std::optional<PendingExchange> pending;

  static DasoState initial(const DasoConfig& cfg) {
    DasoState s;
    s.B = cfg.B_init;
    s.W = cfg.W_init;
    return s;
  }
};

/// Halve B and W (floor, minimum one) on a plateau; once both are already
/// one, reset them to their initial values.
inline void schedule_step(DasoState& state, bool plateau_fired, const DasoConfig& cfg) {
  if (!plateau_fired) return;
  if (state.B > 1 || state.W > 1) {
    state.B = std::max(1, state.B / 2);
    state.W = std::max(1, state.W / 2);
  } else {
    state.B = cfg.B_init;
    state.W = cfg.W_init;
  }
}

namespace detail {

inline std::uint64_t fp32_payload(std::size_t len) { return 4 * static_cast<std::uint64_t>(len); }

inline std::size_t common_length(std::span<const ParamVector> vs) {
  for (const ParamVector& v : vs) {
    if (v.size() != vs.front().size()) throw ShapeError("replica vectors differ in length");
  }
  return vs.front().size();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Synchronization primitives. Each operates on the vectors of one node or
// one global group and mutates them in place.

/// Node-local gradient averaging; every GPU on the node gets the mean.
inline ParamVector local_sync(std::span<ParamVector> node_grads, Interconnect& net) {
  if (static_cast<int>(node_grads.size()) != net.cluster().gpus_per_node) {
    throw ProtocolError("local_sync expects one gradient per GPU on the node");
  }
  ParamVector mean = average(node_grads);
  net.blocking(CommOp{CommKind::allreduce, CommScope::intra_node,
                      static_cast<int>(node_grads.size()), detail::fp32_payload(mean.size())});
  for (ParamVector& g : node_grads) g = mean;
  return mean;
}

/// Blocking parameter average across one global group (one member per
/// node), with the exchanged values cast through `quant` on the wire.
inline ParamVector global_sync_blocking(std::span<ParamVector> group_params, QuantFormat quant,
                                        Interconnect& net) {
  if (static_cast<int>(group_params.size()) != net.cluster().num_nodes) {
    throw ProtocolError("global sync expects one member per node");
  }
  const std::size_t len = detail::common_length(group_params);
  std::vector<ParamVector> wire;
  wire.reserve(group_params.size());
  for (const ParamVector& p : group_params) wire.push_back(quantize_roundtrip(p, quant));
  ParamVector mean = average(wire);
  net.blocking(CommOp{CommKind::allreduce, CommScope::inter_node,
                      static_cast<int>(group_params.size()),
                      wire_bytes_per_entry(quant) * static_cast<std::uint64_t>(len)});
  for (ParamVector& p : group_params) p = mean;
  return mean;
}

/// Sends the group's current parameters without waiting. Full precision;
/// the clock does not move.
inline void global_sync_start(DasoState& state, std::span<const ParamVector> member_params,
                              int group, Interconnect& net) {
  if (state.phase != Phase::Cycling) {
    throw ProtocolError("non-blocking global sync outside the cycling phase");
  }
  if (state.pending) throw ProtocolError("global sync started while another is pending");
  if (static_cast<int>(member_params.size()) != net.cluster().num_nodes) {
    throw ProtocolError("global sync expects one member per node");
  }
  const std::size_t len = detail::common_length(member_params);
  PendingHandle handle = net.start(CommOp{CommKind::allreduce, CommScope::inter_node,
                                          static_cast<int>(member_params.size()),
                                          detail::fp32_payload(len)});
  state.pending = PendingExchange{
      handle, std::vector<ParamVector>(member_params.begin(), member_params.end()), group,
      state.W, 0};
}

/// Waits for the pending exchange and merges the stale snapshot into each
/// member's current parameters with the weighted stale average.
inline void global_sync_finish(DasoState& state, std::span<ParamVector> member_locals, int S,
                               Interconnect& net) {
  if (!state.pending) throw ProtocolError("global_sync_finish without a pending exchange");
  if (S < 1) throw ArgumentError("global_sync_finish requires S >= 1");
  if (member_locals.size() != state.pending->snapshot.size()) {
    throw ProtocolError("global_sync_finish: member count differs from the exchange");
  }
  net.wait(state.pending->handle);
  const std::span<const ParamVector> sent = state.pending->snapshot;
  for (ParamVector& local : member_locals) local = weighted_stale_average(local, sent, S);
  state.pending.reset();
}

/// Broadcast of the group member's parameters to every GPU on its node.
inline void local_update(const ParamVector& source, std::span<ParamVector> node_params,
                         Interconnect& net) {
  if (static_cast<int>(node_params.size()) != net.cluster().gpus_per_node) {
    throw ProtocolError("local_update expects one replica per GPU on the node");
  }
  const ParamVector value = source;
  net.blocking(CommOp{CommKind::broadcast, CommScope::intra_node,
                      static_cast<int>(node_params.size()), detail::fp32_payload(value.size())});
  for (ParamVector& p : node_params) p = value;
}

}  // namespace daso
