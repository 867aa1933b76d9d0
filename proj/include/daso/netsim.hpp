#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <optional>
#include <string>

#include "daso/errors.hpp"
#include "daso/topology.hpp"

namespace daso {

/// Latency-bandwidth (alpha-beta) communication model.
///
/// Node-local links must be at least as fast as cross-node links.
struct CostModel {
  double alpha_intra = 5e-6;   // s / message
  double beta_intra = 5e10;    // bytes / s
  double alpha_inter = 5e-5;
  double beta_inter = 1e10;
  double compute_per_batch = 1e-3;  // s per forward-backward pass

  void validate() const {
    if (!(alpha_intra > 0) || !(beta_intra > 0) || !(alpha_inter > 0) || !(beta_inter > 0) ||
        !(compute_per_batch > 0)) {
      throw ConfigError("cost_model: all fields must be strictly positive");
    }
    if (alpha_intra > alpha_inter) {
      throw ConfigError("cost_model: alpha_intra must not exceed alpha_inter");
    }
    if (beta_intra < beta_inter) {
      throw ConfigError("cost_model: beta_intra must be at least beta_inter");
    }
  }

  friend bool operator==(const CostModel&, const CostModel&) = default;
};

enum class CommKind { allreduce, broadcast };
enum class CommScope { intra_node, inter_node };

struct CommOp {
  CommKind kind = CommKind::allreduce;
  CommScope scope = CommScope::intra_node;
  int participants = 1;
  std::uint64_t payload_bytes = 0;
};

inline void validate_op(const CommOp& op, const ClusterSpec& cluster) {
  if (op.participants < 1) throw ProtocolError("comm op needs at least one participant");
  // Inter-node ops may span every rank: the flat baseline allreduce is
  // accounted entirely at inter-node cost.
  const int limit =
      op.scope == CommScope::intra_node ? cluster.gpus_per_node : cluster.world_size();
  if (op.participants > limit) {
    throw ProtocolError("comm op has " + std::to_string(op.participants) +
                        " participants, scope allows " + std::to_string(limit));
  }
}

struct TrafficCounters {
  std::uint64_t intra_bytes = 0;
  std::uint64_t inter_bytes = 0;
  std::uint64_t intra_ops = 0;
  std::uint64_t inter_ops = 0;

  friend bool operator==(const TrafficCounters&, const TrafficCounters&) = default;
};

/// Ring allreduce: 2(p-1) alpha + 2 (p-1)/p * b / beta.
/// Binomial-tree broadcast: ceil(log2 p) (alpha + b / beta).
inline double estimate_time(const CommOp& op, const CostModel& model) {
  const int p = op.participants;
  if (p <= 1) return 0.0;
  const bool intra = op.scope == CommScope::intra_node;
  const double alpha = intra ? model.alpha_intra : model.alpha_inter;
  const double beta = intra ? model.beta_intra : model.beta_inter;
  const double b = static_cast<double>(op.payload_bytes);
  if (op.kind == CommKind::allreduce) {
    return 2.0 * (p - 1) * alpha + 2.0 * (static_cast<double>(p - 1) / p) * b / beta;
  }
  const int rounds = std::bit_width(static_cast<unsigned>(p - 1));  // ceil(log2 p)
  return rounds * (alpha + b / beta);
}

// Bytes summed over all links: allreduce 2((p-1)/p) b per link times p links,
// broadcast (p-1) b.
inline std::uint64_t accounted_bytes(const CommOp& op) {
  const std::uint64_t p = static_cast<std::uint64_t>(op.participants);
  if (p <= 1) return 0;
  if (op.kind == CommKind::allreduce) return 2 * (p - 1) * op.payload_bytes;
  return (p - 1) * op.payload_bytes;
}

class PendingHandle {
 public:
  PendingHandle(CommOp op, double issue_time, double ready_time)
      : op_(op), issue_time_(issue_time), ready_time_(ready_time) {}

  const CommOp& op() const { return op_; }
  double issue_time() const { return issue_time_; }
  double ready_time() const { return ready_time_; }
  bool completed() const { return completed_; }

 private:
  friend double complete(PendingHandle& handle, double now);

  CommOp op_;
  double issue_time_;
  double ready_time_;
  bool completed_ = false;
};

inline PendingHandle issue(const CommOp& op, double now, const CostModel& model,
                           TrafficCounters& counters) {
  if (now < 0) throw ArgumentError("issue: negative simulated time");
  const std::uint64_t bytes = accounted_bytes(op);
  if (op.participants > 1) {
    if (op.scope == CommScope::intra_node) {
      counters.intra_bytes += bytes;
      ++counters.intra_ops;
    } else {
      counters.inter_bytes += bytes;
      ++counters.inter_ops;
    }
  }
  return PendingHandle(op, now, now + estimate_time(op, model));
}

// Waits for the handle; returns the simulated time after waiting.
inline double complete(PendingHandle& handle, double now) {
  if (handle.completed_) throw ProtocolError("handle completed twice");
  handle.completed_ = true;
  return std::max(now, handle.ready_time_);
}

/// Simulated interconnect: one logical clock plus traffic counters.
///
/// Blocking collectives issued inside a parallel region all start at the
/// region's opening time (they run on disjoint nodes/groups); the clock
/// moves to the latest completion when the region closes.
class Interconnect {
 public:
  class ParallelRegion {
   public:
    explicit ParallelRegion(Interconnect& net) : net_(net) {
      if (net_.region_start_) throw ProtocolError("nested parallel region");
      net_.region_start_ = net_.clock_;
      net_.region_end_ = net_.clock_;
    }
    ~ParallelRegion() {
      net_.clock_ = net_.region_end_;
      net_.region_start_.reset();
    }
    ParallelRegion(const ParallelRegion&) = delete;
    ParallelRegion& operator=(const ParallelRegion&) = delete;

   private:
    Interconnect& net_;
  };

  Interconnect(ClusterSpec cluster, CostModel model) : cluster_(cluster), model_(model) {
    cluster_.validate();
    model_.validate();
  }

  double now() const { return clock_; }
  const TrafficCounters& counters() const { return counters_; }
  const CostModel& model() const { return model_; }
  const ClusterSpec& cluster() const { return cluster_; }

  [[nodiscard]] ParallelRegion parallel() { return ParallelRegion(*this); }

  // Local computation on every rank at once.
  void compute(double seconds) {
    if (region_start_) throw ProtocolError("compute inside a parallel region");
    clock_ += seconds;
  }

  void blocking(const CommOp& op) {
    validate_op(op, cluster_);
    const double start = region_start_ ? *region_start_ : clock_;
    PendingHandle h = issue(op, start, model_, counters_);
    const double done = complete(h, start);
    if (region_start_) {
      region_end_ = std::max(region_end_, done);
    } else {
      clock_ = done;
    }
  }

  // Non-blocking: the clock is not advanced.
  PendingHandle start(const CommOp& op) {
    validate_op(op, cluster_);
    return issue(op, clock_, model_, counters_);
  }

  void wait(PendingHandle& handle) {
    if (region_start_) throw ProtocolError("wait inside a parallel region");
    clock_ = complete(handle, clock_);
  }

 private:
  ClusterSpec cluster_;
  CostModel model_;
  TrafficCounters counters_;
  double clock_ = 0.0;
  std::optional<double> region_start_;
  double region_end_ = 0.0;
};

}  // namespace daso
