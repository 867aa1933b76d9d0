#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "daso/errors.hpp"
#include "daso/netsim.hpp"
#include "daso/numerics.hpp"
#include "daso/training.hpp"

namespace daso {

struct BaselineConfig {
  QuantFormat compression = QuantFormat::fp16;
  std::uint64_t fusion_bytes = 64ULL << 20;  // tensor-fusion bucket size

  void validate() const {
    if (fusion_bytes < 1) throw ConfigError("baseline.fusion_bytes must be >= 1");
  }
};

/// Flat blocking gradient allreduce over every rank. The payload is split
/// into fusion buckets, each a separate inter-node allreduce.
inline ParamVector allreduce_step(std::span<ParamVector> all_grads, const BaselineConfig& cfg,
                                  Interconnect& net) {
  const int world = net.cluster().world_size();
  if (static_cast<int>(all_grads.size()) != world) {
    throw ProtocolError("allreduce_step expects one gradient per rank");
  }
  std::vector<ParamVector> wire;
  wire.reserve(all_grads.size());
  for (const ParamVector& g : all_grads) wire.push_back(quantize_roundtrip(g, cfg.compression));
  ParamVector mean = average(wire);

  std::uint64_t remaining = wire_bytes_per_entry(cfg.compression) * mean.size();
  while (remaining > 0) {
    const std::uint64_t chunk = std::min(remaining, cfg.fusion_bytes);
    net.blocking(CommOp{CommKind::allreduce, CommScope::inter_node, world, chunk});
    remaining -= chunk;
  }
  for (ParamVector& g : all_grads) g = mean;
  return mean;
}

class BaselineMethod {
 public:
  BaselineMethod(const BaselineConfig& cfg, const SgdConfig& sgd) : cfg_(cfg), sgd_(sgd) {
    cfg_.validate();
  }

  std::string phase_label(int) const { return "baseline"; }
  void begin_epoch(int) {}
  int B() const { return 1; }
  int W() const { return 0; }

  void sync_and_step(std::vector<ParamVector>& grads, std::vector<Replica>& replicas, double lr,
                     Interconnect& net) {
    allreduce_step(grads, cfg_, net);
    for (std::size_t r = 0; r < replicas.size(); ++r) {
      sgd_step(replicas[r].model.params, grads[r], sgd_, replicas[r].sgd, lr);
    }
  }

  void end_epoch(int, std::vector<Replica>&, Interconnect&) {}
  void after_eval(int, double) {}

 private:
  BaselineConfig cfg_;
  SgdConfig sgd_;
};

inline RunResult run_baseline(const TrainerConfig& cfg, const Dataset& data,
                              const BaselineConfig& baseline_cfg, const RunOptions& options = {}) {
  BaselineMethod method(baseline_cfg, cfg.sgd);
  RunResult result = train_loop(cfg, data, method, options);
  result.method = "baseline";
  return result;
}

}  // namespace daso
