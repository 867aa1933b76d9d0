#include <gtest/gtest.h>

#include <vector>

#include "daso/baseline.hpp"
#include "support.hpp"

using namespace daso;

namespace {

using Vecs = std::vector<ParamVector>;

BaselineConfig plain() {
  BaselineConfig c;
  c.compression = QuantFormat::none;
  return c;
}

}  // namespace

TEST(AllreduceStep, SingleRankIsFree) {
  Interconnect net({1, 1}, CostModel{});
  Vecs g{{0.1, 0.2}};
  allreduce_step(g, plain(), net);
  EXPECT_EQ(g[0], (ParamVector{0.1, 0.2}));
  EXPECT_EQ(net.now(), 0.0);
  EXPECT_EQ(net.counters(), TrafficCounters{});
}

TEST(AllreduceStep, MeanAcrossRanks) {
  Interconnect net({2, 1}, CostModel{});
  Vecs g{{0}, {4}};
  allreduce_step(g, plain(), net);
  EXPECT_EQ(g, (Vecs{{2}, {2}}));
}

TEST(AllreduceStep, SingleFusionBucket) {
  Interconnect net({2, 2}, CostModel{});
  Vecs g(4, ParamVector(1'000'000, 0.5));
  allreduce_step(g, BaselineConfig{}, net);
  EXPECT_EQ(net.counters().inter_ops, 1u);
  // one 2e6-byte bucket, accounted as 2(p - 1) copies over p = 4 ranks
  EXPECT_EQ(net.counters().inter_bytes, 2ull * 3 * 2'000'000);
}

TEST(AllreduceStep, SmallBucketsSplitPayload) {
  Interconnect net({2, 2}, CostModel{});
  BaselineConfig c = plain();
  c.fusion_bytes = 30;
  Vecs g(4, ParamVector(20, 1.0));  // 80 bytes -> 30 + 30 + 20
  allreduce_step(g, c, net);
  EXPECT_EQ(net.counters().inter_ops, 3u);
  EXPECT_EQ(net.counters().inter_bytes, 2ull * 3 * 80);
}

TEST(AllreduceStep, FusionChangesOnlyTiming) {
  Interconnect fused({2, 2}, CostModel{});
  Interconnect split({2, 2}, CostModel{});
  BaselineConfig small;
  small.fusion_bytes = 2;  // one fp16 entry per bucket
  Vecs a{{1, 2, 3}, {4, 5, 6}, {7, 8, 9}, {1, 1, 1}};
  Vecs b = a;
  allreduce_step(a, BaselineConfig{}, fused);
  allreduce_step(b, small, split);
  EXPECT_EQ(a, b);
  EXPECT_GT(split.now(), fused.now());
}

TEST(AllreduceStep, Fp16OnTheWire) {
  Interconnect net({2, 1}, CostModel{});
  Vecs g{{1.0 / 3.0}, {1.0 / 3.0}};
  allreduce_step(g, BaselineConfig{}, net);
  EXPECT_EQ(g[0][0], fp16_roundtrip(1.0 / 3.0));
  EXPECT_EQ(g[0], g[1]);
}

TEST(AllreduceStep, SizeMismatch) {
  Interconnect net({2, 2}, CostModel{});
  Vecs g(3, ParamVector{1.0});
  EXPECT_THROW(allreduce_step(g, plain(), net), ProtocolError);
}

TEST(AllreduceStep, MatchesFullBatchMean) {
  const Dataset data = make_synthetic({TaskKind::logreg, 64, {3, 16, 3}, 0.0, 4});
  const ModelParams m = init_model(data.task, data.dims, 1);
  const auto shards = shard_iid(data, 4, 2);
  Vecs g;
  for (const Shard& s : shards) g.push_back(forward_backward(m, data, s.indices).grad);
  Interconnect net({2, 2}, CostModel{});
  allreduce_step(g, plain(), net);
  EXPECT_LE(max_abs_diff(g[0], forward_backward(m, data, all_rows(data)).grad), 1e-12);
  for (const auto& v : g) EXPECT_EQ(v, g[0]);
}

TEST(BaselineRun, SingleRankIsPlainSgd) {
  const TrainerConfig t = test::trainer_for({1, 1}, 3, 5);
  const Dataset data = make_synthetic({TaskKind::mlp, 48, {2, 3, 2}, 0.1, 2});
  const RunResult r = run_baseline(t, data, plain());
  ModelParams m = init_model(data.task, data.dims, t.seed);
  SgdState st = SgdState::zeros(m.params.size());
  const BatchPlan plan(data, 1, t.batch_size_per_rank, t.seed);
  for (int e = 0; e < 3; ++e) {
    const auto order = plan.epoch_order(0, e);
    for (int b = 0; b < plan.batches_per_epoch(); ++b) {
      const std::span<const std::size_t> rows =
          std::span<const std::size_t>(order).subspan(static_cast<std::size_t>(b) * 4, 4);
      sgd_step(m.params, forward_backward(m, data, rows).grad, t.sgd, st,
               lr_at(t.schedule, e, 0));
    }
  }
  EXPECT_EQ(r.final_model.params, m.params);
  for (const MetricsRow& row : r.rows) {
    EXPECT_EQ(row.phase, "baseline");
    EXPECT_EQ(row.B, 1);
    EXPECT_EQ(row.W, 0);
  }
}

TEST(BaselineRun, ConvergesToClosedForm) {
  const TrainerConfig t = test::trainer_for({2, 2}, 40);
  const Dataset data = make_synthetic({TaskKind::linreg, 512, {5}, 0.1, 6});
  const RunResult r = run_baseline(t, data, BaselineConfig{});
  ASSERT_FALSE(r.divergence);
  const double opt = full_loss(closed_form_optimum(data, 0.0), data);
  EXPECT_LE(std::abs(full_loss(r.final_model, data) - opt), 1e-3);
}
