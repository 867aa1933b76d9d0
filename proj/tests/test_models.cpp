#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <vector>

#include "daso/models.hpp"
#include "finite_diff.hpp"

using namespace daso;

namespace {

Dataset tiny_linreg(std::vector<double> x, std::vector<double> y, int d) {
  Dataset data;
  data.task = TaskKind::linreg;
  data.dims = TaskDims{d, 16, 2};
  data.n = static_cast<int>(y.size());
  data.features = std::move(x);
  data.targets = std::move(y);
  data.truth = ParamVector(static_cast<std::size_t>(d));
  return data;
}

double norm(const ParamVector& v) { return std::sqrt(dot(v, v)); }

}  // namespace

TEST(ForwardBackward, OneDimExample) {
  const Dataset data = tiny_linreg({1.0}, {2.0}, 1);
  const ModelParams m{ParamVector{0.0}, TaskKind::linreg, data.dims};
  const std::vector<std::size_t> rows{0};
  const LossGrad lg = forward_backward(m, data, rows);
  EXPECT_EQ(lg.loss, 2.0);
  EXPECT_EQ(lg.grad, (ParamVector{-2.0}));
}

TEST(ForwardBackward, ZeroAtNoiselessOptimum) {
  const Dataset data = make_synthetic({TaskKind::linreg, 64, {5}, 0.0, 3});
  const ModelParams m{data.truth, TaskKind::linreg, data.dims};
  const LossGrad lg = forward_backward(m, data, all_rows(data));
  EXPECT_LT(lg.loss, 1e-28);
  EXPECT_LT(norm(lg.grad), 1e-13);
}

TEST(ForwardBackward, ShapeErrors) {
  const Dataset data = make_synthetic({TaskKind::linreg, 8, {3}, 0.1, 3});
  const ModelParams wrong{ParamVector(2), TaskKind::linreg, TaskDims{2}};
  const std::vector<std::size_t> rows{0};
  EXPECT_THROW(forward_backward(wrong, data, rows), ShapeError);
  const ModelParams ok{ParamVector(3), TaskKind::linreg, data.dims};
  EXPECT_THROW(forward_backward(ok, data, std::vector<std::size_t>{}), ArgumentError);
}

TEST(ForwardBackward, FiniteDifferencesAllTasks) {
  for (TaskKind task : {TaskKind::linreg, TaskKind::logreg, TaskKind::mlp}) {
    for (std::uint64_t s = 0; s < 30; ++s) {
      EXPECT_LE(test::fd_draw(task, 1000 + s), test::kFdRelTol) << to_string(task) << " " << s;
    }
  }
}

TEST(ParamCount, Layouts) {
  const TaskDims dims{10, 16, 3};
  EXPECT_EQ(param_count(TaskKind::linreg, dims), 10u);
  EXPECT_EQ(param_count(TaskKind::logreg, dims), 33u);
  EXPECT_EQ(param_count(TaskKind::mlp, dims), 193u);
}

TEST(MakeSynthetic, DeterministicPerSeed) {
  for (TaskKind task : {TaskKind::linreg, TaskKind::logreg, TaskKind::mlp}) {
    const SyntheticSpec spec{task, 50, {4, 5, 3}, 0.2, 11};
    const Dataset a = make_synthetic(spec);
    const Dataset b = make_synthetic(spec);
    EXPECT_EQ(a.features, b.features);
    EXPECT_EQ(a.targets, b.targets);
    EXPECT_EQ(a.truth, b.truth);
    SyntheticSpec other = spec;
    other.seed = 12;
    EXPECT_NE(make_synthetic(other).features, a.features);
  }
}

TEST(MakeSynthetic, LogregLabelsInRange) {
  const Dataset data = make_synthetic({TaskKind::logreg, 200, {3, 4, 4}, 0.0, 5});
  for (double y : data.targets) {
    EXPECT_EQ(y, std::floor(y));
    EXPECT_GE(y, 0);
    EXPECT_LT(y, 4);
  }
}

TEST(ShardIid, SizesAndPartition) {
  const Dataset ten = make_synthetic({TaskKind::linreg, 10, {2}, 0.1, 0});
  const auto shards = shard_iid(ten, 4, 9);
  std::vector<std::size_t> sizes;
  for (const Shard& s : shards) sizes.push_back(s.indices.size());
  EXPECT_EQ(sizes, (std::vector<std::size_t>{3, 3, 2, 2}));

  std::vector<std::size_t> all;
  for (const Shard& s : shards) all.insert(all.end(), s.indices.begin(), s.indices.end());
  std::sort(all.begin(), all.end());
  std::vector<std::size_t> expect(10);
  std::iota(expect.begin(), expect.end(), 0);
  EXPECT_EQ(all, expect);

  const auto again = shard_iid(ten, 4, 9);
  for (std::size_t r = 0; r < shards.size(); ++r) EXPECT_EQ(shards[r].indices, again[r].indices);

  const Dataset eight = make_synthetic({TaskKind::linreg, 8, {2}, 0.1, 0});
  for (const Shard& s : shard_iid(eight, 4, 1)) EXPECT_EQ(s.indices.size(), 2u);
  const auto single = shard_iid(eight, 1, 1);
  ASSERT_EQ(single.size(), 1u);
  EXPECT_EQ(std::set<std::size_t>(single[0].indices.begin(), single[0].indices.end()).size(), 8u);

  EXPECT_THROW(shard_iid(eight, 9, 1), ConfigError);
}

TEST(ShardIid, FullGradientIsWeightedShardAverage) {
  const Dataset data = make_synthetic({TaskKind::mlp, 96, {3, 4, 2}, 0.1, 2});
  const ModelParams m = init_model(TaskKind::mlp, data.dims, 4);
  const ParamVector full = forward_backward(m, data, all_rows(data)).grad;
  ParamVector acc(full.size());
  for (const Shard& s : shard_iid(data, 8, 3)) {
    const ParamVector g = forward_backward(m, data, s.indices).grad;
    acc = axpy(static_cast<double>(s.indices.size()) / data.n, g, acc);
  }
  EXPECT_LE(max_abs_diff(acc, full), 1e-12);
}

TEST(ClosedForm, RecoversNoiselessTruth) {
  const Dataset data = make_synthetic({TaskKind::linreg, 200, {6}, 0.0, 8});
  const ModelParams w = closed_form_optimum(data, 0.0);
  EXPECT_LE(max_abs_diff(w.params, data.truth), 1e-8);
}

TEST(ClosedForm, HugeRidgeShrinksToZero) {
  const Dataset data = make_synthetic({TaskKind::linreg, 200, {6}, 0.1, 8});
  const ModelParams w = closed_form_optimum(data, 1e8);
  EXPECT_LE(norm(w.params), 1e-6);
}

TEST(ClosedForm, StationaryPoint) {
  const Dataset data = make_synthetic({TaskKind::linreg, 1024, {10}, 0.1, 0});
  for (double l2 : {0.0, 1e-4, 0.5}) {
    const ModelParams w = closed_form_optimum(data, l2);
    const ParamVector g = axpy(l2, w.params, forward_backward(w, data, all_rows(data)).grad);
    EXPECT_LE(norm(g), 1e-8) << l2;
  }
}

TEST(ClosedForm, OptimumLossNearNoiseVariance) {
  const Dataset data = make_synthetic({TaskKind::linreg, 1024, {10}, 0.1, 0});
  const double loss = full_loss(closed_form_optimum(data, 0.0), data);
  // mean 1/2 e^2 with e ~ N(0, 0.01), less the d/n fitted share
  EXPECT_NEAR(loss, 0.005, 0.001);
}

TEST(ClosedForm, Errors) {
  const Dataset singular = tiny_linreg({1, 1, 2, 2}, {1, 2}, 2);
  EXPECT_THROW(closed_form_optimum(singular, 0.0), NumericalError);
  EXPECT_NO_THROW(closed_form_optimum(singular, 0.1));
  const Dataset logreg = make_synthetic({TaskKind::logreg, 16, {2}, 0.0, 0});
  EXPECT_THROW(closed_form_optimum(logreg, 0.0), ArgumentError);
}

TEST(EvalMetric, PerfectAndConstant) {
  const Dataset data = make_synthetic({TaskKind::linreg, 64, {3}, 0.0, 1});
  EXPECT_NEAR(eval_metric(ModelParams{data.truth, TaskKind::linreg, data.dims}, data), 1.0, 1e-12);
  const Dataset cls = make_synthetic({TaskKind::logreg, 64, {3, 16, 3}, 0.0, 1});
  const double acc = eval_metric(init_model(TaskKind::logreg, cls.dims, 0), cls);
  EXPECT_GE(acc, 0.0);
  EXPECT_LE(acc, 1.0);
}
