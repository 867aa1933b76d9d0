#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "daso/localopt.hpp"
#include "daso/rng.hpp"

using namespace daso;

TEST(SgdStep, PlainGradientStep) {
  const SgdConfig cfg{0.1, 0.0, 0.0};
  ParamVector p{1.0, -2.0};
  SgdState st = SgdState::zeros(2);
  sgd_step(p, ParamVector{0.5, 4.0}, cfg, st, 0.1);
  EXPECT_EQ(p, (ParamVector{1.0 - 0.1 * 0.5, -2.0 - 0.1 * 4.0}));
}

TEST(SgdStep, ZeroGradientKeepsParams) {
  ParamVector p{3.0, 4.0};
  SgdState st = SgdState::zeros(2);
  sgd_step(p, ParamVector(2), SgdConfig{0.1, 0.9, 0.0}, st, 0.1);
  EXPECT_EQ(p, (ParamVector{3.0, 4.0}));
}

TEST(SgdStep, TwoMomentumSteps) {
  const SgdConfig cfg{0.1, 0.9, 0.0};
  ParamVector p{1.0};
  SgdState st = SgdState::zeros(1);
  sgd_step(p, ParamVector{1.0}, cfg, st, 0.1);
  EXPECT_DOUBLE_EQ(p[0], 0.9);
  sgd_step(p, ParamVector{1.0}, cfg, st, 0.1);
  EXPECT_DOUBLE_EQ(p[0], 0.71);
}

TEST(SgdStep, WeightDecayAddsToGradient) {
  ParamVector p{2.0};
  SgdState st = SgdState::zeros(1);
  sgd_step(p, ParamVector{0.0}, SgdConfig{0.1, 0.0, 0.5}, st, 0.1);
  EXPECT_DOUBLE_EQ(p[0], 2.0 - 0.1 * 1.0);
}

TEST(SgdStep, ShapeMismatch) {
  ParamVector p{1.0, 2.0};
  SgdState st = SgdState::zeros(2);
  EXPECT_THROW(sgd_step(p, ParamVector{1.0}, SgdConfig{}, st, 0.1), ShapeError);
  SgdState short_state = SgdState::zeros(1);
  EXPECT_THROW(sgd_step(p, ParamVector{1.0, 1.0}, SgdConfig{}, short_state, 0.1), ShapeError);
}

// S plain steps equal x_t minus eta times the summed gradients.
TEST(SgdStep, StepsComposeToSummedGradients) {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const int S = 1 + static_cast<int>(rng.below(10));
    const double eta = rng.uniform(0.001, 0.5);
    ParamVector x(6);
    for (double& v : x) v = rng.normal();
    const ParamVector x0 = x;
    ParamVector sum(6);
    SgdState st = SgdState::zeros(6);
    for (int s = 0; s < S; ++s) {
      ParamVector g(6);
      for (double& v : g) v = rng.normal();
      sum = axpy(1.0, g, sum);
      sgd_step(x, g, SgdConfig{eta, 0.0, 0.0}, st, eta);
    }
    EXPECT_LE(max_abs_diff(x, axpy(-eta, sum, x0)), 1e-12);
  }
}

TEST(LrAt, Examples) {
  LrSchedule s;
  s.base_lr = 0.1;
  s.world_scale = 4.0;
  s.warmup_epochs = 5;
  s.decay_factor = 0.5;
  EXPECT_NEAR(lr_at(s, 4, 0), 0.4 * 5.0 / 6.0, 1e-15);
  EXPECT_DOUBLE_EQ(lr_at(s, 5, 0), 0.4);
  EXPECT_DOUBLE_EQ(lr_at(s, 9, 2), 0.1);
  EXPECT_DOUBLE_EQ(lr_at(s, 0, 0), 0.4 / 6.0);
}

TEST(LrAt, MonotoneProperties) {
  LrSchedule s;
  s.warmup_epochs = 7;
  for (int e = 1; e < s.warmup_epochs; ++e) EXPECT_GE(lr_at(s, e, 0), lr_at(s, e - 1, 0));
  EXPECT_LE(lr_at(s, s.warmup_epochs - 1, 0), lr_at(s, s.warmup_epochs, 0));
  for (int k = 1; k < 20; ++k) EXPECT_LE(lr_at(s, 30, k), lr_at(s, 30, k - 1));
}

TEST(LrSchedule, Validation) {
  LrSchedule s;
  EXPECT_NO_THROW(s.validate());
  s.decay_factor = 1.0;
  EXPECT_THROW(s.validate(), ConfigError);
  s = LrSchedule{};
  s.plateau.window_epochs = 1;
  EXPECT_THROW(s.validate(), ConfigError);
}

namespace {

std::vector<int> firing_epochs(const std::vector<double>& losses, const PlateauConfig& cfg) {
  PlateauState st;
  std::vector<int> fired;
  for (std::size_t i = 0; i < losses.size(); ++i) {
    if (plateau_update(st, cfg, losses[i])) fired.push_back(static_cast<int>(i));
  }
  return fired;
}

}  // namespace

TEST(Plateau, DecreasingNeverFires) {
  std::vector<double> losses;
  double l = 1.0;
  for (int i = 0; i < 60; ++i, l *= 0.9) losses.push_back(l);
  EXPECT_TRUE(firing_epochs(losses, PlateauConfig{5, 0.01}).empty());
}

TEST(Plateau, ConstantFiresThenCoolsDown) {
  const std::vector<double> losses(10, 0.5);
  // fires when the window first fills, then stays quiet for window - 1 updates
  EXPECT_EQ(firing_epochs(losses, PlateauConfig{5, 0.01}), (std::vector<int>{4, 9}));
}

TEST(Plateau, SmallImprovementFires) {
  EXPECT_EQ(firing_epochs({1.0, 0.999, 0.999, 0.999, 0.999}, PlateauConfig{5, 0.01}),
            (std::vector<int>{4}));
}

TEST(Plateau, ReplayIsDeterministic) {
  Rng rng(17);
  std::vector<double> losses;
  double l = 1.0;
  for (int i = 0; i < 200; ++i) {
    l *= rng.uniform(0.97, 1.01);
    losses.push_back(l);
  }
  const PlateauConfig cfg{4, 0.02};
  const auto first = firing_epochs(losses, cfg);
  EXPECT_FALSE(first.empty());
  EXPECT_EQ(firing_epochs(losses, cfg), first);
  for (std::size_t i = 1; i < first.size(); ++i) EXPECT_GE(first[i] - first[i - 1], 4);
}

TEST(Plateau, NanIsDivergence) {
  PlateauState st;
  EXPECT_THROW(plateau_update(st, PlateauConfig{}, NAN), DivergenceError);
}
