// Copyright 2026 The crnn Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "crnn/optim.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "crnn/error.hpp"

namespace crnn {
namespace {

AdadeltaState adadelta_state(std::size_t n) {
  return {std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
}

TEST(AdadeltaTest, ZeroGradientOnlyDecaysAccumulators) {
  AdadeltaState s{{0.5, 2.0}, {0.25, 1.0}};
  std::vector<double> w{1.0, -3.0};
  std::vector<double> g{0.0, 0.0};
  adadelta_step(s, {}, w, g);
  EXPECT_EQ(w, (std::vector<double>{1.0, -3.0}));
  EXPECT_DOUBLE_EQ(s.mean_sq_grad[0], 0.45);
  EXPECT_DOUBLE_EQ(s.mean_sq_grad[1], 1.8);
  EXPECT_DOUBLE_EQ(s.mean_sq_update[0], 0.225);
  EXPECT_DOUBLE_EQ(s.mean_sq_update[1], 0.9);
}

TEST(AdadeltaTest, FirstStepClosedForm) {
  const AdadeltaOptions opt;
  for (double g : {1e-4, 0.3, -2.0, 50.0}) {
    AdadeltaState s = adadelta_state(1);
    std::vector<double> w{0.0};
    std::vector<double> grad{g};
    adadelta_step(s, opt, w, grad);
    const double expected = std::sqrt(opt.epsilon) * std::abs(g) /
                            std::sqrt((1.0 - opt.rho) * g * g + opt.epsilon);
    EXPECT_NEAR(std::abs(w[0]), expected, 1e-15);
    EXPECT_EQ(std::signbit(w[0]), !std::signbit(g));
  }
}

TEST(AdadeltaTest, QuadraticBowlDescendsMonotonically) {
  Tensor w({1}, {1.0}, true);
  Adadelta opt({w});
  double previous = 0.5;
  for (int step = 0; step < 50; ++step) {
    opt.zero_grad();
    Tensor loss = scale(sum(mul(w, w)), 0.5);
    loss.backward();
    opt.step();
    const double now = 0.5 * w.values()[0] * w.values()[0];
    EXPECT_LT(now, previous) << "step " << step;
    previous = now;
  }
}

TEST(AdadeltaTest, FlippedGradientsFlipUpdates) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> dist;
  AdadeltaState a = adadelta_state(8);
  AdadeltaState b = adadelta_state(8);
  std::vector<double> wa(8, 0.0), wb(8, 0.0), g(8), ng(8);
  for (int step = 0; step < 20; ++step) {
    for (std::size_t i = 0; i < 8; ++i) {
      g[i] = dist(rng);
      ng[i] = -g[i];
    }
    adadelta_step(a, {}, wa, g);
    adadelta_step(b, {}, wb, ng);
    for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(wa[i], -wb[i]);
  }
}

TEST(AdadeltaTest, ShapeMismatchIsUsageError) {
  AdadeltaState s = adadelta_state(2);
  std::vector<double> w(3), g(3);
  EXPECT_THROW(adadelta_step(s, {}, w, g), UsageError);
}

TEST(MomentumTest, ZeroMomentumIsPlainSgd) {
  MomentumState s{{0.0, 0.0}};
  std::vector<double> w{1.0, 2.0};
  std::vector<double> g{0.5, -4.0};
  momentum_step(s, {0.1, 0.0}, w, g);
  EXPECT_DOUBLE_EQ(w[0], 1.0 - 0.05);
  EXPECT_DOUBLE_EQ(w[1], 2.0 + 0.4);
}

TEST(MomentumTest, VelocityCoastsUnderZeroGradient) {
  MomentumState s{{0.2, -1.0}};
  std::vector<double> w{0.0, 0.0};
  std::vector<double> g{0.0, 0.0};
  momentum_step(s, {0.01, 0.9}, w, g);
  EXPECT_DOUBLE_EQ(w[0], 0.9 * 0.2);
  EXPECT_DOUBLE_EQ(w[1], -0.9);
}

TEST(MomentumTest, QuadraticBowlConverges) {
  Tensor w({1}, {1.0}, true);
  Momentum opt({w}, {0.1, 0.9});
  int converged_at = -1;
  for (int step = 0; step < 200; ++step) {
    opt.zero_grad();
    scale(sum(mul(w, w)), 0.5).backward();
    opt.step();
    if (0.5 * w.values()[0] * w.values()[0] < 1e-6) {
      converged_at = step;
      break;
    }
  }
  EXPECT_GE(converged_at, 0);
}

TEST(MomentumTest, ShapeMismatchIsUsageError) {
  MomentumState s{{0.0}};
  std::vector<double> w(2), g(1);
  EXPECT_THROW(momentum_step(s, {}, w, g), UsageError);
}

TEST(OptimizerTest, ZeroGradientsLeaveParametersUnchanged) {
  Tensor a({3}, {1.0, 2.0, 3.0}, true);
  Tensor b({2}, {-1.0, 0.5}, true);
  Adadelta ada({a, b});
  Momentum mom({a, b});
  for (int i = 0; i < 5; ++i) {
    ada.step();
    mom.step();
  }
  EXPECT_EQ(std::vector<double>(a.values().begin(), a.values().end()),
            (std::vector<double>{1.0, 2.0, 3.0}));
  EXPECT_EQ(std::vector<double>(b.values().begin(), b.values().end()),
            (std::vector<double>{-1.0, 0.5}));
}

TEST(OptimizerTest, IdenticalRunsAreBitIdentical) {
  auto run = [] {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> dist;
    std::vector<double> init(16);
    for (double& v : init) v = dist(rng);
    Tensor w({4, 4}, init, true);
    Tensor x({4, 4}, init);
    Adadelta opt({w});
    for (int step = 0; step < 30; ++step) {
      opt.zero_grad();
      sum(mul(tanh(matmul(w, x)), x)).backward();
      opt.step();
    }
    return std::vector<double>(w.values().begin(), w.values().end());
  };
  EXPECT_EQ(run(), run());
}

TEST(OptimizerTest, ClipGradNormRescales) {
  Tensor a({2}, {0.0, 0.0}, true);
  sum(mul(a, Tensor({2}, {3.0, 4.0}))).backward();
  std::vector<Tensor> params{a};
  EXPECT_DOUBLE_EQ(clip_grad_norm(params, 1.0), 5.0);
  EXPECT_NEAR(a.grad()[0], 0.6, 1e-15);
  EXPECT_NEAR(a.grad()[1], 0.8, 1e-15);
  EXPECT_DOUBLE_EQ(clip_grad_norm(params, 10.0), 1.0);
  EXPECT_NEAR(a.grad()[0], 0.6, 1e-15);
}

}  // namespace
}  // namespace crnn
