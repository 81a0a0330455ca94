// Copyright 2026 The pair-toolkit Authors.
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

#include <gtest/gtest.h>

#include "pair/optim.hpp"

namespace {

using namespace pair;

TEST(Adam, MatchesScalarReference) {
  // Reference: Adam on f(x) = (x - 3)^2 written out for one scalar.
  double ref_x = 0.5, m = 0, v = 0;
  std::vector<double> x{0.5}, g(1);
  Adam<double> adam({1});
  const double lr = 0.05, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  for (int t = 1; t <= 200; ++t) {
    const double grad = 2 * (ref_x - 3);
    m = b1 * m + (1 - b1) * grad;
    v = b2 * v + (1 - b2) * grad * grad;
    ref_x -= lr * (m / (1 - std::pow(b1, t))) / (std::sqrt(v / (1 - std::pow(b2, t))) + eps);

    g[0] = 2 * (x[0] - 3);
    std::vector<double>* p[] = {&x};
    const std::vector<double>* gp[] = {&g};
    adam.step(p, gp, lr);
    ASSERT_NEAR(x[0], ref_x, 1e-12) << "step " << t;
  }
  EXPECT_NEAR(x[0], 3.0, 1e-2);
}

TEST(Adam, ZeroLearningRateLeavesParameters) {
  std::vector<float> x{1.f, 2.f}, g{0.3f, -0.7f};
  Adam<float> adam({2});
  std::vector<float>* p[] = {&x};
  const std::vector<float>* gp[] = {&g};
  adam.step(p, gp, 0.0);
  EXPECT_EQ(x, (std::vector<float>{1.f, 2.f}));
  EXPECT_EQ(adam.steps(), 1u);
}

TEST(Adam, RejectsShapeMismatch) {
  std::vector<float> x{1.f}, g{0.3f, 1.f};
  Adam<float> adam({1});
  std::vector<float>* p[] = {&x};
  const std::vector<float>* gp[] = {&g};
  EXPECT_THROW(adam.step(p, gp, 0.1), Error);
}

TEST(Schedule, WarmupThenLinearDecay) {
  const std::uint64_t total = 100;
  EXPECT_EQ(scheduled_lr(1e-3, 0, total, 0.1), 0.0);
  EXPECT_EQ(scheduled_lr(1e-3, total, total, 0.1), 0.0);
  EXPECT_DOUBLE_EQ(scheduled_lr(1e-3, 5, total, 0.1), 5e-4);
  EXPECT_DOUBLE_EQ(scheduled_lr(1e-3, 10, total, 0.1), 1e-3);
  EXPECT_DOUBLE_EQ(scheduled_lr(1e-3, 55, total, 0.1), 5e-4);
  double prev = -1;
  for (std::uint64_t s = 0; s <= 10; ++s) {
    const double lr = scheduled_lr(1.0, s, total, 0.1);
    EXPECT_GT(lr, prev);
    prev = lr;
  }
  for (std::uint64_t s = 11; s <= total; ++s) {
    const double lr = scheduled_lr(1.0, s, total, 0.1);
    EXPECT_LT(lr, prev);
    prev = lr;
  }
  EXPECT_EQ(scheduled_lr(2.0, 0, 10, 0.0), 2.0);
  // Short schedules still warm up: ceil(0.1 * 8) = 1 step.
  EXPECT_EQ(scheduled_lr(1.0, 0, 8, 0.1), 0.0);
  EXPECT_EQ(scheduled_lr(1.0, 1, 8, 0.1), 1.0);
  EXPECT_EQ(scheduled_lr(1.0, 3, 30, 0.1), 1.0);
}

}  // namespace
