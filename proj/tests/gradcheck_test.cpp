/*
 * Copyright 2026 The attnagg Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */


#include <gtest/gtest.h>

#include <chrono>

#include "attnagg/gradcheck.hpp"

namespace attnagg {
namespace {

const GradcheckResult& Find(const std::vector<GradcheckResult>& results, const std::string& name) {
  for (const auto& r : results) {
    if (r.component == name) return r;
  }
  static const GradcheckResult missing{"missing", 1e9, 0.0};
  ADD_FAILURE() << "no component " << name;
  return missing;
}

TEST(GradcheckTest, AllComponentsPassAcrossSeeds) {
  const auto start = std::chrono::steady_clock::now();
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    auto ops = OpGradcheck(seed);
    EXPECT_GE(ops.size(), 25u);
    for (const auto& r : ops) {
      EXPECT_TRUE(r.passed()) << r.component << " " << r.max_error;
      EXPECT_EQ(r.tolerance, kOpTolerance);
    }
    auto model = ModelGradcheck(seed);
    ASSERT_EQ(model.size(), 2u);
    for (const auto& r : model) {
      EXPECT_TRUE(r.passed()) << r.component << " " << r.max_error;
      EXPECT_EQ(r.tolerance, kModelTolerance);
    }
  }
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  EXPECT_LT(seconds, 60.0);
}

TEST(GradcheckTest, InjectedFaultIsCaught) {
  autodiff::SetGradientFault("conv2d");
  auto ops = OpGradcheck(4);
  auto model = ModelGradcheck(4);
  autodiff::SetGradientFault("");
  EXPECT_FALSE(Find(ops, "conv2d").passed());
  EXPECT_GT(Find(ops, "conv2d").max_error, 0.1);
  EXPECT_FALSE(Find(ops, "global_collapse_conv").passed());
  EXPECT_TRUE(Find(ops, "exp").passed());
  EXPECT_TRUE(Find(ops, "weighted_focal").passed());
  for (const auto& r : model) EXPECT_FALSE(r.passed()) << r.component;
  for (const auto& r : OpGradcheck(4)) EXPECT_TRUE(r.passed()) << r.component;
}

TEST(GradcheckTest, RelativeErrorFloor) {
  std::vector<double> a = {1e-9, 2.0}, n = {-1e-9, 2.0};
  EXPECT_NEAR(MaxRelativeError(a, n), 2e-6, 1e-18);
  std::vector<double> b = {1.0}, m = {1.1};
  EXPECT_NEAR(MaxRelativeError(b, m), 0.1 / 1.1, 1e-15);
}

}  // namespace
}  // namespace attnagg
