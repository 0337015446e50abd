// Copyright 2026 The AirFL Authors
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

#include <cmath>

#include "airfl/lr.hpp"

namespace airfl {
namespace {

TEST(LrValue, ScheduleExamples) {
  EXPECT_DOUBLE_EQ(lr_value(LrSchedule::corollary5(1.0, 1.0), 0), 1.0);
  EXPECT_DOUBLE_EQ(lr_value(LrSchedule::inverse_time(0.1, 0.002), 0), 0.1);
  EXPECT_DOUBLE_EQ(lr_value(LrSchedule::inverse_time(0.1, 0.002), 500), 0.05);
  const auto c = LrSchedule::constant(0.3);
  for (std::size_t t : {0u, 1u, 1000u}) EXPECT_EQ(lr_value(c, t), 0.3);
}

TEST(LrValue, CorollarySchedules) {
  // 6/(E mu (tau + t)) with tau = 3L/mu; at t = 0 this is 2/(E L).
  const auto s1 = LrSchedule::corollary1(0.5, 2.0, 5);
  EXPECT_NEAR(lr_value(s1, 0), 2.0 / (5.0 * 2.0), 1e-15);
  EXPECT_NEAR(lr_value(s1, 10), 6.0 / (5.0 * 0.5 * (12.0 + 10.0)), 1e-15);
  const auto s3 = LrSchedule::sqrt_ratio(2.0, 25, 5, 500);
  EXPECT_NEAR(lr_value(s3, 7), std::sqrt(25.0 / 2500.0) / 2.0, 1e-15);
}

TEST(LrValue, InverseTimeMeetsTheSummabilityConditions) {
  const auto s = LrSchedule::inverse_time(0.1, 0.002);
  double sum = 0.0, sum_sq = 0.0;
  double sum_half = 0.0, sum_sq_half = 0.0;
  for (std::size_t t = 0; t < 2000000; ++t) {
    const double e = lr_value(s, t);
    EXPECT_GT(e, 0.0);
    sum += e;
    sum_sq += e * e;
    if (t == 999999) {
      sum_half = sum;
      sum_sq_half = sum_sq;
    }
  }
  // Each doubling of the horizon adds about (eta0/a) ln 2 = 34.7, so the sum is unbounded.
  EXPECT_GT(sum - sum_half, 30.0);
  EXPECT_LT(sum_sq - sum_sq_half, 1e-3 * sum_sq);  // tail of a convergent series
}

TEST(LrValue, InvalidParameters) {
  EXPECT_THROW(lr_value(LrSchedule::corollary5(0.0, 1.0), 0), ParameterError);
  EXPECT_THROW(lr_value(LrSchedule::corollary1(2.0, 1.0, 1), 0), ParameterError);
  EXPECT_THROW(lr_value(LrSchedule::constant(-1.0), 0), ParameterError);
  EXPECT_THROW(lr_value(LrSchedule::inverse_time(0.1, -1.0), 0), ParameterError);
}

TEST(LrCaps, ClosedForms) {
  EXPECT_DOUBLE_EQ(theorem1_lr_cap(2.0, 1, 1.0), 0.25);
  // E = 5, beta1 = 1: min{1/(2 sqrt(2*5*4*3)), 1/20}
  EXPECT_NEAR(theorem1_lr_cap(2.0, 5, 1.0), std::min(1.0 / (2.0 * std::sqrt(120.0)), 0.05), 1e-15);
  EXPECT_NEAR(theorem5_lr_cap(2.0, 5, 1.0), std::min(1.0 / (2.0 * std::sqrt(200.0)), 0.025), 1e-15);
  EXPECT_THROW(theorem1_lr_cap(1.0, 2, 0.5), ParameterError);
}

TEST(LrCaps, CorollaryStartExceedsTheCap) {
  // The decaying multi-step schedule starts at 2/(EL), four times 1/(2LE).
  const double L = 3.0;
  const std::size_t E = 4;
  EXPECT_NEAR(lr_value(LrSchedule::corollary1(1.0, L, E), 0) / theorem1_lr_cap(L, E, 1.0),
              4.0 * (1.0 / (2.0 * L * E)) / theorem1_lr_cap(L, E, 1.0), 1e-12);
  EXPECT_GT(lr_value(LrSchedule::corollary1(1.0, L, E), 0), theorem1_lr_cap(L, E, 1.0));
}

}  // namespace
}  // namespace airfl
