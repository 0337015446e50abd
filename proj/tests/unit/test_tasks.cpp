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

#include <Eigen/Dense>
#include <algorithm>
#include <set>

#include "support.hpp"

namespace airfl {
namespace {

using testing::finite_difference_gradient;
using testing::relative_error;

Eigen::MatrixXd eigen_gram(const LinearTask& task, std::size_t n) {
  const Matrix& A = task.device(n).A;
  Eigen::MatrixXd e(A.rows(), A.cols());
  for (std::size_t i = 0; i < A.rows(); ++i)
    for (std::size_t j = 0; j < A.cols(); ++j) e(i, j) = A(i, j);
  return e.transpose() * e / static_cast<double>(A.rows());
}

LinearTask one_device_task(Matrix A, ParameterVector b) {
  std::vector<LinearDevice> devs;
  devs.push_back({std::move(A), std::move(b)});
  return LinearTask(std::move(devs), {1.0}, ParameterVector{}, 0.0);
}

// ---------------------------------------------------------------------------
// Linear task generation.

TEST(LinearTask, ReferenceConfigurationHasValidSizesAndWeights) {
  const LinearTask task = generate_linear_task(25, 100, DeviceSizeSpec{300, 1200, 500}, 0.2, SeededStream(1, "t"));
  double wsum = 0.0;
  std::size_t total = 0;
  for (std::size_t n = 0; n < task.num_devices(); ++n) {
    EXPECT_GE(task.device_size(n), 300u);
    EXPECT_LE(task.device_size(n), 1200u);
    EXPECT_GT(task.weight(n), 0.0);
    wsum += task.weight(n);
    total += task.device_size(n);
  }
  EXPECT_NEAR(wsum, 1.0, 1e-12);
  EXPECT_EQ(total, 25u * 500u);
}

TEST(LinearTask, NoiselessTaskRecoversGroundTruth) {
  const LinearTask task = testing::small_linear_task(5, 3, 6, 0.0);
  const auto opt = closed_form_optimum(task);
  EXPECT_LT(relative_error(opt.theta, task.ground_truth()), 1e-10);
  EXPECT_NEAR(opt.loss, 0.0, 1e-20);
  EXPECT_NEAR(global_loss(task, task.ground_truth()), 0.0, 1e-25);
}

TEST(LinearTask, LossAtGroundTruthIsHalfTheNoiseVariance) {
  // Residuals at x0 are the sample noise, so the expected per-sample loss is σ²/2.
  const double s2 = 0.1;
  const LinearTask task = generate_linear_task(2, 2, DeviceSizeSpec{20000, 20000, 20000}, s2, SeededStream(1, "t"));
  RunningStats per_sample;
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t i = 0; i < task.device_size(n); ++i) per_sample.push(task.sample_loss(n, i, task.ground_truth()));
  EXPECT_LE(std::abs(global_loss(task, task.ground_truth()) - s2 / 2.0), 3.0 * per_sample.standard_error());
}

TEST(LinearTask, InfeasibleSizeTripleIsRejected) {
  EXPECT_THROW(generate_linear_task(3, 2, DeviceSizeSpec{10, 20, 30}, 0.1, SeededStream(1, "t")), ParameterError);
  EXPECT_THROW(generate_linear_task(3, 2, DeviceSizeSpec{10, 5, 8}, 0.1, SeededStream(1, "t")), ParameterError);
}

TEST(LinearTask, DeviceSizesHitTheRequestedMean) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    SeededStream s(seed, "sizes");
    const auto sizes = draw_device_sizes(25, DeviceSizeSpec{300, 1200, 500}, s);
    std::size_t total = 0;
    for (auto d : sizes) {
      EXPECT_GE(d, 300u);
      EXPECT_LE(d, 1200u);
      total += d;
    }
    EXPECT_EQ(total, 25u * 500u);
  }
}

// ---------------------------------------------------------------------------
// Losses and gradients.

TEST(GlobalLoss, HandComputedValue) {
  const LinearTask task = one_device_task(Matrix::identity(2), ParameterVector{1.0, 2.0});
  EXPECT_DOUBLE_EQ(global_loss(task, ParameterVector{0.0, 0.0}), 1.25);
}

TEST(GlobalLoss, EqualsWeightedMeanOfSampleLosses) {
  const LinearTask task = testing::small_linear_task(7);
  SeededStream s(7, "theta");
  const ParameterVector theta = testing::random_point(task.dim(), s);
  long double acc = 0.0L;
  for (std::size_t n = 0; n < task.num_devices(); ++n) {
    long double dev = 0.0L;
    for (std::size_t i = 0; i < task.device_size(n); ++i) {
      const double r = task.device(n).A.multiply(theta)[i] - task.device(n).b[i];
      dev += 0.5L * r * r;
    }
    acc += task.weight(n) * dev / static_cast<long double>(task.device_size(n));
  }
  EXPECT_NEAR(global_loss(task, theta), static_cast<double>(acc), 1e-12 * static_cast<double>(acc));
  EXPECT_THROW((void)global_loss(task, ParameterVector(task.dim() + 1)), ShapeError);
}

TEST(MinibatchGradient, FullBatchIsTheAnalyticGradient) {
  const LinearTask task = testing::small_linear_task(8);
  SeededStream s(8, "theta");
  const ParameterVector theta = testing::random_point(task.dim(), s);
  for (std::size_t n = 0; n < task.num_devices(); ++n) {
    const auto& dev = task.device(n);
    ParameterVector expected = dev.A.multiply_transposed(dev.A.multiply(theta) - dev.b);
    expected *= 1.0 / static_cast<double>(task.device_size(n));
    SeededStream bs(1, "batch");
    const ParameterVector g = minibatch_gradient(task, n, theta, task.device_size(n), bs);
    EXPECT_LT(relative_error(g, expected), 1e-12);
  }
}

TEST(MinibatchGradient, VanishesAtTheDeviceOptimum) {
  const LinearTask task = testing::small_linear_task(9, 1);
  const auto opt = closed_form_optimum(task);
  SeededStream bs(1, "batch");
  EXPECT_LT(minibatch_gradient(task, 0, opt.theta, task.device_size(0), bs).norm(), 1e-10);
}

TEST(MinibatchGradient, BatchSizeOutOfRange) {
  const LinearTask task = testing::small_linear_task(9);
  SeededStream bs(1, "batch");
  const ParameterVector theta(task.dim());
  EXPECT_THROW(minibatch_gradient(task, 0, theta, 0, bs), ParameterError);
  EXPECT_THROW(minibatch_gradient(task, 0, theta, task.device_size(0) + 1, bs), ParameterError);
}

TEST(MinibatchGradient, IsUnbiased) {
  const LinearTask task = testing::small_linear_task(10);
  SeededStream s(10, "theta");
  const ParameterVector theta = testing::random_point(task.dim(), s);
  const ParameterVector full = device_gradient(task, 0, theta);
  VectorRunningStats stats(task.dim());
  SeededStream bs(10, "batch");
  for (int k = 0; k < 10000; ++k) stats.push(minibatch_gradient(task, 0, theta, 5, bs));
  const ParameterVector se = stats.standard_error();
  for (std::size_t i = 0; i < task.dim(); ++i) EXPECT_LE(std::abs(stats.mean()[i] - full[i]), 3.0 * se[i]) << i;
}

TEST(MinibatchGradient, SamplesWithoutReplacement) {
  SeededStream s(1, "b");
  for (int k = 0; k < 100; ++k) {
    auto idx = sample_without_replacement(10, 6, s);
    std::sort(idx.begin(), idx.end());
    EXPECT_EQ(std::adjacent_find(idx.begin(), idx.end()), idx.end());
    EXPECT_LT(idx.back(), 10u);
  }
}

template <typename Task>
void expect_finite_difference_agreement(const Task& task, std::uint64_t seed, double scale) {
  SeededStream s(seed, "fd_points");
  for (int k = 0; k < 20; ++k) {
    const ParameterVector theta = testing::random_point(task.dim(), s, scale);
    const ParameterVector g = global_gradient(task, theta);
    EXPECT_LT(relative_error(finite_difference_gradient(task, theta), g), 1e-5) << "point " << k;
  }
}

TEST(GradientConsistency, LinearTask) { expect_finite_difference_agreement(testing::small_linear_task(11), 11, 1.0); }
TEST(GradientConsistency, LogisticTask) {
  expect_finite_difference_agreement(testing::small_logistic_task(12), 12, 0.5);
}
TEST(GradientConsistency, MlpTask) { expect_finite_difference_agreement(testing::small_mlp_task(13), 13, 0.5); }

// ---------------------------------------------------------------------------
// Closed-form optimum and curvature.

TEST(ClosedFormOptimum, IdentityDesign) {
  const LinearTask task = one_device_task(Matrix::identity(2), ParameterVector{1.0, 2.0});
  const auto opt = closed_form_optimum(task);
  EXPECT_NEAR(opt.theta[0], 1.0, 1e-14);
  EXPECT_NEAR(opt.theta[1], 2.0, 1e-14);
  EXPECT_NEAR(opt.loss, 0.0, 1e-28);
}

TEST(ClosedFormOptimum, ReferenceConfigurationIsStationary) {
  const LinearTask task = generate_linear_task(25, 100, DeviceSizeSpec{300, 1200, 500}, 0.2, SeededStream(1, "t"));
  const auto opt = closed_form_optimum(task);
  EXPECT_LE(opt.grad_norm, 1e-8);
  EXPECT_LE(global_gradient(task, opt.theta).norm(), 1e-8);
}

TEST(ClosedFormOptimum, NoPerturbationDoesBetter) {
  const LinearTask task = testing::small_linear_task(14);
  const auto opt = closed_form_optimum(task);
  SeededStream s(14, "delta");
  for (int k = 0; k < 100; ++k) {
    const ParameterVector delta = testing::random_point(task.dim(), s, 1e-3 * (1 + k));
    EXPECT_GE(global_loss(task, opt.theta + delta), opt.loss);
  }
  EXPECT_LE(opt.loss, global_loss(task, task.ground_truth()));
}

TEST(ClosedFormOptimum, SingularGramIsDegenerate) {
  Matrix A(1, 2);
  A(0, 0) = 1.0;
  A(0, 1) = 1.0;
  EXPECT_THROW(closed_form_optimum(one_device_task(A, ParameterVector{1.0})), DegenerateError);
}

TEST(ConvexityConstants, IdentityDesignIsPerfectlyConditioned) {
  // The loss averages over D = 3 rows, so both curvatures equal 1/3.
  const auto cc = convexity_constants(one_device_task(Matrix::identity(3), ParameterVector{1.0, 1.0, 1.0}));
  EXPECT_NEAR(cc.mu, 1.0 / 3.0, 1e-12);
  EXPECT_NEAR(cc.L, 1.0 / 3.0, 1e-12);
}

TEST(ConvexityConstants, KnownSingularValues) {
  // A has singular values (2, 1) and D = 2 rows, so L = 4/2 and mu = 1/2.
  Matrix A(2, 2);
  A(0, 0) = 2.0;
  A(1, 1) = 1.0;
  const auto cc = convexity_constants(one_device_task(A, ParameterVector{0.0, 0.0}));
  EXPECT_NEAR(cc.L, 2.0, 1e-12);
  EXPECT_NEAR(cc.mu, 0.5, 1e-12);
}

TEST(ConvexityConstants, MatchDenseEigensolver) {
  const LinearTask task = testing::small_linear_task(15, 5, 12);
  const auto cc = convexity_constants(task);
  double L = 0.0;
  Eigen::MatrixXd pooled = Eigen::MatrixXd::Zero(12, 12);
  for (std::size_t n = 0; n < task.num_devices(); ++n) {
    const Eigen::MatrixXd g = eigen_gram(task, n);
    L = std::max(L, Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(g).eigenvalues().maxCoeff());
    pooled += task.weight(n) * g;
  }
  const double mu = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(pooled).eigenvalues().minCoeff();
  EXPECT_NEAR(cc.L, L, 1e-6);
  EXPECT_NEAR(cc.mu, mu, 1e-6);
  EXPECT_LE(cc.mu, cc.L);
}

TEST(ConvexityConstants, StrongConvexityAndSmoothnessWitnesses) {
  const LinearTask task = testing::small_linear_task(16, 5, 10);
  const auto cc = convexity_constants(task);
  SeededStream s(16, "pairs");
  for (int k = 0; k < 100; ++k) {
    const ParameterVector x = testing::random_point(task.dim(), s, 2.0);
    const ParameterVector y = testing::random_point(task.dim(), s, 2.0);
    const ParameterVector gx = global_gradient(task, x);
    const ParameterVector gy = global_gradient(task, y);
    const double lower = global_loss(task, x) + gx.dot(y - x) + 0.5 * cc.mu * (y - x).squared_norm();
    const double fy = global_loss(task, y);
    EXPECT_GE(fy, lower - 1e-9 * std::abs(fy));
    EXPECT_LE((gx - gy).norm(), cc.L * (x - y).norm() * (1.0 + 1e-12));
  }
}

// ---------------------------------------------------------------------------
// Classification models and partitions.

TEST(MlpModel, ZeroWeightsGiveUniformScores) {
  const MlpModel m(5, 4, 3);
  const ParameterVector zero(m.dim());
  EXPECT_EQ(m.dim(), 4u * 5u + 4u + 3u * 4u + 3u);
  const double x[5] = {0.3, -1.0, 2.0, 0.1, 0.0};
  const auto s = m.scores(zero, x);
  for (double v : s) EXPECT_EQ(v, s[0]);
  EXPECT_NEAR(m.loss(zero, x, 1), std::log(3.0), 1e-15);
}

Dataset toy_labelled(std::size_t per_label, int labels) {
  std::vector<double> f;
  std::vector<int> y;
  for (int l = 0; l < labels; ++l)
    for (std::size_t k = 0; k < per_label; ++k) {
      f.push_back(static_cast<double>(l));
      y.push_back(l);
    }
  return Dataset(1, std::move(f), std::move(y));
}

void expect_partition_covers(const DataPartition& part, std::vector<std::size_t> subset) {
  std::vector<std::size_t> all;
  for (const auto& d : part.device_indices) all.insert(all.end(), d.begin(), d.end());
  std::sort(all.begin(), all.end());
  std::sort(subset.begin(), subset.end());
  EXPECT_EQ(all, subset);
}

TEST(LabelShards, OneShardPerDeviceGivesOneLabelEach) {
  const Dataset ds = toy_labelled(30, 10);
  SeededStream s(1, "p");
  const auto subset = testing::all_indices(ds.size());
  const auto part = partition_label_shards(ds, subset, 10, 1, s);
  std::set<int> seen;
  for (std::size_t n = 0; n < 10; ++n) {
    const auto labels = device_labels(ds, part, n);
    ASSERT_EQ(labels.size(), 1u);
    seen.insert(*labels.begin());
  }
  EXPECT_EQ(seen.size(), 10u);
  expect_partition_covers(part, subset);
}

TEST(LabelShards, TwoShardsPerDeviceGiveAtMostTwoLabels) {
  const Dataset ds = toy_labelled(50, 10);
  SeededStream s(2, "p");
  std::vector<std::size_t> subset;
  for (std::size_t i = 0; i < ds.size(); i += 2) subset.push_back(i);
  const auto part = partition_label_shards(ds, subset, 50, 2, s);
  for (std::size_t n = 0; n < 50; ++n) EXPECT_LE(device_labels(ds, part, n).size(), 2u);
  expect_partition_covers(part, subset);
}

TEST(LabelShards, FullAssignmentCoversEveryLabelOnEveryDevice) {
  // One device holding every shard is the degenerate IID-like extreme.
  const Dataset ds = toy_labelled(12, 4);
  SeededStream s(3, "p");
  const auto part = partition_label_shards(ds, testing::all_indices(ds.size()), 1, 8, s);
  EXPECT_EQ(device_labels(ds, part, 0).size(), 4u);
  // Two devices, each label split into two shards, each device given four shards.
  SeededStream s2(4, "p");
  const auto part2 = partition_label_shards(ds, testing::all_indices(ds.size()), 2, 4, s2);
  expect_partition_covers(part2, testing::all_indices(ds.size()));
}

TEST(LabelShards, IndivisibleShardArithmetic) {
  const Dataset ds = toy_labelled(10, 3);
  SeededStream s(5, "p");
  EXPECT_THROW(partition_label_shards(ds, testing::all_indices(ds.size()), 2, 2, s), ParameterError);
}

TEST(IidPartition, DisjointAndBalanced) {
  SeededStream s(6, "p");
  const auto subset = testing::all_indices(103);
  const auto part = partition_iid(subset, 10, s);
  for (const auto& d : part.device_indices) {
    EXPECT_GE(d.size(), 10u);
    EXPECT_LE(d.size(), 11u);
  }
  expect_partition_covers(part, subset);
}

TEST(TeacherDataset, BinaryLabelsAreBalanced) {
  const Dataset ds = generate_teacher_dataset(1000, 8, 6, SeededStream(7, "d"));
  std::size_t ones = 0;
  for (int y : ds.labels()) ones += y == 1 ? 1 : 0;
  EXPECT_EQ(ones, 500u);
  EXPECT_EQ(ds.num_classes(), 2);
}

TEST(TrainTestSplit, DisjointCover) {
  SeededStream s(8, "split");
  const auto sp = split_train_test(200, 0.1, s);
  EXPECT_EQ(sp.test.size(), 20u);
  std::vector<std::size_t> all = sp.train;
  all.insert(all.end(), sp.test.begin(), sp.test.end());
  std::sort(all.begin(), all.end());
  EXPECT_EQ(all, testing::all_indices(200));
}

}  // namespace
}  // namespace airfl
