// Copyright 2026 The sambo Authors.
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

#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include <sambo/calibration.hpp>

#include "oracles.hpp"

using namespace sambo;

namespace {

TaskDataset sinusoid_task(std::mt19937_64& rng, Index T, const std::string& id, double amp = 1.0)
{
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double phase = 6.0 * u(rng);
    const double freq = 2.0 + 3.0 * u(rng);
    std::normal_distribution<double> noise(0.0, 0.05);
    TaskDataset d{id, oracle::uniform_matrix(rng, T, 2), Vector(T)};
    for (Index t = 0; t < T; ++t)
        d.targets[t] = amp * std::sin(freq * d.inputs(t, 0) + phase) * std::cos(2.0 * d.inputs(t, 1)) + noise(rng);
    return d;
}

std::vector<TaskDataset> fixture(unsigned seed, int n, Index T)
{
    std::mt19937_64 rng(seed);
    std::vector<TaskDataset> out;
    for (int i = 0; i < n; ++i)
        out.push_back(sinusoid_task(rng, T, "task" + std::to_string(i)));
    return out;
}

// Explicit loop over the 20 levels; std includes observation noise.
double calib_oracle(const Matrix& Xtr, const Vector& ytr, const Matrix& Xte, const Vector& yte, double l,
                    double nu, double sn)
{
    const auto post = oracle::dense_gp(Xtr, ytr, Xte, l, nu, sn);
    int hits = 0;
    for (int k = 0; k < 20; ++k) {
        const double alpha = 0.8 + 0.2 * k / 19.0;
        const double beta = k == 19 ? INFINITY : oracle::gaussian_two_sided_quantile(alpha);
        int covered = 0;
        for (Index j = 0; j < yte.size(); ++j) {
            const double s = std::sqrt(post.std[j] * post.std[j] + sn * sn);
            if (std::abs(yte[j] - post.mean[j]) <= beta * s)
                ++covered;
        }
        if (static_cast<double>(covered) / yte.size() >= (k == 19 ? 1.0 : alpha))
            ++hits;
    }
    return hits / 20.0;
}

std::pair<double, double> naive_task_metrics(const TaskDataset& d, double l, double nu, double sn)
{
    double calib = 0.0, sd = 0.0;
    for (const TaskDataset& o : {d, d.reversed()}) {
        const Index T = o.size();
        double c = 0.0, s = 0.0;
        for (Index t = 1; t < T; ++t) {
            const Matrix Xtr = o.inputs.topRows(t), Xte = o.inputs.bottomRows(T - t);
            const Vector ytr = o.targets.head(t), yte = o.targets.tail(T - t);
            c += calib_oracle(Xtr, ytr, Xte, yte, l, nu, sn);
            const auto post = oracle::dense_gp(Xtr, ytr, Xte, l, nu, sn);
            double acc = 0.0;
            for (double v : post.std)
                acc += std::sqrt(v * v + sn * sn);
            s += acc / static_cast<double>(T - t);
        }
        calib += 0.5 * c / static_cast<double>(T - 1);
        sd += 0.5 * s / static_cast<double>(T - 1);
    }
    return {calib, sd};
}

} // namespace

TEST(confidence_levels, twenty_levels_inclusive)
{
    const auto& a = confidence_levels();
    EXPECT_EQ(a.front(), 0.8);
    EXPECT_EQ(a.back(), 1.0);
    for (int k = 1; k < 20; ++k)
        EXPECT_NEAR(a[k] - a[k - 1], 0.2 / 19.0, 1e-15);
    EXPECT_TRUE(std::isinf(confidence_betas().back()));
}

TEST(calib_freq, huge_variance_is_fully_calibrated)
{
    auto tasks = fixture(11, 1, 8);
    const auto& d = tasks[0];
    EXPECT_EQ(calib_freq(d.head(3), d.tail(5), KernelConfig{0.3, 1e6, 0.1}), 1.0);
}

TEST(calib_freq, single_covered_point_is_fully_calibrated)
{
    TaskDataset train{"t", Matrix::Zero(1, 1), Vector::Zero(1)};
    Matrix xq(1, 1);
    xq << 0.05;
    TaskDataset test{"t", xq, Vector::Constant(1, 0.01)};
    EXPECT_EQ(calib_freq(train, test, KernelConfig{1.0, 1.0, 0.1}), 1.0);
}

TEST(calib_freq, single_far_point_only_meets_the_unit_level)
{
    TaskDataset train{"t", Matrix::Zero(1, 1), Vector::Zero(1)};
    TaskDataset test{"t", Matrix::Zero(1, 1), Vector::Constant(1, 50.0)};
    EXPECT_EQ(calib_freq(train, test, KernelConfig{1.0, 1.0, 0.1}), 1.0 / 20.0);
}

TEST(calib_freq, matches_enumeration_oracle_three_train_five_test)
{
    for (unsigned seed = 0; seed < 20; ++seed) {
        auto tasks = fixture(100 + seed, 1, 8);
        const auto& d = tasks[0];
        const double l = 0.15 + 0.02 * seed, nu = 0.3 + 0.1 * seed;
        const double got = calib_freq(d.head(3), d.tail(5), KernelConfig{l, nu, 0.1});
        const double want = calib_oracle(d.inputs.topRows(3), d.targets.head(3), d.inputs.bottomRows(5),
                                         d.targets.tail(5), l, nu, 0.1);
        EXPECT_EQ(got, want) << "seed " << seed;
    }
}

TEST(calib_freq, empty_test_throws)
{
    auto tasks = fixture(1, 1, 4);
    EXPECT_THROW(calib_freq(tasks[0], tasks[0].tail(0), KernelConfig{}), DimensionError);
}

TEST(avg_calib, two_points_average_forward_and_reversed)
{
    auto tasks = fixture(12, 1, 2);
    const auto& d = tasks[0];
    const KernelConfig cfg{0.2, 0.5, 0.1};
    const double fwd = calib_freq(d.head(1), d.tail(1), cfg);
    const double rev = calib_freq(d.tail(1), d.head(1), cfg);
    EXPECT_DOUBLE_EQ(avg_calib(tasks, cfg), 0.5 * (fwd + rev));
}

TEST(avg_calib, constant_targets_are_calibrated)
{
    std::mt19937_64 rng(3);
    std::vector<TaskDataset> tasks;
    for (int i = 0; i < 3; ++i)
        tasks.push_back({"c", oracle::uniform_matrix(rng, 10, 2), Vector::Constant(10, 0.7)});
    const KernelConfig cfg{0.5, 1.0, 0.1};
    EXPECT_EQ(avg_calib(tasks, cfg), 1.0);
    for (const auto& d : tasks)
        EXPECT_EQ(naive_task_metrics(d, 0.5, 1.0, 0.1).first, 1.0);
}

TEST(evaluate_params, matches_naive_double_loop)
{
    const auto tasks = fixture(21, 2, 12);
    for (auto [l, nu] : {std::pair{0.1, 1.0}, {0.3, 2.5}, {1.0, 1.0}, {0.05, 6.0}}) {
        const auto res = evaluate_params(tasks, KernelConfig{l, nu, 0.1});
        double c = 0.0, s = 0.0;
        for (std::size_t i = 0; i < tasks.size(); ++i) {
            const auto [ci, si] = naive_task_metrics(tasks[i], l, nu, 0.1);
            EXPECT_NEAR(res.per_task_calib[i], ci, 1e-12);
            EXPECT_NEAR(res.per_task_std[i], si, 1e-12);
            c += ci;
            s += si;
        }
        EXPECT_NEAR(res.avg_calib, c / 2.0, 1e-12);
        EXPECT_NEAR(res.avg_std, s / 2.0, 1e-12);
    }
}

TEST(evaluate_params, jitter_fallback_matches_per_split_conditioning)
{
    // Duplicated inputs with tiny noise force jitter on the full matrix.
    std::mt19937_64 rng(9);
    Matrix X = oracle::uniform_matrix(rng, 6, 1);
    X.row(4) = X.row(1);
    Vector y = oracle::uniform_matrix(rng, 6, 1, -1, 1);
    y[4] = y[1];
    const std::vector<TaskDataset> tasks{{"dup", X, y}};
    const KernelConfig cfg{0.3, 1.0, 1e-9};
    const auto res = evaluate_params(tasks, cfg);
    double c = 0.0, s = 0.0;
    for (const TaskDataset& o : {tasks[0], tasks[0].reversed()}) {
        for (Index t = 1; t < 6; ++t) {
            const auto prior = GPPrior::vanilla(cfg);
            const GaussianProcess gp(prior, o.inputs.topRows(t), o.targets.head(t));
            const Prediction p = gp.predict(Matrix(o.inputs.bottomRows(6 - t)));
            const Vector sd = predictive_std(p, prior);
            c += calib_freq_from_predictions(p.mean, sd, o.targets.tail(6 - t)) / 5.0;
            s += sd.mean() / 5.0;
        }
    }
    EXPECT_NEAR(res.avg_calib, 0.5 * c, 1e-12);
    EXPECT_NEAR(res.avg_std, 0.5 * s, 1e-12);
}

TEST(evaluate_params, independent_of_parallelism)
{
    const auto tasks = fixture(31, 5, 15);
    const KernelConfig cfg{0.2, 1.5, 0.1};
    const auto a = evaluate_params(tasks, cfg, 1);
    const auto b = evaluate_params(tasks, cfg, 8);
    EXPECT_EQ(a.avg_calib, b.avg_calib);
    EXPECT_EQ(a.avg_std, b.avg_std);
    EXPECT_EQ(a.per_task_calib, b.per_task_calib);
    EXPECT_EQ(a.per_task_std, b.per_task_std);
}

TEST(evaluate_params, composition_of_both_metrics)
{
    const auto tasks = fixture(32, 2, 10);
    const KernelConfig cfg{0.25, 1.2, 0.1};
    const auto r = evaluate_params(tasks, cfg);
    EXPECT_EQ(r.avg_calib, avg_calib(tasks, cfg));
    EXPECT_EQ(r.avg_std, avg_std(tasks, cfg));
}

TEST(evaluate_params, averages_equal_mean_of_breakdown_and_are_in_range)
{
    const auto tasks = fixture(33, 4, 9);
    const auto r = evaluate_params(tasks, KernelConfig{0.1, 1.0, 0.1});
    double c = 0.0, s = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
        c += r.per_task_calib[i];
        s += r.per_task_std[i];
    }
    EXPECT_DOUBLE_EQ(r.avg_calib, c / 4.0);
    EXPECT_DOUBLE_EQ(r.avg_std, s / 4.0);
    EXPECT_GE(r.avg_calib, 0.0);
    EXPECT_LE(r.avg_calib, 1.0);
    EXPECT_GE(r.avg_std, 0.0);
}

TEST(evaluate_params, invariant_to_task_permutation)
{
    auto tasks = fixture(34, 5, 8);
    const KernelConfig cfg{0.3, 2.0, 0.1};
    const auto a = evaluate_params(tasks, cfg);
    std::reverse(tasks.begin(), tasks.end());
    const auto b = evaluate_params(tasks, cfg);
    EXPECT_NEAR(a.avg_calib, b.avg_calib, 1e-15);
    EXPECT_NEAR(a.avg_std, b.avg_std, 1e-15);
}

TEST(evaluate_params, rejects_short_tasks)
{
    std::vector<TaskDataset> tasks{{"short", Matrix::Zero(1, 2), Vector::Zero(1)}};
    EXPECT_THROW(evaluate_params(tasks, KernelConfig{}), DimensionError);
    EXPECT_THROW(evaluate_params({}, KernelConfig{}), DimensionError);
}

TEST(avg_std, below_prior_bound_and_increasing_in_variance)
{
    const auto tasks = fixture(41, 3, 10);
    const double s1 = avg_std(tasks, KernelConfig{0.3, 1.0, 0.1});
    const double s4 = avg_std(tasks, KernelConfig{0.3, 4.0, 0.1});
    EXPECT_LT(s1, std::sqrt(1.0 + 0.01));
    EXPECT_GT(s4, s1);
}

TEST(avg_std, grid_monotone_in_variance_and_lengthscale)
{
    const auto tasks = fixture(42, 3, 10);
    const std::vector<double> ls{0.05, 0.1, 0.3, 1.0}, nus{1.0, 2.0, 4.0};
    for (std::size_t i = 0; i < ls.size(); ++i)
        for (std::size_t j = 0; j < nus.size(); ++j) {
            const double s = avg_std(tasks, KernelConfig{ls[i], nus[j], 0.1});
            if (j + 1 < nus.size())
                EXPECT_LT(s, avg_std(tasks, KernelConfig{ls[i], nus[j + 1], 0.1}));
            if (i + 1 < ls.size())
                EXPECT_GE(s, avg_std(tasks, KernelConfig{ls[i + 1], nus[j], 0.1}) - 1e-12);
        }
}

TEST(avg_calib, qualitative_grid_corners)
{
    // Standardized wiggly data: a smooth, narrow prior is over-confident while
    // a short lengthscale with a wide prior covers everything.
    std::mt19937_64 rng(51);
    std::vector<TaskDataset> tasks;
    for (int i = 0; i < 5; ++i)
        tasks.push_back(sinusoid_task(rng, 20, "w", 1.6));
    EXPECT_LT(avg_calib(tasks, KernelConfig{3.0, 0.05, 0.05}), 0.5);
    EXPECT_EQ(avg_calib(tasks, KernelConfig{0.01, 6.0, 0.05}), 1.0);
}
