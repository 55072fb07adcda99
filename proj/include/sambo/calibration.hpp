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

#ifndef SAMBO_CALIBRATION_HPP
#define SAMBO_CALIBRATION_HPP

#include <array>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <sambo/common.hpp>
#include <sambo/gp.hpp>

namespace sambo {

constexpr int num_confidence_levels = 20;

/// 20 equally spaced confidence levels from 0.8 to 1.0, both included.
inline const std::array<double, num_confidence_levels>& confidence_levels()
{
    static const auto levels = [] {
        std::array<double, num_confidence_levels> a{};
        for (int k = 0; k < num_confidence_levels; ++k)
            a[k] = 0.8 + 0.2 * k / (num_confidence_levels - 1);
        a.back() = 1.0;
        return a;
    }();
    return levels;
}

/// beta(alpha) for every level; the last entry is +inf.
inline const std::array<double, num_confidence_levels>& confidence_betas()
{
    static const auto betas = [] {
        std::array<double, num_confidence_levels> b{};
        const auto& a = confidence_levels();
        for (int k = 0; k < num_confidence_levels; ++k)
            b[k] = a[k] < 1.0 ? beta_of_alpha(a[k]) : std::numeric_limits<double>::infinity();
        return b;
    }();
    return betas;
}

/// Fraction of levels alpha whose empirical coverage of the test targets is
/// at least alpha. Intervals are closed: mean +- beta(alpha) * std.
inline double calib_freq_from_predictions(const Vector& mean, const Vector& std, const Vector& y)
{
    if (y.size() == 0)
        throw DimensionError("calib_freq: empty test set");
    const auto& levels = confidence_levels();
    const auto& betas = confidence_betas();
    const double n = static_cast<double>(y.size());
    int hits = 0;
    for (int k = 0; k < num_confidence_levels; ++k) {
        Index covered = 0;
        for (Index j = 0; j < y.size(); ++j)
            if (std::isinf(betas[k]) || std::abs(y[j] - mean[j]) <= betas[k] * std[j])
                ++covered;
        if (static_cast<double>(covered) / n >= levels[k])
            ++hits;
    }
    return static_cast<double>(hits) / num_confidence_levels;
}

/// Observation predictive std sqrt(sigma_t(x)^2 + sigma^2).
inline Vector predictive_std(const Prediction& p, const GPPrior& prior)
{
    return (p.std.array().square() + prior.noise_variance()).sqrt().matrix();
}

inline double calib_freq(const TaskDataset& train, const TaskDataset& test, const GPPrior& prior)
{
    if (test.size() == 0)
        throw DimensionError("calib_freq: empty test set");
    const GaussianProcess gp(prior, train.inputs, train.targets);
    const Prediction p = gp.predict(test.inputs);
    return calib_freq_from_predictions(p.mean, predictive_std(p, prior), test.targets);
}

inline double calib_freq(const TaskDataset& train, const TaskDataset& test, const KernelConfig& cfg)
{
    return calib_freq(train, test, GPPrior::vanilla(cfg));
}

struct MetricsResult {
    double avg_calib = 0.0;
    double avg_std = 0.0;
    std::vector<double> per_task_calib;
    std::vector<double> per_task_std;
};

namespace detail {

struct OrderingSums {
    double calib = 0.0; // mean over splits
    double std = 0.0;   // mean over splits of the per-split mean std
};

/// All prefix/suffix splits of one ordering. The prefix factor of K is the
/// leading block of the full factor, so one factorization serves every split
/// unless jitter was needed, in which case each split is conditioned alone.
inline OrderingSums split_metrics(const TaskDataset& d, const GPPrior& prior)
{
    const Index T = d.size();
    const Embedding e = embed(prior, d.inputs);
    Matrix K = kernel_matrix(prior, e.features, e.features);
    Matrix Ky = K;
    Ky.diagonal().array() += prior.noise_variance();
    const RobustCholesky full(Ky);
    const Vector r = d.targets - e.mean;

    OrderingSums out;
    for (Index t = 1; t < T; ++t) {
        const Index m = T - t;
        Vector mean, sd;
        if (full.jitter == 0.0) {
            const Matrix Lt = full.L().topLeftCorner(t, t);
            const auto tri = Lt.triangularView<Eigen::Lower>();
            const Vector w = tri.solve(r.head(t));
            const Matrix V = tri.solve(K.block(0, t, t, m));
            mean = e.mean.tail(m) + V.transpose() * w;
            const Vector var = (Vector::Constant(m, prior.variance) - V.colwise().squaredNorm().transpose()).cwiseMax(0.0);
            sd = (var.array() + prior.noise_variance()).sqrt().matrix();
        } else {
            const GaussianProcess gp(prior, d.inputs.topRows(t), d.targets.head(t));
            Embedding q{e.features.bottomRows(m), e.mean.tail(m)};
            const Prediction p = gp.predict(q);
            mean = p.mean;
            sd = predictive_std(p, prior);
        }
        out.calib += calib_freq_from_predictions(mean, sd, d.targets.tail(m));
        out.std += sd.mean();
    }
    out.calib /= static_cast<double>(T - 1);
    out.std /= static_cast<double>(T - 1);
    return out;
}

} // namespace detail

/// Both metrics over all tasks, all splits, given and reversed orderings.
/// Work is spread over (task, ordering) jobs; the reduction runs in task order
/// so the result does not depend on `parallelism`.
inline MetricsResult evaluate_params(const std::vector<TaskDataset>& datasets, const GPPrior& prior,
                                     int parallelism = 1)
{
    if (datasets.empty())
        throw DimensionError("evaluate_params: no datasets");
    for (const auto& d : datasets) {
        if (d.size() < 2)
            throw DimensionError("evaluate_params: task '" + d.task_id + "' has fewer than 2 points");
        if (d.inputs.rows() != d.size())
            throw DimensionError("evaluate_params: task '" + d.task_id + "' inputs/targets length mismatch");
    }
    const Index n = static_cast<Index>(datasets.size());
    std::vector<detail::OrderingSums> jobs(static_cast<std::size_t>(2 * n));
    parallel_for(2 * n, parallelism, [&](Index j) {
        const auto& d = datasets[static_cast<std::size_t>(j / 2)];
        jobs[j] = detail::split_metrics(j % 2 == 0 ? d : d.reversed(), prior);
    });

    MetricsResult res;
    for (Index i = 0; i < n; ++i) {
        const auto& f = jobs[2 * i];
        const auto& b = jobs[2 * i + 1];
        res.per_task_calib.push_back(0.5 * (f.calib + b.calib));
        res.per_task_std.push_back(0.5 * (f.std + b.std));
    }
    for (Index i = 0; i < n; ++i) {
        res.avg_calib += res.per_task_calib[i];
        res.avg_std += res.per_task_std[i];
    }
    res.avg_calib /= static_cast<double>(n);
    res.avg_std /= static_cast<double>(n);
    return res;
}

inline MetricsResult evaluate_params(const std::vector<TaskDataset>& datasets, const KernelConfig& cfg,
                                     int parallelism = 1)
{
    return evaluate_params(datasets, GPPrior::vanilla(cfg), parallelism);
}

inline double avg_calib(const std::vector<TaskDataset>& datasets, const KernelConfig& cfg, int parallelism = 1)
{
    return evaluate_params(datasets, cfg, parallelism).avg_calib;
}

inline double avg_std(const std::vector<TaskDataset>& datasets, const KernelConfig& cfg, int parallelism = 1)
{
    return evaluate_params(datasets, cfg, parallelism).avg_std;
}

} // namespace sambo

#endif
