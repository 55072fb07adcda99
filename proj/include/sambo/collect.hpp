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

#ifndef SAMBO_COLLECT_HPP
#define SAMBO_COLLECT_HPP

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <sambo/common.hpp>
#include <sambo/environments.hpp>
#include <sambo/safe_bo.hpp>

namespace sambo {

/// Meta-training data sizes and the conservative constraint lengthscale per
/// family.
struct FamilyDefaults {
    Index tasks;
    Index rows;
    double q_lengthscale;
};

inline FamilyDefaults family_defaults(const std::string& family)
{
    if (family == "camelback")
        return {40, 100, 0.5};
    if (family == "eggholder")
        return {40, 200, 0.4};
    if (family == "argus")
        return {20, 400, 0.4};
    throw DomainError("env: unknown family '" + family + "'");
}

/// Seed of meta-training task i. Test tasks use a disjoint stream.
inline std::uint64_t meta_task_seed(std::uint64_t seed, Index i)
{
    return derive_seed(seed, static_cast<std::uint64_t>(i));
}

inline std::uint64_t test_task_seed(std::uint64_t seed, Index j)
{
    return derive_seed(seed, 1'000'000 + static_cast<std::uint64_t>(j));
}

/// Standardizer fit on the task's own safe pilot sample.
inline Standardizer pilot_standardizer(const EnvTask& t)
{
    const auto pilot = detail::pilot_sample(t);
    MetaTaskData d;
    d.inputs.resize(static_cast<Index>(pilot.size()), t.bounds.dim());
    d.f.resize(d.inputs.rows());
    d.q.resize(d.inputs.rows());
    for (std::size_t i = 0; i < pilot.size(); ++i) {
        d.inputs.row(static_cast<Index>(i)) = pilot[i].first.transpose();
        d.f[static_cast<Index>(i)] = pilot[i].second.f;
        d.q[static_cast<Index>(i)] = pilot[i].second.q;
    }
    return fit_standardizer(t.bounds, {d});
}

struct CollectOptions {
    Index domain_size = 4000;
    double f_lengthscale = 0.2;
    double q_lengthscale = 0.0;  // 0 picks the family default
    double likelihood_std = 0.1;
    int parallelism = 1;
};

struct CollectedTask {
    MetaTaskData data;
    Index violations = 0;  // raw q~ above 3 sigma_q
    Index fallbacks = 0;
    std::string error;     // empty on success
};

/// One SafeOpt trajectory of `rows` observations (S0 included) on a vanilla
/// GP with conservative lengthscales.
inline CollectedTask collect_task(const std::string& family, std::uint64_t task_seed, Index rows,
                                  const CollectOptions& opts = {})
{
    CollectedTask out;
    const EnvTask task = sample_task(family, task_seed);
    if (rows < task.safe_seed.rows())
        throw DomainError("collect: fewer rows than initial safe points");
    const double lq = opts.q_lengthscale > 0.0 ? opts.q_lengthscale : family_defaults(family).q_lengthscale;
    const GPPrior pf = GPPrior::vanilla({opts.f_lengthscale, 1.0, opts.likelihood_std});
    const GPPrior pq = GPPrior::vanilla({lq, 1.0, opts.likelihood_std});
    const DiscreteDomain domain = discretize(task.bounds, opts.domain_size, derive_seed(task_seed, 2), task.safe_seed);
    SafeBORun run;
    run.algorithm = Algorithm::SafeOpt;
    run.iterations = rows - task.safe_seed.rows();
    run.seed = derive_seed(task_seed, 3);
    const RunRecord rec = run_safe_bo(task, pilot_standardizer(task), pf, pq, domain,
                                      std::numeric_limits<double>::quiet_NaN(), run);
    MetaTaskData& d = out.data;
    d.family = family;
    d.seed = task_seed;
    d.params = task.params;
    d.inputs.resize(static_cast<Index>(rec.rows.size()), task.bounds.dim());
    d.f.resize(d.inputs.rows());
    d.q.resize(d.inputs.rows());
    for (std::size_t i = 0; i < rec.rows.size(); ++i) {
        d.inputs.row(static_cast<Index>(i)) = rec.rows[i].x.transpose();
        d.f[static_cast<Index>(i)] = rec.rows[i].f_obs;
        d.q[static_cast<Index>(i)] = rec.rows[i].q_obs;
    }
    out.violations = rec.violations;
    out.fallbacks = rec.fallbacks;
    return out;
}

/// `n` tasks of `rows` observations each. Failures are recorded per task
/// rather than thrown.
inline std::vector<CollectedTask> collect_meta_data(const std::string& family, Index n, Index rows, std::uint64_t seed,
                                                    const CollectOptions& opts = {})
{
    if (n < 1 || rows < 1)
        throw DomainError("collect: task and row counts must be positive");
    std::vector<CollectedTask> out(static_cast<std::size_t>(n));
    parallel_for(n, opts.parallelism, [&](Index i) {
        const std::uint64_t s = meta_task_seed(seed, i);
        try {
            out[static_cast<std::size_t>(i)] = collect_task(family, s, rows, opts);
        } catch (const std::exception& e) {
            CollectedTask& c = out[static_cast<std::size_t>(i)];
            c.data.family = family;
            c.data.seed = s;
            c.error = e.what();
        }
    });
    return out;
}

} // namespace sambo

#endif
