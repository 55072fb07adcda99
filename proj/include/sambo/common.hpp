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

#ifndef SAMBO_COMMON_HPP
#define SAMBO_COMMON_HPP

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace sambo {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Raised when a symmetric positive-definite factorization fails even after
/// the jitter schedule has been exhausted.
class FactorizationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Axis-aligned box, one (low, high) pair per input dimension.
struct Bounds {
    Vector low;
    Vector high;

    Index dim() const { return low.size(); }

    bool contains(const Vector& x, double tol = 0.0) const
    {
        for (Index i = 0; i < dim(); ++i)
            if (x[i] < low[i] - tol || x[i] > high[i] + tol)
                return false;
        return true;
    }

    void validate() const
    {
        if (low.size() != high.size() || low.size() == 0)
            throw DimensionError("bounds: low/high dimension mismatch");
        for (Index i = 0; i < dim(); ++i)
            if (!(low[i] < high[i]))
                throw DomainError("bounds: low must be strictly below high");
    }
};

/// One task's ordered (input, target) sequence. Row t of `inputs` pairs
/// with `targets[t]`; the order is the order in which the points were queried.
struct TaskDataset {
    std::string task_id;
    Matrix inputs;
    Vector targets;

    Index size() const { return targets.size(); }
    Index dim() const { return inputs.cols(); }

    TaskDataset head(Index n) const { return {task_id, inputs.topRows(n), targets.head(n)}; }
    TaskDataset tail(Index n) const { return {task_id, inputs.bottomRows(n), targets.tail(n)}; }

    TaskDataset reversed() const
    {
        return {task_id, inputs.colwise().reverse(), targets.reverse()};
    }
};

/// Runs body(i) for i in [0, n) on up to `parallelism` threads. Callers write
/// results into per-index slots so that reductions stay order-independent.
/// The exception of the lowest failing index is rethrown.
template <class Body>
void parallel_for(Index n, int parallelism, Body&& body)
{
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
    const int workers = std::max(1, std::min<int>(parallelism, static_cast<int>(n)));
    if (workers == 1) {
        for (Index i = 0; i < n; ++i) {
            try {
                body(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    } else {
        std::atomic<Index> next{0};
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (Index i = next++; i < n; i = next++) {
                    try {
                        body(i);
                    } catch (...) {
                        errors[i] = std::current_exception();
                    }
                }
            });
        for (auto& t : pool)
            t.join();
    }
    for (auto& e : errors)
        if (e)
            std::rethrow_exception(e);
}

using Rng = std::mt19937_64;

/// Uniform double in [0, 1) from the top 53 bits; unlike
/// std::uniform_real_distribution the stream is fixed across standard
/// library implementations.
inline double uniform01(Rng& rng)
{
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(Rng& rng, double lo, double hi)
{
    return lo + (hi - lo) * uniform01(rng);
}

/// Uniform integer in [0, n), by rejection.
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n)
{
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t r;
    do
        r = rng();
    while (r >= limit);
    return r % n;
}

/// Standard normal via Box-Muller, same portability argument as uniform01.
inline double standard_normal(Rng& rng)
{
    double u1 = uniform01(rng);
    while (u1 <= 0.0)
        u1 = uniform01(rng);
    const double u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

/// splitmix64 finalizer; derives independent sub-seeds from (seed, stream).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream)
{
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// Uniform sample of a box.
inline Vector uniform_point(Rng& rng, const Bounds& b)
{
    Vector x(b.dim());
    for (Index i = 0; i < b.dim(); ++i)
        x[i] = uniform(rng, b.low[i], b.high[i]);
    return x;
}

/// FNV-1a, used for content hashes that must be stable across runs and builds.
inline std::uint64_t fnv1a64(const std::string& s)
{
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

} // namespace sambo

#endif
