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

#ifndef SAMBO_ENVIRONMENTS_HPP
#define SAMBO_ENVIRONMENTS_HPP

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include <sambo/argus.hpp>
#include <sambo/common.hpp>

namespace sambo {

struct Outcome {
    double f;
    double q;
};

/// A target/constraint pair on a box. `q <= 0` is safe. Observation noise is
/// only added by `observe`, with the caller's stream.
struct EnvTask {
    std::string family;
    std::uint64_t seed = 0;
    Bounds bounds;
    Matrix safe_seed;             // one point per row
    double likelihood_std = 0.0;  // on the standardized scale
    double noise_f = 0.0;         // raw units
    double noise_q = 0.0;
    std::uint64_t pilot_seed = 0;
    std::vector<std::pair<std::string, double>> params;
    std::function<Outcome(const Vector&)> evaluate;

    double f(const Vector& x) const { return evaluate(x).f; }
    double q(const Vector& x) const { return evaluate(x).q; }

    Outcome observe(const Vector& x, Rng& rng) const { return noisy(evaluate(x), rng); }

    /// Adds one f draw then one q draw to a noise-free outcome.
    Outcome noisy(const Outcome& o, Rng& rng) const
    {
        const double ef = standard_normal(rng);
        const double eq = standard_normal(rng);
        return {o.f + noise_f * ef, o.q + noise_q * eq};
    }

    double param(const std::string& name) const
    {
        for (const auto& [k, v] : params)
            if (k == name)
                return v;
        throw DomainError("env: no parameter named " + name);
    }
};

inline Bounds make_bounds(std::initializer_list<double> low, std::initializer_list<double> high)
{
    Bounds b;
    b.low = Eigen::Map<const Vector>(low.begin(), static_cast<Index>(low.size()));
    b.high = Eigen::Map<const Vector>(high.begin(), static_cast<Index>(high.size()));
    return b;
}

/// Negated six-hump camelback, clipped below at -2.5.
inline double camelback_g(double x1, double x2)
{
    const double x1s = x1 * x1, x2s = x2 * x2;
    const double v = -(4.0 - 2.1 * x1s + x1s * x1s / 3.0) * x1s - x1 * x2 - (4.0 * x2s - 4.0) * x2s;
    return std::max(v, -2.5);
}

namespace detail {

inline constexpr Index pilot_points = 128;

/// Safe points of a uniform pilot sample plus S0, with their noise-free
/// outcomes.
inline std::vector<std::pair<Vector, Outcome>> pilot_sample(const EnvTask& t)
{
    Rng rng(derive_seed(t.pilot_seed, 7));
    std::vector<std::pair<Vector, Outcome>> out;
    auto take = [&](const Vector& x) {
        const Outcome o = t.evaluate(x);
        if (o.q <= 0.0)
            out.emplace_back(x, o);
    };
    for (Index i = 0; i < t.safe_seed.rows(); ++i)
        take(t.safe_seed.row(i).transpose());
    for (Index i = 0; i < pilot_points; ++i)
        take(uniform_point(rng, t.bounds));
    return out;
}

/// Raw observation noise: the standardized likelihood std times the spread
/// the output statistics would assign to the pilot sample.
inline void set_observation_noise(EnvTask& t, std::uint64_t pilot_seed)
{
    t.pilot_seed = pilot_seed;
    double f_lo = std::numeric_limits<double>::infinity(), f_hi = -f_lo, q_abs = 0.0;
    for (const auto& [x, o] : pilot_sample(t)) {
        f_lo = std::min(f_lo, o.f);
        f_hi = std::max(f_hi, o.f);
        q_abs = std::max(q_abs, std::abs(o.q));
    }
    t.noise_f = t.likelihood_std * (f_hi - f_lo) / 3.0;
    t.noise_q = t.likelihood_std * q_abs / 2.0;
}

inline void check_safe_seed(const EnvTask& t)
{
    for (Index i = 0; i < t.safe_seed.rows(); ++i)
        if (!(t.q(t.safe_seed.row(i).transpose()) <= 0.0))
            throw DomainError("env: initial safe point violates the constraint");
}

} // namespace detail

inline EnvTask camelback_task(std::uint64_t seed)
{
    Rng rng(derive_seed(seed, 0));
    const double a = uniform(rng, 0.3, 0.5);
    const double w_f = uniform(rng, 0.2, 2.0);
    const double rho = standard_normal(rng);
    const double w_q = uniform(rng, 0.45, 0.5);
    const double b = uniform(rng, 0.3, 0.5);
    EnvTask t;
    t.family = "camelback";
    t.seed = seed;
    t.bounds = make_bounds({-2.0, -1.0}, {2.0, 1.0});
    t.safe_seed = Eigen::RowVector2d(-1.5, -0.5);
    t.likelihood_std = 0.02;
    t.params = {{"a", a}, {"omega_f", w_f}, {"rho", rho}, {"omega_q", w_q}, {"b", b}};
    const double offset = 3.0 * std::sin(0.4 * std::numbers::pi * w_q - 2.0) * std::sin(2.0 * std::numbers::pi * w_q);
    t.evaluate = [=](const Vector& x) {
        if (x.size() != 2)
            throw DimensionError("camelback: input must be 2-d");
        const double g = camelback_g(x[0], x[1]);
        const double f = g + a * std::sin(w_f * (x[0] - rho)) * std::sin(w_f * (x[1] - rho));
        const double q = offset - b * (x[0] * x[0] + x[1] * x[1]) + 1.2 * g - 0.7;
        return Outcome{f, q};
    };
    detail::check_safe_seed(t);
    detail::set_observation_noise(t, seed);
    return t;
}

inline EnvTask eggholder_task(std::uint64_t seed)
{
    Rng rng(derive_seed(seed, 0));
    const double a = uniform(rng, 0.6, 1.4);
    const double b = uniform(rng, 0.6, 1.4);
    const double c = 47.0 + 5.0 * standard_normal(rng);
    const double w1 = uniform(rng, 0.8, 1.2);
    const double w2 = uniform(rng, 0.8, 1.2);
    EnvTask t;
    t.family = "eggholder";
    t.seed = seed;
    t.bounds = make_bounds({0.0, 0.0}, {400.0, 400.0});
    t.safe_seed = Eigen::RowVector2d(380.0, 50.0);
    t.likelihood_std = 0.05;
    t.params = {{"a", a}, {"b", b}, {"c", c}, {"omega_1", w1}, {"omega_2", w2}};
    t.evaluate = [=](const Vector& x) {
        if (x.size() != 2)
            throw DimensionError("eggholder: input must be 2-d");
        const double x1 = x[0], x2 = x[1];
        const double f = -(x2 + c) * std::sin(std::sqrt(std::abs(a * x2 + x1 / 2.0 + 47.0)))
                         - b * x1 * std::sin(std::sqrt(std::abs(x1 - x2 - 47.0)));
        const double q = 300.0 - std::sqrt(x1 * x1 + 2.0 * x2 * x2) + 50.0 * std::sin((w1 * x1 + w2 * x2) / 20.0);
        return Outcome{f, q};
    };
    detail::check_safe_seed(t);
    detail::set_observation_noise(t, seed);
    return t;
}

/// Gains (PKP, VKP, VKI) for a reference move of `step` meters.
inline EnvTask argus_task(double step, const argus::Config& cfg = {})
{
    auto problem = std::make_shared<const argus::Problem>(step, cfg);
    EnvTask t;
    t.family = "argus";
    t.seed = 0;
    t.bounds = argus::Problem::bounds();
    const argus::Gains s0 = argus::Problem::seed_gains();
    t.safe_seed = Eigen::RowVector3d(s0.pkp, s0.vkp, s0.vki);
    t.likelihood_std = 0.1;
    t.params = {{"step_size", step}, {"kappa", problem->kappa()}, {"mass", cfg.mass}};
    t.evaluate = [problem](const Vector& x) {
        const argus::Evaluation e = problem->evaluate(x);
        return Outcome{e.f, e.q};
    };
    detail::check_safe_seed(t);
    detail::set_observation_noise(t, 0);
    return t;
}

inline const std::vector<std::string>& env_families()
{
    static const std::vector<std::string> names{"camelback", "eggholder", "argus"};
    return names;
}

/// Task `seed` of a family. Argus step sizes are log-uniform on [1e-5, 1e-2].
inline EnvTask sample_task(const std::string& family, std::uint64_t seed)
{
    if (family == "camelback")
        return camelback_task(seed);
    if (family == "eggholder")
        return eggholder_task(seed);
    if (family == "argus") {
        Rng rng(derive_seed(seed, 0));
        EnvTask t = argus_task(std::pow(10.0, uniform(rng, -5.0, -2.0)));
        t.seed = seed;
        return t;
    }
    throw DomainError("env: unknown family '" + family + "'");
}

/// Smallest f over the rows of `domain` with q <= 0.
inline double safe_optimum(const EnvTask& t, const Matrix& domain)
{
    double best = std::numeric_limits<double>::infinity();
    for (Index i = 0; i < domain.rows(); ++i) {
        const Outcome o = t.evaluate(domain.row(i).transpose());
        if (o.q <= 0.0)
            best = std::min(best, o.f);
    }
    if (!std::isfinite(best))
        throw DomainError("env: no safe point in the domain");
    return best;
}

/// Raw (un-standardized) observations from one task, in query order.
struct MetaTaskData {
    std::string family;
    std::uint64_t seed = 0;
    std::vector<std::pair<std::string, double>> params;
    Matrix inputs;
    Vector f;
    Vector q;

    Index size() const { return f.size(); }
};

struct Standardizer {
    Vector x_mean;
    Vector x_std;
    double f_mean = 0.0;
    double f_std = 1.0;
    double q_mean = 0.0;
    double q_std = 1.0;

    Vector x(const Vector& raw) const { return (raw - x_mean).cwiseQuotient(x_std); }
    Vector x_inverse(const Vector& z) const { return z.cwiseProduct(x_std) + x_mean; }

    Matrix x_rows(const Matrix& raw) const
    {
        return (raw.rowwise() - x_mean.transpose()).array().rowwise() / x_std.transpose().array();
    }

    Matrix x_rows_inverse(const Matrix& z) const
    {
        return (z.array().rowwise() * x_std.transpose().array()).matrix().rowwise() + x_mean.transpose();
    }

    double f(double raw) const { return (raw - f_mean) / f_std; }
    double f_inverse(double z) const { return z * f_std + f_mean; }
    double q(double raw) const { return (raw - q_mean) / q_std; }
    double q_inverse(double z) const { return z * q_std + q_mean; }

    Bounds bounds(const Bounds& raw) const { return {x(raw.low), x(raw.high)}; }
};

/// Input statistics from the box, output statistics from the union of the
/// meta datasets.
inline Standardizer fit_standardizer(const Bounds& bounds, const std::vector<MetaTaskData>& data)
{
    bounds.validate();
    double f_lo = std::numeric_limits<double>::infinity(), f_hi = -f_lo, q_lo = f_lo, q_hi = -f_lo;
    Index count = 0;
    for (const auto& d : data) {
        if (d.inputs.cols() != bounds.dim() || d.inputs.rows() != d.size() || d.q.size() != d.size())
            throw DimensionError("standardizer: dataset shape does not match the bounds");
        if (d.size() == 0)
            continue;
        f_lo = std::min(f_lo, d.f.minCoeff());
        f_hi = std::max(f_hi, d.f.maxCoeff());
        q_lo = std::min(q_lo, d.q.minCoeff());
        q_hi = std::max(q_hi, d.q.maxCoeff());
        count += d.size();
    }
    if (count == 0)
        throw DomainError("standardizer: no meta data");
    Standardizer s;
    s.x_mean = (bounds.high + bounds.low) / 2.0;
    s.x_std = (bounds.high - bounds.low).cwiseAbs() / std::sqrt(12.0);
    s.f_mean = (f_hi + f_lo) / 2.0;
    s.f_std = (f_hi - f_lo) / 3.0;
    s.q_mean = 0.0;
    s.q_std = std::max(std::abs(q_hi), std::abs(q_lo)) / 2.0;
    if (!(s.f_std > 0.0) || !(s.q_std > 0.0))
        throw DomainError("standardizer: degenerate output range");
    return s;
}

/// Standardized f- and q-views of the meta data.
inline std::pair<std::vector<TaskDataset>, std::vector<TaskDataset>>
standardize(const std::vector<MetaTaskData>& data, const Standardizer& s)
{
    std::vector<TaskDataset> fs, qs;
    for (const auto& d : data) {
        const std::string id = d.family + "-" + std::to_string(d.seed);
        const Matrix X = s.x_rows(d.inputs);
        Vector f(d.size()), q(d.size());
        for (Index i = 0; i < d.size(); ++i) {
            f[i] = s.f(d.f[i]);
            q[i] = s.q(d.q[i]);
        }
        fs.push_back({id, X, f});
        qs.push_back({id, X, q});
    }
    return {fs, qs};
}

inline nlohmann::json standardizer_to_json(const Standardizer& s)
{
    auto vec = [](const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
    return {{"x_mean", vec(s.x_mean)}, {"x_std", vec(s.x_std)}, {"f_mean", s.f_mean},
            {"f_std", s.f_std},        {"q_mean", s.q_mean},    {"q_std", s.q_std}};
}

inline Standardizer standardizer_from_json(const nlohmann::json& j)
{
    auto vec = [](const std::vector<double>& v) {
        return Vector(Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size())));
    };
    Standardizer s;
    s.x_mean = vec(j.at("x_mean").get<std::vector<double>>());
    s.x_std = vec(j.at("x_std").get<std::vector<double>>());
    s.f_mean = j.at("f_mean").get<double>();
    s.f_std = j.at("f_std").get<double>();
    s.q_mean = j.at("q_mean").get<double>();
    s.q_std = j.at("q_std").get<double>();
    if (s.x_mean.size() != s.x_std.size())
        throw DimensionError("standardizer: x_mean/x_std length mismatch");
    return s;
}

/// Shortest decimal text that reads back to the same double.
inline std::string format_double(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline double parse_double(const std::string& s)
{
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size())
        throw DomainError("corpus: bad number '" + s + "'");
    return v;
}

inline constexpr int corpus_version = 1;

/// One task file: a JSON header line, a column line, then one CSV row per
/// observation (raw inputs, raw f, raw q).
inline void write_task_file(const std::string& path, const MetaTaskData& d, const Standardizer* s = nullptr,
                            const std::string& config_hash = "")
{
    nlohmann::json header;
    header["format"] = "sambo.meta_task";
    header["version"] = corpus_version;
    header["family"] = d.family;
    header["seed"] = d.seed;
    nlohmann::json params = nlohmann::json::object();
    for (const auto& [k, v] : d.params)
        params[k] = v;
    header["params"] = params;
    header["rows"] = d.size();
    header["dim"] = d.inputs.cols();
    if (s)
        header["standardizer"] = standardizer_to_json(*s);
    if (!config_hash.empty())
        header["config_hash"] = config_hash;
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("corpus: cannot write " + path);
    out << header.dump() << '\n';
    for (Index j = 0; j < d.inputs.cols(); ++j)
        out << 'x' << j << ',';
    out << "f,q\n";
    for (Index i = 0; i < d.size(); ++i) {
        for (Index j = 0; j < d.inputs.cols(); ++j)
            out << format_double(d.inputs(i, j)) << ',';
        out << format_double(d.f[i]) << ',' << format_double(d.q[i]) << '\n';
    }
    if (!out)
        throw std::runtime_error("corpus: write failed for " + path);
}

struct TaskFile {
    MetaTaskData data;
    std::unique_ptr<Standardizer> standardizer;
};

inline TaskFile read_task_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("corpus: cannot read " + path);
    std::string line;
    if (!std::getline(in, line))
        throw DomainError("corpus: empty file " + path);
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw DomainError(std::string("corpus: bad header: ") + e.what());
    }
    if (header.value("format", "") != "sambo.meta_task" || header.value("version", 0) != corpus_version)
        throw DomainError("corpus: unsupported format in " + path);
    TaskFile tf;
    MetaTaskData& d = tf.data;
    d.family = header.at("family").get<std::string>();
    d.seed = header.at("seed").get<std::uint64_t>();
    for (const auto& [k, v] : header.at("params").items())
        d.params.emplace_back(k, v.get<double>());
    const Index rows = header.at("rows").get<Index>();
    const Index dim = header.at("dim").get<Index>();
    if (header.contains("standardizer"))
        tf.standardizer = std::make_unique<Standardizer>(standardizer_from_json(header["standardizer"]));
    std::getline(in, line);
    d.inputs.resize(rows, dim);
    d.f.resize(rows);
    d.q.resize(rows);
    for (Index i = 0; i < rows; ++i) {
        if (!std::getline(in, line))
            throw DomainError("corpus: truncated file " + path);
        std::stringstream ss(line);
        std::string cell;
        std::vector<double> cells;
        while (std::getline(ss, cell, ','))
            cells.push_back(parse_double(cell));
        if (static_cast<Index>(cells.size()) != dim + 2)
            throw DomainError("corpus: wrong column count in " + path);
        for (Index j = 0; j < dim; ++j)
            d.inputs(i, j) = cells[static_cast<std::size_t>(j)];
        d.f[i] = cells[static_cast<std::size_t>(dim)];
        d.q[i] = cells[static_cast<std::size_t>(dim + 1)];
    }
    return tf;
}

} // namespace sambo

#endif
