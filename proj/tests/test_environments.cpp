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

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numbers>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include <sambo/environments.hpp>

#include "oracles.hpp"

using namespace sambo;

namespace {

std::string temp_path(const std::string& name)
{
    return (std::filesystem::temp_directory_path() / ("sambo_env_" + name)).string();
}

std::string slurp(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

double uniform_cdf(double x, double lo, double hi)
{
    return std::clamp((x - lo) / (hi - lo), 0.0, 1.0);
}

double normal_cdf(double x, double mu, double sd)
{
    return 0.5 * std::erfc(-(x - mu) / (sd * std::sqrt(2.0)));
}

std::vector<std::array<double, 4>> table_pairs()
{
    return {{390, 0.1, 400, 0.1}, {475, 0.03, 500, 0.05}, {690, 0.03, 800, 0.06},
            {870, 0.03, 900, 0.04}, {1050, 0.03, 1100, 0.06}};
}

bool has_extremum_near(const std::vector<argus::Extremum>& ex, double hz, bool is_max)
{
    for (const auto& e : ex)
        if (e.is_max == is_max && std::abs(e.hz - hz) <= 0.05 * hz)
            return true;
    return false;
}

} // namespace

TEST(camelback, origin_value_is_zero)
{
    EXPECT_EQ(camelback_g(0.0, 0.0), 0.0);
}

TEST(camelback, clipped_below_at_minus_two_and_a_half)
{
    double lo = 1e9;
    for (int i = 0; i <= 200; ++i)
        for (int j = 0; j <= 100; ++j)
            lo = std::min(lo, camelback_g(-2.0 + 0.02 * i, -1.0 + 0.02 * j));
    EXPECT_EQ(lo, -2.5);
    // -(4 - 8.4 + 16/3) * 4 - 2 - 0 = -5.73 before the clamp.
    EXPECT_EQ(camelback_g(2.0, 1.0), -2.5);
    EXPECT_NEAR(camelback_g(0.5, -0.5), -(4.0 - 2.1 * 0.25 + 0.0625 / 3.0) * 0.25 + 0.25 - (1.0 - 4.0) * 0.25, 1e-15);
}

TEST(camelback, target_and_constraint_use_the_sampled_parameters)
{
    const EnvTask t = camelback_task(3);
    const double a = t.param("a"), wf = t.param("omega_f"), rho = t.param("rho"), wq = t.param("omega_q"),
                 b = t.param("b");
    const double x1 = 0.3, x2 = -0.2;
    const double g = camelback_g(x1, x2);
    const double pi = std::numbers::pi;
    EXPECT_NEAR(t.f(Eigen::Vector2d(x1, x2)), g + a * std::sin(wf * (x1 - rho)) * std::sin(wf * (x2 - rho)), 1e-14);
    EXPECT_NEAR(t.q(Eigen::Vector2d(x1, x2)),
                3.0 * std::sin(0.4 * pi * wq - 2.0) * std::sin(2.0 * pi * wq) - b * (x1 * x1 + x2 * x2) + 1.2 * g - 0.7,
                1e-14);
    EXPECT_EQ(t.bounds.low, Eigen::Vector2d(-2.0, -1.0));
    EXPECT_EQ(t.bounds.high, Eigen::Vector2d(2.0, 1.0));
    EXPECT_EQ(t.likelihood_std, 0.02);
}

TEST(camelback, seeded_tasks_are_identical)
{
    const EnvTask a = camelback_task(11), b = camelback_task(11), c = camelback_task(12);
    EXPECT_EQ(a.params, b.params);
    EXPECT_NE(a.params, c.params);
    const Eigen::Vector2d x(0.7, 0.1);
    EXPECT_EQ(a.f(x), b.f(x));
    EXPECT_EQ(a.q(x), b.q(x));
    EXPECT_EQ(a.noise_f, b.noise_f);
}

TEST(eggholder, origin_constraint_is_three_hundred)
{
    for (std::uint64_t s = 0; s < 10; ++s)
        EXPECT_EQ(eggholder_task(s).q(Eigen::Vector2d(0.0, 0.0)), 300.0);
}

TEST(eggholder, target_is_finite_on_a_dense_grid)
{
    for (std::uint64_t s = 0; s < 20; ++s) {
        const EnvTask t = eggholder_task(s);
        for (int i = 0; i <= 200; ++i)
            for (int j = 0; j <= 200; ++j) {
                const Outcome o = t.evaluate(Eigen::Vector2d(2.0 * i, 2.0 * j));
                ASSERT_TRUE(std::isfinite(o.f) && std::isfinite(o.q)) << "seed " << s;
            }
    }
}

TEST(eggholder, at_least_a_fifth_of_the_domain_is_safe)
{
    for (std::uint64_t s = 0; s < 20; ++s) {
        const EnvTask t = eggholder_task(s);
        int safe = 0;
        for (int i = 0; i < 100; ++i)
            for (int j = 0; j < 100; ++j)
                safe += t.q(Eigen::Vector2d(2.0 + 4.0 * i, 2.0 + 4.0 * j)) <= 0.0;
        EXPECT_GE(safe, 2000) << "seed " << s;
    }
}

TEST(environments, initial_point_is_safe_on_fresh_tasks)
{
    for (std::uint64_t s = 0; s < 200; ++s) {
        for (const char* fam : {"camelback", "eggholder"}) {
            const EnvTask t = sample_task(fam, s);
            ASSERT_EQ(t.safe_seed.rows(), 1);
            EXPECT_LE(t.q(t.safe_seed.row(0).transpose()), 0.0) << fam << " seed " << s;
        }
    }
}

TEST(environments, parameter_laws_pass_a_ks_smoke_test)
{
    std::vector<std::vector<double>> cb(5), eg(5);
    std::vector<double> log_step;
    for (std::uint64_t s = 0; s < 1000; ++s) {
        const EnvTask c = camelback_task(s), e = eggholder_task(s);
        for (std::size_t k = 0; k < 5; ++k) {
            cb[k].push_back(c.params[k].second);
            eg[k].push_back(e.params[k].second);
        }
        Rng rng(derive_seed(s, 0));
        log_step.push_back(uniform(rng, -5.0, -2.0));
    }
    EXPECT_GT(oracle::ks_pvalue(cb[0], [](double x) { return uniform_cdf(x, 0.3, 0.5); }), 0.01);
    EXPECT_GT(oracle::ks_pvalue(cb[1], [](double x) { return uniform_cdf(x, 0.2, 2.0); }), 0.01);
    EXPECT_GT(oracle::ks_pvalue(cb[2], [](double x) { return normal_cdf(x, 0.0, 1.0); }), 0.01);
    EXPECT_GT(oracle::ks_pvalue(cb[3], [](double x) { return uniform_cdf(x, 0.45, 0.5); }), 0.01);
    EXPECT_GT(oracle::ks_pvalue(cb[4], [](double x) { return uniform_cdf(x, 0.3, 0.5); }), 0.01);
    EXPECT_GT(oracle::ks_pvalue(eg[0], [](double x) { return uniform_cdf(x, 0.6, 1.4); }), 0.01);
    EXPECT_GT(oracle::ks_pvalue(eg[1], [](double x) { return uniform_cdf(x, 0.6, 1.4); }), 0.01);
    EXPECT_GT(oracle::ks_pvalue(eg[2], [](double x) { return normal_cdf(x, 47.0, 5.0); }), 0.01);
    EXPECT_GT(oracle::ks_pvalue(eg[3], [](double x) { return uniform_cdf(x, 0.8, 1.2); }), 0.01);
    EXPECT_GT(oracle::ks_pvalue(eg[4], [](double x) { return uniform_cdf(x, 0.8, 1.2); }), 0.01);
    EXPECT_GT(oracle::ks_pvalue(log_step, [](double x) { return uniform_cdf(x, -5.0, -2.0); }), 0.01);
    // A shifted law is rejected.
    EXPECT_LT(oracle::ks_pvalue(cb[0], [](double x) { return uniform_cdf(x, 0.32, 0.52); }), 0.01);
}

TEST(environments, observations_add_noise_from_the_callers_stream)
{
    const EnvTask t = camelback_task(5);
    const Eigen::Vector2d x(0.4, 0.3);
    Rng r1(9), r2(9);
    const Outcome a = t.observe(x, r1), b = t.observe(x, r2);
    EXPECT_EQ(a.f, b.f);
    EXPECT_EQ(a.q, b.q);
    ASSERT_GT(t.noise_f, 0.0);
    ASSERT_GT(t.noise_q, 0.0);
    const int n = 4000;
    double sum = 0.0, sq = 0.0;
    Rng rng(1);
    for (int i = 0; i < n; ++i) {
        const double e = t.observe(x, rng).f - t.f(x);
        sum += e;
        sq += e * e;
    }
    EXPECT_LT(std::abs(sum / n), 4.0 * t.noise_f / std::sqrt(n));
    EXPECT_NEAR(std::sqrt(sq / n), t.noise_f, 0.05 * t.noise_f);
}

TEST(environments, unknown_family_is_rejected)
{
    EXPECT_THROW(sample_task("branin", 0), DomainError);
    EXPECT_THROW(camelback_task(0).param("nope"), DomainError);
    EXPECT_THROW(camelback_task(0).f(Eigen::Vector3d(0, 0, 0)), DimensionError);
}

TEST(environments, safe_optimum_scans_only_safe_rows)
{
    EnvTask t;
    t.evaluate = [](const Vector& x) { return Outcome{x[0], x[0] < 0.5 ? 1.0 : -1.0}; };
    Matrix D(4, 1);
    D << 0.1, 0.6, 0.9, 0.2;
    EXPECT_EQ(safe_optimum(t, D), 0.6);
    Matrix U(1, 1);
    U << 0.0;
    EXPECT_THROW(safe_optimum(t, U), DomainError);
}

namespace {

MetaTaskData fixture_data(Index rows, double f_lo, double f_hi, double q_lo, double q_hi)
{
    MetaTaskData d;
    d.family = "fixture";
    d.inputs = Matrix::Zero(rows, 1);
    d.f = Vector::LinSpaced(rows, f_lo, f_hi);
    d.q = Vector::LinSpaced(rows, q_lo, q_hi);
    return d;
}

} // namespace

TEST(standardizer, input_statistics_follow_the_box)
{
    const Standardizer s = fit_standardizer(make_bounds({-2.0}, {2.0}), {fixture_data(3, 0, 1, -1, 1)});
    EXPECT_EQ(s.x_mean[0], 0.0);
    EXPECT_NEAR(s.x_std[0], 1.1547005383792515, 1e-15);
    EXPECT_NEAR(s.x_std[0], std::sqrt(16.0 / 12.0), 1e-15);
}

TEST(standardizer, output_statistics_follow_the_meta_data_range)
{
    const Bounds b = make_bounds({0.0}, {1.0});
    const Standardizer s =
        fit_standardizer(b, {fixture_data(4, -1.0, 2.0, -4.0, 0.5), fixture_data(2, 0.0, 5.0, -1.0, 2.0)});
    EXPECT_EQ(s.f_mean, 2.0);
    EXPECT_EQ(s.f_std, 2.0);
    EXPECT_EQ(s.q_mean, 0.0);
    EXPECT_EQ(s.q_std, 2.0);
    // The larger magnitude can sit on the positive side.
    EXPECT_EQ(fit_standardizer(b, {fixture_data(2, 0, 1, -1.0, 3.0)}).q_std, 1.5);
}

TEST(standardizer, constraint_sign_is_preserved)
{
    const Standardizer s = fit_standardizer(make_bounds({0.0}, {1.0}), {fixture_data(5, 0, 1, -4.0, 2.0)});
    for (double q : {-3.0, -1e-12, 0.0, 1e-12, 7.0}) {
        const double z = s.q(q);
        EXPECT_EQ(std::signbit(z), std::signbit(q));
        EXPECT_EQ(z == 0.0, q == 0.0);
    }
}

TEST(standardizer, apply_then_invert_is_identity)
{
    const Bounds b = make_bounds({-2.0, 0.0, 500.0}, {2.0, 400.0, 4000.0});
    MetaTaskData d = fixture_data(5, -3.0, 11.0, -7.0, 2.5);
    d.inputs = Matrix::Zero(5, 3);
    const Standardizer s = fit_standardizer(b, {d});
    Rng rng(4);
    for (int i = 0; i < 100; ++i) {
        const Vector x = uniform_point(rng, b);
        EXPECT_LT((s.x_inverse(s.x(x)) - x).cwiseAbs().maxCoeff(), 1e-12 * x.cwiseAbs().maxCoeff());
        const double v = uniform(rng, -100.0, 100.0);
        EXPECT_NEAR(s.f_inverse(s.f(v)), v, 1e-12 * std::abs(v));
        EXPECT_NEAR(s.q_inverse(s.q(v)), v, 1e-12 * std::abs(v));
    }
    Matrix X(4, 3);
    for (Index i = 0; i < 4; ++i)
        X.row(i) = uniform_point(rng, b).transpose();
    EXPECT_LT((s.x_rows_inverse(s.x_rows(X)) - X).cwiseAbs().maxCoeff(), 1e-12 * 4000.0);
    EXPECT_LT((s.x_rows(X).row(2).transpose() - s.x(X.row(2).transpose())).norm(), 1e-15);
}

TEST(standardizer, standardized_views_share_inputs)
{
    const Bounds b = make_bounds({0.0}, {2.0});
    MetaTaskData d = fixture_data(3, 0.0, 3.0, -2.0, 1.0);
    d.inputs << 0.0, 1.0, 2.0;
    d.seed = 4;
    const Standardizer s = fit_standardizer(b, {d});
    const auto [fs, qs] = standardize({d}, s);
    ASSERT_EQ(fs.size(), 1u);
    EXPECT_EQ(fs[0].task_id, "fixture-4");
    EXPECT_EQ(fs[0].inputs, qs[0].inputs);
    EXPECT_NEAR(fs[0].inputs(2, 0), 1.0 / (2.0 / std::sqrt(12.0)), 1e-15);
    EXPECT_EQ(fs[0].targets[0], -1.5);
    EXPECT_EQ(qs[0].targets[0], -2.0);
}

TEST(standardizer, empty_data_is_rejected)
{
    const Bounds b = make_bounds({0.0}, {1.0});
    EXPECT_THROW(fit_standardizer(b, {}), DomainError);
    EXPECT_THROW(fit_standardizer(b, {fixture_data(0, 0, 1, 0, 1)}), DomainError);
    EXPECT_THROW(fit_standardizer(make_bounds({0.0, 0.0}, {1.0, 1.0}), {fixture_data(2, 0, 1, 0, 1)}),
                 DimensionError);
}

TEST(corpus, reload_is_bit_exact)
{
    MetaTaskData d;
    d.family = "camelback";
    d.seed = 77;
    d.params = {{"a", 0.1 + 0.2}, {"rho", -1.0 / 3.0}};
    Rng rng(3);
    d.inputs = Matrix(6, 2);
    d.f = Vector(6);
    d.q = Vector(6);
    for (Index i = 0; i < 6; ++i) {
        d.inputs(i, 0) = uniform(rng, -2.0, 2.0);
        d.inputs(i, 1) = std::ldexp(uniform01(rng), -1030);
        d.f[i] = standard_normal(rng) * 1e300;
        d.q[i] = -standard_normal(rng) * 1e-300;
    }
    const Standardizer s = fit_standardizer(make_bounds({-2.0, -1.0}, {2.0, 1.0}), {d});
    const std::string p1 = temp_path("a.csv"), p2 = temp_path("b.csv");
    write_task_file(p1, d, &s);
    const TaskFile tf = read_task_file(p1);
    EXPECT_EQ(tf.data.family, d.family);
    EXPECT_EQ(tf.data.seed, d.seed);
    EXPECT_EQ(tf.data.inputs, d.inputs);
    EXPECT_EQ(tf.data.f, d.f);
    EXPECT_EQ(tf.data.q, d.q);
    ASSERT_TRUE(tf.standardizer);
    EXPECT_EQ(tf.standardizer->x_std, s.x_std);
    EXPECT_EQ(tf.standardizer->f_std, s.f_std);
    EXPECT_EQ(tf.standardizer->q_std, s.q_std);
    write_task_file(p2, tf.data, tf.standardizer.get());
    EXPECT_EQ(slurp(p1), slurp(p2));
    std::filesystem::remove(p1);
    std::filesystem::remove(p2);
}

TEST(corpus, malformed_files_are_rejected)
{
    EXPECT_THROW(read_task_file(temp_path("missing.csv")), std::runtime_error);
    const std::string p = temp_path("bad.csv");
    {
        std::ofstream(p) << "not json\n";
    }
    EXPECT_THROW(read_task_file(p), DomainError);
    {
        std::ofstream(p) << R"({"format":"other","version":1})" << "\n";
    }
    EXPECT_THROW(read_task_file(p), DomainError);
    {
        std::ofstream(p) << R"({"format":"sambo.meta_task","version":1,"family":"x","seed":1,"params":{},"rows":2,"dim":1})"
                         << "\nx0,f,q\n1,2,3\n";
    }
    EXPECT_THROW(read_task_file(p), DomainError);
    {
        std::ofstream(p) << R"({"format":"sambo.meta_task","version":1,"family":"x","seed":1,"params":{},"rows":1,"dim":1})"
                         << "\nx0,f,q\n1,2x,3\n";
    }
    EXPECT_THROW(read_task_file(p), DomainError);
    std::filesystem::remove(p);
    EXPECT_THROW(write_task_file("/nonexistent-dir/x.csv", MetaTaskData{}), std::runtime_error);
}

TEST(argus, s_curve_short_move_is_pure_jerk)
{
    const double D = 1e-3, j = 200.0;
    const argus::SCurve c(D, j, 20.0, 1.0);
    const double tj = std::cbrt(D / (2.0 * j));
    EXPECT_NEAR(c.duration(), 4.0 * tj, 1e-15);
    EXPECT_NEAR(c.at(c.duration()).first, D, 1e-15);
    EXPECT_NEAR(c.at(2.0 * tj).first, D / 2.0, 1e-15);
    EXPECT_NEAR(c.at(2.0 * tj).second, j * tj * tj, 1e-12);
    EXPECT_NEAR(c.at(tj).first, j * tj * tj * tj / 6.0, 1e-15);
    EXPECT_EQ(c.at(-1.0).first, 0.0);
    EXPECT_EQ(c.at(5.0).first, D);
}

TEST(argus, s_curve_long_move_respects_limits)
{
    for (double D : {0.3, 0.5, 2.0}) {
        const argus::SCurve c(D, 200.0, 20.0, 1.0);
        const double h = 1e-5;
        double v_peak = 0.0, a_peak = 0.0, p_prev = 0.0, v_prev = 0.0;
        for (double t = 0.0; t <= c.duration() + 1e-3; t += h) {
            const auto [p, v] = c.at(t);
            ASSERT_GE(p, p_prev - 1e-15);
            v_peak = std::max(v_peak, v);
            a_peak = std::max(a_peak, std::abs(v - v_prev) / h);
            p_prev = p;
            v_prev = v;
        }
        EXPECT_NEAR(c.at(c.duration()).first, D, 1e-12) << D;
        EXPECT_LE(v_peak, 1.0 + 1e-12);
        EXPECT_LE(a_peak, 20.0 + 1e-6);
        if (D >= 0.5)
            EXPECT_NEAR(v_peak, 1.0, 1e-9);
        // v_max * jerk < a_max^2, so the velocity limit caps the acceleration.
        EXPECT_NEAR(a_peak, std::sqrt(200.0), 1e-2);
    }
    // With v_max = 10 the acceleration limit is reached: cruising at 10 m/s
    // for D = 10, and a constant-acceleration phase below v_max for D = 2.
    for (double D : {2.0, 10.0}) {
        const argus::SCurve c(D, 200.0, 20.0, 10.0);
        const double h = 1e-5;
        double v_peak = 0.0, a_peak = 0.0, v_prev = 0.0;
        for (double t = 0.0; t <= c.duration() + 1e-3; t += h) {
            const double v = c.at(t).second;
            v_peak = std::max(v_peak, v);
            a_peak = std::max(a_peak, std::abs(v - v_prev) / h);
            v_prev = v;
        }
        EXPECT_NEAR(c.at(c.duration()).first, D, 1e-12);
        EXPECT_NEAR(a_peak, 20.0, 1e-2);
        if (D == 10.0)
            EXPECT_NEAR(v_peak, 10.0, 1e-9);
        else
            EXPECT_LT(v_peak, 10.0);
    }
    EXPECT_THROW(argus::SCurve(0.0, 200.0, 20.0, 1.0), DomainError);
}

TEST(argus, plant_realization_has_twelve_states)
{
    const argus::Config cfg;
    EXPECT_EQ(argus::continuous_plant(cfg).order(), 12);
    const argus::DiscretePlant p = argus::discrete_plant(cfg);
    EXPECT_EQ(p.order(), 12);
    EXPECT_EQ(p.delay, 20);
}

TEST(argus, discretized_plant_matches_the_transfer_function_at_low_frequency)
{
    const argus::Config cfg;
    const argus::DiscretePlant p = argus::discrete_plant(cfg);
    for (double hz : {5.0, 20.0, 50.0, 100.0}) {
        const double c = std::abs(oracle::argus_continuous_response(hz, cfg.mass, table_pairs()));
        EXPECT_NEAR(std::abs(p.response(hz)) / c, 1.0, 1e-3) << hz;
    }
}

TEST(argus, response_has_extrema_near_the_upper_four_pairs)
{
    const argus::DiscretePlant p = argus::discrete_plant(argus::Config{});
    const auto ex = argus::magnitude_extrema(p, 200.0, 1500.0, 0.5);
    for (std::size_t i = 1; i < 5; ++i) {
        const auto& r = table_pairs()[i];
        EXPECT_TRUE(has_extremum_near(ex, r[0], false)) << "anti-resonance " << r[0];
        EXPECT_TRUE(has_extremum_near(ex, r[2], true)) << "resonance " << r[2];
    }
}

TEST(argus, first_pair_only_shows_once_the_rigid_body_slope_is_removed)
{
    const argus::DiscretePlant p = argus::discrete_plant(argus::Config{});
    const auto ex = argus::magnitude_extrema(p, 200.0, 1500.0, 0.5);
    EXPECT_FALSE(has_extremum_near(ex, 390.0, false));
    EXPECT_FALSE(has_extremum_near(ex, 400.0, true));
    std::vector<double> hz, mag;
    for (double f = 300.0; f <= 460.0; f += 0.5) {
        const double w = 2.0 * std::numbers::pi * f;
        hz.push_back(f);
        mag.push_back(w * w * std::abs(p.response(f)));
    }
    std::vector<argus::Extremum> comp;
    for (std::size_t i = 1; i + 1 < mag.size(); ++i) {
        if (mag[i] > mag[i - 1] && mag[i] > mag[i + 1])
            comp.push_back({hz[i], true});
        if (mag[i] < mag[i - 1] && mag[i] < mag[i + 1])
            comp.push_back({hz[i], false});
    }
    EXPECT_TRUE(has_extremum_near(comp, 390.0, false));
    EXPECT_TRUE(has_extremum_near(comp, 400.0, true));
}

TEST(argus, seed_gains_track_a_one_millimetre_move)
{
    const argus::Config cfg;
    const argus::Problem prob(1e-3, cfg);
    const argus::Rollout r = argus::simulate(prob.plant(), cfg, argus::Problem::seed_gains(), 1e-3);
    ASSERT_FALSE(r.diverged);
    EXPECT_LT(r.position_error.cwiseAbs().maxCoeff(), 0.2e-3);
    EXPECT_LT(std::abs(r.position_error[r.position_error.size() - 1]), 1e-6);
    const argus::Evaluation e = prob.evaluate(Eigen::Vector3d(200.0, 800.0, 1000.0));
    EXPECT_TRUE(e.settled);
    EXPECT_FALSE(e.diverged);
    EXPECT_NEAR(e.q, -prob.kappa() / 3.0, 1e-12 * prob.kappa());
    EXPECT_NEAR(e.fft_max * 1.5, prob.kappa(), 1e-12 * prob.kappa());
}

TEST(argus, seed_gains_are_safe_at_every_step_size)
{
    for (double step : {1e-5, 1e-4, 1e-3, 1e-2}) {
        const EnvTask t = argus_task(step);
        const argus::Evaluation e = argus::Problem(step).evaluate(t.safe_seed.row(0).transpose());
        EXPECT_TRUE(e.settled) << step;
        EXPECT_LT(e.q, 0.0) << step;
        EXPECT_EQ(t.param("step_size"), step);
    }
    EXPECT_THROW(argus::Problem(1e-6), DomainError);
    EXPECT_THROW(argus::Problem(0.1), DomainError);
}

TEST(argus, zero_gains_give_a_large_objective)
{
    const argus::Problem prob(1e-3);
    const argus::Evaluation s0 = prob.evaluate(Eigen::Vector3d(200.0, 800.0, 1000.0));
    const argus::Evaluation zero = prob.evaluate(Eigen::Vector3d(0.0, 0.0, 0.0));
    EXPECT_FALSE(zero.settled);
    EXPECT_GT(zero.f, 1e3 * s0.f);
}

TEST(argus, aggressive_gains_violate_the_constraint)
{
    const argus::Problem prob(1e-3);
    const argus::Evaluation e = prob.evaluate(Eigen::Vector3d(400.0, 1200.0, 4000.0));
    EXPECT_GT(e.q, 0.0);
    EXPECT_GE(e.f, prob.evaluate(Eigen::Vector3d(200.0, 800.0, 1000.0)).f);
}

TEST(argus, evaluation_is_deterministic)
{
    const EnvTask a = argus_task(2e-4), b = argus_task(2e-4);
    const Eigen::Vector3d x(310.0, 640.0, 2200.0);
    EXPECT_EQ(a.f(x), b.f(x));
    EXPECT_EQ(a.q(x), b.q(x));
    EXPECT_EQ(a.noise_q, b.noise_q);
    EXPECT_EQ(sample_task("argus", 8).param("step_size"), sample_task("argus", 8).param("step_size"));
    EXPECT_THROW(a.f(Eigen::Vector2d(1.0, 2.0)), DimensionError);
}
