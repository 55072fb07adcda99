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
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include <sambo/gp.hpp>

#include "oracles.hpp"

using namespace sambo;

TEST(se_kernel, zero_distance_returns_variance)
{
    Vector x(2);
    x << 0.3, -1.2;
    EXPECT_DOUBLE_EQ(se_kernel(x, x, {0.7, 2.0, 0.1}), 2.0);
}

TEST(se_kernel, decays_to_zero_far_away)
{
    Vector a = Vector::Zero(1), b = Vector::Constant(1, 100.0);
    EXPECT_NEAR(se_kernel(a, b, {1.0, 1.0, 0.1}), 0.0, 1e-10);
}

TEST(se_kernel, unit_distance_value)
{
    Vector a = Vector::Zero(1), b = Vector::Ones(1);
    // 2 exp(-1/2)
    EXPECT_NEAR(se_kernel(a, b, {1.0, 2.0, 0.1}), 1.2130613194252668, 1e-12);
}

TEST(se_kernel, symmetric_exactly)
{
    std::mt19937_64 rng(5);
    for (int i = 0; i < 50; ++i) {
        const Vector a = oracle::uniform_matrix(rng, 3, 1, -3, 3);
        const Vector b = oracle::uniform_matrix(rng, 3, 1, -3, 3);
        const KernelConfig cfg{0.4, 1.7, 0.1};
        EXPECT_EQ(se_kernel(a, b, cfg), se_kernel(b, a, cfg));
    }
}

TEST(se_kernel, dimension_mismatch_throws)
{
    EXPECT_THROW(se_kernel(Vector::Zero(2), Vector::Zero(3), {}), DimensionError);
}

TEST(gp_posterior, empty_data_reverts_to_prior)
{
    const auto prior = GPPrior::vanilla({0.5, 3.0, 0.1});
    std::mt19937_64 rng(1);
    const Matrix Q = oracle::uniform_matrix(rng, 7, 2);
    const auto post = gp_posterior(prior, Matrix(0, 2), Vector(0), Q);
    for (const auto& [m, s] : post) {
        EXPECT_DOUBLE_EQ(m, 0.0);
        EXPECT_NEAR(s, std::sqrt(3.0), 1e-15);
    }
}

TEST(gp_posterior, empty_data_uses_prior_mean)
{
    auto prior = GPPrior::vanilla({0.5, 3.0, 0.1});
    prior.mean_fn = [](const Vector& x) { return 2.0 * x[0] - 1.0; };
    Matrix Q(2, 1);
    Q << 0.0, 1.5;
    const auto post = gp_posterior(prior, Matrix(0, 1), Vector(0), Q);
    EXPECT_DOUBLE_EQ(post[0].first, -1.0);
    EXPECT_DOUBLE_EQ(post[1].first, 2.0);
}

TEST(gp_posterior, interpolates_with_tiny_noise)
{
    const auto prior = GPPrior::vanilla({0.3, 1.0, 1e-6});
    std::mt19937_64 rng(2);
    const Matrix X = oracle::uniform_matrix(rng, 6, 2);
    const Vector y = oracle::uniform_matrix(rng, 6, 1, -1, 1);
    const auto post = gp_posterior(prior, X, y, X);
    for (Index i = 0; i < 6; ++i)
        EXPECT_NEAR(post[i].first, y[i], 1e-3);
}

TEST(gp_posterior, matches_dense_inverse_oracle)
{
    std::mt19937_64 rng(3);
    const Matrix X = oracle::uniform_matrix(rng, 5, 2);
    const Vector y = oracle::uniform_matrix(rng, 5, 1, -2, 2);
    const Matrix Q = oracle::uniform_matrix(rng, 9, 2);
    const double l = 0.35, nu = 1.4, sn = 0.1;
    const auto post = gp_posterior(GPPrior::vanilla({l, nu, sn}), X, y, Q);
    const auto ref = oracle::dense_gp(X, y, Q, l, nu, sn);
    for (Index q = 0; q < Q.rows(); ++q) {
        EXPECT_NEAR(post[q].first, ref.mean[q], 1e-8);
        EXPECT_NEAR(post[q].second, ref.std[q], 1e-8);
    }
}

TEST(gp_posterior, variance_never_increases_with_more_data)
{
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        const Matrix X = oracle::uniform_matrix(rng, 12, 2);
        const Vector y = oracle::uniform_matrix(rng, 12, 1, -1, 1);
        const Matrix Q = oracle::uniform_matrix(rng, 30, 2);
        const auto prior = GPPrior::vanilla({0.2 + 0.05 * trial, 1.0 + 0.1 * trial, 0.05});
        const auto small = GaussianProcess(prior, X.topRows(5), y.head(5)).predict(Q);
        const auto large = GaussianProcess(prior, X, y).predict(Q);
        for (Index i = 0; i < Q.rows(); ++i) {
            EXPECT_LE(large.std[i], small.std[i] + 1e-6);
            EXPECT_LE(small.std[i], std::sqrt(prior.variance) + 1e-12);
        }
    }
}

TEST(gp_posterior, dimension_mismatch_throws)
{
    const auto prior = GPPrior::vanilla({});
    EXPECT_THROW(gp_posterior(prior, Matrix::Zero(3, 2), Vector::Zero(3), Matrix::Zero(1, 3)), DimensionError);
}

TEST(gp_posterior, duplicate_points_need_jitter_but_factorize)
{
    // Noise 1e-9 on duplicated inputs is numerically singular without jitter.
    auto prior = GPPrior::vanilla({1.0, 1.0, 1e-9});
    Matrix X = Matrix::Zero(4, 1);
    Vector y = Vector::Constant(4, 0.5);
    GaussianProcess gp(prior, X, y);
    EXPECT_GT(gp.cholesky().jitter, 0.0);
    EXPECT_NEAR(gp.predict(X).mean[0], 0.5, 1e-6);
}

TEST(gp_posterior, invalid_kernel_fails_to_factorize)
{
    GPPrior prior = GPPrior::vanilla({});
    prior.variance = -1.0; // not a valid covariance
    prior.likelihood_std = 1e-6;
    EXPECT_THROW(GaussianProcess(prior, Matrix::Zero(3, 1), Vector::Zero(3)), FactorizationError);
}

TEST(marginal_log_likelihood, single_point_closed_form)
{
    const double nu = 1.3, sn = 0.2, y0 = 0.7;
    Matrix X(1, 1);
    X << 0.1;
    Vector y(1);
    y << y0;
    const double s2 = nu + sn * sn;
    const double expected = -0.5 * y0 * y0 / s2 - 0.5 * std::log(s2) - 0.5 * std::log(2.0 * std::numbers::pi);
    EXPECT_NEAR(marginal_log_likelihood(GPPrior::vanilla({0.5, nu, sn}), X, y), expected, 1e-12);
}

TEST(marginal_log_likelihood, matches_dense_oracle_six_points)
{
    std::mt19937_64 rng(6);
    const Matrix X = oracle::uniform_matrix(rng, 6, 2);
    const Vector y = oracle::uniform_matrix(rng, 6, 1, -1, 1);
    const double l = 0.4, nu = 2.0, sn = 0.1;
    const auto ref = oracle::dense_gp(X, y, Matrix(0, 2), l, nu, sn);
    EXPECT_NEAR(marginal_log_likelihood(GPPrior::vanilla({l, nu, sn}), X, y), ref.mll, 1e-8);
}

TEST(marginal_log_likelihood, zero_residual_leaves_only_log_det)
{
    std::mt19937_64 rng(7);
    const Matrix X = oracle::uniform_matrix(rng, 4, 2);
    auto prior = GPPrior::vanilla({0.4, 1.0, 0.1});
    prior.mean_fn = [](const Vector& x) { return x.sum(); };
    Vector y(4);
    for (Index i = 0; i < 4; ++i)
        y[i] = X.row(i).sum();
    const auto ref = oracle::dense_gp(X, Vector::Zero(4), Matrix(0, 2), 0.4, 1.0, 0.1);
    EXPECT_NEAR(marginal_log_likelihood(prior, X, y), ref.mll, 1e-10);
}

TEST(marginal_log_likelihood, empty_data_throws)
{
    EXPECT_THROW(marginal_log_likelihood(GPPrior::vanilla({}), Matrix(0, 1), Vector(0)), DimensionError);
}

TEST(beta_of_alpha, matches_gaussian_quantile_oracle)
{
    EXPECT_NEAR(beta_of_alpha(0.6827), 1.0, 1e-3);
    EXPECT_NEAR(beta_of_alpha(0.95), 1.959964, 1e-6);
    for (double a : {0.1, 0.5, 0.8, 0.9, 0.99, 0.999})
        EXPECT_NEAR(beta_of_alpha(a), oracle::gaussian_two_sided_quantile(a), 1e-9);
}

TEST(beta_of_alpha, strictly_increasing)
{
    double prev = 0.0;
    for (int i = 1; i < 100; ++i) {
        const double b = beta_of_alpha(i / 100.0);
        EXPECT_GT(b, prev);
        prev = b;
    }
}

TEST(beta_of_alpha, rejects_levels_outside_open_unit_interval)
{
    EXPECT_THROW(beta_of_alpha(0.0), DomainError);
    EXPECT_THROW(beta_of_alpha(1.0), DomainError);
    EXPECT_THROW(beta_of_alpha(-0.3), DomainError);
}

TEST(confidence_interval, degenerate_and_standard)
{
    const auto d = confidence_interval(1.5, 0.0, 0.9);
    EXPECT_EQ(d.lo, 1.5);
    EXPECT_EQ(d.hi, 1.5);
    const auto ci = confidence_interval(0.0, 1.0, 0.95);
    EXPECT_NEAR(ci.lo, -1.959964, 1e-6);
    EXPECT_NEAR(ci.hi, 1.959964, 1e-6);
}

TEST(confidence_interval, nested_in_alpha)
{
    for (double a1 = 0.05; a1 < 0.95; a1 += 0.1) {
        const auto c1 = confidence_interval(0.3, 0.8, a1);
        const auto c2 = confidence_interval(0.3, 0.8, a1 + 0.04);
        EXPECT_LE(c2.lo, c1.lo);
        EXPECT_GE(c2.hi, c1.hi);
    }
}
