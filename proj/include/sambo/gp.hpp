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

#ifndef SAMBO_GP_HPP
#define SAMBO_GP_HPP

#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <boost/math/distributions/normal.hpp>

#include <sambo/common.hpp>

namespace sambo {

/// Squared-exponential kernel hyper-parameters plus the Gaussian likelihood std.
struct KernelConfig {
    double lengthscale = 1.0;
    double variance = 1.0;
    double likelihood_std = 0.1;

    void validate() const
    {
        if (!(lengthscale > 0.0) || !(variance > 0.0) || !(likelihood_std > 0.0))
            throw DomainError("KernelConfig: lengthscale, variance and likelihood_std must be positive");
    }
};

/// nu * exp(-|x - x'|^2 / (2 l^2))
inline double se_kernel(const Vector& x, const Vector& x_prime, const KernelConfig& cfg)
{
    if (x.size() != x_prime.size())
        throw DimensionError("se_kernel: input dimension mismatch");
    const double l = cfg.lengthscale;
    return cfg.variance * std::exp(-(x - x_prime).squaredNorm() / (2.0 * l * l));
}

/// A GP prior whose kernel is squared-exponential in a (possibly learned)
/// feature space:
///
///     k(x, x') = variance * exp(-|phi(x) - phi(x')|^2 / length_denominator)
///
/// The Vanilla GP uses phi = identity, zero mean and
/// length_denominator = 2 l^2. Meta-learned priors plug in a network for phi
/// and for the mean. Jacobian callbacks are optional; they are only needed by
/// the posterior-mean gradient used for Lipschitz estimates.
struct GPPrior {
    std::function<double(const Vector&)> mean_fn;
    std::function<Vector(const Vector&)> feature_fn;
    std::function<Vector(const Vector&)> mean_gradient_fn;
    std::function<Matrix(const Vector&)> feature_jacobian_fn;
    double variance = 1.0;
    double length_denominator = 2.0;
    double likelihood_std = 0.1;

    static GPPrior vanilla(const KernelConfig& cfg)
    {
        cfg.validate();
        GPPrior p;
        p.variance = cfg.variance;
        p.length_denominator = 2.0 * cfg.lengthscale * cfg.lengthscale;
        p.likelihood_std = cfg.likelihood_std;
        return p;
    }

    double mean(const Vector& x) const { return mean_fn ? mean_fn(x) : 0.0; }
    Vector features(const Vector& x) const { return feature_fn ? feature_fn(x) : x; }

    double kernel(const Vector& x, const Vector& x_prime) const
    {
        return variance * std::exp(-(features(x) - features(x_prime)).squaredNorm() / length_denominator);
    }

    double prior_std(const Vector&) const { return std::sqrt(variance); }
    double noise_variance() const { return likelihood_std * likelihood_std; }
};

/// Prior quantities of a batch of points, computed once so that repeated
/// conditioning does not re-run feature networks.
struct Embedding {
    Matrix features; // one row per point
    Vector mean;

    Index size() const { return mean.size(); }
};

inline Embedding embed(const GPPrior& prior, const Matrix& X)
{
    Embedding e;
    e.mean.resize(X.rows());
    if (!prior.feature_fn) {
        e.features = X;
        if (prior.mean_fn)
            for (Index i = 0; i < X.rows(); ++i)
                e.mean[i] = prior.mean_fn(X.row(i).transpose());
        else
            e.mean.setZero();
        return e;
    }
    for (Index i = 0; i < X.rows(); ++i) {
        const Vector x = X.row(i).transpose();
        const Vector phi = prior.feature_fn(x);
        if (i == 0)
            e.features.resize(X.rows(), phi.size());
        e.features.row(i) = phi.transpose();
        e.mean[i] = prior.mean(x);
    }
    if (X.rows() == 0)
        e.features.resize(0, X.cols());
    return e;
}

inline Matrix squared_distances(const Matrix& A, const Matrix& B)
{
    const Vector a2 = A.rowwise().squaredNorm();
    const Vector b2 = B.rowwise().squaredNorm();
    Matrix D = (-2.0 * A * B.transpose()).colwise() + a2;
    D.rowwise() += b2.transpose();
    return D.cwiseMax(0.0);
}

inline Matrix kernel_matrix(const GPPrior& prior, const Matrix& FA, const Matrix& FB)
{
    return prior.variance * (-squared_distances(FA, FB) / prior.length_denominator).array().exp().matrix();
}

/// Cholesky factorization with an adaptive jitter schedule. The matrix is
/// tried as-is first; on failure a mean-diagonal scaled jitter starting at
/// 1e-10 is added and escalated by 10x up to 1e-4.
struct RobustCholesky {
    Eigen::LLT<Matrix> llt;
    double jitter = 0.0;

    explicit RobustCholesky(const Matrix& A)
    {
        const Index n = A.rows();
        if (n == 0)
            return;
        llt.compute(A);
        if (llt.info() == Eigen::Success && ok())
            return;
        const double scale = std::max(A.diagonal().mean(), std::numeric_limits<double>::min());
        for (double rel = 1e-10; rel <= 1e-4 * 1.0001; rel *= 10.0) {
            jitter = rel * scale;
            Matrix Aj = A;
            Aj.diagonal().array() += jitter;
            llt.compute(Aj);
            if (llt.info() == Eigen::Success && ok())
                return;
        }
        throw FactorizationError("Cholesky factorization failed after jitter escalation");
    }

    Matrix L() const { return llt.matrixL(); }

    double log_det() const
    {
        if (llt.rows() == 0)
            return 0.0;
        return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    }

private:
    bool ok() const
    {
        const auto d = llt.matrixLLT().diagonal();
        for (Index i = 0; i < d.size(); ++i)
            if (!(d[i] > 0.0) || !std::isfinite(d[i]))
                return false;
        return true;
    }
};

struct Prediction {
    Vector mean;
    Vector std; // latent function std
};

/// Exact GP regression conditioned on a fixed dataset.
class GaussianProcess {
public:
    GaussianProcess(GPPrior prior, const Matrix& X, const Vector& y)
        : _prior(std::move(prior)), _X(X), _y(y), _train(embed(_prior, X)),
          _chol(train_covariance())
    {
        if (X.rows() != y.size())
            throw DimensionError("GaussianProcess: inputs and targets differ in length");
        if (num_data() > 0)
            _alpha = _chol.llt.solve(y - _train.mean);
    }

    const GPPrior& prior() const { return _prior; }
    Index num_data() const { return _y.size(); }
    const Matrix& inputs() const { return _X; }
    const Vector& targets() const { return _y; }
    const Embedding& train_embedding() const { return _train; }
    const RobustCholesky& cholesky() const { return _chol; }
    const Vector& alpha() const { return _alpha; }

    Prediction predict(const Matrix& Xq) const
    {
        if (num_data() > 0 && Xq.cols() != _X.cols())
            throw DimensionError("GaussianProcess::predict: query dimension mismatch");
        return predict(embed(_prior, Xq));
    }

    Prediction predict(const Embedding& q) const
    {
        Prediction p;
        p.mean = q.mean;
        Vector var = Vector::Constant(q.size(), _prior.variance);
        if (num_data() > 0) {
            const Matrix Kxq = kernel_matrix(_prior, _train.features, q.features);
            p.mean += Kxq.transpose() * _alpha;
            const Matrix V = _chol.llt.matrixL().solve(Kxq);
            var -= V.colwise().squaredNorm().transpose();
        }
        p.std = var.cwiseMax(0.0).cwiseSqrt();
        return p;
    }

    /// L^{-1} k(X_train, q); posterior covariance is k(a,b) - V_a . V_b.
    Matrix whitened_cross(const Embedding& q) const
    {
        if (num_data() == 0)
            return Matrix(0, q.size());
        return _chol.llt.matrixL().solve(kernel_matrix(_prior, _train.features, q.features));
    }

    /// ln p(y | X): -1/2 r^T K~^-1 r - 1/2 ln|K~| - T/2 ln 2pi, with K~ = K + s^2 I.
    double log_marginal_likelihood() const
    {
        const Vector r = _y - _train.mean;
        return -0.5 * r.dot(_alpha) - 0.5 * _chol.log_det()
               - 0.5 * static_cast<double>(num_data()) * std::log(2.0 * std::numbers::pi);
    }

private:
    Matrix train_covariance() const
    {
        Matrix K = kernel_matrix(_prior, _train.features, _train.features);
        K.diagonal().array() += _prior.noise_variance();
        return K;
    }

    GPPrior _prior;
    Matrix _X;
    Vector _y;
    Embedding _train;
    RobustCholesky _chol;
    Vector _alpha;
};

/// Posterior (mean, latent std) at each query row.
inline std::vector<std::pair<double, double>> gp_posterior(const GPPrior& prior, const Matrix& X,
                                                           const Vector& y, const Matrix& queries)
{
    if (X.rows() > 0 && X.cols() != queries.cols())
        throw DimensionError("gp_posterior: data and query dimension mismatch");
    const GaussianProcess gp(prior, X, y);
    const Prediction p = gp.predict(queries);
    std::vector<std::pair<double, double>> out(p.mean.size());
    for (Index i = 0; i < p.mean.size(); ++i)
        out[i] = {p.mean[i], p.std[i]};
    return out;
}

inline double marginal_log_likelihood(const GPPrior& prior, const Matrix& X, const Vector& y)
{
    if (y.size() == 0)
        throw DimensionError("marginal_log_likelihood: empty dataset");
    return GaussianProcess(prior, X, y).log_marginal_likelihood();
}

/// Two-sided Gaussian quantile Phi^-1((1 + alpha) / 2).
inline double beta_of_alpha(double alpha)
{
    if (!(alpha > 0.0 && alpha < 1.0))
        throw DomainError("beta_of_alpha: alpha must lie in (0, 1)");
    static const boost::math::normal_distribution<double> standard;
    return boost::math::quantile(standard, 0.5 * (1.0 + alpha));
}

struct Interval {
    double lo;
    double hi;

    bool contains(double y) const { return lo <= y && y <= hi; }
};

inline Interval confidence_interval(double mean, double std, double alpha)
{
    const double b = beta_of_alpha(alpha);
    return {mean - b * std, mean + b * std};
}

} // namespace sambo

#endif
