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

// F-PACOH meta-learning of a GP prior.
//
// The learned prior has a network mean m(x) and the kernel
//
//     k(x, x') = nu_P exp(-|phi(x) - phi(x')|^2 / (2 l_P))
//
// with phi a second network. Training minimizes, averaged over tasks,
//
//     -ln Z_i / T_i + (1/sqrt(n) + 1/(n T_i)) KL[q(h^X_i) || rho(h^X_i)]
//
// where rho is the Vanilla GP hyper-prior and X_i a measurement set drawn
// fresh every step: half from the task inputs, the rest uniform over the
// domain.

#ifndef SAMBO_META_PRIOR_HPP
#define SAMBO_META_PRIOR_HPP

#include <cmath>
#include <memory>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include <sambo/autodiff.hpp>
#include <sambo/common.hpp>
#include <sambo/gp.hpp>

namespace sambo {

class MetaTrainError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Fully connected tanh network with a linear output layer.
/// weights[k] is (fan_in x fan_out); a batch is one row per point.
struct Mlp {
    std::vector<Matrix> weights;
    std::vector<Vector> biases;

    Index input_dim() const { return weights.empty() ? 0 : weights.front().rows(); }
    Index output_dim() const { return weights.empty() ? 0 : weights.back().cols(); }
    std::size_t num_layers() const { return weights.size(); }

    std::vector<Index> hidden() const
    {
        std::vector<Index> h;
        for (std::size_t k = 0; k + 1 < weights.size(); ++k)
            h.push_back(weights[k].cols());
        return h;
    }

    Index num_parameters() const
    {
        Index n = 0;
        for (std::size_t k = 0; k < weights.size(); ++k)
            n += weights[k].size() + biases[k].size();
        return n;
    }

    static Mlp zeros(Index in, const std::vector<Index>& hidden, Index out)
    {
        Mlp m;
        Index prev = in;
        for (Index h : hidden) {
            m.weights.push_back(Matrix::Zero(prev, h));
            m.biases.push_back(Vector::Zero(h));
            prev = h;
        }
        m.weights.push_back(Matrix::Zero(prev, out));
        m.biases.push_back(Vector::Zero(out));
        return m;
    }

    /// U(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
    static Mlp uniform_init(Index in, const std::vector<Index>& hidden, Index out, Rng& rng)
    {
        Mlp m = zeros(in, hidden, out);
        for (std::size_t k = 0; k < m.weights.size(); ++k) {
            const double a = 1.0 / std::sqrt(static_cast<double>(m.weights[k].rows()));
            for (Index j = 0; j < m.weights[k].cols(); ++j)
                for (Index i = 0; i < m.weights[k].rows(); ++i)
                    m.weights[k](i, j) = uniform(rng, -a, a);
            for (Index i = 0; i < m.biases[k].size(); ++i)
                m.biases[k][i] = uniform(rng, -a, a);
        }
        return m;
    }

    Matrix forward_batch(const Matrix& X) const
    {
        if (X.cols() != input_dim())
            throw DimensionError("Mlp: input dimension mismatch");
        Matrix H = X;
        for (std::size_t k = 0; k < weights.size(); ++k) {
            Matrix A = H * weights[k];
            A.rowwise() += biases[k].transpose();
            H = k + 1 < weights.size() ? Matrix(A.array().tanh().matrix()) : A;
        }
        return H;
    }

    Vector forward(const Vector& x) const
    {
        if (x.size() != input_dim())
            throw DimensionError("Mlp: input dimension mismatch");
        Vector h = x;
        for (std::size_t k = 0; k < weights.size(); ++k) {
            Vector a = weights[k].transpose() * h + biases[k];
            h = k + 1 < weights.size() ? Vector(a.array().tanh().matrix()) : a;
        }
        return h;
    }

    /// d forward(x) / dx, (output_dim x input_dim).
    Matrix jacobian(const Vector& x) const
    {
        if (x.size() != input_dim())
            throw DimensionError("Mlp: input dimension mismatch");
        Vector h = x;
        Matrix J = Matrix::Identity(x.size(), x.size());
        for (std::size_t k = 0; k < weights.size(); ++k) {
            Vector a = weights[k].transpose() * h + biases[k];
            J = weights[k].transpose() * J;
            if (k + 1 < weights.size()) {
                h = a.array().tanh().matrix();
                J = (1.0 - h.array().square()).matrix().asDiagonal() * J;
            } else {
                h = a;
            }
        }
        return J;
    }

    void write(Vector& theta, Index& pos) const
    {
        for (std::size_t k = 0; k < weights.size(); ++k) {
            theta.segment(pos, weights[k].size()) = weights[k].reshaped();
            pos += weights[k].size();
            theta.segment(pos, biases[k].size()) = biases[k];
            pos += biases[k].size();
        }
    }

    void read(const Vector& theta, Index& pos)
    {
        for (std::size_t k = 0; k < weights.size(); ++k) {
            weights[k].reshaped() = theta.segment(pos, weights[k].size());
            pos += weights[k].size();
            biases[k] = theta.segment(pos, biases[k].size());
            pos += biases[k].size();
        }
    }
};

inline Vector nn_forward(const Mlp& net, const Vector& x)
{
    return net.forward(x);
}

/// Network parameters as tape leaves, in the order of Mlp::write.
struct MlpVars {
    std::vector<ad::Var> weights;
    std::vector<ad::Var> biases;
};

inline MlpVars mlp_leaves(ad::Tape& tape, const Mlp& net)
{
    MlpVars v;
    for (std::size_t k = 0; k < net.weights.size(); ++k) {
        v.weights.push_back(tape.leaf(net.weights[k]));
        v.biases.push_back(tape.leaf(net.biases[k].transpose()));
    }
    return v;
}

inline ad::Var mlp_forward(const MlpVars& p, const ad::Var& X)
{
    ad::Var H = X;
    for (std::size_t k = 0; k < p.weights.size(); ++k) {
        H = ad::add_rowwise(ad::matmul(H, p.weights[k]), p.biases[k]);
        if (k + 1 < p.weights.size())
            H = ad::tanh(H);
    }
    return H;
}

inline void mlp_gradients(const ad::Tape& tape, const MlpVars& p, Vector& g, Index& pos)
{
    for (std::size_t k = 0; k < p.weights.size(); ++k) {
        const Matrix gw = tape.grad(p.weights[k]);
        g.segment(pos, gw.size()) = gw.reshaped();
        pos += gw.size();
        const Matrix gb = tape.grad(p.biases[k]);
        g.segment(pos, gb.size()) = gb.reshaped();
        pos += gb.size();
    }
}

/// Meta-learned GP prior. nu_P and l_P are kept in log space; the
/// likelihood std is fixed.
struct LearnablePrior {
    Mlp mean_net;
    Mlp feature_net;
    double log_variance = 0.0;
    double log_lengthscale = 0.0;
    double likelihood_std = 0.1;

    static constexpr int format_version = 1;

    double variance() const { return std::exp(log_variance); }
    double lengthscale() const { return std::exp(log_lengthscale); }
    Index input_dim() const { return mean_net.input_dim(); }

    Index num_parameters() const { return mean_net.num_parameters() + feature_net.num_parameters() + 2; }

    /// Mean net, feature net, log nu_P, log l_P.
    Vector flatten() const
    {
        Vector theta(num_parameters());
        Index pos = 0;
        mean_net.write(theta, pos);
        feature_net.write(theta, pos);
        theta[pos++] = log_variance;
        theta[pos++] = log_lengthscale;
        return theta;
    }

    void assign(const Vector& theta)
    {
        if (theta.size() != num_parameters())
            throw DimensionError("LearnablePrior::assign: parameter count mismatch");
        Index pos = 0;
        mean_net.read(theta, pos);
        feature_net.read(theta, pos);
        log_variance = theta[pos++];
        log_lengthscale = theta[pos++];
    }

    double mean(const Vector& x) const { return mean_net.forward(x)[0]; }
    Vector features(const Vector& x) const { return feature_net.forward(x); }

    double kernel(const Vector& x, const Vector& x_prime) const
    {
        return variance() * std::exp(-(features(x) - features(x_prime)).squaredNorm() / (2.0 * lengthscale()));
    }

    /// The prior as a GPPrior usable by GaussianProcess and the BO loops.
    GPPrior gp_prior() const
    {
        auto self = std::make_shared<const LearnablePrior>(*this);
        GPPrior p;
        p.mean_fn = [self](const Vector& x) { return self->mean(x); };
        p.feature_fn = [self](const Vector& x) { return self->features(x); };
        p.mean_gradient_fn = [self](const Vector& x) -> Vector { return self->mean_net.jacobian(x).row(0).transpose(); };
        p.feature_jacobian_fn = [self](const Vector& x) { return self->feature_net.jacobian(x); };
        p.variance = variance();
        p.length_denominator = 2.0 * lengthscale();
        p.likelihood_std = likelihood_std;
        return p;
    }
};

/// Initial prior: uniform fan-in weights, nu_P = nu_h and l_P = l_h^2 so the
/// kernel starts on the hyper-prior's scale.
inline LearnablePrior init_prior(Index input_dim, const KernelConfig& hyper, Rng& rng,
                                 const std::vector<Index>& hidden = {32, 32, 32})
{
    hyper.validate();
    LearnablePrior p;
    p.mean_net = Mlp::uniform_init(input_dim, hidden, 1, rng);
    p.feature_net = Mlp::uniform_init(input_dim, hidden, input_dim, rng);
    p.log_variance = std::log(hyper.variance);
    p.log_lengthscale = 2.0 * std::log(hyper.lengthscale);
    p.likelihood_std = hyper.likelihood_std;
    return p;
}

inline double nn_kernel(const LearnablePrior& prior, const Vector& x, const Vector& x_prime)
{
    return prior.kernel(x, x_prime);
}

constexpr double kl_jitter = 1e-8;

/// KL[N(m0, S0) || N(m1, S1)], both covariances jittered by 1e-8.
inline double gaussian_kl(const Vector& m0, const Matrix& S0, const Vector& m1, const Matrix& S1)
{
    const Index k = m0.size();
    if (m1.size() != k || S0.rows() != k || S0.cols() != k || S1.rows() != k || S1.cols() != k)
        throw DimensionError("gaussian_kl: shape mismatch");
    Matrix A = S0, B = S1;
    A.diagonal().array() += kl_jitter;
    B.diagonal().array() += kl_jitter;
    const RobustCholesky c0(A), c1(B);
    const Vector d = m1 - m0;
    const double tr = c1.llt.solve(A).trace();
    const double q = d.dot(c1.llt.solve(d));
    return std::max(0.0, 0.5 * (tr + q - static_cast<double>(k) + c1.log_det() - c0.log_det()));
}

/// k points: min(k/2, T) task inputs without replacement, the rest uniform
/// over `domain`.
inline Matrix sample_measurement_set(const TaskDataset& task, const Bounds& domain, int k, Rng& rng)
{
    if (k < 1)
        throw DomainError("sample_measurement_set: k must be positive");
    if (task.dim() != domain.dim())
        throw DimensionError("sample_measurement_set: task and domain dimension differ");
    const Index from_task = std::min<Index>(k / 2, task.size());
    std::vector<Index> idx(static_cast<std::size_t>(task.size()));
    for (Index i = 0; i < task.size(); ++i)
        idx[i] = i;
    Matrix X(k, domain.dim());
    for (Index j = 0; j < from_task; ++j) {
        const Index pick = j + static_cast<Index>(uniform_index(rng, static_cast<std::uint64_t>(task.size() - j)));
        std::swap(idx[j], idx[pick]);
        X.row(j) = task.inputs.row(idx[j]);
    }
    for (Index j = from_task; j < k; ++j)
        X.row(j) = uniform_point(rng, domain).transpose();
    return X;
}

struct LossOptions {
    double kl_multiplier = 1.0; // scales the KL weight; 1 is the plain objective
};

namespace detail {

struct PriorVars {
    MlpVars mean;
    MlpVars feature;
    ad::Var log_variance;
    ad::Var log_lengthscale;
};

inline PriorVars prior_leaves(ad::Tape& t, const LearnablePrior& p)
{
    return {mlp_leaves(t, p.mean_net), mlp_leaves(t, p.feature_net), t.scalar_leaf(p.log_variance),
            t.scalar_leaf(p.log_lengthscale)};
}

/// Noise-free kernel matrix of the learned prior on the rows of X.
inline ad::Var learned_gram(const PriorVars& v, const ad::Var& X)
{
    const ad::Var D = ad::pairwise_sq_dist(mlp_forward(v.feature, X));
    const ad::Var l2 = ad::scale(ad::exp(v.log_lengthscale), 2.0);
    return ad::scalar_mul(ad::exp(v.log_variance), ad::exp(ad::scale(ad::scalar_div(D, l2), -1.0)));
}

/// One task's term of the loss, recorded on `t`.
inline ad::Var task_loss(ad::Tape& t, const PriorVars& v, const LearnablePrior& p, const TaskDataset& d,
                         const GPPrior& hyper, const Matrix& measurement, double kl_weight)
{
    const double T = static_cast<double>(d.size());
    const ad::Var X = t.constant(d.inputs);
    const ad::Var r = ad::sub(t.constant(d.targets), mlp_forward(v.mean, X));
    const ad::Var K = ad::add_diag(learned_gram(v, X), p.likelihood_std * p.likelihood_std);
    const ad::Var neg_mll = ad::add_scalar(ad::scale(ad::add(ad::quad_form(K, r), ad::logdet(K)), 0.5),
                                           0.5 * T * std::log(2.0 * std::numbers::pi));
    ad::Var out = ad::scale(neg_mll, 1.0 / T);
    if (kl_weight == 0.0)
        return out;

    const Index k = measurement.rows();
    const ad::Var M = t.constant(measurement);
    const ad::Var mq = mlp_forward(v.mean, M);
    const ad::Var Kq = ad::add_diag(learned_gram(v, M), kl_jitter);
    Matrix Kh = kernel_matrix(hyper, measurement, measurement);
    Kh.diagonal().array() += kl_jitter;
    const RobustCholesky ch(Kh);
    const ad::Var Khv = t.constant(Kh);
    const ad::Var kl = ad::scale(
        ad::add_scalar(ad::sub(ad::add(ad::trace(ad::solve_spd(Khv, Kq)), ad::quad_form(Khv, mq)), ad::logdet(Kq)),
                       ch.log_det() - static_cast<double>(k)),
        0.5);
    return ad::add(out, ad::scale(kl, kl_weight));
}

} // namespace detail

struct LossAndGradient {
    double loss = 0.0;
    Vector gradient;
};

/// Loss on fixed measurement sets (one per task) and its gradient w.r.t.
/// LearnablePrior::flatten(). Tasks are taped separately and reduced in task
/// order, so `parallelism` does not change the result.
inline LossAndGradient fpacoh_loss_and_gradient(const LearnablePrior& prior, const std::vector<TaskDataset>& datasets,
                                                const GPPrior& hyper, const std::vector<Matrix>& measurement_sets,
                                                const LossOptions& opts = {}, bool with_gradient = true,
                                                int parallelism = 1)
{
    if (datasets.empty())
        throw DimensionError("fpacoh_loss: no datasets");
    if (measurement_sets.size() != datasets.size())
        throw DimensionError("fpacoh_loss: one measurement set per task required");
    for (const auto& d : datasets)
        if (d.size() < 1 || d.dim() != prior.input_dim())
            throw DimensionError("fpacoh_loss: task '" + d.task_id + "' is empty or has the wrong input dimension");
    const double n = static_cast<double>(datasets.size());
    const Index P = prior.num_parameters();
    std::vector<double> losses(datasets.size());
    std::vector<Vector> grads(datasets.size());
    parallel_for(static_cast<Index>(datasets.size()), parallelism, [&](Index i) {
        const auto& d = datasets[i];
        const double w = opts.kl_multiplier * (1.0 / std::sqrt(n) + 1.0 / (n * static_cast<double>(d.size())));
        ad::Tape tape;
        const auto v = detail::prior_leaves(tape, prior);
        const ad::Var li = detail::task_loss(tape, v, prior, d, hyper, measurement_sets[i], w);
        losses[i] = li.scalar();
        if (!with_gradient)
            return;
        tape.backward(li);
        Vector g(P);
        Index pos = 0;
        mlp_gradients(tape, v.mean, g, pos);
        mlp_gradients(tape, v.feature, g, pos);
        g[pos++] = tape.grad(v.log_variance)(0, 0);
        g[pos++] = tape.grad(v.log_lengthscale)(0, 0);
        grads[i] = std::move(g);
    });
    LossAndGradient out;
    out.gradient = Vector::Zero(with_gradient ? P : 0);
    for (std::size_t i = 0; i < datasets.size(); ++i) {
        out.loss += losses[i];
        if (with_gradient)
            out.gradient += grads[i];
    }
    out.loss /= n;
    out.gradient /= n;
    return out;
}

inline double fpacoh_loss(const LearnablePrior& prior, const std::vector<TaskDataset>& datasets, const GPPrior& hyper,
                          const std::vector<Matrix>& measurement_sets, const LossOptions& opts = {})
{
    return fpacoh_loss_and_gradient(prior, datasets, hyper, measurement_sets, opts, false).loss;
}

/// Adam with bias correction.
class Adam {
public:
    Adam(Index n, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : _lr(lr), _b1(beta1), _b2(beta2), _eps(eps), _m(Vector::Zero(n)), _v(Vector::Zero(n))
    {
    }

    void step(Vector& theta, const Vector& grad)
    {
        ++_t;
        _m = _b1 * _m + (1.0 - _b1) * grad;
        _v = _b2 * _v + (1.0 - _b2) * grad.cwiseProduct(grad);
        const double c1 = 1.0 - std::pow(_b1, _t);
        const double c2 = 1.0 - std::pow(_b2, _t);
        theta.array() -= _lr * (_m.array() / c1) / ((_v.array() / c2).sqrt() + _eps);
    }

private:
    double _lr, _b1, _b2, _eps;
    Vector _m, _v;
    int _t = 0;
};

struct MetaTrainOptions {
    int iterations = 5000;
    double learning_rate = 1e-3;
    int measurement_size = 20;
    double kl_multiplier = 1.0;
    std::uint64_t seed = 0;
    std::vector<Index> hidden{32, 32, 32};
    int parallelism = 1;
};

struct MetaTrainResult {
    LearnablePrior prior;
    std::vector<double> loss_trace; // loss before each update
};

/// Adam on the F-PACOH loss, one fresh measurement set per task per step.
/// Deterministic for a fixed seed.
inline MetaTrainResult meta_train(const std::vector<TaskDataset>& datasets, const Bounds& domain,
                                  const KernelConfig& hyper, const MetaTrainOptions& opts = {})
{
    domain.validate();
    if (datasets.empty())
        throw DimensionError("meta_train: no datasets");
    Rng init_rng(derive_seed(opts.seed, 0));
    Rng sample_rng(derive_seed(opts.seed, 1));
    MetaTrainResult res;
    res.prior = init_prior(domain.dim(), hyper, init_rng, opts.hidden);
    const GPPrior hp = GPPrior::vanilla(hyper);
    Vector theta = res.prior.flatten();
    Adam adam(theta.size(), opts.learning_rate);
    const LossOptions lo{opts.kl_multiplier};
    for (int it = 0; it < opts.iterations; ++it) {
        std::vector<Matrix> sets;
        for (const auto& d : datasets)
            sets.push_back(sample_measurement_set(d, domain, opts.measurement_size, sample_rng));
        const auto lg = fpacoh_loss_and_gradient(res.prior, datasets, hp, sets, lo, true, opts.parallelism);
        if (!std::isfinite(lg.loss) || !lg.gradient.allFinite())
            throw MetaTrainError("meta_train: non-finite loss " + std::to_string(lg.loss) + " at iteration " +
                                 std::to_string(it));
        res.loss_trace.push_back(lg.loss);
        adam.step(theta, lg.gradient);
        res.prior.assign(theta);
    }
    return res;
}

// ---- serialization ----

namespace detail {

inline nlohmann::json mlp_to_json(const Mlp& m)
{
    nlohmann::json layers = nlohmann::json::array();
    for (std::size_t k = 0; k < m.weights.size(); ++k) {
        nlohmann::json W = nlohmann::json::array();
        for (Index i = 0; i < m.weights[k].rows(); ++i) {
            std::vector<double> row(m.weights[k].row(i).begin(), m.weights[k].row(i).end());
            W.push_back(row);
        }
        std::vector<double> b(m.biases[k].begin(), m.biases[k].end());
        layers.push_back({{"W", W}, {"b", b}});
    }
    return layers;
}

inline Mlp mlp_from_json(const nlohmann::json& j)
{
    Mlp m;
    for (const auto& layer : j) {
        const auto& W = layer.at("W");
        const Index rows = static_cast<Index>(W.size());
        const Index cols = rows ? static_cast<Index>(W[0].size()) : 0;
        Matrix M(rows, cols);
        for (Index i = 0; i < rows; ++i) {
            if (static_cast<Index>(W[i].size()) != cols)
                throw DimensionError("prior json: ragged weight matrix");
            for (Index c = 0; c < cols; ++c)
                M(i, c) = W[i][c].get<double>();
        }
        const auto b = layer.at("b").get<std::vector<double>>();
        if (static_cast<Index>(b.size()) != cols)
            throw DimensionError("prior json: bias length mismatch");
        if (!m.weights.empty() && m.weights.back().cols() != rows)
            throw DimensionError("prior json: consecutive layers do not chain");
        m.weights.push_back(M);
        m.biases.push_back(Eigen::Map<const Vector>(b.data(), cols));
    }
    return m;
}

} // namespace detail

inline nlohmann::json prior_to_json(const LearnablePrior& p)
{
    return {{"format", "sambo.learnable_prior"},
            {"version", LearnablePrior::format_version},
            {"architecture",
             {{"input_dim", p.input_dim()},
              {"hidden", p.mean_net.hidden()},
              {"feature_dim", p.feature_net.output_dim()},
              {"activation", "tanh"}}},
            {"mean_net", detail::mlp_to_json(p.mean_net)},
            {"feature_net", detail::mlp_to_json(p.feature_net)},
            {"log_variance", p.log_variance},
            {"log_lengthscale", p.log_lengthscale},
            {"likelihood_std", p.likelihood_std}};
}

inline LearnablePrior prior_from_json(const nlohmann::json& j)
{
    if (j.value("format", "") != "sambo.learnable_prior")
        throw DomainError("prior json: unknown format");
    if (j.value("version", 0) != LearnablePrior::format_version)
        throw DomainError("prior json: unsupported version");
    if (j.at("architecture").value("activation", "") != "tanh")
        throw DomainError("prior json: unsupported activation");
    LearnablePrior p;
    p.mean_net = detail::mlp_from_json(j.at("mean_net"));
    p.feature_net = detail::mlp_from_json(j.at("feature_net"));
    p.log_variance = j.at("log_variance").get<double>();
    p.log_lengthscale = j.at("log_lengthscale").get<double>();
    p.likelihood_std = j.at("likelihood_std").get<double>();
    if (p.mean_net.output_dim() != 1 || p.feature_net.input_dim() != p.mean_net.input_dim())
        throw DimensionError("prior json: inconsistent network shapes");
    return p;
}

} // namespace sambo

#endif
