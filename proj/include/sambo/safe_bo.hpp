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

#ifndef SAMBO_SAFE_BO_HPP
#define SAMBO_SAFE_BO_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include <sambo/common.hpp>
#include <sambo/environments.hpp>
#include <sambo/gp.hpp>

namespace sambo {

/// Raised when a query would leave the safe set. Never expected; it marks a
/// bug in set maintenance.
class SafetyAuditError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

class EmptySafeSetError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct DiscreteDomain {
    Matrix points;  // one row per point, raw coordinates
    Bounds bounds;
    std::uint64_t seed = 0;
    std::vector<Index> seed_indices;

    Index size() const { return points.rows(); }
};

/// N i.i.d. uniform points followed by the rows of `safe_seed`.
inline DiscreteDomain discretize(const Bounds& bounds, Index N, std::uint64_t seed, const Matrix& safe_seed = Matrix())
{
    bounds.validate();
    if (N < 1)
        throw DomainError("discretize: N must be at least 1");
    if (safe_seed.size() > 0 && safe_seed.cols() != bounds.dim())
        throw DimensionError("discretize: seed points have the wrong dimension");
    DiscreteDomain d;
    d.bounds = bounds;
    d.seed = seed;
    d.points.resize(N + safe_seed.rows(), bounds.dim());
    Rng rng(seed);
    for (Index i = 0; i < N; ++i)
        d.points.row(i) = uniform_point(rng, bounds).transpose();
    for (Index i = 0; i < safe_seed.rows(); ++i) {
        d.points.row(N + i) = safe_seed.row(i);
        d.seed_indices.push_back(N + i);
    }
    return d;
}

enum class Algorithm { SafeOpt, GoOSE };

inline std::string to_string(Algorithm a)
{
    return a == Algorithm::SafeOpt ? "safeopt" : "goose";
}

inline Algorithm algorithm_from_string(const std::string& s)
{
    if (s == "safeopt")
        return Algorithm::SafeOpt;
    if (s == "goose")
        return Algorithm::GoOSE;
    throw DomainError("unknown safe BO algorithm '" + s + "'");
}

struct SafeBOOptions {
    double alpha = 0.99;
    double epsilon = 0.2;
    int max_inner_rounds = 25;
};

/// Gradient of the posterior mean at each row of `points`, one row each.
/// Feature-space SE kernels use the prior's Jacobian callbacks; a feature map
/// without one falls back to central differences.
inline Matrix posterior_mean_gradients(const GaussianProcess& gp, const Matrix& points, const Embedding& emb)
{
    const GPPrior& prior = gp.prior();
    const Index N = points.rows(), d = points.cols();
    Matrix grad = Matrix::Zero(N, d);
    if (prior.mean_gradient_fn)
        for (Index i = 0; i < N; ++i)
            grad.row(i) = prior.mean_gradient_fn(points.row(i).transpose()).transpose();
    if (gp.num_data() == 0)
        return grad;
    const Matrix& Ft = gp.train_embedding().features;
    const Matrix W = kernel_matrix(prior, emb.features, Ft) * gp.alpha().asDiagonal();
    const Vector s = W.rowwise().sum();
    const Matrix Gphi = (-2.0 / prior.length_denominator) * (s.asDiagonal() * emb.features - W * Ft);
    if (!prior.feature_fn) {
        grad += Gphi;
        return grad;
    }
    for (Index i = 0; i < N; ++i) {
        const Vector x = points.row(i).transpose();
        Matrix J;
        if (prior.feature_jacobian_fn) {
            J = prior.feature_jacobian_fn(x);
        } else {
            J.resize(emb.features.cols(), d);
            const double h = 1e-6;
            for (Index j = 0; j < d; ++j) {
                Vector xp = x, xm = x;
                xp[j] += h;
                xm[j] -= h;
                J.col(j) = (prior.features(xp) - prior.features(xm)) / (2.0 * h);
            }
        }
        grad.row(i) += (J.transpose() * Gphi.row(i).transpose()).transpose();
    }
    return grad;
}

/// sup-norm of the posterior-mean gradient over the points.
inline double lipschitz_estimate(const GaussianProcess& gp, const Matrix& points, const Embedding& emb)
{
    if (points.rows() == 0)
        return 0.0;
    return posterior_mean_gradients(gp, points, emb).cwiseAbs().maxCoeff();
}

/// Posterior over a fixed domain, refit after every observation. Inputs are
/// in the GP's (standardized) coordinates; observations are made at domain
/// indices.
class SafeBOState {
public:
    SafeBOState(GPPrior prior_f, GPPrior prior_q, Matrix domain, std::vector<Index> seed_indices,
                SafeBOOptions opts = {})
        : _prior_f(std::move(prior_f)), _prior_q(std::move(prior_q)), _domain(std::move(domain)),
          _seeds(std::move(seed_indices)), _opts(opts), _beta(beta_of_alpha(opts.alpha)),
          _emb_f(embed(_prior_f, _domain)), _emb_q(embed(_prior_q, _domain)),
          _is_seed(static_cast<std::size_t>(_domain.rows()), 0)
    {
        for (Index s : _seeds) {
            if (s < 0 || s >= _domain.rows())
                throw DimensionError("safe BO: seed index outside the domain");
            _is_seed[static_cast<std::size_t>(s)] = 1;
        }
        refit();
    }

    Index size() const { return _domain.rows(); }
    double beta() const { return _beta; }
    const Matrix& domain() const { return _domain; }
    const std::vector<Index>& observed() const { return _idx; }
    const Vector& mean_f() const { return _mu_f; }
    const Vector& std_f() const { return _sd_f; }
    const Vector& mean_q() const { return _mu_q; }
    const Vector& std_q() const { return _sd_q; }
    const GaussianProcess& gp_q() const { return *_gp_q; }
    const GaussianProcess& gp_f() const { return *_gp_f; }
    const Embedding& embedding_q() const { return _emb_q; }
    Index fallbacks() const { return _fallbacks; }
    bool is_seed(Index i) const { return _is_seed[static_cast<std::size_t>(i)] != 0; }

    double ucb_q(Index i) const { return _mu_q[i] + _beta * _sd_q[i]; }
    double lcb_q(Index i) const { return _mu_q[i] - _beta * _sd_q[i]; }
    double lcb_f(Index i) const { return _mu_f[i] - _beta * _sd_f[i]; }
    double ucb_f(Index i) const { return _mu_f[i] + _beta * _sd_f[i]; }

    void add_observation(Index i, double f, double q)
    {
        if (i < 0 || i >= size())
            throw DimensionError("safe BO: observation index outside the domain");
        _idx.push_back(i);
        _f.push_back(f);
        _q.push_back(q);
        refit();
    }

    /// mu_q + beta sigma_q < 0, plus the seed points.
    std::vector<char> safe_set() const
    {
        std::vector<char> s(static_cast<std::size_t>(size()), 0);
        bool any = false;
        for (Index i = 0; i < size(); ++i) {
            s[static_cast<std::size_t>(i)] = ucb_q(i) < 0.0 || is_seed(i);
            any = any || s[static_cast<std::size_t>(i)];
        }
        if (!any)
            throw EmptySafeSetError("safe BO: empty safe set");
        return s;
    }

    /// g_t(x) for each candidate: the number of currently unsafe points that
    /// the optimistic observation mu_q(x) - beta sigma_q(x) at x would make
    /// safe.
    std::vector<Index> expander_counts(const std::vector<Index>& candidates, const std::vector<char>& safe) const
    {
        std::vector<Index> unsafe;
        for (Index i = 0; i < size(); ++i)
            if (!safe[static_cast<std::size_t>(i)])
                unsafe.push_back(i);
        std::vector<Index> g(candidates.size(), 0);
        if (unsafe.empty() || candidates.empty())
            return g;
        const Matrix Fu = rows_of(_emb_q.features, unsafe), Fc = rows_of(_emb_q.features, candidates);
        Matrix C = kernel_matrix(_prior_q, Fu, Fc);
        if (_gp_q->num_data() > 0)
            C.noalias() -= cols_of(_Vq, unsafe).transpose() * cols_of(_Vq, candidates);
        const double noise = _prior_q.noise_variance();
        for (std::size_t c = 0; c < candidates.size(); ++c) {
            const Index x = candidates[c];
            const double denom = _sd_q[x] * _sd_q[x] + noise;
            const double shift = -_beta * _sd_q[x] / denom;
            Index count = 0;
            for (std::size_t u = 0; u < unsafe.size(); ++u) {
                const double cov = C(static_cast<Index>(u), static_cast<Index>(c));
                const Index j = unsafe[u];
                const double var = std::max(_sd_q[j] * _sd_q[j] - cov * cov / denom, 0.0);
                count += _mu_q[j] + cov * shift + _beta * std::sqrt(var) < 0.0;
            }
            g[c] = count;
        }
        return g;
    }

    /// Safe point with the smallest posterior mean of f.
    Index best_guess() const
    {
        const auto safe = safe_set();
        Index best = -1;
        for (Index i = 0; i < size(); ++i)
            if (safe[static_cast<std::size_t>(i)] && (best < 0 || _mu_f[i] < _mu_f[best]))
                best = i;
        return best;
    }

    /// The SafeOpt sets for the current posterior. M_t holds safe points whose
    /// lcb_f beats ucb_f at the best observation; G_t holds the safe points
    /// with 2 beta sigma_q > epsilon and a positive expander count.
    struct SafeOptSets {
        std::vector<char> safe;
        std::vector<Index> optimizers;   // M_t
        std::vector<Index> candidates;   // expander candidates
        std::vector<Index> counts;       // g_t per candidate
        std::vector<Index> expanders;    // G_t
        Index x_opt = -1;
        Index x_exp = -1;
    };

    SafeOptSets safeopt_sets() const
    {
        SafeOptSets s;
        s.safe = safe_set();
        Index dagger = -1;
        for (std::size_t k = 0; k < _idx.size(); ++k)
            if (dagger < 0 || _f[k] < _f[static_cast<std::size_t>(dagger)])
                dagger = static_cast<Index>(k);
        const double threshold = dagger < 0 ? std::numeric_limits<double>::infinity()
                                            : ucb_f(_idx[static_cast<std::size_t>(dagger)]);
        for (Index i = 0; i < size(); ++i) {
            if (!s.safe[static_cast<std::size_t>(i)])
                continue;
            if (lcb_f(i) < threshold) {
                s.optimizers.push_back(i);
                if (s.x_opt < 0 || lcb_f(i) < lcb_f(s.x_opt))
                    s.x_opt = i;
            }
            if (2.0 * _beta * _sd_q[i] > _opts.epsilon)
                s.candidates.push_back(i);
        }
        s.counts = expander_counts(s.candidates, s.safe);
        Index g_best = 0;
        for (std::size_t c = 0; c < s.candidates.size(); ++c) {
            if (s.counts[c] > 0)
                s.expanders.push_back(s.candidates[c]);
            if (s.counts[c] > g_best) {
                g_best = s.counts[c];
                s.x_exp = s.candidates[c];
            }
        }
        return s;
    }

    /// The candidate with the wider max(sigma_f, sigma_q); x_opt on ties.
    Index safeopt_step()
    {
        const SafeOptSets s = safeopt_sets();
        auto width = [&](Index i) { return std::max(_sd_f[i], _sd_q[i]); };
        if (s.x_opt < 0 && s.x_exp < 0)
            return fallback(s.safe);
        if (s.x_opt < 0)
            return s.x_exp;
        if (s.x_exp < 0)
            return s.x_opt;
        return width(s.x_exp) > width(s.x_opt) ? s.x_exp : s.x_opt;
    }

    /// The GoOSE sets for the current posterior.
    struct GooseSets {
        std::vector<char> pessimistic;
        std::vector<Index> expanders;  // W_t
        std::vector<char> optimistic;
        double lipschitz = 0.0;
    };

    GooseSets goose_sets() const
    {
        GooseSets s;
        s.pessimistic = safe_set();
        for (Index i = 0; i < size(); ++i)
            if (s.pessimistic[static_cast<std::size_t>(i)] && 2.0 * _beta * _sd_q[i] > _opts.epsilon)
                s.expanders.push_back(i);
        s.lipschitz = lipschitz_estimate(*_gp_q, _domain, _emb_q);
        s.optimistic = s.pessimistic;
        if (s.expanders.empty())
            return s;
        // reach(x) = min_z lcb_q(z) + L |x - z|
        Vector reach = Vector::Constant(size(), std::numeric_limits<double>::infinity());
        for (Index z : s.expanders) {
            const Vector d = (_domain.rowwise() - _domain.row(z)).rowwise().norm();
            reach = reach.array().min(d.array() * s.lipschitz + lcb_q(z)).matrix();
        }
        for (Index i = 0; i < size(); ++i)
            if (reach[i] < 0.0)
                s.optimistic[static_cast<std::size_t>(i)] = 1;
        return s;
    }

    /// One GoOSE query. Targets with no reaching expander are excluded and
    /// the search repeats, at most `max_inner_rounds` times.
    Index goose_step()
    {
        const GooseSets s = goose_sets();
        std::vector<char> excluded(static_cast<std::size_t>(size()), 0);
        for (int round = 0; round < _opts.max_inner_rounds; ++round) {
            Index target = -1;
            for (Index i = 0; i < size(); ++i)
                if (s.optimistic[static_cast<std::size_t>(i)] && !excluded[static_cast<std::size_t>(i)]
                    && (target < 0 || lcb_f(i) < lcb_f(target)))
                    target = i;
            if (target < 0)
                break;
            if (s.pessimistic[static_cast<std::size_t>(target)])
                return target;
            const Index z = nearest_expander(s, target);
            if (z >= 0)
                return z;
            excluded[static_cast<std::size_t>(target)] = 1;
        }
        if (!s.expanders.empty()) {
            std::vector<char> w(static_cast<std::size_t>(size()), 0);
            for (Index z : s.expanders)
                w[static_cast<std::size_t>(z)] = 1;
            return fallback(w);
        }
        return fallback(s.pessimistic);
    }

    /// Nearest z in W_t with lcb_q(z) + L |z - x| < 0, or -1.
    Index nearest_expander(const GooseSets& s, Index x) const
    {
        Index best = -1;
        double best_d = std::numeric_limits<double>::infinity();
        for (Index z : s.expanders) {
            const double d = (_domain.row(z) - _domain.row(x)).norm();
            if (lcb_q(z) + s.lipschitz * d < 0.0 && d < best_d) {
                best_d = d;
                best = z;
            }
        }
        return best;
    }

    Index step(Algorithm a) { return a == Algorithm::SafeOpt ? safeopt_step() : goose_step(); }

    /// Throws unless index i is currently safe or a seed point.
    void audit(Index i) const
    {
        if (!(ucb_q(i) < 0.0) && !is_seed(i))
            throw SafetyAuditError("safe BO: query outside the safe set");
    }

private:
    static Matrix rows_of(const Matrix& M, const std::vector<Index>& idx)
    {
        Matrix out(static_cast<Index>(idx.size()), M.cols());
        for (std::size_t k = 0; k < idx.size(); ++k)
            out.row(static_cast<Index>(k)) = M.row(idx[k]);
        return out;
    }

    static Matrix cols_of(const Matrix& M, const std::vector<Index>& idx)
    {
        Matrix out(M.rows(), static_cast<Index>(idx.size()));
        for (std::size_t k = 0; k < idx.size(); ++k)
            out.col(static_cast<Index>(k)) = M.col(idx[k]);
        return out;
    }

    Index fallback(const std::vector<char>& safe)
    {
        ++_fallbacks;
        Index best = -1;
        for (Index i = 0; i < size(); ++i)
            if (safe[static_cast<std::size_t>(i)]
                && (best < 0 || std::max(_sd_f[i], _sd_q[i]) > std::max(_sd_f[best], _sd_q[best])))
                best = i;
        return best;
    }

    void refit()
    {
        const Index n = static_cast<Index>(_idx.size());
        Matrix X(n, _domain.cols());
        Vector yf(n), yq(n);
        for (Index k = 0; k < n; ++k) {
            X.row(k) = _domain.row(_idx[static_cast<std::size_t>(k)]);
            yf[k] = _f[static_cast<std::size_t>(k)];
            yq[k] = _q[static_cast<std::size_t>(k)];
        }
        _gp_f.emplace(_prior_f, X, yf);
        _gp_q.emplace(_prior_q, X, yq);
        const Prediction pf = _gp_f->predict(_emb_f), pq = _gp_q->predict(_emb_q);
        _mu_f = pf.mean;
        _sd_f = pf.std;
        _mu_q = pq.mean;
        _sd_q = pq.std;
        _Vq = _gp_q->whitened_cross(_emb_q);
    }

    GPPrior _prior_f, _prior_q;
    Matrix _domain;
    std::vector<Index> _seeds;
    SafeBOOptions _opts;
    double _beta;
    Embedding _emb_f, _emb_q;
    std::vector<char> _is_seed;
    std::vector<Index> _idx;
    std::vector<double> _f, _q;
    std::optional<GaussianProcess> _gp_f, _gp_q;
    Vector _mu_f, _sd_f, _mu_q, _sd_q;
    Matrix _Vq;
    Index _fallbacks = 0;
};

struct RunRow {
    Index t;
    Vector x;       // raw coordinates
    double f_obs;   // raw, noisy
    double q_obs;
    double f_true;  // raw, noise-free
    double q_true;
    double regret;  // raw units, clamped at 0
    double max_q_obs;
};

struct RunRecord {
    std::vector<RunRow> rows;
    Index violations = 0;       // observed q above 3 noise stds
    Index true_violations = 0;  // noise-free q > 0
    Index fallbacks = 0;
    Index regret_clamps = 0;

    double final_regret() const { return rows.empty() ? 0.0 : rows.back().regret; }
    double max_q_obs() const { return rows.empty() ? -std::numeric_limits<double>::infinity() : rows.back().max_q_obs; }
};

struct SafeBORun {
    Algorithm algorithm = Algorithm::GoOSE;
    Index iterations = 50;
    std::uint64_t seed = 0;
    SafeBOOptions options;
};

/// Seeds are observed first (row t = 0 onwards), then `iterations` queries.
/// Regret is f(best safe guess) - f_opt on the noise-free target; a NaN
/// f_opt skips it.
inline RunRecord run_safe_bo(const EnvTask& task, const Standardizer& st, const GPPrior& prior_f,
                             const GPPrior& prior_q, const DiscreteDomain& domain, double f_opt,
                             const SafeBORun& run)
{
    if (domain.seed_indices.empty())
        throw DomainError("safe BO: the domain has no seed points");
    SafeBOState state(prior_f, prior_q, st.x_rows(domain.points), domain.seed_indices, run.options);
    Rng rng(derive_seed(run.seed, 1));
    std::unordered_map<Index, double> f_cache;
    auto true_f = [&](Index i) {
        auto it = f_cache.find(i);
        if (it == f_cache.end())
            it = f_cache.emplace(i, task.f(domain.points.row(i).transpose())).first;
        return it->second;
    };
    RunRecord rec;
    double max_q = -std::numeric_limits<double>::infinity();
    Index t = 0;
    auto query = [&](Index i) {
        state.audit(i);
        const Vector x = domain.points.row(i).transpose();
        const Outcome truth = task.evaluate(x);
        const Outcome obs = task.noisy(truth, rng);
        f_cache.emplace(i, truth.f);
        state.add_observation(i, st.f(obs.f), st.q(obs.q));
        max_q = std::max(max_q, obs.q);
        rec.violations += obs.q > 3.0 * task.noise_q;
        rec.true_violations += truth.q > 0.0;
        double r = std::numeric_limits<double>::quiet_NaN();
        if (!std::isnan(f_opt))
            r = true_f(state.best_guess()) - f_opt;
        if (r < 0.0) {
            ++rec.regret_clamps;
            r = 0.0;
        }
        rec.rows.push_back({t++, x, obs.f, obs.q, truth.f, truth.q, r, max_q});
    };
    for (Index s : domain.seed_indices)
        query(s);
    for (Index k = 0; k < run.iterations; ++k)
        query(state.step(run.algorithm));
    rec.fallbacks = state.fallbacks();
    return rec;
}

/// t, x0..x{d-1}, f_obs, q_obs, regret, max_q_obs; one line per row.
inline void write_run_csv(std::ostream& os, const RunRecord& rec, bool header = true)
{
    const Index d = rec.rows.empty() ? 0 : rec.rows.front().x.size();
    if (header) {
        os << "t";
        for (Index j = 0; j < d; ++j)
            os << ",x" << j;
        os << ",f_obs,q_obs,regret,max_q_obs\n";
    }
    for (const RunRow& r : rec.rows) {
        os << r.t;
        for (Index j = 0; j < d; ++j)
            os << ',' << format_double(r.x[j]);
        os << ',' << format_double(r.f_obs) << ',' << format_double(r.q_obs) << ',' << format_double(r.regret)
           << ',' << format_double(r.max_q_obs) << '\n';
    }
}

} // namespace sambo

#endif
