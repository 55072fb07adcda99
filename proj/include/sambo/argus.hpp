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

#ifndef SAMBO_ARGUS_HPP
#define SAMBO_ARGUS_HPP

#include <array>
#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>
#include <unsupported/Eigen/MatrixFunctions>

#include <sambo/common.hpp>

namespace sambo::argus {

/// Anti-resonance (n) / resonance (d) pair, frequencies in Hz.
struct ResonancePair {
    double f_n;
    double lambda_n;
    double f_d;
    double lambda_d;
};

inline const std::array<ResonancePair, 5>& resonances()
{
    static const std::array<ResonancePair, 5> table{{
        {390.0, 0.1, 400.0, 0.1},
        {475.0, 0.03, 500.0, 0.05},
        {690.0, 0.03, 800.0, 0.06},
        {870.0, 0.03, 900.0, 0.04},
        {1050.0, 0.03, 1100.0, 0.06},
    }};
    return table;
}

/// Undamped natural frequency in rad/s for a listed peak frequency f (Hz),
/// inverting f = w sqrt(1 - 2 lambda^2).
inline double natural_frequency(double f_hz, double lambda)
{
    return 2.0 * std::numbers::pi * f_hz / std::sqrt(1.0 - 2.0 * lambda * lambda);
}

struct Config {
    double mass = 2.0;          // kg
    double sample_rate = 1e4;   // Hz
    double dead_time = 2e-3;    // s
    double t_end = 1.2;         // s
    double jerk = 200.0;
    double a_max = 20.0;
    double v_max = 1.0;
    double window_low[2] = {0.03, 0.07};   // fraction of Nyquist
    double window_high[2] = {0.08, 0.1};
    double high_window_scale = 5.0;
    double kappa_factor = 1.5;
    double divergence_factor = 1e3;  // |pe| above this many step sizes aborts
    double settle_band = 0.02;       // |pe(t_end)| above this fraction of the step fails

    double sample_period() const { return 1.0 / sample_rate; }
    Index samples() const { return static_cast<Index>(std::llround(t_end * sample_rate)); }
    Index delay_samples() const { return static_cast<Index>(std::llround(dead_time * sample_rate)); }
};

/// Continuous single-input single-output state-space model.
struct StateSpace {
    Matrix A;
    Vector B;
    Eigen::RowVectorXd C;
    double D = 0.0;

    Index order() const { return A.rows(); }
};

/// Series connection: `second` is driven by the output of `first`.
inline StateSpace series(const StateSpace& first, const StateSpace& second)
{
    const Index n1 = first.order(), n2 = second.order();
    StateSpace out;
    out.A = Matrix::Zero(n1 + n2, n1 + n2);
    out.A.topLeftCorner(n1, n1) = first.A;
    out.A.bottomLeftCorner(n2, n1) = second.B * first.C;
    out.A.bottomRightCorner(n2, n2) = second.A;
    out.B.resize(n1 + n2);
    out.B << first.B, second.B * first.D;
    out.C.resize(n1 + n2);
    out.C << second.D * first.C, second.C;
    out.D = second.D * first.D;
    return out;
}

/// One factor N(s)/D(s) with N = s^2/wn^2 + 2 ln s/wn + 1 and D likewise.
/// States are scaled by wd so that the matrix entries stay O(wd).
inline StateSpace resonance_block(const ResonancePair& p)
{
    const double wn = natural_frequency(p.f_n, p.lambda_n);
    const double wd = natural_frequency(p.f_d, p.lambda_d);
    const double r = (wd * wd) / (wn * wn);
    StateSpace s;
    s.A.resize(2, 2);
    s.A << 0.0, wd, -wd, -2.0 * p.lambda_d * wd;
    s.B.resize(2);
    s.B << 0.0, wd;
    s.C.resize(2);
    s.C << r * (wn * wn - wd * wd) / (wd * wd), r * (2.0 * p.lambda_n * wn - 2.0 * p.lambda_d * wd) / wd;
    s.D = r;
    return s;
}

/// Force to position: the five resonance factors followed by 1/(m s^2).
inline StateSpace continuous_plant(const Config& cfg)
{
    StateSpace rigid;
    rigid.A.resize(2, 2);
    rigid.A << 0.0, 1.0, 0.0, 0.0;
    rigid.B.resize(2);
    rigid.B << 0.0, 1.0 / cfg.mass;
    rigid.C.resize(2);
    rigid.C << 1.0, 0.0;
    StateSpace plant = resonance_block(resonances()[0]);
    for (std::size_t i = 1; i < resonances().size(); ++i)
        plant = series(plant, resonance_block(resonances()[i]));
    return series(plant, rigid);
}

/// Zero-order-hold discretization; the dead time is a pure input delay of
/// `delay` samples.
struct DiscretePlant {
    Matrix A;
    Vector B;
    Eigen::RowVectorXd C;
    double D = 0.0;
    Index delay = 0;
    double sample_period = 0.0;

    Index order() const { return A.rows(); }

    std::complex<double> response(double hz) const
    {
        using C64 = std::complex<double>;
        const double w = 2.0 * std::numbers::pi * hz * sample_period;
        const C64 z = std::polar(1.0, w);
        Eigen::MatrixXcd M = -A.cast<C64>();
        M.diagonal().array() += z;
        const Eigen::VectorXcd x = M.partialPivLu().solve(B.cast<C64>());
        const C64 g = (C.cast<C64>() * x)(0) + D;
        return g * std::pow(z, -static_cast<double>(delay));
    }
};

inline DiscretePlant discretize(const StateSpace& sys, double sample_period, Index delay)
{
    const Index n = sys.order();
    Matrix aug = Matrix::Zero(n + 1, n + 1);
    aug.topLeftCorner(n, n) = sys.A * sample_period;
    aug.topRightCorner(n, 1) = sys.B * sample_period;
    const Matrix e = aug.exp();
    DiscretePlant d;
    d.A = e.topLeftCorner(n, n);
    d.B = e.topRightCorner(n, 1);
    d.C = sys.C;
    d.D = sys.D;
    d.delay = delay;
    d.sample_period = sample_period;
    return d;
}

inline DiscretePlant discrete_plant(const Config& cfg)
{
    return discretize(continuous_plant(cfg), cfg.sample_period(), cfg.delay_samples());
}

/// Local maxima and minima of |G| on a uniform frequency grid.
struct Extremum {
    double hz;
    bool is_max;
};

inline std::vector<Extremum> magnitude_extrema(const DiscretePlant& plant, double lo_hz, double hi_hz,
                                               double step_hz)
{
    std::vector<double> hz, mag;
    for (double f = lo_hz; f <= hi_hz + 1e-9; f += step_hz) {
        hz.push_back(f);
        mag.push_back(std::abs(plant.response(f)));
    }
    std::vector<Extremum> out;
    for (std::size_t i = 1; i + 1 < mag.size(); ++i) {
        if (mag[i] > mag[i - 1] && mag[i] > mag[i + 1])
            out.push_back({hz[i], true});
        else if (mag[i] < mag[i - 1] && mag[i] < mag[i + 1])
            out.push_back({hz[i], false});
    }
    return out;
}

/// Rest-to-rest move built from constant-jerk segments.
class SCurve {
public:
    SCurve(double distance, double jerk, double a_max, double v_max)
    {
        if (!(distance > 0.0) || !(jerk > 0.0) || !(a_max > 0.0) || !(v_max > 0.0))
            throw DomainError("s-curve: distance and limits must be positive");
        double tj, ta = 0.0, tv = 0.0;
        if (v_max * jerk < a_max * a_max) {
            tj = std::sqrt(v_max / jerk);
        } else {
            tj = a_max / jerk;
            ta = v_max / a_max - tj;
        }
        const double d_acc = v_max * (2.0 * tj + ta) / 2.0;
        if (2.0 * d_acc <= distance) {
            tv = (distance - 2.0 * d_acc) / v_max;
        } else if (distance <= 2.0 * a_max * a_max * a_max / (jerk * jerk)) {
            tj = std::cbrt(distance / (2.0 * jerk));
            ta = 0.0;
        } else {
            tj = a_max / jerk;
            ta = (-3.0 * tj + std::sqrt(tj * tj + 4.0 * distance / a_max)) / 2.0;
        }
        const double seq[7][2] = {{tj, jerk}, {ta, 0.0}, {tj, -jerk}, {tv, 0.0},
                                  {tj, -jerk}, {ta, 0.0}, {tj, jerk}};
        Knot k{0.0, 0.0, 0.0, 0.0, 0.0};
        for (const auto& s : seq) {
            if (s[0] <= 0.0)
                continue;
            k.duration = s[0];
            k.jerk = s[1];
            knots_.push_back(k);
            k = advance(k, s[0]);
        }
        duration_ = 0.0;
        for (const auto& kn : knots_)
            duration_ += kn.duration;
        distance_ = distance;
    }

    double duration() const { return duration_; }
    double distance() const { return distance_; }

    /// (position, velocity) at time t.
    std::pair<double, double> at(double t) const
    {
        if (t <= 0.0)
            return {0.0, 0.0};
        double start = 0.0;
        for (const auto& k : knots_) {
            if (t < start + k.duration) {
                const Knot s = advance(k, t - start);
                return {s.p, s.v};
            }
            start += k.duration;
        }
        return {distance_, 0.0};
    }

private:
    struct Knot {
        double p, v, a, jerk, duration;
    };

    static Knot advance(const Knot& k, double dt)
    {
        Knot o = k;
        o.p = k.p + k.v * dt + k.a * dt * dt / 2.0 + k.jerk * dt * dt * dt / 6.0;
        o.v = k.v + k.a * dt + k.jerk * dt * dt / 2.0;
        o.a = k.a + k.jerk * dt;
        return o;
    }

    std::vector<Knot> knots_;
    double duration_ = 0.0;
    double distance_ = 0.0;
};

struct Gains {
    double pkp;
    double vkp;
    double vki;
};

struct Rollout {
    Vector position;
    Vector reference;
    Vector position_error;
    Vector velocity_error;
    Index move_index = 0;
    bool diverged = false;
};

/// Cascade: position P with velocity feed-forward, then velocity PI on a
/// backward-difference velocity estimate, force through the dead time.
inline Rollout simulate(const DiscretePlant& plant, const Config& cfg, const Gains& g, double step)
{
    const SCurve ref(step, cfg.jerk, cfg.a_max, cfg.v_max);
    const Index N = cfg.samples();
    const double Ts = cfg.sample_period();
    Rollout r;
    r.position = Vector::Zero(N);
    r.reference = Vector::Zero(N);
    r.position_error = Vector::Zero(N);
    r.velocity_error = Vector::Zero(N);
    r.move_index = std::min<Index>(N, static_cast<Index>(std::ceil(ref.duration() / Ts - 1e-9)));
    Vector x = Vector::Zero(plant.order());
    std::vector<double> line(static_cast<std::size_t>(plant.delay), 0.0);
    std::size_t head = 0;
    double p_prev = 0.0, integ = 0.0;
    const double limit = cfg.divergence_factor * step;
    for (Index k = 0; k < N; ++k) {
        const double p = plant.C.dot(x);
        const auto [p_ref, v_ref] = ref.at(static_cast<double>(k) * Ts);
        const double pe = p_ref - p;
        const double v = (p - p_prev) / Ts;
        p_prev = p;
        const double ve = g.pkp * pe + v_ref - v;
        integ += g.vki * ve * Ts;
        const double force = g.vkp * ve + integ;
        double applied = force;
        if (!line.empty()) {
            applied = line[head];
            line[head] = force;
            head = (head + 1) % line.size();
        }
        r.position[k] = p;
        r.reference[k] = p_ref;
        r.position_error[k] = pe;
        r.velocity_error[k] = ve;
        if (!std::isfinite(pe) || std::abs(pe) > limit) {
            r.diverged = true;
            return r;
        }
        x = plant.A * x + plant.B * applied;
    }
    return r;
}

/// Sampled total variation of the position error after the move, times the
/// sample period.
inline double total_variation(const Rollout& r, double sample_period)
{
    double tv = 0.0;
    for (Index k = r.move_index; k + 1 < r.position_error.size(); ++k)
        tv += std::abs(r.position_error[k + 1] - r.position_error[k]);
    return sample_period * tv;
}

/// Windowed single-sided amplitude spectrum peak of the velocity error.
inline double fft_max(const Rollout& r, const Config& cfg)
{
    const Index N = r.velocity_error.size();
    std::vector<double> in(r.velocity_error.data(), r.velocity_error.data() + N);
    std::vector<std::complex<double>> out;
    Eigen::FFT<double> fft;
    fft.fwd(out, in);
    auto window_max = [&](const double* w) {
        double m = 0.0;
        for (Index k = 0; k <= N / 2; ++k) {
            const double nu = static_cast<double>(k) / (static_cast<double>(N) / 2.0);
            if (nu >= w[0] && nu <= w[1])
                m = std::max(m, 2.0 * std::abs(out[static_cast<std::size_t>(k)]) / static_cast<double>(N));
        }
        return m;
    };
    return window_max(cfg.window_low) + cfg.high_window_scale * window_max(cfg.window_high);
}

struct Evaluation {
    double f;
    double q;
    double fft_max;
    bool diverged;
    bool settled;
};

/// One tuning task at a fixed reference step size. Not shared across
/// threads; copy per worker.
class Problem {
public:
    Problem(double step, Config cfg = {}) : cfg_(cfg), plant_(discrete_plant(cfg)), step_(step)
    {
        if (!(step >= 1e-5 && step <= 1e-2))
            throw DomainError("argus: step size must lie in [1e-5, 1e-2] m");
        const Rollout r0 = simulate(plant_, cfg_, seed_gains(), step_);
        if (r0.diverged)
            throw DomainError("argus: initial gains diverge");
        kappa_ = cfg_.kappa_factor * fft_max(r0, cfg_);
        f_penalty_ = cfg_.sample_period() * static_cast<double>(cfg_.samples()) * 2.0 * cfg_.divergence_factor * step_;
        q_penalty_ = cfg_.divergence_factor * kappa_;
    }

    static Gains seed_gains() { return {200.0, 800.0, 1000.0}; }

    static Bounds bounds()
    {
        Bounds b;
        b.low = Eigen::Vector3d(100.0, 300.0, 500.0);
        b.high = Eigen::Vector3d(400.0, 1200.0, 4000.0);
        return b;
    }

    /// Aborted runs get both penalties; runs still outside the settle band at
    /// t_end get the objective penalty.
    Evaluation evaluate(const Vector& x) const
    {
        if (x.size() != 3)
            throw DimensionError("argus: gains are (PKP, VKP, VKI)");
        const Rollout r = simulate(plant_, cfg_, {x[0], x[1], x[2]}, step_);
        if (r.diverged)
            return {f_penalty_, q_penalty_, std::numeric_limits<double>::infinity(), true, false};
        const double fm = fft_max(r, cfg_);
        const bool settled = std::abs(r.position_error[r.position_error.size() - 1]) <= cfg_.settle_band * step_;
        const double f = settled ? total_variation(r, cfg_.sample_period()) : f_penalty_;
        return {f, fm - kappa_, fm, false, settled};
    }

    double kappa() const { return kappa_; }
    double step() const { return step_; }
    const Config& config() const { return cfg_; }
    const DiscretePlant& plant() const { return plant_; }

private:
    Config cfg_;
    DiscretePlant plant_;
    double step_;
    double kappa_ = 0.0;
    double f_penalty_ = 0.0;
    double q_penalty_ = 0.0;
};

} // namespace sambo::argus

#endif
