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

// Reverse-mode differentiation over dense matrices.
//
// A Tape records every operation as a node holding its value and a backward
// closure. Scalars are 1x1 matrices. Only nodes reachable from a leaf created
// with Tape::leaf carry gradients; constants cost nothing in the backward
// sweep.
//
//     ad::Tape tape;
//     ad::Var w = tape.leaf(W);
//     ad::Var loss = ad::sum(ad::tanh(ad::matmul(tape.constant(X), w)));
//     tape.backward(loss);
//     Matrix dW = tape.grad(w);

#ifndef SAMBO_AUTODIFF_HPP
#define SAMBO_AUTODIFF_HPP

#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <sambo/common.hpp>
#include <sambo/gp.hpp>

namespace sambo::ad {

class TapeError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

class Tape;

/// Handle to a node on a tape. Cheap to copy.
class Var {
public:
    Var() = default;

    const Matrix& value() const;
    double scalar() const;
    Index rows() const { return value().rows(); }
    Index cols() const { return value().cols(); }
    int id() const { return _id; }
    Tape* tape() const { return _tape; }

private:
    friend class Tape;
    Var(Tape* t, int id) : _tape(t), _id(id) {}

    Tape* _tape = nullptr;
    int _id = -1;
};

class Tape {
public:
    /// Backward closure: receives the node's output gradient and pushes
    /// contributions into its parents with accumulate().
    using Backward = std::function<void(Tape&, const Matrix&)>;

    Var leaf(Matrix value) { return add_node(std::move(value), true, {}); }
    Var constant(Matrix value) { return add_node(std::move(value), false, {}); }
    Var scalar_leaf(double v) { return leaf(Matrix::Constant(1, 1, v)); }
    Var scalar_constant(double v) { return constant(Matrix::Constant(1, 1, v)); }

    /// Records an operation whose parents are `inputs`.
    Var push(Matrix value, std::initializer_list<Var> inputs, Backward backward)
    {
        bool needs = false;
        for (const Var& v : inputs) {
            check_owner(v);
            needs = needs || _nodes[v.id()].needs_grad;
        }
        return add_node(std::move(value), needs, needs ? std::move(backward) : Backward{});
    }

    const Matrix& value(int id) const { return _nodes.at(id).value; }
    bool needs_grad(const Var& v) const { return _nodes.at(v.id()).needs_grad; }

    void accumulate(const Var& v, const Matrix& g)
    {
        Node& n = _nodes[v.id()];
        if (!n.needs_grad)
            return;
        if (g.rows() != n.value.rows() || g.cols() != n.value.cols())
            throw TapeError("accumulate: gradient shape does not match node value");
        if (n.grad.size() == 0)
            n.grad = g;
        else
            n.grad += g;
    }

    /// Seeds d out / d out = 1 and sweeps the tape backwards.
    void backward(const Var& out)
    {
        check_owner(out);
        if (out.rows() != 1 || out.cols() != 1)
            throw TapeError("backward: output must be a scalar");
        for (auto& n : _nodes)
            n.grad.resize(0, 0);
        _nodes[out.id()].grad = Matrix::Ones(1, 1);
        for (int i = out.id(); i >= 0; --i) {
            Node& n = _nodes[i];
            if (!n.backward || n.grad.size() == 0)
                continue;
            const Matrix g = n.grad;
            n.backward(*this, g);
        }
    }

    /// Gradient of the last backward() output w.r.t. v; zeros if unreached.
    Matrix grad(const Var& v) const
    {
        check_owner(v);
        const Node& n = _nodes[v.id()];
        if (n.grad.size() == 0)
            return Matrix::Zero(n.value.rows(), n.value.cols());
        return n.grad;
    }

    std::size_t size() const { return _nodes.size(); }
    void clear() { _nodes.clear(); }

private:
    struct Node {
        Matrix value;
        Matrix grad;
        bool needs_grad = false;
        Backward backward;
    };

    Var add_node(Matrix value, bool needs, Backward backward)
    {
        _nodes.push_back({std::move(value), Matrix(), needs, std::move(backward)});
        return Var(this, static_cast<int>(_nodes.size() - 1));
    }

    void check_owner(const Var& v) const
    {
        if (v.tape() != this || v.id() < 0 || v.id() >= static_cast<int>(_nodes.size()))
            throw TapeError("variable does not belong to this tape");
    }

    std::vector<Node> _nodes;
};

inline const Matrix& Var::value() const
{
    if (!_tape)
        throw TapeError("empty variable");
    return _tape->value(_id);
}

inline double Var::scalar() const
{
    const Matrix& v = value();
    if (v.size() != 1)
        throw TapeError("scalar(): variable is not 1x1");
    return v(0, 0);
}

namespace detail {

inline Tape& same_tape(const Var& a, const Var& b)
{
    if (a.tape() != b.tape() || !a.tape())
        throw TapeError("operands live on different tapes");
    return *a.tape();
}

inline void same_shape(const Var& a, const Var& b, const char* op)
{
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw DimensionError(std::string(op) + ": shape mismatch");
}

inline void is_scalar(const Var& s, const char* op)
{
    if (s.rows() != 1 || s.cols() != 1)
        throw DimensionError(std::string(op) + ": expected a 1x1 operand");
}

inline void is_square(const Var& a, const char* op)
{
    if (a.rows() != a.cols())
        throw DimensionError(std::string(op) + ": expected a square matrix");
}

} // namespace detail

// ---- elementwise and scalar arithmetic ----

inline Var add(const Var& a, const Var& b)
{
    detail::same_shape(a, b, "add");
    Tape& t = detail::same_tape(a, b);
    return t.push(a.value() + b.value(), {a, b}, [a, b](Tape& t, const Matrix& g) {
        t.accumulate(a, g);
        t.accumulate(b, g);
    });
}

inline Var sub(const Var& a, const Var& b)
{
    detail::same_shape(a, b, "sub");
    Tape& t = detail::same_tape(a, b);
    return t.push(a.value() - b.value(), {a, b}, [a, b](Tape& t, const Matrix& g) {
        t.accumulate(a, g);
        t.accumulate(b, -g);
    });
}

inline Var cwise_mul(const Var& a, const Var& b)
{
    detail::same_shape(a, b, "cwise_mul");
    Tape& t = detail::same_tape(a, b);
    return t.push(a.value().cwiseProduct(b.value()), {a, b}, [a, b](Tape& t, const Matrix& g) {
        t.accumulate(a, g.cwiseProduct(b.value()));
        t.accumulate(b, g.cwiseProduct(a.value()));
    });
}

inline Var scale(const Var& a, double c)
{
    Tape& t = *a.tape();
    return t.push(c * a.value(), {a}, [a, c](Tape& t, const Matrix& g) { t.accumulate(a, c * g); });
}

inline Var add_scalar(const Var& a, double c)
{
    Tape& t = *a.tape();
    return t.push((a.value().array() + c).matrix(), {a}, [a](Tape& t, const Matrix& g) { t.accumulate(a, g); });
}

/// s * A for a 1x1 s.
inline Var scalar_mul(const Var& s, const Var& a)
{
    detail::is_scalar(s, "scalar_mul");
    Tape& t = detail::same_tape(s, a);
    return t.push(s.scalar() * a.value(), {s, a}, [s, a](Tape& t, const Matrix& g) {
        t.accumulate(s, Matrix::Constant(1, 1, g.cwiseProduct(a.value()).sum()));
        t.accumulate(a, s.scalar() * g);
    });
}

/// A / s for a 1x1 s.
inline Var scalar_div(const Var& a, const Var& s)
{
    detail::is_scalar(s, "scalar_div");
    Tape& t = detail::same_tape(a, s);
    const double sv = s.scalar();
    Matrix v = a.value() / sv;
    return t.push(std::move(v), {a, s}, [a, s](Tape& t, const Matrix& g) {
        const double sv = s.scalar();
        t.accumulate(a, g / sv);
        t.accumulate(s, Matrix::Constant(1, 1, -g.cwiseProduct(a.value()).sum() / (sv * sv)));
    });
}

inline Var exp(const Var& a)
{
    Tape& t = *a.tape();
    Matrix v = a.value().array().exp().matrix();
    const int self = static_cast<int>(t.size());
    return t.push(std::move(v), {a}, [a, self](Tape& t, const Matrix& g) {
        t.accumulate(a, g.cwiseProduct(t.value(self)));
    });
}

inline Var log(const Var& a)
{
    Tape& t = *a.tape();
    return t.push(a.value().array().log().matrix(), {a}, [a](Tape& t, const Matrix& g) {
        t.accumulate(a, g.cwiseQuotient(a.value()));
    });
}

inline Var tanh(const Var& a)
{
    Tape& t = *a.tape();
    Matrix v = a.value().array().tanh().matrix();
    const int self = static_cast<int>(t.size());
    return t.push(std::move(v), {a}, [a, self](Tape& t, const Matrix& g) {
        const Matrix& y = t.value(self);
        t.accumulate(a, (g.array() * (1.0 - y.array().square())).matrix());
    });
}

// ---- reductions ----

inline Var sum(const Var& a)
{
    Tape& t = *a.tape();
    return t.push(Matrix::Constant(1, 1, a.value().sum()), {a}, [a](Tape& t, const Matrix& g) {
        t.accumulate(a, Matrix::Constant(a.rows(), a.cols(), g(0, 0)));
    });
}

inline Var trace(const Var& a)
{
    detail::is_square(a, "trace");
    Tape& t = *a.tape();
    return t.push(Matrix::Constant(1, 1, a.value().trace()), {a}, [a](Tape& t, const Matrix& g) {
        t.accumulate(a, g(0, 0) * Matrix::Identity(a.rows(), a.cols()));
    });
}

/// Sum of elementwise products, i.e. <a, b>.
inline Var dot(const Var& a, const Var& b)
{
    return sum(cwise_mul(a, b));
}

// ---- linear algebra ----

inline Var matmul(const Var& a, const Var& b)
{
    if (a.cols() != b.rows())
        throw DimensionError("matmul: inner dimensions differ");
    Tape& t = detail::same_tape(a, b);
    return t.push(a.value() * b.value(), {a, b}, [a, b](Tape& t, const Matrix& g) {
        if (t.needs_grad(a))
            t.accumulate(a, g * b.value().transpose());
        if (t.needs_grad(b))
            t.accumulate(b, a.value().transpose() * g);
    });
}

inline Var transpose(const Var& a)
{
    Tape& t = *a.tape();
    return t.push(a.value().transpose(), {a}, [a](Tape& t, const Matrix& g) { t.accumulate(a, g.transpose()); });
}

/// A (n x m) plus the row vector b (1 x m) broadcast over rows.
inline Var add_rowwise(const Var& a, const Var& b)
{
    if (b.rows() != 1 || b.cols() != a.cols())
        throw DimensionError("add_rowwise: bias must be 1 x cols");
    Tape& t = detail::same_tape(a, b);
    Matrix v = a.value();
    v.rowwise() += b.value().row(0);
    return t.push(std::move(v), {a, b}, [a, b](Tape& t, const Matrix& g) {
        t.accumulate(a, g);
        t.accumulate(b, g.colwise().sum());
    });
}

inline Var add_diag(const Var& a, double c)
{
    detail::is_square(a, "add_diag");
    Tape& t = *a.tape();
    Matrix v = a.value();
    v.diagonal().array() += c;
    return t.push(std::move(v), {a}, [a](Tape& t, const Matrix& g) { t.accumulate(a, g); });
}

/// D(i, j) = |F.row(i) - F.row(j)|^2.
inline Var pairwise_sq_dist(const Var& f)
{
    Tape& t = *f.tape();
    const Matrix& F = f.value();
    const Index n = F.rows();
    Matrix D(n, n);
    for (Index i = 0; i < n; ++i) {
        D(i, i) = 0.0;
        for (Index j = i + 1; j < n; ++j)
            D(i, j) = D(j, i) = (F.row(i) - F.row(j)).squaredNorm();
    }
    return t.push(std::move(D), {f}, [f](Tape& t, const Matrix& g) {
        const Matrix& F = f.value();
        const Matrix S = g + g.transpose();
        const Vector rs = S.rowwise().sum();
        t.accumulate(f, 2.0 * (rs.asDiagonal() * F - S * F));
    });
}

/// Cholesky of a symmetric positive-definite value; jitter from the robust
/// schedule is treated as a constant.
inline std::shared_ptr<const RobustCholesky> factor(const Var& a)
{
    detail::is_square(a, "factor");
    return std::make_shared<const RobustCholesky>(a.value());
}

/// ln |A| for symmetric positive-definite A.
inline Var logdet(const Var& a)
{
    auto c = factor(a);
    Tape& t = *a.tape();
    return t.push(Matrix::Constant(1, 1, c->log_det()), {a}, [a, c](Tape& t, const Matrix& g) {
        const Index n = a.rows();
        t.accumulate(a, g(0, 0) * c->llt.solve(Matrix::Identity(n, n)));
    });
}

/// A^-1 B for symmetric positive-definite A.
inline Var solve_spd(const Var& a, const Var& b)
{
    if (a.rows() != b.rows())
        throw DimensionError("solve_spd: row count mismatch");
    auto c = factor(a);
    Tape& t = detail::same_tape(a, b);
    Matrix x = c->llt.solve(b.value());
    const int self = static_cast<int>(t.size());
    return t.push(std::move(x), {a, b}, [a, b, c, self](Tape& t, const Matrix& g) {
        const Matrix gb = c->llt.solve(g);
        t.accumulate(b, gb);
        if (t.needs_grad(a))
            t.accumulate(a, -gb * t.value(self).transpose());
    });
}

/// r^T A^-1 r for a column r and symmetric positive-definite A.
inline Var quad_form(const Var& a, const Var& r)
{
    if (r.cols() != 1 || r.rows() != a.rows())
        throw DimensionError("quad_form: r must be a column matching A");
    auto c = factor(a);
    Tape& t = detail::same_tape(a, r);
    const Vector w = c->llt.solve(r.value());
    const double q = r.value().col(0).dot(w);
    return t.push(Matrix::Constant(1, 1, q), {a, r}, [a, r, w](Tape& t, const Matrix& g) {
        t.accumulate(r, 2.0 * g(0, 0) * w);
        t.accumulate(a, -g(0, 0) * (w * w.transpose()));
    });
}

} // namespace sambo::ad

#endif
