#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "novelrate/errors.hpp"

namespace novelrate::ad {

// Reverse-mode scalar tape. A node stores at most two parents with the local
// partial derivatives; the adjoint sweep walks the node list backwards once.
class Tape {
public:
    struct Node {
        int32_t a;
        int32_t b;
        double da;
        double db;
    };

    int add_input(double v) {
        nodes_.push_back({-1, -1, 0.0, 0.0});
        vals_.push_back(v);
        return static_cast<int>(nodes_.size()) - 1;
    }

    int add_unary(int a, double da, double v) {
        nodes_.push_back({static_cast<int32_t>(a), -1, da, 0.0});
        vals_.push_back(v);
        return static_cast<int>(nodes_.size()) - 1;
    }

    int add_binary(int a, int b, double da, double db, double v) {
        nodes_.push_back({static_cast<int32_t>(a), static_cast<int32_t>(b), da, db});
        vals_.push_back(v);
        return static_cast<int>(nodes_.size()) - 1;
    }

    double value(int i) const { return vals_[i]; }
    size_t size() const { return nodes_.size(); }

    void clear() {
        nodes_.clear();
        vals_.clear();
    }

    // Adjoints of the first grad_inputs.size() nodes with respect to node `out`.
    void gradient(int out, std::span<double> grad_inputs) const {
        adj_.assign(nodes_.size(), 0.0);
        adj_[out] = 1.0;
        for (int i = out; i >= 0; --i) {
            double a = adj_[i];
            if (a == 0.0) continue;
            const Node& n = nodes_[i];
            if (n.a >= 0) adj_[n.a] += n.da * a;
            if (n.b >= 0) adj_[n.b] += n.db * a;
        }
        for (size_t k = 0; k < grad_inputs.size(); ++k) grad_inputs[k] = adj_[k];
    }

private:
    std::vector<Node> nodes_;
    std::vector<double> vals_;
    mutable std::vector<double> adj_;
};

// A value on a tape, or a plain constant when no tape is attached. Copies are
// cheap handles. The constant form lets generic model code mix data constants
// with tracked parameters.
class Var {
public:
    Var() : tape_(nullptr), idx_(-1), val_(0.0) {}
    Var(Tape* t, int idx) : tape_(t), idx_(idx), val_(t->value(idx)) {}

    static Var constant(double v) {
        Var x;
        x.val_ = v;
        return x;
    }
    static Var input(Tape& t, double v) { return Var(&t, t.add_input(v)); }
    static Var unary(Tape& t, int a, double da, double v) { return Var(&t, t.add_unary(a, da, v)); }
    static Var binary(Tape& t, int a, int b, double da, double db, double v) {
        return Var(&t, t.add_binary(a, b, da, db, v));
    }

    double val() const { return val_; }
    int index() const { return idx_; }
    bool tracked() const { return idx_ >= 0; }
    Tape* tape() const { return tape_; }

private:
    Tape* tape_;
    int idx_;
    double val_;
};

namespace detail {
inline Var lift_unary(const Var& x, double dv, double v) {
    if (!x.tracked()) return Var::constant(v);
    return Var::unary(*x.tape(), x.index(), dv, v);
}
inline Var lift_binary(const Var& x, const Var& y, double dx, double dy, double v) {
    if (x.tracked() && y.tracked()) return Var::binary(*x.tape(), x.index(), y.index(), dx, dy, v);
    if (x.tracked()) return Var::unary(*x.tape(), x.index(), dx, v);
    if (y.tracked()) return Var::unary(*y.tape(), y.index(), dy, v);
    return Var::constant(v);
}
}  // namespace detail

inline Var operator+(const Var& x, const Var& y) {
    return detail::lift_binary(x, y, 1.0, 1.0, x.val() + y.val());
}
inline Var operator+(const Var& x, double c) { return detail::lift_unary(x, 1.0, x.val() + c); }
inline Var operator+(double c, const Var& x) { return x + c; }

inline Var operator-(const Var& x, const Var& y) {
    return detail::lift_binary(x, y, 1.0, -1.0, x.val() - y.val());
}
inline Var operator-(const Var& x, double c) { return detail::lift_unary(x, 1.0, x.val() - c); }
inline Var operator-(double c, const Var& x) { return detail::lift_unary(x, -1.0, c - x.val()); }
inline Var operator-(const Var& x) { return detail::lift_unary(x, -1.0, -x.val()); }

inline Var operator*(const Var& x, const Var& y) {
    return detail::lift_binary(x, y, y.val(), x.val(), x.val() * y.val());
}
inline Var operator*(const Var& x, double c) { return detail::lift_unary(x, c, x.val() * c); }
inline Var operator*(double c, const Var& x) { return x * c; }

inline Var operator/(const Var& x, const Var& y) {
    double inv = 1.0 / y.val();
    return detail::lift_binary(x, y, inv, -x.val() * inv * inv, x.val() * inv);
}
inline Var operator/(const Var& x, double c) { return x * (1.0 / c); }
inline Var operator/(double c, const Var& x) {
    double inv = 1.0 / x.val();
    return detail::lift_unary(x, -c * inv * inv, c * inv);
}

inline Var operator+=(Var& x, const Var& y) { return x = x + y; }
inline Var operator-=(Var& x, const Var& y) { return x = x - y; }

inline Var exp(const Var& x) {
    double v = std::exp(x.val());
    return detail::lift_unary(x, v, v);
}
inline Var log(const Var& x) {
    return detail::lift_unary(x, 1.0 / x.val(), std::log(x.val()));
}
inline Var log1p(const Var& x) {
    return detail::lift_unary(x, 1.0 / (1.0 + x.val()), std::log1p(x.val()));
}
inline Var sqrt(const Var& x) {
    double v = std::sqrt(x.val());
    return detail::lift_unary(x, 0.5 / v, v);
}
inline Var square(const Var& x) {
    return detail::lift_unary(x, 2.0 * x.val(), x.val() * x.val());
}
inline Var lgamma(const Var& x) {
    return detail::lift_unary(x, boost::math::digamma(x.val()), boost::math::lgamma(x.val()));
}
inline Var inv_logit(const Var& x) {
    double s = x.val() >= 0.0 ? 1.0 / (1.0 + std::exp(-x.val()))
                              : std::exp(x.val()) / (1.0 + std::exp(x.val()));
    return detail::lift_unary(x, s * (1.0 - s), s);
}
// log(inv_logit(x)); derivative is inv_logit(-x)
inline Var log_inv_logit(const Var& x) {
    double v = x.val() < -33.0 ? x.val() : -std::log1p(std::exp(-x.val()));
    double s_neg = x.val() >= 0.0 ? std::exp(-x.val()) / (1.0 + std::exp(-x.val()))
                                  : 1.0 / (1.0 + std::exp(x.val()));
    return detail::lift_unary(x, s_neg, v);
}

// double overloads so model code can be written once and instantiated with
// either scalar type
inline double square(double x) { return x * x; }
inline double lgamma(double x) { return boost::math::lgamma(x); }
inline double inv_logit(double x) {
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}
inline double log_inv_logit(double x) {
    return x < -33.0 ? x : -std::log1p(std::exp(-x));
}

inline Var dot(std::span<const Var> xs, std::span<const double> w) {
    if (xs.size() != w.size()) throw DimensionMismatch("dot length");
    Var acc = xs[0] * w[0];
    for (size_t i = 1; i < xs.size(); ++i) acc = acc + xs[i] * w[i];
    return acc;
}

// ---------------------------------------------------------------------------
// Differentiable scalar fields

// A real-valued function of a real vector together with its exact gradient.
class ScalarField {
public:
    virtual ~ScalarField() = default;
    virtual int dimension() const = 0;
    virtual double value(std::span<const double> x) const = 0;
    virtual double value_and_gradient(std::span<const double> x, std::span<double> grad) const = 0;
    // Clone carries private workspaces so concurrent evaluations never share state.
    virtual std::unique_ptr<ScalarField> clone() const = 0;
};

// Wraps a tape-program into a ScalarField. The builder receives the input Vars
// and returns the output Var; the tape arena is reused between evaluations.
class TapeField final : public ScalarField {
public:
    using Builder = std::function<Var(Tape&, std::span<const Var>)>;

    TapeField(int dim, Builder builder) : dim_(dim), builder_(std::move(builder)) {}

    int dimension() const override { return dim_; }

    double value(std::span<const double> x) const override { return run(x, nullptr); }

    double value_and_gradient(std::span<const double> x, std::span<double> grad) const override {
        return run(x, &grad);
    }

    std::unique_ptr<ScalarField> clone() const override {
        return std::make_unique<TapeField>(dim_, builder_);
    }

private:
    double run(std::span<const double> x, std::span<double>* grad) const {
        if (static_cast<int>(x.size()) != dim_) throw DimensionMismatch("field input length");
        for (double v : x)
            if (!std::isfinite(v)) throw NonFiniteValue("non-finite input to field");
        tape_.clear();
        inputs_.clear();
        inputs_.reserve(dim_);
        for (double v : x) inputs_.push_back(Var::input(tape_, v));
        Var out = builder_(tape_, inputs_);
        double v = out.val();
        if (grad) {
            if (static_cast<int>(grad->size()) != dim_) throw DimensionMismatch("gradient length");
            if (!std::isfinite(v) || !out.tracked()) {
                for (auto& g : *grad) g = 0.0;
                return v;
            }
            tape_.gradient(out.index(), *grad);
        }
        return v;
    }

    int dim_;
    Builder builder_;
    mutable Tape tape_;
    mutable std::vector<Var> inputs_;
};

inline double eval_with_gradient(const ScalarField& f, std::span<const double> x,
                                 std::span<double> grad) {
    return f.value_and_gradient(x, grad);
}

// Max relative disagreement between the analytic gradient and central
// differences with per-coordinate step h_i = step * max(1, |x_i|).
inline double finite_diff_check(const ScalarField& f, std::span<const double> x, double step) {
    if (!(step > 0.0)) throw DomainError("step must be positive");
    std::vector<double> grad(f.dimension());
    double v = f.value_and_gradient(x, grad);
    if (!std::isfinite(v)) throw NonFiniteValue("field non-finite at check point");
    std::vector<double> xp(x.begin(), x.end());
    double worst = 0.0;
    for (int i = 0; i < f.dimension(); ++i) {
        double h = step * std::max(1.0, std::abs(x[i]));
        double orig = xp[i];
        xp[i] = orig + h;
        double up = f.value(xp);
        xp[i] = orig - h;
        double dn = f.value(xp);
        xp[i] = orig;
        if (!std::isfinite(up) || !std::isfinite(dn))
            throw NonFiniteValue("field non-finite near check point");
        double fd = (up - dn) / (2.0 * h);
        double rel = std::abs(grad[i] - fd) / (std::abs(grad[i]) + 1e-10);
        if (rel > worst) worst = rel;
    }
    return worst;
}

}  // namespace novelrate::ad
