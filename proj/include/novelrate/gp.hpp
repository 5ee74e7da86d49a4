#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "novelrate/autodiff.hpp"
#include "novelrate/errors.hpp"

namespace novelrate::gp {

// Dense symmetric/lower-triangular storage, row-major, n x n.
struct Matrix {
    int n = 0;
    std::vector<double> a;
    explicit Matrix(int n_) : n(n_), a(static_cast<size_t>(n_) * n_, 0.0) {}
    double& operator()(int i, int j) { return a[static_cast<size_t>(i) * n + j]; }
    double operator()(int i, int j) const { return a[static_cast<size_t>(i) * n + j]; }
};

struct SEKernel {
    double sigma;        // output scale
    double lengthscale;  // years a deviation persists
};

// K[i][j] = sigma^2 * exp(-(t_i - t_j)^2 / l^2) + jitter * sigma^2 * 1[i==j].
// The exponent has no factor 2 in the denominator.
inline Matrix build_cov(std::span<const int> times, const SEKernel& k, double jitter) {
    if (!(k.sigma > 0.0) || !(k.lengthscale > 0.0))
        throw DomainError("kernel parameters must be positive");
    if (!(jitter > 0.0)) throw DomainError("jitter must be positive");
    int n = static_cast<int>(times.size());
    Matrix K(n);
    double s2 = k.sigma * k.sigma;
    double inv_l2 = 1.0 / (k.lengthscale * k.lengthscale);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j <= i; ++j) {
            double d = static_cast<double>(times[i] - times[j]);
            double v = s2 * std::exp(-d * d * inv_l2);
            K(i, j) = v;
            K(j, i) = v;
        }
        K(i, i) = s2 * (1.0 + jitter);
    }
    return K;
}

// Lower-triangular factor with K = L L^T. Reports the first failing leading
// minor on breakdown.
inline Matrix cholesky(const Matrix& K) {
    int n = K.n;
    Matrix L(n);
    for (int j = 0; j < n; ++j) {
        double d = K(j, j);
        for (int k = 0; k < j; ++k) d -= L(j, k) * L(j, k);
        if (!(d > 0.0)) throw NotPositiveDefinite(j + 1);
        double ljj = std::sqrt(d);
        L(j, j) = ljj;
        for (int i = j + 1; i < n; ++i) {
            double s = K(i, j);
            for (int k = 0; k < j; ++k) s -= L(i, k) * L(j, k);
            L(i, j) = s / ljj;
        }
    }
    return L;
}

// alpha + beta*t + (L z)_t for t = 1..T.
struct LatentGP {
    double mean_intercept = 0.0;
    double mean_slope = 0.0;
    SEKernel kernel{1.0, 1.0};
    std::vector<double> whitened;
};

inline std::vector<double> realize(const LatentGP& gp, const Matrix& L) {
    int n = L.n;
    if (static_cast<int>(gp.whitened.size()) != n)
        throw DimensionMismatch("whitened vector length vs factor size");
    std::vector<double> path(n);
    for (int i = 0; i < n; ++i) {
        double dev = 0.0;
        for (int j = 0; j <= i; ++j) dev += L(i, j) * gp.whitened[j];
        path[i] = gp.mean_intercept + gp.mean_slope * static_cast<double>(i + 1) + dev;
    }
    return path;
}

// ---------------------------------------------------------------------------
// Length-scale sensitivity of the correlation factor.
//
// Write K = sigma^2 (R(l) + jitter I); then chol(K) = sigma * C(l) with
// C = chol(R + jitter I), so sigma differentiates analytically and only the
// one-scalar dependence on l needs the factor recurrence. Given Rdot = dR/dl,
// the forward recurrence solves C Cdot^T + Cdot C^T = Rdot on the lower
// triangle.
struct CorrelationFactor {
    Matrix C;      // chol(R + jitter I)
    Matrix dC_dl;  // elementwise derivative in the length-scale
    CorrelationFactor(int n) : C(n), dC_dl(n) {}
};

inline CorrelationFactor corr_factor_with_sensitivity(std::span<const int> times,
                                                      double lengthscale, double jitter) {
    if (!(lengthscale > 0.0)) throw DomainError("lengthscale must be positive");
    int n = static_cast<int>(times.size());
    Matrix R(n), Rd(n);
    double inv_l2 = 1.0 / (lengthscale * lengthscale);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j <= i; ++j) {
            double d = static_cast<double>(times[i] - times[j]);
            double e = std::exp(-d * d * inv_l2);
            R(i, j) = R(j, i) = e;
            // d/dl exp(-d^2/l^2) = exp(...) * 2 d^2 / l^3
            double g = e * 2.0 * d * d / (lengthscale * lengthscale * lengthscale);
            Rd(i, j) = Rd(j, i) = g;
        }
        R(i, i) = 1.0 + jitter;
        Rd(i, i) = 0.0;
    }

    CorrelationFactor out(n);
    Matrix& C = out.C;
    Matrix& D = out.dC_dl;
    for (int j = 0; j < n; ++j) {
        double s = R(j, j), sd = Rd(j, j);
        for (int k = 0; k < j; ++k) {
            s -= C(j, k) * C(j, k);
            sd -= 2.0 * C(j, k) * D(j, k);
        }
        if (!(s > 0.0)) throw NotPositiveDefinite(j + 1);
        double cjj = std::sqrt(s);
        C(j, j) = cjj;
        D(j, j) = 0.5 * sd / cjj;
        for (int i = j + 1; i < n; ++i) {
            double t = R(i, j), td = Rd(i, j);
            for (int k = 0; k < j; ++k) {
                t -= C(i, k) * C(j, k);
                td -= D(i, k) * C(j, k) + C(i, k) * D(j, k);
            }
            C(i, j) = t / cjj;
            D(i, j) = (td - C(i, j) * D(j, j)) / cjj;
        }
    }
    return out;
}

// Tape-side GP deviation: dev = sigma * C(l) z as Vars, with the factor entries
// entering the tape as unary children of the length-scale Var.
inline std::vector<ad::Var> deviation_on_tape(ad::Tape& tape, const ad::Var& sigma,
                                              const ad::Var& lengthscale,
                                              std::span<const ad::Var> z,
                                              std::span<const int> times, double jitter) {
    int n = static_cast<int>(times.size());
    if (static_cast<int>(z.size()) != n) throw DimensionMismatch("whitened vector length");
    CorrelationFactor cf = corr_factor_with_sensitivity(times, lengthscale.val(), jitter);
    auto entry = [&](int i, int j) {
        if (!lengthscale.tracked()) return ad::Var::constant(cf.C(i, j));
        return ad::Var::unary(tape, lengthscale.index(), cf.dC_dl(i, j), cf.C(i, j));
    };
    std::vector<ad::Var> dev;
    dev.reserve(n);
    for (int i = 0; i < n; ++i) {
        ad::Var acc = entry(i, 0) * z[0];
        for (int j = 1; j <= i; ++j) acc = acc + entry(i, j) * z[j];
        dev.push_back(sigma * acc);
    }
    return dev;
}

// Same deviation for plain doubles, optionally reusing a precomputed factor.
inline std::vector<double> deviation_plain(double sigma, double ell, std::span<const double> z,
                                           std::span<const int> times, double jitter,
                                           const CorrelationFactor* cached = nullptr) {
    int n = static_cast<int>(times.size());
    if (static_cast<int>(z.size()) != n) throw DimensionMismatch("whitened vector length");
    CorrelationFactor local(0);
    const CorrelationFactor* cf = cached;
    if (!cf) {
        local = corr_factor_with_sensitivity(times, ell, jitter);
        cf = &local;
    }
    std::vector<double> dev(n);
    for (int i = 0; i < n; ++i) {
        double acc = 0.0;
        for (int j = 0; j <= i; ++j) acc += cf->C(i, j) * z[j];
        dev[i] = sigma * acc;
    }
    return dev;
}

}  // namespace novelrate::gp
