#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/erf.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "novelrate/errors.hpp"

namespace novelrate::dist {

inline constexpr double kLogSqrt2Pi = 0.9189385332046727417803297364056;  // log sqrt(2*pi)

enum class Family {
    Normal,
    Lognormal,
    GammaShapeRate,
    HalfNormal,
    Dirichlet,
    Multinomial,
    Poisson,
    NegBin2,
};

inline const char* family_name(Family f) {
    switch (f) {
        case Family::Normal: return "Normal";
        case Family::Lognormal: return "Lognormal";
        case Family::GammaShapeRate: return "GammaShapeRate";
        case Family::HalfNormal: return "HalfNormal";
        case Family::Dirichlet: return "Dirichlet";
        case Family::Multinomial: return "Multinomial";
        case Family::Poisson: return "Poisson";
        case Family::NegBin2: return "NegBin2";
    }
    return "?";
}

// Scalar specs: Normal [mean, sd], Lognormal [log-mean, log-sd],
// GammaShapeRate [shape, rate], HalfNormal [scale], Poisson [mean],
// NegBin2 [mu, phi]. Dirichlet holds the concentration vector,
// Multinomial [n, p_1..p_k].
struct DistSpec {
    Family family;
    std::vector<double> params;
};

inline void require_positive(double v, const char* what) {
    if (!(v > 0.0)) throw DomainError(std::string(what) + " must be > 0, got " + std::to_string(v));
}

inline double logit(double p) {
    if (!(p > 0.0 && p < 1.0)) throw DomainError("logit requires p in (0,1)");
    return std::log(p / (1.0 - p));
}

inline double inv_logit(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}

// log(inv_logit(x)), stable for large negative x
inline double log_inv_logit(double x) {
    if (x < -33.0) return x;
    return -std::log1p(std::exp(-x));
}

inline double lgamma_s(double x) { return boost::math::lgamma(x); }
inline double digamma_s(double x) { return boost::math::digamma(x); }

// ---------------------------------------------------------------------------
// log densities / pmfs

// Location mu, dispersion phi: mean mu, variance mu + mu^2/phi.
inline double negbin2_logpmf(long long y, double mu, double phi) {
    require_positive(mu, "mu");
    require_positive(phi, "phi");
    if (y < 0) throw DomainError("negbin2 support is non-negative integers");
    double yd = static_cast<double>(y);
    double log_mu_frac = std::log(mu) - std::log(phi + mu);
    return lgamma_s(yd + phi) - lgamma_s(phi) - lgamma_s(yd + 1.0)
         - phi * std::log1p(mu / phi) + yd * log_mu_frac;
}

inline double normal_logpdf(double x, double mean, double sd) {
    require_positive(sd, "sd");
    double z = (x - mean) / sd;
    return -0.5 * z * z - std::log(sd) - kLogSqrt2Pi;
}

inline double lognormal_logpdf(double x, double mu, double sigma) {
    require_positive(sigma, "sigma");
    if (!(x > 0.0)) return -std::numeric_limits<double>::infinity();
    double lx = std::log(x);
    return normal_logpdf(lx, mu, sigma) - lx;
}

inline double gamma_logpdf(double x, double shape, double rate) {
    require_positive(shape, "shape");
    require_positive(rate, "rate");
    if (!(x > 0.0)) return -std::numeric_limits<double>::infinity();
    return shape * std::log(rate) - lgamma_s(shape) + (shape - 1.0) * std::log(x) - rate * x;
}

inline double halfnormal_logpdf(double x, double scale) {
    require_positive(scale, "scale");
    if (x < 0.0) return -std::numeric_limits<double>::infinity();
    double z = x / scale;
    return 0.5 * std::log(2.0) - 0.5 * z * z - std::log(scale) - kLogSqrt2Pi;
}

inline double poisson_logpmf(long long y, double mean) {
    require_positive(mean, "mean");
    if (y < 0) throw DomainError("poisson support is non-negative integers");
    double yd = static_cast<double>(y);
    return yd * std::log(mean) - mean - lgamma_s(yd + 1.0);
}

inline double dirichlet_logpdf(std::span<const double> p, std::span<const double> alpha) {
    if (p.size() != alpha.size()) throw DimensionMismatch("dirichlet dims");
    double sum_a = 0.0, lp = 0.0, sum_p = 0.0;
    for (size_t i = 0; i < p.size(); ++i) {
        require_positive(alpha[i], "alpha");
        if (!(p[i] > 0.0)) return -std::numeric_limits<double>::infinity();
        sum_a += alpha[i];
        sum_p += p[i];
        lp += (alpha[i] - 1.0) * std::log(p[i]) - lgamma_s(alpha[i]);
    }
    if (std::abs(sum_p - 1.0) > 1e-9) throw DomainError("dirichlet point off the simplex");
    return lp + lgamma_s(sum_a);
}

inline double multinomial_logpmf(std::span<const long long> counts, std::span<const double> p) {
    if (counts.size() != p.size()) throw DimensionMismatch("multinomial dims");
    long long n = 0;
    for (auto c : counts) {
        if (c < 0) throw DomainError("negative count");
        n += c;
    }
    double lp = lgamma_s(static_cast<double>(n) + 1.0);
    for (size_t i = 0; i < counts.size(); ++i) {
        lp -= lgamma_s(static_cast<double>(counts[i]) + 1.0);
        if (counts[i] > 0) {
            if (!(p[i] > 0.0)) return -std::numeric_limits<double>::infinity();
            lp += static_cast<double>(counts[i]) * std::log(p[i]);
        }
    }
    return lp;
}

// ---------------------------------------------------------------------------
// spec validation, cdf, quantile

inline void validate(const DistSpec& s) {
    const auto& q = s.params;
    auto need = [&](size_t n) {
        if (q.size() != n)
            throw DomainError(std::string(family_name(s.family)) + " needs " + std::to_string(n) +
                              " parameters, got " + std::to_string(q.size()));
    };
    switch (s.family) {
        case Family::Normal: need(2); require_positive(q[1], "sd"); break;
        case Family::Lognormal: need(2); require_positive(q[1], "log-sd"); break;
        case Family::GammaShapeRate: need(2); require_positive(q[0], "shape"); require_positive(q[1], "rate"); break;
        case Family::HalfNormal: need(1); require_positive(q[0], "scale"); break;
        case Family::Poisson: need(1); require_positive(q[0], "mean"); break;
        case Family::NegBin2: need(2); require_positive(q[0], "mu"); require_positive(q[1], "phi"); break;
        case Family::Dirichlet:
            if (q.empty()) throw DomainError("Dirichlet needs >= 1 concentration");
            for (double a : q) require_positive(a, "concentration");
            break;
        case Family::Multinomial:
            if (q.size() < 2) throw DomainError("Multinomial needs n and probabilities");
            break;
    }
}

inline double normal_cdf(double x, double mean, double sd) {
    return 0.5 * boost::math::erfc(-(x - mean) / (sd * std::sqrt(2.0)));
}

inline double cdf(const DistSpec& s, double x) {
    validate(s);
    const auto& q = s.params;
    switch (s.family) {
        case Family::Normal:
            return normal_cdf(x, q[0], q[1]);
        case Family::Lognormal:
            if (x <= 0.0) return 0.0;
            return normal_cdf(std::log(x), q[0], q[1]);
        case Family::GammaShapeRate:
            if (x <= 0.0) return 0.0;
            return boost::math::gamma_p(q[0], q[1] * x);
        case Family::HalfNormal:
            if (x <= 0.0) return 0.0;
            return boost::math::erf(x / (q[0] * std::sqrt(2.0)));
        case Family::Poisson: {
            if (x < 0.0) return 0.0;
            double k = std::floor(x);
            return boost::math::gamma_q(k + 1.0, q[0]);
        }
        case Family::NegBin2: {
            if (x < 0.0) return 0.0;
            double k = std::floor(x);
            double p = q[1] / (q[1] + q[0]);
            return boost::math::ibeta(q[1], k + 1.0, p);
        }
        default:
            throw Unsupported(std::string("cdf not defined for ") + family_name(s.family));
    }
}

namespace detail {

inline bool discrete_family(Family f) { return f == Family::Poisson || f == Family::NegBin2; }

// Rough center/scale per family, used only to seed brackets.
inline std::pair<double, double> center_scale(const DistSpec& s) {
    const auto& q = s.params;
    switch (s.family) {
        case Family::Normal: return {q[0], q[1]};
        case Family::Lognormal: return {std::exp(q[0]), std::exp(q[0]) * q[1] + 1.0};
        case Family::GammaShapeRate: return {q[0] / q[1], std::sqrt(q[0]) / q[1] + 1e-3};
        case Family::HalfNormal: return {q[0], q[0]};
        default: return {1.0, 1.0};
    }
}

inline bool bounded_below_at_zero(Family f) {
    return f == Family::Lognormal || f == Family::GammaShapeRate || f == Family::HalfNormal;
}

}  // namespace detail

// Inverse CDF by bisection with an expanding bracket.
inline double quantile(const DistSpec& s, double p) {
    validate(s);
    if (!(p > 0.0 && p < 1.0)) throw DomainError("quantile requires p in (0,1)");
    if (s.family == Family::Dirichlet || s.family == Family::Multinomial)
        throw Unsupported(std::string("quantile not defined for ") + family_name(s.family));

    if (detail::discrete_family(s.family)) {
        // smallest k with CDF(k) >= p
        long long hi = 1;
        while (cdf(s, static_cast<double>(hi)) < p) {
            hi *= 2;
            if (hi > (1LL << 58)) throw NoSolution("discrete quantile bracket overflow");
        }
        long long lo = 0;
        if (cdf(s, 0.0) >= p) return 0.0;
        while (hi - lo > 1) {
            long long mid = lo + (hi - lo) / 2;
            if (cdf(s, static_cast<double>(mid)) >= p) hi = mid;
            else lo = mid;
        }
        return static_cast<double>(hi);
    }

    auto [center, scale] = detail::center_scale(s);
    double lo, hi;
    if (detail::bounded_below_at_zero(s.family)) {
        lo = 0.0;
        hi = center + scale;
        while (cdf(s, hi) < p) {
            hi = 2.0 * hi + scale;
            if (!std::isfinite(hi)) throw NoSolution("quantile bracket diverged");
        }
    } else {
        lo = center - scale;
        hi = center + scale;
        while (cdf(s, lo) > p) { lo -= (hi - lo); }
        while (cdf(s, hi) < p) { hi += (hi - lo); }
    }
    for (int it = 0; it < 400; ++it) {
        double mid = 0.5 * (lo + hi);
        if (cdf(s, mid) < p) lo = mid;
        else hi = mid;
        if (hi - lo <= 1e-12 * std::max(1.0, std::abs(lo) + std::abs(hi))) break;
    }
    return 0.5 * (lo + hi);
}

// ---------------------------------------------------------------------------
// quantile-target solving

// Fits the family's free parameters so each (p, value) target is hit exactly
// (as many targets as free parameters). Closed forms where they exist, a 1-D
// monotone bisection in the Gamma shape otherwise.
inline DistSpec solve_quantile_params(Family family,
                                      const std::vector<std::pair<double, double>>& targets) {
    auto std_normal_q = [](double p) {
        return quantile(DistSpec{Family::Normal, {0.0, 1.0}}, p);
    };
    for (const auto& [p, v] : targets) {
        (void)v;
        if (!(p > 0.0 && p < 1.0)) throw DomainError("target probability outside (0,1)");
    }

    switch (family) {
        case Family::Normal: {
            if (targets.size() != 2) throw DomainError("Normal has 2 free parameters");
            auto [p1, v1] = targets[0];
            auto [p2, v2] = targets[1];
            double z1 = std_normal_q(p1), z2 = std_normal_q(p2);
            if (z1 == z2) throw NoSolution("identical target probabilities");
            double sd = (v2 - v1) / (z2 - z1);
            if (!(sd > 0.0)) throw NoSolution("targets not increasing with probability");
            return DistSpec{Family::Normal, {v1 - sd * z1, sd}};
        }
        case Family::Lognormal: {
            if (targets.size() != 2) throw DomainError("Lognormal has 2 free parameters");
            std::vector<std::pair<double, double>> logt;
            for (auto [p, v] : targets) {
                if (!(v > 0.0)) throw NoSolution("Lognormal targets must be positive");
                logt.emplace_back(p, std::log(v));
            }
            auto n = solve_quantile_params(Family::Normal, logt);
            return DistSpec{Family::Lognormal, n.params};
        }
        case Family::HalfNormal: {
            if (targets.size() != 1) throw DomainError("HalfNormal has 1 free parameter");
            auto [p, v] = targets[0];
            if (!(v > 0.0)) throw NoSolution("HalfNormal target must be positive");
            double z = std_normal_q(0.5 * (1.0 + p));
            return DistSpec{Family::HalfNormal, {v / z}};
        }
        case Family::GammaShapeRate: {
            if (targets.size() != 2) throw DomainError("GammaShapeRate has 2 free parameters");
            auto [p1, v1] = targets[0];
            auto [p2, v2] = targets[1];
            if (p1 > p2) { std::swap(p1, p2); std::swap(v1, v2); }
            if (!(v1 > 0.0 && v2 > v1)) throw NoSolution("Gamma targets must be positive and increasing");
            double want = v2 / v1;
            // quantile ratio q(p2)/q(p1) at rate 1 decreases monotonically in shape
            auto ratio = [&](double shape) {
                DistSpec g{Family::GammaShapeRate, {shape, 1.0}};
                return quantile(g, p2) / quantile(g, p1);
            };
            double lo = 1e-3, hi = 1.0;
            while (ratio(hi) > want) {
                hi *= 4.0;
                if (hi > 1e9) throw NoSolution("no Gamma shape matches the target ratio");
            }
            while (ratio(lo) < want) {
                lo /= 4.0;
                if (lo < 1e-12) throw NoSolution("no Gamma shape matches the target ratio");
            }
            for (int it = 0; it < 200; ++it) {
                double mid = 0.5 * (lo + hi);
                if (ratio(mid) > want) lo = mid;
                else hi = mid;
                if (hi - lo <= 1e-13 * hi) break;
            }
            double shape = 0.5 * (lo + hi);
            double rate = quantile(DistSpec{Family::GammaShapeRate, {shape, 1.0}}, p1) / v1;
            DistSpec out{Family::GammaShapeRate, {shape, rate}};
            for (auto [p, v] : targets) {
                double got = quantile(out, p);
                if (std::abs(got - v) > 1e-6 * std::abs(v))
                    throw NoSolution("Gamma quantile solve failed to verify");
            }
            return out;
        }
        default:
            throw Unsupported(std::string("solve_quantile_params not defined for ") + family_name(family));
    }
}

// ---------------------------------------------------------------------------
// sampling (explicit generator handle; caller owns it)

template <class Rng>
double draw_normal(Rng& rng, double mean, double sd) {
    std::normal_distribution<double> d(mean, sd);
    return d(rng);
}

template <class Rng>
double draw_gamma(Rng& rng, double shape, double rate) {
    std::gamma_distribution<double> d(shape, 1.0 / rate);
    return d(rng);
}

template <class Rng>
long long draw_poisson(Rng& rng, double mean) {
    std::poisson_distribution<long long> d(mean);
    return d(rng);
}

// Gamma-Poisson mixture: g ~ Gamma(phi, phi/mu), y ~ Poisson(g).
template <class Rng>
long long draw_negbin2(Rng& rng, double mu, double phi) {
    require_positive(mu, "mu");
    require_positive(phi, "phi");
    double g = draw_gamma(rng, phi, phi / mu);
    if (g <= 0.0) return 0;
    return draw_poisson(rng, g);
}

template <class Rng>
std::vector<double> draw_dirichlet(Rng& rng, std::span<const double> alpha) {
    std::vector<double> out(alpha.size());
    double sum = 0.0;
    for (size_t i = 0; i < alpha.size(); ++i) {
        out[i] = draw_gamma(rng, alpha[i], 1.0);
        sum += out[i];
    }
    for (auto& v : out) v /= sum;
    return out;
}

template <class Rng>
std::vector<long long> draw_multinomial(Rng& rng, long long n, std::span<const double> p) {
    std::vector<long long> out(p.size(), 0);
    double remaining_p = 1.0;
    long long remaining_n = n;
    for (size_t i = 0; i + 1 < p.size() && remaining_n > 0; ++i) {
        double cond = std::min(1.0, std::max(0.0, p[i] / remaining_p));
        std::binomial_distribution<long long> d(remaining_n, cond);
        out[i] = d(rng);
        remaining_n -= out[i];
        remaining_p -= p[i];
    }
    if (!p.empty()) out[p.size() - 1] = remaining_n;
    return out;
}

}  // namespace novelrate::dist
