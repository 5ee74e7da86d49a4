#pragma once

#include <array>
#include <cmath>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "novelrate/autodiff.hpp"
#include "novelrate/data.hpp"
#include "novelrate/distributions.hpp"
#include "novelrate/errors.hpp"
#include "novelrate/gp.hpp"

namespace novelrate::model {

struct NormalPrior {
    double mean;
    double sd;
};

struct LognormalPrior {
    double mu;
    double sigma;
};

// Every hyperprior in one place. Interval-style priors are resolved to their
// parametric form once, at construction.
struct ModelConfig {
    NormalPrior alpha{5.0, 5.0};
    NormalPrior beta{0.0, 0.1};
    NormalPrior alpha_nu{-2.0, 2.0};
    NormalPrior beta_nu{0.0, 0.05};
    NormalPrior alpha_rho{-2.0, 2.0};
    NormalPrior beta_rho{0.0, 0.05};
    NormalPrior alpha_men{0.0, 2.0};
    NormalPrior beta_men{0.0, 0.05};

    double gp_sigma_scale = 1.0;  // HalfNormal scale for all four GP output scales

    // deviations persisting 1-10 years (latent rate), 8-36 years (proportions)
    LognormalPrior ell_fast{1.1513, 0.6999};
    LognormalPrior ell_slow{2.8315, 0.4572};

    double phi_shape = 2.0;
    double phi_rate = 0.1;
    double pi_nu_scale = 2.0;           // pi_nu - 1 ~ HalfNormal(scale)
    double pi_a_shape = 0.0;            // Gamma on the review proportion;
    double pi_a_rate = 0.0;             //   resolved from the 30-70% interval
    double jitter = 1e-6;

    ModelConfig() { resolve_intervals(); }

    void resolve_intervals() {
        auto ln_fast = dist::solve_quantile_params(dist::Family::Lognormal,
                                                   {{0.05, 1.0}, {0.95, 10.0}});
        ell_fast = {ln_fast.params[0], ln_fast.params[1]};
        auto ln_slow = dist::solve_quantile_params(dist::Family::Lognormal,
                                                   {{0.05, 8.0}, {0.95, 36.0}});
        ell_slow = {ln_slow.params[0], ln_slow.params[1]};
        auto ga = dist::solve_quantile_params(dist::Family::GammaShapeRate,
                                              {{0.05, 0.3}, {0.95, 0.7}});
        pi_a_shape = ga.params[0];
        pi_a_rate = ga.params[1];
    }

    static ModelConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

inline ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
    ModelConfig c;
    auto np = [&](const char* key, NormalPrior& p) {
        if (j.contains(key)) {
            p.mean = j.at(key).at("mean").get<double>();
            p.sd = j.at(key).at("sd").get<double>();
        }
    };
    np("alpha", c.alpha);
    np("beta", c.beta);
    np("alpha_nu", c.alpha_nu);
    np("beta_nu", c.beta_nu);
    np("alpha_rho", c.alpha_rho);
    np("beta_rho", c.beta_rho);
    np("alpha_men", c.alpha_men);
    np("beta_men", c.beta_men);
    if (j.contains("gp_sigma_scale")) c.gp_sigma_scale = j.at("gp_sigma_scale").get<double>();
    auto lp = [&](const char* key, LognormalPrior& p) {
        if (!j.contains(key)) return;
        const auto& v = j.at(key);
        if (v.contains("interval")) {
            double prob = v.value("prob", 0.9);
            double tail = 0.5 * (1.0 - prob);
            auto s = dist::solve_quantile_params(
                dist::Family::Lognormal,
                {{tail, v.at("interval")[0].get<double>()},
                 {1.0 - tail, v.at("interval")[1].get<double>()}});
            p = {s.params[0], s.params[1]};
        } else {
            p = {v.at("mu").get<double>(), v.at("sigma").get<double>()};
        }
    };
    lp("lengthscale_rate", c.ell_fast);
    lp("lengthscale_proportion", c.ell_slow);
    if (j.contains("phi")) {
        c.phi_shape = j.at("phi").at("shape").get<double>();
        c.phi_rate = j.at("phi").at("rate").get<double>();
    }
    if (j.contains("pi_nu_scale")) c.pi_nu_scale = j.at("pi_nu_scale").get<double>();
    if (j.contains("pi_a")) {
        const auto& v = j.at("pi_a");
        if (v.contains("interval")) {
            double prob = v.value("prob", 0.9);
            double tail = 0.5 * (1.0 - prob);
            auto s = dist::solve_quantile_params(
                dist::Family::GammaShapeRate,
                {{tail, v.at("interval")[0].get<double>()},
                 {1.0 - tail, v.at("interval")[1].get<double>()}});
            c.pi_a_shape = s.params[0];
            c.pi_a_rate = s.params[1];
        } else {
            c.pi_a_shape = v.at("shape").get<double>();
            c.pi_a_rate = v.at("rate").get<double>();
        }
    }
    if (j.contains("jitter")) c.jitter = j.at("jitter").get<double>();
    return c;
}

inline nlohmann::json ModelConfig::to_json() const {
    auto np = [](const NormalPrior& p) {
        return nlohmann::json{{"mean", p.mean}, {"sd", p.sd}};
    };
    return nlohmann::json{
        {"alpha", np(alpha)},
        {"beta", np(beta)},
        {"alpha_nu", np(alpha_nu)},
        {"beta_nu", np(beta_nu)},
        {"alpha_rho", np(alpha_rho)},
        {"beta_rho", np(beta_rho)},
        {"alpha_men", np(alpha_men)},
        {"beta_men", np(beta_men)},
        {"gp_sigma_scale", gp_sigma_scale},
        {"lengthscale_rate", {{"mu", ell_fast.mu}, {"sigma", ell_fast.sigma}}},
        {"lengthscale_proportion", {{"mu", ell_slow.mu}, {"sigma", ell_slow.sigma}}},
        {"phi", {{"shape", phi_shape}, {"rate", phi_rate}}},
        {"pi_nu_scale", pi_nu_scale},
        {"pi_a", {{"shape", pi_a_shape}, {"rate", pi_a_rate}}},
        {"jitter", jitter}};
}

// ---------------------------------------------------------------------------
// parameters and layout

struct GPParams {
    double intercept = 0.0;
    double slope = 0.0;
    double sigma = 1.0;
    double ell = 5.0;
    std::vector<double> z;  // length T
};

struct ModelParams {
    GPParams lambda_gp;  // latent log rate of new novels
    GPParams nu_gp;      // log odds of the PC novel proportion
    GPParams rho_gp;     // log odds of the unknown-gender share
    GPParams men_gp;     // log odds of the men share among known

    double pi_nu = 1.5;  // LOCED multiplier, > 1
    double pi_a = 0.5;   // Athenaeum review proportion, in (0,1)

    double phi_y = 10.0;
    double phi_pc = 10.0;
    double phi_loced = 10.0;
    double phi_ath = 10.0;
    double phi_g = 10.0;
};

// Position of every coordinate in the unconstrained vector. Scalars first,
// then the four whitened blocks.
struct ParamLayout {
    int T;

    // scalar slots
    enum : int {
        kAlpha = 0, kBeta, kLogSigmaLam, kLogEllLam,
        kAlphaNu, kBetaNu, kLogSigmaNu, kLogEllNu,
        kAlphaRho, kBetaRho, kLogSigmaRho, kLogEllRho,
        kAlphaMen, kBetaMen, kLogSigmaMen, kLogEllMen,
        kRawPiNu, kRawPiA,
        kLogPhiY, kLogPhiPc, kLogPhiLoced, kLogPhiAth, kLogPhiG,
        kScalarCount
    };

    explicit ParamLayout(int horizon) : T(horizon) {}

    int dim() const { return kScalarCount + 4 * T; }
    int z_lambda() const { return kScalarCount; }
    int z_nu() const { return kScalarCount + T; }
    int z_rho() const { return kScalarCount + 2 * T; }
    int z_men() const { return kScalarCount + 3 * T; }

    std::vector<std::string> names() const {
        std::vector<std::string> n = {
            "alpha", "beta", "sigma_lambda", "ell_lambda",
            "alpha_nu", "beta_nu", "sigma_nu", "ell_nu",
            "alpha_rho", "beta_rho", "sigma_rho", "ell_rho",
            "alpha_men", "beta_men", "sigma_men", "ell_men",
            "pi_nu", "pi_a",
            "phi_y", "phi_pc", "phi_loced", "phi_ath", "phi_g"};
        auto block = [&](const char* base) {
            for (int t = 1; t <= T; ++t) n.push_back(std::string(base) + "." + std::to_string(t));
        };
        block("z_lambda");
        block("z_nu");
        block("z_rho");
        block("z_men");
        return n;
    }
};

inline std::vector<double> unconstrain(const ModelParams& p, const ParamLayout& lay) {
    std::vector<double> x(lay.dim());
    auto put_gp = [&](const GPParams& g, int base) {
        x[base + 0] = g.intercept;
        x[base + 1] = g.slope;
        x[base + 2] = std::log(g.sigma);
        x[base + 3] = std::log(g.ell);
    };
    put_gp(p.lambda_gp, ParamLayout::kAlpha);
    put_gp(p.nu_gp, ParamLayout::kAlphaNu);
    put_gp(p.rho_gp, ParamLayout::kAlphaRho);
    put_gp(p.men_gp, ParamLayout::kAlphaMen);
    x[ParamLayout::kRawPiNu] = std::log(p.pi_nu - 1.0);
    x[ParamLayout::kRawPiA] = dist::logit(p.pi_a);
    x[ParamLayout::kLogPhiY] = std::log(p.phi_y);
    x[ParamLayout::kLogPhiPc] = std::log(p.phi_pc);
    x[ParamLayout::kLogPhiLoced] = std::log(p.phi_loced);
    x[ParamLayout::kLogPhiAth] = std::log(p.phi_ath);
    x[ParamLayout::kLogPhiG] = std::log(p.phi_g);
    auto put_z = [&](const std::vector<double>& z, int base) {
        if (static_cast<int>(z.size()) != lay.T) throw DimensionMismatch("whitened block length");
        std::copy(z.begin(), z.end(), x.begin() + base);
    };
    put_z(p.lambda_gp.z, lay.z_lambda());
    put_z(p.nu_gp.z, lay.z_nu());
    put_z(p.rho_gp.z, lay.z_rho());
    put_z(p.men_gp.z, lay.z_men());
    return x;
}

inline ModelParams constrain(std::span<const double> x, const ParamLayout& lay) {
    if (static_cast<int>(x.size()) != lay.dim()) throw DimensionMismatch("parameter vector length");
    ModelParams p;
    auto get_gp = [&](GPParams& g, int base, int zbase) {
        g.intercept = x[base + 0];
        g.slope = x[base + 1];
        g.sigma = std::exp(x[base + 2]);
        g.ell = std::exp(x[base + 3]);
        g.z.assign(x.begin() + zbase, x.begin() + zbase + lay.T);
    };
    get_gp(p.lambda_gp, ParamLayout::kAlpha, lay.z_lambda());
    get_gp(p.nu_gp, ParamLayout::kAlphaNu, lay.z_nu());
    get_gp(p.rho_gp, ParamLayout::kAlphaRho, lay.z_rho());
    get_gp(p.men_gp, ParamLayout::kAlphaMen, lay.z_men());
    p.pi_nu = 1.0 + std::exp(x[ParamLayout::kRawPiNu]);
    p.pi_a = dist::inv_logit(x[ParamLayout::kRawPiA]);
    p.phi_y = std::exp(x[ParamLayout::kLogPhiY]);
    p.phi_pc = std::exp(x[ParamLayout::kLogPhiPc]);
    p.phi_loced = std::exp(x[ParamLayout::kLogPhiLoced]);
    p.phi_ath = std::exp(x[ParamLayout::kLogPhiAth]);
    p.phi_g = std::exp(x[ParamLayout::kLogPhiG]);
    return p;
}

// ---------------------------------------------------------------------------
// derived quantities

struct DerivedRates {
    std::vector<double> novel_rate;      // exp(lambda_t)
    std::vector<double> pc_rate;         // novel_rate / inv_logit(nu_t)
    std::vector<double> loced_rate;      // pi_nu * pc_rate
    std::vector<double> ath_rate;        // pi_a * novel_rate
    std::vector<double> prop_unknown;    // inv_logit(rho_t)
    std::vector<double> prop_men_known;  // inv_logit(men_t)
};

inline std::vector<int> default_times(int T) {
    std::vector<int> t(T);
    std::iota(t.begin(), t.end(), 1);
    return t;
}

inline std::vector<double> realize_path(const GPParams& g, std::span<const int> times,
                                        double jitter) {
    auto dev = gp::deviation_plain(g.sigma, g.ell, g.z, times, jitter);
    std::vector<double> path(times.size());
    for (size_t i = 0; i < times.size(); ++i)
        path[i] = g.intercept + g.slope * static_cast<double>(times[i]) + dev[i];
    return path;
}

inline DerivedRates derive_rates(const ModelParams& p, int T, double jitter = 1e-6) {
    auto times = default_times(T);
    auto lam = realize_path(p.lambda_gp, times, jitter);
    auto nu = realize_path(p.nu_gp, times, jitter);
    auto rho = realize_path(p.rho_gp, times, jitter);
    auto men = realize_path(p.men_gp, times, jitter);
    DerivedRates r;
    r.novel_rate.resize(T);
    r.pc_rate.resize(T);
    r.loced_rate.resize(T);
    r.ath_rate.resize(T);
    r.prop_unknown.resize(T);
    r.prop_men_known.resize(T);
    for (int t = 0; t < T; ++t) {
        r.novel_rate[t] = std::exp(lam[t]);
        r.pc_rate[t] = r.novel_rate[t] / dist::inv_logit(nu[t]);
        r.loced_rate[t] = p.pi_nu * r.pc_rate[t];
        r.ath_rate[t] = p.pi_a * r.novel_rate[t];
        r.prop_unknown[t] = dist::inv_logit(rho[t]);
        r.prop_men_known[t] = dist::inv_logit(men[t]);
    }
    return r;
}

struct GenderRates {
    double men;
    double women;
    double unknown;
};

// Splits a total rate into the three annotation categories; the three parts
// sum to the total exactly.
inline GenderRates split_by_gender(double total, double prop_unknown, double prop_men_known) {
    GenderRates g;
    g.unknown = total * prop_unknown;
    g.men = total * (1.0 - prop_unknown) * prop_men_known;
    g.women = total * (1.0 - prop_unknown) * (1.0 - prop_men_known);
    return g;
}

inline GenderRates gender_category_rates(const DerivedRates& r, int t /* 1-based */) {
    if (t < 1 || t > static_cast<int>(r.novel_rate.size()))
        throw DomainError("t outside 1..T");
    return split_by_gender(r.novel_rate[t - 1], r.prop_unknown[t - 1], r.prop_men_known[t - 1]);
}

inline GenderRates gender_category_rates(const ModelParams& p, int T, int t,
                                         double jitter = 1e-6) {
    return gender_category_rates(derive_rates(p, T, jitter), t);
}

// ---------------------------------------------------------------------------
// joint density

template <class S>
struct LogJointBlocks {
    S prior_z{};
    S prior_hyper{};
    S lik_rfgs{};
    S lik_pc{};
    S lik_loced{};
    S lik_ath{};
    S lik_gender_rfgs{};
    S lik_gender_ath{};
    S elicited{};
    S jacobian{};

    S total() const {
        return prior_z + prior_hyper + lik_rfgs + lik_pc + lik_loced + lik_ath +
               lik_gender_rfgs + lik_gender_ath + elicited + jacobian;
    }
};

namespace detail {

using ad::inv_logit;
using ad::lgamma;
using ad::log_inv_logit;
using ad::square;

template <class S>
S negbin2_lp(long long y, const S& mu, const S& phi) {
    using ad::log1p;
    using std::log1p;
    using ad::log;
    using std::log;
    double yd = static_cast<double>(y);
    double c = -boost::math::lgamma(yd + 1.0);
    return lgamma(phi + yd) - lgamma(phi) + c - phi * log1p(mu / phi) +
           yd * (log(mu) - log(phi + mu));
}

template <class S>
S normal_lp(const S& x, double mean, double sd) {
    return square((x - mean) * (1.0 / sd)) * (-0.5) - (std::log(sd) + dist::kLogSqrt2Pi);
}

template <class S>
S halfnormal_lp(const S& x, double scale) {
    return square(x * (1.0 / scale)) * (-0.5) +
           (0.5 * std::log(2.0) - std::log(scale) - dist::kLogSqrt2Pi);
}

template <class S>
S lognormal_lp(const S& x, double mu, double sigma) {
    using ad::log;
    using std::log;
    S lx = log(x);
    return normal_lp(lx, mu, sigma) - lx;
}

template <class S>
S gamma_lp(const S& x, double shape, double rate) {
    using ad::log;
    using std::log;
    double c = shape * std::log(rate) - boost::math::lgamma(shape);
    return (shape - 1.0) * log(x) - rate * x + c;
}

// Everything the block computation needs, already on the right scale.
template <class S>
struct Terms {
    // constrained scalars
    S alpha, beta, sigma_lam, ell_lam;
    S alpha_nu, beta_nu, sigma_nu, ell_nu;
    S alpha_rho, beta_rho, sigma_rho, ell_rho;
    S alpha_men, beta_men, sigma_men, ell_men;
    S pi_nu, pi_a;
    S phi_y, phi_pc, phi_loced, phi_ath, phi_g;
    // unconstrained coordinates that carry a Jacobian
    S raw_log_sigma_lam, raw_log_ell_lam, raw_log_sigma_nu, raw_log_ell_nu;
    S raw_log_sigma_rho, raw_log_ell_rho, raw_log_sigma_men, raw_log_ell_men;
    S raw_pi_nu, raw_pi_a;
    S raw_log_phi_y, raw_log_phi_pc, raw_log_phi_loced, raw_log_phi_ath, raw_log_phi_g;
    // whitened innovations
    std::vector<S> z_lam, z_nu, z_rho, z_men;
};

// Realize is called lazily, once per needed process:
//   realize(which, sigma, ell, z) -> path deviations (sigma * C(ell) z)
template <class S, class Realize>
LogJointBlocks<S> compute_blocks(const data::AlignedDataset& d, const ModelConfig& cfg,
                                 const Terms<S>& p, Realize&& realize) {
    using ad::exp;
    using std::exp;
    using ad::log;
    using std::log;

    LogJointBlocks<S> b;
    const int T = d.horizon;

    for (const auto* z : {&p.z_lam, &p.z_nu, &p.z_rho, &p.z_men})
        for (const S& zi : *z) b.prior_z += square(zi) * (-0.5) - dist::kLogSqrt2Pi;

    b.prior_hyper += normal_lp(p.alpha, cfg.alpha.mean, cfg.alpha.sd);
    b.prior_hyper += normal_lp(p.beta, cfg.beta.mean, cfg.beta.sd);
    b.prior_hyper += normal_lp(p.alpha_nu, cfg.alpha_nu.mean, cfg.alpha_nu.sd);
    b.prior_hyper += normal_lp(p.beta_nu, cfg.beta_nu.mean, cfg.beta_nu.sd);
    b.prior_hyper += normal_lp(p.alpha_rho, cfg.alpha_rho.mean, cfg.alpha_rho.sd);
    b.prior_hyper += normal_lp(p.beta_rho, cfg.beta_rho.mean, cfg.beta_rho.sd);
    b.prior_hyper += normal_lp(p.alpha_men, cfg.alpha_men.mean, cfg.alpha_men.sd);
    b.prior_hyper += normal_lp(p.beta_men, cfg.beta_men.mean, cfg.beta_men.sd);
    b.prior_hyper += halfnormal_lp(p.sigma_lam, cfg.gp_sigma_scale);
    b.prior_hyper += halfnormal_lp(p.sigma_nu, cfg.gp_sigma_scale);
    b.prior_hyper += halfnormal_lp(p.sigma_rho, cfg.gp_sigma_scale);
    b.prior_hyper += halfnormal_lp(p.sigma_men, cfg.gp_sigma_scale);
    b.prior_hyper += lognormal_lp(p.ell_lam, cfg.ell_fast.mu, cfg.ell_fast.sigma);
    b.prior_hyper += lognormal_lp(p.ell_nu, cfg.ell_slow.mu, cfg.ell_slow.sigma);
    b.prior_hyper += lognormal_lp(p.ell_rho, cfg.ell_slow.mu, cfg.ell_slow.sigma);
    b.prior_hyper += lognormal_lp(p.ell_men, cfg.ell_slow.mu, cfg.ell_slow.sigma);
    b.prior_hyper += halfnormal_lp(p.pi_nu - 1.0, cfg.pi_nu_scale);
    b.prior_hyper += gamma_lp(p.pi_a, cfg.pi_a_shape, cfg.pi_a_rate);
    for (const S* phi : {&p.phi_y, &p.phi_pc, &p.phi_loced, &p.phi_ath, &p.phi_g})
        b.prior_hyper += gamma_lp(*phi, cfg.phi_shape, cfg.phi_rate);

    // log |d constrained / d unconstrained|
    for (const S* raw :
         {&p.raw_log_sigma_lam, &p.raw_log_ell_lam, &p.raw_log_sigma_nu, &p.raw_log_ell_nu,
          &p.raw_log_sigma_rho, &p.raw_log_ell_rho, &p.raw_log_sigma_men, &p.raw_log_ell_men,
          &p.raw_pi_nu, &p.raw_log_phi_y, &p.raw_log_phi_pc, &p.raw_log_phi_loced,
          &p.raw_log_phi_ath, &p.raw_log_phi_g})
        b.jacobian += *raw;
    b.jacobian += log_inv_logit(p.raw_pi_a) + log_inv_logit(-p.raw_pi_a);

    const bool has_gender = !d.rfgs_gender.empty() || !d.ath_gender.empty();
    const bool need_lambda = d.rfgs_total.has_value() || d.pc.has_value() ||
                             d.loced.has_value() || d.athenaeum.has_value() || has_gender ||
                             !d.elicited.empty();
    const bool need_nu = d.pc.has_value() || d.loced.has_value();

    std::vector<S> lam, nu, rho, men;
    auto trend = [&](const S& a, const S& bta, std::vector<S>& dev) {
        for (int t = 0; t < T; ++t) dev[t] = dev[t] + a + bta * static_cast<double>(t + 1);
    };
    if (need_lambda) {
        lam = realize(0, p.sigma_lam, p.ell_lam, p.z_lam);
        trend(p.alpha, p.beta, lam);
    }
    if (need_nu) {
        nu = realize(1, p.sigma_nu, p.ell_nu, p.z_nu);
        trend(p.alpha_nu, p.beta_nu, nu);
    }
    if (has_gender) {
        rho = realize(2, p.sigma_rho, p.ell_rho, p.z_rho);
        trend(p.alpha_rho, p.beta_rho, rho);
        men = realize(3, p.sigma_men, p.ell_men, p.z_men);
        trend(p.alpha_men, p.beta_men, men);
    }

    auto idx = [&](int year) { return d.t_of_year(year) - 1; };

    if (d.rfgs_total)
        for (const auto& e : d.rfgs_total->entries)
            b.lik_rfgs += negbin2_lp(e.count, exp(lam[idx(e.year)]), p.phi_y);

    if (d.pc)
        for (const auto& e : d.pc->entries) {
            int i = idx(e.year);
            S mu = exp(lam[i] - log_inv_logit(nu[i]));
            b.lik_pc += negbin2_lp(e.count, mu, p.phi_pc);
        }

    if (d.loced)
        for (const auto& e : d.loced->entries) {
            int i = idx(e.year);
            S mu = p.pi_nu * exp(lam[i] - log_inv_logit(nu[i]));
            b.lik_loced += negbin2_lp(e.count, mu, p.phi_loced);
        }

    if (d.athenaeum)
        for (const auto& e : d.athenaeum->entries)
            b.lik_ath += negbin2_lp(e.count, p.pi_a * exp(lam[idx(e.year)]), p.phi_ath);

    auto gender_terms = [&](const data::GenderCountRow& g, const S& base, S& into) {
        int i = idx(g.year);
        S unknown_share = inv_logit(rho[i]);
        S men_share = inv_logit(men[i]);
        S known = base * (1.0 - unknown_share);
        into += negbin2_lp(g.men, known * men_share, p.phi_g);
        into += negbin2_lp(g.women, known * (1.0 - men_share), p.phi_g);
        into += negbin2_lp(g.unknown, base * unknown_share, p.phi_g);
    };
    for (const auto& g : d.rfgs_gender)
        gender_terms(g, exp(lam[idx(g.year)]), b.lik_gender_rfgs);
    for (const auto& g : d.ath_gender)
        gender_terms(g, p.pi_a * exp(lam[idx(g.year)]), b.lik_gender_ath);

    for (const auto& e : d.elicited)
        b.elicited += gamma_lp(lam[idx(e.year)], e.shape, e.rate);

    return b;
}

template <class S>
Terms<S> terms_from_coords(std::span<const S> x, const ParamLayout& lay) {
    using ad::exp;
    using std::exp;
    Terms<S> p;
    auto gp = [&](int base, S& a, S& bta, S& sig, S& ell, S& raw_sig, S& raw_ell) {
        a = x[base + 0];
        bta = x[base + 1];
        raw_sig = x[base + 2];
        raw_ell = x[base + 3];
        sig = exp(raw_sig);
        ell = exp(raw_ell);
    };
    gp(ParamLayout::kAlpha, p.alpha, p.beta, p.sigma_lam, p.ell_lam, p.raw_log_sigma_lam,
       p.raw_log_ell_lam);
    gp(ParamLayout::kAlphaNu, p.alpha_nu, p.beta_nu, p.sigma_nu, p.ell_nu, p.raw_log_sigma_nu,
       p.raw_log_ell_nu);
    gp(ParamLayout::kAlphaRho, p.alpha_rho, p.beta_rho, p.sigma_rho, p.ell_rho,
       p.raw_log_sigma_rho, p.raw_log_ell_rho);
    gp(ParamLayout::kAlphaMen, p.alpha_men, p.beta_men, p.sigma_men, p.ell_men,
       p.raw_log_sigma_men, p.raw_log_ell_men);
    p.raw_pi_nu = x[ParamLayout::kRawPiNu];
    p.pi_nu = exp(p.raw_pi_nu) + 1.0;
    p.raw_pi_a = x[ParamLayout::kRawPiA];
    p.pi_a = inv_logit(p.raw_pi_a);
    p.raw_log_phi_y = x[ParamLayout::kLogPhiY];
    p.raw_log_phi_pc = x[ParamLayout::kLogPhiPc];
    p.raw_log_phi_loced = x[ParamLayout::kLogPhiLoced];
    p.raw_log_phi_ath = x[ParamLayout::kLogPhiAth];
    p.raw_log_phi_g = x[ParamLayout::kLogPhiG];
    p.phi_y = exp(p.raw_log_phi_y);
    p.phi_pc = exp(p.raw_log_phi_pc);
    p.phi_loced = exp(p.raw_log_phi_loced);
    p.phi_ath = exp(p.raw_log_phi_ath);
    p.phi_g = exp(p.raw_log_phi_g);
    auto zblock = [&](int base, std::vector<S>& z) {
        z.assign(x.begin() + base, x.begin() + base + lay.T);
    };
    zblock(lay.z_lambda(), p.z_lam);
    zblock(lay.z_nu(), p.z_nu);
    zblock(lay.z_rho(), p.z_rho);
    zblock(lay.z_men(), p.z_men);
    return p;
}

}  // namespace detail

// Caches the correlation factor of each process against its length-scale; a
// cache instance belongs to exactly one evaluation workspace.
struct FactorCache {
    struct Slot {
        double ell = -1.0;
        std::optional<gp::CorrelationFactor> factor;
    };
    std::array<Slot, 4> slots;

    const gp::CorrelationFactor& get(int which, double ell, std::span<const int> times,
                                     double jitter) {
        Slot& s = slots[which];
        if (!s.factor || s.ell != ell) {
            s.factor = gp::corr_factor_with_sensitivity(times, ell, jitter);
            s.ell = ell;
        }
        return *s.factor;
    }
};

class Model {
public:
    Model(data::AlignedDataset dataset, ModelConfig cfg = {})
        : data_(std::make_shared<const data::AlignedDataset>(std::move(dataset))),
          cfg_(cfg),
          layout_(data_->horizon),
          times_(default_times(data_->horizon)) {}

    const data::AlignedDataset& dataset() const { return *data_; }
    const ModelConfig& config() const { return cfg_; }
    const ParamLayout& layout() const { return layout_; }

    LogJointBlocks<double> log_joint_blocks(const ModelParams& p) const {
        auto x = unconstrain(p, layout_);
        auto terms = detail::terms_from_coords<double>(std::span<const double>(x), layout_);
        FactorCache cache;
        auto realize = [&](int which, double sigma, double ell, const std::vector<double>& z) {
            const auto& cf = cache.get(which, ell, times_, cfg_.jitter);
            return gp::deviation_plain(sigma, ell, z, times_, cfg_.jitter, &cf);
        };
        return detail::compute_blocks<double>(*data_, cfg_, terms, realize);
    }

    double log_joint(const ModelParams& p) const { return log_joint_blocks(p).total(); }

    std::unique_ptr<ad::ScalarField> field() const;

    // Draws one synthetic dataset with the same observation pattern as the
    // model's dataset, counts replaced by draws from the sampling model.
    template <class Rng>
    data::AlignedDataset simulate(const ModelParams& p, Rng& rng) const {
        const auto& d = *data_;
        data::AlignedDataset out = d;
        DerivedRates r = derive_rates(p, d.horizon, cfg_.jitter);
        auto at = [&](int year) { return d.t_of_year(year) - 1; };
        auto sim_series = [&](std::optional<data::CountSeries>& s,
                              const std::vector<double>& rate, double phi) {
            if (!s) return;
            for (auto& e : s->entries)
                e.count = dist::draw_negbin2(rng, rate[at(e.year)], phi);
        };
        sim_series(out.rfgs_total, r.novel_rate, p.phi_y);
        sim_series(out.pc, r.pc_rate, p.phi_pc);
        sim_series(out.loced, r.loced_rate, p.phi_loced);
        sim_series(out.athenaeum, r.ath_rate, p.phi_ath);
        auto sim_gender = [&](std::vector<data::GenderCountRow>& rows,
                              const std::vector<double>& base) {
            for (auto& g : rows) {
                auto parts = split_by_gender(base[at(g.year)], r.prop_unknown[at(g.year)],
                                             r.prop_men_known[at(g.year)]);
                g.men = dist::draw_negbin2(rng, parts.men, p.phi_g);
                g.women = dist::draw_negbin2(rng, parts.women, p.phi_g);
                g.unknown = dist::draw_negbin2(rng, parts.unknown, p.phi_g);
            }
        };
        sim_gender(out.rfgs_gender, r.novel_rate);
        sim_gender(out.ath_gender, r.ath_rate);
        return out;
    }

private:
    friend class ModelField;
    std::shared_ptr<const data::AlignedDataset> data_;
    ModelConfig cfg_;
    ParamLayout layout_;
    std::vector<int> times_;
};

// Unconstrained log joint density with private tape and factor cache.
class ModelField final : public ad::ScalarField {
public:
    explicit ModelField(const Model& m) : model_(&m) {}

    int dimension() const override { return model_->layout_.dim(); }

    double value(std::span<const double> x) const override {
        check(x);
        auto terms = detail::terms_from_coords<double>(x, model_->layout_);
        auto realize = [&](int which, double sigma, double ell, const std::vector<double>& z) {
            const auto& cf = cache_.get(which, ell, model_->times_, model_->cfg_.jitter);
            return gp::deviation_plain(sigma, ell, z, model_->times_, model_->cfg_.jitter, &cf);
        };
        return detail::compute_blocks<double>(*model_->data_, model_->cfg_, terms, realize)
            .total();
    }

    double value_and_gradient(std::span<const double> x, std::span<double> grad) const override {
        check(x);
        if (static_cast<int>(grad.size()) != dimension())
            throw DimensionMismatch("gradient length");
        tape_.clear();
        std::vector<ad::Var> in;
        in.reserve(x.size());
        for (double v : x) in.push_back(ad::Var::input(tape_, v));
        auto terms =
            detail::terms_from_coords<ad::Var>(std::span<const ad::Var>(in), model_->layout_);
        auto realize = [&](int which, ad::Var sigma, ad::Var ell,
                           const std::vector<ad::Var>& z) {
            // cache keyed on the length-scale value; sensitivities are exact at it
            (void)which;
            return gp::deviation_on_tape(tape_, sigma, ell, z, model_->times_,
                                         model_->cfg_.jitter);
        };
        ad::Var out =
            detail::compute_blocks<ad::Var>(*model_->data_, model_->cfg_, terms, realize).total();
        double v = out.val();
        if (!std::isfinite(v) || !out.tracked()) {
            for (auto& g : grad) g = 0.0;
            return v;
        }
        tape_.gradient(out.index(), grad);
        return v;
    }

    std::unique_ptr<ad::ScalarField> clone() const override {
        return std::make_unique<ModelField>(*model_);
    }

private:
    void check(std::span<const double> x) const {
        if (static_cast<int>(x.size()) != dimension())
            throw DimensionMismatch("field input length");
        for (double v : x)
            if (!std::isfinite(v)) throw NonFiniteValue("non-finite input to field");
    }

    const Model* model_;
    mutable ad::Tape tape_;
    mutable FactorCache cache_;
};

inline std::unique_ptr<ad::ScalarField> Model::field() const {
    return std::make_unique<ModelField>(*this);
}

}  // namespace novelrate::model
