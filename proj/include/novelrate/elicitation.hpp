#pragma once

#include <array>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "novelrate/data.hpp"
#include "novelrate/distributions.hpp"
#include "novelrate/errors.hpp"

namespace novelrate::elicit {

struct ElicitedQuartiles {
    int year = 0;
    double q25 = 0, q50 = 0, q75 = 0;
    double discount_rate = 0.0;  // in [0,1)

    void validate() const {
        if (!(q25 > 0 && q50 > q25 && q75 > q50))
            throw DegenerateTriple("quartiles must be positive and strictly increasing");
        if (!(discount_rate >= 0.0 && discount_rate < 1.0))
            throw DomainError("discount_rate must lie in [0,1)");
    }
};

struct ElicitedPrior {
    int year = 0;
    dist::DistSpec fitted{dist::Family::Normal, {0, 1}};
    std::array<double, 3> achieved_quartiles{};
    double fit_error = 0.0;  // max relative quartile deviation
};

// Each quartile shrinks by the stated rate; the expert's source catalog counts
// some titles the reference bibliography would not.
inline ElicitedQuartiles discount(const ElicitedQuartiles& q) {
    q.validate();
    ElicitedQuartiles out = q;
    double f = 1.0 - q.discount_rate;
    out.q25 = q.q25 * f;
    out.q50 = q.q50 * f;
    out.q75 = q.q75 * f;
    out.discount_rate = 0.0;
    return out;
}

namespace detail {

inline std::array<double, 3> quartiles_of(const dist::DistSpec& s) {
    return {dist::quantile(s, 0.25), dist::quantile(s, 0.50), dist::quantile(s, 0.75)};
}

inline double sq_quartile_loss(const dist::DistSpec& s, const std::array<double, 3>& target) {
    auto q = quartiles_of(s);
    double loss = 0.0;
    for (int i = 0; i < 3; ++i) {
        double d = q[i] - target[i];
        loss += d * d;
    }
    return loss;
}

// Derivative-free pattern search over a 2-parameter family. `make` maps the
// search coordinates to a spec; coordinates are unconstrained.
template <class Make>
dist::DistSpec coordinate_search(Make make, std::array<double, 2> x,
                                 const std::array<double, 3>& target) {
    std::array<double, 2> step{0.25, 0.25};
    double best = sq_quartile_loss(make(x), target);
    for (int iter = 0; iter < 4000; ++iter) {
        bool moved = false;
        for (int c = 0; c < 2; ++c) {
            for (double dir : {+1.0, -1.0}) {
                auto trial = x;
                trial[c] += dir * step[c];
                double loss = sq_quartile_loss(make(trial), target);
                if (loss < best) {
                    best = loss;
                    x = trial;
                    moved = true;
                }
            }
        }
        if (!moved) {
            step[0] *= 0.5;
            step[1] *= 0.5;
            if (step[0] < 1e-12) break;
        }
    }
    return make(x);
}

inline ElicitedPrior finish(int year, const dist::DistSpec& spec,
                            const std::array<double, 3>& target) {
    ElicitedPrior p;
    p.year = year;
    p.fitted = spec;
    p.achieved_quartiles = quartiles_of(spec);
    double worst = 0.0;
    for (int i = 0; i < 3; ++i)
        worst = std::max(worst, std::abs(p.achieved_quartiles[i] - target[i]) / std::abs(target[i]));
    p.fit_error = worst;
    return p;
}

}  // namespace detail

// Normal on the natural scale, least squares on the three quartiles.
inline ElicitedPrior fit_normal(const ElicitedQuartiles& q) {
    q.validate();
    std::array<double, 3> target{q.q25, q.q50, q.q75};
    double s0 = (q.q75 - q.q25) / 1.349;
    auto make = [&](std::array<double, 2> x) {
        return dist::DistSpec{dist::Family::Normal, {x[0], std::exp(x[1])}};
    };
    auto spec = detail::coordinate_search(make, {q.q50, std::log(s0)}, target);
    return detail::finish(q.year, spec, target);
}

// Gamma fitted to the log-transformed quartiles (the latent rate lives on the
// log scale in the production model).
inline ElicitedPrior fit_gamma_log(const ElicitedQuartiles& q) {
    q.validate();
    std::array<double, 3> target{std::log(q.q25), std::log(q.q50), std::log(q.q75)};
    if (!(target[0] > 0.0))
        throw DegenerateTriple("log-quartiles must be positive for a Gamma fit");
    double m0 = target[1];
    double s0 = (target[2] - target[0]) / 1.349;
    double shape0 = (m0 / s0) * (m0 / s0);
    double rate0 = m0 / (s0 * s0);
    auto make = [&](std::array<double, 2> x) {
        return dist::DistSpec{dist::Family::GammaShapeRate, {std::exp(x[0]), std::exp(x[1])}};
    };
    auto spec = detail::coordinate_search(make, {std::log(shape0), std::log(rate0)}, target);
    return detail::finish(q.year, spec, target);
}

inline data::ElicitedGamma to_model_prior(const ElicitedPrior& p) {
    if (p.fitted.family != dist::Family::GammaShapeRate)
        throw DomainError("model priors use the log-scale Gamma fit");
    return {p.year, p.fitted.params[0], p.fitted.params[1]};
}

// ---------------------------------------------------------------------------
// JSON I/O

inline std::vector<ElicitedQuartiles> load_quartiles_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path);
    nlohmann::json j;
    in >> j;
    if (!j.is_array()) throw Error(path + ": expected a JSON array");
    std::vector<ElicitedQuartiles> out;
    for (const auto& rec : j) {
        ElicitedQuartiles q;
        q.year = rec.at("year").get<int>();
        q.q25 = rec.at("q25").get<double>();
        q.q50 = rec.at("q50").get<double>();
        q.q75 = rec.at("q75").get<double>();
        q.discount_rate = rec.value("discount_rate", 0.0);
        q.validate();
        out.push_back(q);
    }
    return out;
}

inline nlohmann::json prior_to_json(const ElicitedPrior& p, const std::string& scale) {
    return nlohmann::json{{"year", p.year},
                          {"family", dist::family_name(p.fitted.family)},
                          {"scale", scale},
                          {"params", p.fitted.params},
                          {"achieved_quartiles", p.achieved_quartiles},
                          {"fit_error", p.fit_error}};
}

// Fits both representations for every record: the natural-scale Normal and the
// log-scale Gamma actually consumed by the model.
inline nlohmann::json match_all(const std::vector<ElicitedQuartiles>& qs) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& raw : qs) {
        auto q = discount(raw);
        out.push_back(prior_to_json(fit_normal(q), "natural"));
        out.push_back(prior_to_json(fit_gamma_log(q), "log"));
    }
    return out;
}

inline std::vector<data::ElicitedGamma> model_priors_from_json(const std::string& path) {
    std::vector<data::ElicitedGamma> out;
    for (const auto& raw : load_quartiles_json(path))
        out.push_back(to_model_prior(fit_gamma_log(discount(raw))));
    return out;
}

}  // namespace novelrate::elicit
