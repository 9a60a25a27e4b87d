#pragma once

// Merging several crowd masks of one image into a single segmentation.

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "crowdqc/core.hpp"
#include "crowdqc/geometry.hpp"

namespace crowdqc {

enum class FusionMethod { Majority, ConfidenceWeighted, Staple, StapleQc };

inline std::string_view to_string(FusionMethod m) {
    switch (m) {
    case FusionMethod::Majority: return "mv";
    case FusionMethod::ConfidenceWeighted: return "cw-mv";
    case FusionMethod::Staple: return "staple";
    case FusionMethod::StapleQc: return "staple-qc";
    }
    return "?";
}

inline std::optional<FusionMethod> parse_fusion_method(std::string_view s) {
    for (auto m : {FusionMethod::Majority, FusionMethod::ConfidenceWeighted, FusionMethod::Staple, FusionMethod::StapleQc})
        if (to_string(m) == s) return m;
    return std::nullopt;
}

/// Estimated quality of one annotation and its confidence above epsilon_t.
struct QualityEstimate {
    double s_hat = 0.0;
    double kappa = 0.0;
};

/// kappa = (s_hat - eps) / (1 - eps); only defined for s_hat >= eps.
inline double confidence(double s_hat, double epsilon_t) {
    if (!(epsilon_t >= 0.0 && epsilon_t < 1.0)) throw DomainError("epsilon_t must lie in [0, 1)");
    if (s_hat < epsilon_t) throw DomainError("confidence undefined below the threshold");
    return std::clamp((s_hat - epsilon_t) / (1.0 - epsilon_t), 0.0, 1.0);
}

inline QualityEstimate make_estimate(double s_hat, double epsilon_t) { return {s_hat, confidence(s_hat, epsilon_t)}; }

struct FusionConfig {
    double epsilon_t = 0.9;
    std::size_t lambda = 1;
    FusionMethod method = FusionMethod::ConfidenceWeighted;
};

struct Filtered {
    std::vector<std::size_t> accepted;  ///< indices into the input, input order
    std::size_t rejected = 0;
};

/// Keeps estimates with s_hat >= epsilon_t (inclusive).
inline Filtered filter_by_threshold(std::span<const double> s_hat, double epsilon_t) {
    Filtered f;
    for (std::size_t i = 0; i < s_hat.size(); ++i) {
        if (s_hat[i] >= epsilon_t)
            f.accepted.push_back(i);
        else
            ++f.rejected;
    }
    return f;
}

namespace detail {

inline void check_same_shape(std::span<const Mask> masks) {
    if (masks.empty()) throw DomainError("no masks to fuse");
    for (const Mask& m : masks)
        if (!m.same_shape(masks.front())) throw DomainError("mask dimensions differ");
}

}  // namespace detail

/// Smallest integer majority of lambda voters.
inline std::size_t majority_count(std::size_t lambda) { return lambda / 2 + 1; }

/// Pixel set iff more than half of the masks set it.
inline Mask majority_vote(std::span<const Mask> masks) {
    detail::check_same_shape(masks);
    const std::size_t need = majority_count(masks.size());
    Mask out(masks.front().width(), masks.front().height());
    for (std::size_t i = 0; i < out.pixel_count(); ++i) {
        std::size_t votes = 0;
        for (const Mask& m : masks) votes += m[i];
        out.set_index(i, votes >= need);
    }
    return out;
}

/// Confidence-weighted majority vote. Accumulates kappa-weighted votes,
/// then keeps pixels reaching psi = max(accumulated) / lambda * mu. A single
/// mask is returned unchanged; when every kappa is zero the plain majority
/// vote applies.
inline Mask confidence_weighted_mv(std::span<const Mask> masks, std::span<const double> kappas) {
    detail::check_same_shape(masks);
    if (kappas.size() != masks.size()) throw DomainError("one confidence per mask required");
    for (double k : kappas)
        if (!(k >= 0.0 && k <= 1.0)) throw DomainError("confidence outside [0, 1]");
    if (masks.size() == 1) return masks.front();

    const std::size_t n = masks.front().pixel_count();
    std::vector<double> acc(n, 0.0);
    double peak = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double a = 0.0;
        for (std::size_t j = 0; j < masks.size(); ++j)
            if (masks[j][i]) a += kappas[j];
        acc[i] = a;
        peak = std::max(peak, a);
    }
    if (peak == 0.0) return majority_vote(masks);

    const double lambda = static_cast<double>(masks.size());
    const double psi = peak / lambda * static_cast<double>(majority_count(masks.size()));
    // Ties at psi count as set; the slack absorbs summation-order rounding.
    const double slack = 1e-12 * peak;
    Mask out(masks.front().width(), masks.front().height());
    for (std::size_t i = 0; i < n; ++i) out.set_index(i, acc[i] > 0.0 && acc[i] >= psi - slack);
    return out;
}

/// Estimates -> confidences, then confidence_weighted_mv. Every estimate must
/// already pass the threshold.
inline Mask confidence_weighted_mv_from_estimates(std::span<const Mask> masks, std::span<const double> s_hat,
                                                  double epsilon_t) {
    std::vector<double> k;
    k.reserve(s_hat.size());
    for (double s : s_hat) k.push_back(confidence(s, epsilon_t));
    return confidence_weighted_mv(masks, k);
}

// ---------------------------------------------------------------------------
// STAPLE (binary expectation maximization)

struct StapleOptions {
    double tolerance = 1e-6;
    std::size_t max_iterations = 100;
    double initial_sensitivity = 0.99999;
    double initial_specificity = 0.99999;
    double clamp = 1e-6;  ///< parameters stay in [clamp, 1 - clamp]
};

struct StapleResult {
    Mask mask;
    std::vector<double> sensitivity;  ///< p_j
    std::vector<double> specificity;  ///< q_j
    std::vector<double> posterior;    ///< per-pixel object probability
    double prior = 0.0;
    std::size_t iterations = 0;
    bool converged = false;
    bool degenerate = false;  ///< every input empty
};

/// Warfield-style STAPLE with a fixed prior equal to the mean foreground
/// fraction of the inputs. The consensus is posterior >= 0.5.
inline StapleResult staple(std::span<const Mask> masks, const StapleOptions& opt = {}) {
    detail::check_same_shape(masks);
    const std::size_t raters = masks.size();
    const std::size_t n = masks.front().pixel_count();
    StapleResult res;
    res.mask = Mask(masks.front().width(), masks.front().height());
    res.sensitivity.assign(raters, opt.initial_sensitivity);
    res.specificity.assign(raters, opt.initial_specificity);
    res.posterior.assign(n, 0.0);

    std::size_t fg = 0;
    for (const Mask& m : masks) fg += m.count();
    if (fg == 0) {
        res.degenerate = true;
        res.converged = true;
        return res;
    }
    res.prior = static_cast<double>(fg) / (static_cast<double>(n) * static_cast<double>(raters));
    const double lo = opt.clamp;
    const double hi = 1.0 - opt.clamp;
    const double log_prior = std::log(res.prior);
    const double log_background = std::log1p(-res.prior);
    std::vector<double> log_p(raters), log_1mp(raters), log_q(raters), log_1mq(raters);

    for (res.iterations = 1; res.iterations <= opt.max_iterations; ++res.iterations) {
        // E-step, in log space.
        for (std::size_t j = 0; j < raters; ++j) {
            log_p[j] = std::log(res.sensitivity[j]);
            log_1mp[j] = std::log1p(-res.sensitivity[j]);
            log_q[j] = std::log(res.specificity[j]);
            log_1mq[j] = std::log1p(-res.specificity[j]);
        }
        for (std::size_t i = 0; i < n; ++i) {
            double la = log_prior;
            double lb = log_background;
            for (std::size_t j = 0; j < raters; ++j) {
                if (masks[j][i]) {
                    la += log_p[j];
                    lb += log_1mq[j];
                } else {
                    la += log_1mp[j];
                    lb += log_q[j];
                }
            }
            const double m = std::max(la, lb);
            const double a = std::exp(la - m);
            const double b = std::exp(lb - m);
            res.posterior[i] = a / (a + b);
        }
        // M-step.
        double w_sum = 0.0;
        for (double w : res.posterior) w_sum += w;
        const double v_sum = static_cast<double>(n) - w_sum;
        double change = 0.0;
        for (std::size_t j = 0; j < raters; ++j) {
            double tp = 0.0, tn = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (masks[j][i])
                    tp += res.posterior[i];
                else
                    tn += 1.0 - res.posterior[i];
            }
            const double p = w_sum > 0.0 ? std::clamp(tp / w_sum, lo, hi) : res.sensitivity[j];
            const double q = v_sum > 0.0 ? std::clamp(tn / v_sum, lo, hi) : res.specificity[j];
            change = std::max({change, std::abs(p - res.sensitivity[j]), std::abs(q - res.specificity[j])});
            res.sensitivity[j] = p;
            res.specificity[j] = q;
        }
        if (change < opt.tolerance) {
            res.converged = true;
            break;
        }
    }
    res.iterations = std::min(res.iterations, opt.max_iterations);
    for (std::size_t i = 0; i < n; ++i) res.mask.set_index(i, res.posterior[i] >= 0.5);
    return res;
}

/// STAPLE on the annotations whose estimate passes epsilon_t. A single
/// survivor is returned as-is.
inline Mask staple_qc(std::span<const Mask> masks, std::span<const double> s_hat, double epsilon_t,
                      const StapleOptions& opt = {}) {
    if (masks.size() != s_hat.size()) throw DomainError("one estimate per mask required");
    const Filtered f = filter_by_threshold(s_hat, epsilon_t);
    if (f.accepted.empty()) throw DomainError("no annotation passes the threshold");
    std::vector<Mask> kept;
    for (std::size_t i : f.accepted) kept.push_back(masks[i]);
    if (kept.size() == 1) return kept.front();
    return staple(kept, opt).mask;
}

}  // namespace crowdqc
