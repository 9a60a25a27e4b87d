#pragma once

// Campaign cost models, measured in annotation-task units.

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "crowdqc/core.hpp"

namespace crowdqc {

struct CostParams {
    double a = 0.0;     ///< requested segmentations
    double a_mv = 1.0;  ///< annotations per merged result
    double a_t = 0.0;   ///< annotations spent on regressor training
    double s = 0.0;     ///< expected spam fraction, [0, 1)
    double a_w = 2.0;   ///< one quality-control task every a_w annotations
    double a_r = 0.0;   ///< reference annotations
    double n_c = 0.0;   ///< categories
    double n_w = 0.0;   ///< recruited workers
    double n_aw = 0.0;  ///< approved workers
    double A_aw = 0.0;  ///< average annotations per approved worker
    double r = 0.0;     ///< banned approved workers
    double v = 0.0;     ///< verification cost
};

inline void validate(const CostParams& p) {
    for (double x : {p.a, p.a_mv, p.a_t, p.s, p.a_w, p.a_r, p.n_c, p.n_w, p.n_aw, p.A_aw, p.r, p.v})
        if (!(x >= 0.0) || !std::isfinite(x)) throw DomainError("cost parameters must be finite and non-negative");
    if (!(p.s < 1.0)) throw DomainError("spam fraction must be below 1");
    if (!(p.a_w >= 2.0)) throw DomainError("a_w must be at least 2");
}

enum class CostMethod { Proposed, Baseline, ManualGrading };

inline std::string_view to_string(CostMethod m) {
    switch (m) {
    case CostMethod::Proposed: return "proposed";
    case CostMethod::Baseline: return "baseline";
    case CostMethod::ManualGrading: return "manual_grading";
    }
    return "?";
}

inline std::optional<CostMethod> parse_cost_method(std::string_view s) {
    for (auto m : {CostMethod::Proposed, CostMethod::Baseline, CostMethod::ManualGrading})
        if (to_string(m) == s) return m;
    if (s == "manual") return CostMethod::ManualGrading;
    return std::nullopt;
}

inline double cost_proposed(const CostParams& p) {
    validate(p);
    return p.a_t + (p.a + p.s / (1.0 - p.s) * p.a) * p.a_mv;
}

inline double cost_baseline(const CostParams& p) {
    validate(p);
    return p.a_mv * p.a + p.a_mv * p.a / (p.a_w - 1.0) + p.a_r;
}

inline double cost_manual_grading(const CostParams& p) {
    validate(p);
    return p.a / (1.0 - p.s) + p.n_c * p.n_w + p.A_aw * p.n_aw * p.r + p.v;
}

inline double cost(CostMethod m, const CostParams& p) {
    switch (m) {
    case CostMethod::Proposed: return cost_proposed(p);
    case CostMethod::Baseline: return cost_baseline(p);
    case CostMethod::ManualGrading: return cost_manual_grading(p);
    }
    return 0.0;
}

inline double cost_at(CostMethod m, CostParams p, double a) {
    p.a = a;
    return cost(m, p);
}

/// c(a) = intercept + slope * a.
struct AffineCost {
    double intercept = 0.0;
    double slope = 0.0;
};

inline AffineCost affine_form(CostMethod m, const CostParams& p) {
    validate(p);
    switch (m) {
    case CostMethod::Proposed: return {p.a_t, p.a_mv / (1.0 - p.s)};
    case CostMethod::Baseline: return {p.a_r, p.a_mv + p.a_mv / (p.a_w - 1.0)};
    case CostMethod::ManualGrading: return {p.n_c * p.n_w + p.A_aw * p.n_aw * p.r + p.v, 1.0 / (1.0 - p.s)};
    }
    return {};
}

/// Smallest integer a >= 0 with cost1(a) <= cost2(a), or nothing if no such
/// a exists. Lines with equal slope give 0 when the first is never dearer.
inline std::optional<std::int64_t> break_even(CostMethod m1, const CostParams& p1, CostMethod m2,
                                              const CostParams& p2) {
    const AffineCost c1 = affine_form(m1, p1);
    const AffineCost c2 = affine_form(m2, p2);
    const auto le = [&](std::int64_t a) {
        return cost_at(m1, p1, static_cast<double>(a)) <= cost_at(m2, p2, static_cast<double>(a));
    };
    if (le(0)) return 0;
    if (c1.slope >= c2.slope) return std::nullopt;

    const double x = (c1.intercept - c2.intercept) / (c2.slope - c1.slope);
    if (!(x < 9.0e18)) return std::nullopt;
    auto a = static_cast<std::int64_t>(std::ceil(x));
    // Rounding in the closed form can land one off; settle on the evaluated costs.
    while (a > 1 && le(a - 1)) --a;
    while (!le(a)) ++a;
    return a;
}

// ---------------------------------------------------------------------------
// Parameter files: "key = value" lines, '#' comments. A key may carry a
// method prefix ("baseline.a_mv = 3") that overrides the shared value for that
// method only.

struct CostScenario {
    std::map<std::string, double> shared;
    std::map<std::string, std::map<std::string, double>> per_method;
    std::vector<std::string> warnings;

    CostParams params_for(CostMethod m) const;
};

namespace detail {

inline double* cost_field(CostParams& p, std::string_view key) {
    if (key == "a") return &p.a;
    if (key == "a_mv") return &p.a_mv;
    if (key == "a_t") return &p.a_t;
    if (key == "s") return &p.s;
    if (key == "a_w") return &p.a_w;
    if (key == "a_r") return &p.a_r;
    if (key == "n_c") return &p.n_c;
    if (key == "n_w") return &p.n_w;
    if (key == "n_aw") return &p.n_aw;
    if (key == "A_aw") return &p.A_aw;
    if (key == "r") return &p.r;
    if (key == "v") return &p.v;
    return nullptr;
}

// Keys each method actually reads.
inline std::vector<std::string> method_keys(CostMethod m) {
    switch (m) {
    case CostMethod::Proposed: return {"a_mv", "a_t", "s"};
    case CostMethod::Baseline: return {"a_mv", "a_w", "a_r"};
    case CostMethod::ManualGrading: return {"s", "n_c", "n_w", "n_aw", "A_aw", "r", "v"};
    }
    return {};
}

}  // namespace detail

inline CostParams CostScenario::params_for(CostMethod m) const {
    CostParams p;
    p.a_mv = 0.0;
    p.a_w = 0.0;
    for (const auto& [k, v] : shared) *detail::cost_field(p, k) = v;
    if (auto it = per_method.find(std::string(to_string(m))); it != per_method.end())
        for (const auto& [k, v] : it->second) *detail::cost_field(p, k) = v;
    // a_w only enters the baseline; keep the invariant satisfied elsewhere.
    if (m != CostMethod::Baseline && p.a_w < 2.0) p.a_w = 2.0;
    return p;
}

inline CostScenario parse_cost_params(std::string_view text) {
    CostScenario sc;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
        const std::string t(detail::trim(line));
        if (t.empty()) continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) throw ParseError("expected key = value", lineno);
        std::string key(detail::trim(std::string_view(t).substr(0, eq)));
        const std::string val(detail::trim(std::string_view(t).substr(eq + 1)));
        std::string method;
        if (auto dot = key.find('.'); dot != std::string::npos) {
            method = key.substr(0, dot);
            key = key.substr(dot + 1);
            auto m = parse_cost_method(method);
            if (!m) throw ParseError("unknown cost method '" + method + "'", lineno);
            method = std::string(to_string(*m));
        }
        CostParams probe;
        if (!detail::cost_field(probe, key)) throw ParseError("unknown cost parameter '" + key + "'", lineno);
        double x = 0.0;
        try {
            std::size_t used = 0;
            x = std::stod(val, &used);
            if (used != val.size()) throw std::invalid_argument(val);
        } catch (const std::exception&) {
            throw ParseError("bad number '" + val + "'", lineno);
        }
        if (method.empty())
            sc.shared[key] = x;
        else
            sc.per_method[method][key] = x;
    }
    for (auto m : {CostMethod::Proposed, CostMethod::Baseline, CostMethod::ManualGrading}) {
        const auto pm = sc.per_method.find(std::string(to_string(m)));
        for (const std::string& k : detail::method_keys(m)) {
            const bool set = sc.shared.count(k) || (pm != sc.per_method.end() && pm->second.count(k));
            if (!set) sc.warnings.push_back(std::string(to_string(m)) + "." + k + " unset, using 0");
        }
    }
    return sc;
}

struct CostRow {
    double a = 0.0;
    double proposed = 0.0;
    double baseline = 0.0;
    double manual_grading = 0.0;
};

/// Costs for a = 0, step, 2*step, ... up to max_a (inclusive), each scaled by unit_cost.
inline std::vector<CostRow> cost_table(const CostScenario& sc, double max_a, double step = 1.0,
                                       double unit_cost = 1.0) {
    if (!(step > 0.0) || !(max_a >= 0.0)) throw DomainError("cost table needs step > 0 and max_a >= 0");
    const CostParams pp = sc.params_for(CostMethod::Proposed);
    const CostParams pb = sc.params_for(CostMethod::Baseline);
    const CostParams pm = sc.params_for(CostMethod::ManualGrading);
    std::vector<CostRow> rows;
    const auto n = static_cast<std::int64_t>(std::floor(max_a / step + 1e-9));
    for (std::int64_t i = 0; i <= n; ++i) {
        const double a = static_cast<double>(i) * step;
        rows.push_back({a, unit_cost * cost_at(CostMethod::Proposed, pp, a),
                        unit_cost * cost_at(CostMethod::Baseline, pb, a),
                        unit_cost * cost_at(CostMethod::ManualGrading, pm, a)});
    }
    return rows;
}

}  // namespace crowdqc
