#pragma once

// Fusion comparisons over annotation pools and the R^2-vs-training-size sweep.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "crowdqc/core.hpp"
#include "crowdqc/forest.hpp"
#include "crowdqc/fusion.hpp"
#include "crowdqc/geometry.hpp"
#include "crowdqc/parallel.hpp"
#include "crowdqc/random.hpp"
#include "crowdqc/stats.hpp"
#include "crowdqc/validation.hpp"

namespace crowdqc {

/// All annotations of one image with their quality estimates.
struct FusionPool {
    std::string image_id;
    Mask reference;
    std::vector<Mask> masks;
    std::vector<double> s_hat;
};

/// Result of fusing one pool with one method at one lambda.
struct FusionOutcome {
    Mask mask;
    std::size_t drawn = 0;     ///< annotations requested from the crowd (phi)
    std::size_t accepted = 0;  ///< annotations that entered the fusion
    bool fallback = false;     ///< fewer than lambda passed the threshold
};

namespace detail {

inline bool uses_estimates(FusionMethod m) {
    return m == FusionMethod::ConfidenceWeighted || m == FusionMethod::StapleQc;
}

}  // namespace detail

/// Fuses annotations taken from the pool in the given order. Plain methods
/// take the first lambda. Quality-aware methods keep drawing until lambda
/// annotations pass epsilon_t; when the pool runs dry they fuse whatever
/// passed, or the single best-estimated annotation if none did.
inline FusionOutcome fuse_pool(const FusionPool& pool, std::span<const std::size_t> order, FusionMethod method,
                               std::size_t lambda, double epsilon_t, const StapleOptions& staple_opt = {}) {
    if (lambda == 0) throw DomainError("lambda must be at least 1");
    if (pool.masks.empty()) throw DomainError("empty annotation pool");
    FusionOutcome out;
    std::vector<Mask> chosen;
    std::vector<double> chosen_s;
    if (!detail::uses_estimates(method)) {
        for (std::size_t k = 0; k < order.size() && chosen.size() < lambda; ++k) chosen.push_back(pool.masks[order[k]]);
        out.drawn = chosen.size();
    } else {
        for (std::size_t k = 0; k < order.size() && chosen.size() < lambda; ++k) {
            ++out.drawn;
            const std::size_t i = order[k];
            if (pool.s_hat[i] >= epsilon_t) {
                chosen.push_back(pool.masks[i]);
                chosen_s.push_back(pool.s_hat[i]);
            }
        }
        out.fallback = chosen.size() < lambda;
        if (chosen.empty()) {
            std::size_t best = order.front();
            for (std::size_t i : order)
                if (pool.s_hat[i] > pool.s_hat[best]) best = i;
            chosen.push_back(pool.masks[best]);
            chosen_s.push_back(epsilon_t);
        }
    }
    out.accepted = chosen.size();
    switch (method) {
    case FusionMethod::Majority: out.mask = majority_vote(chosen); break;
    case FusionMethod::Staple: out.mask = chosen.size() == 1 ? chosen.front() : staple(chosen, staple_opt).mask; break;
    case FusionMethod::ConfidenceWeighted:
        out.mask = confidence_weighted_mv_from_estimates(chosen, chosen_s, epsilon_t);
        break;
    case FusionMethod::StapleQc: out.mask = staple_qc(chosen, chosen_s, epsilon_t, staple_opt); break;
    }
    return out;
}

struct FusionTrial {
    std::string image_id;
    FusionMethod method = FusionMethod::Majority;
    std::size_t lambda = 1;
    std::size_t phi = 0;
    double epsilon_t = 0.9;
    double dsc = 0.0;

    bool operator==(const FusionTrial&) const = default;
};

struct FusionExperimentOptions {
    std::vector<std::size_t> lambdas = {1, 3, 5};
    std::vector<FusionMethod> methods = {FusionMethod::Majority, FusionMethod::ConfidenceWeighted,
                                         FusionMethod::Staple, FusionMethod::StapleQc};
    double epsilon_t = 0.9;
    std::uint64_t seed = 0;
    StapleOptions staple;
};

/// Every (pool, method, lambda) combination. Each pool is visited in one
/// seeded random order shared by all methods.
inline std::vector<FusionTrial> run_fusion_experiment(std::span<const FusionPool> pools,
                                                      const FusionExperimentOptions& opt) {
    const std::size_t per_pool = opt.methods.size() * opt.lambdas.size();
    std::vector<FusionTrial> trials(pools.size() * per_pool);
    parallel_for(pools.size(), [&](std::size_t p) {
        const FusionPool& pool = pools[p];
        std::vector<std::size_t> order(pool.masks.size());
        std::iota(order.begin(), order.end(), 0);
        Rng rng(derive_seed(opt.seed, p));
        rng.shuffle(order);
        std::size_t slot = p * per_pool;
        for (FusionMethod m : opt.methods)
            for (std::size_t lambda : opt.lambdas) {
                const FusionOutcome o = fuse_pool(pool, order, m, lambda, opt.epsilon_t, opt.staple);
                const double d = pool.reference.count() ? dice(o.mask, pool.reference) : std::numeric_limits<double>::quiet_NaN();
                trials[slot++] = {pool.image_id, m, lambda, o.drawn, opt.epsilon_t, d};
            }
    });
    return trials;
}

struct FusionSummary {
    FusionMethod method = FusionMethod::Majority;
    std::size_t lambda = 1;
    std::size_t images = 0;
    double mean_phi = 0.0;
    double median_dsc = 0.0;
    double mean_dsc = 0.0;
    double q25_dsc = 0.0;
    double q75_dsc = 0.0;
};

inline std::vector<FusionSummary> summarize_fusion(std::span<const FusionTrial> trials) {
    std::map<std::pair<int, std::size_t>, std::vector<const FusionTrial*>> groups;
    for (const auto& t : trials) groups[{static_cast<int>(t.method), t.lambda}].push_back(&t);
    std::vector<FusionSummary> out;
    for (const auto& [key, ts] : groups) {
        FusionSummary s;
        s.method = static_cast<FusionMethod>(key.first);
        s.lambda = key.second;
        s.images = ts.size();
        std::vector<double> d;
        double phi = 0.0;
        for (const FusionTrial* t : ts) {
            if (!std::isnan(t->dsc)) d.push_back(t->dsc);
            phi += static_cast<double>(t->phi);
        }
        s.mean_phi = phi / static_cast<double>(ts.size());
        const SummaryStats st = summary_stats(d);
        std::sort(d.begin(), d.end());
        s.median_dsc = st.median;
        s.mean_dsc = st.mean;
        s.q25_dsc = quantile_sorted(d, 0.25);
        s.q75_dsc = quantile_sorted(d, 0.75);
        out.push_back(s);
    }
    return out;
}

inline const FusionSummary& find_summary(std::span<const FusionSummary> s, FusionMethod m, std::size_t lambda) {
    for (const auto& x : s)
        if (x.method == m && x.lambda == lambda) return x;
    throw DomainError("no summary for method/lambda");
}

/// image_id, method, lambda, phi, epsilon_t, dsc
inline std::string format_fusion_report(std::span<const FusionTrial> trials) {
    std::string out = "image_id\tmethod\tlambda\tphi\tepsilon_t\tdsc\n";
    for (const auto& t : trials)
        out += t.image_id + "\t" + std::string(to_string(t.method)) + "\t" + std::to_string(t.lambda) + "\t" +
               std::to_string(t.phi) + "\t" + format_number(t.epsilon_t) + "\t" +
               (std::isnan(t.dsc) ? std::string("NA") : format_number(t.dsc)) + "\n";
    return out;
}

/// method, lambda, images, mean_phi, median_dsc, mean_dsc, q25_dsc, q75_dsc
inline std::string format_fusion_summary(std::span<const FusionSummary> rows) {
    std::string out = "method\tlambda\timages\tmean_phi\tmedian_dsc\tmean_dsc\tq25_dsc\tq75_dsc\n";
    for (const auto& s : rows)
        out += std::string(to_string(s.method)) + "\t" + std::to_string(s.lambda) + "\t" + std::to_string(s.images) +
               "\t" + format_number(s.mean_phi) + "\t" + format_number(s.median_dsc) + "\t" +
               format_number(s.mean_dsc) + "\t" + format_number(s.q25_dsc) + "\t" + format_number(s.q75_dsc) + "\n";
    return out;
}

// ---------------------------------------------------------------------------
// Out-of-sample estimates and the training-size sweep

/// Predicts every row with a forest that never saw the row's image: images
/// are split into k seeded groups and each group is estimated by a model
/// trained on the rest.
inline std::vector<double> image_grouped_estimates(const TrainingSet& data, std::size_t k, const ForestParams& params,
                                                   std::uint64_t seed) {
    data.validate();
    std::vector<std::string> images = data.image_ids;
    std::sort(images.begin(), images.end());
    images.erase(std::unique(images.begin(), images.end()), images.end());
    if (images.size() < k || k < 2) throw DomainError("need at least k >= 2 distinct images");
    Rng rng(seed);
    rng.shuffle(images);
    std::map<std::string, std::size_t> group;
    for (std::size_t i = 0; i < images.size(); ++i) group[images[i]] = i % k;

    std::vector<double> est(data.size(), 0.0);
    for (std::size_t g = 0; g < k; ++g) {
        std::vector<std::size_t> train_rows, test_rows;
        for (std::size_t i = 0; i < data.size(); ++i) (group[data.image_ids[i]] == g ? test_rows : train_rows).push_back(i);
        const Forest model = train(data.subset(train_rows), params, derive_seed(seed, g));
        for (std::size_t i : test_rows) est[i] = predict(model, std::span<const double>(data.features[i]));
    }
    return est;
}

struct SweepPoint {
    std::size_t training_images = 0;
    std::size_t training_rows = 0;
    std::size_t test_rows = 0;
    double r2 = 0.0;
};

/// R^2 on a fixed worker- and image-disjoint test split (fold 0 of the
/// grouped folds) as the training side grows image by image in seeded order.
inline std::vector<SweepPoint> training_size_sweep(const TrainingSet& data, std::span<const std::size_t> sizes,
                                                   std::size_t folds, const ForestParams& params, std::uint64_t seed) {
    const GroupedFolds g = make_grouped_folds(data, folds, seed);
    const Fold& f = g.folds.front();
    std::vector<std::string> train_images;
    for (std::size_t r : f.train) train_images.push_back(data.image_ids[r]);
    std::sort(train_images.begin(), train_images.end());
    train_images.erase(std::unique(train_images.begin(), train_images.end()), train_images.end());
    Rng rng(derive_seed(seed, 0x5eed));
    rng.shuffle(train_images);
    std::map<std::string, std::size_t> rank;
    for (std::size_t i = 0; i < train_images.size(); ++i) rank[train_images[i]] = i;

    std::vector<double> truth;
    for (std::size_t r : f.test) truth.push_back(data.targets[r]);
    std::vector<SweepPoint> out;
    for (std::size_t n : sizes) {
        n = std::min(n, train_images.size());
        std::vector<std::size_t> rows;
        for (std::size_t r : f.train)
            if (rank.at(data.image_ids[r]) < n) rows.push_back(r);
        SweepPoint p{n, rows.size(), f.test.size(), std::numeric_limits<double>::quiet_NaN()};
        if (!rows.empty() && !f.test.empty()) {
            const Forest model = train(data.subset(rows), params, derive_seed(seed, n));
            std::vector<double> est;
            for (std::size_t r : f.test) est.push_back(predict(model, std::span<const double>(data.features[r])));
            try {
                p.r2 = r2_score(truth, est);
            } catch (const DomainError&) {
            }
        }
        out.push_back(p);
    }
    return out;
}

/// training_images, training_rows, test_rows, r2
inline std::string format_sweep(std::span<const SweepPoint> pts) {
    std::string out = "training_images\ttraining_rows\ttest_rows\tr2\n";
    for (const auto& p : pts)
        out += std::to_string(p.training_images) + "\t" + std::to_string(p.training_rows) + "\t" +
               std::to_string(p.test_rows) + "\t" + (std::isnan(p.r2) ? std::string("NA") : format_number(p.r2)) + "\n";
    return out;
}

// ---------------------------------------------------------------------------
// Experiment configuration: "key = value" lines, '#' comments.

struct ExperimentConfig {
    std::size_t images = 100;
    std::size_t workers = 20;
    std::string mix = "diligent=40,sloppy=20,spammer=25,bounding-box=10,inverted=5";
    std::uint64_t seed = 42;
    int image_size = 128;
    double sigma = 1.0;
    double epsilon_t = 0.9;
    std::vector<std::size_t> lambdas = {1, 3, 5};
    std::size_t folds = 10;
    ForestParams forest;
    std::vector<std::size_t> sweep_sizes = {5, 10, 20, 40, 80};
    std::string out = "experiment-out";
};

namespace detail {

inline std::vector<std::size_t> parse_size_list(const std::string& v, std::size_t line) {
    std::vector<std::size_t> out;
    std::istringstream in(v);
    std::string item;
    while (std::getline(in, item, ',')) {
        const std::string t(trim(item));
        if (t.empty()) continue;
        try {
            std::size_t used = 0;
            const long long x = std::stoll(t, &used);
            if (used != t.size() || x < 0) throw std::invalid_argument(t);
            out.push_back(static_cast<std::size_t>(x));
        } catch (const std::exception&) {
            throw ParseError("bad integer '" + t + "'", line);
        }
    }
    return out;
}

}  // namespace detail

inline ExperimentConfig parse_experiment_config(const std::string& text) {
    ExperimentConfig c;
    std::istringstream in(text);
    std::string raw;
    std::size_t line = 0;
    while (std::getline(in, raw)) {
        ++line;
        if (auto h = raw.find('#'); h != std::string::npos) raw.erase(h);
        const std::string t(detail::trim(raw));
        if (t.empty()) continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) throw ParseError("expected key = value", line);
        const std::string key(detail::trim(std::string_view(t).substr(0, eq)));
        const std::string val(detail::trim(std::string_view(t).substr(eq + 1)));
        const auto one = [&] {
            const auto v = detail::parse_size_list(val, line);
            if (v.size() != 1) throw ParseError("expected one integer for " + key, line);
            return v.front();
        };
        if (key == "images") c.images = one();
        else if (key == "workers") c.workers = one();
        else if (key == "mix") c.mix = val;
        else if (key == "seed") c.seed = one();
        else if (key == "image_size") c.image_size = static_cast<int>(one());
        else if (key == "sigma") c.sigma = detail::parse_double(val, line);
        else if (key == "epsilon_t") c.epsilon_t = detail::parse_double(val, line);
        else if (key == "lambdas") c.lambdas = detail::parse_size_list(val, line);
        else if (key == "folds") c.folds = one();
        else if (key == "trees") c.forest.n_trees = one();
        else if (key == "min_leaf") c.forest.min_samples_leaf = one();
        else if (key == "max_features") c.forest.max_features = one();
        else if (key == "sweep_sizes") c.sweep_sizes = detail::parse_size_list(val, line);
        else if (key == "out") c.out = val;
        else throw ParseError("unknown experiment key '" + key + "'", line);
    }
    if (c.lambdas.empty()) throw ParseError("lambdas must not be empty");
    for (std::size_t l : c.lambdas)
        if (l == 0) throw ParseError("lambda must be at least 1");
    if (!(c.epsilon_t >= 0.0 && c.epsilon_t < 1.0)) throw ParseError("epsilon_t must lie in [0, 1)");
    return c;
}

}  // namespace crowdqc
