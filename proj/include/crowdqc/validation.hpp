#pragma once

// Scoring, worker- and image-disjoint cross-validation, and sequential
// forward feature selection.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "crowdqc/core.hpp"
#include "crowdqc/forest.hpp"
#include "crowdqc/random.hpp"

namespace crowdqc {

/// Coefficient of determination 1 - SS_res / SS_tot around the mean of truth.
inline double r2_score(std::span<const double> truth, std::span<const double> estimate) {
    if (truth.empty() || truth.size() != estimate.size()) throw DomainError("r2: lengths differ or are zero");
    double mean = 0.0;
    for (double t : truth) mean += t;
    mean /= static_cast<double>(truth.size());
    double ss_res = 0.0, ss_tot = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        ss_res += (truth[i] - estimate[i]) * (truth[i] - estimate[i]);
        ss_tot += (truth[i] - mean) * (truth[i] - mean);
    }
    if (ss_tot == 0.0) throw DomainError("r2: truth has zero variance");
    return 1.0 - ss_res / ss_tot;
}

inline double mean_squared_error(std::span<const double> truth, std::span<const double> estimate) {
    if (truth.empty() || truth.size() != estimate.size()) throw DomainError("mse: lengths differ or are zero");
    double s = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) s += (truth[i] - estimate[i]) * (truth[i] - estimate[i]);
    return s / static_cast<double>(truth.size());
}

/// Probability that a random positive scores above a random negative (ties 1/2).
inline double ranking_auc(std::span<const double> scores, std::span<const bool> positive) {
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double rank_sum = 0.0;
    std::size_t n_pos = 0;
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t k = i; k < j; ++k)
            if (positive[idx[k]]) {
                rank_sum += avg_rank;
                ++n_pos;
            }
        i = j;
    }
    const std::size_t n_neg = scores.size() - n_pos;
    if (n_pos == 0 || n_neg == 0) throw DomainError("auc needs both classes");
    const double np = static_cast<double>(n_pos);
    return (rank_sum - np * (np + 1) / 2) / (np * static_cast<double>(n_neg));
}

// ---------------------------------------------------------------------------
// Grouped folds

struct Fold {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
    std::size_t dropped = 0;  ///< rows sharing a worker or an image with both sides
};

struct GroupedFolds {
    std::map<std::string, std::size_t> worker_fold;
    std::map<std::string, std::size_t> image_fold;
    std::vector<Fold> folds;
};

namespace detail {

inline std::vector<std::pair<std::string, double>> group_means(const std::vector<std::string>& ids,
                                                               std::span<const double> targets) {
    std::map<std::string, std::pair<double, std::size_t>> acc;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        auto& a = acc[ids[i]];
        a.first += targets[i];
        ++a.second;
    }
    std::vector<std::pair<std::string, double>> out;
    for (const auto& [id, a] : acc) out.emplace_back(id, a.first / static_cast<double>(a.second));
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.second < b.second; });
    return out;
}

}  // namespace detail

/// k folds in which no worker and no image is on both the train and the test
/// side. Workers are ranked by mean target and dealt out in blocks of k
/// (seeded order inside a block) so every fold sees the whole quality range.
/// Each image then joins the fold holding most of its annotators (ties: the
/// fold with fewest images, then the lowest index). Fold f tests rows whose
/// worker and image both belong to f and trains on rows with neither; the
/// remaining rows are dropped.
inline GroupedFolds make_grouped_folds(const TrainingSet& data, std::size_t k, std::uint64_t seed) {
    if (k < 2) throw DomainError("need at least 2 folds");
    const auto workers = detail::group_means(data.worker_ids, data.targets);
    const auto images = detail::group_means(data.image_ids, data.targets);
    if (workers.size() < k) throw DomainError("fewer distinct workers than folds");
    if (images.size() < k) throw DomainError("fewer distinct images than folds");

    GroupedFolds g;
    Rng rng(seed);
    for (std::size_t start = 0; start < workers.size(); start += k) {
        std::vector<std::size_t> perm(k);
        std::iota(perm.begin(), perm.end(), 0);
        rng.shuffle(perm);
        for (std::size_t j = start; j < std::min(start + k, workers.size()); ++j)
            g.worker_fold[workers[j].first] = perm[j - start];
    }

    std::map<std::string, std::vector<std::size_t>> rows_of_image;
    for (std::size_t i = 0; i < data.size(); ++i) rows_of_image[data.image_ids[i]].push_back(i);
    std::vector<std::size_t> images_in_fold(k, 0);
    for (const auto& [image, mean] : images) {
        std::vector<std::size_t> votes(k, 0);
        for (std::size_t r : rows_of_image[image]) ++votes[g.worker_fold[data.worker_ids[r]]];
        std::size_t best = 0;
        for (std::size_t f = 1; f < k; ++f) {
            if (votes[f] > votes[best] || (votes[f] == votes[best] && images_in_fold[f] < images_in_fold[best]))
                best = f;
        }
        g.image_fold[image] = best;
        ++images_in_fold[best];
    }

    g.folds.resize(k);
    for (std::size_t i = 0; i < data.size(); ++i) {
        const std::size_t wf = g.worker_fold[data.worker_ids[i]];
        const std::size_t imf = g.image_fold[data.image_ids[i]];
        for (std::size_t f = 0; f < k; ++f) {
            const bool w_in = wf == f;
            const bool i_in = imf == f;
            if (w_in && i_in)
                g.folds[f].test.push_back(i);
            else if (!w_in && !i_in)
                g.folds[f].train.push_back(i);
            else
                ++g.folds[f].dropped;
        }
    }
    return g;
}

struct FoldResult {
    std::size_t fold = 0;
    double r2 = std::numeric_limits<double>::quiet_NaN();  ///< NaN when undefined
    std::size_t n_train = 0;
    std::size_t n_test = 0;
    std::size_t dropped = 0;
};

struct CvReport {
    std::vector<FoldResult> folds;
    double mean_r2 = 0.0;
    double std_r2 = 0.0;
    std::size_t undefined_folds = 0;  ///< empty test side or constant truth
    /// Out-of-fold estimate per row (absent for rows never tested).
    std::vector<std::optional<double>> predictions;
};

/// Grouped k-fold CV of the forest; R^2 per fold plus its mean and std.
inline CvReport grouped_cv(const TrainingSet& data, std::size_t k, const ForestParams& params, std::uint64_t seed) {
    data.validate();
    const GroupedFolds g = make_grouped_folds(data, k, seed);
    CvReport rep;
    rep.predictions.assign(data.size(), std::nullopt);
    std::vector<double> defined;
    for (std::size_t f = 0; f < k; ++f) {
        const Fold& fold = g.folds[f];
        FoldResult fr{f, std::numeric_limits<double>::quiet_NaN(), fold.train.size(), fold.test.size(), fold.dropped};
        if (!fold.test.empty() && fold.train.size() >= 2 * std::max<std::size_t>(params.min_samples_leaf, 1)) {
            const Forest model = train(data.subset(fold.train), params, derive_seed(seed, f));
            std::vector<double> truth, est;
            for (std::size_t r : fold.test) {
                const double p = predict(model, std::span<const double>(data.features[r]));
                rep.predictions[r] = p;
                truth.push_back(data.targets[r]);
                est.push_back(p);
            }
            const bool constant =
                std::all_of(truth.begin(), truth.end(), [&](double t) { return t == truth.front(); });
            if (!constant) {
                fr.r2 = r2_score(truth, est);
                defined.push_back(fr.r2);
            }
        }
        if (std::isnan(fr.r2)) ++rep.undefined_folds;
        rep.folds.push_back(fr);
    }
    if (!defined.empty()) {
        double m = 0.0;
        for (double r : defined) m += r;
        m /= static_cast<double>(defined.size());
        double ss = 0.0;
        for (double r : defined) ss += (r - m) * (r - m);
        rep.mean_r2 = m;
        rep.std_r2 = std::sqrt(ss / static_cast<double>(defined.size()));
    } else {
        rep.mean_r2 = std::numeric_limits<double>::quiet_NaN();
    }
    return rep;
}

/// Delimited CV report: fold, r2, n_train, n_test, dropped_rows.
inline std::string format_cv_report(const CvReport& rep) {
    std::string out = "fold\tr2\tn_train\tn_test\tdropped_rows\n";
    for (const auto& f : rep.folds) {
        out += std::to_string(f.fold) + "\t" + (std::isnan(f.r2) ? std::string("NA") : format_number(f.r2)) + "\t" +
               std::to_string(f.n_train) + "\t" + std::to_string(f.n_test) + "\t" + std::to_string(f.dropped) + "\n";
    }
    out += "# mean_r2=" + format_number(rep.mean_r2) + " std_r2=" + format_number(rep.std_r2) + "\n";
    return out;
}

// ---------------------------------------------------------------------------
// Sequential forward selection

struct SfsOptions {
    std::size_t max_features = 0;  ///< 0: no limit
    double penalty = 1e-4;         ///< added per selected feature
    std::size_t folds = 5;
    ForestParams forest{.n_trees = 25};
    std::uint64_t seed = 0;
};

struct SfsResult {
    std::vector<std::size_t> selected;    ///< in order of selection
    std::vector<double> criterion;        ///< penalized CV MSE after each addition
    double baseline = 0.0;                ///< CV MSE of the mean predictor
};

namespace detail {

/// Pooled out-of-fold MSE of a forest restricted to `columns`
/// (the training-fold mean when `columns` is empty).
inline double grouped_cv_mse(const TrainingSet& data, const GroupedFolds& g, std::span<const std::size_t> columns,
                             const SfsOptions& opt) {
    double sse = 0.0;
    std::size_t n = 0;
    for (std::size_t f = 0; f < g.folds.size(); ++f) {
        const Fold& fold = g.folds[f];
        if (fold.test.empty() || fold.train.empty()) continue;
        if (columns.empty()) {
            double mean = 0.0;
            for (std::size_t r : fold.train) mean += data.targets[r];
            mean /= static_cast<double>(fold.train.size());
            for (std::size_t r : fold.test) sse += (data.targets[r] - mean) * (data.targets[r] - mean);
        } else {
            const Forest model = train(data.subset(fold.train, columns), opt.forest, derive_seed(opt.seed, f));
            std::vector<double> x(columns.size());
            for (std::size_t r : fold.test) {
                for (std::size_t c = 0; c < columns.size(); ++c) x[c] = data.features[r][columns[c]];
                const double e = data.targets[r] - predict(model, std::span<const double>(x));
                sse += e * e;
            }
        }
        n += fold.test.size();
    }
    if (n == 0) throw DomainError("sfs: folds have no test rows");
    return sse / static_cast<double>(n);
}

}  // namespace detail

/// Greedy forward selection minimizing grouped-CV MSE + penalty * |set|.
/// Stops when no single addition lowers the criterion. Ties go to the lowest
/// feature index. Only `data` is used; pass the training portion.
inline SfsResult sfs_select(const TrainingSet& data, const SfsOptions& opt = {}) {
    data.validate();
    const std::size_t d = data.dimension();
    if (d == 0) throw DomainError("sfs: no features");
    const GroupedFolds g = make_grouped_folds(data, opt.folds, opt.seed);
    SfsResult res;
    res.baseline = detail::grouped_cv_mse(data, g, {}, opt);
    double current = res.baseline;
    const std::size_t limit = opt.max_features ? std::min(opt.max_features, d) : d;
    std::vector<bool> used(d, false);
    while (res.selected.size() < limit) {
        std::optional<std::size_t> best;
        double best_value = std::numeric_limits<double>::infinity();
        for (std::size_t f = 0; f < d; ++f) {
            if (used[f]) continue;
            std::vector<std::size_t> cols = res.selected;
            cols.push_back(f);
            const double value = detail::grouped_cv_mse(data, g, cols, opt) + opt.penalty * static_cast<double>(cols.size());
            if (value < best_value) {
                best_value = value;
                best = f;
            }
        }
        if (!best || !(best_value < current)) break;
        used[*best] = true;
        res.selected.push_back(*best);
        res.criterion.push_back(best_value);
        current = best_value;
    }
    return res;
}

}  // namespace crowdqc
