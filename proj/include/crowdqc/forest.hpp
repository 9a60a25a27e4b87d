#pragma once

// Random-forest regression of annotation quality from feature vectors.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "crowdqc/core.hpp"
#include "crowdqc/features.hpp"
#include "crowdqc/parallel.hpp"
#include "crowdqc/random.hpp"

namespace crowdqc {

/// Feature rows with their true quality and provenance.
struct TrainingSet {
    std::vector<std::vector<double>> features;
    std::vector<double> targets;
    std::vector<std::string> worker_ids;
    std::vector<std::string> image_ids;
    std::string schema_version{kFeatureSchemaVersion};

    std::size_t size() const { return targets.size(); }
    std::size_t dimension() const { return features.empty() ? 0 : features.front().size(); }

    void add(std::vector<double> x, double y, std::string worker, std::string image) {
        features.push_back(std::move(x));
        targets.push_back(y);
        worker_ids.push_back(std::move(worker));
        image_ids.push_back(std::move(image));
    }

    /// Throws DomainError unless lengths and target ranges are consistent.
    void validate() const {
        if (targets.empty()) throw DomainError("empty training data");
        if (features.size() != targets.size() || worker_ids.size() != targets.size() ||
            image_ids.size() != targets.size())
            throw DomainError("training columns have different lengths");
        const std::size_t d = dimension();
        for (const auto& row : features)
            if (row.size() != d) throw DomainError("non-uniform feature lengths");
        for (double y : targets)
            if (!(y >= 0.0 && y <= 1.0)) throw DomainError("target outside [0, 1]");
    }

    /// Rows `rows`, restricted to feature columns `columns` (all when empty).
    TrainingSet subset(std::span<const std::size_t> rows, std::span<const std::size_t> columns = {}) const {
        TrainingSet out;
        out.schema_version = schema_version;
        for (std::size_t r : rows) {
            std::vector<double> x;
            if (columns.empty()) {
                x = features[r];
            } else {
                x.reserve(columns.size());
                for (std::size_t c : columns) x.push_back(features[r][c]);
            }
            out.add(std::move(x), targets[r], worker_ids[r], image_ids[r]);
        }
        return out;
    }

    static TrainingSet from_rows(std::span<const FeatureRow> rows) {
        TrainingSet ts;
        for (const auto& r : rows) {
            if (!r.dsc) throw DomainError("row " + r.worker_id + "/" + r.image_id + " has no true DSC");
            if (r.features.schema_version != kFeatureSchemaVersion) throw SchemaError("feature schema mismatch");
            ts.add(r.features.values, *r.dsc, r.worker_id, r.image_id);
        }
        return ts;
    }
};

struct ForestParams {
    std::size_t n_trees = 500;
    std::size_t min_samples_leaf = 3;
    std::size_t max_depth = 0;     ///< 0: grow until leaves are pure
    std::size_t max_features = 0;  ///< candidates per split; 0: ceil(d / 3)
    bool bootstrap = true;

    bool operator==(const ForestParams&) const = default;
};

struct TreeNode {
    int feature = -1;  ///< -1 marks a leaf
    double threshold = 0.0;
    std::int32_t left = -1;
    std::int32_t right = -1;
    double value = 0.0;

    bool operator==(const TreeNode&) const = default;
};

/// Axis-aligned regression tree; x[feature] <= threshold goes left.
struct RegressionTree {
    std::vector<TreeNode> nodes;

    double predict(std::span<const double> x) const {
        std::size_t i = 0;
        while (nodes[i].feature >= 0) {
            const TreeNode& n = nodes[i];
            i = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
        }
        return nodes[i].value;
    }

    bool operator==(const RegressionTree&) const = default;
};

struct Forest {
    ForestParams params;
    std::uint64_t seed = 0;
    std::size_t n_features = 0;
    std::string schema_version{kFeatureSchemaVersion};
    std::vector<RegressionTree> trees;

    bool operator==(const Forest&) const = default;
};

namespace detail {

struct SplitChoice {
    bool found = false;
    double sse = 0.0;
    std::size_t feature = 0;
    double threshold = 0.0;
    std::size_t left_count = 0;

    bool better_than(const SplitChoice& o) const {
        if (!o.found) return true;
        // Equal partitions reached through different features differ only by
        // rounding; treat them as ties so the lower feature index wins.
        const double tol = 1e-12 * std::max(1.0, std::abs(o.sse));
        if (std::abs(sse - o.sse) > tol) return sse < o.sse;
        if (feature != o.feature) return feature < o.feature;
        return threshold < o.threshold;
    }
};

/// Grows one tree over a bootstrap sample. Every feature keeps the node's
/// samples sorted by value in the same [lo, hi) slice, so a split is a
/// stable partition of each slice.
class TreeBuilder {
public:
    TreeBuilder(const TrainingSet& data, const std::vector<std::vector<double>>& columns,
                std::span<const std::size_t> sample, const std::vector<std::vector<std::size_t>>& global_order,
                const ForestParams& params, std::size_t max_features, std::uint64_t seed)
        : columns_(columns), params_(params), max_features_(max_features), rng_(seed) {
        const std::size_t d = columns.size();
        // Multiplicity of each training row in the sample; sorted sample
        // orders follow from the global per-feature orders in O(n) each.
        std::vector<std::uint32_t> count(data.size(), 0);
        for (std::size_t r : sample) ++count[r];
        n_ = sample.size();
        rows_.reserve(n_);
        y_.reserve(n_);
        std::vector<std::size_t> first_slot(data.size(), 0);
        for (std::size_t r = 0; r < data.size(); ++r) {
            first_slot[r] = rows_.size();
            for (std::uint32_t c = 0; c < count[r]; ++c) {
                rows_.push_back(r);
                y_.push_back(data.targets[r]);
            }
        }
        order_.assign(d, std::vector<std::uint32_t>());
        for (std::size_t f = 0; f < d; ++f) {
            auto& o = order_[f];
            o.reserve(n_);
            for (std::size_t r : global_order[f])
                for (std::uint32_t c = 0; c < count[r]; ++c) o.push_back(static_cast<std::uint32_t>(first_slot[r] + c));
        }
        goes_left_.assign(n_, 0);
        scratch_.resize(n_);
    }

    RegressionTree build() {
        RegressionTree tree;
        tree.nodes.reserve(2 * n_ / std::max<std::size_t>(params_.min_samples_leaf, 1) + 1);
        grow(tree, 0, n_, 0);
        return tree;
    }

private:
    double x(std::uint32_t slot, std::size_t f) const { return columns_[f][rows_[slot]]; }

    std::int32_t grow(RegressionTree& tree, std::size_t lo, std::size_t hi, std::size_t depth) {
        const auto id = static_cast<std::int32_t>(tree.nodes.size());
        tree.nodes.push_back({});
        double sum = 0.0;
        bool pure = true;
        const auto& any = order_.empty() ? identity() : order_[0];
        const double first = y_[any[lo]];
        for (std::size_t i = lo; i < hi; ++i) {
            const double y = y_[any[i]];
            sum += y;
            pure = pure && y == first;
        }
        const std::size_t n = hi - lo;
        tree.nodes[id].value = sum / static_cast<double>(n);

        const bool depth_left = params_.max_depth == 0 || depth < params_.max_depth;
        if (pure || !depth_left || n < 2 * params_.min_samples_leaf || order_.empty()) return id;

        const SplitChoice split = best_split(lo, hi);
        if (!split.found) return id;

        const std::size_t mid = lo + split.left_count;
        const auto& fo = order_[split.feature];
        for (std::size_t i = lo; i < hi; ++i) goes_left_[fo[i]] = i < mid ? 1 : 0;
        for (auto& o : order_) {
            std::size_t l = lo, r = mid;
            for (std::size_t i = lo; i < hi; ++i) {
                const std::uint32_t s = o[i];
                if (goes_left_[s])
                    o[l++] = s;
                else
                    scratch_[r++] = s;
            }
            std::copy(scratch_.begin() + static_cast<std::ptrdiff_t>(mid), scratch_.begin() + static_cast<std::ptrdiff_t>(hi),
                      o.begin() + static_cast<std::ptrdiff_t>(mid));
        }

        tree.nodes[id].feature = static_cast<int>(split.feature);
        tree.nodes[id].threshold = split.threshold;
        const std::int32_t left = grow(tree, lo, mid, depth + 1);
        const std::int32_t right = grow(tree, mid, hi, depth + 1);
        tree.nodes[id].left = left;
        tree.nodes[id].right = right;
        return id;
    }

    SplitChoice best_split(std::size_t lo, std::size_t hi) {
        const std::size_t d = order_.size();
        std::vector<std::size_t> candidates(d);
        std::iota(candidates.begin(), candidates.end(), 0);
        rng_.shuffle(candidates);

        SplitChoice best;
        std::size_t evaluated = 0;
        const std::size_t n = hi - lo;
        const std::size_t min_leaf = std::max<std::size_t>(params_.min_samples_leaf, 1);
        for (std::size_t f : candidates) {
            if (evaluated >= max_features_) break;
            const auto& o = order_[f];
            if (x(o[lo], f) == x(o[hi - 1], f)) continue;  // constant here, not counted
            ++evaluated;

            double total = 0.0, total_sq = 0.0;
            for (std::size_t i = lo; i < hi; ++i) {
                const double y = y_[o[i]];
                total += y;
                total_sq += y * y;
            }
            double left_sum = 0.0, left_sq = 0.0;
            for (std::size_t i = lo; i + 1 < hi; ++i) {
                const double y = y_[o[i]];
                left_sum += y;
                left_sq += y * y;
                const std::size_t nl = i - lo + 1;
                const std::size_t nr = n - nl;
                if (nl < min_leaf) continue;
                if (nr < min_leaf) break;
                const double xa = x(o[i], f);
                const double xb = x(o[i + 1], f);
                if (xa == xb) continue;
                const double right_sum = total - left_sum;
                const double right_sq = total_sq - left_sq;
                const double sse = (left_sq - left_sum * left_sum / static_cast<double>(nl)) +
                                   (right_sq - right_sum * right_sum / static_cast<double>(nr));
                SplitChoice c{true, sse, f, xa + (xb - xa) * 0.5, nl};
                // Midpoint rounding must still separate the two values.
                if (!(c.threshold >= xa && c.threshold < xb)) c.threshold = xa;
                if (c.better_than(best)) best = c;
            }
        }
        return best;
    }

    const std::vector<std::uint32_t>& identity() {
        if (identity_.empty()) {
            identity_.resize(n_);
            std::iota(identity_.begin(), identity_.end(), 0u);
        }
        return identity_;
    }

    const std::vector<std::vector<double>>& columns_;
    const ForestParams& params_;
    std::size_t max_features_;
    Rng rng_;
    std::size_t n_ = 0;
    std::vector<std::size_t> rows_;
    std::vector<double> y_;
    std::vector<std::vector<std::uint32_t>> order_;
    std::vector<std::uint8_t> goes_left_;
    std::vector<std::uint32_t> scratch_;
    std::vector<std::uint32_t> identity_;
};

}  // namespace detail

inline std::size_t resolved_max_features(const ForestParams& p, std::size_t d) {
    if (d == 0) return 0;
    const std::size_t m = p.max_features ? p.max_features : (d + 2) / 3;
    return std::clamp<std::size_t>(m, 1, d);
}

/// Fits a forest. Tree t draws its bootstrap sample and split candidates from
/// a generator seeded by (seed, t), so results do not depend on threading.
inline Forest train(const TrainingSet& data, const ForestParams& params, std::uint64_t seed) {
    data.validate();
    if (params.n_trees == 0) throw DomainError("forest needs at least one tree");
    if (data.size() < 2 * std::max<std::size_t>(params.min_samples_leaf, 1))
        throw DomainError("too few rows for min_samples_leaf");
    const std::size_t d = data.dimension();
    const std::size_t n = data.size();

    std::vector<std::vector<double>> columns(d, std::vector<double>(n));
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t f = 0; f < d; ++f) columns[f][r] = data.features[r][f];
    std::vector<std::vector<std::size_t>> order(d);
    for (std::size_t f = 0; f < d; ++f) {
        order[f].resize(n);
        std::iota(order[f].begin(), order[f].end(), 0);
        const auto& col = columns[f];
        std::stable_sort(order[f].begin(), order[f].end(), [&](std::size_t a, std::size_t b) { return col[a] < col[b]; });
    }

    Forest forest;
    forest.params = params;
    forest.seed = seed;
    forest.n_features = d;
    forest.schema_version = data.schema_version;
    forest.trees.resize(params.n_trees);
    const std::size_t mtry = resolved_max_features(params, d);

    parallel_for(params.n_trees, [&](std::size_t t) {
        Rng rng(derive_seed(seed, t));
        std::vector<std::size_t> sample(n);
        if (params.bootstrap) {
            for (auto& s : sample) s = static_cast<std::size_t>(rng.below(n));
        } else {
            std::iota(sample.begin(), sample.end(), 0);
        }
        detail::TreeBuilder builder(data, columns, sample, order, params, mtry, rng.next_u64());
        forest.trees[t] = builder.build();
    });
    return forest;
}

/// Mean of the tree predictions, clamped to [0, 1].
inline double predict(const Forest& forest, std::span<const double> x) {
    if (x.size() != forest.n_features) throw SchemaError("feature vector length does not match the model");
    double sum = 0.0;
    for (const auto& t : forest.trees) sum += t.predict(x);
    return std::clamp(sum / static_cast<double>(forest.trees.size()), 0.0, 1.0);
}

inline double predict(const Forest& forest, const FeatureVector& fv) {
    if (fv.schema_version != forest.schema_version)
        throw SchemaError("feature schema '" + fv.schema_version + "' does not match model schema '" +
                          forest.schema_version + "'");
    return predict(forest, std::span<const double>(fv.values));
}

// ---------------------------------------------------------------------------
// Model file
//
//   crowdqc-forest 1
//   schema <schema_version>
//   n_features <d>
//   params <n_trees> <min_samples_leaf> <max_depth> <max_features> <bootstrap> <seed>
//   tree <node_count>
//   <feature> <threshold> <left> <right> <value>     (one line per node)
//   ...

inline constexpr std::string_view kForestFormat = "crowdqc-forest";
inline constexpr int kForestVersion = 1;

inline std::string serialize_forest(const Forest& f) {
    std::ostringstream out;
    out << kForestFormat << ' ' << kForestVersion << '\n';
    out << "schema " << f.schema_version << '\n';
    out << "n_features " << f.n_features << '\n';
    out << "params " << f.params.n_trees << ' ' << f.params.min_samples_leaf << ' ' << f.params.max_depth << ' '
        << f.params.max_features << ' ' << (f.params.bootstrap ? 1 : 0) << ' ' << f.seed << '\n';
    for (const auto& t : f.trees) {
        out << "tree " << t.nodes.size() << '\n';
        for (const auto& n : t.nodes)
            out << n.feature << ' ' << format_number(n.threshold) << ' ' << n.left << ' ' << n.right << ' '
                << format_number(n.value) << '\n';
    }
    return out.str();
}

inline Forest parse_forest(const std::string& text) {
    std::istringstream in(text);
    std::string word;
    int version = 0;
    if (!(in >> word >> version) || word != kForestFormat) throw ParseError("not a forest model file");
    if (version != kForestVersion) throw ParseError("unsupported model version " + std::to_string(version));
    Forest f;
    int bootstrap = 1;
    if (!(in >> word >> f.schema_version) || word != "schema") throw ParseError("model: missing schema");
    if (!(in >> word >> f.n_features) || word != "n_features") throw ParseError("model: missing n_features");
    if (!(in >> word >> f.params.n_trees >> f.params.min_samples_leaf >> f.params.max_depth >>
          f.params.max_features >> bootstrap >> f.seed) ||
        word != "params")
        throw ParseError("model: bad params line");
    f.params.bootstrap = bootstrap != 0;
    const auto read_double = [&](double& v) {
        std::string tok;
        if (!(in >> tok)) return false;
        const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
        return ec == std::errc() && ptr == tok.data() + tok.size();
    };
    for (std::size_t t = 0; t < f.params.n_trees; ++t) {
        std::size_t count = 0;
        if (!(in >> word >> count) || word != "tree" || count == 0) throw ParseError("model: bad tree header");
        RegressionTree tree;
        tree.nodes.resize(count);
        for (std::size_t i = 0; i < count; ++i) {
            TreeNode& n = tree.nodes[i];
            if (!(in >> n.feature) || !read_double(n.threshold) || !(in >> n.left >> n.right) || !read_double(n.value))
                throw ParseError("model: bad node");
            // Children always follow their parent, which rules out cycles.
            const auto self = static_cast<std::int32_t>(i);
            const auto limit = static_cast<std::int32_t>(count);
            if (n.feature >= 0 && (n.feature >= static_cast<int>(f.n_features) || n.left <= self ||
                                   n.right <= self || n.left >= limit || n.right >= limit))
                throw ParseError("model: node references out of range");
        }
        f.trees.push_back(std::move(tree));
    }
    return f;
}

}  // namespace crowdqc
