#pragma once

#include <algorithm>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "crowdqc/core.hpp"

namespace crowdqc {

/// Static 2-d tree over points tagged with a sequence number (their position
/// in a stream). Besides plain radius search it answers "is there a point
/// within r of q whose sequence number is below k", which is the lookup the
/// stroke classifier needs. Each subtree records its smallest sequence number
/// so whole branches of later events are skipped.
class KdTree2 {
public:
    struct Item {
        Vec2 p;
        std::size_t seq;
    };

    KdTree2() = default;

    explicit KdTree2(std::vector<Item> items) : items_(std::move(items)), min_seq_(items_.size()) {
        build(0, items_.size(), 0);
    }

    /// Convenience: sequence numbers are the indices into `points`.
    static KdTree2 from_points(std::span<const Vec2> points) {
        std::vector<Item> items;
        items.reserve(points.size());
        for (std::size_t i = 0; i < points.size(); ++i) items.push_back({points[i], i});
        return KdTree2(std::move(items));
    }

    std::size_t size() const { return items_.size(); }

    /// True when some point with seq < before lies within `radius` of q
    /// (inclusive; radius 0 means exact coordinate equality).
    bool any_within(Vec2 q, double radius, std::size_t before) const {
        return any_within(0, items_.size(), 0, q, radius * radius, before);
    }

    /// Sequence numbers of all points within `radius` of q, ascending.
    std::vector<std::size_t> within(Vec2 q, double radius) const {
        std::vector<std::size_t> out;
        collect(0, items_.size(), 0, q, radius * radius, out);
        std::sort(out.begin(), out.end());
        return out;
    }

    /// Sequence number of the nearest point (ties: smallest seq). Empty tree -> npos.
    std::size_t nearest(Vec2 q) const {
        std::size_t best = npos;
        double best_d2 = std::numeric_limits<double>::infinity();
        nearest(0, items_.size(), 0, q, best, best_d2);
        return best;
    }

    static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();

private:
    static double coord(Vec2 p, int axis) { return axis == 0 ? p.x : p.y; }

    static double dist2(Vec2 a, Vec2 b) {
        const double dx = a.x - b.x;
        const double dy = a.y - b.y;
        return dx * dx + dy * dy;
    }

    std::size_t build(std::size_t lo, std::size_t hi, int axis) {
        if (lo >= hi) return npos;
        const std::size_t mid = lo + (hi - lo) / 2;
        std::nth_element(items_.begin() + lo, items_.begin() + mid, items_.begin() + hi,
                         [axis](const Item& a, const Item& b) {
                             const double ca = coord(a.p, axis);
                             const double cb = coord(b.p, axis);
                             return ca < cb || (ca == cb && a.seq < b.seq);
                         });
        std::size_t m = items_[mid].seq;
        const std::size_t l = build(lo, mid, 1 - axis);
        const std::size_t r = build(mid + 1, hi, 1 - axis);
        if (l != npos) m = std::min(m, l);
        if (r != npos) m = std::min(m, r);
        min_seq_[mid] = m;
        return m;
    }

    bool any_within(std::size_t lo, std::size_t hi, int axis, Vec2 q, double r2,
                    std::size_t before) const {
        if (lo >= hi) return false;
        const std::size_t mid = lo + (hi - lo) / 2;
        if (min_seq_[mid] >= before) return false;
        const Item& it = items_[mid];
        if (it.seq < before && dist2(it.p, q) <= r2) return true;
        const double delta = coord(q, axis) - coord(it.p, axis);
        // Equal coordinates can sit on either side of the median.
        if (delta <= 0 || delta * delta <= r2) {
            if (any_within(lo, mid, 1 - axis, q, r2, before)) return true;
        }
        if (delta >= 0 || delta * delta <= r2) {
            if (any_within(mid + 1, hi, 1 - axis, q, r2, before)) return true;
        }
        return false;
    }

    void collect(std::size_t lo, std::size_t hi, int axis, Vec2 q, double r2,
                 std::vector<std::size_t>& out) const {
        if (lo >= hi) return;
        const std::size_t mid = lo + (hi - lo) / 2;
        const Item& it = items_[mid];
        if (dist2(it.p, q) <= r2) out.push_back(it.seq);
        const double delta = coord(q, axis) - coord(it.p, axis);
        if (delta <= 0 || delta * delta <= r2) collect(lo, mid, 1 - axis, q, r2, out);
        if (delta >= 0 || delta * delta <= r2) collect(mid + 1, hi, 1 - axis, q, r2, out);
    }

    void nearest(std::size_t lo, std::size_t hi, int axis, Vec2 q, std::size_t& best,
                 double& best_d2) const {
        if (lo >= hi) return;
        const std::size_t mid = lo + (hi - lo) / 2;
        const Item& it = items_[mid];
        const double d2 = dist2(it.p, q);
        if (d2 < best_d2 || (d2 == best_d2 && it.seq < best)) {
            best_d2 = d2;
            best = it.seq;
        }
        const double delta = coord(q, axis) - coord(it.p, axis);
        const bool left_first = delta <= 0;
        const auto visit = [&](bool left) {
            if (left)
                nearest(lo, mid, 1 - axis, q, best, best_d2);
            else
                nearest(mid + 1, hi, 1 - axis, q, best, best_d2);
        };
        visit(left_first);
        if (delta * delta <= best_d2) visit(!left_first);
    }

    std::vector<Item> items_;
    std::vector<std::size_t> min_seq_;
};

}  // namespace crowdqc
