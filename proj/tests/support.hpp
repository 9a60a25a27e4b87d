#pragma once

#include <string>
#include <vector>

#include "crowdqc/clickstream.hpp"

namespace testing_support {

using namespace crowdqc;

/// Builds clickstreams with canvas == 2 * image coordinates.
struct StreamBuilder {
    Clickstream cs;
    std::int64_t t = 0;

    StreamBuilder() {
        cs.worker_id = "w";
        cs.image_id = "i";
        cs.canvas_width = 200;
        cs.canvas_height = 200;
        cs.image_width = 100;
        cs.image_height = 100;
    }

    StreamBuilder& at(std::int64_t ms) {
        t = ms;
        return *this;
    }

    StreamBuilder& ev(EventKind k, double cx, double cy, Target tg = Target::Canvas, std::int64_t dt = 10) {
        cs.events.push_back({t, {cx, cy}, {cx / 2, cy / 2}, k, tg});
        t += dt;
        return *this;
    }
    StreamBuilder& down(double x, double y) { return ev(EventKind::MouseDown, x, y); }
    StreamBuilder& up(double x, double y) { return ev(EventKind::MouseUp, x, y); }
    StreamBuilder& move(double x, double y) { return ev(EventKind::MouseMove, x, y); }
    StreamBuilder& stroke(std::vector<std::pair<double, double>> pts) {
        down(pts.front().first, pts.front().second);
        for (std::size_t i = 1; i + 1 < pts.size(); ++i) move(pts[i].first, pts[i].second);
        return up(pts.back().first, pts.back().second);
    }
};

}  // namespace testing_support
