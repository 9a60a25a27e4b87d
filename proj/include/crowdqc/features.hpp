#pragma once

// Clickstream and image features describing one annotation session.

#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "crowdqc/clickstream.hpp"
#include "crowdqc/core.hpp"
#include "crowdqc/geometry.hpp"
#include "crowdqc/imaging.hpp"
#include "crowdqc/stats.hpp"

namespace crowdqc {

inline constexpr std::string_view kFeatureSchemaVersion = "crowdqc-features-v1";

namespace detail {

inline std::vector<std::string> build_feature_names() {
    std::vector<std::string> names;
    const auto block = [&](const std::string& prefix) {
        for (const char* s : {"mean", "median", "std", "q95"}) names.push_back(prefix + "_" + s);
    };
    block("velocity");
    block("acceleration");
    names.insert(names.end(), {"zoom_count", "canvas_clicks", "double_clicks", "elapsed_per_click",
                               "distance_contour_ratio", "stroke_count", "draw_count", "correction_count",
                               "event_count"});
    block("draw_velocity");
    block("draw_acceleration");
    block("correction_velocity");
    block("correction_acceleration");
    block("draw_gradient_angle");
    block("correction_gradient_angle");
    block("click_gradient_angle");
    block("vertex_normal_angle");
    return names;
}

}  // namespace detail

/// Column names of the feature vector, in order.
inline const std::vector<std::string>& feature_names() {
    static const std::vector<std::string> names = detail::build_feature_names();
    return names;
}

inline constexpr std::size_t kFeatureCount = 49;

struct FeatureVector {
    std::vector<double> values;
    std::string schema_version{kFeatureSchemaVersion};

    bool operator==(const FeatureVector&) const = default;
};

// ---------------------------------------------------------------------------
// Kinematics

namespace detail {

/// Velocity (canvas px/ms) per event. Clicks and other non-move events have
/// zero velocity; a move's velocity is its displacement from the previous
/// event over the elapsed time. The first event and moves with zero elapsed
/// time have none.
inline std::vector<std::optional<Vec2>> event_velocities(const Clickstream& cs) {
    std::vector<std::optional<Vec2>> v(cs.events.size());
    for (std::size_t i = 1; i < cs.events.size(); ++i) {
        const Event& e = cs.events[i];
        if (e.kind != EventKind::MouseMove) {
            v[i] = Vec2{};
            continue;
        }
        const Event& prev = cs.events[i - 1];
        const auto dt = static_cast<double>(e.t_ms - prev.t_ms);
        if (dt > 0) v[i] = (e.canvas - prev.canvas) * (1.0 / dt);
    }
    return v;
}

struct SpeedSample {
    double t;
    double speed;
};

/// Speeds of the given events (in order), skipping those without a velocity.
inline std::vector<SpeedSample> speed_samples(const Clickstream& cs, const std::vector<std::optional<Vec2>>& vel,
                                              std::span<const std::size_t> indices) {
    std::vector<SpeedSample> out;
    out.reserve(indices.size());
    for (std::size_t i : indices)
        if (vel[i]) out.push_back({static_cast<double>(cs.events[i].t_ms), norm(*vel[i])});
    return out;
}

/// Signed rate of change of speed between consecutive samples.
inline std::vector<double> accelerations(std::span<const SpeedSample> s) {
    std::vector<double> out;
    for (std::size_t i = 1; i < s.size(); ++i) {
        const double dt = s[i].t - s[i - 1].t;
        if (dt > 0) out.push_back((s[i].speed - s[i - 1].speed) / dt);
    }
    return out;
}

inline std::vector<double> speeds_only(std::span<const SpeedSample> s) {
    std::vector<double> out;
    out.reserve(s.size());
    for (const auto& x : s) out.push_back(x.speed);
    return out;
}

inline std::vector<std::size_t> iota_indices(std::size_t n) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    return idx;
}

}  // namespace detail

/// Speed (canvas px/ms) of every event after the first; zero for clicks.
inline std::vector<double> velocity_series(const Clickstream& cs) {
    if (cs.events.size() < 2) throw DomainError("velocity needs at least 2 events");
    const auto vel = detail::event_velocities(cs);
    const auto idx = detail::iota_indices(cs.events.size());
    return detail::speeds_only(detail::speed_samples(cs, vel, idx));
}

/// Change of speed per ms between consecutive velocity samples (px/ms^2).
inline std::vector<double> acceleration_series(const Clickstream& cs) {
    if (cs.events.size() < 3) throw DomainError("acceleration needs at least 3 events");
    const auto vel = detail::event_velocities(cs);
    const auto idx = detail::iota_indices(cs.events.size());
    return detail::accelerations(detail::speed_samples(cs, vel, idx));
}

// ---------------------------------------------------------------------------
// Angles against the image gradient

/// Angle between a direction and the gradient folded into [0, 90] degrees:
/// 0 when (anti-)parallel, 90 when perpendicular.
inline double angle_to_gradient(Vec2 direction, Vec2 gradient) {
    const double nd = norm(direction);
    const double ng = norm(gradient);
    if (nd == 0.0 || ng == 0.0) throw DomainError("undefined angle");
    const double c = std::clamp(dot(direction, gradient) / (nd * ng), -1.0, 1.0);
    const double omega = std::acos(c) * 180.0 / std::numbers::pi;
    const double gamma = omega <= 180.0 ? omega : 360.0 - omega;
    constexpr double kFold = 90.0;
    return kFold - std::abs(kFold - gamma);
}

/// Gradients weaker than this (intensity units per pixel) have no direction.
inline constexpr double kMinGradientNorm = 1e-9;

namespace detail {

inline void push_angle(std::vector<double>& out, Vec2 direction, Vec2 gradient) {
    if (norm(direction) == 0.0 || norm(gradient) <= kMinGradientNorm) return;
    out.push_back(angle_to_gradient(direction, gradient));
}

/// Angles between each move's image-space direction and the gradient under it.
inline std::vector<double> stroke_angles(const Clickstream& cs, const std::vector<Stroke>& strokes,
                                         const GradientField& grad) {
    std::vector<double> out;
    for (const Stroke& s : strokes) {
        std::size_t prev = s.down;
        for (std::size_t i : s.moves) {
            const Event& e = cs.events[i];
            push_angle(out, e.image - cs.events[prev].image, sample_gradient(grad, e.image));
            prev = i;
        }
    }
    return out;
}

inline void append(std::vector<double>& v, const SummaryStats& s) {
    v.insert(v.end(), {s.mean, s.median, s.std, s.q95});
}

struct StrokeKinematics {
    std::vector<double> speeds;
    std::vector<double> accelerations;
};

inline StrokeKinematics stroke_kinematics(const Clickstream& cs, const std::vector<std::optional<Vec2>>& vel,
                                          const std::vector<Stroke>& strokes) {
    StrokeKinematics k;
    for (const Stroke& s : strokes) {
        const auto idx = s.all_events();
        const auto samples = speed_samples(cs, vel, idx);
        const auto sp = speeds_only(samples);
        const auto ac = accelerations(samples);
        k.speeds.insert(k.speeds.end(), sp.begin(), sp.end());
        k.accelerations.insert(k.accelerations.end(), ac.begin(), ac.end());
    }
    return k;
}

}  // namespace detail

struct FeatureOptions {
    ClassifierOptions classifier;
};

/// Fixed-order feature vector (see feature_names()). Undefined sub-features
/// (no corrections, no usable gradients, ...) are zero.
inline FeatureVector extract_features(const Clickstream& cs, const Polygon& poly, const GradientField& grad,
                                      const FeatureOptions& opt = {}) {
    if (cs.events.empty()) throw DomainError("empty clickstream");
    FeatureVector fv;
    auto& v = fv.values;
    v.reserve(kFeatureCount);

    const auto vel = detail::event_velocities(cs);
    const auto all = detail::iota_indices(cs.events.size());
    const auto samples = detail::speed_samples(cs, vel, all);
    detail::append(v, summary_stats(detail::speeds_only(samples)));
    detail::append(v, summary_stats(detail::accelerations(samples)));

    const auto clicks = canvas_clicks(cs);
    v.push_back(static_cast<double>(zoom_count(cs)));
    v.push_back(static_cast<double>(clicks));
    v.push_back(static_cast<double>(double_clicks(cs)));
    const auto elapsed = static_cast<double>(cs.events.back().t_ms - cs.events.front().t_ms);
    v.push_back(elapsed / static_cast<double>(std::max<std::size_t>(clicks, 1)));

    const double contour = poly.size() >= 2 ? contour_length(poly) : 0.0;
    v.push_back(contour > 0.0 ? path_length(cs.events, CoordinateSpace::Image) / contour : 0.0);

    const auto seg = segment_strokes(cs);
    const auto cls = classify_strokes(seg.strokes, cs, opt.classifier);
    v.push_back(static_cast<double>(seg.strokes.size()));
    v.push_back(static_cast<double>(cls.draws.size()));
    v.push_back(static_cast<double>(cls.corrections.size()));
    v.push_back(static_cast<double>(cs.events.size()));

    const auto draw_k = detail::stroke_kinematics(cs, vel, cls.draws);
    const auto corr_k = detail::stroke_kinematics(cs, vel, cls.corrections);
    detail::append(v, summary_stats(draw_k.speeds));
    detail::append(v, summary_stats(draw_k.accelerations));
    detail::append(v, summary_stats(corr_k.speeds));
    detail::append(v, summary_stats(corr_k.accelerations));

    detail::append(v, summary_stats(detail::stroke_angles(cs, cls.draws, grad)));
    detail::append(v, summary_stats(detail::stroke_angles(cs, cls.corrections, grad)));

    std::vector<double> click_angles;
    std::optional<Vec2> prev_click;
    for (const Event& e : cs.events) {
        if (e.kind != EventKind::MouseDown || e.target != Target::Canvas) continue;
        if (prev_click) detail::push_angle(click_angles, e.image - *prev_click, sample_gradient(grad, e.image));
        prev_click = e.image;
    }
    detail::append(v, summary_stats(click_angles));

    std::vector<double> normal_angles;
    if (poly.size() >= 3) {
        const auto normals = vertex_normals(poly);
        for (std::size_t i = 0; i < poly.size(); ++i)
            detail::push_angle(normal_angles, normals[i], sample_gradient(grad, poly.vertices[i]));
    }
    detail::append(v, summary_stats(normal_angles));

    for (double& x : v)
        if (!std::isfinite(x)) throw DomainError("non-finite feature value");
    return fv;
}

// ---------------------------------------------------------------------------
// Feature matrix file
//
//   # schema_version=crowdqc-features-v1
//   worker_id <TAB> image_id <TAB> velocity_mean ... <TAB> dsc
//
// The dsc column holds the true quality when a reference exists, else "NA".

struct FeatureRow {
    std::string worker_id;
    std::string image_id;
    FeatureVector features;
    std::optional<double> dsc;

    bool operator==(const FeatureRow&) const = default;
};

inline std::string serialize_feature_table(std::span<const FeatureRow> rows) {
    std::string out = "# schema_version=";
    out += kFeatureSchemaVersion;
    out += "\nworker_id\timage_id";
    for (const auto& n : feature_names()) out += "\t" + n;
    out += "\tdsc\n";
    for (const auto& r : rows) {
        if (r.features.schema_version != kFeatureSchemaVersion) throw SchemaError("feature schema mismatch");
        out += r.worker_id + "\t" + r.image_id;
        for (double x : r.features.values) out += "\t" + format_number(x);
        out += "\t" + (r.dsc ? format_number(*r.dsc) : std::string("NA"));
        out += '\n';
    }
    return out;
}

namespace detail {

inline std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    for (;;) {
        const auto tab = line.find('\t', pos);
        out.push_back(line.substr(pos, tab == std::string::npos ? std::string::npos : tab - pos));
        if (tab == std::string::npos) break;
        pos = tab + 1;
    }
    if (!out.empty() && !out.back().empty() && out.back().back() == '\r') out.back().pop_back();
    return out;
}

inline double parse_double(const std::string& s, std::size_t line) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) throw ParseError("bad number '" + s + "'", line);
    return v;
}

}  // namespace detail

/// Reads a feature table; a schema_version other than ours is a SchemaError.
inline std::vector<FeatureRow> parse_feature_table(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 1;
    if (!std::getline(in, line)) throw ParseError("empty feature table");
    const std::string prefix = "# schema_version=";
    if (line.rfind(prefix, 0) != 0) throw ParseError("missing schema_version line", line_no);
    std::string version = line.substr(prefix.size());
    if (!version.empty() && version.back() == '\r') version.pop_back();
    if (version != kFeatureSchemaVersion)
        throw SchemaError("feature schema '" + version + "' does not match '" + std::string(kFeatureSchemaVersion) + "'");
    ++line_no;
    if (!std::getline(in, line)) throw ParseError("missing header row", line_no);
    const auto header = detail::split_tabs(line);
    if (header.size() != kFeatureCount + 3) throw SchemaError("feature table has wrong column count");
    for (std::size_t i = 0; i < kFeatureCount; ++i)
        if (header[i + 2] != feature_names()[i]) throw SchemaError("unexpected feature column '" + header[i + 2] + "'");

    std::vector<FeatureRow> rows;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto cols = detail::split_tabs(line);
        if (cols.size() != header.size()) throw ParseError("wrong number of columns", line_no);
        FeatureRow r;
        r.worker_id = cols[0];
        r.image_id = cols[1];
        r.features.values.reserve(kFeatureCount);
        for (std::size_t i = 0; i < kFeatureCount; ++i)
            r.features.values.push_back(detail::parse_double(cols[i + 2], line_no));
        if (cols.back() != "NA") r.dsc = detail::parse_double(cols.back(), line_no);
        rows.push_back(std::move(r));
    }
    return rows;
}

}  // namespace crowdqc
