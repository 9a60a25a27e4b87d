#pragma once

// Clickstream logs: the wire format, stroke segmentation and the
// draw-vs-correction classification of strokes.
//
// Wire format (JSON Lines, UTF-8, '\n' separated):
//
//   {"format":"crowdqc-clickstream","version":1,"worker_id":"w03","image_id":"img0007",
//    "canvas_width":256,"canvas_height":256,"image_width":128,"image_height":128}
//   {"t_ms":0,"cx":10,"cy":12,"ix":5,"iy":6,"kind":"mouse-move","target":"canvas"}
//   ...
//
// kind   in {mouse-down, mouse-up, mouse-move, wheel, double-click}
// target in {canvas, delete-contour-button, zoom-button, save-button}
// t_ms is an integer number of milliseconds and never decreases.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "crowdqc/core.hpp"
#include "crowdqc/kdtree.hpp"

namespace crowdqc {

inline constexpr std::string_view kClickstreamFormat = "crowdqc-clickstream";
inline constexpr int kClickstreamVersion = 1;

enum class EventKind { MouseDown, MouseUp, MouseMove, Wheel, DoubleClick };
enum class Target { Canvas, DeleteContourButton, ZoomButton, SaveButton };

inline constexpr std::array<std::string_view, 5> kEventKindNames = {
    "mouse-down", "mouse-up", "mouse-move", "wheel", "double-click"};
inline constexpr std::array<std::string_view, 4> kTargetNames = {
    "canvas", "delete-contour-button", "zoom-button", "save-button"};

inline std::string_view to_string(EventKind k) { return kEventKindNames[static_cast<int>(k)]; }
inline std::string_view to_string(Target t) { return kTargetNames[static_cast<int>(t)]; }

inline std::optional<EventKind> parse_event_kind(std::string_view s) {
    for (std::size_t i = 0; i < kEventKindNames.size(); ++i)
        if (kEventKindNames[i] == s) return static_cast<EventKind>(i);
    return std::nullopt;
}

inline std::optional<Target> parse_target(std::string_view s) {
    for (std::size_t i = 0; i < kTargetNames.size(); ++i)
        if (kTargetNames[i] == s) return static_cast<Target>(i);
    return std::nullopt;
}

struct Event {
    std::int64_t t_ms = 0;
    Vec2 canvas;
    Vec2 image;
    EventKind kind = EventKind::MouseMove;
    Target target = Target::Canvas;

    bool operator==(const Event&) const = default;
};

struct Clickstream {
    std::string worker_id;
    std::string image_id;
    int canvas_width = 0;
    int canvas_height = 0;
    int image_width = 0;
    int image_height = 0;
    std::vector<Event> events;

    bool operator==(const Clickstream&) const = default;
};

/// Shortest decimal text that round-trips to the same double.
inline std::string format_number(double v) {
    std::array<char, 32> buf{};
    auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), end);
}

namespace detail {

inline const nlohmann::json& field(const nlohmann::json& obj, const char* name, std::size_t line) {
    auto it = obj.find(name);
    if (it == obj.end()) throw ParseError(std::string("missing field '") + name + "'", line);
    return *it;
}

inline double number_field(const nlohmann::json& obj, const char* name, std::size_t line) {
    const auto& v = field(obj, name, line);
    if (!v.is_number()) throw ParseError(std::string("field '") + name + "' is not a number", line);
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw ParseError(std::string("field '") + name + "' is not finite", line);
    return d;
}

inline std::int64_t integer_field(const nlohmann::json& obj, const char* name, std::size_t line) {
    const auto& v = field(obj, name, line);
    if (!v.is_number_integer()) throw ParseError(std::string("field '") + name + "' is not an integer", line);
    return v.get<std::int64_t>();
}

inline std::string string_field(const nlohmann::json& obj, const char* name, std::size_t line) {
    const auto& v = field(obj, name, line);
    if (!v.is_string()) throw ParseError(std::string("field '") + name + "' is not a string", line);
    return v.get<std::string>();
}

}  // namespace detail

/// Parses a clickstream log. Throws ParseError naming the offending line.
inline Clickstream parse_clickstream(std::string_view raw) {
    Clickstream cs;
    bool have_header = false;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= raw.size()) {
        std::size_t nl = raw.find('\n', pos);
        if (nl == std::string_view::npos) nl = raw.size();
        std::string_view line = detail::trim(raw.substr(pos, nl - pos));
        pos = nl + 1;
        ++line_no;
        if (line.empty()) {
            if (nl == raw.size()) break;
            continue;
        }

        nlohmann::json obj;
        try {
            obj = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error&) {
            throw ParseError("malformed record", line_no);
        }
        if (!obj.is_object()) throw ParseError("record is not an object", line_no);

        if (!have_header) {
            if (detail::string_field(obj, "format", line_no) != kClickstreamFormat)
                throw ParseError("not a clickstream log", line_no);
            const auto version = detail::integer_field(obj, "version", line_no);
            if (version != kClickstreamVersion)
                throw ParseError("unsupported format version " + std::to_string(version), line_no);
            cs.worker_id = detail::string_field(obj, "worker_id", line_no);
            cs.image_id = detail::string_field(obj, "image_id", line_no);
            cs.canvas_width = static_cast<int>(detail::integer_field(obj, "canvas_width", line_no));
            cs.canvas_height = static_cast<int>(detail::integer_field(obj, "canvas_height", line_no));
            cs.image_width = static_cast<int>(detail::integer_field(obj, "image_width", line_no));
            cs.image_height = static_cast<int>(detail::integer_field(obj, "image_height", line_no));
            if (cs.canvas_width <= 0 || cs.canvas_height <= 0 || cs.image_width <= 0 || cs.image_height <= 0)
                throw ParseError("non-positive canvas or image size", line_no);
            have_header = true;
            continue;
        }

        Event e;
        e.t_ms = detail::integer_field(obj, "t_ms", line_no);
        if (e.t_ms < 0) throw ParseError("negative timestamp", line_no);
        e.canvas = {detail::number_field(obj, "cx", line_no), detail::number_field(obj, "cy", line_no)};
        e.image = {detail::number_field(obj, "ix", line_no), detail::number_field(obj, "iy", line_no)};
        const std::string kind = detail::string_field(obj, "kind", line_no);
        const std::string target = detail::string_field(obj, "target", line_no);
        const auto k = parse_event_kind(kind);
        if (!k) throw ParseError("unknown event kind '" + kind + "'", line_no);
        const auto t = parse_target(target);
        if (!t) throw ParseError("unknown target '" + target + "'", line_no);
        e.kind = *k;
        e.target = *t;
        if (!cs.events.empty() && e.t_ms < cs.events.back().t_ms)
            throw ParseError("timestamps are not sorted", line_no);
        cs.events.push_back(e);
    }
    if (!have_header || cs.events.empty()) throw ParseError("empty stream");
    return cs;
}

/// Canonical text form; parse_clickstream(serialize_clickstream(c)) == c.
inline std::string serialize_clickstream(const Clickstream& cs) {
    std::string out;
    out.reserve(64 + cs.events.size() * 96);
    nlohmann::ordered_json header;
    header["format"] = kClickstreamFormat;
    header["version"] = kClickstreamVersion;
    header["worker_id"] = cs.worker_id;
    header["image_id"] = cs.image_id;
    header["canvas_width"] = cs.canvas_width;
    header["canvas_height"] = cs.canvas_height;
    header["image_width"] = cs.image_width;
    header["image_height"] = cs.image_height;
    out += header.dump();
    out += '\n';
    for (const Event& e : cs.events) {
        out += "{\"t_ms\":";
        out += std::to_string(e.t_ms);
        out += ",\"cx\":" + format_number(e.canvas.x);
        out += ",\"cy\":" + format_number(e.canvas.y);
        out += ",\"ix\":" + format_number(e.image.x);
        out += ",\"iy\":" + format_number(e.image.y);
        out += ",\"kind\":\"";
        out += to_string(e.kind);
        out += "\",\"target\":\"";
        out += to_string(e.target);
        out += "\"}\n";
    }
    return out;
}

// ---------------------------------------------------------------------------
// Event counts

/// Number of events matching the given kind and/or target (unset = any).
inline std::size_t count_events(const Clickstream& cs, std::optional<EventKind> kind,
                                std::optional<Target> target = std::nullopt) {
    return static_cast<std::size_t>(std::count_if(cs.events.begin(), cs.events.end(), [&](const Event& e) {
        return (!kind || e.kind == *kind) && (!target || e.target == *target);
    }));
}

/// Wheel events plus clicks (mouse-downs) on the zoom button.
inline std::size_t zoom_count(const Clickstream& cs) {
    return count_events(cs, EventKind::Wheel) + count_events(cs, EventKind::MouseDown, Target::ZoomButton);
}

inline std::size_t canvas_clicks(const Clickstream& cs) {
    return count_events(cs, EventKind::MouseDown, Target::Canvas);
}

inline std::size_t double_clicks(const Clickstream& cs) {
    return count_events(cs, EventKind::DoubleClick, Target::Canvas);
}

// ---------------------------------------------------------------------------
// Strokes

enum class StrokeClass { Unclassified, Draw, Correction };

/// A mouse-down on the canvas, the next mouse-up, and the moves in between.
/// Members are indices into Clickstream::events.
struct Stroke {
    std::size_t down = 0;
    std::size_t up = 0;
    std::vector<std::size_t> moves;
    StrokeClass classification = StrokeClass::Unclassified;

    /// down, moves..., up
    std::vector<std::size_t> all_events() const {
        std::vector<std::size_t> out;
        out.reserve(moves.size() + 2);
        out.push_back(down);
        out.insert(out.end(), moves.begin(), moves.end());
        out.push_back(up);
        return out;
    }

    bool operator==(const Stroke&) const = default;
};

struct StrokeDiagnostics {
    std::size_t unmatched_downs = 0;
    std::size_t unmatched_ups = 0;
    std::size_t off_canvas_moves = 0;
    std::size_t events_after_save = 0;
};

struct StrokeSegmentation {
    std::vector<Stroke> strokes;
    StrokeDiagnostics diagnostics;
};

/// Splits the stream into strokes. Events after the last save-button click
/// are not segmented; unmatched downs/ups are counted, never fatal.
inline StrokeSegmentation segment_strokes(const Clickstream& cs) {
    StrokeSegmentation seg;
    std::size_t end = cs.events.size();
    for (std::size_t i = cs.events.size(); i-- > 0;) {
        const Event& e = cs.events[i];
        if (e.target == Target::SaveButton && (e.kind == EventKind::MouseDown || e.kind == EventKind::MouseUp)) {
            end = i;
            seg.diagnostics.events_after_save = cs.events.size() - i - 1;
            break;
        }
    }

    const auto off_canvas = [&](const Event& e) {
        return e.target != Target::Canvas || e.canvas.x < 0 || e.canvas.y < 0 ||
               e.canvas.x > cs.canvas_width || e.canvas.y > cs.canvas_height;
    };

    std::optional<Stroke> open;
    for (std::size_t i = 0; i < end; ++i) {
        const Event& e = cs.events[i];
        switch (e.kind) {
        case EventKind::MouseDown:
            if (e.target != Target::Canvas) break;
            if (open) ++seg.diagnostics.unmatched_downs;
            open = Stroke{i, i, {}, StrokeClass::Unclassified};
            break;
        case EventKind::MouseMove:
            if (open) {
                open->moves.push_back(i);
                if (off_canvas(e)) ++seg.diagnostics.off_canvas_moves;
            }
            break;
        case EventKind::MouseUp:
            if (!open) {
                ++seg.diagnostics.unmatched_ups;
                break;
            }
            open->up = i;
            seg.strokes.push_back(std::move(*open));
            open.reset();
            break;
        default:
            break;
        }
    }
    if (open) ++seg.diagnostics.unmatched_downs;
    return seg;
}

/// Which earlier events count as "already on the canvas" when testing
/// whether a stroke starts on existing geometry.
enum class PriorEventSet {
    StrokeEvents,  ///< downs, moves and ups of earlier strokes (default)
    AllEvents,     ///< every earlier event, hover moves included
};

struct ClassifierOptions {
    /// Positions match when their canvas distance is <= tolerance.
    double tolerance = 0.0;
    PriorEventSet prior = PriorEventSet::StrokeEvents;
};

struct StrokeClassification {
    std::vector<Stroke> draws;
    std::vector<Stroke> corrections;
    /// Input strokes with their classification filled in, input order.
    std::vector<Stroke> strokes;
};

namespace detail {

inline std::vector<KdTree2::Item> prior_event_items(const std::vector<Stroke>& strokes, const Clickstream& cs,
                                                    PriorEventSet set) {
    std::vector<KdTree2::Item> items;
    if (set == PriorEventSet::AllEvents) {
        items.reserve(cs.events.size());
        for (std::size_t i = 0; i < cs.events.size(); ++i) items.push_back({cs.events[i].canvas, i});
        return items;
    }
    for (const Stroke& s : strokes)
        for (std::size_t i : s.all_events()) items.push_back({cs.events[i].canvas, i});
    return items;
}

}  // namespace detail

/// Draw-vs-correction classification, strokes taken in chronological order:
///  1. down at the up position of the most recent draw stroke  -> draw
///  2. otherwise, some earlier event at the down position      -> correction
///  3. otherwise (a new contour is started)                    -> draw
inline StrokeClassification classify_strokes(const std::vector<Stroke>& strokes, const Clickstream& cs,
                                             const ClassifierOptions& opt = {}) {
    const KdTree2 tree(detail::prior_event_items(strokes, cs, opt.prior));
    StrokeClassification out;
    out.strokes = strokes;
    std::optional<Vec2> last_draw_up;
    for (Stroke& s : out.strokes) {
        const Vec2 down = cs.events[s.down].canvas;
        bool draw;
        if (last_draw_up && distance(down, *last_draw_up) <= opt.tolerance)
            draw = true;
        else
            draw = !tree.any_within(down, opt.tolerance, s.down);
        s.classification = draw ? StrokeClass::Draw : StrokeClass::Correction;
        if (draw) {
            last_draw_up = cs.events[s.up].canvas;
            out.draws.push_back(s);
        } else {
            out.corrections.push_back(s);
        }
    }
    return out;
}

}  // namespace crowdqc
