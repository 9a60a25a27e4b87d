#pragma once

// Synthetic scenes and archetype-driven annotation sessions. Everything is a
// pure function of its seed.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "crowdqc/clickstream.hpp"
#include "crowdqc/core.hpp"
#include "crowdqc/geometry.hpp"
#include "crowdqc/imaging.hpp"
#include "crowdqc/parallel.hpp"
#include "crowdqc/random.hpp"

namespace crowdqc {

// ---------------------------------------------------------------------------
// Scenes

enum class SceneShape { Circle, Blob, Rectangle };

inline std::string_view to_string(SceneShape s) {
    switch (s) {
    case SceneShape::Circle: return "circle";
    case SceneShape::Blob: return "blob";
    case SceneShape::Rectangle: return "rectangle";
    }
    return "?";
}

inline std::optional<SceneShape> parse_scene_shape(std::string_view s) {
    for (auto v : {SceneShape::Circle, SceneShape::Blob, SceneShape::Rectangle})
        if (to_string(v) == s) return v;
    return std::nullopt;
}

/// Geometry of one object. For rectangles, half_width/half_height apply and
/// the corners are snapped to whole pixels; blobs perturb the circle radius
/// with 2nd and 3rd harmonics.
struct ShapeSpec {
    SceneShape shape = SceneShape::Circle;
    Vec2 center;
    double radius = 10.0;
    double half_width = 10.0;
    double half_height = 10.0;
    double harmonic2 = 0.0;
    double harmonic3 = 0.0;
    double phase2 = 0.0;
    double phase3 = 0.0;
};

struct SyntheticScene {
    std::uint64_t seed = 0;
    GrayImage image;
    Mask reference;
    Polygon reference_contour;  ///< dense outline of the target
    std::optional<Mask> decoy_reference;
    Polygon decoy_contour;  ///< empty without decoy

    bool has_decoy() const { return decoy_reference.has_value(); }
};

inline constexpr double kObjectIntensity = 170.0;
inline constexpr double kBackgroundIntensity = 55.0;
inline constexpr std::size_t kContourSamples = 256;

/// Dense counter-clockwise outline (in image coordinates, y down).
inline Polygon shape_contour(const ShapeSpec& s) {
    Polygon p;
    if (s.shape == SceneShape::Rectangle) {
        const double x0 = std::round(s.center.x - s.half_width), x1 = std::round(s.center.x + s.half_width);
        const double y0 = std::round(s.center.y - s.half_height), y1 = std::round(s.center.y + s.half_height);
        const std::vector<Vec2> corners = {{x0, y0}, {x0, y1}, {x1, y1}, {x1, y0}};
        for (std::size_t c = 0; c < 4; ++c) {
            const Vec2 a = corners[c], b = corners[(c + 1) % 4];
            const auto steps = static_cast<int>(std::max(std::abs(b.x - a.x), std::abs(b.y - a.y)));
            for (int k = 0; k < steps; ++k) p.vertices.push_back(a + (b - a) * (static_cast<double>(k) / steps));
        }
        return p;
    }
    for (std::size_t k = 0; k < kContourSamples; ++k) {
        const double th = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(kContourSamples);
        double r = s.radius;
        if (s.shape == SceneShape::Blob)
            r *= 1.0 + s.harmonic2 * std::sin(2.0 * th + s.phase2) + s.harmonic3 * std::sin(3.0 * th + s.phase3);
        p.vertices.push_back({s.center.x + r * std::cos(th), s.center.y - r * std::sin(th)});
    }
    return p;
}

/// Pixels whose center lies inside the shape.
inline Mask shape_mask(const ShapeSpec& s, int width, int height) {
    if (s.shape != SceneShape::Circle) return rasterize(shape_contour(s), width, height);
    Mask m(width, height);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            const double dx = x + 0.5 - s.center.x, dy = y + 0.5 - s.center.y;
            if (dx * dx + dy * dy <= s.radius * s.radius) m.set(x, y);
        }
    return m;
}

/// Renders target (and optional decoy) over a smoothly textured background.
/// Intensities are whole numbers so the image survives an 8-bit round trip.
inline SyntheticScene render_scene(const ShapeSpec& target, const std::optional<ShapeSpec>& decoy, int size,
                                   std::uint64_t seed) {
    SyntheticScene sc;
    sc.seed = seed;
    sc.reference = shape_mask(target, size, size);
    sc.reference_contour = shape_contour(target);
    if (sc.reference.count() == 0) throw DomainError("target shape covers no pixel");
    if (decoy) {
        sc.decoy_reference = shape_mask(*decoy, size, size);
        sc.decoy_contour = shape_contour(*decoy);
    }

    Rng rng(derive_seed(seed, 0x7e47));
    struct Wave {
        double fx, fy, phase, amp;
    };
    std::vector<Wave> waves;
    for (int i = 0; i < 4; ++i) {
        const double f = rng.uniform(0.03, 0.12);
        const double th = rng.uniform(0.0, 2.0 * std::numbers::pi);
        waves.push_back({f * std::cos(th), f * std::sin(th), rng.uniform(0.0, 2.0 * std::numbers::pi),
                         rng.uniform(2.0, 5.0)});
    }
    sc.image = GrayImage(size, size);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            double v = kBackgroundIntensity;
            if (sc.reference.at(x, y) || (sc.decoy_reference && sc.decoy_reference->at(x, y))) v = kObjectIntensity;
            for (const Wave& w : waves) v += w.amp * std::sin(w.fx * x + w.fy * y + w.phase);
            v += rng.normal(0.0, 1.5);
            sc.image.at(x, y) = std::clamp(std::round(v), 0.0, 255.0);
        }
    return sc;
}

inline constexpr int kMinSceneSize = 48;

namespace detail {

// Random shape fitting in the box [x0, x0 + w) x [0, h).
inline ShapeSpec random_shape(SceneShape shape, double x0, double w, double h, Rng& rng) {
    ShapeSpec s;
    s.shape = shape;
    const double extent_max = std::min(w, h) / 2.0 - 4.0;
    const double extent_min = std::max(6.0, extent_max * 0.5);
    double reach = 0.0;
    switch (shape) {
    case SceneShape::Circle:
        s.radius = rng.uniform(extent_min, extent_max);
        reach = s.radius;
        break;
    case SceneShape::Blob:
        s.harmonic2 = rng.uniform(0.05, 0.15);
        s.harmonic3 = rng.uniform(0.0, 0.1);
        s.phase2 = rng.uniform(0.0, 2.0 * std::numbers::pi);
        s.phase3 = rng.uniform(0.0, 2.0 * std::numbers::pi);
        s.radius = rng.uniform(extent_min, extent_max) / (1.0 + s.harmonic2 + s.harmonic3);
        reach = s.radius * (1.0 + s.harmonic2 + s.harmonic3);
        break;
    case SceneShape::Rectangle:
        s.half_width = rng.uniform(extent_min * 0.6, extent_max);
        s.half_height = rng.uniform(extent_min * 0.6, extent_max);
        reach = std::max(s.half_width, s.half_height);
        break;
    }
    const double rx = shape == SceneShape::Rectangle ? s.half_width : reach;
    const double ry = shape == SceneShape::Rectangle ? s.half_height : reach;
    s.center = {x0 + rng.uniform(rx + 2.0, w - rx - 2.0), rng.uniform(ry + 2.0, h - ry - 2.0)};
    return s;
}

}  // namespace detail

/// Random scene of the given shape on a size x size image. With a decoy the
/// image is split in halves: the target occupies one, a circular decoy the
/// other.
inline SyntheticScene generate_scene(SceneShape shape, int size, std::uint64_t seed, bool with_decoy = true) {
    if (size < kMinSceneSize) throw DomainError("scene size too small for the shape");
    Rng rng(seed);
    const double s = size;
    if (!with_decoy) return render_scene(detail::random_shape(shape, 0.0, s, s, rng), std::nullopt, size, seed);
    const bool target_left = rng.bernoulli(0.5);
    const double half = s / 2.0;
    const ShapeSpec target = detail::random_shape(shape, target_left ? 0.0 : half, half, s, rng);
    const ShapeSpec decoy = detail::random_shape(SceneShape::Circle, target_left ? half : 0.0, half, s, rng);
    return render_scene(target, decoy, size, seed);
}

// ---------------------------------------------------------------------------
// Workers

enum class ArchetypeKind { Diligent, Sloppy, Spammer, BoundingBox, WrongObject, Inverted };

inline constexpr std::array<std::string_view, 6> kArchetypeNames = {"diligent",     "sloppy",       "spammer",
                                                                     "bounding-box", "wrong-object", "inverted"};

inline std::string_view to_string(ArchetypeKind k) { return kArchetypeNames[static_cast<int>(k)]; }

inline std::optional<ArchetypeKind> parse_archetype(std::string_view s) {
    for (std::size_t i = 0; i < kArchetypeNames.size(); ++i)
        if (kArchetypeNames[i] == s) return static_cast<ArchetypeKind>(i);
    return std::nullopt;
}

struct WorkerArchetype {
    ArchetypeKind kind = ArchetypeKind::Diligent;
    double jitter_sigma = 0.6;      ///< image px
    double speed = 0.05;            ///< image px per ms while tracing
    double correction_rate = 0.02;  ///< per polygon vertex
    std::uint64_t seed = 0;

    void validate() const {
        if (!(jitter_sigma >= 0.0)) throw DomainError("jitter_sigma must be non-negative");
        if (!(speed > 0.0)) throw DomainError("speed must be positive");
        if (!(correction_rate >= 0.0 && correction_rate <= 1.0)) throw DomainError("correction_rate outside [0, 1]");
    }
};

/// Draws a worker's personal parameters for the given archetype.
inline WorkerArchetype make_archetype(ArchetypeKind kind, std::uint64_t seed) {
    Rng rng(derive_seed(seed, 0xa7c4));
    WorkerArchetype w;
    w.kind = kind;
    w.seed = seed;
    switch (kind) {
    case ArchetypeKind::Diligent:
    case ArchetypeKind::WrongObject:
    case ArchetypeKind::Inverted:
        w.jitter_sigma = rng.uniform(0.3, 0.7);
        w.speed = rng.uniform(0.03, 0.07);
        w.correction_rate = rng.uniform(0.01, 0.04);
        break;
    case ArchetypeKind::Sloppy:
        w.jitter_sigma = rng.uniform(1.5, 2.5);
        w.speed = rng.uniform(0.12, 0.25);
        w.correction_rate = 0.0;
        break;
    case ArchetypeKind::Spammer:
        w.jitter_sigma = rng.uniform(3.0, 6.0);
        w.speed = rng.uniform(0.3, 0.8);
        w.correction_rate = 0.0;
        break;
    case ArchetypeKind::BoundingBox:
        w.jitter_sigma = rng.uniform(0.3, 1.0);
        w.speed = rng.uniform(0.1, 0.25);
        w.correction_rate = 0.0;
        break;
    }
    return w;
}

// ---------------------------------------------------------------------------
// Session recording

inline constexpr double kCanvasScale = 2.0;

namespace detail {

class SessionRecorder {
public:
    SessionRecorder(int image_size, Rng& rng) : rng_(rng) {
        cs_.canvas_width = static_cast<int>(image_size * kCanvasScale);
        cs_.canvas_height = cs_.canvas_width;
        cs_.image_width = image_size;
        cs_.image_height = image_size;
        t_ = 0;
    }

    Clickstream& stream() { return cs_; }
    Vec2 cursor() const { return cursor_; }

    /// Canvas positions are whole mouse pixels; the image position follows.
    Vec2 snap(Vec2 image, bool clamp_to_canvas = true) const {
        Vec2 c{std::round(image.x * kCanvasScale), std::round(image.y * kCanvasScale)};
        if (clamp_to_canvas) {
            c.x = std::clamp(c.x, 0.0, static_cast<double>(cs_.canvas_width - 1));
            c.y = std::clamp(c.y, 0.0, static_cast<double>(cs_.canvas_height - 1));
        }
        return c * (1.0 / kCanvasScale);
    }

    /// Emits one event at the snapped position and returns that position.
    Vec2 emit(EventKind kind, Target target, Vec2 image, bool clamp_to_canvas = true) {
        const Vec2 p = snap(image, clamp_to_canvas);
        cs_.events.push_back({t_, p * kCanvasScale, p, kind, target});
        cursor_ = p;
        return p;
    }

    void wait(std::int64_t lo, std::int64_t hi) {
        t_ += lo + static_cast<std::int64_t>(rng_.below(static_cast<std::uint64_t>(hi - lo + 1)));
    }

    void teleport(Vec2 p) { cursor_ = snap(p); }

    /// Mouse-move samples every 10-20 ms along a straight line.
    void hover_to(Vec2 dest, double speed, bool clamp_to_canvas = true) {
        const Vec2 start = cursor_;
        const double len = distance(start, dest);
        double travelled = 0.0;
        while (true) {
            const auto dt = static_cast<std::int64_t>(10 + rng_.below(11));
            travelled += speed * static_cast<double>(dt);
            t_ += dt;
            if (travelled >= len) break;
            emit(EventKind::MouseMove, Target::Canvas, start + (dest - start) * (travelled / len), clamp_to_canvas);
        }
        emit(EventKind::MouseMove, clamp_to_canvas ? Target::Canvas : Target::SaveButton, dest, clamp_to_canvas);
    }

    /// Drags along a polyline with AR(1) jitter, emitting moves only (the
    /// caller brackets them with down/up). Returns the emitted positions.
    std::vector<Vec2> drag_along(const std::vector<Vec2>& path, double speed, double sigma, double rho = 0.9) {
        std::vector<Vec2> out;
        if (path.size() < 2) return out;
        const double innovation = sigma * std::sqrt(1.0 - rho * rho);
        std::size_t seg = 0;
        double along = 0.0;  // position inside segment seg
        while (seg + 1 < path.size()) {
            const auto dt = static_cast<std::int64_t>(10 + rng_.below(11));
            t_ += dt;
            double step = speed * static_cast<double>(dt) * rng_.uniform(0.7, 1.3);
            while (seg + 1 < path.size()) {
                const double len = distance(path[seg], path[seg + 1]);
                if (along + step <= len) {
                    along += step;
                    break;
                }
                step -= len - along;
                along = 0.0;
                ++seg;
            }
            if (seg + 1 >= path.size()) break;
            const Vec2 a = path[seg], b = path[seg + 1];
            const double len = distance(a, b);
            const Vec2 base = len > 0.0 ? a + (b - a) * (along / len) : a;
            jx_ = rho * jx_ + innovation * rng_.normal();
            jy_ = rho * jy_ + innovation * rng_.normal();
            out.push_back(emit(EventKind::MouseMove, Target::Canvas, base + Vec2{jx_, jy_}));
        }
        return out;
    }

    void reset_jitter(double sigma) {
        jx_ = sigma * rng_.normal();
        jy_ = sigma * rng_.normal();
    }
    Vec2 jitter() const { return {jx_, jy_}; }

    /// down + up at the current cursor.
    Vec2 click(Target target = Target::Canvas, bool clamp_to_canvas = true) {
        wait(30, 120);
        const Vec2 p = emit(EventKind::MouseDown, target, cursor_, clamp_to_canvas);
        wait(40, 110);
        emit(EventKind::MouseUp, target, cursor_, clamp_to_canvas);
        return p;
    }

    void save() {
        const Vec2 button{static_cast<double>(cs_.canvas_width + 40) / kCanvasScale, 15.0};
        wait(200, 600);
        hover_to(button, 0.4, false);
        click(Target::SaveButton, false);
    }

private:
    Clickstream cs_;
    Rng& rng_;
    std::int64_t t_ = 0;
    Vec2 cursor_;
    double jx_ = 0.0;
    double jy_ = 0.0;
};

// Outward unit normal at each vertex, for either orientation.
inline std::vector<Vec2> outward_normals(const Polygon& poly) {
    const std::size_t n = poly.size();
    double area2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const Vec2 a = poly.vertices[i], b = poly.vertices[(i + 1) % n];
        area2 += a.x * b.y - b.x * a.y;
    }
    std::vector<Vec2> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const Vec2 t = poly.vertices[(i + 1) % n] - poly.vertices[(i + n - 1) % n];
        Vec2 nrm{t.y, -t.x};
        if (area2 < 0.0) nrm = nrm * -1.0;
        const double l = norm(nrm);
        out[i] = l > 0.0 ? nrm * (1.0 / l) : Vec2{};
    }
    return out;
}

// Contour pushed outward by offset(i) px, starting at vertex start, closed.
template <typename Offset>
std::vector<Vec2> offset_path(const Polygon& contour, std::size_t start, Offset offset) {
    const auto normals = outward_normals(contour);
    const std::size_t n = contour.size();
    std::vector<Vec2> path;
    path.reserve(n + 1);
    for (std::size_t k = 0; k <= n; ++k) {
        const std::size_t i = (start + k) % n;
        path.push_back(contour.vertices[i] + normals[i] * offset(i));
    }
    return path;
}

inline void push_vertex(Polygon& poly, Vec2 p, double spacing) {
    if (poly.vertices.empty() || distance(poly.vertices.back(), p) >= spacing) poly.vertices.push_back(p);
}

struct TraceStyle {
    double speed = 0.05;
    double sigma = 0.6;
    double bias = 0.0;  ///< outward offset in px (negative cuts inside)
    double bias_wobble = 0.0;
    std::size_t strokes = 1;
    double vertex_spacing = 2.0;
    double rho = 0.9;  ///< jitter autocorrelation between move samples
};

// Traces the closed contour with drag strokes; returns the drawn polygon.
inline Polygon trace_contour(SessionRecorder& rec, Rng& rng, const Polygon& contour, const TraceStyle& st) {
    const std::size_t n = contour.size();
    const std::size_t start = static_cast<std::size_t>(rng.below(n));
    const double wobble_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const auto path = offset_path(contour, start, [&](std::size_t i) {
        const double th = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n);
        return st.bias + st.bias_wobble * std::sin(2.0 * th + wobble_phase);
    });

    rec.reset_jitter(st.sigma);
    rec.hover_to(path.front() + rec.jitter(), 0.25);
    Polygon poly;
    // Stroke boundaries along the path; each later stroke starts at the
    // previous release point.
    std::vector<std::size_t> cuts = {0};
    for (std::size_t s = 1; s < st.strokes; ++s) cuts.push_back(s * n / st.strokes + rng.below(n / (4 * st.strokes) + 1));
    cuts.push_back(n);
    for (std::size_t s = 0; s + 1 < cuts.size(); ++s) {
        rec.wait(40, 150);
        const Vec2 down = rec.emit(EventKind::MouseDown, Target::Canvas, rec.cursor());
        push_vertex(poly, down, s == 0 ? 0.0 : st.vertex_spacing);
        std::vector<Vec2> seg(path.begin() + static_cast<std::ptrdiff_t>(cuts[s]),
                              path.begin() + static_cast<std::ptrdiff_t>(cuts[s + 1]) + (cuts[s + 1] < n ? 1 : 0));
        seg.front() = down;
        if (s + 2 == cuts.size()) seg.push_back(poly.vertices.front());
        for (const Vec2& p : rec.drag_along(seg, st.speed, st.sigma, st.rho)) push_vertex(poly, p, st.vertex_spacing);
        rec.wait(20, 60);
        const Vec2 up = rec.emit(EventKind::MouseUp, Target::Canvas, rec.cursor());
        if (s + 2 < cuts.size()) push_vertex(poly, up, st.vertex_spacing);
        if (s + 2 < cuts.size()) rec.wait(150, 500);
    }
    // The last sample lands on the first vertex; the contour closes itself.
    while (poly.size() > 3 && distance(poly.vertices.back(), poly.vertices.front()) < 0.5 * st.vertex_spacing)
        poly.vertices.pop_back();
    return poly;
}

inline std::size_t nearest_index(const Polygon& contour, Vec2 p) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < contour.size(); ++i)
        if (distance(contour.vertices[i], p) < distance(contour.vertices[best], p)) best = i;
    return best;
}

// Drag or double-click-delete randomly chosen vertices. Never touches the
// vertex of the most recent release so the stroke reads as an edit.
inline void apply_corrections(SessionRecorder& rec, Rng& rng, Polygon& poly, const Polygon& truth, double rate,
                              double sigma) {
    const Vec2 last_up = rec.cursor();
    const std::size_t n = poly.size();
    std::vector<std::size_t> chosen;
    for (std::size_t i = 0; i < n; ++i)
        if (rng.bernoulli(rate)) chosen.push_back(i);
    std::vector<bool> deleted(n, false);
    for (std::size_t i : chosen) {
        const Vec2 v = poly.vertices[i];
        if (distance(v, last_up) < 0.5) continue;
        rec.wait(300, 900);
        rec.hover_to(v, 0.2);
        const bool remove = rng.bernoulli(0.25) && n - static_cast<std::size_t>(std::count(deleted.begin(), deleted.end(), true)) > 8;
        if (remove) {
            rec.click();
            rec.wait(30, 80);
            rec.click();
            rec.wait(1, 10);
            rec.emit(EventKind::DoubleClick, Target::Canvas, v);
            deleted[i] = true;
            continue;
        }
        rec.wait(40, 120);
        rec.emit(EventKind::MouseDown, Target::Canvas, v);
        const Vec2 fix = truth.vertices[nearest_index(truth, v)] + Vec2{rng.normal(0.0, 0.3 * sigma), rng.normal(0.0, 0.3 * sigma)};
        rec.reset_jitter(0.0);
        rec.drag_along({v, fix}, 0.03, 0.0);
        rec.wait(20, 60);
        poly.vertices[i] = rec.emit(EventKind::MouseUp, Target::Canvas, fix);
    }
    Polygon kept;
    for (std::size_t i = 0; i < n; ++i)
        if (!deleted[i]) kept.vertices.push_back(poly.vertices[i]);
    poly = std::move(kept);
}

inline void maybe_zoom(SessionRecorder& rec, Rng& rng, double p) {
    if (!rng.bernoulli(p)) return;
    // Zoom in and back out; the view ends where it started.
    const auto notches = 1 + rng.below(3);
    for (std::uint64_t k = 0; k < 2 * notches; ++k) {
        rec.wait(30, 90);
        rec.emit(EventKind::Wheel, Target::Canvas, rec.cursor());
    }
}

inline Polygon diligent_session(SessionRecorder& rec, Rng& rng, const Polygon& contour, const WorkerArchetype& w) {
    // Speed varies per session; hurrying widens the jitter.
    const double speed = w.speed * rng.uniform(0.7, 1.4);
    const double sigma = w.jitter_sigma * std::sqrt(speed / w.speed);
    TraceStyle st;
    st.speed = speed;
    st.sigma = sigma;
    st.bias = rng.normal(0.0, 0.3);
    st.strokes = 1 + rng.below(3);
    st.rho = 0.98;
    st.vertex_spacing = 4;
    maybe_zoom(rec, rng, 0.3);
    Polygon poly = trace_contour(rec, rng, contour, st);
    apply_corrections(rec, rng, poly, contour, w.correction_rate, sigma);
    return poly;
}

inline Polygon sloppy_session(SessionRecorder& rec, Rng& rng, const Polygon& contour, const WorkerArchetype& w) {
    const double speed = w.speed * rng.uniform(0.8, 1.25);
    TraceStyle st;
    st.speed = speed;
    st.sigma = w.jitter_sigma * std::sqrt(speed / w.speed);
    // Faster sessions drift further off the boundary.
    const double drift = 14.0 * speed * rng.uniform(0.7, 1.3);
    st.bias = rng.bernoulli(0.5) ? drift : -drift;
    st.bias_wobble = rng.uniform(0.5, 2.0);
    st.strokes = 1;
    st.vertex_spacing = 4.0;
    return trace_contour(rec, rng, contour, st);
}

inline Polygon spammer_session(SessionRecorder& rec, Rng& rng, int size, const WorkerArchetype& w) {
    const double s = size;
    Polygon poly;
    if (rng.bernoulli(0.3)) {
        // A few quick clicks in one patch of the image.
        const auto clicks = 3 + rng.below(3);
        const double reach = 0.12 * s;
        const Vec2 c{rng.uniform(reach, s - reach), rng.uniform(reach, s - reach)};
        rec.teleport({rng.uniform(0.0, s), rng.uniform(0.0, s)});
        for (std::uint64_t k = 0; k < clicks; ++k) {
            rec.hover_to(c + Vec2{rng.uniform(-reach, reach), rng.uniform(-reach, reach)}, w.speed);
            poly.vertices.push_back(rec.click());
        }
        return poly;
    }
    // Scribble: a short zig-zag around a random point.
    const Vec2 c{rng.uniform(0.1 * s, 0.9 * s), rng.uniform(0.1 * s, 0.9 * s)};
    const double reach = rng.uniform(3.0, 0.08 * s);
    std::vector<Vec2> path = {c};
    const auto turns = 4 + rng.below(8);
    for (std::uint64_t k = 0; k < turns; ++k) path.push_back(c + Vec2{rng.uniform(-reach, reach), rng.uniform(-reach, reach)});
    rec.teleport({rng.uniform(0.0, s), rng.uniform(0.0, s)});
    rec.hover_to(c, w.speed);
    rec.wait(20, 60);
    poly.vertices.push_back(rec.emit(EventKind::MouseDown, Target::Canvas, c));
    rec.reset_jitter(w.jitter_sigma);
    for (const Vec2& p : rec.drag_along(path, w.speed, w.jitter_sigma, 0.5)) push_vertex(poly, p, 2.0);
    rec.wait(10, 40);
    push_vertex(poly, rec.emit(EventKind::MouseUp, Target::Canvas, rec.cursor()), 0.0);
    while (poly.size() < 3) {
        rec.hover_to(rec.cursor() + Vec2{rng.uniform(-reach, reach), rng.uniform(-reach, reach)}, w.speed);
        poly.vertices.push_back(rec.click());
    }
    return poly;
}

inline Polygon bounding_box_session(SessionRecorder& rec, Rng& rng, const Mask& target, const WorkerArchetype& w) {
    int x0 = target.width(), y0 = target.height(), x1 = -1, y1 = -1;
    for (int y = 0; y < target.height(); ++y)
        for (int x = 0; x < target.width(); ++x)
            if (target.at(x, y)) {
                x0 = std::min(x0, x);
                y0 = std::min(y0, y);
                x1 = std::max(x1, x + 1);
                y1 = std::max(y1, y + 1);
            }
    const auto j = [&] { return rng.normal(0.0, w.jitter_sigma); };
    const std::vector<Vec2> corners = {{x0 + j(), y0 + j()}, {x0 + j(), y1 + j()}, {x1 + j(), y1 + j()}, {x1 + j(), y0 + j()}};
    Polygon poly;
    maybe_zoom(rec, rng, 0.1);
    rec.hover_to(corners[0], 0.3);
    for (std::size_t k = 0; k < corners.size(); ++k) {
        if (k) rec.hover_to(corners[k], w.speed);
        poly.vertices.push_back(rec.click());
    }
    if (rng.bernoulli(0.5)) {
        // Closing click on the first corner.
        rec.hover_to(poly.vertices.front(), w.speed);
        rec.click();
    }
    return poly;
}

// Careful trace, then the four image corners joined through a slit so the
// traced object becomes a hole.
inline Polygon inverted_session(SessionRecorder& rec, Rng& rng, const Polygon& contour, int size,
                                const WorkerArchetype& w) {
    Polygon poly = diligent_session(rec, rng, contour, w);
    const double far = size - 0.5;
    const std::vector<Vec2> corners = {{0.0, 0.0}, {0.0, far}, {far, far}, {far, 0.0}, {0.0, 0.0}};
    // Rotate so the slit leaves from the traced vertex nearest the first corner.
    const std::size_t k = nearest_index(poly, corners[0]);
    std::rotate(poly.vertices.begin(), poly.vertices.begin() + static_cast<std::ptrdiff_t>(k), poly.vertices.end());
    poly.vertices.push_back(poly.vertices.front());
    for (const Vec2& c : corners) {
        rec.wait(100, 300);
        rec.hover_to(c, w.speed * 4.0);
        poly.vertices.push_back(rec.click());
    }
    return poly;
}

}  // namespace detail

struct Annotation {
    Clickstream clickstream;
    Polygon polygon;
};

/// One annotation session. The session seed combines the worker's and the
/// scene's, so a worker annotates a given scene the same way every time.
inline Annotation simulate_annotation(const SyntheticScene& scene, const WorkerArchetype& w,
                                      std::string worker_id = "worker", std::string image_id = "image") {
    w.validate();
    if (w.kind == ArchetypeKind::WrongObject && !scene.has_decoy())
        throw DomainError("wrong-object annotation needs a scene with a decoy");
    const int size = scene.image.width();
    Rng rng(derive_seed(w.seed, scene.seed));
    detail::SessionRecorder rec(size, rng);
    rec.teleport({rng.uniform(0.0, size), rng.uniform(0.0, size)});
    rec.wait(300, 1500);

    Polygon poly;
    switch (w.kind) {
    case ArchetypeKind::Diligent: poly = detail::diligent_session(rec, rng, scene.reference_contour, w); break;
    case ArchetypeKind::Sloppy: poly = detail::sloppy_session(rec, rng, scene.reference_contour, w); break;
    case ArchetypeKind::Spammer: poly = detail::spammer_session(rec, rng, size, w); break;
    case ArchetypeKind::BoundingBox: poly = detail::bounding_box_session(rec, rng, scene.reference, w); break;
    case ArchetypeKind::WrongObject: poly = detail::diligent_session(rec, rng, scene.decoy_contour, w); break;
    case ArchetypeKind::Inverted:
        poly = detail::inverted_session(rec, rng, scene.reference_contour, size, w);
        break;
    }
    rec.save();
    Annotation a{std::move(rec.stream()), std::move(poly)};
    a.clickstream.worker_id = std::move(worker_id);
    a.clickstream.image_id = std::move(image_id);
    return a;
}

// ---------------------------------------------------------------------------
// Datasets

struct ArchetypeMix {
    std::vector<std::pair<ArchetypeKind, double>> parts;  ///< weights, any positive scale
};

/// "diligent=40,sloppy=20,spammer=25,bounding-box=10,inverted=5".
inline ArchetypeMix parse_mix(std::string_view spec) {
    ArchetypeMix mix;
    while (!spec.empty()) {
        const auto comma = spec.find(',');
        const std::string_view item = detail::trim(spec.substr(0, comma));
        spec = comma == std::string_view::npos ? std::string_view{} : spec.substr(comma + 1);
        if (item.empty()) continue;
        const auto eq = item.find('=');
        if (eq == std::string_view::npos) throw ParseError("mix entry needs name=weight: '" + std::string(item) + "'");
        const auto kind = parse_archetype(detail::trim(item.substr(0, eq)));
        if (!kind) throw ParseError("unknown archetype '" + std::string(item.substr(0, eq)) + "'");
        const std::string w(detail::trim(item.substr(eq + 1)));
        double weight = 0.0;
        try {
            std::size_t used = 0;
            weight = std::stod(w, &used);
            if (used != w.size()) throw std::invalid_argument(w);
        } catch (const std::exception&) {
            throw ParseError("bad mix weight '" + w + "'");
        }
        if (!(weight >= 0.0)) throw ParseError("negative mix weight");
        mix.parts.emplace_back(*kind, weight);
    }
    double total = 0.0;
    for (const auto& [k, wt] : mix.parts) total += wt;
    if (!(total > 0.0)) throw ParseError("mix has no positive weight");
    return mix;
}

/// Worker counts per mix entry by largest remainder (ties: earlier entry).
inline std::vector<std::size_t> mix_counts(const ArchetypeMix& mix, std::size_t n) {
    double total = 0.0;
    for (const auto& [k, w] : mix.parts) total += w;
    std::vector<std::size_t> counts(mix.parts.size(), 0);
    std::vector<std::pair<double, std::size_t>> rem;
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < mix.parts.size(); ++i) {
        const double exact = static_cast<double>(n) * mix.parts[i].second / total;
        counts[i] = static_cast<std::size_t>(std::floor(exact));
        assigned += counts[i];
        rem.emplace_back(exact - std::floor(exact), i);
    }
    std::stable_sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++counts[rem[k % rem.size()].second];
    return counts;
}

struct DatasetOptions {
    int image_size = 128;
    bool with_decoy = true;
};

struct DatasetRow {
    std::size_t scene = 0;
    std::size_t worker = 0;
    Annotation annotation;
    double dsc = 0.0;  ///< against the scene's target
};

struct SimulatedDataset {
    std::vector<std::string> image_ids;
    std::vector<SceneShape> shapes;
    std::vector<SyntheticScene> scenes;
    std::vector<std::string> worker_ids;
    std::vector<WorkerArchetype> workers;
    std::vector<DatasetRow> rows;  ///< scene-major, then worker order
};

inline std::string image_id_for(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "img%04zu", i);
    return buf;
}

inline std::string worker_id_for(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "w%03zu", i);
    return buf;
}

/// Every worker annotates every scene once; workers keep their archetype.
inline SimulatedDataset build_dataset(std::size_t n_images, std::size_t n_workers, const ArchetypeMix& mix,
                                      std::uint64_t seed, const DatasetOptions& opt = {}) {
    SimulatedDataset ds;
    if (n_workers == 0 || n_images == 0) return ds;

    std::vector<ArchetypeKind> kinds;
    const auto counts = mix_counts(mix, n_workers);
    for (std::size_t i = 0; i < counts.size(); ++i) kinds.insert(kinds.end(), counts[i], mix.parts[i].first);
    Rng rng(derive_seed(seed, 1));
    rng.shuffle(kinds);
    for (std::size_t w = 0; w < n_workers; ++w) {
        ds.worker_ids.push_back(worker_id_for(w));
        ds.workers.push_back(make_archetype(kinds[w], derive_seed(seed, 1000 + w)));
    }

    constexpr SceneShape kShapes[] = {SceneShape::Circle, SceneShape::Blob, SceneShape::Rectangle};
    ds.scenes.resize(n_images);
    for (std::size_t i = 0; i < n_images; ++i) {
        ds.image_ids.push_back(image_id_for(i));
        ds.shapes.push_back(kShapes[rng.below(3)]);
    }
    parallel_for(n_images, [&](std::size_t i) {
        ds.scenes[i] = generate_scene(ds.shapes[i], opt.image_size, derive_seed(seed, 1'000'000 + i), opt.with_decoy);
    });

    ds.rows.resize(n_images * n_workers);
    parallel_for(ds.rows.size(), [&](std::size_t r) {
        DatasetRow& row = ds.rows[r];
        row.scene = r / n_workers;
        row.worker = r % n_workers;
        const SyntheticScene& sc = ds.scenes[row.scene];
        row.annotation = simulate_annotation(sc, ds.workers[row.worker], ds.worker_ids[row.worker],
                                             ds.image_ids[row.scene]);
        const Polygon& p = row.annotation.polygon;
        const Mask m = p.size() >= 3 ? rasterize(p, sc.reference.width(), sc.reference.height())
                                     : Mask(sc.reference.width(), sc.reference.height());
        row.dsc = dice(m, sc.reference);
    });
    return ds;
}

}  // namespace crowdqc
