#pragma once

// Contours, binary masks and the measurements taken on them.
//
// Pixel (x, y) covers [x, x+1) x [y, y+1) in image coordinates; its center
// is (x + 0.5, y + 0.5).

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "crowdqc/clickstream.hpp"
#include "crowdqc/core.hpp"
#include "crowdqc/pnm.hpp"

namespace crowdqc {

/// Closed contour; the last vertex connects back to the first.
struct Polygon {
    std::vector<Vec2> vertices;

    std::size_t size() const { return vertices.size(); }
    bool empty() const { return vertices.empty(); }
    bool operator==(const Polygon&) const = default;
};

class Mask {
public:
    Mask() = default;
    Mask(int width, int height) : width_(width), height_(height) {
        if (width <= 0 || height <= 0) throw DomainError("mask dimensions must be positive");
        bits_.assign(static_cast<std::size_t>(width) * height, 0);
    }

    int width() const { return width_; }
    int height() const { return height_; }
    std::size_t pixel_count() const { return bits_.size(); }

    bool at(int x, int y) const { return bits_[index(x, y)] != 0; }
    void set(int x, int y, bool v = true) { bits_[index(x, y)] = v ? 1 : 0; }

    bool operator[](std::size_t i) const { return bits_[i] != 0; }
    void set_index(std::size_t i, bool v) { bits_[i] = v ? 1 : 0; }

    /// Number of object pixels.
    std::size_t count() const {
        return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
    }

    bool same_shape(const Mask& o) const { return width_ == o.width_ && height_ == o.height_; }
    std::span<const std::uint8_t> bits() const { return bits_; }

    bool operator==(const Mask&) const = default;

private:
    std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width_ + x; }

    int width_ = 0;
    int height_ = 0;
    std::vector<std::uint8_t> bits_;
};

namespace detail {

/// x coordinates where the horizontal line y = yc crosses the polygon's edges.
/// Edges are half-open in y, so a vertex on the line is counted once.
inline std::vector<double> scanline_crossings(const Polygon& poly, double yc) {
    std::vector<double> xs;
    const std::size_t n = poly.size();
    for (std::size_t i = 0; i < n; ++i) {
        const Vec2 a = poly.vertices[i];
        const Vec2 b = poly.vertices[(i + 1) % n];
        if ((a.y <= yc && yc < b.y) || (b.y <= yc && yc < a.y))
            xs.push_back(a.x + (yc - a.y) * (b.x - a.x) / (b.y - a.y));
    }
    std::sort(xs.begin(), xs.end());
    return xs;
}

}  // namespace detail

/// Even-odd scanline fill sampled at pixel centers, clipped to the image.
inline Mask rasterize(const Polygon& poly, int width, int height) {
    if (poly.size() < 3) throw DomainError("degenerate contour");
    for (const Vec2& v : poly.vertices)
        if (!std::isfinite(v.x) || !std::isfinite(v.y)) throw DomainError("non-finite contour vertex");
    Mask mask(width, height);
    for (int y = 0; y < height; ++y) {
        const std::vector<double> xs = detail::scanline_crossings(poly, y + 0.5);
        // Centers with xs[2k] <= xc < xs[2k+1] are inside.
        for (std::size_t k = 0; k + 1 < xs.size(); k += 2) {
            const double lo = xs[k];
            const double hi = xs[k + 1];
            if (hi <= 0.5 || lo > width - 0.5) continue;
            int x = static_cast<int>(std::clamp(std::floor(lo) - 1.0, 0.0, static_cast<double>(width)));
            while (x < width && x + 0.5 < lo) ++x;
            for (; x < width && x + 0.5 < hi; ++x) mask.set(x, y);
        }
    }
    return mask;
}

/// Dice similarity 2|U n V| / (|U| + |V|). Two empty masks agree perfectly (1).
inline double dice(const Mask& u, const Mask& v) {
    if (!u.same_shape(v)) throw DomainError("mask dimensions differ");
    std::size_t cu = 0, cv = 0, both = 0;
    const auto bu = u.bits();
    const auto bv = v.bits();
    for (std::size_t i = 0; i < bu.size(); ++i) {
        cu += bu[i];
        cv += bv[i];
        both += bu[i] & bv[i];
    }
    if (cu + cv == 0) return 1.0;
    return 2.0 * static_cast<double>(both) / static_cast<double>(cu + cv);
}

/// Perimeter including the closing segment.
inline double contour_length(const Polygon& poly) {
    if (poly.size() < 2) throw DomainError("contour needs at least 2 vertices");
    double len = 0.0;
    for (std::size_t i = 0; i < poly.size(); ++i)
        len += distance(poly.vertices[i], poly.vertices[(i + 1) % poly.size()]);
    return len;
}

enum class CoordinateSpace { Canvas, Image };

inline Vec2 position(const Event& e, CoordinateSpace space) {
    return space == CoordinateSpace::Canvas ? e.canvas : e.image;
}

/// Distance travelled through consecutive event positions.
inline double path_length(std::span<const Event> events, CoordinateSpace space) {
    double len = 0.0;
    for (std::size_t i = 1; i < events.size(); ++i)
        len += distance(position(events[i - 1], space), position(events[i], space));
    return len;
}

/// Per-segment normal (-(dy), dx); segment i joins vertex i to vertex i+1.
inline std::vector<Vec2> segment_normals(const Polygon& poly) {
    std::vector<Vec2> normals;
    const std::size_t n = poly.size();
    if (n < 2) return normals;
    normals.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const Vec2 a = poly.vertices[i];
        const Vec2 b = poly.vertices[(i + 1) % n];
        normals.push_back({-(b.y - a.y), b.x - a.x});
    }
    return normals;
}

/// Vertex normal: mean of the normals of the two segments meeting at the vertex.
inline std::vector<Vec2> vertex_normals(const Polygon& poly) {
    if (poly.size() < 3) throw DomainError("degenerate polygon");
    const std::vector<Vec2> seg = segment_normals(poly);
    const std::size_t n = seg.size();
    std::vector<Vec2> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = seg[(i + n - 1) % n] * 0.5 + seg[i] * 0.5;
    return out;
}

// ---------------------------------------------------------------------------
// File formats

/// Mask as binary PGM: object 255, background 0.
inline std::string encode_mask_pgm(const Mask& m) {
    std::vector<std::uint8_t> px(m.pixel_count());
    for (std::size_t i = 0; i < px.size(); ++i) px[i] = m[i] ? 255 : 0;
    return encode_pgm(m.width(), m.height(), px);
}

/// Any nonzero sample is object.
inline Mask decode_mask_pgm(const std::string& bytes) {
    const PnmImage img = parse_pnm(bytes);
    if (img.channels != 1) throw ParseError("mask must be a grayscale image");
    Mask m(img.width, img.height);
    for (std::size_t i = 0; i < m.pixel_count(); ++i) m.set_index(i, img.samples[i] != 0);
    return m;
}

inline constexpr std::string_view kPolygonHeader = "# crowdqc-polygon v1";

/// One line per contour: x1 y1 x2 y2 ... in image coordinates.
inline std::string serialize_polygons(std::span<const Polygon> contours) {
    std::string out(kPolygonHeader);
    out += '\n';
    for (const Polygon& p : contours) {
        for (std::size_t i = 0; i < p.size(); ++i) {
            if (i) out += ' ';
            out += format_number(p.vertices[i].x);
            out += ' ';
            out += format_number(p.vertices[i].y);
        }
        out += '\n';
    }
    return out;
}

inline std::string serialize_polygon(const Polygon& p) {
    if (p.empty()) return serialize_polygons({});
    return serialize_polygons(std::span<const Polygon>(&p, 1));
}

inline std::vector<Polygon> parse_polygons(const std::string& text) {
    std::vector<Polygon> out;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        std::istringstream ls(line);
        std::vector<double> values;
        std::string tok;
        while (ls >> tok) {
            double v = 0.0;
            const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
            if (ec != std::errc() || ptr != tok.data() + tok.size() || !std::isfinite(v))
                throw ParseError("bad coordinate '" + tok + "'", line_no);
            values.push_back(v);
        }
        if (values.size() % 2 != 0) throw ParseError("odd number of coordinates", line_no);
        Polygon p;
        for (std::size_t i = 0; i < values.size(); i += 2) p.vertices.push_back({values[i], values[i + 1]});
        out.push_back(std::move(p));
    }
    return out;
}

/// First contour of a polygon file; an empty file means "no contour".
inline Polygon parse_polygon(const std::string& text) {
    auto all = parse_polygons(text);
    return all.empty() ? Polygon{} : std::move(all.front());
}

}  // namespace crowdqc
