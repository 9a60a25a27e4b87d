#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "crowdqc/geometry.hpp"
#include "crowdqc/random.hpp"
#include "support.hpp"
#include "oracles.hpp"

using namespace crowdqc;
using Catch::Approx;

namespace {

Polygon box(double x0, double y0, double x1, double y1) { return {{{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}}}; }

Mask filled(int w, int h, int x0, int y0, int x1, int y1) {
    Mask m(w, h);
    for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) m.set(x, y);
    return m;
}

Polygon random_polygon(Rng& rng, int n, double lo, double hi) {
    Polygon p;
    for (int i = 0; i < n; ++i) p.vertices.push_back({rng.uniform(lo, hi), rng.uniform(lo, hi)});
    return p;
}

}  // namespace

TEST_CASE("rasterize square") {
    // Corners on pixel boundaries: centers 2.5 .. 6.5 fall inside.
    const Mask m = rasterize(box(2, 2, 7, 7), 10, 10);
    CHECK(m.count() == oracles::pixel_mask(box(2, 2, 7, 7), 10, 10).count());
    CHECK(m.count() == 25);
    CHECK(m == filled(10, 10, 2, 2, 7, 7));
    // Pixels 2..7 inclusive.
    CHECK(rasterize(box(2, 2, 8, 8), 10, 10).count() == 36);
}

TEST_CASE("rasterize edge cases") {
    CHECK(rasterize(box(20, 20, 30, 30), 10, 10).count() == 0);
    CHECK(rasterize(box(-5, -5, -1, -1), 10, 10).count() == 0);
    CHECK(rasterize(box(-5, -5, 50, 50), 10, 10).count() == 100);
    CHECK_THROWS_WITH(rasterize(Polygon{{{0, 0}, {1, 1}}}, 10, 10), "degenerate contour");
    CHECK_THROWS_AS(rasterize(box(0, 0, NAN, 1), 10, 10), DomainError);
    CHECK_THROWS_AS(rasterize(box(0, 0, 1, 1), 0, 10), DomainError);
}

TEST_CASE("rasterize agrees with the point-in-polygon oracle") {
    Rng rng(31);
    for (int round = 0; round < 400; ++round) {
        const int w = 1 + static_cast<int>(rng.below(64));
        const int h = 1 + static_cast<int>(rng.below(64));
        const int n = 3 + static_cast<int>(rng.below(12));
        Polygon p = random_polygon(rng, n, -8, 72);
        if (round % 4 == 0)  // lattice vertices exercise the tie rules
            for (Vec2& v : p.vertices) v = {std::round(v.x * 2) / 2, std::round(v.y * 2) / 2};
        REQUIRE(rasterize(p, w, h) == oracles::pixel_mask(p, w, h));
    }
}

TEST_CASE("integer translation translates the mask") {
    Rng rng(5);
    for (int round = 0; round < 50; ++round) {
        Polygon p = random_polygon(rng, 7, 10, 30);
        const int dx = static_cast<int>(rng.below(20));
        const int dy = static_cast<int>(rng.below(20));
        Polygon q = p;
        for (Vec2& v : q.vertices) v = v + Vec2{static_cast<double>(dx), static_cast<double>(dy)};
        const Mask a = rasterize(p, 64, 64);
        const Mask b = rasterize(q, 64, 64);
        for (int y = 0; y < 64; ++y)
            for (int x = 0; x < 64; ++x)
                if (x + dx < 64 && y + dy < 64) REQUIRE(a.at(x, y) == b.at(x + dx, y + dy));
    }
}

TEST_CASE("dice") {
    const Mask u = filled(20, 20, 0, 0, 10, 10);
    CHECK(dice(u, u) == 1.0);
    CHECK(dice(u, filled(20, 20, 10, 10, 20, 20)) == 0.0);
    // |U| = |V| = 100, overlap 50.
    const Mask v = filled(20, 20, 5, 0, 15, 10);
    CHECK(u.count() == 100);
    CHECK(v.count() == 100);
    CHECK(dice(u, v) == 0.5);
    CHECK(dice(Mask(4, 4), Mask(4, 4)) == 1.0);
    CHECK(dice(Mask(4, 4), filled(4, 4, 0, 0, 1, 1)) == 0.0);
    CHECK_THROWS_AS(dice(Mask(4, 4), Mask(4, 5)), DomainError);
}

TEST_CASE("dice is symmetric and bounded") {
    Rng rng(17);
    for (int round = 0; round < 200; ++round) {
        Mask a(9, 7), b(9, 7);
        std::size_t ca = 0, cb = 0, both = 0;
        for (std::size_t i = 0; i < a.pixel_count(); ++i) {
            const bool x = rng.uniform() < 0.4;
            const bool y = rng.uniform() < 0.6;
            a.set_index(i, x);
            b.set_index(i, y);
            ca += x;
            cb += y;
            both += x && y;
        }
        const double d = dice(a, b);
        CHECK(d == dice(b, a));
        CHECK(d >= 0.0);
        CHECK(d <= 1.0);
        if (ca + cb > 0) CHECK(d == Approx(2.0 * both / (ca + cb)));
    }
}

TEST_CASE("contour and path length") {
    CHECK(contour_length(box(0, 0, 1, 1)) == 4.0);
    CHECK(contour_length(Polygon{{{0, 0}, {3, 0}, {3, 4}}}) == 12.0);
    CHECK(contour_length(Polygon{{{0, 0}, {3, 0}, {3, 0}, {3, 4}}}) == 12.0);
    CHECK_THROWS_AS(contour_length(Polygon{{{0, 0}}}), DomainError);

    testing_support::StreamBuilder b;
    b.move(0, 0);
    CHECK(path_length(b.cs.events, CoordinateSpace::Canvas) == 0.0);
    b.move(6, 0);
    CHECK(path_length(b.cs.events, CoordinateSpace::Canvas) == 6.0);
    CHECK(path_length(b.cs.events, CoordinateSpace::Image) == 3.0);
    b.move(6, 8).move(0, 0).move(0, 2);
    CHECK(path_length(b.cs.events, CoordinateSpace::Canvas) == Approx(6 + 8 + 10 + 2));
}

TEST_CASE("segment normals") {
    const auto n = segment_normals(Polygon{{{0, 0}, {1, 0}}});
    REQUIRE(n.size() == 2);
    CHECK(n[0] == Vec2{0, 1});
    CHECK(segment_normals(Polygon{{{0, 0}, {0, 1}}})[0] == Vec2{-1, 0});
    CHECK(segment_normals(Polygon{{{2, 2}, {2, 2}, {3, 2}}})[0] == Vec2{0, 0});
}

TEST_CASE("vertex normals") {
    // Vertex 1 of the unit square joins segments with normals (0,1) and (-1,0).
    const auto sq = vertex_normals(box(0, 0, 1, 1));
    CHECK(sq[1] == Vec2{-0.5, 0.5});

    const auto line = vertex_normals(Polygon{{{0, 0}, {1, 0}, {2, 0}, {1, 5}}});
    CHECK(line[1] == Vec2{0, 1});

    Polygon hex;
    for (int i = 0; i < 6; ++i) {
        const double a = i * std::numbers::pi / 3;
        hex.vertices.push_back({10 + 3 * std::cos(a), 10 + 3 * std::sin(a)});
    }
    const auto hn = vertex_normals(hex);
    for (int i = 0; i < 6; ++i) {
        const Vec2 radial = hex.vertices[i] - Vec2{10, 10};
        const double cross = radial.x * hn[i].y - radial.y * hn[i].x;
        CHECK(cross == Approx(0).margin(1e-12));
        CHECK(std::abs(dot(radial, hn[i])) > 1.0);
    }
    CHECK_THROWS_AS(vertex_normals(Polygon{{{0, 0}, {1, 0}}}), DomainError);
}

TEST_CASE("length and normals are invariant under cyclic rotation") {
    Rng rng(3);
    for (int round = 0; round < 50; ++round) {
        const Polygon p = random_polygon(rng, 3 + static_cast<int>(rng.below(10)), 0, 50);
        const auto base = vertex_normals(p);
        for (std::size_t k = 1; k < p.size(); ++k) {
            Polygon q = p;
            std::rotate(q.vertices.begin(), q.vertices.begin() + static_cast<std::ptrdiff_t>(k), q.vertices.end());
            CHECK(contour_length(q) == Approx(contour_length(p)));
            const auto rn = vertex_normals(q);
            for (std::size_t i = 0; i < p.size(); ++i) CHECK(rn[i] == base[(i + k) % p.size()]);
        }
    }
}

TEST_CASE("mask and polygon files") {
    Mask m = filled(5, 3, 1, 0, 3, 2);
    const std::string pgm = encode_mask_pgm(m);
    CHECK(pgm.rfind("P5\n5 3\n255\n", 0) == 0);
    CHECK(decode_mask_pgm(pgm) == m);
    CHECK(decode_mask_pgm("P2 2 1 7 0 3") == filled(2, 1, 1, 0, 2, 1));
    CHECK_THROWS_AS(decode_mask_pgm("P3 1 1 255 1 2 3"), ParseError);

    const Polygon p{{{1.5, 2}, {3, 4.25}, {0, 1e-3}}};
    const std::string text = serialize_polygon(p);
    CHECK(text == "# crowdqc-polygon v1\n1.5 2 3 4.25 0 0.001\n");
    CHECK(parse_polygon(text) == p);
    CHECK(parse_polygon(serialize_polygon(Polygon{})).empty());
    CHECK(parse_polygons("1 2 3 4\n\n# c\n5 6 7 8 9 10\n").size() == 2);
    try {
        parse_polygons("1 2\n1 2 3\n");
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 2);
    }
    CHECK_THROWS_AS(parse_polygons("1 x\n"), ParseError);
}
