#include <catch_amalgamated.hpp>

#include <algorithm>
#include <numbers>
#include <numeric>

#include "crowdqc/clickstream.hpp"
#include "crowdqc/geometry.hpp"
#include "crowdqc/simulator.hpp"
#include "crowdqc/stats.hpp"

using namespace crowdqc;

namespace {

double annotation_dsc(const SyntheticScene& sc, const Annotation& a, const Mask& truth) {
    const Mask m = a.polygon.size() >= 3 ? rasterize(a.polygon, truth.width(), truth.height())
                                         : Mask(truth.width(), truth.height());
    return dice(m, truth);
}

double annotation_dsc(const SyntheticScene& sc, const Annotation& a) { return annotation_dsc(sc, a, sc.reference); }

std::vector<double> archetype_dscs(ArchetypeKind kind, SceneShape shape, int n, std::uint64_t base = 0) {
    std::vector<double> out;
    for (int s = 1; s <= n; ++s) {
        const auto sc = generate_scene(shape, 128, base + s);
        const auto w = make_archetype(kind, base + 5000 + s);
        out.push_back(annotation_dsc(sc, simulate_annotation(sc, w)));
    }
    return out;
}

// Pixel count of the tight bounding box of a mask.
double bounding_box_area(const Mask& m) {
    int x0 = m.width(), y0 = m.height(), x1 = -1, y1 = -1;
    for (int y = 0; y < m.height(); ++y)
        for (int x = 0; x < m.width(); ++x)
            if (m.at(x, y)) {
                x0 = std::min(x0, x);
                y0 = std::min(y0, y);
                x1 = std::max(x1, x);
                y1 = std::max(y1, y);
            }
    return (x1 - x0 + 1.0) * (y1 - y0 + 1.0);
}

}  // namespace

TEST_CASE("circle reference area") {
    for (double r : {20.0, 13.5, 31.0}) {
        ShapeSpec s;
        s.radius = r;
        s.center = {64.3, 61.8};
        const auto sc = render_scene(s, std::nullopt, 128, 7);
        const double area = std::numbers::pi * r * r;
        CHECK(std::abs(static_cast<double>(sc.reference.count()) - area) / area < 0.02);
    }
}

TEST_CASE("scenes are deterministic per seed") {
    for (auto shape : {SceneShape::Circle, SceneShape::Blob, SceneShape::Rectangle}) {
        const auto a = generate_scene(shape, 96, 11);
        const auto b = generate_scene(shape, 96, 11);
        CHECK(a.image == b.image);
        CHECK(a.reference == b.reference);
        CHECK(a.reference_contour == b.reference_contour);
        CHECK(a.decoy_reference == b.decoy_reference);
        const auto c = generate_scene(shape, 96, 12);
        CHECK_FALSE(a.image == c.image);
    }
}

TEST_CASE("rectangle reference is the rasterized rectangle") {
    ShapeSpec s;
    s.shape = SceneShape::Rectangle;
    s.center = {40.2, 50.7};
    s.half_width = 12.4;
    s.half_height = 7.6;
    const auto sc = render_scene(s, std::nullopt, 96, 3);
    const Polygon rect{{{28, 43}, {28, 58}, {53, 58}, {53, 43}}};
    CHECK(sc.reference == rasterize(rect, 96, 96));
    CHECK(sc.reference.count() == 25 * 15);
}

TEST_CASE("object contrast") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        for (auto shape : {SceneShape::Circle, SceneShape::Blob, SceneShape::Rectangle}) {
            const auto sc = generate_scene(shape, 128, seed);
            REQUIRE(sc.reference.count() > 0);
            REQUIRE(sc.has_decoy());
            CHECK(sc.decoy_reference->same_shape(sc.reference));
            CHECK(sc.image.width() == sc.reference.width());
            CHECK(dice(sc.reference, *sc.decoy_reference) == 0.0);
            double in = 0, out = 0;
            std::size_t n_in = 0, n_out = 0;
            for (int y = 0; y < 128; ++y)
                for (int x = 0; x < 128; ++x) {
                    if (sc.reference.at(x, y)) {
                        in += sc.image.at(x, y);
                        ++n_in;
                    } else if (!sc.decoy_reference->at(x, y)) {
                        out += sc.image.at(x, y);
                        ++n_out;
                    }
                }
            CHECK(in / n_in - out / n_out >= 50.0);
        }
    }
    CHECK_THROWS_AS(generate_scene(SceneShape::Circle, kMinSceneSize - 1, 1), DomainError);
}

TEST_CASE("diligent workers trace the target") {
    for (auto shape : {SceneShape::Circle, SceneShape::Blob, SceneShape::Rectangle}) {
        const auto d = archetype_dscs(ArchetypeKind::Diligent, shape, 100);
        CHECK(summary_stats(d).median > 0.9);
    }
}

TEST_CASE("spammers miss the target") {
    const auto d = archetype_dscs(ArchetypeKind::Spammer, SceneShape::Circle, 200, 300);
    const auto low = std::count_if(d.begin(), d.end(), [](double x) { return x < 0.3; });
    CHECK(static_cast<double>(low) >= 0.95 * static_cast<double>(d.size()));
}

TEST_CASE("bounding boxes follow the circle-in-box ratio") {
    // A box around a circle contains it, so DSC = 2|C| / (|C| + |B|).
    for (std::uint64_t seed = 1; seed <= 60; ++seed) {
        const auto sc = generate_scene(SceneShape::Circle, 128, seed);
        const double c = static_cast<double>(sc.reference.count());
        const double oracle = 2.0 * c / (c + bounding_box_area(sc.reference));
        const double d = annotation_dsc(sc, simulate_annotation(sc, make_archetype(ArchetypeKind::BoundingBox, seed)));
        CHECK(oracle == Catch::Approx(2.0 * std::numbers::pi / (std::numbers::pi + 4.0)).margin(0.02));
        CHECK(std::abs(d - oracle) < 0.04);
        CHECK(d >= 0.82);
        CHECK(d <= 0.92);
    }
}

TEST_CASE("wrong-object and inverted sessions") {
    const auto plain = generate_scene(SceneShape::Circle, 96, 4, false);
    CHECK_THROWS_AS(simulate_annotation(plain, make_archetype(ArchetypeKind::WrongObject, 1)), DomainError);
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const auto sc = generate_scene(SceneShape::Blob, 128, seed);
        const auto wrong = simulate_annotation(sc, make_archetype(ArchetypeKind::WrongObject, seed));
        CHECK(annotation_dsc(sc, wrong) < 0.05);
        CHECK(annotation_dsc(sc, wrong, *sc.decoy_reference) > 0.85);
        const auto inv = simulate_annotation(sc, make_archetype(ArchetypeKind::Inverted, seed));
        CHECK(annotation_dsc(sc, inv) < 0.2);
    }
}

TEST_CASE("archetype DSC distributions separate") {
    // Histogram overlap between diligent and spammer DSC, 1000 samples each.
    constexpr int kBins = 20;
    std::array<double, kBins> hd{}, hs{};
    const auto bin = [](double x) { return std::min(kBins - 1, static_cast<int>(x * kBins)); };
    for (int s = 1; s <= 1000; ++s) {
        const auto sc = generate_scene(static_cast<SceneShape>(s % 3), 96, 70000 + s);
        hd[bin(annotation_dsc(sc, simulate_annotation(sc, make_archetype(ArchetypeKind::Diligent, s))))] += 1e-3;
        hs[bin(annotation_dsc(sc, simulate_annotation(sc, make_archetype(ArchetypeKind::Spammer, s))))] += 1e-3;
    }
    double overlap = 0;
    for (int b = 0; b < kBins; ++b) overlap += std::min(hd[b], hs[b]);
    CHECK(overlap < 0.05);
}

TEST_CASE("simulated clickstreams are valid") {
    constexpr ArchetypeKind kinds[] = {ArchetypeKind::Diligent, ArchetypeKind::Sloppy,      ArchetypeKind::Spammer,
                                       ArchetypeKind::BoundingBox, ArchetypeKind::WrongObject, ArchetypeKind::Inverted};
    std::size_t gaps = 0, cadence = 0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const auto sc = generate_scene(static_cast<SceneShape>(seed % 3), 96, seed);
        for (auto kind : kinds) {
            INFO(to_string(kind) << " seed " << seed);
            const auto a = simulate_annotation(sc, make_archetype(kind, seed), "w7", "img3");
            const Clickstream& cs = a.clickstream;
            CHECK(cs.worker_id == "w7");
            CHECK(cs.image_id == "img3");
            CHECK(cs.canvas_width == 2 * cs.image_width);
            CHECK(parse_clickstream(serialize_clickstream(cs)) == cs);
            REQUIRE(cs.events.size() >= 2);
            CHECK(cs.events.back().target == Target::SaveButton);
            CHECK(cs.events.back().kind == EventKind::MouseUp);
            for (const Event& e : cs.events) {
                CHECK(e.canvas.x == e.image.x * kCanvasScale);
                CHECK(e.canvas.y == e.image.y * kCanvasScale);
            }
            REQUIRE(a.polygon.size() >= 3);
            // Every vertex of the saved contour was an event position.
            for (const Vec2& v : a.polygon.vertices) {
                const bool seen = std::any_of(cs.events.begin(), cs.events.end(), [&](const Event& e) {
                    return e.target == Target::Canvas && e.image == v;
                });
                CHECK(seen);
            }
            for (std::size_t i = 1; i < cs.events.size(); ++i) {
                const auto& p = cs.events[i - 1];
                const auto& e = cs.events[i];
                if (p.kind != EventKind::MouseMove || e.kind != EventKind::MouseMove) continue;
                ++gaps;
                const auto dt = e.t_ms - p.t_ms;
                if (dt >= 10 && dt <= 20) ++cadence;
            }
        }
    }
    CHECK(static_cast<double>(cadence) >= 0.99 * static_cast<double>(gaps));
}

TEST_CASE("sessions are deterministic") {
    const auto sc = generate_scene(SceneShape::Blob, 128, 8);
    for (int k = 0; k < 6; ++k) {
        const auto w = make_archetype(static_cast<ArchetypeKind>(k), 99);
        const auto a = simulate_annotation(sc, w);
        const auto b = simulate_annotation(sc, w);
        CHECK(a.clickstream == b.clickstream);
        CHECK(a.polygon == b.polygon);
    }
}

TEST_CASE("archetype validation") {
    WorkerArchetype w;
    w.speed = 0;
    CHECK_THROWS_AS(w.validate(), DomainError);
    w = {};
    w.correction_rate = 1.5;
    CHECK_THROWS_AS(w.validate(), DomainError);
    w = {};
    w.jitter_sigma = -1;
    CHECK_THROWS_AS(w.validate(), DomainError);
    for (int k = 0; k < 6; ++k) CHECK_NOTHROW(make_archetype(static_cast<ArchetypeKind>(k), 5).validate());
    for (std::string_view name : kArchetypeNames) CHECK(to_string(*parse_archetype(name)) == name);
    CHECK_FALSE(parse_archetype("lazy").has_value());
}

TEST_CASE("archetype mixes") {
    const auto mix = parse_mix("diligent=40, sloppy=20,spammer=25,bounding-box=10,inverted=5");
    REQUIRE(mix.parts.size() == 5);
    CHECK(mix_counts(mix, 20) == std::vector<std::size_t>{8, 4, 5, 2, 1});
    CHECK(mix_counts(mix, 0) == std::vector<std::size_t>{0, 0, 0, 0, 0});
    const auto thirds = parse_mix("diligent=1,sloppy=1,spammer=1");
    CHECK(mix_counts(thirds, 4) == std::vector<std::size_t>{2, 1, 1});
    for (std::size_t n = 0; n < 50; ++n) {
        const auto c = mix_counts(mix, n);
        CHECK(std::accumulate(c.begin(), c.end(), std::size_t{0}) == n);
    }
    CHECK_THROWS_AS(parse_mix("diligent"), ParseError);
    CHECK_THROWS_AS(parse_mix("careful=3"), ParseError);
    CHECK_THROWS_AS(parse_mix("diligent=x"), ParseError);
    CHECK_THROWS_AS(parse_mix("diligent=-1,spammer=2"), ParseError);
    CHECK_THROWS_AS(parse_mix("diligent=0"), ParseError);
}

TEST_CASE("datasets") {
    SECTION("all diligent") {
        const auto ds = build_dataset(10, 5, parse_mix("diligent=1"), 3);
        REQUIRE(ds.rows.size() == 50);
        std::vector<double> labels;
        for (const auto& r : ds.rows) labels.push_back(r.dsc);
        CHECK(summary_stats(labels).median > 0.9);
        for (std::size_t i = 0; i < ds.rows.size(); ++i) {
            CHECK(ds.rows[i].scene == i / 5);
            CHECK(ds.rows[i].worker == i % 5);
            CHECK(ds.rows[i].annotation.clickstream.worker_id == ds.worker_ids[i % 5]);
            CHECK(ds.rows[i].annotation.clickstream.image_id == ds.image_ids[i / 5]);
        }
    }
    SECTION("half spammers give two modes") {
        const auto ds = build_dataset(20, 10, parse_mix("diligent=50,spammer=50"), 4);
        std::vector<double> high, low;
        for (const auto& r : ds.rows) (ds.workers[r.worker].kind == ArchetypeKind::Diligent ? high : low).push_back(r.dsc);
        REQUIRE(high.size() == 100);
        REQUIRE(low.size() == 100);
        CHECK(summary_stats(high).median - summary_stats(low).median > 0.4);
        // Few labels between the modes.
        const auto mid = std::count_if(ds.rows.begin(), ds.rows.end(), [](const DatasetRow& r) { return r.dsc > 0.3 && r.dsc < 0.7; });
        CHECK(mid < 10);
    }
    SECTION("workers keep their archetype") {
        const auto ds = build_dataset(3, 20, parse_mix("diligent=40,sloppy=20,spammer=25,bounding-box=10,inverted=5"), 9);
        std::array<int, 6> n{};
        for (const auto& w : ds.workers) ++n[static_cast<int>(w.kind)];
        CHECK(n == std::array<int, 6>{8, 4, 5, 2, 0, 1});
    }
    SECTION("empty") {
        CHECK(build_dataset(5, 0, parse_mix("diligent=1"), 1).rows.empty());
        CHECK(build_dataset(0, 5, parse_mix("diligent=1"), 1).rows.empty());
    }
    SECTION("deterministic") {
        const auto a = build_dataset(4, 4, parse_mix("diligent=1,sloppy=1,spammer=1,bounding-box=1"), 21);
        const auto b = build_dataset(4, 4, parse_mix("diligent=1,sloppy=1,spammer=1,bounding-box=1"), 21);
        for (std::size_t i = 0; i < a.rows.size(); ++i) {
            CHECK(a.rows[i].annotation.clickstream == b.rows[i].annotation.clickstream);
            CHECK(a.rows[i].dsc == b.rows[i].dsc);
        }
    }
}
