#pragma once

// On-disk dataset layout and the small delimited tables exchanged between
// pipeline stages.
//
//   DIR/images.tsv                image_id, shape, image, reference
//   DIR/manifest.tsv              image_id, worker_id, archetype, clickstream, polygon, dsc
//   DIR/<image_id>/image.pgm
//   DIR/<image_id>/reference.pgm
//   DIR/<image_id>/<worker_id>.clicks
//   DIR/<image_id>/<worker_id>.poly
//
// Paths inside the tables are relative to DIR.

#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "crowdqc/clickstream.hpp"
#include "crowdqc/core.hpp"
#include "crowdqc/features.hpp"
#include "crowdqc/geometry.hpp"
#include "crowdqc/imaging.hpp"
#include "crowdqc/pnm.hpp"
#include "crowdqc/simulator.hpp"

namespace crowdqc {

inline constexpr std::string_view kDatasetHeader = "# crowdqc-dataset v1";

struct ImageEntry {
    std::string image_id;
    std::string shape;  ///< free text, "-" when unknown
    std::string image_path;
    std::string reference_path;  ///< empty when no reference exists
};

struct AnnotationEntry {
    std::string image_id;
    std::string worker_id;
    std::string archetype;  ///< "-" when unknown
    std::string clickstream_path;
    std::string polygon_path;
    std::optional<double> dsc;
};

struct DatasetIndex {
    std::filesystem::path root;
    std::vector<ImageEntry> images;
    std::vector<AnnotationEntry> annotations;

    const ImageEntry& image(const std::string& id) const {
        for (const auto& e : images)
            if (e.image_id == id) return e;
        throw ParseError("image '" + id + "' missing from images.tsv");
    }
};

namespace detail {

inline std::string optional_number(const std::optional<double>& v) { return v ? format_number(*v) : "NA"; }

inline std::optional<double> parse_optional_number(const std::string& s, std::size_t line) {
    if (s == "NA") return std::nullopt;
    return parse_double(s, line);
}

// Data lines of a tab table after the header comment and column line.
inline std::vector<std::vector<std::string>> read_table(const std::string& text, std::string_view header,
                                                        const std::vector<std::string>& columns) {
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    bool saw_header = header.empty();
    bool saw_columns = false;
    std::vector<std::vector<std::string>> rows;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line[0] == '#') {
            if (!saw_header && line == header) saw_header = true;
            continue;
        }
        auto cells = split_tabs(line);
        if (!saw_columns) {
            if (!saw_header) throw SchemaError("missing header '" + std::string(header) + "'");
            if (cells != columns) throw SchemaError("unexpected columns at line " + std::to_string(lineno));
            saw_columns = true;
            continue;
        }
        if (cells.size() != columns.size()) throw ParseError("expected " + std::to_string(columns.size()) + " fields", lineno);
        rows.push_back(std::move(cells));
    }
    if (!saw_columns) throw SchemaError("table has no column line");
    return rows;
}

inline std::string join_tabs(const std::vector<std::string>& cells) {
    std::string out;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) out += '\t';
        out += cells[i];
    }
    return out + "\n";
}

inline const std::vector<std::string>& image_columns() {
    static const std::vector<std::string> c = {"image_id", "shape", "image", "reference"};
    return c;
}

inline const std::vector<std::string>& manifest_columns() {
    static const std::vector<std::string> c = {"image_id", "worker_id", "archetype", "clickstream", "polygon", "dsc"};
    return c;
}

}  // namespace detail

/// Writes a simulated dataset; the directory is created if needed.
inline void write_dataset(const std::filesystem::path& dir, const SimulatedDataset& ds) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    std::string images = std::string(kDatasetHeader) + "\n" + detail::join_tabs(detail::image_columns());
    for (std::size_t i = 0; i < ds.scenes.size(); ++i) {
        const std::string& id = ds.image_ids[i];
        fs::create_directories(dir / id);
        write_file((dir / id / "image.pgm").string(), encode_gray_pgm(ds.scenes[i].image));
        write_file((dir / id / "reference.pgm").string(), encode_mask_pgm(ds.scenes[i].reference));
        images += detail::join_tabs({id, std::string(to_string(ds.shapes[i])), id + "/image.pgm", id + "/reference.pgm"});
    }
    write_file((dir / "images.tsv").string(), images);

    std::string manifest = std::string(kDatasetHeader) + "\n" + detail::join_tabs(detail::manifest_columns());
    for (const DatasetRow& r : ds.rows) {
        const std::string& img = ds.image_ids[r.scene];
        const std::string& wid = ds.worker_ids[r.worker];
        const std::string clicks = img + "/" + wid + ".clicks";
        const std::string poly = img + "/" + wid + ".poly";
        write_file((dir / clicks).string(), serialize_clickstream(r.annotation.clickstream));
        write_file((dir / poly).string(), serialize_polygon(r.annotation.polygon));
        manifest += detail::join_tabs(
            {img, wid, std::string(to_string(ds.workers[r.worker].kind)), clicks, poly, format_number(r.dsc)});
    }
    write_file((dir / "manifest.tsv").string(), manifest);
}

inline DatasetIndex read_dataset_index(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    if (!fs::exists(dir / "manifest.tsv") || !fs::exists(dir / "images.tsv"))
        throw std::runtime_error("not a dataset directory: " + dir.string());
    DatasetIndex idx;
    idx.root = dir;
    for (auto& c : detail::read_table(read_file((dir / "images.tsv").string()), kDatasetHeader, detail::image_columns()))
        idx.images.push_back({c[0], c[1], c[2], c[3] == "-" ? std::string() : c[3]});
    std::size_t line = 2;
    for (auto& c : detail::read_table(read_file((dir / "manifest.tsv").string()), kDatasetHeader,
                                      detail::manifest_columns())) {
        ++line;
        idx.annotations.push_back({c[0], c[1], c[2], c[3], c[4], detail::parse_optional_number(c[5], line)});
    }
    return idx;
}

inline GrayImage load_gray(const std::filesystem::path& p) { return to_gray(read_pnm(p.string())); }

inline Mask load_mask(const std::filesystem::path& p) { return decode_mask_pgm(read_file(p.string())); }

// ---------------------------------------------------------------------------
// Feature extraction over a dataset directory

struct ExtractOptions {
    double sigma = 1.0;
    FeatureOptions features;
};

/// One feature row per manifest entry, in manifest order. The dsc column is
/// recomputed from the reference mask when one exists.
inline std::vector<FeatureRow> extract_dataset(const DatasetIndex& idx, const ExtractOptions& opt = {}) {
    struct Loaded {
        GradientField grad;
        std::optional<Mask> reference;
    };
    std::map<std::string, Loaded> images;
    for (const ImageEntry& e : idx.images) {
        Loaded l{gaussian_gradient(load_gray(idx.root / e.image_path), opt.sigma), std::nullopt};
        if (!e.reference_path.empty()) l.reference = load_mask(idx.root / e.reference_path);
        images.emplace(e.image_id, std::move(l));
    }
    std::vector<FeatureRow> rows(idx.annotations.size());
    parallel_for(rows.size(), [&](std::size_t i) {
        const AnnotationEntry& a = idx.annotations[i];
        const auto it = images.find(a.image_id);
        if (it == images.end()) throw ParseError("manifest references unknown image '" + a.image_id + "'");
        const Clickstream cs = parse_clickstream(read_file((idx.root / a.clickstream_path).string()));
        const Polygon poly = parse_polygon(read_file((idx.root / a.polygon_path).string()));
        FeatureRow& r = rows[i];
        r.worker_id = a.worker_id;
        r.image_id = a.image_id;
        r.features = extract_features(cs, poly, it->second.grad, opt.features);
        if (it->second.reference) {
            const Mask& ref = *it->second.reference;
            const Mask m = poly.size() >= 3 ? rasterize(poly, ref.width(), ref.height()) : Mask(ref.width(), ref.height());
            r.dsc = dice(m, ref);
        } else {
            r.dsc = a.dsc;
        }
    });
    return rows;
}

// ---------------------------------------------------------------------------
// Quality estimates table: worker_id, image_id, s_hat, dsc

struct EstimateRow {
    std::string worker_id;
    std::string image_id;
    double s_hat = 0.0;
    std::optional<double> dsc;

    bool operator==(const EstimateRow&) const = default;
};

inline const std::vector<std::string>& estimate_columns() {
    static const std::vector<std::string> c = {"worker_id", "image_id", "s_hat", "dsc"};
    return c;
}

inline std::string serialize_estimates(std::span<const EstimateRow> rows) {
    std::string out = detail::join_tabs(estimate_columns());
    for (const auto& r : rows)
        out += detail::join_tabs({r.worker_id, r.image_id, format_number(r.s_hat), detail::optional_number(r.dsc)});
    return out;
}

inline std::vector<EstimateRow> parse_estimates(const std::string& text) {
    std::vector<EstimateRow> out;
    std::size_t line = 1;
    for (auto& c : detail::read_table(text, "", estimate_columns())) {
        ++line;
        out.push_back({c[0], c[1], detail::parse_double(c[2], line), detail::parse_optional_number(c[3], line)});
    }
    return out;
}

}  // namespace crowdqc
