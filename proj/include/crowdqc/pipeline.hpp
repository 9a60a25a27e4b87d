#pragma once

// Glue between the simulator, on-disk datasets, the regressor and fusion.

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "crowdqc/dataset.hpp"
#include "crowdqc/experiment.hpp"
#include "crowdqc/features.hpp"
#include "crowdqc/forest.hpp"
#include "crowdqc/simulator.hpp"
#include "crowdqc/validation.hpp"

namespace crowdqc {

inline Mask annotation_mask(const Polygon& p, int width, int height) {
    return p.size() >= 3 ? rasterize(p, width, height) : Mask(width, height);
}

/// Feature rows for a simulated dataset, in row order, without a disk round trip.
inline std::vector<FeatureRow> extract_simulated(const SimulatedDataset& ds, const ExtractOptions& opt = {}) {
    std::vector<GradientField> grads(ds.scenes.size());
    parallel_for(ds.scenes.size(), [&](std::size_t i) { grads[i] = gaussian_gradient(ds.scenes[i].image, opt.sigma); });
    std::vector<FeatureRow> rows(ds.rows.size());
    parallel_for(rows.size(), [&](std::size_t i) {
        const DatasetRow& r = ds.rows[i];
        rows[i] = {ds.worker_ids[r.worker], ds.image_ids[r.scene],
                   extract_features(r.annotation.clickstream, r.annotation.polygon, grads[r.scene], opt.features),
                   r.dsc};
    });
    return rows;
}

inline std::vector<FusionPool> pools_from_simulation(const SimulatedDataset& ds, std::span<const double> s_hat) {
    if (s_hat.size() != ds.rows.size()) throw DomainError("one estimate per annotation required");
    std::vector<FusionPool> pools(ds.scenes.size());
    for (std::size_t i = 0; i < ds.scenes.size(); ++i) {
        pools[i].image_id = ds.image_ids[i];
        pools[i].reference = ds.scenes[i].reference;
    }
    for (std::size_t k = 0; k < ds.rows.size(); ++k) {
        const DatasetRow& r = ds.rows[k];
        FusionPool& p = pools[r.scene];
        p.masks.push_back(annotation_mask(r.annotation.polygon, p.reference.width(), p.reference.height()));
        p.s_hat.push_back(s_hat[k]);
    }
    return pools;
}

/// Pools for every image of a dataset directory, joined with estimates by
/// (worker_id, image_id). Images without a reference get an empty one and a
/// NaN DSC in reports.
inline std::vector<FusionPool> load_fusion_pools(const DatasetIndex& idx, std::span<const EstimateRow> estimates) {
    std::map<std::pair<std::string, std::string>, double> s_hat;
    for (const auto& e : estimates) s_hat[{e.worker_id, e.image_id}] = e.s_hat;
    std::vector<FusionPool> pools;
    std::map<std::string, std::size_t> slot;
    for (const ImageEntry& e : idx.images) {
        slot[e.image_id] = pools.size();
        FusionPool p;
        p.image_id = e.image_id;
        if (!e.reference_path.empty()) {
            p.reference = load_mask(idx.root / e.reference_path);
        } else {
            const GrayImage img = load_gray(idx.root / e.image_path);
            p.reference = Mask(img.width(), img.height());
        }
        pools.push_back(std::move(p));
    }
    for (const AnnotationEntry& a : idx.annotations) {
        const auto it = s_hat.find({a.worker_id, a.image_id});
        if (it == s_hat.end()) throw ParseError("no estimate for " + a.worker_id + " on " + a.image_id);
        FusionPool& p = pools.at(slot.at(a.image_id));
        const Polygon poly = parse_polygon(read_file((idx.root / a.polygon_path).string()));
        p.masks.push_back(annotation_mask(poly, p.reference.width(), p.reference.height()));
        p.s_hat.push_back(it->second);
    }
    std::erase_if(pools, [](const FusionPool& p) { return p.masks.empty(); });
    return pools;
}

// ---------------------------------------------------------------------------
// Full experiment

struct ExperimentResult {
    std::vector<FeatureRow> features;
    CvReport cv;
    std::vector<EstimateRow> estimates;
    std::vector<FusionTrial> trials;
    std::vector<FusionSummary> summary;
    std::vector<SweepPoint> sweep;
};

/// Simulate, extract, grouped CV, out-of-sample estimates, fusion comparison
/// and the training-size sweep, all driven by config.seed.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    ExperimentResult res;
    const SimulatedDataset ds =
        build_dataset(cfg.images, cfg.workers, parse_mix(cfg.mix), derive_seed(cfg.seed, 1), {cfg.image_size, true});
    if (ds.rows.empty()) throw DomainError("experiment needs at least one image and one worker");
    ExtractOptions eo;
    eo.sigma = cfg.sigma;
    res.features = extract_simulated(ds, eo);
    const TrainingSet data = TrainingSet::from_rows(res.features);
    res.cv = grouped_cv(data, cfg.folds, cfg.forest, derive_seed(cfg.seed, 2));
    const auto est = image_grouped_estimates(data, cfg.folds, cfg.forest, derive_seed(cfg.seed, 3));
    for (std::size_t i = 0; i < est.size(); ++i)
        res.estimates.push_back({res.features[i].worker_id, res.features[i].image_id, est[i], res.features[i].dsc});
    FusionExperimentOptions fo;
    fo.lambdas = cfg.lambdas;
    fo.epsilon_t = cfg.epsilon_t;
    fo.seed = derive_seed(cfg.seed, 4);
    const auto pools = pools_from_simulation(ds, est);
    res.trials = run_fusion_experiment(pools, fo);
    res.summary = summarize_fusion(res.trials);
    res.sweep = training_size_sweep(data, cfg.sweep_sizes, cfg.folds, cfg.forest, derive_seed(cfg.seed, 5));
    return res;
}

inline void write_experiment(const std::filesystem::path& dir, const ExperimentResult& r) {
    std::filesystem::create_directories(dir);
    write_file((dir / "features.tsv").string(), serialize_feature_table(r.features));
    write_file((dir / "cv.tsv").string(), format_cv_report(r.cv));
    write_file((dir / "estimates.tsv").string(), serialize_estimates(r.estimates));
    write_file((dir / "fusion.tsv").string(), format_fusion_report(r.trials));
    write_file((dir / "fusion_summary.tsv").string(), format_fusion_summary(r.summary));
    write_file((dir / "sweep.tsv").string(), format_sweep(r.sweep));
}

}  // namespace crowdqc
