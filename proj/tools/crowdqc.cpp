// crowdqc: command-line front end for simulation, feature extraction,
// training, estimation, fusion, cost tables and experiments.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "crowdqc/crowdqc.hpp"

namespace fs = std::filesystem;
using namespace crowdqc;

namespace {

enum ExitCode : int {
    kOk = 0,
    kInternal = 1,
    kUsage = 2,
    kMissingInput = 3,
    kSchemaMismatch = 4,
    kParseFailure = 5,
    kDomainFailure = 6,
    kIoFailure = 7,
};

class MissingInput : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::string read_input(const std::string& path) {
    if (!fs::is_regular_file(path)) throw MissingInput("missing input file: " + path);
    return read_file(path);
}

DatasetIndex open_dataset(const std::string& dir) {
    if (!fs::is_regular_file(fs::path(dir) / "manifest.tsv") || !fs::is_regular_file(fs::path(dir) / "images.tsv"))
        throw MissingInput("missing dataset (manifest.tsv, images.tsv): " + dir);
    return read_dataset_index(dir);
}

void write_output(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    if (const auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
    write_file(path, text);
}

// ---------------------------------------------------------------------------

struct SimulateArgs {
    std::size_t images = 20;
    std::size_t workers = 10;
    std::string mix = "diligent=40,sloppy=20,spammer=25,bounding-box=10,inverted=5";
    std::uint64_t seed = 42;
    int size = 128;
    bool no_decoy = false;
    std::string out;
};

int cmd_simulate(const SimulateArgs& a) {
    DatasetOptions opt;
    opt.image_size = a.size;
    opt.with_decoy = !a.no_decoy;
    const auto ds = build_dataset(a.images, a.workers, parse_mix(a.mix), a.seed, opt);
    write_dataset(a.out, ds);
    std::cerr << "wrote " << ds.rows.size() << " annotations of " << ds.scenes.size() << " images to " << a.out << "\n";
    return kOk;
}

struct ExtractArgs {
    std::string dataset;
    double sigma = 1.0;
    double tolerance = 0.0;
    std::string out;
};

int cmd_extract(const ExtractArgs& a) {
    ExtractOptions opt;
    opt.sigma = a.sigma;
    opt.features.classifier.tolerance = a.tolerance;
    const auto rows = extract_dataset(open_dataset(a.dataset), opt);
    write_output(a.out, serialize_feature_table(rows));
    return kOk;
}

struct TrainArgs {
    std::string features;
    ForestParams forest;
    std::uint64_t seed = 1;
    std::string out;
};

int cmd_train(const TrainArgs& a) {
    const auto rows = parse_feature_table(read_input(a.features));
    const Forest f = train(TrainingSet::from_rows(rows), a.forest, a.seed);
    write_output(a.out, serialize_forest(f));
    return kOk;
}

struct EstimateArgs {
    std::string model;
    std::string features;
    std::string out;
};

int cmd_estimate(const EstimateArgs& a) {
    const Forest f = parse_forest(read_input(a.model));
    const auto rows = parse_feature_table(read_input(a.features));
    std::vector<EstimateRow> est;
    for (const auto& r : rows) est.push_back({r.worker_id, r.image_id, predict(f, r.features), r.dsc});
    write_output(a.out, serialize_estimates(est));
    return kOk;
}

struct FuseArgs {
    std::string method = "cw-mv";
    std::vector<std::size_t> lambdas = {1};
    double epsilon_t = 0.9;
    std::string dataset;
    std::string estimates;
    std::uint64_t seed = 1;
    std::string out;
    std::string summary;
};

int cmd_fuse(const FuseArgs& a) {
    FusionExperimentOptions opt;
    opt.methods.clear();
    std::string list = a.method;
    for (std::size_t pos = 0; pos <= list.size();) {
        const auto comma = std::min(list.find(',', pos), list.size());
        const std::string name = list.substr(pos, comma - pos);
        const auto m = parse_fusion_method(name);
        if (!m) throw CLI::ValidationError("--method", "unknown fusion method '" + name + "'");
        opt.methods.push_back(*m);
        pos = comma + 1;
    }
    opt.lambdas = a.lambdas;
    opt.epsilon_t = a.epsilon_t;
    opt.seed = a.seed;
    const auto est = parse_estimates(read_input(a.estimates));
    const auto pools = load_fusion_pools(open_dataset(a.dataset), est);
    const auto trials = run_fusion_experiment(pools, opt);
    write_output(a.out, format_fusion_report(trials));
    if (!a.summary.empty()) write_output(a.summary, format_fusion_summary(summarize_fusion(trials)));
    return kOk;
}

struct CostArgs {
    std::string params;
    double max_a = 10000;
    double step = 100;
    double unit_cost = 1.0;
    std::string out;
};

int cmd_cost(const CostArgs& a) {
    const CostScenario sc = parse_cost_params(read_input(a.params));
    for (const auto& w : sc.warnings) std::cerr << "warning: " << w << "\n";
    std::string out = "a\tproposed\tbaseline\tmanual_grading\n";
    for (const CostRow& r : cost_table(sc, a.max_a, a.step, a.unit_cost))
        out += format_number(r.a) + "\t" + format_number(r.proposed) + "\t" + format_number(r.baseline) + "\t" +
               format_number(r.manual_grading) + "\n";
    const auto pp = sc.params_for(CostMethod::Proposed);
    const auto pb = sc.params_for(CostMethod::Baseline);
    const auto pm = sc.params_for(CostMethod::ManualGrading);
    const auto note = [](const char* name, std::optional<std::int64_t> v) {
        return std::string("# break_even ") + name + "=" + (v ? std::to_string(*v) : std::string("none")) + "\n";
    };
    out += note("proposed_vs_baseline", break_even(CostMethod::Proposed, pp, CostMethod::Baseline, pb));
    out += note("proposed_vs_manual_grading", break_even(CostMethod::Proposed, pp, CostMethod::ManualGrading, pm));
    write_output(a.out, out);
    return kOk;
}

struct ExperimentArgs {
    std::string config;
    std::string out;
};

int cmd_experiment(const ExperimentArgs& a) {
    ExperimentConfig cfg = parse_experiment_config(read_input(a.config));
    if (!a.out.empty()) cfg.out = a.out;
    const ExperimentResult r = run_experiment(cfg);
    write_experiment(cfg.out, r);
    std::cerr << format_fusion_summary(r.summary) << "# mean_r2=" << format_number(r.cv.mean_r2) << "\n";
    return kOk;
}

struct CvArgs {
    std::string features;
    std::size_t folds = 10;
    ForestParams forest;
    std::uint64_t seed = 1;
    std::string out;
};

int cmd_cv(const CvArgs& a) {
    const auto rows = parse_feature_table(read_input(a.features));
    write_output(a.out, format_cv_report(grouped_cv(TrainingSet::from_rows(rows), a.folds, a.forest, a.seed)));
    return kOk;
}

struct SelectArgs {
    std::string features;
    SfsOptions sfs;
    std::string out;
};

int cmd_select(const SelectArgs& a) {
    const auto rows = parse_feature_table(read_input(a.features));
    const SfsResult r = sfs_select(TrainingSet::from_rows(rows), a.sfs);
    std::string out = "step\tfeature\tcriterion\n0\t-\t" + format_number(r.baseline) + "\n";
    for (std::size_t i = 0; i < r.selected.size(); ++i)
        out += std::to_string(i + 1) + "\t" + feature_names()[r.selected[i]] + "\t" + format_number(r.criterion[i]) + "\n";
    write_output(a.out, out);
    return kOk;
}

void add_forest_options(CLI::App* cmd, ForestParams& p) {
    cmd->add_option("--trees", p.n_trees, "Number of trees")->check(CLI::PositiveNumber);
    cmd->add_option("--min-leaf", p.min_samples_leaf, "Minimum samples per leaf")->check(CLI::PositiveNumber);
    cmd->add_option("--max-depth", p.max_depth, "Maximum depth (0: unlimited)");
    cmd->add_option("--max-features", p.max_features, "Features tried per split (0: a third)");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Quality estimation and fusion of crowd-sourced segmentations from clickstreams"};
    app.require_subcommand(1);

    SimulateArgs sim;
    auto* c_sim = app.add_subcommand("simulate", "Generate a synthetic dataset");
    c_sim->add_option("--images", sim.images, "Number of scenes");
    c_sim->add_option("--workers", sim.workers, "Number of workers (each annotates every scene)");
    c_sim->add_option("--mix", sim.mix, "Archetype weights, e.g. diligent=40,spammer=60");
    c_sim->add_option("--seed", sim.seed, "Random seed");
    c_sim->add_option("--size", sim.size, "Image side length in pixels");
    c_sim->add_flag("--no-decoy", sim.no_decoy, "Scenes without a decoy object");
    c_sim->add_option("--out", sim.out, "Output directory")->required();

    ExtractArgs ext;
    auto* c_ext = app.add_subcommand("extract", "Compute clickstream and image features");
    c_ext->add_option("--dataset", ext.dataset, "Dataset directory")->required();
    c_ext->add_option("--sigma", ext.sigma, "Gaussian derivative scale")->check(CLI::PositiveNumber);
    c_ext->add_option("--tolerance", ext.tolerance, "Stroke classification match radius (canvas px)");
    c_ext->add_option("--out", ext.out, "Feature table (default stdout)");

    TrainArgs tr;
    auto* c_tr = app.add_subcommand("train", "Train the DSC regressor");
    c_tr->add_option("--features", tr.features, "Feature table with true DSC")->required();
    add_forest_options(c_tr, tr.forest);
    c_tr->add_option("--seed", tr.seed, "Random seed");
    c_tr->add_option("--out", tr.out, "Model file (default stdout)");

    EstimateArgs est;
    auto* c_est = app.add_subcommand("estimate", "Estimate DSC for feature rows");
    c_est->add_option("--model", est.model, "Model file")->required();
    c_est->add_option("--features", est.features, "Feature table")->required();
    c_est->add_option("--out", est.out, "Estimates table (default stdout)");

    FuseArgs fu;
    auto* c_fu = app.add_subcommand("fuse", "Merge annotations per image");
    c_fu->add_option("--method", fu.method, "mv, cw-mv, staple, staple-qc (comma-separated for several)");
    c_fu->add_option("--lambda", fu.lambdas, "Annotations fused per image (repeatable)")->expected(1, -1);
    c_fu->add_option("--epsilon-t", fu.epsilon_t, "Acceptance threshold on estimated DSC")->check(CLI::Range(0.0, 0.999999));
    c_fu->add_option("--dataset", fu.dataset, "Dataset directory")->required();
    c_fu->add_option("--estimates", fu.estimates, "Estimates table")->required();
    c_fu->add_option("--seed", fu.seed, "Seed for the order annotations are drawn in");
    c_fu->add_option("--out", fu.out, "Per-image report (default stdout)");
    c_fu->add_option("--summary", fu.summary, "Per-method summary table");

    CostArgs co;
    auto* c_co = app.add_subcommand("cost", "Tabulate campaign costs against the number of segmentations");
    c_co->add_option("--params", co.params, "Parameter file (key = value)")->required();
    c_co->add_option("--max-a", co.max_a, "Largest number of requested segmentations")->check(CLI::NonNegativeNumber);
    c_co->add_option("--step", co.step, "Table step in a")->check(CLI::PositiveNumber);
    c_co->add_option("--unit-cost", co.unit_cost, "Currency per annotation task");
    c_co->add_option("--out", co.out, "Cost table (default stdout)");

    ExperimentArgs ex;
    auto* c_ex = app.add_subcommand("experiment", "Simulate, evaluate and compare fusion methods end to end");
    c_ex->add_option("--config", ex.config, "Experiment configuration")->required();
    c_ex->add_option("--out", ex.out, "Output directory (overrides the config)");

    CvArgs cv;
    auto* c_cv = app.add_subcommand("cv", "Worker- and image-grouped cross-validation");
    c_cv->add_option("--features", cv.features, "Feature table with true DSC")->required();
    c_cv->add_option("--folds", cv.folds, "Number of folds")->check(CLI::Range(2, 1000));
    add_forest_options(c_cv, cv.forest);
    c_cv->add_option("--seed", cv.seed, "Random seed");
    c_cv->add_option("--out", cv.out, "CV report (default stdout)");

    SelectArgs se;
    auto* c_se = app.add_subcommand("select", "Sequential forward feature selection");
    c_se->add_option("--features", se.features, "Feature table with true DSC")->required();
    c_se->add_option("--max-features", se.sfs.max_features, "Stop after this many (0: no limit)");
    c_se->add_option("--penalty", se.sfs.penalty, "Criterion penalty per feature");
    c_se->add_option("--folds", se.sfs.folds, "Inner folds")->check(CLI::Range(2, 1000));
    c_se->add_option("--trees", se.sfs.forest.n_trees, "Trees per inner model")->check(CLI::PositiveNumber);
    c_se->add_option("--seed", se.sfs.seed, "Random seed");
    c_se->add_option("--out", se.out, "Selection table (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kUsage;
    }

    try {
        if (*c_sim) return cmd_simulate(sim);
        if (*c_ext) return cmd_extract(ext);
        if (*c_tr) return cmd_train(tr);
        if (*c_est) return cmd_estimate(est);
        if (*c_fu) return cmd_fuse(fu);
        if (*c_co) return cmd_cost(co);
        if (*c_ex) return cmd_experiment(ex);
        if (*c_cv) return cmd_cv(cv);
        if (*c_se) return cmd_select(se);
    } catch (const CLI::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const MissingInput& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kMissingInput;
    } catch (const SchemaError& e) {
        std::cerr << "schema error: " << e.what() << "\n";
        return kSchemaMismatch;
    } catch (const ParseError& e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return kParseFailure;
    } catch (const DomainError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kDomainFailure;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return kIoFailure;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kInternal;
    }
    return kUsage;
}
