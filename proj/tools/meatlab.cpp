// meatlab: command-line runner for adversarial training experiments.
//
//   meatlab train      CONFIG [--<field> VALUE ...] [--overwrite] [--quiet]
//   meatlab ensemble   CONFIG [--<field> VALUE ...] [--upto EPOCH]
//   meatlab eval       CONFIG --checkpoint PATH [--<field> VALUE ...]
//   meatlab landscape  CONFIG --checkpoint PATH [--out CSV] [--<field> VALUE ...]
//   meatlab hist       CONFIG --checkpoint PATH [--selector REGEX] [--<field> VALUE ...]
//
// Every config field can be overridden with a flag named after its dotted
// path, e.g. --train.total_epochs 30 or --ensemble.strategies wa_mean,meat_median.
// MEATLAB_SEED and MEATLAB_OUTPUT_DIR apply before the flags.

#include "meatlab/analysis.hpp"
#include "meatlab/checkpoint.hpp"
#include "meatlab/checkpoint_io.hpp"
#include "meatlab/config.hpp"
#include "meatlab/ensemble.hpp"
#include "meatlab/errors.hpp"
#include "meatlab/experiment.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>

namespace fs = std::filesystem;
using namespace meat;

namespace {

struct Common {
    std::string config_path;
    std::map<std::string, std::string> overrides;
};

void add_common(CLI::App* cmd, Common& common) {
    cmd->add_option("config", common.config_path, "experiment config (JSON); defaults apply when omitted");
    for (const auto& path : config_field_paths()) {
        cmd->add_option_function<std::string>(
            "--" + path, [&common, path](const std::string& v) { common.overrides[path] = v; }, "override " + path);
    }
}

ExperimentConfig resolve(const Common& common) {
    ExperimentConfig cfg = common.config_path.empty() ? default_experiment_config() : load_config(common.config_path);
    cfg = apply_environment(cfg);
    cfg = apply_overrides(cfg, {common.overrides.begin(), common.overrides.end()});
    cfg.validate();
    return cfg;
}

ModelState load_model(const ExperimentConfig& cfg, const std::string& path) {
    const Checkpoint c = load_checkpoint(path);
    return {cfg.model, c.params, c.bn};
}

int run_train(const Common& common, bool overwrite, bool quiet) {
    const ExperimentConfig cfg = resolve(common);
    RunOptions opts;
    opts.overwrite = overwrite;
    opts.progress = quiet ? nullptr : &std::cerr;
    const ExperimentResult r = run_experiment(cfg, opts);
    std::printf("%-12s best %.4f @ %d  last %.4f  gap %.4f\n", "none", r.raw_gap.robust.best, r.raw_gap.robust.best_epoch,
                r.raw_gap.robust.last, r.raw_gap.robust.gap);
    for (const auto& e : r.ensembles) {
        if (e.history.empty()) continue;
        std::printf("%-12s best %.4f @ %d  last %.4f  gap %.4f\n", to_string(e.strategy), e.gap.robust.best,
                    e.gap.robust.best_epoch, e.gap.robust.last, e.gap.robust.gap);
    }
    std::printf("artifacts in %s\n", cfg.output_dir.c_str());
    return 0;
}

int run_ensemble(const Common& common, int upto) {
    const ExperimentConfig raw = resolve(common);
    const DatasetPair data = load_dataset(raw.dataset);
    const ExperimentConfig cfg = resolve_config(raw, data);
    const fs::path run = cfg.output_dir;
    if (!fs::is_directory(run / "checkpoints")) throw IoError("no checkpoints under " + run.string());
    const DiskCheckpointStore store(run / "checkpoints");
    const auto epochs = store.epochs();
    if (epochs.empty()) throw PreconditionError("checkpoint directory " + (run / "checkpoints").string() + " is empty");
    if (upto < 0) upto = epochs.back();
    const int start = cfg.ensemble.start_epoch(cfg.train.total_epochs);
    const auto calibration = fixed_batches(data.train, cfg.train.batch_size);
    fs::create_directories(run / "ensembles");
    for (Strategy s : cfg.ensemble.strategies) {
        const Checkpoint ck = finalize(store, s, cfg.ensemble, cfg.model, start, upto, calibration);
        const fs::path out = run / "ensembles" / (std::string(to_string(s)) + "_upto_" + std::to_string(upto) + ".ckpt");
        save_checkpoint(ck, out);
        const ModelState m{cfg.model, ck.params, ck.bn};
        Rng rng = eval_rng(cfg.train, upto);
        const double clean = accuracy(m, data.test, nullptr, rng);
        const double robust = accuracy(m, data.test, &cfg.train.eval_attack, rng);
        std::printf("%-12s window [%d, %d]  clean %.4f  robust %.4f  -> %s\n", to_string(s), start, upto, clean, robust,
                    out.string().c_str());
    }
    return 0;
}

int run_eval(const Common& common, const std::string& checkpoint) {
    const ExperimentConfig raw = resolve(common);
    const DatasetPair data = load_dataset(raw.dataset);
    const ExperimentConfig cfg = resolve_config(raw, data);
    const ModelState m = load_model(cfg, checkpoint);
    Rng rng(cfg.seed);
    const double clean = accuracy(m, data.test, nullptr, rng);
    const double robust = accuracy(m, data.test, &cfg.train.eval_attack, rng);
    std::printf("{\"checkpoint\": \"%s\", \"test_clean_acc\": %.6f, \"test_robust_acc\": %.6f}\n", checkpoint.c_str(),
                clean, robust);
    return 0;
}

int run_landscape(const Common& common, const std::string& checkpoint, std::string out) {
    const ExperimentConfig raw = resolve(common);
    const DatasetPair data = load_dataset(raw.dataset);
    const ExperimentConfig cfg = resolve_config(raw, data);
    const ModelState m = load_model(cfg, checkpoint);
    const AttackConfig* attack = cfg.landscape.adversarial ? &cfg.train.eval_attack : nullptr;
    const LandscapeGrid grid = landscape_grid(m, data.test, cfg.landscape, attack);
    if (out.empty()) out = (fs::path(cfg.output_dir) / "landscape.csv").string();
    if (auto parent = fs::path(out).parent_path(); !parent.empty()) fs::create_directories(parent);
    write_landscape_csv(out, grid);
    std::printf("center %.6f  min %.6f  max %.6f  variance %.6g -> %s\n", grid.center(), grid.min(), grid.max(),
                grid.variance(), out.c_str());
    return 0;
}

int run_hist(const Common& common, const std::string& checkpoint, std::string selector) {
    const ExperimentConfig cfg = resolve(common);
    const Checkpoint c = load_checkpoint(checkpoint);
    if (selector.empty()) selector = last_dense_weight_selector(cfg.model);
    const double r = cfg.exports.histogram_range;
    std::cout << histogram_to_json(weight_histogram(c.params, selector, cfg.exports.histogram_bins, -r, r));
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"meatlab: adversarial training with checkpoint ensembles"};
    app.require_subcommand(1);

    Common train_c, ens_c, eval_c, land_c, hist_c;
    bool overwrite = false, quiet = false;
    int upto = -1;
    std::string eval_ckpt, land_ckpt, land_out, hist_ckpt, hist_selector;

    auto* train = app.add_subcommand("train", "run adversarial training and finalize the configured ensembles");
    add_common(train, train_c);
    train->add_flag("--overwrite", overwrite, "replace a non-empty output directory");
    train->add_flag("--quiet", quiet, "no per-epoch progress on stderr");

    auto* ensemble = app.add_subcommand("ensemble", "finalize ensembles from the checkpoints of an existing run");
    add_common(ensemble, ens_c);
    ensemble->add_option("--upto", upto, "last epoch of the window (default: newest checkpoint)");

    auto* eval = app.add_subcommand("eval", "clean and robust test accuracy of a checkpoint");
    add_common(eval, eval_c);
    eval->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();

    auto* land = app.add_subcommand("landscape", "loss landscape grid around a checkpoint");
    add_common(land, land_c);
    land->add_option("--checkpoint", land_ckpt, "checkpoint file")->required();
    land->add_option("--out", land_out, "CSV path (default: <output_dir>/landscape.csv)");

    auto* hist = app.add_subcommand("hist", "weight histogram of a checkpoint as JSON");
    add_common(hist, hist_c);
    hist->add_option("--checkpoint", hist_ckpt, "checkpoint file")->required();
    hist->add_option("--selector", hist_selector, "regex over layer.name keys (default: last dense weight)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train) return run_train(train_c, overwrite, quiet);
        if (*ensemble) return run_ensemble(ens_c, upto);
        if (*eval) return run_eval(eval_c, eval_ckpt);
        if (*land) return run_landscape(land_c, land_ckpt, land_out);
        if (*hist) return run_hist(hist_c, hist_ckpt, hist_selector);
    } catch (const meat::Error& e) {
        std::cerr << "meatlab: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
