#pragma once

#include "meatlab/analysis.hpp"
#include "meatlab/config.hpp"
#include "meatlab/ensemble.hpp"
#include "meatlab/trainer.hpp"

#include <filesystem>
#include <ostream>
#include <vector>

namespace meat {

struct RunOptions {
    bool overwrite = false;          // clear a non-empty output directory instead of refusing
    std::ostream* progress = nullptr; // one line per epoch when set
};

struct StrategyOutcome {
    Strategy strategy = Strategy::none;
    std::vector<MetricsRecord> history; // one record per epoch >= the window start
    GapReport gap;
    Checkpoint final_model;
};

struct ExperimentResult {
    ExperimentConfig resolved;
    DatasetPair data;
    std::vector<MetricsRecord> raw_history;
    GapReport raw_gap;
    Checkpoint final_raw;
    Checkpoint best_raw;
    std::vector<StrategyOutcome> ensembles;

    const StrategyOutcome* find(Strategy s) const;
};

/// Builds the configured train/test pair (synthetic or IDX).
DatasetPair load_dataset(const DatasetDescriptor& desc);

/// The configuration actually used for a run: attack input ranges follow the
/// dataset's declared feature range and train.seed follows seed.
ExperimentConfig resolve_config(const ExperimentConfig& cfg, const DatasetPair& data);

/// Runs the full protocol and writes, under cfg.output_dir:
///   config.json        resolved configuration
///   metrics.jsonl      per-epoch raw records, then per-strategy ensemble records
///   checkpoints/       epoch_NNNN.ckpt every snapshot_cadence epochs
///   ensembles/         <strategy>_final.ckpt
///   gap_report.json    best/last/gap per strategy ("none" = raw trajectory)
///   robust_curves.csv  epoch x strategy test robust accuracy table
///   histograms.json    last-layer weight histograms (exports.histogram)
///   landscape_<s>.csv  loss grids for the raw and ensembled finals (exports.landscape)
ExperimentResult run_experiment(const ExperimentConfig& cfg, const RunOptions& options = {});

/// "alpha,beta,loss" rows, first direction coefficient outermost.
void write_landscape_csv(const std::filesystem::path& path, const LandscapeGrid& grid);
std::string histogram_to_json(const Histogram& h);
std::string gap_to_json(const GapReport& g);

} // namespace meat
