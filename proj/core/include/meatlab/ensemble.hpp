#pragma once

#include "meatlab/checkpoint.hpp"
#include "meatlab/dataset.hpp"
#include "meatlab/model.hpp"

#include <span>
#include <string>
#include <vector>

namespace meat {

enum class Strategy { none, wa_mean, ema, meat_median };

const char* to_string(Strategy s);
Strategy strategy_from_string(const std::string& name);

struct EnsembleConfig {
    // Each listed strategy is finalized side by side from the same trajectory.
    std::vector<Strategy> strategies{Strategy::meat_median};
    double start_fraction = 0.5;
    double ema_decay = 0.9; // tau, applied once per snapshot

    void validate() const;
    /// First epoch of the ensemble window for a run of `total_epochs`.
    int start_epoch(int total_epochs) const;

    bool operator==(const EnsembleConfig&) const = default;
};

/// running + (fresh - running) / (count + 1): folds one more snapshot into a mean of `count`.
NamedParams wa_update(const NamedParams& running, std::size_t count, const NamedParams& fresh);

/// tau * running + (1 - tau) * fresh.
NamedParams ema_update(const NamedParams& running, const NamedParams& fresh, double tau);

/// Per-coordinate median across aligned snapshots. Even counts take the mean of
/// the two middle order statistics. Input order does not affect the result.
NamedParams median_params(std::span<const NamedParams> snapshots);

/// Median over every stored snapshot with start_epoch <= epoch <= upto_epoch.
NamedParams meat_median(const CheckpointStore& store, int start_epoch, int upto_epoch);

/// Fresh BN running statistics for `params`: each BN layer gets the exact mean
/// and unbiased variance of its inputs over every row of `batches`, with the BN
/// layers before it already using their recomputed statistics.
BnStats recalibrate_bn(const ModelSpec& spec, const NamedParams& params, std::span<const Tensor> batches);

/// Builds the strategy's model for the window ending at upto_epoch: the live
/// checkpoint for `none`, otherwise the combined parameters with recalibrated BN.
Checkpoint finalize(const CheckpointStore& store, Strategy strategy, const EnsembleConfig& cfg, const ModelSpec& spec,
                    int start_epoch, int upto_epoch, std::span<const Tensor> calibration_batches);

} // namespace meat
