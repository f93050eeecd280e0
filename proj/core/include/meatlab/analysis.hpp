#pragma once

#include "meatlab/attack.hpp"
#include "meatlab/dataset.hpp"
#include "meatlab/model.hpp"
#include "meatlab/trainer.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace meat {

/// Fraction of examples whose argmax logit equals the label, after the attack
/// when one is given. Evaluates in batches with BN in eval mode.
double accuracy(const ModelState& model, const Dataset& data, const AttackConfig* attack, Rng& rng,
                std::size_t batch_size = 256);

struct GapTriple {
    int best_epoch = 0;
    double best = 0.0;
    double last = 0.0;
    double gap = 0.0; // best - last

    bool operator==(const GapTriple&) const = default;
};

struct GapReport {
    GapTriple robust;
    GapTriple clean;

    bool operator==(const GapReport&) const = default;
};

/// Best-versus-last accuracy gap over a history; the earliest epoch wins ties for best.
GapReport gap_report(std::span<const MetricsRecord> history);

struct Histogram {
    double lo = 0.0;
    double hi = 0.0;
    std::vector<std::uint64_t> counts;
    std::uint64_t total = 0;
    double mean = 0.0;
    double stddev = 0.0; // sample standard deviation of the selected coordinates
    std::vector<std::string> selected; // keys of the tensors that matched

    double bin_width() const { return counts.empty() ? 0.0 : (hi - lo) / static_cast<double>(counts.size()); }
};

/// Histogram over every coordinate of the tensors whose "layer.name" key fully
/// matches the ECMAScript regex `selector`. Values outside [lo, hi) land in the edge bins.
Histogram weight_histogram(const NamedParams& params, const std::string& selector, std::size_t bins, double lo,
                           double hi);

/// Selector matching the weight matrix of the last dense layer.
std::string last_dense_weight_selector(const ModelSpec& spec);

enum class DirectionNorm { global_frobenius, per_layer };

const char* to_string(DirectionNorm norm);
DirectionNorm direction_norm_from_string(const std::string& name);

struct LandscapeConfig {
    int resolution = 25;   // odd, so (0, 0) is a grid point
    double range = 1.0;    // coefficients span [-range, range]
    std::uint64_t direction_seed = 0;
    DirectionNorm normalization = DirectionNorm::global_frobenius;
    std::size_t sample_size = 512;
    std::uint64_t sample_seed = 0;
    bool adversarial = false; // evaluate the loss on PGD examples crafted at each grid point

    void validate() const;
    bool operator==(const LandscapeConfig&) const = default;
};

struct LandscapeGrid {
    std::vector<double> coefficients; // resolution entries, ascending
    std::vector<double> values;       // row-major: row = first direction coefficient
    int resolution = 0;

    double at(int row, int col) const { return values[static_cast<std::size_t>(row) * resolution + col]; }
    double center() const { return at(resolution / 2, resolution / 2); }
    double min() const;
    double max() const;
    double variance() const;
};

using ParamsLoss = std::function<double(const NamedParams&)>;

/// Two Gaussian directions drawn from cfg.direction_seed, each rescaled to the
/// norm of `center` (globally or per tensor), swept over alpha, beta in [-range, range]:
/// z(alpha, beta) = loss(center + alpha * d1 + beta * d2).
LandscapeGrid landscape_grid(const NamedParams& center, const ParamsLoss& loss, const LandscapeConfig& cfg);

/// The grid for a model's cross-entropy on a data sample (eval-mode BN).
LandscapeGrid landscape_grid(const ModelState& model, const Dataset& sample, const LandscapeConfig& cfg,
                             const AttackConfig* attack = nullptr);

} // namespace meat
