#pragma once

#include "meatlab/analysis.hpp"
#include "meatlab/dataset.hpp"
#include "meatlab/ensemble.hpp"
#include "meatlab/model.hpp"
#include "meatlab/trainer.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace meat {

struct DatasetDescriptor {
    std::string source = "synthetic"; // "synthetic" or "idx"
    SyntheticKind kind = SyntheticKind::spirals;
    std::size_t n_per_class = 600;
    std::size_t classes = 3;
    double noise = 0.4;
    bool standardize = true;
    std::uint64_t seed = 0;
    // idx source
    std::string train_images;
    std::string train_labels;
    std::string test_images;
    std::string test_labels;
    std::size_t train_limit = 1000;
    std::size_t test_limit = 500;

    bool operator==(const DatasetDescriptor&) const = default;
};

struct ExportConfig {
    bool histogram = true;
    std::size_t histogram_bins = 41;
    double histogram_range = 2.0; // bins span [-range, range]
    bool landscape = false;

    bool operator==(const ExportConfig&) const = default;
};

/// Everything a run depends on. `seed` drives training (train.seed mirrors it and
/// is not serialized separately); the dataset has its own seed.
struct ExperimentConfig {
    ModelSpec model = ModelSpec::mlp(2, {64, 64}, 3);
    TrainConfig train{};
    EnsembleConfig ensemble{};
    LandscapeConfig landscape{};
    DatasetDescriptor dataset{};
    ExportConfig exports{};
    std::string output_dir = "runs/default";
    std::uint64_t seed = 0;

    void validate() const;
    void set_seed(std::uint64_t s) {
        seed = s;
        train.seed = s;
    }
    bool operator==(const ExperimentConfig&) const = default;
};

/// The desk-scale benchmark: spirals, MLP with BatchNorm, PGD training, 60 epochs.
ExperimentConfig default_experiment_config();

std::string config_to_json(const ExperimentConfig& cfg);
/// Missing keys take their defaults; unknown keys are a FormatError.
ExperimentConfig config_from_json(const std::string& text);

ExperimentConfig load_config(const std::filesystem::path& path);
void save_config(const ExperimentConfig& cfg, const std::filesystem::path& path);

/// Dotted paths of every scalar or scalar-array field, e.g. "train.total_epochs".
std::vector<std::string> config_field_paths();

/// Applies "path" -> "value" overrides. Values are read as JSON when they parse
/// (numbers, booleans, arrays), otherwise as plain strings; a comma-separated
/// value fills an array field element by element.
ExperimentConfig apply_overrides(const ExperimentConfig& cfg,
                                 const std::vector<std::pair<std::string, std::string>>& overrides);

inline constexpr const char* kSeedEnv = "MEATLAB_SEED";
inline constexpr const char* kOutputDirEnv = "MEATLAB_OUTPUT_DIR";

/// Applies MEATLAB_SEED and MEATLAB_OUTPUT_DIR when set.
ExperimentConfig apply_environment(const ExperimentConfig& cfg);

} // namespace meat
