#pragma once

#include "meatlab/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace meat {

enum class Split { train, test };

struct Dataset {
    Tensor features;          // N x d
    std::vector<int> labels;  // N entries in [0, num_classes)
    std::size_t num_classes = 0;
    Split split = Split::train;
    double lo = 0.0; // declared feature range
    double hi = 1.0;

    std::size_t size() const noexcept { return labels.size(); }
    std::size_t dim() const { return features.rank() == 2 ? features.dim(1) : 0; }

    /// Throws ArgumentError if any invariant (row count, label range, feature range) fails.
    void validate() const;
    /// Examples at the given row indices, in that order.
    Dataset select(std::span<const std::size_t> rows) const;
    std::span<const int> labels_range(std::size_t begin, std::size_t end) const {
        return std::span<const int>(labels).subspan(begin, end - begin);
    }

    bool operator==(const Dataset&) const = default;
};

struct DatasetPair {
    Dataset train;
    Dataset test;
};

enum class SyntheticKind { gaussians, spirals };

const char* to_string(SyntheticKind kind);
SyntheticKind synthetic_kind_from_string(const std::string& name);

/// Deterministic 2-D toy problems with a stratified 80/20 split.
/// gaussians: isotropic blobs around class means spaced on the unit circle.
/// spirals: `classes` interleaved arms, noise added to the radius-scaled arm position.
/// When `standardize` is set, features are z-scored with train statistics so
/// every train feature has zero mean and unit (population) standard deviation.
DatasetPair make_synthetic(SyntheticKind kind, std::size_t n_per_class, std::size_t classes, double noise,
                           std::uint64_t seed, bool standardize = true);

/// Reads an IDX3 unsigned-byte image file and its IDX1 label file, scaling pixels to [0, 1].
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels, std::size_t limit,
                 std::size_t num_classes = 10);

/// Writes features (already in [0,1], rows = rows*cols pixels) as an IDX pair; used for fixtures.
void save_idx(const std::filesystem::path& images, const std::filesystem::path& labels, std::span<const std::uint8_t> pixels,
              std::span<const std::uint8_t> label_bytes, std::uint32_t count, std::uint32_t rows, std::uint32_t cols);

/// Contiguous batches in row order; the last batch may be short.
std::vector<Tensor> fixed_batches(const Dataset& data, std::size_t batch_size);

/// `count` rows chosen without replacement by a seeded shuffle (all rows if count >= N).
Dataset subsample(const Dataset& data, std::size_t count, std::uint64_t seed);

} // namespace meat
