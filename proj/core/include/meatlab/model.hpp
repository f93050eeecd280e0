#pragma once

#include "meatlab/rng.hpp"
#include "meatlab/tensor.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace meat {

enum class LayerKind { dense, relu, batchnorm };

const char* to_string(LayerKind kind);
LayerKind layer_kind_from_string(const std::string& name);

struct LayerSpec {
    LayerKind kind = LayerKind::dense;
    std::size_t units = 0; // output width; only meaningful for dense

    bool operator==(const LayerSpec&) const = default;
};

struct ModelSpec {
    std::size_t input_dim = 0;
    std::size_t num_classes = 0;
    std::vector<LayerSpec> layers;

    /// Throws ArgumentError if widths do not chain or the head is not num_classes wide.
    void validate() const;
    /// Width of the activation entering layer `index` (index == layers.size() gives the output width).
    std::size_t width_before(std::size_t index) const;
    /// "dense0", "bn1", "relu2", ...
    std::string layer_name(std::size_t index) const;

    /// input -> [dense -> bn -> relu] x hidden.size() -> dense(num_classes)
    static ModelSpec mlp(std::size_t input_dim, const std::vector<std::size_t>& hidden, std::size_t num_classes,
                         bool batchnorm = true);

    bool operator==(const ModelSpec&) const = default;
};

struct ParamTensor {
    std::string layer;
    std::string name;
    Tensor value;

    std::string key() const { return layer + "." + name; }
    bool operator==(const ParamTensor&) const = default;
};

/// Ordered (layer, tensor-name) -> tensor map. Two instances built from the
/// same ModelSpec share names, shapes and order, so they can be combined
/// coordinate by coordinate.
class NamedParams {
public:
    NamedParams() = default;
    explicit NamedParams(std::vector<ParamTensor> entries);

    std::size_t size() const noexcept { return entries_.size(); }
    bool empty() const noexcept { return entries_.empty(); }
    ParamTensor& operator[](std::size_t i) { return entries_[i]; }
    const ParamTensor& operator[](std::size_t i) const { return entries_[i]; }
    auto begin() noexcept { return entries_.begin(); }
    auto end() noexcept { return entries_.end(); }
    auto begin() const noexcept { return entries_.begin(); }
    auto end() const noexcept { return entries_.end(); }

    const Tensor& get(const std::string& layer, const std::string& name) const;
    Tensor& get(const std::string& layer, const std::string& name);

    std::size_t coordinate_count() const;
    bool aligned_with(const NamedParams& other) const;
    /// Throws UsageError naming `context` and the first mismatching entry.
    void require_aligned(const NamedParams& other, const char* context) const;

    /// Same names and shapes, all values zero.
    NamedParams zeros_like() const;
    std::vector<Tensor> tensors() const;

    bool operator==(const NamedParams&) const = default;

private:
    std::vector<ParamTensor> entries_;
};

bool bit_equal(const NamedParams& a, const NamedParams& b);

struct BnLayerStats {
    std::string layer;
    Tensor mean;
    Tensor var; // unbiased running variance, elementwise >= 0

    bool operator==(const BnLayerStats&) const = default;
};

struct BnStats {
    std::vector<BnLayerStats> layers;
    std::uint64_t batches = 0;

    bool operator==(const BnStats&) const = default;
};

bool bit_equal(const BnStats& a, const BnStats& b);

struct ModelState {
    ModelSpec spec;
    NamedParams params;
    BnStats bn;
};

inline constexpr float kBnMomentum = 0.1f;
inline constexpr float kBnEpsilon = 1e-5f;

enum class Mode { train, eval };

struct BnCache {
    Tensor xhat;    // normalized input, batch x width
    Tensor inv_std; // width
};

/// Everything backward needs from one forward call.
struct ForwardCache {
    Mode mode = Mode::eval;
    std::size_t batch = 0;
    std::size_t layer_count = 0;
    std::vector<Tensor> inputs;  // input of each layer
    std::vector<BnCache> bn;     // indexed by layer, empty for non-BN layers
    Tensor logits;
};

struct ForwardResult {
    Tensor logits;
    ForwardCache cache;
    BnStats bn; // updated copy in train mode, unchanged copy in eval mode
};

struct Gradients {
    NamedParams params;
    Tensor input;
};

/// Dense weights ~ N(0, 1/fan_in), biases 0, BN scale 1 / shift 0, running mean 0 / var 1.
std::pair<NamedParams, BnStats> init_params(const ModelSpec& spec, Rng& rng);

ForwardResult forward(const ModelSpec& spec, const NamedParams& params, const BnStats& bn, const Tensor& x,
                      Mode mode);

/// Eval-mode logits only.
Tensor predict(const ModelState& model, const Tensor& x);

/// Activations entering layer `stop` (eval mode for BN layers before it).
Tensor forward_until(const ModelSpec& spec, const NamedParams& params, const BnStats& bn, const Tensor& x,
                     std::size_t stop);

/// Mean softmax cross-entropy; labels must lie in [0, C).
double loss_xent(const Tensor& logits, std::span<const int> labels);

/// Exact gradients of loss_xent(forward(...)) w.r.t. every parameter tensor and the input.
Gradients backward(const ModelSpec& spec, const NamedParams& params, const ForwardCache& cache,
                   std::span<const int> labels);

std::vector<std::size_t> argmax_rows(const Tensor& logits);

} // namespace meat
