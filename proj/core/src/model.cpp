#include "meatlab/model.hpp"

#include "meatlab/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace meat {

const char* to_string(LayerKind kind) {
    switch (kind) {
    case LayerKind::dense: return "dense";
    case LayerKind::relu: return "relu";
    case LayerKind::batchnorm: return "batchnorm";
    }
    return "?";
}

LayerKind layer_kind_from_string(const std::string& name) {
    if (name == "dense") return LayerKind::dense;
    if (name == "relu") return LayerKind::relu;
    if (name == "batchnorm") return LayerKind::batchnorm;
    throw ArgumentError("unknown layer kind '" + name + "'");
}

// ---------------------------------------------------------------------------
// ModelSpec

std::size_t ModelSpec::width_before(std::size_t index) const {
    std::size_t width = input_dim;
    for (std::size_t i = 0; i < index && i < layers.size(); ++i) {
        if (layers[i].kind == LayerKind::dense) width = layers[i].units;
    }
    return width;
}

void ModelSpec::validate() const {
    if (input_dim == 0) throw ArgumentError("model spec: input_dim must be positive");
    if (num_classes < 2) throw ArgumentError("model spec: num_classes must be at least 2");
    if (layers.empty()) throw ArgumentError("model spec: no layers");
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (layers[i].kind == LayerKind::dense && layers[i].units == 0) {
            throw ArgumentError("model spec: dense layer " + std::to_string(i) + " has zero units");
        }
    }
    if (width_before(layers.size()) != num_classes) {
        throw ArgumentError("model spec: output width " + std::to_string(width_before(layers.size())) +
                            " != num_classes " + std::to_string(num_classes));
    }
}

std::string ModelSpec::layer_name(std::size_t index) const {
    const char* prefix = "dense";
    switch (layers.at(index).kind) {
    case LayerKind::dense: prefix = "dense"; break;
    case LayerKind::relu: prefix = "relu"; break;
    case LayerKind::batchnorm: prefix = "bn"; break;
    }
    return prefix + std::to_string(index);
}

ModelSpec ModelSpec::mlp(std::size_t input_dim, const std::vector<std::size_t>& hidden, std::size_t num_classes,
                         bool batchnorm) {
    ModelSpec spec;
    spec.input_dim = input_dim;
    spec.num_classes = num_classes;
    for (std::size_t units : hidden) {
        spec.layers.push_back({LayerKind::dense, units});
        if (batchnorm) spec.layers.push_back({LayerKind::batchnorm, 0});
        spec.layers.push_back({LayerKind::relu, 0});
    }
    spec.layers.push_back({LayerKind::dense, num_classes});
    spec.validate();
    return spec;
}

// ---------------------------------------------------------------------------
// NamedParams

NamedParams::NamedParams(std::vector<ParamTensor> entries) : entries_(std::move(entries)) {
    for (std::size_t i = 0; i < entries_.size(); ++i)
        for (std::size_t j = i + 1; j < entries_.size(); ++j)
            if (entries_[i].layer == entries_[j].layer && entries_[i].name == entries_[j].name)
                throw ArgumentError("duplicate parameter name " + entries_[i].key());
}

const Tensor& NamedParams::get(const std::string& layer, const std::string& name) const {
    for (const auto& e : entries_)
        if (e.layer == layer && e.name == name) return e.value;
    throw ArgumentError("no parameter " + layer + "." + name);
}

Tensor& NamedParams::get(const std::string& layer, const std::string& name) {
    return const_cast<Tensor&>(std::as_const(*this).get(layer, name));
}

std::size_t NamedParams::coordinate_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.value.size();
    return n;
}

bool NamedParams::aligned_with(const NamedParams& other) const {
    if (entries_.size() != other.entries_.size()) return false;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        const auto& a = entries_[i];
        const auto& b = other.entries_[i];
        if (a.layer != b.layer || a.name != b.name || a.value.shape() != b.value.shape()) return false;
    }
    return true;
}

void NamedParams::require_aligned(const NamedParams& other, const char* context) const {
    if (entries_.size() != other.entries_.size()) {
        throw UsageError(std::string(context) + ": parameter sets have " + std::to_string(entries_.size()) +
                         " and " + std::to_string(other.entries_.size()) + " tensors");
    }
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        const auto& a = entries_[i];
        const auto& b = other.entries_[i];
        if (a.layer != b.layer || a.name != b.name || a.value.shape() != b.value.shape()) {
            throw UsageError(std::string(context) + ": entry " + std::to_string(i) + " is " + a.key() +
                             shape_string(a.value.shape()) + " vs " + b.key() + shape_string(b.value.shape()));
        }
    }
}

NamedParams NamedParams::zeros_like() const {
    std::vector<ParamTensor> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.push_back({e.layer, e.name, Tensor(e.value.shape())});
    return NamedParams(std::move(out));
}

std::vector<Tensor> NamedParams::tensors() const {
    std::vector<Tensor> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.push_back(e.value);
    return out;
}

bool bit_equal(const NamedParams& a, const NamedParams& b) {
    if (!a.aligned_with(b)) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (!bit_equal(a[i].value, b[i].value)) return false;
    return true;
}

bool bit_equal(const BnStats& a, const BnStats& b) {
    if (a.batches != b.batches || a.layers.size() != b.layers.size()) return false;
    for (std::size_t i = 0; i < a.layers.size(); ++i) {
        if (a.layers[i].layer != b.layers[i].layer || !bit_equal(a.layers[i].mean, b.layers[i].mean) ||
            !bit_equal(a.layers[i].var, b.layers[i].var))
            return false;
    }
    return true;
}

// ---------------------------------------------------------------------------
// init

std::pair<NamedParams, BnStats> init_params(const ModelSpec& spec, Rng& rng) {
    spec.validate();
    std::vector<ParamTensor> params;
    BnStats bn;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const std::size_t in = spec.width_before(i);
        const std::string name = spec.layer_name(i);
        switch (spec.layers[i].kind) {
        case LayerKind::dense: {
            const std::size_t out = spec.layers[i].units;
            Tensor w = gaussian(rng, {out, in});
            const float s = static_cast<float>(1.0 / std::sqrt(static_cast<double>(in)));
            for (float& v : w.values()) v *= s;
            params.push_back({name, "weight", std::move(w)});
            params.push_back({name, "bias", Tensor({out})});
            break;
        }
        case LayerKind::batchnorm:
            params.push_back({name, "scale", Tensor({in}, 1.0f)});
            params.push_back({name, "shift", Tensor({in})});
            bn.layers.push_back({name, Tensor({in}), Tensor({in}, 1.0f)});
            break;
        case LayerKind::relu: break;
        }
    }
    return {NamedParams(std::move(params)), std::move(bn)};
}

// ---------------------------------------------------------------------------
// forward

namespace {

struct Cursor {
    std::size_t param = 0;
    std::size_t bn = 0;
};

void check_params(const ModelSpec& spec, const NamedParams& params, const BnStats& bn) {
    std::size_t expected = 0, bn_layers = 0;
    for (const auto& l : spec.layers) {
        if (l.kind == LayerKind::dense || l.kind == LayerKind::batchnorm) expected += 2;
        if (l.kind == LayerKind::batchnorm) ++bn_layers;
    }
    if (params.size() != expected) {
        throw UsageError("parameter set has " + std::to_string(params.size()) + " tensors, architecture needs " +
                         std::to_string(expected));
    }
    if (bn.layers.size() != bn_layers) {
        throw UsageError("batchnorm statistics cover " + std::to_string(bn.layers.size()) + " layers, architecture has " +
                         std::to_string(bn_layers));
    }
}

Tensor dense_forward(const Tensor& x, const Tensor& w, const Tensor& b) {
    const std::size_t batch = x.dim(0), in = x.dim(1), out = w.dim(0);
    if (w.dim(1) != in) {
        throw DimensionError("dense layer expects width " + std::to_string(w.dim(1)) + ", got input " +
                             shape_string(x.shape()));
    }
    // row-times-transposed-weight so the inner loop runs over independent outputs
    const Tensor wt = transpose(w);
    Tensor y({batch, out});
    std::vector<double> acc(out);
    for (std::size_t r = 0; r < batch; ++r) {
        for (std::size_t o = 0; o < out; ++o) acc[o] = b[o];
        const float* xr = x.data() + r * in;
        for (std::size_t i = 0; i < in; ++i) {
            const double xv = xr[i];
            const float* wrow = wt.data() + i * out;
            for (std::size_t o = 0; o < out; ++o) acc[o] += xv * wrow[o];
        }
        float* yr = y.data() + r * out;
        for (std::size_t o = 0; o < out; ++o) yr[o] = static_cast<float>(acc[o]);
    }
    return y;
}

Tensor bn_forward_train(const Tensor& x, const Tensor& scale, const Tensor& shift, BnLayerStats& running,
                        BnCache& cache) {
    const std::size_t batch = x.dim(0), width = x.dim(1);
    if (batch < 2) throw ArgumentError("batchnorm in train mode needs a batch of at least 2 rows");
    std::vector<double> mean(width, 0.0), var(width, 0.0);
    for (std::size_t r = 0; r < batch; ++r)
        for (std::size_t c = 0; c < width; ++c) mean[c] += x.at(r, c);
    for (auto& m : mean) m /= static_cast<double>(batch);
    for (std::size_t r = 0; r < batch; ++r)
        for (std::size_t c = 0; c < width; ++c) {
            const double d = x.at(r, c) - mean[c];
            var[c] += d * d;
        }
    cache.xhat = Tensor({batch, width});
    cache.inv_std = Tensor({width});
    Tensor y({batch, width});
    for (std::size_t c = 0; c < width; ++c) {
        const double biased = var[c] / static_cast<double>(batch);
        const double unbiased = var[c] / static_cast<double>(batch - 1);
        const double inv = 1.0 / std::sqrt(biased + kBnEpsilon);
        cache.inv_std[c] = static_cast<float>(inv);
        for (std::size_t r = 0; r < batch; ++r) {
            const double xh = (x.at(r, c) - mean[c]) * inv;
            cache.xhat.at(r, c) = static_cast<float>(xh);
            y.at(r, c) = static_cast<float>(scale[c] * xh + shift[c]);
        }
        running.mean[c] = static_cast<float>((1.0 - kBnMomentum) * running.mean[c] + kBnMomentum * mean[c]);
        running.var[c] = static_cast<float>((1.0 - kBnMomentum) * running.var[c] + kBnMomentum * unbiased);
    }
    return y;
}

Tensor bn_forward_eval(const Tensor& x, const Tensor& scale, const Tensor& shift, const BnLayerStats& running,
                       BnCache* cache) {
    const std::size_t batch = x.dim(0), width = x.dim(1);
    if (running.mean.size() != width) {
        throw DimensionError("batchnorm statistics for " + running.layer + " have width " +
                             std::to_string(running.mean.size()) + ", input " + shape_string(x.shape()));
    }
    Tensor y({batch, width});
    if (cache) {
        cache->xhat = Tensor({batch, width});
        cache->inv_std = Tensor({width});
    }
    for (std::size_t c = 0; c < width; ++c) {
        const double inv = 1.0 / std::sqrt(static_cast<double>(running.var[c]) + kBnEpsilon);
        if (cache) cache->inv_std[c] = static_cast<float>(inv);
        for (std::size_t r = 0; r < batch; ++r) {
            const double xh = (x.at(r, c) - static_cast<double>(running.mean[c])) * inv;
            if (cache) cache->xhat.at(r, c) = static_cast<float>(xh);
            y.at(r, c) = static_cast<float>(scale[c] * xh + shift[c]);
        }
    }
    return y;
}

Tensor relu_forward(const Tensor& x) {
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
    return y;
}

} // namespace

ForwardResult forward(const ModelSpec& spec, const NamedParams& params, const BnStats& bn, const Tensor& x,
                      Mode mode) {
    check_params(spec, params, bn);
    if (x.rank() != 2 || x.dim(1) != spec.input_dim) {
        throw DimensionError("forward: expected input [batch x " + std::to_string(spec.input_dim) + "], got " +
                             shape_string(x.shape()));
    }
    ForwardResult result;
    result.bn = bn;
    ForwardCache& cache = result.cache;
    cache.mode = mode;
    cache.batch = x.dim(0);
    cache.layer_count = spec.layers.size();
    cache.inputs.reserve(spec.layers.size());
    cache.bn.resize(spec.layers.size());

    Tensor h = x;
    Cursor cur;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        cache.inputs.push_back(h);
        switch (spec.layers[i].kind) {
        case LayerKind::dense:
            h = dense_forward(h, params[cur.param].value, params[cur.param + 1].value);
            cur.param += 2;
            break;
        case LayerKind::batchnorm:
            if (mode == Mode::train) {
                h = bn_forward_train(h, params[cur.param].value, params[cur.param + 1].value, result.bn.layers[cur.bn],
                                     cache.bn[i]);
            } else {
                h = bn_forward_eval(h, params[cur.param].value, params[cur.param + 1].value, bn.layers[cur.bn],
                                    &cache.bn[i]);
            }
            cur.param += 2;
            ++cur.bn;
            break;
        case LayerKind::relu: h = relu_forward(h); break;
        }
    }
    if (mode == Mode::train) ++result.bn.batches;
    cache.logits = h;
    result.logits = std::move(h);
    return result;
}

Tensor predict(const ModelState& model, const Tensor& x) {
    return forward_until(model.spec, model.params, model.bn, x, model.spec.layers.size());
}

Tensor forward_until(const ModelSpec& spec, const NamedParams& params, const BnStats& bn, const Tensor& x,
                     std::size_t stop) {
    check_params(spec, params, bn);
    if (x.rank() != 2 || x.dim(1) != spec.input_dim) {
        throw DimensionError("forward: expected input [batch x " + std::to_string(spec.input_dim) + "], got " +
                             shape_string(x.shape()));
    }
    Tensor h = x;
    Cursor cur;
    for (std::size_t i = 0; i < stop && i < spec.layers.size(); ++i) {
        switch (spec.layers[i].kind) {
        case LayerKind::dense:
            h = dense_forward(h, params[cur.param].value, params[cur.param + 1].value);
            cur.param += 2;
            break;
        case LayerKind::batchnorm:
            h = bn_forward_eval(h, params[cur.param].value, params[cur.param + 1].value, bn.layers[cur.bn], nullptr);
            cur.param += 2;
            ++cur.bn;
            break;
        case LayerKind::relu: h = relu_forward(h); break;
        }
    }
    return h;
}

// ---------------------------------------------------------------------------
// loss + backward

namespace {

void check_labels(const Tensor& logits, std::span<const int> labels) {
    if (logits.rank() != 2 || logits.dim(0) != labels.size()) {
        throw DimensionError("loss: logits " + shape_string(logits.shape()) + " vs " + std::to_string(labels.size()) +
                             " labels");
    }
    const int classes = static_cast<int>(logits.dim(1));
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= classes) {
            throw ArgumentError("label " + std::to_string(labels[i]) + " at row " + std::to_string(i) +
                                " outside [0, " + std::to_string(classes) + ")");
        }
    }
}

} // namespace

double loss_xent(const Tensor& logits, std::span<const int> labels) {
    check_labels(logits, labels);
    const std::size_t batch = logits.dim(0), classes = logits.dim(1);
    if (batch == 0) throw ArgumentError("loss: empty batch");
    double total = 0.0;
    for (std::size_t r = 0; r < batch; ++r) {
        const float* row = logits.data() + r * classes;
        const double mx = *std::max_element(row, row + classes);
        double z = 0.0;
        for (std::size_t c = 0; c < classes; ++c) z += std::exp(row[c] - mx);
        total += std::log(z) - (row[labels[r]] - mx);
    }
    return total / static_cast<double>(batch);
}

Gradients backward(const ModelSpec& spec, const NamedParams& params, const ForwardCache& cache,
                   std::span<const int> labels) {
    if (cache.layer_count != spec.layers.size() || cache.inputs.size() != spec.layers.size() || cache.batch == 0) {
        throw UsageError("backward: cache does not come from a forward pass of this architecture");
    }
    if (cache.batch != labels.size() || cache.logits.dim(0) != cache.batch) {
        throw UsageError("backward: cache batch " + std::to_string(cache.batch) + " vs " +
                         std::to_string(labels.size()) + " labels");
    }
    check_labels(cache.logits, labels);

    const std::size_t batch = cache.batch, classes = cache.logits.dim(1);
    Tensor grad({batch, classes});
    for (std::size_t r = 0; r < batch; ++r) {
        const float* row = cache.logits.data() + r * classes;
        const double mx = *std::max_element(row, row + classes);
        double z = 0.0;
        for (std::size_t c = 0; c < classes; ++c) z += std::exp(row[c] - mx);
        for (std::size_t c = 0; c < classes; ++c) {
            const double p = std::exp(row[c] - mx) / z;
            const double target = static_cast<int>(c) == labels[r] ? 1.0 : 0.0;
            grad.at(r, c) = static_cast<float>((p - target) / static_cast<double>(batch));
        }
    }

    Gradients out{params.zeros_like(), {}};
    // param cursor at the end, walking backwards
    std::size_t pcur = params.size();
    for (std::size_t li = spec.layers.size(); li-- > 0;) {
        const Tensor& x = cache.inputs[li];
        const std::size_t width = x.dim(1);
        switch (spec.layers[li].kind) {
        case LayerKind::dense: {
            pcur -= 2;
            const Tensor& w = params[pcur].value;
            const std::size_t out_w = w.dim(0);
            Tensor& dw = out.params[pcur].value;
            Tensor& db = out.params[pcur + 1].value;
            std::vector<double> wacc(out_w * width, 0.0), bacc(out_w, 0.0);
            for (std::size_t r = 0; r < batch; ++r) {
                const float* xr = x.data() + r * width;
                for (std::size_t o = 0; o < out_w; ++o) {
                    const double g = grad.at(r, o);
                    bacc[o] += g;
                    double* wrow = wacc.data() + o * width;
                    for (std::size_t i = 0; i < width; ++i) wrow[i] += g * xr[i];
                }
            }
            for (std::size_t o = 0; o < out_w; ++o) db[o] = static_cast<float>(bacc[o]);
            for (std::size_t k = 0; k < wacc.size(); ++k) dw[k] = static_cast<float>(wacc[k]);

            Tensor dx({batch, width});
            std::vector<double> xacc(width);
            for (std::size_t r = 0; r < batch; ++r) {
                std::fill(xacc.begin(), xacc.end(), 0.0);
                for (std::size_t o = 0; o < out_w; ++o) {
                    const double g = grad.at(r, o);
                    const float* wrow = w.data() + o * width;
                    for (std::size_t i = 0; i < width; ++i) xacc[i] += g * wrow[i];
                }
                float* dxr = dx.data() + r * width;
                for (std::size_t i = 0; i < width; ++i) dxr[i] = static_cast<float>(xacc[i]);
            }
            grad = std::move(dx);
            break;
        }
        case LayerKind::batchnorm: {
            pcur -= 2;
            const Tensor& gamma = params[pcur].value;
            const BnCache& bc = cache.bn[li];
            if (bc.xhat.shape() != x.shape()) throw UsageError("backward: batchnorm cache missing for layer " + spec.layer_name(li));
            Tensor& dgamma = out.params[pcur].value;
            Tensor& dbeta = out.params[pcur + 1].value;
            Tensor dx({batch, width});
            for (std::size_t c = 0; c < width; ++c) {
                double sum_dy = 0.0, sum_dy_xhat = 0.0;
                for (std::size_t r = 0; r < batch; ++r) {
                    sum_dy += grad.at(r, c);
                    sum_dy_xhat += static_cast<double>(grad.at(r, c)) * bc.xhat.at(r, c);
                }
                dgamma[c] = static_cast<float>(sum_dy_xhat);
                dbeta[c] = static_cast<float>(sum_dy);
                const double g = gamma[c];
                const double inv = bc.inv_std[c];
                if (cache.mode == Mode::train) {
                    // d/dx of scale * (x - mean_b) / sqrt(var_b + eps) with batch statistics
                    const double n = static_cast<double>(batch);
                    for (std::size_t r = 0; r < batch; ++r) {
                        const double v = n * grad.at(r, c) - sum_dy - bc.xhat.at(r, c) * sum_dy_xhat;
                        dx.at(r, c) = static_cast<float>(g * inv * v / n);
                    }
                } else {
                    for (std::size_t r = 0; r < batch; ++r) dx.at(r, c) = static_cast<float>(g * inv * grad.at(r, c));
                }
            }
            grad = std::move(dx);
            break;
        }
        case LayerKind::relu: {
            for (std::size_t i = 0; i < grad.size(); ++i)
                if (!(x[i] > 0.0f)) grad[i] = 0.0f;
            break;
        }
        }
    }
    out.input = std::move(grad);
    return out;
}

std::vector<std::size_t> argmax_rows(const Tensor& logits) {
    const std::size_t batch = logits.dim(0), classes = logits.dim(1);
    std::vector<std::size_t> out(batch);
    for (std::size_t r = 0; r < batch; ++r) {
        const float* row = logits.data() + r * classes;
        out[r] = static_cast<std::size_t>(std::max_element(row, row + classes) - row);
    }
    return out;
}

} // namespace meat
