#include "meatlab/ensemble.hpp"

#include "meatlab/errors.hpp"

#include <algorithm>
#include <cmath>

namespace meat {

const char* to_string(Strategy s) {
    switch (s) {
    case Strategy::none: return "none";
    case Strategy::wa_mean: return "wa_mean";
    case Strategy::ema: return "ema";
    case Strategy::meat_median: return "meat_median";
    }
    return "?";
}

Strategy strategy_from_string(const std::string& name) {
    for (Strategy s : {Strategy::none, Strategy::wa_mean, Strategy::ema, Strategy::meat_median})
        if (name == to_string(s)) return s;
    throw ArgumentError("unknown ensemble strategy '" + name + "'");
}

void EnsembleConfig::validate() const {
    if (!(start_fraction > 0.0 && start_fraction < 1.0)) throw ArgumentError("ensemble: start_fraction must be in (0, 1)");
    if (!(ema_decay >= 0.0 && ema_decay <= 1.0)) throw ArgumentError("ensemble: ema_decay must be in [0, 1]");
}

int EnsembleConfig::start_epoch(int total_epochs) const {
    return static_cast<int>(std::llround(start_fraction * total_epochs));
}

NamedParams wa_update(const NamedParams& running, std::size_t count, const NamedParams& fresh) {
    running.require_aligned(fresh, "wa_update");
    if (count < 1) throw ArgumentError("wa_update: count must be >= 1");
    NamedParams out = running;
    const double denom = static_cast<double>(count) + 1.0;
    for (std::size_t t = 0; t < out.size(); ++t) {
        Tensor& r = out[t].value;
        const Tensor& f = fresh[t].value;
        for (std::size_t i = 0; i < r.size(); ++i) {
            const double v = static_cast<double>(r[i]) + (static_cast<double>(f[i]) - r[i]) / denom;
            r[i] = static_cast<float>(v);
        }
    }
    return out;
}

NamedParams ema_update(const NamedParams& running, const NamedParams& fresh, double tau) {
    running.require_aligned(fresh, "ema_update");
    if (!(tau >= 0.0 && tau <= 1.0)) throw ArgumentError("ema_update: tau must be in [0, 1]");
    NamedParams out = running;
    for (std::size_t t = 0; t < out.size(); ++t) {
        Tensor& r = out[t].value;
        const Tensor& f = fresh[t].value;
        for (std::size_t i = 0; i < r.size(); ++i)
            r[i] = static_cast<float>(tau * r[i] + (1.0 - tau) * f[i]);
    }
    return out;
}

NamedParams median_params(std::span<const NamedParams> snapshots) {
    if (snapshots.empty()) throw PreconditionError("median_params: no snapshots");
    for (std::size_t s = 1; s < snapshots.size(); ++s) snapshots[0].require_aligned(snapshots[s], "median_params");

    const std::size_t n = snapshots.size();
    NamedParams out = snapshots[0];
    std::vector<float> column(n);
    for (std::size_t t = 0; t < out.size(); ++t) {
        Tensor& dst = out[t].value;
        for (std::size_t i = 0; i < dst.size(); ++i) {
            for (std::size_t s = 0; s < n; ++s) column[s] = snapshots[s][t].value[i];
            auto mid = column.begin() + static_cast<std::ptrdiff_t>(n / 2);
            std::nth_element(column.begin(), mid, column.end());
            if (n % 2 == 1) {
                dst[i] = *mid;
            } else {
                const float upper = *mid;
                const float lower = *std::max_element(column.begin(), mid);
                dst[i] = static_cast<float>((static_cast<double>(lower) + upper) / 2.0);
            }
        }
    }
    return out;
}

NamedParams meat_median(const CheckpointStore& store, int start_epoch, int upto_epoch) {
    const auto window = store.epochs_between(start_epoch, upto_epoch);
    if (window.empty()) {
        throw PreconditionError("meat_median: no checkpoints in window [" + std::to_string(start_epoch) + ", " +
                                std::to_string(upto_epoch) + "]");
    }
    std::vector<NamedParams> snapshots;
    snapshots.reserve(window.size());
    for (int e : window) snapshots.push_back(store.load(e).params);
    return median_params(snapshots);
}

BnStats recalibrate_bn(const ModelSpec& spec, const NamedParams& params, std::span<const Tensor> batches) {
    std::size_t rows = 0;
    for (const auto& b : batches) rows += b.rank() == 2 ? b.dim(0) : 0;
    if (rows == 0) throw ArgumentError("recalibrate_bn: empty data pass");

    // start from identity statistics; layer j's inputs depend only on BN layers before j
    BnStats stats;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        if (spec.layers[i].kind != LayerKind::batchnorm) continue;
        const std::size_t w = spec.width_before(i);
        stats.layers.push_back({spec.layer_name(i), Tensor({w}), Tensor({w}, 1.0f)});
    }

    std::size_t bn_index = 0;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        if (spec.layers[i].kind != LayerKind::batchnorm) continue;
        const std::size_t width = spec.width_before(i);
        // Chan et al. pairwise merge of per-batch (count, mean, M2), all in double
        std::vector<double> mean(width, 0.0), m2(width, 0.0);
        double count = 0.0;
        for (const auto& batch : batches) {
            if (batch.rank() != 2 || batch.dim(0) == 0) continue;
            const Tensor h = forward_until(spec, params, stats, batch, i);
            const double nb = static_cast<double>(h.dim(0));
            for (std::size_t c = 0; c < width; ++c) {
                double bmean = 0.0;
                for (std::size_t r = 0; r < h.dim(0); ++r) bmean += h.at(r, c);
                bmean /= nb;
                double bm2 = 0.0;
                for (std::size_t r = 0; r < h.dim(0); ++r) {
                    const double d = h.at(r, c) - bmean;
                    bm2 += d * d;
                }
                const double total = count + nb;
                const double delta = bmean - mean[c];
                mean[c] += delta * nb / total;
                m2[c] += bm2 + delta * delta * count * nb / total;
            }
            count += nb;
        }
        BnLayerStats& dst = stats.layers[bn_index];
        for (std::size_t c = 0; c < width; ++c) {
            dst.mean[c] = static_cast<float>(mean[c]);
            dst.var[c] = static_cast<float>(count > 1.0 ? std::max(0.0, m2[c] / (count - 1.0)) : 0.0);
        }
        ++bn_index;
    }
    stats.batches = batches.size();
    return stats;
}

Checkpoint finalize(const CheckpointStore& store, Strategy strategy, const EnsembleConfig& cfg, const ModelSpec& spec,
                    int start_epoch, int upto_epoch, std::span<const Tensor> calibration_batches) {
    cfg.validate();
    if (strategy == Strategy::none) return store.load(upto_epoch);

    const auto window = store.epochs_between(start_epoch, upto_epoch);
    if (window.empty()) {
        throw PreconditionError(std::string("finalize(") + to_string(strategy) + "): no checkpoints in window [" +
                                std::to_string(start_epoch) + ", " + std::to_string(upto_epoch) + "]");
    }
    Checkpoint out;
    out.epoch = upto_epoch;
    switch (strategy) {
    case Strategy::meat_median: out.params = meat_median(store, start_epoch, upto_epoch); break;
    case Strategy::wa_mean: {
        out.params = store.load(window.front()).params;
        for (std::size_t k = 1; k < window.size(); ++k) out.params = wa_update(out.params, k, store.load(window[k]).params);
        break;
    }
    case Strategy::ema: {
        out.params = store.load(window.front()).params;
        for (std::size_t k = 1; k < window.size(); ++k)
            out.params = ema_update(out.params, store.load(window[k]).params, cfg.ema_decay);
        break;
    }
    case Strategy::none: break;
    }
    out.bn = recalibrate_bn(spec, out.params, calibration_batches);
    return out;
}

} // namespace meat
