#include "meatlab/analysis.hpp"

#include "meatlab/errors.hpp"

#include <algorithm>
#include <cmath>
#include <regex>

namespace meat {

double accuracy(const ModelState& model, const Dataset& data, const AttackConfig* attack, Rng& rng,
                std::size_t batch_size) {
    if (data.size() == 0) throw ArgumentError("accuracy: empty dataset");
    if (batch_size == 0) throw ArgumentError("accuracy: batch_size must be positive");
    std::size_t correct = 0;
    for (std::size_t begin = 0; begin < data.size(); begin += batch_size) {
        const std::size_t end = std::min(begin + batch_size, data.size());
        Tensor x = data.features.rows(begin, end);
        const auto labels = data.labels_range(begin, end);
        if (attack) x = pgd(model, x, labels, *attack, rng);
        const auto pred = argmax_rows(predict(model, x));
        for (std::size_t i = 0; i < pred.size(); ++i)
            if (static_cast<int>(pred[i]) == labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

GapReport gap_report(std::span<const MetricsRecord> history) {
    if (history.empty()) throw ArgumentError("gap_report: empty history");
    auto triple = [&](double MetricsRecord::*field) {
        GapTriple t;
        t.best = history.front().*field;
        t.best_epoch = history.front().epoch;
        for (const auto& r : history) {
            if (r.*field > t.best) {
                t.best = r.*field;
                t.best_epoch = r.epoch;
            }
        }
        t.last = history.back().*field;
        t.gap = t.best - t.last;
        return t;
    };
    return GapReport{triple(&MetricsRecord::test_robust_acc), triple(&MetricsRecord::test_clean_acc)};
}

Histogram weight_histogram(const NamedParams& params, const std::string& selector, std::size_t bins, double lo,
                           double hi) {
    if (bins == 0) throw ArgumentError("weight_histogram: bins must be positive");
    if (!(lo < hi)) throw ArgumentError("weight_histogram: empty range");
    std::regex pattern;
    try {
        pattern = std::regex(selector, std::regex::ECMAScript);
    } catch (const std::regex_error& e) {
        throw SelectorError("weight_histogram: invalid selector '" + selector + "': " + e.what());
    }

    Histogram h;
    h.lo = lo;
    h.hi = hi;
    h.counts.assign(bins, 0);
    const double width = (hi - lo) / static_cast<double>(bins);
    double sum = 0.0;
    std::vector<float> selected;
    for (const auto& p : params) {
        if (!std::regex_match(p.key(), pattern)) continue;
        h.selected.push_back(p.key());
        for (float v : p.value.values()) {
            const double idx = std::floor((v - lo) / width);
            const std::size_t bin =
                idx < 0.0 ? 0 : (idx >= static_cast<double>(bins) ? bins - 1 : static_cast<std::size_t>(idx));
            ++h.counts[bin];
            sum += v;
            selected.push_back(v);
        }
    }
    if (h.selected.empty()) throw SelectorError("weight_histogram: selector '" + selector + "' matched no tensor");
    h.total = selected.size();
    if (h.total > 0) h.mean = sum / static_cast<double>(h.total);
    if (h.total > 1) {
        double ss = 0.0;
        for (float v : selected) ss += (v - h.mean) * (v - h.mean);
        h.stddev = std::sqrt(ss / static_cast<double>(h.total - 1));
    }
    return h;
}

std::string last_dense_weight_selector(const ModelSpec& spec) {
    for (std::size_t i = spec.layers.size(); i-- > 0;)
        if (spec.layers[i].kind == LayerKind::dense) return spec.layer_name(i) + "\\.weight";
    throw SelectorError("model has no dense layer");
}

const char* to_string(DirectionNorm norm) {
    return norm == DirectionNorm::global_frobenius ? "global_frobenius" : "per_layer";
}

DirectionNorm direction_norm_from_string(const std::string& name) {
    if (name == "global_frobenius") return DirectionNorm::global_frobenius;
    if (name == "per_layer") return DirectionNorm::per_layer;
    throw ArgumentError("unknown direction normalization '" + name + "'");
}

void LandscapeConfig::validate() const {
    if (resolution < 1 || resolution % 2 == 0) throw ArgumentError("landscape: resolution must be a positive odd integer");
    if (!(range > 0.0)) throw ArgumentError("landscape: range must be positive");
    if (sample_size == 0) throw ArgumentError("landscape: sample_size must be positive");
}

double LandscapeGrid::min() const { return *std::min_element(values.begin(), values.end()); }
double LandscapeGrid::max() const { return *std::max_element(values.begin(), values.end()); }

double LandscapeGrid::variance() const {
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    return ss / static_cast<double>(values.size());
}

namespace {

NamedParams draw_direction(const NamedParams& center, Rng& rng, DirectionNorm norm) {
    NamedParams d = center.zeros_like();
    for (auto& p : d) p.value = gaussian(rng, p.value.shape());
    if (norm == DirectionNorm::global_frobenius) {
        const auto dt = d.tensors();
        const auto ct = center.tensors();
        const double vn = frobenius_norm(dt);
        const double s = vn > 0.0 ? frobenius_norm(ct) / vn : 0.0;
        for (auto& p : d)
            for (float& v : p.value.values()) v = static_cast<float>(v * s);
    } else {
        for (std::size_t t = 0; t < d.size(); ++t) {
            const double vn = std::sqrt(squared_norm(d[t].value));
            const double s = vn > 0.0 ? std::sqrt(squared_norm(center[t].value)) / vn : 0.0;
            for (float& v : d[t].value.values()) v = static_cast<float>(v * s);
        }
    }
    return d;
}

} // namespace

LandscapeGrid landscape_grid(const NamedParams& center, const ParamsLoss& loss, const LandscapeConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.direction_seed);
    const NamedParams d1 = draw_direction(center, rng, cfg.normalization);
    const NamedParams d2 = draw_direction(center, rng, cfg.normalization);

    LandscapeGrid grid;
    grid.resolution = cfg.resolution;
    const int res = cfg.resolution;
    for (int k = 0; k < res; ++k) {
        grid.coefficients.push_back(res == 1 ? 0.0 : cfg.range * static_cast<double>(2 * k - (res - 1)) / (res - 1));
    }
    grid.values.resize(static_cast<std::size_t>(res) * res);
    NamedParams probe = center;
    for (int i = 0; i < res; ++i) {
        const double a = grid.coefficients[i];
        for (int j = 0; j < res; ++j) {
            const double b = grid.coefficients[j];
            for (std::size_t t = 0; t < center.size(); ++t) {
                const Tensor& c = center[t].value;
                Tensor& dst = probe[t].value;
                for (std::size_t q = 0; q < c.size(); ++q)
                    dst[q] = static_cast<float>(static_cast<double>(c[q]) + a * d1[t].value[q] + b * d2[t].value[q]);
            }
            grid.values[static_cast<std::size_t>(i) * res + j] = loss(probe);
        }
    }
    return grid;
}

LandscapeGrid landscape_grid(const ModelState& model, const Dataset& sample, const LandscapeConfig& cfg,
                             const AttackConfig* attack) {
    cfg.validate();
    if (sample.size() == 0) throw ArgumentError("landscape: empty data sample");
    if (cfg.adversarial && !attack) throw ArgumentError("landscape: adversarial grid requested without an attack config");
    const Dataset data = subsample(sample, cfg.sample_size, cfg.sample_seed);
    std::uint64_t point = 0;
    auto loss = [&](const NamedParams& params) {
        const ModelState probe{model.spec, params, model.bn};
        Tensor x = data.features;
        if (cfg.adversarial) {
            Rng rng = Rng(cfg.direction_seed).substream(point++);
            x = pgd(probe, x, data.labels, *attack, rng);
        }
        return loss_xent(predict(probe, x), data.labels);
    };
    return landscape_grid(model.params, loss, cfg);
}

} // namespace meat
