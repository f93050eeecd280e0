#include "meatlab/experiment.hpp"

#include "meatlab/checkpoint_io.hpp"
#include "meatlab/errors.hpp"
#include "meatlab/metrics_log.hpp"

#include <nlohmann/json.hpp>

#include <cstdio>
#include <fstream>
#include <map>

namespace meat {

namespace fs = std::filesystem;
using nlohmann::json;

const StrategyOutcome* ExperimentResult::find(Strategy s) const {
    for (const auto& e : ensembles)
        if (e.strategy == s) return &e;
    return nullptr;
}

DatasetPair load_dataset(const DatasetDescriptor& desc) {
    if (desc.source == "synthetic") {
        return make_synthetic(desc.kind, desc.n_per_class, desc.classes, desc.noise, desc.seed, desc.standardize);
    }
    if (desc.source == "idx") {
        DatasetPair pair{load_idx(desc.train_images, desc.train_labels, desc.train_limit, desc.classes),
                         load_idx(desc.test_images, desc.test_labels, desc.test_limit, desc.classes)};
        pair.test.split = Split::test;
        return pair;
    }
    throw ArgumentError("unknown dataset source '" + desc.source + "'");
}

ExperimentConfig resolve_config(const ExperimentConfig& cfg, const DatasetPair& data) {
    ExperimentConfig out = cfg;
    out.train.seed = out.seed;
    for (AttackConfig* a : {&out.train.attack, &out.train.eval_attack}) {
        a->input_lo = data.train.lo;
        a->input_hi = data.train.hi;
    }
    out.validate();
    return out;
}

namespace {

void prepare_output_dir(const fs::path& dir, bool overwrite) {
    std::error_code ec;
    if (fs::exists(dir, ec) && !fs::is_empty(dir, ec)) {
        if (!overwrite) {
            throw IoError("output directory " + dir.string() + " is not empty; pass the overwrite flag to replace it");
        }
        for (const auto& entry : fs::directory_iterator(dir)) fs::remove_all(entry.path(), ec);
    }
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir.string());
}

json gap_json(const GapReport& g) {
    auto triple = [](const GapTriple& t) {
        return json{{"best_epoch", t.best_epoch}, {"best", t.best}, {"last", t.last}, {"gap", t.gap}};
    };
    return json{{"robust", triple(g.robust)}, {"clean", triple(g.clean)}};
}

json histogram_json(const Histogram& h) {
    return json{{"lo", h.lo},         {"hi", h.hi},       {"counts", h.counts},     {"total", h.total},
                {"mean", h.mean},     {"stddev", h.stddev}, {"tensors", h.selected}};
}

void write_text(const fs::path& path, const std::string& text) {
    write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

class ExperimentSink final : public TrainSink {
public:
    ExperimentSink(const ExperimentConfig& cfg, const DatasetPair& data, const fs::path& out, std::ostream* progress)
        : cfg_(cfg),
          data_(data),
          store_(out / "checkpoints"),
          log_(out / "metrics.jsonl"),
          progress_(progress),
          start_epoch_(cfg.ensemble.start_epoch(cfg.train.total_epochs)),
          calibration_(fixed_batches(data.train, cfg.train.batch_size)) {
        for (Strategy s : cfg.ensemble.strategies)
            if (s != Strategy::none) outcomes_.push_back(StrategyOutcome{s, {}, {}, {}});
    }

    void on_checkpoint(const Checkpoint& ckpt) override { store_.append(ckpt); }

    void on_epoch_end(const MetricsRecord& record, const Checkpoint&) override {
        log_.append(LogRecord{"none", 0, record});
        if (progress_) {
            char line[160];
            std::snprintf(line, sizeof line, "epoch %3d  lr %.4g  loss %.4f  clean %.4f  robust %.4f", record.epoch,
                          record.lr, record.train_loss, record.test_clean_acc, record.test_robust_acc);
            *progress_ << line;
        }
        if (record.epoch >= start_epoch_) {
            const auto window = store_.epochs_between(start_epoch_, record.epoch);
            if (!window.empty()) {
                for (auto& outcome : outcomes_) finalize_one(outcome, record, window.size());
            }
        }
        if (progress_) *progress_ << '\n' << std::flush;
    }

    std::vector<StrategyOutcome> take_outcomes() { return std::move(outcomes_); }

private:
    void finalize_one(StrategyOutcome& outcome, const MetricsRecord& raw, std::size_t window) {
        Checkpoint ck = finalize(store_, outcome.strategy, cfg_.ensemble, cfg_.model, start_epoch_, raw.epoch,
                                 calibration_);
        const ModelState model{cfg_.model, ck.params, ck.bn};
        MetricsRecord rec;
        rec.epoch = raw.epoch;
        rec.lr = raw.lr;
        Rng unused(0);
        rec.train_clean_acc = accuracy(model, data_.train, nullptr, unused);
        rec.test_clean_acc = accuracy(model, data_.test, nullptr, unused);
        Rng erng = eval_rng(cfg_.train, raw.epoch);
        rec.test_robust_acc = accuracy(model, data_.test, &cfg_.train.eval_attack, erng);
        log_.append(LogRecord{to_string(outcome.strategy), window, rec});
        if (progress_) {
            char line[64];
            std::snprintf(line, sizeof line, "  %s %.4f", to_string(outcome.strategy), rec.test_robust_acc);
            *progress_ << line;
        }
        outcome.history.push_back(rec);
        outcome.final_model = std::move(ck);
    }

    const ExperimentConfig& cfg_;
    const DatasetPair& data_;
    DiskCheckpointStore store_;
    MetricsLogWriter log_;
    std::ostream* progress_;
    int start_epoch_;
    std::vector<Tensor> calibration_;
    std::vector<StrategyOutcome> outcomes_;
};

void write_curves(const fs::path& path, const ExperimentResult& r) {
    std::map<int, std::map<std::string, double>> table;
    for (const auto& m : r.raw_history) table[m.epoch]["none"] = m.test_robust_acc;
    for (const auto& e : r.ensembles)
        for (const auto& m : e.history) table[m.epoch][to_string(e.strategy)] = m.test_robust_acc;
    std::vector<std::string> columns{"none"};
    for (const auto& e : r.ensembles) columns.push_back(to_string(e.strategy));

    std::string text = "epoch";
    for (const auto& c : columns) text += "," + c;
    text += "\n";
    for (const auto& [epoch, row] : table) {
        text += std::to_string(epoch);
        for (const auto& c : columns) {
            text += ",";
            if (auto it = row.find(c); it != row.end()) text += json(it->second).dump();
        }
        text += "\n";
    }
    write_text(path, text);
}

} // namespace

void write_landscape_csv(const fs::path& path, const LandscapeGrid& grid) {
    std::string text = "alpha,beta,loss\n";
    for (int i = 0; i < grid.resolution; ++i)
        for (int j = 0; j < grid.resolution; ++j)
            text += json(grid.coefficients[i]).dump() + "," + json(grid.coefficients[j]).dump() + "," +
                    json(grid.at(i, j)).dump() + "\n";
    write_text(path, text);
}

std::string histogram_to_json(const Histogram& h) { return histogram_json(h).dump(2) + "\n"; }

std::string gap_to_json(const GapReport& g) { return gap_json(g).dump(2) + "\n"; }

ExperimentResult run_experiment(const ExperimentConfig& input, const RunOptions& options) {
    input.validate();
    const fs::path out = input.output_dir;
    ExperimentResult result;
    result.data = load_dataset(input.dataset);
    result.resolved = resolve_config(input, result.data);
    const ExperimentConfig& cfg = result.resolved;
    if (result.data.train.dim() != cfg.model.input_dim) {
        throw DimensionError("dataset width " + std::to_string(result.data.train.dim()) + " != model input_dim " +
                             std::to_string(cfg.model.input_dim));
    }

    prepare_output_dir(out, options.overwrite);
    save_config(cfg, out / "config.json");

    ExperimentSink sink(cfg, result.data, out, options.progress);
    TrainResult trained = adversarial_train(cfg.model, cfg.train, result.data, &sink);
    result.raw_history = std::move(trained.history);
    result.raw_gap = gap_report(result.raw_history);
    result.final_raw = std::move(trained.final_state);
    result.best_raw = std::move(trained.best);
    result.ensembles = sink.take_outcomes();

    fs::create_directories(out / "ensembles");
    json gaps;
    gaps["none"] = gap_json(result.raw_gap);
    for (auto& e : result.ensembles) {
        if (e.history.empty()) continue;
        e.gap = gap_report(e.history);
        gaps[to_string(e.strategy)] = gap_json(e.gap);
        save_checkpoint(e.final_model, out / "ensembles" / (std::string(to_string(e.strategy)) + "_final.ckpt"));
    }
    write_text(out / "gap_report.json", gaps.dump(2) + "\n");
    write_curves(out / "robust_curves.csv", result);

    if (cfg.exports.histogram) {
        const std::string selector = last_dense_weight_selector(cfg.model);
        const double r = cfg.exports.histogram_range;
        json hist;
        hist["none"] = histogram_json(weight_histogram(result.final_raw.params, selector, cfg.exports.histogram_bins, -r, r));
        for (const auto& e : result.ensembles) {
            if (e.history.empty()) continue;
            hist[to_string(e.strategy)] =
                histogram_json(weight_histogram(e.final_model.params, selector, cfg.exports.histogram_bins, -r, r));
        }
        write_text(out / "histograms.json", hist.dump(2) + "\n");
    }

    if (cfg.exports.landscape) {
        const AttackConfig* attack = cfg.landscape.adversarial ? &cfg.train.eval_attack : nullptr;
        const ModelState raw{cfg.model, result.final_raw.params, result.final_raw.bn};
        write_landscape_csv(out / "landscape_none.csv", landscape_grid(raw, result.data.test, cfg.landscape, attack));
        for (const auto& e : result.ensembles) {
            if (e.history.empty()) continue;
            const ModelState m{cfg.model, e.final_model.params, e.final_model.bn};
            write_landscape_csv(out / ("landscape_" + std::string(to_string(e.strategy)) + ".csv"),
                            landscape_grid(m, result.data.test, cfg.landscape, attack));
        }
    }
    return result;
}

} // namespace meat
