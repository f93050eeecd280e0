#include "meatlab/config.hpp"

#include "meatlab/errors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace meat {

using nlohmann::json;

// ---------------------------------------------------------------------------
// struct <-> json

void to_json(json& j, const AttackConfig& a) {
    j = json{{"epsilon", a.epsilon},       {"step_size", a.step_size}, {"steps", a.steps},
             {"random_start", a.random_start}, {"input_lo", a.input_lo},   {"input_hi", a.input_hi}};
}

void from_json(const json& j, AttackConfig& a) {
    j.at("epsilon").get_to(a.epsilon);
    j.at("step_size").get_to(a.step_size);
    j.at("steps").get_to(a.steps);
    j.at("random_start").get_to(a.random_start);
    j.at("input_lo").get_to(a.input_lo);
    j.at("input_hi").get_to(a.input_hi);
}

void to_json(json& j, const ModelSpec& m) {
    json layers = json::array();
    for (const auto& l : m.layers) layers.push_back({{"kind", to_string(l.kind)}, {"units", l.units}});
    j = json{{"input_dim", m.input_dim}, {"num_classes", m.num_classes}, {"layers", layers}};
}

void from_json(const json& j, ModelSpec& m) {
    j.at("input_dim").get_to(m.input_dim);
    j.at("num_classes").get_to(m.num_classes);
    m.layers.clear();
    for (const auto& l : j.at("layers")) {
        LayerSpec spec;
        spec.kind = layer_kind_from_string(l.at("kind").get<std::string>());
        spec.units = l.value("units", std::size_t{0});
        m.layers.push_back(spec);
    }
}

void to_json(json& j, const TrainConfig& t) {
    j = json{{"total_epochs", t.total_epochs},
             {"batch_size", t.batch_size},
             {"base_lr", t.base_lr},
             {"decay_fractions", t.decay_fractions},
             {"decayed_lrs", t.decayed_lrs},
             {"momentum", t.momentum},
             {"weight_decay", t.weight_decay},
             {"snapshot_cadence", t.snapshot_cadence},
             {"attack", t.attack},
             {"eval_attack", t.eval_attack}};
}

void from_json(const json& j, TrainConfig& t) {
    j.at("total_epochs").get_to(t.total_epochs);
    j.at("batch_size").get_to(t.batch_size);
    j.at("base_lr").get_to(t.base_lr);
    j.at("decay_fractions").get_to(t.decay_fractions);
    j.at("decayed_lrs").get_to(t.decayed_lrs);
    j.at("momentum").get_to(t.momentum);
    j.at("weight_decay").get_to(t.weight_decay);
    j.at("snapshot_cadence").get_to(t.snapshot_cadence);
    j.at("attack").get_to(t.attack);
    j.at("eval_attack").get_to(t.eval_attack);
}

void to_json(json& j, const EnsembleConfig& e) {
    json strategies = json::array();
    for (Strategy s : e.strategies) strategies.push_back(to_string(s));
    j = json{{"strategies", strategies}, {"start_fraction", e.start_fraction}, {"ema_decay", e.ema_decay}};
}

void from_json(const json& j, EnsembleConfig& e) {
    e.strategies.clear();
    for (const auto& s : j.at("strategies")) e.strategies.push_back(strategy_from_string(s.get<std::string>()));
    j.at("start_fraction").get_to(e.start_fraction);
    j.at("ema_decay").get_to(e.ema_decay);
}

void to_json(json& j, const LandscapeConfig& l) {
    j = json{{"resolution", l.resolution},   {"range", l.range},
             {"direction_seed", l.direction_seed}, {"normalization", to_string(l.normalization)},
             {"sample_size", l.sample_size}, {"sample_seed", l.sample_seed},
             {"adversarial", l.adversarial}};
}

void from_json(const json& j, LandscapeConfig& l) {
    j.at("resolution").get_to(l.resolution);
    j.at("range").get_to(l.range);
    j.at("direction_seed").get_to(l.direction_seed);
    l.normalization = direction_norm_from_string(j.at("normalization").get<std::string>());
    j.at("sample_size").get_to(l.sample_size);
    j.at("sample_seed").get_to(l.sample_seed);
    j.at("adversarial").get_to(l.adversarial);
}

void to_json(json& j, const DatasetDescriptor& d) {
    j = json{{"source", d.source},           {"kind", to_string(d.kind)},       {"n_per_class", d.n_per_class},
             {"classes", d.classes},         {"noise", d.noise},                {"standardize", d.standardize},
             {"seed", d.seed},               {"train_images", d.train_images},  {"train_labels", d.train_labels},
             {"test_images", d.test_images}, {"test_labels", d.test_labels},    {"train_limit", d.train_limit},
             {"test_limit", d.test_limit}};
}

void from_json(const json& j, DatasetDescriptor& d) {
    j.at("source").get_to(d.source);
    d.kind = synthetic_kind_from_string(j.at("kind").get<std::string>());
    j.at("n_per_class").get_to(d.n_per_class);
    j.at("classes").get_to(d.classes);
    j.at("noise").get_to(d.noise);
    j.at("standardize").get_to(d.standardize);
    j.at("seed").get_to(d.seed);
    j.at("train_images").get_to(d.train_images);
    j.at("train_labels").get_to(d.train_labels);
    j.at("test_images").get_to(d.test_images);
    j.at("test_labels").get_to(d.test_labels);
    j.at("train_limit").get_to(d.train_limit);
    j.at("test_limit").get_to(d.test_limit);
}

void to_json(json& j, const ExportConfig& e) {
    j = json{{"histogram", e.histogram},
             {"histogram_bins", e.histogram_bins},
             {"histogram_range", e.histogram_range},
             {"landscape", e.landscape}};
}

void from_json(const json& j, ExportConfig& e) {
    j.at("histogram").get_to(e.histogram);
    j.at("histogram_bins").get_to(e.histogram_bins);
    j.at("histogram_range").get_to(e.histogram_range);
    j.at("landscape").get_to(e.landscape);
}

void to_json(json& j, const ExperimentConfig& c) {
    j = json{{"model", c.model},         {"train", c.train},     {"ensemble", c.ensemble},
             {"landscape", c.landscape}, {"dataset", c.dataset}, {"exports", c.exports},
             {"output_dir", c.output_dir}, {"seed", c.seed}};
}

void from_json(const json& j, ExperimentConfig& c) {
    j.at("model").get_to(c.model);
    j.at("train").get_to(c.train);
    j.at("ensemble").get_to(c.ensemble);
    j.at("landscape").get_to(c.landscape);
    j.at("dataset").get_to(c.dataset);
    j.at("exports").get_to(c.exports);
    j.at("output_dir").get_to(c.output_dir);
    j.at("seed").get_to(c.seed);
    c.train.seed = c.seed;
}

// ---------------------------------------------------------------------------

namespace {

// Overlays `user` onto `base`; objects merge key by key, everything else replaces.
void merge_into(json& base, const json& user, const std::string& where) {
    if (!user.is_object()) throw FormatError("config: expected an object at '" + where + "'");
    for (auto it = user.begin(); it != user.end(); ++it) {
        const std::string path = where.empty() ? it.key() : where + "." + it.key();
        if (!base.contains(it.key())) throw FormatError("config: unknown field '" + path + "'");
        json& slot = base[it.key()];
        if (slot.is_object() && path != "model") {
            merge_into(slot, it.value(), path);
        } else {
            slot = it.value();
        }
    }
}

ExperimentConfig from_tree(const json& tree) {
    try {
        ExperimentConfig cfg = tree.get<ExperimentConfig>();
        cfg.validate();
        return cfg;
    } catch (const json::exception& e) {
        throw FormatError(std::string("config: ") + e.what());
    }
}

void collect_paths(const json& node, const std::string& prefix, std::vector<std::string>& out) {
    for (auto it = node.begin(); it != node.end(); ++it) {
        const std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
        const json& v = it.value();
        if (v.is_object()) {
            collect_paths(v, path, out);
        } else if (v.is_array()) {
            const bool scalars = std::all_of(v.begin(), v.end(), [](const json& e) { return e.is_primitive(); });
            if (scalars) out.push_back(path);
        } else {
            out.push_back(path);
        }
    }
}

json parse_override_value(const json& current, const std::string& text) {
    json parsed;
    try {
        parsed = json::parse(text);
    } catch (const json::parse_error&) {
        parsed = json(text);
    }
    if (current.is_array() && !parsed.is_array()) {
        json arr = json::array();
        std::stringstream ss(text);
        std::string item;
        while (std::getline(ss, item, ',')) {
            try {
                arr.push_back(json::parse(item));
            } catch (const json::parse_error&) {
                arr.push_back(item);
            }
        }
        parsed = arr;
    }
    // keep strings as strings even when they happen to look numeric
    if (current.is_string() && !parsed.is_string()) parsed = json(text);
    return parsed;
}

} // namespace

void ExperimentConfig::validate() const {
    model.validate();
    train.validate();
    ensemble.validate();
    landscape.validate();
    if (dataset.source != "synthetic" && dataset.source != "idx") {
        throw ArgumentError("config: dataset.source must be 'synthetic' or 'idx'");
    }
    if (exports.histogram_bins == 0 || !(exports.histogram_range > 0.0)) {
        throw ArgumentError("config: histogram bins and range must be positive");
    }
    if (output_dir.empty()) throw ArgumentError("config: output_dir is empty");
}

ExperimentConfig default_experiment_config() {
    ExperimentConfig cfg;
    cfg.validate();
    return cfg;
}

std::string config_to_json(const ExperimentConfig& cfg) {
    return json(cfg).dump(2) + "\n";
}

ExperimentConfig config_from_json(const std::string& text) {
    json user;
    try {
        user = json::parse(text);
    } catch (const json::parse_error& e) {
        throw FormatError(std::string("config: ") + e.what());
    }
    json tree = json(ExperimentConfig{});
    merge_into(tree, user, "");
    return from_tree(tree);
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return config_from_json(ss.str());
}

void save_config(const ExperimentConfig& cfg, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write config " + path.string());
    out << config_to_json(cfg);
    if (!out) throw IoError("write failed for config " + path.string());
}

std::vector<std::string> config_field_paths() {
    std::vector<std::string> out;
    collect_paths(json(ExperimentConfig{}), "", out);
    return out;
}

ExperimentConfig apply_overrides(const ExperimentConfig& cfg,
                                 const std::vector<std::pair<std::string, std::string>>& overrides) {
    json tree = json(cfg);
    for (const auto& [path, value] : overrides) {
        json::json_pointer ptr;
        std::stringstream ss(path);
        std::string part;
        while (std::getline(ss, part, '.')) ptr /= part;
        if (!tree.contains(ptr)) throw ArgumentError("unknown config field '" + path + "'");
        tree[ptr] = parse_override_value(tree[ptr], value);
    }
    return from_tree(tree);
}

ExperimentConfig apply_environment(const ExperimentConfig& cfg) {
    std::vector<std::pair<std::string, std::string>> overrides;
    if (const char* seed = std::getenv(kSeedEnv)) overrides.emplace_back("seed", seed);
    if (const char* dir = std::getenv(kOutputDirEnv)) overrides.emplace_back("output_dir", dir);
    return overrides.empty() ? cfg : apply_overrides(cfg, overrides);
}

} // namespace meat
