#include "meatlab/metrics_log.hpp"

#include "meatlab/errors.hpp"

#include <nlohmann/json.hpp>

namespace meat {

using nlohmann::json;

std::string format_record(const LogRecord& r) {
    const MetricsRecord& m = r.metrics;
    json j;
    j["v"] = kMetricsLogVersion;
    j["strategy"] = r.strategy;
    j["epoch"] = m.epoch;
    j["window"] = r.window;
    j["lr"] = m.lr;
    j["train_loss"] = r.is_ensemble() ? json(nullptr) : json(m.train_loss);
    j["train_clean_acc"] = m.train_clean_acc;
    j["train_robust_acc"] = r.is_ensemble() ? json(nullptr) : json(m.train_robust_acc);
    j["test_clean_acc"] = m.test_clean_acc;
    j["test_robust_acc"] = m.test_robust_acc;
    return j.dump();
}

LogRecord parse_record(const std::string& line) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::parse_error& e) {
        throw FormatError(std::string("metrics log: unparsable line: ") + e.what());
    }
    try {
        if (j.at("v").get<int>() != kMetricsLogVersion) {
            throw VersionError("metrics log: unsupported record version " + j.at("v").dump());
        }
        LogRecord r;
        r.strategy = j.at("strategy").get<std::string>();
        r.window = j.at("window").get<std::size_t>();
        MetricsRecord& m = r.metrics;
        m.epoch = j.at("epoch").get<int>();
        m.lr = j.at("lr").get<double>();
        m.train_loss = j.at("train_loss").is_null() ? 0.0 : j.at("train_loss").get<double>();
        m.train_clean_acc = j.at("train_clean_acc").get<double>();
        m.train_robust_acc = j.at("train_robust_acc").is_null() ? 0.0 : j.at("train_robust_acc").get<double>();
        m.test_clean_acc = j.at("test_clean_acc").get<double>();
        m.test_robust_acc = j.at("test_robust_acc").get<double>();
        return r;
    } catch (const json::exception& e) {
        throw FormatError(std::string("metrics log: bad record: ") + e.what());
    }
}

MetricsLogWriter::MetricsLogWriter(const std::filesystem::path& path)
    : path_(path), out_(path, std::ios::out | std::ios::app) {
    if (!out_) throw IoError("cannot open metrics log " + path.string());
}

void MetricsLogWriter::append(const LogRecord& record) {
    out_ << format_record(record) << '\n';
    out_.flush();
    if (!out_) throw IoError("write failed for metrics log " + path_.string());
}

std::vector<LogRecord> read_metrics_log(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open metrics log " + path.string());
    std::vector<LogRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            out.push_back(parse_record(line));
        } catch (const FormatError& e) {
            throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

std::map<std::string, std::vector<MetricsRecord>> histories_by_strategy(const std::vector<LogRecord>& records) {
    std::map<std::string, std::vector<MetricsRecord>> out;
    for (const auto& r : records) out[r.strategy].push_back(r.metrics);
    return out;
}

} // namespace meat
