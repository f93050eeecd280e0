#pragma once

#include "meatlab/trainer.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

namespace meat {

inline constexpr int kMetricsLogVersion = 1;

/// One line of the metrics log. Raw-trajectory records carry strategy "none"
/// and window 0; ensemble records carry the strategy name and the number of
/// snapshots combined, and have no train loss / train robust accuracy.
struct LogRecord {
    std::string strategy = "none";
    std::size_t window = 0;
    MetricsRecord metrics;

    bool is_ensemble() const { return window > 0; }
    bool operator==(const LogRecord&) const = default;
};

/// A single JSON object with inline field names, no trailing newline.
std::string format_record(const LogRecord& record);
/// Throws FormatError naming the problem.
LogRecord parse_record(const std::string& line);

/// Append-only line-delimited writer; every record is flushed as it is written.
class MetricsLogWriter {
public:
    explicit MetricsLogWriter(const std::filesystem::path& path);
    void append(const LogRecord& record);

private:
    std::filesystem::path path_;
    std::ofstream out_;
};

std::vector<LogRecord> read_metrics_log(const std::filesystem::path& path);

/// Records grouped by strategy tag, in log order.
std::map<std::string, std::vector<MetricsRecord>> histories_by_strategy(const std::vector<LogRecord>& records);

} // namespace meat
