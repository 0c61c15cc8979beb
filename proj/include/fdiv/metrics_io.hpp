#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

namespace fdivergence {

using MetricValue = std::variant<std::int64_t, double, std::string>;
/// Ordered flat record; key order fixes column order on first appearance.
using MetricRecord = std::vector<std::pair<std::string, MetricValue>>;

/// 17 significant digits, always carrying a '.' or exponent so the value
/// reads back as a double; non-finite values print as inf, -inf, nan.
std::string format_double(double x);

/// JSON number, or the strings "inf", "-inf", "nan" for non-finite values.
nlohmann::json json_number(double x);

/// CSV with the union of keys as header (first-seen order); missing cells
/// are empty. A ".jsonl" extension writes one JSON object per line instead.
/// Throws std::runtime_error naming the path on I/O failure.
void save_metrics(const std::filesystem::path& path, const std::vector<MetricRecord>& records);

/// Serialized form written by save_metrics, for stdout or comparisons.
std::string metrics_to_csv(const std::vector<MetricRecord>& records);
std::string metrics_to_jsonl(const std::vector<MetricRecord>& records);

/// Reads either format back. Empty CSV cells are omitted from the record.
std::vector<MetricRecord> load_metrics(const std::filesystem::path& path);
std::vector<MetricRecord> parse_metrics_csv(const std::string& text);

}  // namespace fdivergence
