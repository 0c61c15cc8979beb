#include "fdiv/metrics_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "fdiv/errors.hpp"

namespace fdivergence {

namespace {

std::vector<std::string> header_of(const std::vector<MetricRecord>& records) {
  std::vector<std::string> keys;
  for (const MetricRecord& r : records)
    for (const auto& [k, v] : r)
      if (std::find(keys.begin(), keys.end(), k) == keys.end()) keys.push_back(k);
  return keys;
}

std::string quote(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string cell_text(const MetricValue& v) {
  if (const auto* i = std::get_if<std::int64_t>(&v)) return std::to_string(*i);
  if (const auto* d = std::get_if<double>(&v)) return format_double(*d);
  return quote(std::get<std::string>(v));
}

// Integer, then double, then string.
MetricValue parse_cell(const std::string& s) {
  std::int64_t i = 0;
  const char* end = s.data() + s.size();
  if (auto [p, ec] = std::from_chars(s.data(), end, i); ec == std::errc() && p == end) return i;
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  double d = 0.0;
  if (auto [p, ec] = std::from_chars(s.data(), end, d); ec == std::errc() && p == end) return d;
  return s;
}

// Splits one CSV line honoring double-quoted fields.
std::vector<std::string> csv_fields(const std::string& line) {
  std::vector<std::string> out(1);
  bool quoted = false;
  for (std::size_t n = 0; n < line.size(); ++n) {
    const char c = line[n];
    if (quoted) {
      if (c == '"' && n + 1 < line.size() && line[n + 1] == '"') {
        out.back() += '"';
        ++n;
      } else if (c == '"') {
        quoted = false;
      } else {
        out.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.emplace_back();
    } else if (c != '\r') {
      out.back() += c;
    }
  }
  return out;
}

MetricValue from_json_value(const nlohmann::json& v) {
  if (v.is_number_integer()) return v.get<std::int64_t>();
  if (v.is_number()) return v.get<double>();
  const std::string s = v.get<std::string>();
  if (s == "inf" || s == "-inf" || s == "nan") return parse_cell(s);
  return s;
}

}  // namespace

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[40];
  const int n = std::snprintf(buf, sizeof buf, "%.17g", x);
  std::string s(buf, static_cast<std::size_t>(n));
  if (s.find_first_of(".eE") == std::string::npos) s += ".0";
  return s;
}

nlohmann::json json_number(double x) {
  if (std::isfinite(x)) return x;
  return format_double(x);
}

std::string metrics_to_csv(const std::vector<MetricRecord>& records) {
  const auto keys = header_of(records);
  std::ostringstream os;
  for (std::size_t c = 0; c < keys.size(); ++c) os << (c ? "," : "") << quote(keys[c]);
  os << '\n';
  for (const MetricRecord& r : records) {
    for (std::size_t c = 0; c < keys.size(); ++c) {
      if (c) os << ',';
      const auto it = std::find_if(r.begin(), r.end(), [&](const auto& kv) { return kv.first == keys[c]; });
      if (it != r.end()) os << cell_text(it->second);
    }
    os << '\n';
  }
  return os.str();
}

std::string metrics_to_jsonl(const std::vector<MetricRecord>& records) {
  std::string out;
  for (const MetricRecord& r : records) {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (const auto& [k, v] : r) {
      std::visit(
          [&](const auto& x) {
            using X = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<X, double>) {
              j[k] = std::isfinite(x) ? nlohmann::ordered_json(x) : nlohmann::ordered_json(format_double(x));
            } else {
              j[k] = x;
            }
          },
          v);
    }
    out += j.dump() + "\n";
  }
  return out;
}

void save_metrics(const std::filesystem::path& path, const std::vector<MetricRecord>& records) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write metrics to " + path.string());
  out << (path.extension() == ".jsonl" ? metrics_to_jsonl(records) : metrics_to_csv(records));
  if (!out.flush()) throw std::runtime_error("write failed for " + path.string());
}

std::vector<MetricRecord> parse_metrics_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) return {};
  const auto keys = csv_fields(line);
  std::vector<MetricRecord> out;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    const auto fields = csv_fields(line);
    if (fields.size() != keys.size()) throw ParseError("metrics CSV: row " + std::to_string(row) + " has wrong width");
    MetricRecord r;
    for (std::size_t c = 0; c < keys.size(); ++c)
      if (!fields[c].empty()) r.emplace_back(keys[c], parse_cell(fields[c]));
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<MetricRecord> load_metrics(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read metrics from " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  if (path.extension() != ".jsonl") return parse_metrics_csv(ss.str());
  std::vector<MetricRecord> out;
  std::string line;
  while (std::getline(ss, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::ordered_json::parse(line);
    MetricRecord r;
    for (const auto& [k, v] : j.items()) r.emplace_back(k, from_json_value(v));
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace fdivergence
