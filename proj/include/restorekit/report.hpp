#pragma once

#include <filesystem>
#include <map>
#include <ostream>
#include <string>
#include <vector>

namespace restorekit {

struct MetricRow {
  std::string item;
  std::string metric;
  double value;
};

struct MetricSummary {
  double mean = 0.0;
  /// Sample standard deviation / sqrt(n); 0 for a single item.
  double std_error = 0.0;
  std::size_t count = 0;
};

/// Per-item metric values in insertion order plus per-metric aggregates.
class MetricReport {
 public:
  void add(const std::string& item, const std::string& metric, double value);
  const std::vector<MetricRow>& rows() const { return rows_; }
  std::vector<double> values(const std::string& metric) const;
  std::map<std::string, MetricSummary> summary() const;

  /// "item,metric,value" with %.17g values.
  void write_csv(std::ostream& os) const;
  void write_csv(const std::filesystem::path& path) const;
  /// {"metric": {"mean": .., "std_error": .., "count": ..}}; non-finite
  /// values are written as null.
  void write_json(std::ostream& os) const;
  void write_json(const std::filesystem::path& path) const;

 private:
  std::vector<MetricRow> rows_;
};

}  // namespace restorekit
