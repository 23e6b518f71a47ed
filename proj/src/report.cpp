#include "restorekit/report.hpp"

#include <cmath>
#include <fstream>
#include "json.hpp"

#include "restorekit/degrade.hpp"
#include "restorekit/errors.hpp"

namespace restorekit {

void MetricReport::add(const std::string& item, const std::string& metric, double value) {
  rows_.push_back({item, metric, value});
}

std::vector<double> MetricReport::values(const std::string& metric) const {
  std::vector<double> out;
  for (const auto& r : rows_) {
    if (r.metric == metric) out.push_back(r.value);
  }
  return out;
}

std::map<std::string, MetricSummary> MetricReport::summary() const {
  std::map<std::string, MetricSummary> out;
  std::map<std::string, std::vector<double>> grouped;
  for (const auto& r : rows_) grouped[r.metric].push_back(r.value);
  for (const auto& [metric, v] : grouped) {
    MetricSummary s;
    s.count = v.size();
    double sum = 0.0;
    for (double x : v) sum += x;
    s.mean = sum / static_cast<double>(v.size());
    if (v.size() > 1) {
      double ss = 0.0;
      for (double x : v) ss += (x - s.mean) * (x - s.mean);
      s.std_error = std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
    }
    out[metric] = s;
  }
  return out;
}

void MetricReport::write_csv(std::ostream& os) const {
  os << "item,metric,value\n";
  for (const auto& r : rows_) os << r.item << ',' << r.metric << ',' << format_real(r.value) << '\n';
}

void MetricReport::write_csv(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  write_csv(os);
}

void MetricReport::write_json(std::ostream& os) const {
  auto num = [](double v) {
    return std::isfinite(v) ? nlohmann::ordered_json(v) : nlohmann::ordered_json(nullptr);
  };
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [metric, s] : summary()) {
    j[metric] = {{"mean", num(s.mean)}, {"std_error", num(s.std_error)}, {"count", s.count}};
  }
  os << j.dump(2) << '\n';
}

void MetricReport::write_json(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  write_json(os);
}

}  // namespace restorekit
