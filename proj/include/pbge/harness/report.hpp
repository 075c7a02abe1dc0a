#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pbge/harness/metrics.hpp"

namespace pbge::harness {

/// Mean of each value and up to window - 1 predecessors.
std::vector<double> rolling_mean(std::span<const double> values, std::size_t window = 2);

struct Series {
  std::string metric;
  std::vector<std::uint64_t> steps;
  std::vector<double> mean;
  std::vector<double> std;

  friend bool operator==(const Series&, const Series&) = default;
};

/// reward, length, success_rate, efficiency, train_reward, train_length.
std::vector<Series> metric_series(std::span<const MetricsRow> rows);

void write_series_csv(std::ostream& os, const Series& series);
Series read_series_csv(std::istream& is, const std::string& metric);

/// Line chart of the smoothed mean with a +-std band and an optional
/// horizontal baseline.
std::string render_svg(const Series& series, std::size_t window = 2, std::optional<double> baseline = std::nullopt);

using SummaryEntry = std::pair<std::string, Metrics>;
void write_summary_csv(std::ostream& os, const std::vector<SummaryEntry>& entries);
std::vector<SummaryEntry> read_summary_csv(std::istream& is);

/// Reads <run>/metrics.csv (and final_report/summary.csv for baselines when
/// present) and writes final_report/<metric>.csv and .svg.
void report(const std::string& run_dir);

}  // namespace pbge::harness
