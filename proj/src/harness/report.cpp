#include "pbge/harness/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "pbge/config.hpp"
#include "pbge/tensor/serialize.hpp"

namespace fs = std::filesystem;

namespace pbge::harness {

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> f;
  std::stringstream ss(line);
  for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
  return f;
}

template <class T>
T number(const std::string& s) {
  T v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw FormatError("bad number '" + s + "'");
  return v;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

constexpr const char* kSummaryHeader =
    "agent,episodes,mean_reward,reward_std,mean_length,length_std,success_rate,efficiency";

}  // namespace

std::vector<double> rolling_mean(std::span<const double> values, std::size_t window) {
  if (window == 0) throw ContractViolation("rolling_mean window must be positive");
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::size_t lo = i + 1 >= window ? i + 1 - window : 0;
    double acc = 0.0;
    for (std::size_t j = lo; j <= i; ++j) acc += values[j];
    out[i] = acc / static_cast<double>(i - lo + 1);
  }
  return out;
}

std::vector<Series> metric_series(std::span<const MetricsRow> rows) {
  std::vector<Series> out{{"reward", {}, {}, {}},       {"length", {}, {}, {}},
                          {"success_rate", {}, {}, {}}, {"efficiency", {}, {}, {}},
                          {"train_reward", {}, {}, {}}, {"train_length", {}, {}, {}}};
  for (const auto& r : rows) {
    const double values[6][2] = {{r.eval.mean_reward, r.eval.reward_std},
                                 {r.eval.mean_length, r.eval.length_std},
                                 {r.eval.success_rate, 0.0},
                                 {r.eval.efficiency, 0.0},
                                 {r.train_mean_reward, 0.0},
                                 {r.train_mean_length, 0.0}};
    for (std::size_t k = 0; k < out.size(); ++k) {
      out[k].steps.push_back(r.step);
      out[k].mean.push_back(values[k][0]);
      out[k].std.push_back(values[k][1]);
    }
  }
  return out;
}

void write_series_csv(std::ostream& os, const Series& s) {
  os << "step,mean,std\n";
  for (std::size_t i = 0; i < s.steps.size(); ++i) {
    os << s.steps[i] << ',' << format_double(s.mean[i]) << ',' << format_double(s.std[i]) << '\n';
  }
}

Series read_series_csv(std::istream& is, const std::string& metric) {
  std::string line;
  if (!std::getline(is, line) || line != "step,mean,std") throw FormatError("series csv: unexpected header");
  Series s{metric, {}, {}, {}};
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto f = split(line);
    if (f.size() != 3) throw FormatError("series csv: expected 3 fields");
    s.steps.push_back(number<std::uint64_t>(f[0]));
    s.mean.push_back(number<double>(f[1]));
    s.std.push_back(number<double>(f[2]));
  }
  return s;
}

std::string render_svg(const Series& s, std::size_t window, std::optional<double> baseline) {
  constexpr double W = 640, H = 400, left = 70, right = 20, top = 40, bottom = 50;
  const std::vector<double> mean = rolling_mean(s.mean, window);
  const std::vector<double> sd = rolling_mean(s.std, window);

  double ylo = 0.0, yhi = 0.0;
  bool any = false;
  auto include = [&](double v) {
    if (!std::isfinite(v)) return;
    ylo = any ? std::min(ylo, v) : v;
    yhi = any ? std::max(yhi, v) : v;
    any = true;
  };
  for (std::size_t i = 0; i < mean.size(); ++i) {
    include(mean[i] - sd[i]);
    include(mean[i] + sd[i]);
  }
  if (baseline) include(*baseline);
  if (!any || yhi - ylo < 1e-12) {
    ylo -= 1.0;
    yhi += 1.0;
  }
  const double xlo = s.steps.empty() ? 0.0 : static_cast<double>(s.steps.front());
  const double xhi = s.steps.empty() ? 1.0 : static_cast<double>(s.steps.back());
  auto px = [&](double x) { return xhi > xlo ? left + (x - xlo) / (xhi - xlo) * (W - left - right) : (W + left - right) / 2; };
  auto py = [&](double y) { return top + (yhi - y) / (yhi - ylo) * (H - top - bottom); };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
     << ' ' << H << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">"
     << xml_escape(s.metric) << "</text>\n";
  os << "<line x1=\"" << left << "\" y1=\"" << H - bottom << "\" x2=\"" << W - right << "\" y2=\"" << H - bottom
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << H - bottom
     << "\" stroke=\"black\"/>\n";
  auto label = [&](double x, double y, const std::string& text, const char* anchor) {
    os << "<text x=\"" << x << "\" y=\"" << y << "\" text-anchor=\"" << anchor
       << "\" font-family=\"sans-serif\" font-size=\"11\">" << xml_escape(text) << "</text>\n";
  };
  label(left - 6, py(yhi) + 4, fmt(yhi), "end");
  label(left - 6, py(ylo) + 4, fmt(ylo), "end");
  label(left, H - bottom + 16, fmt(xlo), "start");
  label(W - right, H - bottom + 16, fmt(xhi), "end");
  label((W + left - right) / 2, H - 12, "timesteps", "middle");

  if (mean.size() > 1) {
    os << "<polygon fill=\"steelblue\" fill-opacity=\"0.2\" stroke=\"none\" points=\"";
    for (std::size_t i = 0; i < mean.size(); ++i) os << px(s.steps[i]) << ',' << py(mean[i] + sd[i]) << ' ';
    for (std::size_t i = mean.size(); i-- > 0;) os << px(s.steps[i]) << ',' << py(mean[i] - sd[i]) << ' ';
    os << "\"/>\n";
    os << "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < mean.size(); ++i) os << px(s.steps[i]) << ',' << py(mean[i]) << ' ';
    os << "\"/>\n";
  }
  for (std::size_t i = 0; i < mean.size(); ++i) {
    os << "<circle cx=\"" << px(s.steps[i]) << "\" cy=\"" << py(mean[i]) << "\" r=\"3\" fill=\"steelblue\"/>\n";
  }
  if (baseline && std::isfinite(*baseline)) {
    os << "<line x1=\"" << left << "\" y1=\"" << py(*baseline) << "\" x2=\"" << W - right << "\" y2=\""
       << py(*baseline) << "\" stroke=\"gray\" stroke-dasharray=\"6,4\"/>\n";
    label(W - right - 4, py(*baseline) - 4, "BASELINE", "end");
  }
  os << "</svg>\n";
  return os.str();
}

void write_summary_csv(std::ostream& os, const std::vector<SummaryEntry>& entries) {
  os << kSummaryHeader << '\n';
  for (const auto& [name, m] : entries) {
    os << name << ',' << m.episodes << ',' << format_double(m.mean_reward) << ',' << format_double(m.reward_std)
       << ',' << format_double(m.mean_length) << ',' << format_double(m.length_std) << ','
       << format_double(m.success_rate) << ',' << format_double(m.efficiency) << '\n';
  }
}

std::vector<SummaryEntry> read_summary_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kSummaryHeader) throw FormatError("summary csv: unexpected header");
  std::vector<SummaryEntry> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto f = split(line);
    if (f.size() != 8) throw FormatError("summary csv: expected 8 fields");
    Metrics m;
    m.episodes = number<std::size_t>(f[1]);
    m.mean_reward = number<double>(f[2]);
    m.reward_std = number<double>(f[3]);
    m.mean_length = number<double>(f[4]);
    m.length_std = number<double>(f[5]);
    m.success_rate = number<double>(f[6]);
    m.efficiency = number<double>(f[7]);
    out.emplace_back(f[0], m);
  }
  return out;
}

void report(const std::string& run_dir) {
  const fs::path dir(run_dir);
  std::ifstream in(dir / "metrics.csv");
  if (!in) throw FormatError("no metrics.csv in " + run_dir);
  const auto rows = read_metrics_csv(in);
  if (rows.empty()) throw ContractViolation("report needs at least one metrics row");

  std::optional<Metrics> baseline;
  if (std::ifstream sin(dir / "final_report" / "summary.csv"); sin) {
    for (const auto& [name, m] : read_summary_csv(sin)) {
      if (name == "baseline") baseline = m;
    }
  }
  const fs::path out = dir / "final_report";
  fs::create_directories(out);
  for (const Series& s : metric_series(rows)) {
    std::optional<double> line;
    if (baseline) {
      if (s.metric == "reward" || s.metric == "train_reward") line = baseline->mean_reward;
      else if (s.metric == "length" || s.metric == "train_length") line = baseline->mean_length;
      else if (s.metric == "success_rate") line = baseline->success_rate;
      else line = baseline->efficiency;
    }
    std::ofstream csv(out / (s.metric + ".csv"));
    write_series_csv(csv, s);
    std::ofstream svg(out / (s.metric + ".svg"));
    svg << render_svg(s, 2, line);
    if (!csv || !svg) throw FormatError("cannot write report files in " + out.string());
  }
}

}  // namespace pbge::harness
