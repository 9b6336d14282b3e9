#include "secure/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "secure/util.hpp"

namespace secure {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void write_bench_csv(const std::vector<BenchRow>& rows,
                     const std::filesystem::path& p) {
  std::ostringstream os;
  os << "model,condition,ap_mean,ap_std,mtta_mean,mtta_std,seeds\n";
  for (const auto& r : rows) {
    os << r.model << ',' << r.condition << ',' << fmt(r.ap_mean) << ','
       << fmt(r.ap_std) << ',' << fmt(r.mtta_mean) << ',' << fmt(r.mtta_std)
       << ',' << r.seed_count << '\n';
  }
  write_file_atomic(p, os.str());
}

void write_bench_json(const std::vector<BenchRow>& rows,
                      const std::filesystem::path& p) {
  auto arr = nlohmann::json::array();
  for (const auto& r : rows) {
    arr.push_back({{"model", r.model},
                   {"condition", r.condition},
                   {"ap_mean", r.ap_mean},
                   {"ap_std", r.ap_std},
                   {"mtta_mean", r.mtta_mean},
                   {"mtta_std", r.mtta_std},
                   {"seeds", r.seed_count}});
  }
  write_file_atomic(p, nlohmann::json{{"rows", arr}}.dump(2) + "\n");
}

void write_certification_csv(
    const std::vector<std::pair<std::string, CertificationResult>>& results,
    const std::filesystem::path& p) {
  std::ostringstream os;
  os << "model,epsilon,gamma1,gamma2,beta1,beta2,random_probes,"
        "pgd_iterations,videos\n";
  for (const auto& [name, c] : results) {
    os << name << ',' << fmt(c.epsilon) << ',' << fmt(c.gamma1_hat) << ','
       << fmt(c.gamma2_hat) << ',' << fmt(c.beta1_hat) << ','
       << fmt(c.beta2_hat) << ',' << c.random_probes << ','
       << c.pgd_iterations << ',' << c.videos << '\n';
  }
  write_file_atomic(p, os.str());
}

void write_certification_json(
    const std::vector<std::pair<std::string, CertificationResult>>& results,
    const std::filesystem::path& p) {
  auto arr = nlohmann::json::array();
  for (const auto& [name, c] : results) {
    arr.push_back({{"model", name},
                   {"epsilon", c.epsilon},
                   {"gamma1_hat", c.gamma1_hat},
                   {"gamma2_hat", c.gamma2_hat},
                   {"beta1_hat", c.beta1_hat},
                   {"beta2_hat", c.beta2_hat},
                   {"random_probes", c.random_probes},
                   {"pgd_iterations", c.pgd_iterations},
                   {"videos", c.videos},
                   {"note", "empirical maxima; lower bounds on the suprema"}});
  }
  write_file_atomic(p, nlohmann::json{{"results", arr}}.dump(2) + "\n");
}

void write_ablation_csv(const std::vector<AblationRow>& rows,
                        const std::filesystem::path& p) {
  std::ostringstream os;
  os << "enabled_terms,ap,mtta\n";
  for (const auto& r : rows) {
    os << r.enabled_terms << ',' << fmt(r.ap) << ',' << fmt(r.mtta) << '\n';
  }
  write_file_atomic(p, os.str());
}

void write_ablation_json(const std::vector<AblationRow>& rows,
                         const std::filesystem::path& p) {
  auto arr = nlohmann::json::array();
  for (const auto& r : rows) {
    arr.push_back({{"enabled_terms", r.enabled_terms},
                   {"ap", r.ap},
                   {"mtta", r.mtta}});
  }
  write_file_atomic(p, nlohmann::json{{"rows", arr}}.dump(2) + "\n");
}

void write_trajectories_csv(const std::vector<TrajectorySeries>& series,
                            const std::filesystem::path& p) {
  std::ostringstream os;
  os << "video_id,condition,frame,p\n";
  for (const auto& s : series) {
    for (std::size_t t = 0; t < s.p.size(); ++t) {
      os << s.video_id << ',' << s.condition << ',' << (t + 1) << ','
         << fmt(s.p[t]) << '\n';
    }
  }
  write_file_atomic(p, os.str());
}

std::vector<TrajectorySeries> read_trajectories_csv(
    const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw IoError("cannot open " + p.string());
  std::string line;
  std::getline(in, line);  // header
  std::vector<TrajectorySeries> series;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string video_id, condition, frame, value;
    if (!std::getline(ls, video_id, ',') ||
        !std::getline(ls, condition, ',') || !std::getline(ls, frame, ',') ||
        !std::getline(ls, value)) {
      throw IoError("malformed trajectory row in " + p.string() + ": " + line);
    }
    if (series.empty() || series.back().video_id != video_id ||
        series.back().condition != condition) {
      series.push_back({video_id, condition, {}});
    }
    series.back().p.push_back(std::stod(value));
  }
  return series;
}

void write_svg_chart(const std::string& title,
                     const std::vector<TrajectorySeries>& series,
                     const std::filesystem::path& p) {
  const double width = 860, height = 420;
  const double left = 60, right = 20, top = 40, bottom = 40;
  const double plot_w = width - left - right;
  const double plot_h = height - top - bottom;

  std::size_t max_len = 1;
  double y_min = 0.0, y_max = 1.0;
  for (const auto& s : series) {
    max_len = std::max(max_len, s.p.size());
    for (double v : s.p) {
      y_min = std::min(y_min, v);
      y_max = std::max(y_max, v);
    }
  }
  if (y_max <= y_min) y_max = y_min + 1.0;

  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                  "#9467bd", "#8c564b", "#17becf", "#7f7f7f"};
  std::ostringstream os;
  os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width
     << "' height='" << height << "'>\n";
  os << "<rect width='100%' height='100%' fill='white'/>\n";
  os << "<text x='" << width / 2 << "' y='20' text-anchor='middle' "
     << "font-family='sans-serif' font-size='14'>" << title << "</text>\n";
  // Axes.
  os << "<line x1='" << left << "' y1='" << top << "' x2='" << left
     << "' y2='" << top + plot_h << "' stroke='black'/>\n";
  os << "<line x1='" << left << "' y1='" << top + plot_h << "' x2='"
     << left + plot_w << "' y2='" << top + plot_h << "' stroke='black'/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double frac = static_cast<double>(i) / 4.0;
    const double y = top + plot_h * (1.0 - frac);
    const double value = y_min + frac * (y_max - y_min);
    os << "<text x='" << left - 6 << "' y='" << y + 4
       << "' text-anchor='end' font-family='sans-serif' font-size='10'>"
       << fmt(std::round(value * 100.0) / 100.0) << "</text>\n";
    os << "<line x1='" << left << "' y1='" << y << "' x2='" << left + plot_w
       << "' y2='" << y << "' stroke='#dddddd'/>\n";
  }
  std::size_t color = 0;
  double legend_y = top;
  for (const auto& s : series) {
    const char* stroke = palette[color % (sizeof palette / sizeof *palette)];
    os << "<polyline fill='none' stroke='" << stroke
       << "' stroke-width='1.5' points='";
    for (std::size_t t = 0; t < s.p.size(); ++t) {
      const double x =
          left + plot_w * (max_len > 1
                               ? static_cast<double>(t) /
                                     static_cast<double>(max_len - 1)
                               : 0.0);
      const double y =
          top + plot_h * (1.0 - (s.p[t] - y_min) / (y_max - y_min));
      os << fmt(x) << ',' << fmt(y) << ' ';
    }
    os << "'/>\n";
    os << "<text x='" << left + plot_w - 4 << "' y='" << legend_y + 10
       << "' text-anchor='end' font-family='sans-serif' font-size='11' fill='"
       << stroke << "'>" << s.video_id << " / " << s.condition << "</text>\n";
    legend_y += 14;
    ++color;
  }
  os << "</svg>\n";
  write_file_atomic(p, os.str());
}

std::string timestamp_utc() {
  const std::time_t now = std::time(nullptr);
  std::tm tm_utc{};
  gmtime_r(&now, &tm_utc);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%SZ", &tm_utc);
  return buf;
}

RunManifest::RunManifest(std::string command, std::uint64_t seed)
    : command_(std::move(command)), seed_(seed), started_at_(timestamp_utc()) {}

void RunManifest::set_config(const std::string& config_json_text) {
  config_json_ = config_json_text;
}

void RunManifest::add_input(const std::filesystem::path& p) {
  inputs_.push_back(p.string());
}

void RunManifest::add_output(const std::filesystem::path& p) {
  outputs_.push_back(p);
}

void RunManifest::write(const std::filesystem::path& run_dir) const {
  nlohmann::json m;
  m["command"] = command_;
  m["seed"] = seed_;
  if (!config_json_.empty()) {
    m["config"] = nlohmann::json::parse(config_json_);
  }
  m["inputs"] = inputs_;
  auto outs = nlohmann::json::array();
  for (const auto& p : outputs_) {
    outs.push_back({{"path", p.filename().string()},
                    {"fnv1a64", hex64(checksum_file(p))}});
  }
  m["outputs"] = std::move(outs);
  m["started_at"] = started_at_;
  m["finished_at"] = timestamp_utc();
  write_file_atomic(run_dir / "run_manifest.json", m.dump(2) + "\n");
}

}  // namespace secure
