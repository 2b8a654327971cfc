#pragma once

// Turns the run artifacts (metrics.ndjson, eval.json) into self-contained
// SVG charts and a plain-text summary. Output is a pure function of the
// inputs: no timestamps, no environment probes, fixed float formatting.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "spindiff/binio.hpp"
#include "spindiff/metrics.hpp"

namespace spindiff {

struct ChartSeries {
  std::string name;
  std::string color;
  std::vector<std::pair<double, double>> points;
};

namespace repdetail {

inline std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

inline std::string esc(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();

  void feed(double v) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void pad() {
    if (!(lo <= hi)) {
      lo = 0.0;
      hi = 1.0;
    }
    if (lo == hi) {
      lo -= 0.5;
      hi += 0.5;
    }
  }
};

}  // namespace repdetail

// 720x400 line chart; series drawn as polylines over shared axes.
inline std::string render_line_chart(const std::string& title, const std::string& x_label,
                                     const std::string& y_label,
                                     const std::vector<ChartSeries>& series) {
  using repdetail::esc;
  using repdetail::num;
  const double W = 720, H = 400, ml = 70, mr = 20, mt = 40, mb = 50;
  const double pw = W - ml - mr, ph = H - mt - mb;

  repdetail::Range xr, yr;
  for (const auto& s : series)
    for (auto [x, y] : s.points) {
      xr.feed(x);
      yr.feed(y);
    }
  xr.pad();
  yr.pad();
  auto px = [&](double x) { return ml + (x - xr.lo) / (xr.hi - xr.lo) * pw; };
  auto py = [&](double y) { return mt + ph - (y - yr.lo) / (yr.hi - yr.lo) * ph; };

  std::ostringstream svg;
  svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H
      << "' viewBox='0 0 " << W << " " << H << "'>\n";
  svg << "<rect width='" << W << "' height='" << H << "' fill='white'/>\n";
  svg << "<text x='" << W / 2 << "' y='24' text-anchor='middle' font-family='monospace' "
         "font-size='15'>"
      << esc(title) << "</text>\n";

  for (int i = 0; i <= 4; ++i) {
    double fx = xr.lo + (xr.hi - xr.lo) * i / 4.0;
    double fy = yr.lo + (yr.hi - yr.lo) * i / 4.0;
    double gx = px(fx), gy = py(fy);
    svg << "<line x1='" << gx << "' y1='" << mt << "' x2='" << gx << "' y2='" << mt + ph
        << "' stroke='#eeeeee'/>\n";
    svg << "<line x1='" << ml << "' y1='" << gy << "' x2='" << ml + pw << "' y2='" << gy
        << "' stroke='#eeeeee'/>\n";
    svg << "<text x='" << gx << "' y='" << mt + ph + 18
        << "' text-anchor='middle' font-family='monospace' font-size='11'>" << num(fx)
        << "</text>\n";
    svg << "<text x='" << ml - 8 << "' y='" << gy + 4
        << "' text-anchor='end' font-family='monospace' font-size='11'>" << num(fy)
        << "</text>\n";
  }
  svg << "<rect x='" << ml << "' y='" << mt << "' width='" << pw << "' height='" << ph
      << "' fill='none' stroke='#333333'/>\n";
  svg << "<text x='" << ml + pw / 2 << "' y='" << H - 12
      << "' text-anchor='middle' font-family='monospace' font-size='12'>" << esc(x_label)
      << "</text>\n";
  svg << "<text x='16' y='" << mt + ph / 2
      << "' text-anchor='middle' font-family='monospace' font-size='12' transform='rotate(-90 "
         "16 "
      << mt + ph / 2 << ")'>" << esc(y_label) << "</text>\n";

  double ly = mt + 12;
  for (const auto& s : series) {
    if (!s.points.empty()) {
      svg << "<polyline fill='none' stroke='" << s.color << "' stroke-width='1.5' points='";
      for (auto [x, y] : s.points) svg << num(px(x)) << "," << num(py(y)) << " ";
      svg << "'/>\n";
    }
    svg << "<rect x='" << ml + pw - 150 << "' y='" << ly - 9
        << "' width='10' height='10' fill='" << s.color << "'/>\n";
    svg << "<text x='" << ml + pw - 135 << "' y='" << ly
        << "' font-family='monospace' font-size='11'>" << esc(s.name) << "</text>\n";
    ly += 16;
  }
  svg << "</svg>\n";
  return svg.str();
}

inline std::string render_bar_chart(const std::string& title,
                                    const std::vector<std::string>& labels,
                                    const std::vector<double>& values,
                                    const std::string& color) {
  using repdetail::esc;
  using repdetail::num;
  const double W = 720, H = 400, ml = 70, mr = 20, mt = 40, mb = 70;
  const double pw = W - ml - mr, ph = H - mt - mb;
  repdetail::Range yr;
  yr.feed(0.0);
  for (double v : values) yr.feed(v);
  yr.pad();

  std::ostringstream svg;
  svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H
      << "' viewBox='0 0 " << W << " " << H << "'>\n";
  svg << "<rect width='" << W << "' height='" << H << "' fill='white'/>\n";
  svg << "<text x='" << W / 2 << "' y='24' text-anchor='middle' font-family='monospace' "
         "font-size='15'>"
      << esc(title) << "</text>\n";
  auto py = [&](double y) { return mt + ph - (y - yr.lo) / (yr.hi - yr.lo) * ph; };
  for (int i = 0; i <= 4; ++i) {
    double fy = yr.lo + (yr.hi - yr.lo) * i / 4.0;
    svg << "<line x1='" << ml << "' y1='" << py(fy) << "' x2='" << ml + pw << "' y2='"
        << py(fy) << "' stroke='#eeeeee'/>\n";
    svg << "<text x='" << ml - 8 << "' y='" << py(fy) + 4
        << "' text-anchor='end' font-family='monospace' font-size='11'>" << num(fy)
        << "</text>\n";
  }
  std::size_t n = values.size();
  double slot = n > 0 ? pw / static_cast<double>(n) : pw;
  for (std::size_t i = 0; i < n; ++i) {
    double x = ml + slot * static_cast<double>(i) + slot * 0.15;
    double y0 = py(std::max(0.0, yr.lo));
    double y1 = py(values[i]);
    svg << "<rect x='" << num(x) << "' y='" << num(std::min(y0, y1)) << "' width='"
        << num(slot * 0.7) << "' height='" << num(std::fabs(y0 - y1)) << "' fill='" << color
        << "'/>\n";
    svg << "<text x='" << num(x + slot * 0.35) << "' y='" << mt + ph + 18
        << "' text-anchor='middle' font-family='monospace' font-size='10'>"
        << esc(i < labels.size() ? labels[i] : "") << "</text>\n";
    svg << "<text x='" << num(x + slot * 0.35) << "' y='" << num(y1 - 5)
        << "' text-anchor='middle' font-family='monospace' font-size='10'>" << num(values[i])
        << "</text>\n";
  }
  svg << "<rect x='" << ml << "' y='" << mt << "' width='" << pw << "' height='" << ph
      << "' fill='none' stroke='#333333'/>\n";
  svg << "</svg>\n";
  return svg.str();
}

struct ReportFiles {
  std::vector<std::string> written;
};

// Reads <out_dir>/metrics.ndjson (and eval.json when present) and writes the
// chart and summary files next to them.
inline ReportFiles write_report(const std::string& out_dir) {
  namespace fs = std::filesystem;
  using nlohmann::json;
  ReportFiles files;
  std::vector<json> rows = read_metrics(out_dir + "/metrics.ndjson");

  ChartSeries sft_loss{"sft loss", "#1f77b4", {}};
  ChartSeries spin_loss{"spin loss", "#d62728", {}};
  ChartSeries grad{"grad norm", "#2ca02c", {}};
  long long cum = 0;
  long long sft_steps = 0, spin_steps = 0;
  std::vector<json> iteration_rows, eval_rows;
  for (const json& r : rows) {
    std::string kind = r.value("kind", "");
    if (kind == "step") {
      double x = static_cast<double>(cum++);
      double loss = r.value("loss", 0.0);
      if (r.value("phase", "") == "sft") {
        sft_loss.points.emplace_back(x, loss);
        ++sft_steps;
      } else {
        spin_loss.points.emplace_back(x, loss);
        ++spin_steps;
      }
      grad.points.emplace_back(x, r.value("grad_norm", 0.0));
    } else if (kind == "iteration") {
      iteration_rows.push_back(r);
    } else if (kind == "eval") {
      eval_rows.push_back(r);
    }
  }

  {
    std::string path = out_dir + "/report_training.svg";
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << render_line_chart("training loss and gradient norm", "optimizer step", "value",
                             {sft_loss, spin_loss, grad});
    files.written.push_back(path);
  }
  {
    ChartSeries ed{"energy distance", "#1f77b4", {}};
    ChartSeries excess{"denoising excess", "#d62728", {}};
    double i = 0;
    for (const json& r : eval_rows) {
      ed.points.emplace_back(i, r.value("energy_distance_mean", 0.0));
      excess.points.emplace_back(i, r.value("dsm_excess", 0.0));
      i += 1.0;
    }
    std::string path = out_dir + "/report_metrics.svg";
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << render_line_chart("evaluation metrics over checkpoints", "evaluation index",
                             "value", {ed, excess});
    files.written.push_back(path);
  }

  std::vector<std::string> wr_labels;
  std::vector<double> wr_values;
  if (fs::exists(out_dir + "/eval.json")) {
    std::ifstream in(out_dir + "/eval.json");
    json ev = json::parse(in, nullptr, true);
    for (const json& c : ev.value("checkpoints", json::array())) {
      if (!c.contains("win_rate_vs_base")) continue;
      wr_labels.push_back(fs::path(c.value("path", "")).stem().string());
      wr_values.push_back(c.at("win_rate_vs_base").get<double>());
    }
  }
  {
    std::string path = out_dir + "/report_win_rate.svg";
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << render_bar_chart("paired win rate against the base checkpoint", wr_labels,
                            wr_values, "#9467bd");
    files.written.push_back(path);
  }

  {
    std::ostringstream txt;
    txt << "run summary\n===========\n";
    txt << "sft steps logged:  " << sft_steps << "\n";
    txt << "spin steps logged: " << spin_steps << "\n";
    if (!sft_loss.points.empty())
      txt << "final sft loss:    " << repdetail::num(sft_loss.points.back().second) << "\n";
    if (!spin_loss.points.empty())
      txt << "final spin loss:   " << repdetail::num(spin_loss.points.back().second) << "\n";
    txt << "\nself-play iterations\n";
    for (const json& r : iteration_rows) {
      txt << "  iter " << r.value("iteration", 0) << ": final_loss "
          << repdetail::num(r.value("final_loss", 0.0)) << ", clamp_events "
          << r.value("clamp_events", 0ll) << ", cache " << r.value("synth_cache_digest", "");
      if (r.contains("test_fn_gap"))
        txt << ", test_fn_gap " << repdetail::num(r.at("test_fn_gap").get<double>());
      txt << "\n";
    }
    txt << "\nevaluations\n";
    for (const json& r : eval_rows) {
      txt << "  " << r.value("checkpoint", "?") << ": energy "
          << repdetail::num(r.value("energy_distance_mean", 0.0)) << ", loglik "
          << repdetail::num(r.value("mean_loglik", 0.0)) << ", excess "
          << repdetail::num(r.value("dsm_excess", 0.0)) << "\n";
    }
    if (!wr_values.empty()) {
      txt << "\nwin rates vs base\n";
      for (std::size_t i = 0; i < wr_values.size(); ++i)
        txt << "  " << wr_labels[i] << ": " << repdetail::num(wr_values[i]) << "\n";
    }
    std::string path = out_dir + "/summary.txt";
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << txt.str();
    files.written.push_back(path);
  }
  return files;
}

}  // namespace spindiff
