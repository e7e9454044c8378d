#pragma once

#include "afford/evalsuite.hpp"

namespace afford {

// Aggregates run directories into a machine-readable results table plus
// simple raster plots (exploration curves, sample panels when present).

struct ReportResult {
  int eval_rows = 0;
  int curves = 0;
  int panels = 0;
  std::vector<std::string> warnings;
};

namespace reportdetail {

struct Curve {
  std::string label;
  std::vector<double> x, y;
};

// minimal polyline plot; axes in gray, one palette color per curve
inline Image plot_curves(const std::vector<Curve>& curves, int w = 360, int h = 220) {
  Image im = Image::filled(h, w, 1.f, 1.f, 1.f);
  int ml = 10, mr = 6, mt = 6, mb = 10;
  for (int x = ml; x < w - mr; ++x) im.set(h - mb, x, 0.6f, 0.6f, 0.6f);
  for (int y = mt; y < h - mb; ++y) im.set(y, ml, 0.6f, 0.6f, 0.6f);
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& c : curves)
    for (size_t i = 0; i < c.x.size(); ++i) {
      xmin = std::min(xmin, c.x[i]);
      xmax = std::max(xmax, c.x[i]);
      ymin = std::min(ymin, c.y[i]);
      ymax = std::max(ymax, c.y[i]);
    }
  if (xmax <= xmin) xmax = xmin + 1;
  if (ymax <= ymin) ymax = ymin + 1;
  auto px = [&](double x) { return ml + int((x - xmin) / (xmax - xmin) * (w - ml - mr - 1)); };
  auto py = [&](double y) { return h - mb - 1 - int((y - ymin) / (ymax - ymin) * (h - mt - mb - 1)); };
  for (size_t ci = 0; ci < curves.size(); ++ci) {
    Rgb col = object_palette()[ci % object_palette().size()];
    const auto& c = curves[ci];
    for (size_t i = 0; i + 1 < c.x.size(); ++i) {
      int x0 = px(c.x[i]), y0 = py(c.y[i]), x1 = px(c.x[i + 1]), y1 = py(c.y[i + 1]);
      int steps = std::max(std::abs(x1 - x0), std::abs(y1 - y0)) + 1;
      for (int s = 0; s <= steps; ++s) {
        int x = x0 + (x1 - x0) * s / steps, y = y0 + (y1 - y0) * s / steps;
        im.set(y, x, col.r, col.g, col.b);
      }
    }
  }
  return im;
}

}  // namespace reportdetail

inline ReportResult write_report(const std::vector<std::string>& run_dirs,
                                 const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  ReportResult result;
  std::ofstream table(fs::path(out_dir) / "results.tsv");
  check(table.good(), "report: cannot write results.tsv in " + out_dir);
  table << "run\tactor\tseed\ttrials\tpushing\tpick_place\tstacking\toverall\n";
  std::vector<reportdetail::Curve> curves;

  for (const auto& dir : run_dirs) {
    if (!fs::is_directory(dir)) {
      result.warnings.push_back("missing run directory: " + dir);
      continue;
    }
    bool found = false;
    fs::path report_path = fs::path(dir) / "eval_report.json";
    if (fs::exists(report_path)) {
      try {
        EvalReport r = load_eval_report(report_path.string());
        table << fs::path(dir).filename().string() << "\t" << r.actor << "\t" << r.seed << "\t"
              << r.trials << "\t" << r.rate_for("pushing") << "\t" << r.rate_for("pick_place")
              << "\t" << r.rate_for("stacking") << "\t" << r.overall() << "\n";
        ++result.eval_rows;
        found = true;
      } catch (const std::exception& e) {
        result.warnings.push_back("corrupt eval report: " + report_path.string() + " (" +
                                  e.what() + ")");
        found = true;  // recognized but unusable
      }
    }
    fs::path metrics_path = fs::path(dir) / "metrics.tsv";
    if (fs::exists(metrics_path)) {
      std::ifstream mf(metrics_path);
      std::string line;
      reportdetail::Curve c;
      c.label = fs::path(dir).filename().string();
      bool header = true;
      while (std::getline(mf, line)) {
        if (header) {
          header = false;
          continue;
        }
        auto cols = split(line, '\t');
        if (cols.size() < 2) continue;
        try {
          c.x.push_back(std::stod(cols[0]));
          c.y.push_back(std::stod(cols[1]));
        } catch (...) {
          result.warnings.push_back("corrupt metrics row in " + metrics_path.string());
          break;
        }
      }
      if (c.x.size() >= 2) {
        curves.push_back(std::move(c));
        ++result.curves;
        found = true;
      }
    }
    fs::path sheet = fs::path(dir) / "samples" / "sheet.ppm";
    if (fs::exists(sheet)) {
      Image im = read_ppm(sheet.string());
      write_ppm((fs::path(out_dir) / ("panel_" + fs::path(dir).filename().string() + ".ppm"))
                    .string(),
                im);
      ++result.panels;
      found = true;
    }
    if (!found && fs::is_directory(dir))
      result.warnings.push_back("no recognizable artifacts in: " + dir);
  }
  if (!curves.empty())
    write_ppm((fs::path(out_dir) / "curves.ppm").string(), reportdetail::plot_curves(curves));
  return result;
}

}  // namespace afford
