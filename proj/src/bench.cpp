#include "mapgo/bench.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <set>

#include "mapgo/errors.hpp"

namespace mapgo {

DenoiseScore denoise_metrics(const std::vector<std::size_t>& labels, const std::vector<std::size_t>& pruned) {
  const std::set<std::size_t> l(labels.begin(), labels.end()), p(pruned.begin(), pruned.end());
  std::size_t hit = 0;
  for (std::size_t e : p) hit += l.count(e);
  DenoiseScore s;
  s.precision = p.empty() ? (l.empty() ? 1.0 : 0.0) : static_cast<double>(hit) / static_cast<double>(p.size());
  s.recall = l.empty() ? 1.0 : static_cast<double>(hit) / static_cast<double>(l.size());
  return s;
}

void BenchReport::write_csv(std::ostream& os) const {
  os << "kind,dataset,variant,team_size,outlier_fraction,f_initial,f_final,precision,recall,instances\n";
  char buf[512];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%s,%s,%s,%d,%.17g,%.17g,%.17g,%.17g,%.17g,%d\n", r.kind.c_str(), r.dataset.c_str(),
                  r.variant.c_str(), r.team_size, r.outlier_fraction, r.f_initial, r.f_final, r.precision, r.recall,
                  r.instances);
    os << buf;
  }
}

void BenchReport::write_timing_csv(std::ostream& os) const {
  os << "# solver wall time in seconds, dataset loading excluded\n";
  os << "kind,dataset,variant,team_size,outlier_fraction,seconds\n";
  char buf[512];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%s,%s,%s,%d,%.17g,%.6f\n", r.kind.c_str(), r.dataset.c_str(), r.variant.c_str(),
                  r.team_size, r.outlier_fraction, r.seconds);
    os << buf;
  }
}

nlohmann::json BenchReport::to_json() const {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rows)
    out.push_back({{"kind", r.kind},
                   {"dataset", r.dataset},
                   {"variant", r.variant},
                   {"team_size", r.team_size},
                   {"outlier_fraction", r.outlier_fraction},
                   {"f_initial", r.f_initial},
                   {"f_final", r.f_final},
                   {"seconds", r.seconds},
                   {"precision", r.precision},
                   {"recall", r.recall},
                   {"instances", r.instances}});
  return out;
}

BenchReport run_benchmark(const std::vector<NamedGraph>& datasets, const std::vector<Actor>& trained,
                          const BenchConfig& cfg) {
  if (trained.empty()) throw InvalidSpec("benchmark needs at least one trained actor");
  BenchReport rep;
  const std::string kind = cfg.team_sizes.size() > 1 ? "scale" : "solve";
  for (const auto& d : datasets)
    for (int n : cfg.team_sizes) {
      auto actors = replicate_actors(trained, n);
      SolveConfig sc = cfg.solve;
      sc.env.n_robots = n;
      for (Variant v : cfg.variants) {
        nn::Rng rng(cfg.seed);
        const SolveReport s = solve(d.graph, actors, sc, v, rng);
        BenchRow row;
        row.kind = kind;
        row.dataset = d.name;
        row.variant = variant_name(v);
        row.team_size = n;
        row.f_initial = s.f_initial;
        row.f_final = s.f_final;
        row.seconds = s.seconds;
        row.instances = 1;
        rep.rows.push_back(row);
      }
    }

  const int n = cfg.solve.env.n_robots;
  for (double frac : cfg.outlier_fractions) {
    BenchRow row;
    row.kind = "denoise";
    row.dataset = datasets.size() == 1 ? datasets.front().name : "all";
    row.variant = variant_name(Variant::V1);
    row.team_size = n;
    row.outlier_fraction = frac;
    auto actors = replicate_actors(trained, n);
    SolveConfig sc = cfg.solve;
    sc.prune = true;
    for (std::size_t k = 0; k < datasets.size(); ++k) {
      const OutlierInjection inj = inject_outliers(datasets[k].graph, frac, cfg.seed + k);
      nn::Rng rng(cfg.seed);
      const SolveReport s = solve(inj.graph, actors, sc, Variant::V1, rng);
      const DenoiseScore score = denoise_metrics(inj.corrupted, s.pruned);
      row.precision += score.precision;
      row.recall += score.recall;
      row.f_initial += s.f_initial;
      row.f_final += s.f_final;
      row.seconds += s.seconds;
      ++row.instances;
    }
    if (row.instances > 0) {
      const double m = 1.0 / row.instances;
      row.precision *= m;
      row.recall *= m;
      row.f_initial *= m;
      row.f_final *= m;
      row.seconds *= m;
    }
    rep.rows.push_back(row);
  }
  return rep;
}

namespace {

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

}  // namespace

void write_svg_chart(std::ostream& os, const std::string& title, const std::string& x_label,
                     const std::string& y_label, const std::vector<Series>& series) {
  const double w = 640, h = 420, left = 70, right = 150, top = 40, bottom = 50;
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : series)
    for (const auto& [x, y] : s.points) {
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y1 = y0 + 1;
  y0 = std::min(y0, 0.0);
  auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * (w - left - right); };
  auto py = [&](double y) { return h - bottom - (y - y0) / (y1 - y0) * (h - top - bottom); };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

  char buf[256];
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << w / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << escape(title) << "</text>\n";
  std::snprintf(buf, sizeof buf, "<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" stroke=\"black\"/>\n", left, h - bottom,
                w - right, h - bottom);
  os << buf;
  std::snprintf(buf, sizeof buf, "<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" stroke=\"black\"/>\n", left, top, left,
                h - bottom);
  os << buf;
  for (int k = 0; k <= 4; ++k) {
    const double xv = x0 + k * (x1 - x0) / 4, yv = y0 + k * (y1 - y0) / 4;
    std::snprintf(buf, sizeof buf, "<text x=\"%g\" y=\"%g\" text-anchor=\"middle\" font-size=\"11\">%.3g</text>\n",
                  px(xv), h - bottom + 16, xv);
    os << buf;
    std::snprintf(buf, sizeof buf, "<text x=\"%g\" y=\"%g\" text-anchor=\"end\" font-size=\"11\">%.3g</text>\n",
                  left - 6, py(yv) + 4, yv);
    os << buf;
  }
  os << "<text x=\"" << (left + w - right) / 2 << "\" y=\"" << h - 12 << "\" text-anchor=\"middle\" font-size=\"12\">"
     << escape(x_label) << "</text>\n";
  os << "<text x=\"16\" y=\"" << (top + h - bottom) / 2 << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 16 "
     << (top + h - bottom) / 2 << ")\">" << escape(y_label) << "</text>\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* c = colors[s % 6];
    os << "<polyline fill=\"none\" stroke=\"" << c << "\" stroke-width=\"2\" points=\"";
    for (const auto& [x, y] : series[s].points) {
      std::snprintf(buf, sizeof buf, "%.2f,%.2f ", px(x), py(y));
      os << buf;
    }
    os << "\"/>\n";
    for (const auto& [x, y] : series[s].points) {
      std::snprintf(buf, sizeof buf, "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"3\" fill=\"%s\"/>\n", px(x), py(y), c);
      os << buf;
    }
    const double ly = top + 16 * (s + 1);
    std::snprintf(buf, sizeof buf, "<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" stroke=\"%s\" stroke-width=\"2\"/>\n",
                  w - right + 12, ly - 4, w - right + 32, ly - 4, c);
    os << buf;
    os << "<text x=\"" << w - right + 38 << "\" y=\"" << ly << "\" font-size=\"11\">" << escape(series[s].name)
       << "</text>\n";
  }
  os << "</svg>\n";
}

std::vector<std::filesystem::path> write_scaling_charts(const BenchReport& report, const std::filesystem::path& dir) {
  // Series per (dataset, variant), averaged when a key repeats.
  std::map<std::string, std::map<int, std::pair<double, double>>> f_sum, t_sum;
  std::map<std::string, std::map<int, int>> count;
  for (const auto& r : report.rows) {
    if (r.kind != "scale" && r.kind != "solve") continue;
    const std::string key = r.dataset + " " + r.variant;
    f_sum[key][r.team_size].first += r.f_final;
    t_sum[key][r.team_size].first += r.seconds;
    ++count[key][r.team_size];
  }
  std::vector<Series> f_series, t_series;
  for (const auto& [key, by_n] : f_sum) {
    Series fs{key, {}}, ts{key, {}};
    for (const auto& [n, v] : by_n) {
      const double c = count[key][n];
      fs.points.emplace_back(n, v.first / c);
      ts.points.emplace_back(n, t_sum[key][n].first / c);
    }
    f_series.push_back(fs);
    t_series.push_back(ts);
  }
  std::filesystem::create_directories(dir);
  const auto f_path = dir / "objective_vs_team_size.svg", t_path = dir / "runtime_vs_team_size.svg";
  {
    std::ofstream os(f_path);
    write_svg_chart(os, "Global objective vs team size", "team size n", "F(x)", f_series);
  }
  {
    std::ofstream os(t_path);
    write_svg_chart(os, "Runtime vs team size", "team size n", "seconds", t_series);
  }
  return {f_path, t_path};
}

}  // namespace mapgo
