#include "iqa/plot.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "iqa/error.hpp"

namespace iqa::plot {

using nlohmann::json;

namespace {

constexpr const char* kWarm = "#ff0d57";
constexpr const char* kCool = "#1e88e5";
constexpr const char* kFont = "font-family=\"Helvetica, Arial, sans-serif\"";

std::string escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string num(double v) {
  std::string s = fmt::format("{:.2f}", v);
  return s == "-0.00" ? "0.00" : s;
}

std::string signed3(double v) {
  std::string s = fmt::format("{:+.3f}", v);
  return s == "-0.000" ? "+0.000" : s;
}

class Svg {
 public:
  Svg(double width, double height) : width_(width), height_(height) {}

  void rect(double x, double y, double w, double h, std::string_view fill) {
    body_ += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{}\"/>\n", num(x), num(y),
                         num(std::max(w, 0.0)), num(std::max(h, 0.0)), fill);
  }
  void line(double x1, double y1, double x2, double y2, std::string_view stroke, double width = 1.0) {
    body_ += fmt::format("<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{}\" stroke-width=\"{}\"/>\n",
                         num(x1), num(y1), num(x2), num(y2), stroke, num(width));
  }
  void circle(double cx, double cy, double r, std::string_view fill) {
    body_ += fmt::format("<circle cx=\"{}\" cy=\"{}\" r=\"{}\" fill=\"{}\"/>\n", num(cx), num(cy), num(r), fill);
  }
  void polygon(const std::vector<std::pair<double, double>>& pts, std::string_view fill) {
    std::string p;
    for (const auto& [x, y] : pts) p += fmt::format("{}{},{}", p.empty() ? "" : " ", num(x), num(y));
    body_ += fmt::format("<polygon points=\"{}\" fill=\"{}\"/>\n", p, fill);
  }
  void text(double x, double y, std::string_view s, std::string_view anchor = "start", int size = 12,
            std::string_view fill = "#333333") {
    body_ += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"{}\" font-size=\"{}\" fill=\"{}\">{}</text>\n",
                         num(x), num(y), anchor, size, fill, escape(s));
  }
  void raw(std::string_view s) { body_ += s; }

  std::string str() const {
    return fmt::format(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" viewBox=\"0 0 {0} {1}\" {2}>\n"
        "<rect x=\"0\" y=\"0\" width=\"{0}\" height=\"{1}\" fill=\"#ffffff\"/>\n{3}</svg>\n",
        num(width_), num(height_), kFont, body_);
  }

 private:
  double width_, height_;
  std::string body_;
};

struct Axis {
  double lo, hi, px0, px1;
  double operator()(double v) const { return hi == lo ? (px0 + px1) / 2 : px0 + (v - lo) / (hi - lo) * (px1 - px0); }
};

// Tick positions at a 1/2/5 step covering [lo, hi].
std::vector<double> ticks(double lo, double hi, int target = 5) {
  if (!(hi > lo)) return {lo};
  const double raw = (hi - lo) / target;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    step = m * mag;
    if (step >= raw) break;
  }
  std::vector<double> out;
  for (double t = std::ceil(lo / step) * step; t <= hi + step * 1e-9; t += step) out.push_back(std::abs(t) < step * 1e-9 ? 0.0 : t);
  return out;
}

void x_axis(Svg& svg, const Axis& ax, double y, std::string_view label) {
  svg.line(ax.px0, y, ax.px1, y, "#666666");
  for (double t : ticks(ax.lo, ax.hi)) {
    const double x = ax(t);
    svg.line(x, y, x, y + 4, "#666666");
    svg.text(x, y + 16, fmt::format("{:g}", t), "middle", 10);
  }
  if (!label.empty()) svg.text((ax.px0 + ax.px1) / 2, y + 32, label, "middle", 12);
}

std::string mix_color(double t) {
  t = std::clamp(t, 0.0, 1.0);
  const int r = static_cast<int>(std::lround(0x1e + (0xff - 0x1e) * t));
  const int g = static_cast<int>(std::lround(0x88 + (0x0d - 0x88) * t));
  const int b = static_cast<int>(std::lround(0xe5 + (0x57 - 0xe5) * t));
  return fmt::format("#{:02x}{:02x}{:02x}", r, g, b);
}

template <typename F>
auto guarded(std::string_view what, F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw Error("parse", fmt::format("malformed {} report: {}", what, e.what()));
  }
}

struct GlobalRow {
  std::string feature;
  double mean_abs;
  std::optional<std::pair<double, double>> ci;
};

std::vector<GlobalRow> global_rows(const json& g) {
  std::vector<GlobalRow> rows;
  for (const auto& f : g.at("features")) {
    GlobalRow r{f.at("feature").get<std::string>(), f.at("mean_abs_phi").get<double>(), std::nullopt};
    if (f.contains("abs_ci")) r.ci = std::pair{f.at("abs_ci").at(0).get<double>(), f.at("abs_ci").at(1).get<double>()};
    rows.push_back(std::move(r));
  }
  if (rows.empty()) throw Error("schema", "global report has no features");
  return rows;
}

struct LocalView {
  double base, prediction;
  std::vector<std::string> labels;
  std::vector<double> phi;
};

LocalView local_view(const json& j) {
  LocalView v{j.at("base").get<double>(), j.at("prediction").get<double>(), {}, {}};
  for (const auto& c : j.at("contributions")) {
    const double value = c.value("value", std::nan(""));
    const auto name = c.at("feature").get<std::string>();
    v.labels.push_back(std::isnan(value) ? name : fmt::format("{} = {:.4g}", name, value));
    v.phi.push_back(c.at("phi").get<double>());
  }
  if (v.phi.empty()) throw Error("schema", "local explanation has no contributions to plot");
  return v;
}

}  // namespace

std::string importance_bar_svg(const json& report) {
  return guarded("global explanation", [&] {
    const auto rows = global_rows(report);
    double hi = 0.0;
    for (const auto& r : rows) hi = std::max({hi, r.mean_abs, r.ci ? r.ci->second : 0.0});
    if (hi <= 0.0) hi = 1.0;
    const double row_h = 26, top = 30, left = 170, plot_w = 460;
    const double height = top + row_h * static_cast<double>(rows.size()) + 50;
    Svg svg(left + plot_w + 60, height);
    const Axis ax{0.0, hi * 1.05, left, left + plot_w};
    svg.text(left, 18, "mean |SHAP value|", "start", 13);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const double y = top + row_h * static_cast<double>(i);
      svg.text(left - 8, y + row_h / 2 + 4, rows[i].feature, "end");
      svg.rect(ax(0.0), y + 5, ax(rows[i].mean_abs) - ax(0.0), row_h - 10, kCool);
      if (rows[i].ci) {
        const double yc = y + row_h / 2;
        svg.line(ax(rows[i].ci->first), yc, ax(rows[i].ci->second), yc, "#222222", 1.2);
        svg.line(ax(rows[i].ci->first), yc - 5, ax(rows[i].ci->first), yc + 5, "#222222", 1.2);
        svg.line(ax(rows[i].ci->second), yc - 5, ax(rows[i].ci->second), yc + 5, "#222222", 1.2);
      }
      svg.text(ax(std::max(rows[i].mean_abs, rows[i].ci ? rows[i].ci->second : 0.0)) + 6, y + row_h / 2 + 4,
               fmt::format("{:.3f}", rows[i].mean_abs), "start", 10);
    }
    x_axis(svg, ax, top + row_h * static_cast<double>(rows.size()) + 4, "");
    return svg.str();
  });
}

std::string beeswarm_svg(const json& report) {
  return guarded("global explanation", [&] {
    const auto rows = global_rows(report);
    const auto& bee = report.at("beeswarm");
    const auto order = bee.at("feature_order").get<std::vector<std::string>>();
    std::map<std::string, std::size_t> column;
    for (std::size_t j = 0; j < order.size(); ++j) column[order[j]] = j;

    struct Point {
      double phi, z;
    };
    std::vector<std::vector<Point>> points(rows.size());
    double lo = 0.0, hi = 0.0;
    for (const auto& s : bee.at("samples")) {
      const auto phi = s.at("phi").get<std::vector<double>>();
      const auto z = s.at("z").get<std::vector<double>>();
      if (phi.size() != order.size() || z.size() != order.size())
        throw Error("schema", "beeswarm sample width does not match the feature order");
      for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto it = column.find(rows[r].feature);
        if (it == column.end()) throw Error("schema", fmt::format("feature '{}' missing from beeswarm", rows[r].feature));
        points[r].push_back({phi[it->second], z[it->second]});
        lo = std::min(lo, phi[it->second]);
        hi = std::max(hi, phi[it->second]);
      }
    }
    if (hi == lo) hi = lo + 1.0;
    const double pad = 0.05 * (hi - lo);
    const double row_h = 30, top = 20, left = 170, plot_w = 460;
    const double height = top + row_h * static_cast<double>(rows.size()) + 50;
    Svg svg(left + plot_w + 90, height);
    const Axis ax{lo - pad, hi + pad, left, left + plot_w};
    svg.line(ax(0.0), top, ax(0.0), top + row_h * static_cast<double>(rows.size()), "#999999");
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const double yc = top + row_h * (static_cast<double>(r) + 0.5);
      svg.line(left, yc, left + plot_w, yc, "#eeeeee");
      svg.text(left - 8, yc + 4, rows[r].feature, "end");
      auto pts = points[r];
      std::stable_sort(pts.begin(), pts.end(), [](const Point& a, const Point& b) { return a.phi < b.phi; });
      std::map<long, int> stack;
      for (const auto& p : pts) {
        const double x = ax(p.phi);
        const int k = stack[std::lround(x / 3.0)]++;
        const double offset = (k % 2 == 0 ? 1.0 : -1.0) * 2.5 * static_cast<double>((k + 1) / 2);
        svg.circle(x, yc + std::clamp(offset, -row_h / 2 + 3, row_h / 2 - 3), 2.2, mix_color((p.z + 2.0) / 4.0));
      }
    }
    x_axis(svg, ax, top + row_h * static_cast<double>(rows.size()) + 4, "SHAP value (impact on model output)");
    const double bx = left + plot_w + 30, by0 = top + 10, by1 = top + row_h * static_cast<double>(rows.size()) - 10;
    for (int i = 0; i < 20; ++i) {
      const double t0 = by0 + (by1 - by0) * i / 20.0;
      svg.rect(bx, t0, 10, (by1 - by0) / 20.0 + 0.5, mix_color(1.0 - i / 19.0));
    }
    svg.text(bx + 14, by0 + 8, "High", "start", 10);
    svg.text(bx + 14, by1, "Low", "start", 10);
    return svg.str();
  });
}

std::string waterfall_svg(const json& report) {
  return guarded("local explanation", [&] {
    const auto v = local_view(report);
    std::vector<double> traj{v.base};
    for (double p : v.phi) traj.push_back(traj.back() + p);
    double lo = *std::min_element(traj.begin(), traj.end());
    double hi = *std::max_element(traj.begin(), traj.end());
    if (hi == lo) hi = lo + 1.0;
    const double pad = 0.15 * (hi - lo);
    const double row_h = 28, top = 40, left = 190, plot_w = 440;
    const double n = static_cast<double>(v.phi.size());
    Svg svg(left + plot_w + 40, top + row_h * n + 70);
    const Axis ax{lo - pad, hi + pad, left, left + plot_w};
    svg.text(ax(v.prediction), 16, fmt::format("f(x) = {:.3f}", v.prediction), "middle", 12);
    svg.line(ax(v.prediction), 22, ax(v.prediction), top + row_h * n, "#bbbbbb");
    svg.line(ax(v.base), top, ax(v.base), top + row_h * n + 6, "#bbbbbb");
    for (std::size_t i = 0; i < v.phi.size(); ++i) {
      const double y = top + row_h * static_cast<double>(i);
      const double a = ax(traj[i]), b = ax(traj[i + 1]);
      const bool up = v.phi[i] >= 0.0;
      const double x0 = std::min(a, b), x1 = std::max(a, b);
      const double tip = std::min(6.0, x1 - x0);
      const double y0 = y + 5, y1 = y + row_h - 5, ym = y + row_h / 2;
      if (up) svg.polygon({{x0, y0}, {x1 - tip, y0}, {x1, ym}, {x1 - tip, y1}, {x0, y1}}, kWarm);
      else svg.polygon({{x1, y0}, {x0 + tip, y0}, {x0, ym}, {x0 + tip, y1}, {x1, y1}}, kCool);
      svg.text(left - 8, ym + 4, v.labels[i], "end");
      svg.text(up ? x1 + 4 : x0 - 4, ym + 4, signed3(v.phi[i]), up ? "start" : "end", 10, up ? kWarm : kCool);
    }
    const double axis_y = top + row_h * n + 8;
    x_axis(svg, ax, axis_y, "");
    svg.text(ax(v.base), axis_y + 34, fmt::format("E[f(x)] = {:.3f}", v.base), "middle", 12);
    return svg.str();
  });
}

std::string force_svg(const json& report) {
  return guarded("local explanation", [&] {
    const auto v = local_view(report);
    double pos = 0.0, neg = 0.0;
    for (double p : v.phi) (p >= 0.0 ? pos : neg) += p;
    const double left_end = v.prediction - pos, right_end = v.prediction - neg;
    double lo = std::min({left_end, v.base, v.prediction}), hi = std::max({right_end, v.base, v.prediction});
    if (hi == lo) hi = lo + 1.0;
    const double pad = 0.08 * (hi - lo);
    const double width = 760, bar_y = 60, bar_h = 26;
    Svg svg(width, 170);
    const Axis ax{lo - pad, hi + pad, 30, width - 30};
    svg.text(ax(v.prediction), 24, fmt::format("f(x) = {:.3f}", v.prediction), "middle", 13);
    svg.text(ax(v.base), 44, fmt::format("base value {:.3f}", v.base), "middle", 10, "#777777");
    std::vector<std::size_t> ups, downs;
    for (std::size_t i = 0; i < v.phi.size(); ++i) (v.phi[i] >= 0.0 ? ups : downs).push_back(i);
    double cursor = left_end;
    int label_row = 0;
    for (std::size_t i : ups) {
      const double x0 = ax(cursor), x1 = ax(cursor + v.phi[i]);
      const double tip = std::min(6.0, x1 - x0);
      svg.polygon({{x0, bar_y}, {x1 - tip, bar_y}, {x1, bar_y + bar_h / 2}, {x1 - tip, bar_y + bar_h},
                   {x0, bar_y + bar_h}},
                  kWarm);
      svg.text((x0 + x1) / 2, bar_y + bar_h + 16 + 13 * (label_row++ % 3), v.labels[i], "middle", 10, kWarm);
      cursor += v.phi[i];
    }
    cursor = right_end;
    for (std::size_t i : downs) {
      const double x1 = ax(cursor), x0 = ax(cursor + v.phi[i]);
      const double tip = std::min(6.0, x1 - x0);
      svg.polygon({{x1, bar_y}, {x0 + tip, bar_y}, {x0, bar_y + bar_h / 2}, {x0 + tip, bar_y + bar_h},
                   {x1, bar_y + bar_h}},
                  kCool);
      svg.text((x0 + x1) / 2, bar_y + bar_h + 16 + 13 * (label_row++ % 3), v.labels[i], "middle", 10, kCool);
      cursor += v.phi[i];
    }
    svg.line(ax(v.prediction), bar_y - 8, ax(v.prediction), bar_y + bar_h + 4, "#222222", 1.5);
    x_axis(svg, ax, 140, "");
    svg.text(30, 24, "higher", "start", 11, kWarm);
    svg.text(width - 30, 24, "lower", "end", 11, kCool);
    return svg.str();
  });
}

std::string score_histograms_svg(const std::vector<HistogramPanel>& panels) {
  if (panels.empty()) throw Error("invalid_argument", "no histogram panels");
  double lo = 1e300, hi = -1e300;
  for (const auto& p : panels)
    for (double s : p.scores) {
      lo = std::min(lo, s);
      hi = std::max(hi, s);
    }
  if (lo > hi) throw Error("invalid_argument", "histogram panels hold no scores");
  const double edge_lo = std::floor(lo);
  double edge_hi = std::ceil(hi);
  if (edge_hi == edge_lo) edge_hi += 1.0;
  const auto bins = static_cast<std::size_t>(edge_hi - edge_lo);

  std::vector<std::vector<int>> counts;
  int max_count = 1;
  for (const auto& p : panels) {
    std::vector<int> c(bins, 0);
    for (double s : p.scores) {
      auto b = static_cast<std::size_t>(std::floor(s - edge_lo));
      c[std::min(b, bins - 1)]++;
    }
    max_count = std::max(max_count, *std::max_element(c.begin(), c.end()));
    counts.push_back(std::move(c));
  }

  const double panel_w = 260, panel_h = 200, gap = 30, top = 30, left = 40;
  Svg svg(left + (panel_w + gap) * static_cast<double>(panels.size()), top + panel_h + 50);
  for (std::size_t k = 0; k < panels.size(); ++k) {
    const double x0 = left + (panel_w + gap) * static_cast<double>(k);
    const Axis ax{edge_lo, edge_hi, x0, x0 + panel_w};
    const Axis ay{0.0, static_cast<double>(max_count), top + panel_h, top};
    svg.text(x0 + panel_w / 2, 18, fmt::format("{} (n = {})", panels[k].title, panels[k].scores.size()), "middle", 12);
    for (std::size_t b = 0; b < bins; ++b) {
      const double bx0 = ax(edge_lo + static_cast<double>(b)), bx1 = ax(edge_lo + static_cast<double>(b + 1));
      svg.rect(bx0 + 1, ay(counts[k][b]), bx1 - bx0 - 2, ay(0.0) - ay(counts[k][b]), kCool);
      if (counts[k][b] > 0) svg.text((bx0 + bx1) / 2, ay(counts[k][b]) - 3, fmt::format("{}", counts[k][b]), "middle", 9);
    }
    svg.line(x0, top, x0, top + panel_h, "#666666");
    x_axis(svg, ax, top + panel_h, "score");
  }
  return svg.str();
}

std::vector<HistogramPanel> augmentation_panels(const Dataset& augmented) {
  HistogramPanel raw{"Raw", {}}, syn{"Synthetic", {}}, all{"Augmented", {}};
  for (const auto& s : augmented.samples) {
    (s.id.rfind("syn-", 0) == 0 ? syn : raw).scores.push_back(s.score);
    all.scores.push_back(s.score);
  }
  return {raw, syn, all};
}

}  // namespace iqa::plot
