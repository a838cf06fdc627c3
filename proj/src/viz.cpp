#include "classify/viz.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "classify/error.hpp"
#include "classify/rng.hpp"

namespace classify {

std::string_view to_string(PlotSpec::Kind k) {
  switch (k) {
    case PlotSpec::Kind::heatmap: return "heatmap";
    case PlotSpec::Kind::bar: return "bar";
    case PlotSpec::Kind::beeswarm: return "beeswarm";
  }
  return "bar";
}

nlohmann::json PlotSpec::to_json() const {
  return {{"plot_format_version", kPlotFormatVersion},
          {"kind", to_string(kind)},
          {"title", title},
          {"payload", payload},
          {"footnotes", footnotes}};
}

PlotSpec PlotSpec::from_json(const nlohmann::json& doc) {
  PlotSpec s;
  const std::string k = doc.at("kind").get<std::string>();
  if (k == "heatmap") s.kind = Kind::heatmap;
  else if (k == "bar") s.kind = Kind::bar;
  else if (k == "beeswarm") s.kind = Kind::beeswarm;
  else throw Error(ErrorCode::BadRequest, "unknown plot kind '" + k + "'");
  s.title = doc.at("title").get<std::string>();
  s.payload = doc.at("payload");
  s.footnotes = doc.value("footnotes", std::vector<std::string>{});
  return s;
}

namespace {

std::vector<const ModelReport*> ok_models(const JobReport& report) {
  std::vector<const ModelReport*> ok;
  for (ModelKind kind : all_model_kinds()) {
    for (const auto& m : report.models) {
      if (m.kind == kind && m.ok) ok.push_back(&m);
    }
  }
  if (ok.empty()) throw Error(ErrorCode::NoSuccessfulModels, "no model finished successfully");
  return ok;
}

std::vector<std::string> failure_notes(const JobReport& report) {
  std::vector<std::string> notes;
  for (const auto& m : report.models) {
    if (!m.ok) notes.push_back(std::string(to_string(m.kind)) + " failed: " + m.failure);
  }
  return notes;
}

bool finite(const std::optional<double>& v) { return v && std::isfinite(*v); }

}  // namespace

PlotSpec heatmap_spec(const JobReport& report) {
  const auto ok = ok_models(report);
  const std::vector<std::string> metrics = MetricSet::names(report.multiclass());
  PlotSpec s;
  s.kind = PlotSpec::Kind::heatmap;
  s.title = "Test-set metrics by model";
  nlohmann::json rows = nlohmann::json::array(), values = nlohmann::json::array(),
                 undefined = nlohmann::json::array();
  for (const ModelReport* m : ok) {
    rows.push_back(to_string(m->kind));
    nlohmann::json vr = nlohmann::json::array(), ur = nlohmann::json::array();
    for (const auto& name : metrics) {
      const auto v = m->metrics.get(name);
      vr.push_back(finite(v) ? nlohmann::json(*v) : nlohmann::json(nullptr));
      ur.push_back(!finite(v));
    }
    values.push_back(std::move(vr));
    undefined.push_back(std::move(ur));
  }
  s.payload = {{"rows", rows}, {"columns", metrics}, {"values", values}, {"undefined", undefined}};
  s.footnotes = failure_notes(report);
  return s;
}

PlotSpec bar_spec(const JobReport& report, std::string_view metric) {
  const std::vector<std::string> metrics = MetricSet::names(report.multiclass());
  if (std::find(metrics.begin(), metrics.end(), metric) == metrics.end()) {
    throw Error(ErrorCode::UnknownMetric, "metric '" + std::string(metric) + "' is not reported for this task");
  }
  const auto ok = ok_models(report);
  PlotSpec s;
  s.kind = PlotSpec::Kind::bar;
  s.title = "Test-set " + std::string(metric) + " by model";
  std::vector<std::pair<std::string, double>> bars;
  s.footnotes = failure_notes(report);
  for (const ModelReport* m : ok) {
    const auto v = m->metrics.get(metric);
    if (finite(v)) {
      bars.emplace_back(std::string(to_string(m->kind)), *v);
    } else {
      s.footnotes.push_back(std::string(to_string(m->kind)) + ": " + std::string(metric) + " is undefined");
    }
  }
  std::stable_sort(bars.begin(), bars.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& [label, value] : bars) arr.push_back({{"label", label}, {"value", value}});
  s.payload = {{"metric", metric}, {"bars", arr}};
  return s;
}

PlotSpec beeswarm_spec(const ShapMatrix& shap, const Matrix& feature_values, std::size_t top_n,
                       const std::vector<std::string>& row_ids) {
  const Eigen::Index n = shap.values.rows(), m = shap.values.cols();
  if (feature_values.rows() != n || feature_values.cols() != m) {
    throw Error(ErrorCode::DimensionMismatch, "feature values are not row-aligned with the SHAP matrix");
  }
  std::vector<double> mean_abs(std::size_t(m), 0.0);
  for (Eigen::Index j = 0; j < m; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double v = shap.values(i, j);
      if (std::isfinite(v)) mean_abs[std::size_t(j)] += std::abs(v);
    }
    if (n > 0) mean_abs[std::size_t(j)] /= double(n);
  }
  std::vector<std::size_t> order(static_cast<std::size_t>(m));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return mean_abs[a] > mean_abs[b]; });
  order.resize(std::min(top_n, order.size()));

  PlotSpec s;
  s.kind = PlotSpec::Kind::beeswarm;
  s.title = "SHAP values per row";
  nlohmann::json features = nlohmann::json::array();
  for (std::size_t j : order) {
    const auto c = Eigen::Index(j);
    double lo = INFINITY, hi = -INFINITY;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double v = feature_values(i, c);
      if (std::isfinite(v)) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
    nlohmann::json points = nlohmann::json::array();
    for (Eigen::Index i = 0; i < n; ++i) {
      const double fv = feature_values(i, c);
      const double sv = shap.values(i, c);
      nlohmann::json p;
      p["row"] = std::size_t(i) < row_ids.size() ? row_ids[std::size_t(i)] : std::to_string(i);
      p["shap"] = std::isfinite(sv) ? nlohmann::json(sv) : nlohmann::json(nullptr);
      if (std::isfinite(fv)) {
        p["value"] = hi > lo ? (fv - lo) / (hi - lo) : 0.5;
        p["missing"] = false;
      } else {
        p["value"] = nullptr;
        p["missing"] = true;
      }
      points.push_back(std::move(p));
    }
    const std::string name = j < shap.feature_names.size() ? shap.feature_names[j] : "f" + std::to_string(j);
    features.push_back({{"name", name}, {"mean_abs", mean_abs[j]}, {"points", std::move(points)}});
  }
  s.payload = {{"features", std::move(features)}};
  return s;
}

// ---- SVG ---------------------------------------------------------------------

namespace {

std::string fmt(double v, int digits = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string escape(const std::string& s) {
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

/// White to deep blue.
std::string blue(double t) {
  t = std::clamp(t, 0.0, 1.0);
  const int r = int(std::lround(255 - t * (255 - 33)));
  const int g = int(std::lround(255 - t * (255 - 102)));
  const int b = int(std::lround(255 - t * (255 - 172)));
  char buf[16];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
  return buf;
}

/// Blue (low feature value) to red (high).
std::string diverging(double t) {
  t = std::clamp(t, 0.0, 1.0);
  const int r = int(std::lround(30 + t * (220 - 30)));
  const int g = int(std::lround(136 - t * (136 - 40)));
  const int b = int(std::lround(229 - t * (229 - 60)));
  char buf[16];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
  return buf;
}

std::string header(int w, int h, const std::string& title) {
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
    << "\" viewBox=\"0 0 " << w << ' ' << h << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<text x=\"10\" y=\"20\" font-size=\"15\" font-weight=\"bold\">" << escape(title) << "</text>\n";
  return o.str();
}

void footnotes(std::ostringstream& o, const PlotSpec& spec, int y) {
  for (const auto& f : spec.footnotes) {
    o << "<text x=\"10\" y=\"" << y << "\" fill=\"#666\">* " << escape(f) << "</text>\n";
    y += 16;
  }
}

std::string heatmap_svg(const PlotSpec& spec) {
  const auto& rows = spec.payload.at("rows");
  const auto& cols = spec.payload.at("columns");
  const int cw = 90, ch = 28, left = 220, top = 60;
  const int w = left + cw * int(cols.size()) + 20;
  const int h = top + ch * int(rows.size()) + 20 + 16 * int(spec.footnotes.size());
  std::ostringstream o;
  o << header(w, h, spec.title);
  for (std::size_t c = 0; c < cols.size(); ++c) {
    o << "<text x=\"" << left + cw * int(c) + cw / 2 << "\" y=\"" << top - 8
      << "\" text-anchor=\"middle\">" << escape(cols[c].get<std::string>()) << "</text>\n";
  }
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const int y = top + ch * int(r);
    o << "<text x=\"" << left - 8 << "\" y=\"" << y + ch / 2 + 4 << "\" text-anchor=\"end\">"
      << escape(rows[r].get<std::string>()) << "</text>\n";
    for (std::size_t c = 0; c < cols.size(); ++c) {
      const auto& v = spec.payload.at("values")[r][c];
      const int x = left + cw * int(c);
      const std::string fill = v.is_null() ? "#dddddd" : blue(v.get<double>());
      const std::string label = v.is_null() ? "undefined" : fmt(v.get<double>());
      const bool dark = !v.is_null() && v.get<double>() > 0.6;
      o << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << cw << "\" height=\"" << ch
        << "\" fill=\"" << fill << "\" stroke=\"white\"/>\n"
        << "<text x=\"" << x + cw / 2 << "\" y=\"" << y + ch / 2 + 4 << "\" text-anchor=\"middle\" fill=\""
        << (dark ? "white" : "black") << "\">" << label << "</text>\n";
    }
  }
  footnotes(o, spec, top + ch * int(rows.size()) + 20);
  o << "</svg>\n";
  return o.str();
}

std::string bar_svg(const PlotSpec& spec) {
  const auto& bars = spec.payload.at("bars");
  const int bh = 24, left = 220, top = 40, span = 400;
  const int w = left + span + 80;
  const int h = top + bh * int(bars.size()) + 20 + 16 * int(spec.footnotes.size());
  double vmax = 0.0;
  for (const auto& b : bars) vmax = std::max(vmax, b.at("value").get<double>());
  if (vmax <= 0) vmax = 1.0;
  std::ostringstream o;
  o << header(w, h, spec.title);
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const double v = bars[i].at("value").get<double>();
    const int y = top + bh * int(i);
    const double len = std::max(0.0, v) / vmax * span;
    o << "<text x=\"" << left - 8 << "\" y=\"" << y + bh / 2 + 4 << "\" text-anchor=\"end\">"
      << escape(bars[i].at("label").get<std::string>()) << "</text>\n"
      << "<rect x=\"" << left << "\" y=\"" << y + 3 << "\" width=\"" << fmt(len, 1) << "\" height=\""
      << bh - 6 << "\" fill=\"#2166ac\"/>\n"
      << "<text x=\"" << fmt(left + len + 6, 1) << "\" y=\"" << y + bh / 2 + 4 << "\">" << fmt(v)
      << "</text>\n";
  }
  footnotes(o, spec, top + bh * int(bars.size()) + 20);
  o << "</svg>\n";
  return o.str();
}

std::string beeswarm_svg(const PlotSpec& spec) {
  const auto& features = spec.payload.at("features");
  const int rh = 40, left = 220, top = 50, span = 500;
  const int w = left + span + 40;
  const int h = top + rh * int(features.size()) + 40 + 16 * int(spec.footnotes.size());
  double lo = 0.0, hi = 0.0;
  for (const auto& f : features) {
    for (const auto& p : f.at("points")) {
      if (p.at("shap").is_null()) continue;
      lo = std::min(lo, p.at("shap").get<double>());
      hi = std::max(hi, p.at("shap").get<double>());
    }
  }
  if (hi - lo <= 0) hi = lo + 1.0;
  const auto xpos = [&](double v) { return left + (v - lo) / (hi - lo) * span; };
  std::ostringstream o;
  o << header(w, h, spec.title);
  const double zero = xpos(0.0);
  o << "<line x1=\"" << fmt(zero, 1) << "\" y1=\"" << top - 10 << "\" x2=\"" << fmt(zero, 1) << "\" y2=\""
    << top + rh * int(features.size()) << "\" stroke=\"#999\"/>\n";
  for (std::size_t r = 0; r < features.size(); ++r) {
    const double cy = top + rh * double(r) + rh / 2.0;
    o << "<text x=\"" << left - 8 << "\" y=\"" << fmt(cy + 4, 1) << "\" text-anchor=\"end\">"
      << escape(features[r].at("name").get<std::string>()) << "</text>\n";
    std::size_t k = 0;
    for (const auto& p : features[r].at("points")) {
      ++k;
      if (p.at("shap").is_null()) continue;
      // Deterministic vertical spread; a stand-in for a real swarm layout.
      const double jitter = (double(mix_seed(r * 1000003 + k) >> 11) * 0x1.0p-53 - 0.5) * (rh - 12);
      const std::string fill = p.at("missing").get<bool>() ? "#aaaaaa" : diverging(p.at("value").get<double>());
      o << "<circle cx=\"" << fmt(xpos(p.at("shap").get<double>()), 1) << "\" cy=\"" << fmt(cy + jitter, 1)
        << "\" r=\"2.5\" fill=\"" << fill << "\" fill-opacity=\"0.8\"/>\n";
    }
  }
  const int axis = top + rh * int(features.size()) + 16;
  o << "<text x=\"" << left << "\" y=\"" << axis << "\">" << fmt(lo) << "</text>\n"
    << "<text x=\"" << left + span << "\" y=\"" << axis << "\" text-anchor=\"end\">" << fmt(hi) << "</text>\n"
    << "<text x=\"" << left + span / 2 << "\" y=\"" << axis << "\" text-anchor=\"middle\">SHAP value (color: feature value, low blue to high red)</text>\n";
  footnotes(o, spec, axis + 20);
  o << "</svg>\n";
  return o.str();
}

}  // namespace

std::string render_svg(const PlotSpec& spec) {
  switch (spec.kind) {
    case PlotSpec::Kind::heatmap: return heatmap_svg(spec);
    case PlotSpec::Kind::bar: return bar_svg(spec);
    case PlotSpec::Kind::beeswarm: return beeswarm_svg(spec);
  }
  return {};
}

}  // namespace classify
