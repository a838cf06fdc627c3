#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "classify/explain.hpp"
#include "classify/pipeline.hpp"

namespace classify {

inline constexpr int kPlotFormatVersion = 1;

struct PlotSpec {
  enum class Kind { heatmap, bar, beeswarm };
  Kind kind = Kind::bar;
  std::string title;
  /// heatmap: {rows, columns, values (null when undefined), undefined}
  /// bar:     {metric, bars: [{label, value}]}
  /// beeswarm: {features: [{name, mean_abs, points: [{row, shap, value, missing}]}]}
  nlohmann::json payload;
  std::vector<std::string> footnotes;

  nlohmann::json to_json() const;
  static PlotSpec from_json(const nlohmann::json& doc);
};

std::string_view to_string(PlotSpec::Kind k);

/// Models (roster order) x task metrics. Throws NoSuccessfulModels.
PlotSpec heatmap_spec(const JobReport& report);

/// One bar per ok model, descending. Throws UnknownMetric, NoSuccessfulModels.
PlotSpec bar_spec(const JobReport& report, std::string_view metric);

/// Top features by mean |shap|; each row becomes a dot carrying its SHAP
/// value and min-max normalized feature value (0.5 for constant features).
/// `feature_values` is row-aligned with `shap.values`; NaN marks missing.
PlotSpec beeswarm_spec(const ShapMatrix& shap, const Matrix& feature_values, std::size_t top_n,
                       const std::vector<std::string>& row_ids = {});

/// Deterministic standalone SVG.
std::string render_svg(const PlotSpec& spec);

}  // namespace classify
