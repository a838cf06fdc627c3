#include "classify/metrics.hpp"

#include <algorithm>
#include <numeric>

#include "classify/error.hpp"

namespace classify {

std::size_t ConfusionCounts::total() const {
  return std::accumulate(counts_.begin(), counts_.end(), std::size_t{0});
}

std::size_t ConfusionCounts::row_sum(std::size_t truth) const {
  std::size_t s = 0;
  for (std::size_t p = 0; p < n_classes_; ++p) s += at(truth, p);
  return s;
}

std::size_t ConfusionCounts::col_sum(std::size_t pred) const {
  std::size_t s = 0;
  for (std::size_t t = 0; t < n_classes_; ++t) s += at(t, pred);
  return s;
}

std::size_t ConfusionCounts::trace() const {
  std::size_t s = 0;
  for (std::size_t c = 0; c < n_classes_; ++c) s += at(c, c);
  return s;
}

ConfusionCounts confusion(std::span<const int> labels, std::span<const int> preds,
                          std::size_t n_classes) {
  if (labels.size() != preds.size()) {
    throw Error(ErrorCode::LengthMismatch, "labels and predictions differ in length (" +
                                               std::to_string(labels.size()) + " vs " +
                                               std::to_string(preds.size()) + ")");
  }
  if (labels.empty()) throw Error(ErrorCode::LengthMismatch, "no labels to evaluate");
  if (n_classes == 0) {
    int hi = 1;
    for (int y : labels) hi = std::max(hi, y);
    for (int y : preds) hi = std::max(hi, y);
    n_classes = static_cast<std::size_t>(hi) + 1;
  }
  ConfusionCounts cc(n_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    ++cc.at(static_cast<std::size_t>(labels[i]), static_cast<std::size_t>(preds[i]));
  }
  return cc;
}

namespace {

std::optional<double> ratio(std::size_t num, std::size_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

/// Rank-sum form of the Mann-Whitney statistic. Mid-ranks are half-integers,
/// so the numerator is exact and matches pair counting bit for bit.
double auc_for_positive(std::span<const double> scores, const std::vector<bool>& positive) {
  const std::size_t n = scores.size();
  std::size_t n_pos = 0;
  for (bool p : positive) n_pos += p ? 1 : 0;
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0) throw Error(ErrorCode::NoPositives, "AUC needs at least one positive");
  if (n_neg == 0) throw Error(ErrorCode::NoNegatives, "AUC needs at least one negative");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Twice the rank sum keeps everything integral.
  std::size_t twice_rank_sum = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const std::size_t twice_mid_rank = (i + 1) + (j + 1);
    for (std::size_t k = i; k <= j; ++k) {
      if (positive[order[k]]) twice_rank_sum += twice_mid_rank;
    }
    i = j + 1;
  }
  const double u2 = static_cast<double>(twice_rank_sum) - static_cast<double>(n_pos * (n_pos + 1));
  return u2 / (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

}  // namespace

double binary_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw Error(ErrorCode::LengthMismatch, "scores and labels differ in length");
  }
  std::vector<bool> positive(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) positive[i] = labels[i] == 1;
  return auc_for_positive(scores, positive);
}

MetricSet binary_metrics(const ConfusionCounts& cc, std::span<const double> scores,
                         std::span<const int> labels) {
  MetricSet m;
  m.multiclass = false;
  m.accuracy = static_cast<double>(cc.tp() + cc.tn()) / static_cast<double>(cc.total());
  m.sensitivity = ratio(cc.tp(), cc.tp() + cc.fn());
  m.specificity = ratio(cc.tn(), cc.tn() + cc.fp());
  m.ppv = ratio(cc.tp(), cc.tp() + cc.fp());
  m.npv = ratio(cc.tn(), cc.tn() + cc.fn());
  m.auc = binary_auc(scores, labels);
  return m;
}

std::optional<double> cohen_kappa(const ConfusionCounts& cc) {
  const double n = static_cast<double>(cc.total());
  if (n == 0) return std::nullopt;
  const double p_o = static_cast<double>(cc.trace()) / n;
  double p_e = 0.0;
  for (std::size_t c = 0; c < cc.n_classes(); ++c) {
    p_e += static_cast<double>(cc.row_sum(c)) * static_cast<double>(cc.col_sum(c));
  }
  p_e /= n * n;
  if (p_e == 1.0) return std::nullopt;
  return (p_o - p_e) / (1.0 - p_e);
}

double macro_ovr_auc(const Matrix& scores, std::span<const int> labels) {
  if (static_cast<std::size_t>(scores.rows()) != labels.size()) {
    throw Error(ErrorCode::LengthMismatch, "score rows and labels differ in length");
  }
  double sum = 0.0;
  std::size_t used = 0;
  std::vector<double> column(labels.size());
  std::vector<bool> positive(labels.size());
  for (Eigen::Index c = 0; c < scores.cols(); ++c) {
    std::size_t n_pos = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      positive[i] = labels[i] == c;
      n_pos += positive[i] ? 1 : 0;
      column[i] = scores(Eigen::Index(i), c);
    }
    if (n_pos == 0 || n_pos == labels.size()) continue;
    sum += auc_for_positive(column, positive);
    ++used;
  }
  if (used == 0) {
    throw Error(ErrorCode::AllClassesDegenerate, "every class is absent or universal in the labels");
  }
  return sum / static_cast<double>(used);
}

std::vector<int> predict_labels(const Matrix& proba) {
  std::vector<int> out(static_cast<std::size_t>(proba.rows()));
  for (Eigen::Index i = 0; i < proba.rows(); ++i) {
    if (proba.cols() == 2) {
      out[std::size_t(i)] = proba(i, 1) >= 0.5 ? 1 : 0;
    } else {
      Eigen::Index best = 0;
      for (Eigen::Index c = 1; c < proba.cols(); ++c) {
        if (proba(i, c) > proba(i, best)) best = c;
      }
      out[std::size_t(i)] = static_cast<int>(best);
    }
  }
  return out;
}

MetricSet evaluate_probabilities(const Matrix& proba, std::span<const int> labels,
                                 bool multiclass) {
  const std::vector<int> preds = predict_labels(proba);
  const ConfusionCounts cc = confusion(labels, preds, static_cast<std::size_t>(proba.cols()));
  if (!multiclass) {
    std::vector<double> scores(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) scores[i] = proba(Eigen::Index(i), 1);
    MetricSet m;
    try {
      m = binary_metrics(cc, scores, labels);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NoPositives && e.code() != ErrorCode::NoNegatives) throw;
      m.accuracy = static_cast<double>(cc.tp() + cc.tn()) / static_cast<double>(cc.total());
      m.sensitivity = ratio(cc.tp(), cc.tp() + cc.fn());
      m.specificity = ratio(cc.tn(), cc.tn() + cc.fp());
      m.ppv = ratio(cc.tp(), cc.tp() + cc.fp());
      m.npv = ratio(cc.tn(), cc.tn() + cc.fn());
    }
    return m;
  }
  MetricSet m;
  m.multiclass = true;
  m.accuracy = static_cast<double>(cc.trace()) / static_cast<double>(cc.total());
  m.kappa = cohen_kappa(cc);
  try {
    m.auc = macro_ovr_auc(proba, labels);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::AllClassesDegenerate) throw;
  }
  return m;
}

std::vector<std::string> MetricSet::names(bool multiclass) {
  if (multiclass) return {"accuracy", "auc", "kappa"};
  return {"accuracy", "auc", "sensitivity", "specificity", "npv", "ppv"};
}

std::optional<double> MetricSet::get(std::string_view name) const {
  if (name == "accuracy") return accuracy;
  if (name == "auc") return auc;
  if (multiclass) {
    if (name == "kappa") return kappa;
  } else {
    if (name == "sensitivity") return sensitivity;
    if (name == "specificity") return specificity;
    if (name == "npv") return npv;
    if (name == "ppv") return ppv;
  }
  throw Error(ErrorCode::UnknownMetric, "metric '" + std::string(name) + "' is not reported for " +
                                            (multiclass ? "multiclass" : "binary") + " tasks");
}

nlohmann::ordered_json MetricSet::to_json() const {
  nlohmann::ordered_json out = nlohmann::ordered_json::object();
  for (const auto& name : names(multiclass)) {
    const auto v = get(name);
    out[name] = v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
  }
  return out;
}

MetricSet MetricSet::from_json(const nlohmann::json& doc) {
  MetricSet m;
  m.multiclass = doc.contains("kappa");
  auto opt = [&](const char* key) -> std::optional<double> {
    if (!doc.contains(key) || doc[key].is_null()) return std::nullopt;
    return doc[key].get<double>();
  };
  m.accuracy = doc.at("accuracy").get<double>();
  m.auc = opt("auc");
  m.sensitivity = opt("sensitivity");
  m.specificity = opt("specificity");
  m.npv = opt("npv");
  m.ppv = opt("ppv");
  m.kappa = opt("kappa");
  return m;
}

}  // namespace classify
