#include <algorithm>
#include <cmath>
#include <set>

#include "classify/error.hpp"
#include "classify/models.hpp"
#include "classify/models/knn.hpp"
#include "classify/models/linear.hpp"
#include "classify/models/neural.hpp"
#include "classify/models/trees.hpp"

namespace classify {

namespace {

struct KindInfo {
  ModelKind kind;
  std::string_view name;
  bool multiclass;
  bool iterative;
  bool standardize;
};

constexpr KindInfo kKinds[] = {
    {ModelKind::RandomForest, "RandomForest", true, false, false},
    {ModelKind::GradientBoosting, "GradientBoosting", false, true, false},
    {ModelKind::RegularizedGradientBoosting, "RegularizedGradientBoosting", false, true, false},
    {ModelKind::HistogramGradientBoosting, "HistogramGradientBoosting", false, true, false},
    {ModelKind::Bagging, "Bagging", false, false, false},
    {ModelKind::MultiLayerPerceptron, "MultiLayerPerceptron", true, true, true},
    {ModelKind::StochasticGradientLinear, "StochasticGradientLinear", false, false, true},
    {ModelKind::LogisticRegression, "LogisticRegression", true, false, true},
    {ModelKind::KNearestNeighbors, "KNearestNeighbors", true, false, true},
};

const KindInfo& info(ModelKind kind) {
  for (const auto& k : kKinds) {
    if (k.kind == kind) return k;
  }
  throw Error(ErrorCode::UnknownModel, "unknown model kind");
}

using R = ParamRange;

SearchSpace boosting_space(ModelKind kind, bool limits) {
  SearchSpace s;
  if (limits) {
    s = {R::integer("n_rounds", 1, 5000), R::log_real("learning_rate", 1e-4, 1.0),
         R::integer("max_depth", 1, 16), R::real("subsample", 0.05, 1.0)};
  } else {
    s = {R::integer("n_rounds", 50, 500), R::log_real("learning_rate", 0.01, 0.3),
         R::integer("max_depth", 2, 8), R::real("subsample", 0.5, 1.0)};
  }
  if (kind == ModelKind::RegularizedGradientBoosting) {
    s.push_back(limits ? R::real("lambda", 0.0, 1000.0) : R::log_real("lambda", 1e-3, 10.0));
    if (limits) s.push_back(R::real("min_child_weight", 0.0, 1000.0));
  }
  if (kind == ModelKind::HistogramGradientBoosting) {
    s.push_back(limits ? R::integer("max_leaves", 2, 1024) : R::integer("max_leaves", 7, 127));
    if (limits) {
      s.push_back(R::integer("min_leaf", 1, 1000));
      s.push_back(R::integer("max_bins", 2, 255));
    }
  }
  return s;
}

std::string_view domain_name(ParamRange::Domain d) {
  switch (d) {
    case ParamRange::Domain::integer: return "int";
    case ParamRange::Domain::real_linear: return "real";
    case ParamRange::Domain::real_log: return "real-log";
    case ParamRange::Domain::categorical: return "categorical";
  }
  return "";
}

ParamRange::Domain domain_from_name(const std::string& s) {
  if (s == "int") return ParamRange::Domain::integer;
  if (s == "real") return ParamRange::Domain::real_linear;
  if (s == "real-log") return ParamRange::Domain::real_log;
  if (s == "categorical") return ParamRange::Domain::categorical;
  throw Error(ErrorCode::ParamOutOfRange, "unknown parameter domain '" + s + "'");
}

}  // namespace

const std::vector<ModelKind>& all_model_kinds() {
  static const std::vector<ModelKind> kinds = [] {
    std::vector<ModelKind> v;
    for (const auto& k : kKinds) v.push_back(k.kind);
    return v;
  }();
  return kinds;
}

std::string_view to_string(ModelKind kind) { return info(kind).name; }

ModelKind model_kind_from_string(std::string_view name) {
  for (const auto& k : kKinds) {
    if (k.name == name) return k.kind;
  }
  throw Error(ErrorCode::UnknownModel, "unknown model '" + std::string(name) + "'");
}

bool supports_multiclass(ModelKind kind) { return info(kind).multiclass; }
bool is_iterative(ModelKind kind) { return info(kind).iterative; }

nlohmann::json to_json(const ParamValue& v) {
  return std::visit([](const auto& x) { return nlohmann::json(x); }, v);
}

nlohmann::json params_to_json(const HyperParams& params) {
  nlohmann::json out = nlohmann::json::object();
  for (const auto& [k, v] : params) out[k] = to_json(v);
  return out;
}

HyperParams params_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw Error(ErrorCode::BadRequest, "params must be a JSON object");
  HyperParams out;
  for (const auto& [k, v] : doc.items()) {
    if (v.is_number_integer()) {
      out[k] = v.get<std::int64_t>();
    } else if (v.is_number()) {
      out[k] = v.get<double>();
    } else if (v.is_string()) {
      out[k] = v.get<std::string>();
    } else if (v.is_boolean()) {
      out[k] = std::string(v.get<bool>() ? "true" : "false");
    } else {
      throw Error(ErrorCode::ParamOutOfRange, "parameter '" + k + "' has an unsupported type",
                  {std::nullopt, k});
    }
  }
  return out;
}

std::string format_param(const ParamValue& v) {
  if (const auto* i = std::get_if<std::int64_t>(&v)) return std::to_string(*i);
  if (const auto* s = std::get_if<std::string>(&v)) return *s;
  return nlohmann::json(std::get<double>(v)).dump();
}

ParamRange ParamRange::integer(std::string name, std::int64_t lo, std::int64_t hi) {
  return {std::move(name), Domain::integer, double(lo), double(hi), {}};
}
ParamRange ParamRange::real(std::string name, double lo, double hi) {
  return {std::move(name), Domain::real_linear, lo, hi, {}};
}
ParamRange ParamRange::log_real(std::string name, double lo, double hi) {
  return {std::move(name), Domain::real_log, lo, hi, {}};
}
ParamRange ParamRange::categorical(std::string name, std::vector<std::string> tokens) {
  return {std::move(name), Domain::categorical, 0.0, 0.0, std::move(tokens)};
}

bool ParamRange::contains(const ParamValue& v) const {
  if (domain == Domain::categorical) {
    const auto* s = std::get_if<std::string>(&v);
    return s && std::find(tokens.begin(), tokens.end(), *s) != tokens.end();
  }
  double x;
  if (const auto* i = std::get_if<std::int64_t>(&v)) {
    x = double(*i);
  } else if (const auto* d = std::get_if<double>(&v)) {
    if (domain == Domain::integer) return false;
    x = *d;
  } else {
    return false;
  }
  return std::isfinite(x) && x >= lo && x <= hi;
}

void ParamRange::validate() const {
  const auto fail = [&](const std::string& why) {
    throw Error(ErrorCode::ParamOutOfRange, "range for '" + name + "': " + why,
                {std::nullopt, name});
  };
  if (domain == Domain::categorical) {
    if (tokens.empty()) fail("no tokens");
    return;
  }
  if (!(lo < hi)) fail("lower bound must be below upper bound");
  if (domain == Domain::real_log && !(lo > 0)) fail("log range needs a positive lower bound");
  if (domain == Domain::integer && (lo != std::floor(lo) || hi != std::floor(hi))) {
    fail("integer range needs integer bounds");
  }
}

nlohmann::json ParamRange::to_json() const {
  nlohmann::json out = {{"name", name}, {"domain", domain_name(domain)}};
  if (domain == Domain::categorical) {
    out["tokens"] = tokens;
  } else if (domain == Domain::integer) {
    out["lo"] = std::int64_t(lo);
    out["hi"] = std::int64_t(hi);
  } else {
    out["lo"] = lo;
    out["hi"] = hi;
  }
  return out;
}

ParamRange ParamRange::from_json(const nlohmann::json& doc) {
  ParamRange r;
  try {
    r.name = doc.at("name").get<std::string>();
    r.domain = domain_from_name(doc.at("domain").get<std::string>());
    if (r.domain == Domain::categorical) {
      r.tokens = doc.at("tokens").get<std::vector<std::string>>();
    } else {
      r.lo = doc.at("lo").get<double>();
      r.hi = doc.at("hi").get<double>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::BadRequest, std::string("malformed parameter range: ") + e.what());
  }
  r.validate();
  return r;
}

SearchSpace default_search_space(ModelKind kind) {
  switch (kind) {
    case ModelKind::RandomForest:
      return {R::integer("n_trees", 50, 500), R::integer("max_depth", 2, 32),
              R::integer("min_leaf", 1, 20)};
    case ModelKind::GradientBoosting:
    case ModelKind::RegularizedGradientBoosting:
    case ModelKind::HistogramGradientBoosting:
      return boosting_space(kind, false);
    case ModelKind::Bagging:
      return {R::integer("n_estimators", 10, 100), R::real("sample_fraction", 0.5, 1.0)};
    case ModelKind::MultiLayerPerceptron:
      return {R::integer("hidden", 8, 256), R::log_real("lr", 1e-4, 1e-1),
              R::integer("epochs", 50, 500), R::log_real("l2", 1e-6, 1e-2)};
    case ModelKind::StochasticGradientLinear:
      return {R::categorical("loss", {"logistic", "hinge"}), R::log_real("alpha", 1e-6, 1e-2),
              R::integer("epochs", 10, 200)};
    case ModelKind::LogisticRegression:
      return {R::log_real("l2", 1e-4, 1e2)};
    case ModelKind::KNearestNeighbors:
      return {R::integer("k", 1, 50), R::categorical("weights", {"uniform", "distance"})};
  }
  throw Error(ErrorCode::UnknownModel, "unknown model kind");
}

SearchSpace parameter_limits(ModelKind kind) {
  switch (kind) {
    case ModelKind::RandomForest:
      return {R::integer("n_trees", 1, 2000), R::integer("max_depth", 1, 32),
              R::integer("min_leaf", 1, 1000), R::categorical("bootstrap", {"true", "false"})};
    case ModelKind::GradientBoosting:
    case ModelKind::RegularizedGradientBoosting:
    case ModelKind::HistogramGradientBoosting:
      return boosting_space(kind, true);
    case ModelKind::Bagging:
      return {R::integer("n_estimators", 1, 1000), R::real("sample_fraction", 0.05, 1.0)};
    case ModelKind::MultiLayerPerceptron:
      return {R::integer("hidden", 1, 1024),     R::log_real("lr", 1e-6, 1.0),
              R::integer("epochs", 1, 5000),     R::real("l2", 0.0, 1.0),
              R::integer("batch_size", 1, 4096), R::real("momentum", 0.0, 0.999)};
    case ModelKind::StochasticGradientLinear:
      return {R::categorical("loss", {"logistic", "hinge"}), R::log_real("alpha", 1e-8, 10.0),
              R::integer("epochs", 1, 1000)};
    case ModelKind::LogisticRegression:
      return {R::log_real("l2", 1e-8, 1e6), R::integer("max_iter", 1, 100000),
              R::log_real("tol", 1e-12, 1.0)};
    case ModelKind::KNearestNeighbors:
      return {R::integer("k", 1, 1000), R::categorical("weights", {"uniform", "distance"})};
  }
  throw Error(ErrorCode::UnknownModel, "unknown model kind");
}

HyperParams default_params(ModelKind kind) {
  using I = std::int64_t;
  switch (kind) {
    case ModelKind::RandomForest:
      return {{"n_trees", I{100}}, {"max_depth", I{32}}, {"min_leaf", I{1}},
              {"bootstrap", std::string("true")}};
    case ModelKind::GradientBoosting:
      return {{"n_rounds", I{100}}, {"learning_rate", 0.1}, {"max_depth", I{3}},
              {"subsample", 1.0}};
    case ModelKind::RegularizedGradientBoosting:
      return {{"n_rounds", I{100}}, {"learning_rate", 0.3}, {"max_depth", I{6}},
              {"subsample", 1.0},   {"lambda", 1.0},        {"min_child_weight", 1.0}};
    case ModelKind::HistogramGradientBoosting:
      return {{"n_rounds", I{100}}, {"learning_rate", 0.1}, {"max_depth", I{8}},
              {"subsample", 1.0},   {"max_leaves", I{31}},  {"min_leaf", I{20}},
              {"max_bins", I{255}}};
    case ModelKind::Bagging:
      return {{"n_estimators", I{10}}, {"sample_fraction", 1.0}};
    case ModelKind::MultiLayerPerceptron:
      return {{"hidden", I{100}}, {"lr", 0.01},          {"epochs", I{200}},
              {"l2", 1e-4},       {"batch_size", I{32}}, {"momentum", 0.9}};
    case ModelKind::StochasticGradientLinear:
      return {{"loss", std::string("hinge")}, {"alpha", 1e-4}, {"epochs", I{50}}};
    case ModelKind::LogisticRegression:
      return {{"l2", 1.0}, {"max_iter", I{2000}}, {"tol", 1e-6}};
    case ModelKind::KNearestNeighbors:
      return {{"k", I{5}}, {"weights", std::string("uniform")}};
  }
  throw Error(ErrorCode::UnknownModel, "unknown model kind");
}

HyperParams resolve_params(ModelKind kind, const HyperParams& params) {
  const SearchSpace limits = parameter_limits(kind);
  HyperParams out = default_params(kind);
  for (const auto& [name, raw] : params) {
    const auto it = std::find_if(limits.begin(), limits.end(),
                                 [&](const ParamRange& r) { return r.name == name; });
    if (it == limits.end()) {
      throw Error(ErrorCode::UnknownParam,
                  "'" + name + "' is not a parameter of " + std::string(to_string(kind)),
                  {std::nullopt, name});
    }
    ParamValue v = raw;
    // Accept 3.0 for integer parameters and 3 for real ones.
    if (it->domain == ParamRange::Domain::integer) {
      if (const auto* d = std::get_if<double>(&v); d && *d == std::floor(*d) && std::abs(*d) < 9e15) {
        v = static_cast<std::int64_t>(*d);
      }
    } else if (it->is_numeric()) {
      if (const auto* i = std::get_if<std::int64_t>(&v)) v = static_cast<double>(*i);
    }
    if (!it->contains(v)) {
      throw Error(ErrorCode::ParamOutOfRange,
                  "value " + format_param(raw) + " for '" + name + "' is outside " +
                      it->to_json().dump(),
                  {std::nullopt, name});
    }
    out[name] = v;
  }
  return out;
}

std::int64_t get_int(const HyperParams& p, const std::string& name) {
  return std::get<std::int64_t>(p.at(name));
}

double get_real(const HyperParams& p, const std::string& name) {
  const ParamValue& v = p.at(name);
  if (const auto* i = std::get_if<std::int64_t>(&v)) return double(*i);
  return std::get<double>(v);
}

const std::string& get_token(const HyperParams& p, const std::string& name) {
  return std::get<std::string>(p.at(name));
}

// ---- Encoder ---------------------------------------------------------------

Encoder Encoder::fit(const FeatureTable& train, bool standardize) {
  Encoder enc;
  enc.standardize_ = standardize;
  for (const Column& col : train.columns()) {
    Feature f;
    f.name = col.name;
    f.type = col.type;
    if (col.type == ColumnType::categorical) {
      f.categories = col.categories;
    } else if (standardize) {
      double sum = 0.0;
      std::size_t n = 0;
      for (double v : col.values) {
        if (!is_missing(v)) {
          sum += v;
          ++n;
        }
      }
      const double mean = n ? sum / double(n) : 0.0;
      double ss = 0.0;
      for (double v : col.values) {
        if (!is_missing(v)) ss += (v - mean) * (v - mean);
      }
      const double sd = n ? std::sqrt(ss / double(n)) : 0.0;
      f.mean = mean;
      f.scale = sd > 0.0 ? sd : 1.0;
    }
    enc.features_.push_back(std::move(f));
  }
  enc.build_layout();
  return enc;
}

void Encoder::build_layout() {
  source_.clear();
  offset_.clear();
  for (std::size_t j = 0; j < features_.size(); ++j) {
    offset_.push_back(source_.size());
    const std::size_t width =
        features_[j].type == ColumnType::categorical ? features_[j].categories.size() : 1;
    source_.insert(source_.end(), width, j);
  }
}

std::vector<std::string> Encoder::feature_names() const {
  std::vector<std::string> out;
  for (const auto& f : features_) out.push_back(f.name);
  return out;
}

Matrix Encoder::raw_view(const FeatureTable& table) const {
  if (table.n_columns() != features_.size()) {
    throw Error(ErrorCode::SchemaMismatch, "expected " + std::to_string(features_.size()) +
                                               " feature columns, got " +
                                               std::to_string(table.n_columns()));
  }
  const std::size_t n = table.n_rows();
  Matrix raw(Eigen::Index(n), Eigen::Index(features_.size()));
  for (std::size_t j = 0; j < features_.size(); ++j) {
    const Feature& f = features_[j];
    const Column& col = table.column(j);
    if (col.name != f.name || col.type != f.type) {
      throw Error(ErrorCode::SchemaMismatch,
                  "column " + std::to_string(j) + " is '" + col.name + "' (" +
                      std::string(to_string(col.type)) + "), expected '" + f.name + "' (" +
                      std::string(to_string(f.type)) + ")",
                  {std::nullopt, col.name});
    }
    if (f.type == ColumnType::categorical) {
      std::vector<double> remap(col.categories.size(), -1.0);
      for (std::size_t c = 0; c < col.categories.size(); ++c) {
        const auto it = std::find(f.categories.begin(), f.categories.end(), col.categories[c]);
        if (it != f.categories.end()) remap[c] = double(it - f.categories.begin());
      }
      for (std::size_t i = 0; i < n; ++i) {
        const double v = col.values[i];
        raw(Eigen::Index(i), Eigen::Index(j)) = is_missing(v) ? v : remap[std::size_t(v)];
      }
    } else {
      for (std::size_t i = 0; i < n; ++i) raw(Eigen::Index(i), Eigen::Index(j)) = col.values[i];
    }
  }
  return raw;
}

Matrix Encoder::encode(const Matrix& raw) const {
  if (std::size_t(raw.cols()) != features_.size()) {
    throw Error(ErrorCode::SchemaMismatch, "raw matrix has the wrong number of columns");
  }
  Matrix out = Matrix::Zero(raw.rows(), Eigen::Index(n_encoded()));
  for (Eigen::Index i = 0; i < raw.rows(); ++i) {
    for (std::size_t j = 0; j < features_.size(); ++j) {
      const double v = raw(i, Eigen::Index(j));
      if (is_missing(v)) {
        throw Error(ErrorCode::MissingValues, "feature '" + features_[j].name +
                                                  "' has a missing value; impute first",
                    {std::size_t(i), features_[j].name});
      }
      const Feature& f = features_[j];
      if (f.type == ColumnType::categorical) {
        // Unseen categories encode as all zeros.
        if (v >= 0) out(i, Eigen::Index(offset_[j] + std::size_t(v))) = 1.0;
      } else if (standardize_) {
        out(i, Eigen::Index(offset_[j])) = (v - f.mean) / f.scale;
      } else {
        out(i, Eigen::Index(offset_[j])) = v;
      }
    }
  }
  return out;
}

nlohmann::json Encoder::to_json() const {
  nlohmann::json feats = nlohmann::json::array();
  for (const auto& f : features_) {
    nlohmann::json jf = {{"name", f.name}, {"type", to_string(f.type)}};
    if (f.type == ColumnType::categorical) {
      jf["categories"] = f.categories;
    } else {
      jf["mean"] = f.mean;
      jf["scale"] = f.scale;
    }
    feats.push_back(std::move(jf));
  }
  return {{"standardize", standardize_}, {"features", feats}};
}

Encoder Encoder::from_json(const nlohmann::json& doc) {
  Encoder enc;
  enc.standardize_ = doc.at("standardize").get<bool>();
  for (const auto& jf : doc.at("features")) {
    Feature f;
    f.name = jf.at("name").get<std::string>();
    f.type = column_type_from_string(jf.at("type").get<std::string>());
    if (f.type == ColumnType::categorical) {
      f.categories = jf.at("categories").get<std::vector<std::string>>();
    } else {
      f.mean = jf.at("mean").get<double>();
      f.scale = jf.at("scale").get<double>();
    }
    enc.features_.push_back(std::move(f));
  }
  enc.build_layout();
  return enc;
}

// ---- TrainedModel ----------------------------------------------------------

TrainedModel::TrainedModel(ModelKind kind, HyperParams params, std::size_t n_classes,
                           std::uint64_t seed, Encoder encoder,
                           std::vector<std::string> class_names,
                           std::unique_ptr<Estimator> estimator)
    : kind_(kind),
      params_(std::move(params)),
      n_classes_(n_classes),
      seed_(seed),
      encoder_(std::move(encoder)),
      class_names_(std::move(class_names)),
      estimator_(std::move(estimator)) {}

Matrix TrainedModel::predict_proba(const FeatureTable& rows) const {
  return predict_proba_raw(encoder_.raw_view(rows));
}

Matrix TrainedModel::predict_proba_raw(const Matrix& raw) const {
  Matrix p = estimator_->predict_proba(encoder_.encode(raw));
  if (p.cols() == 2) p.col(0) = 1.0 - p.col(1).array();
  return p;
}

std::optional<LinearForm> TrainedModel::linear_margin() const {
  if (n_classes_ != 2) return std::nullopt;
  if (const auto* lin = dynamic_cast<const linear::BinaryLinear*>(estimator_.get())) {
    return LinearForm{lin->weights(), lin->intercept()};
  }
  if (const auto* soft = dynamic_cast<const linear::Softmax*>(estimator_.get())) {
    // Two-class softmax: P(1) = sigmoid(z1 - z0).
    return LinearForm{(soft->weights().row(1) - soft->weights().row(0)).transpose(),
                      soft->bias()[1] - soft->bias()[0]};
  }
  return std::nullopt;
}

nlohmann::json TrainedModel::to_json() const {
  return {{"format", "classify-model"},
          {"format_version", kModelFormatVersion},
          {"kind", to_string(kind_)},
          {"params", params_to_json(params_)},
          {"n_classes", n_classes_},
          {"class_names", class_names_},
          {"seed", seed_},
          {"encoder", encoder_.to_json()},
          {"estimator", estimator_->to_json()}};
}

TrainedModel TrainedModel::from_json(const nlohmann::json& doc) {
  try {
    if (doc.value("format", "") != "classify-model" ||
        doc.at("format_version").get<int>() != kModelFormatVersion) {
      throw Error(ErrorCode::BadModelArtifact, "not a supported model artifact");
    }
    const ModelKind kind = model_kind_from_string(doc.at("kind").get<std::string>());
    const auto& est = doc.at("estimator");
    const std::string type = est.at("type").get<std::string>();
    std::unique_ptr<Estimator> e;
    if (type == "tree_ensemble") {
      e = trees::TreeEnsemble::from_json(est);
    } else if (type == "boosted_trees") {
      e = trees::BoostedTrees::from_json(est);
    } else if (type == "mlp") {
      e = neural::Mlp::from_json(est);
    } else if (type == "softmax") {
      e = linear::Softmax::from_json(est);
    } else if (type == "binary_linear") {
      e = linear::BinaryLinear::from_json(est);
    } else if (type == "knn") {
      e = knn::NearestNeighbors::from_json(est);
    } else {
      throw Error(ErrorCode::BadModelArtifact, "unknown estimator type '" + type + "'");
    }
    return TrainedModel(kind, params_from_json(doc.at("params")),
                        doc.at("n_classes").get<std::size_t>(), doc.at("seed").get<std::uint64_t>(),
                        Encoder::from_json(doc.at("encoder")),
                        doc.at("class_names").get<std::vector<std::string>>(), std::move(e));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::BadModelArtifact, std::string("malformed model artifact: ") + e.what());
  }
}

// ---- fit -------------------------------------------------------------------

TrainedModel fit(ModelKind kind, const HyperParams& raw_params, const Dataset& train,
                 std::uint64_t seed, const FitObserver& observer) {
  const HyperParams p = resolve_params(kind, raw_params);
  const std::size_t n_classes = train.n_classes();
  if (n_classes > 2 && !supports_multiclass(kind)) {
    throw Error(ErrorCode::MulticlassUnsupported,
                std::string(to_string(kind)) + " supports two classes only");
  }
  if (train.n_rows() < 2) throw Error(ErrorCode::TooFewRows, "training needs at least 2 rows");
  if (train.features.n_columns() == 0) {
    throw Error(ErrorCode::EmptyDataset, "training data has no feature columns");
  }
  std::set<int> present(train.labels.begin(), train.labels.end());
  if (present.size() < 2) {
    throw Error(ErrorCode::SingleClass, "training rows cover fewer than two classes");
  }
  if (train.features.has_missing()) {
    throw Error(ErrorCode::MissingValues,
                std::to_string(train.features.missing_count()) +
                    " missing feature cells; impute before training");
  }

  Encoder encoder = Encoder::fit(train.features, info(kind).standardize);
  const Matrix X = encoder.encode(encoder.raw_view(train.features));
  const std::span<const int> y = train.labels;
  const auto d = std::size_t(X.cols());

  const auto make = [&](std::unique_ptr<Estimator> e) {
    return TrainedModel(kind, p, n_classes, seed, encoder, train.class_names, std::move(e));
  };

  switch (kind) {
    case ModelKind::RandomForest: {
      trees::EnsembleOptions o;
      o.n_trees = std::size_t(get_int(p, "n_trees"));
      o.bootstrap = get_token(p, "bootstrap") == "true";
      o.tree.max_depth = std::size_t(get_int(p, "max_depth"));
      o.tree.min_leaf = std::size_t(get_int(p, "min_leaf"));
      o.tree.max_features = std::size_t(std::ceil(std::sqrt(double(d))));
      return make(trees::fit_ensemble(X, y, n_classes, o, seed));
    }
    case ModelKind::Bagging: {
      trees::EnsembleOptions o;
      o.n_trees = std::size_t(get_int(p, "n_estimators"));
      o.sample_fraction = get_real(p, "sample_fraction");
      o.tree.max_depth = 32;
      return make(trees::fit_ensemble(X, y, n_classes, o, seed));
    }
    case ModelKind::GradientBoosting:
    case ModelKind::RegularizedGradientBoosting:
    case ModelKind::HistogramGradientBoosting: {
      trees::BoostingOptions o;
      o.n_rounds = std::size_t(get_int(p, "n_rounds"));
      o.learning_rate = get_real(p, "learning_rate");
      o.max_depth = std::size_t(get_int(p, "max_depth"));
      o.subsample = get_real(p, "subsample");
      if (kind == ModelKind::GradientBoosting) {
        o.flavor = trees::BoostingFlavor::classic;
      } else if (kind == ModelKind::RegularizedGradientBoosting) {
        o.flavor = trees::BoostingFlavor::regularized;
        o.lambda = get_real(p, "lambda");
        o.min_child_hessian = get_real(p, "min_child_weight");
      } else {
        o.flavor = trees::BoostingFlavor::histogram;
        o.max_leaves = std::size_t(get_int(p, "max_leaves"));
        o.min_leaf = std::size_t(get_int(p, "min_leaf"));
        o.max_bins = std::size_t(get_int(p, "max_bins"));
        o.min_child_hessian = 1e-3;
      }
      auto est = std::make_unique<trees::BoostedTrees>();
      auto* raw = est.get();
      TrainedModel model = make(std::move(est));
      trees::RoundCallback cb;
      if (observer) cb = [&](std::size_t r) { return observer(r, model); };
      trees::fit_boosting(*raw, X, y, o, seed, cb);
      return model;
    }
    case ModelKind::MultiLayerPerceptron: {
      neural::MlpOptions o;
      o.hidden = std::size_t(get_int(p, "hidden"));
      o.learning_rate = get_real(p, "lr");
      o.epochs = std::size_t(get_int(p, "epochs"));
      o.l2 = get_real(p, "l2");
      o.batch_size = std::size_t(get_int(p, "batch_size"));
      o.momentum = get_real(p, "momentum");
      auto est = std::make_unique<neural::Mlp>();
      auto* raw = est.get();
      TrainedModel model = make(std::move(est));
      std::function<bool(std::size_t)> cb;
      if (observer) cb = [&](std::size_t e) { return observer(e, model); };
      neural::fit_mlp(*raw, X, y, n_classes, o, seed, cb);
      return model;
    }
    case ModelKind::StochasticGradientLinear: {
      linear::SgdOptions o;
      o.loss = get_token(p, "loss") == "hinge" ? linear::SgdLoss::hinge : linear::SgdLoss::logistic;
      o.alpha = get_real(p, "alpha");
      o.epochs = std::size_t(get_int(p, "epochs"));
      return make(linear::fit_sgd(X, y, o, seed));
    }
    case ModelKind::LogisticRegression: {
      linear::LogisticOptions o;
      o.l2 = get_real(p, "l2");
      o.max_iter = std::size_t(get_int(p, "max_iter"));
      o.tol = get_real(p, "tol");
      return make(linear::fit_logistic(X, y, n_classes, o));
    }
    case ModelKind::KNearestNeighbors: {
      const auto w = get_token(p, "weights") == "uniform" ? knn::Weighting::uniform
                                                          : knn::Weighting::distance;
      return make(std::make_unique<knn::NearestNeighbors>(
          X, train.labels, n_classes, std::size_t(get_int(p, "k")), w));
    }
  }
  throw Error(ErrorCode::UnknownModel, "unknown model kind");
}

}  // namespace classify
