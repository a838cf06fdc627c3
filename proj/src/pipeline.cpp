#include "classify/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>
#include <set>
#include <type_traits>

#include "classify/error.hpp"
#include "classify/rng.hpp"
#include "classify/viz.hpp"

namespace classify {

std::string_view to_string(Task t) { return t == Task::binary ? "binary" : "multiclass"; }

std::string_view to_string(SynthMode m) {
  switch (m) {
    case SynthMode::none: return "none";
    case SynthMode::impute: return "impute";
    case SynthMode::balance: return "balance";
    case SynthMode::generate: return "generate";
  }
  return "none";
}

namespace {

[[noreturn]] void bad_field(const std::string& field, const std::string& message,
                            ErrorCode code = ErrorCode::InvalidSpec) {
  throw Error(code, field + ": " + message, ErrorLocation{std::nullopt, field});
}

template <class T>
T field_as(const nlohmann::json& doc, const std::string& key, const std::string& what) {
  try {
    const auto& v = doc.at(key);
    // get<unsigned>() would silently wrap negative numbers.
    if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
      if (!v.is_number_unsigned()) bad_field(key, "expected " + what);
    }
    return v.get<T>();
  } catch (const nlohmann::json::exception&) {
    bad_field(key, "expected " + what);
  }
}

Task task_from(const std::string& s) {
  if (s == "binary") return Task::binary;
  if (s == "multiclass") return Task::multiclass;
  bad_field("task", "must be \"binary\" or \"multiclass\"");
}

SynthMode synth_from(const std::string& s) {
  for (SynthMode m : {SynthMode::none, SynthMode::impute, SynthMode::balance, SynthMode::generate}) {
    if (s == to_string(m)) return m;
  }
  bad_field("synth_mode", "must be one of none, impute, balance, generate");
}

std::size_t kind_index(ModelKind kind) { return std::size_t(kind); }

// Seed streams, one per pipeline stage.
enum : std::uint64_t {
  kSplitStream = 1,
  kSynthStream = 2,
  kTuneStream = 100,
  kFitStream = 200,
  kExplainStream = 300,
  kSubsetStream = 400,
};

}  // namespace

nlohmann::json JobSpec::to_json() const {
  nlohmann::json models_j = nlohmann::json::array();
  for (ModelKind k : models) models_j.push_back(to_string(k));
  nlohmann::json overrides = nlohmann::json::object();
  for (const auto& [kind, space] : param_overrides) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : space) arr.push_back(r.to_json());
    overrides[std::string(to_string(kind))] = arr;
  }
  nlohmann::json fe = nullptr;
  if (feature_eval) fe = {{"features", feature_eval->features}, {"k", feature_eval->k}};
  return {{"dataset_id", dataset_id},
          {"test_dataset_id", test_dataset_id ? nlohmann::json(*test_dataset_id) : nlohmann::json(nullptr)},
          {"test_fraction", test_fraction},
          {"task", to_string(task)},
          {"models", models_j},
          {"tune", tune},
          {"n_iterations", n_iterations},
          {"param_overrides", overrides},
          {"shap", shap},
          {"synth_mode", to_string(synth_mode)},
          {"save_synthetic", save_synthetic},
          {"feature_eval", fe},
          {"seed", seed},
          {"synthesizer", synthesizer},
          {"shap_max_rows", shap_max_rows},
          {"shap_background", shap_background},
          {"feature_eval_max_combinations", feature_eval_cap.max_combinations}};
}

JobSpec JobSpec::from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) bad_field("spec", "expected a JSON object");
  static const std::set<std::string> known{
      "dataset_id", "test_dataset_id", "test_fraction", "task", "models", "tune",
      "n_iterations", "param_overrides", "shap", "synth_mode", "save_synthetic", "feature_eval",
      "seed", "synthesizer", "shap_max_rows", "shap_background", "feature_eval_max_combinations"};
  for (const auto& [key, value] : doc.items()) {
    if (!known.count(key)) bad_field(key, "unknown field");
  }
  JobSpec s;
  if (!doc.contains("dataset_id")) bad_field("dataset_id", "required");
  s.dataset_id = field_as<std::string>(doc, "dataset_id", "a string");
  if (doc.contains("test_dataset_id") && !doc.at("test_dataset_id").is_null()) {
    s.test_dataset_id = field_as<std::string>(doc, "test_dataset_id", "a string or null");
  }
  if (doc.contains("test_fraction")) s.test_fraction = field_as<double>(doc, "test_fraction", "a number");
  if (doc.contains("task")) s.task = task_from(field_as<std::string>(doc, "task", "a string"));
  if (!doc.contains("models")) bad_field("models", "required", ErrorCode::ModelRosterInvalid);
  for (const auto& name : field_as<std::vector<std::string>>(doc, "models", "a list of model names")) {
    try {
      s.models.push_back(model_kind_from_string(name));
    } catch (const Error&) {
      bad_field("models", "unknown model '" + name + "'", ErrorCode::ModelRosterInvalid);
    }
  }
  if (doc.contains("tune")) s.tune = field_as<bool>(doc, "tune", "a boolean");
  if (doc.contains("n_iterations")) s.n_iterations = field_as<std::size_t>(doc, "n_iterations", "a count");
  if (doc.contains("param_overrides") && !doc.at("param_overrides").is_null()) {
    const auto& po = doc.at("param_overrides");
    if (!po.is_object()) bad_field("param_overrides", "expected an object keyed by model name");
    for (const auto& [name, ranges] : po.items()) {
      ModelKind kind;
      try {
        kind = model_kind_from_string(name);
      } catch (const Error&) {
        bad_field("param_overrides", "unknown model '" + name + "'");
      }
      SearchSpace space;
      try {
        for (const auto& r : ranges) space.push_back(ParamRange::from_json(r));
      } catch (const nlohmann::json::exception& e) {
        bad_field("param_overrides." + name, std::string("malformed range: ") + e.what());
      } catch (const Error& e) {
        bad_field("param_overrides." + name, e.what(), e.code());
      }
      s.param_overrides[kind] = std::move(space);
    }
  }
  if (doc.contains("shap")) s.shap = field_as<bool>(doc, "shap", "a boolean");
  if (doc.contains("synth_mode")) s.synth_mode = synth_from(field_as<std::string>(doc, "synth_mode", "a string"));
  if (doc.contains("save_synthetic")) s.save_synthetic = field_as<bool>(doc, "save_synthetic", "a boolean");
  if (doc.contains("feature_eval") && !doc.at("feature_eval").is_null()) {
    const auto& fe = doc.at("feature_eval");
    FeatureEvalSpec f;
    f.features = field_as<std::vector<std::string>>(fe, "features", "a list of feature names");
    f.k = field_as<std::size_t>(fe, "k", "a count");
    s.feature_eval = std::move(f);
  }
  if (doc.contains("seed")) s.seed = field_as<std::uint64_t>(doc, "seed", "an unsigned 64-bit integer");
  if (doc.contains("synthesizer")) s.synthesizer = field_as<std::string>(doc, "synthesizer", "a string");
  if (doc.contains("shap_max_rows")) s.shap_max_rows = field_as<std::size_t>(doc, "shap_max_rows", "a count");
  if (doc.contains("shap_background")) s.shap_background = field_as<std::size_t>(doc, "shap_background", "a count");
  if (doc.contains("feature_eval_max_combinations")) {
    s.feature_eval_cap.max_combinations =
        field_as<std::size_t>(doc, "feature_eval_max_combinations", "a count");
  }
  return s;
}

nlohmann::json FieldError::to_json() const {
  return {{"field", field}, {"code", error_code_name(code)}, {"message", message}};
}

std::size_t combination_count(std::size_t n, std::size_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  constexpr std::size_t cap = std::numeric_limits<std::size_t>::max();
  std::size_t r = 1;
  for (std::size_t i = 1; i <= k; ++i) {
    // r * (n - k + i) / i stays exact: r is C(n-k+i-1, i-1).
    const std::size_t f = n - k + i;
    if (r > cap / f) return cap;
    r = r * f / i;
  }
  return r;
}

namespace {

void check_override(ModelKind kind, const ParamRange& r, std::vector<FieldError>& errors) {
  const std::string field = "param_overrides." + std::string(to_string(kind));
  try {
    r.validate();
  } catch (const Error& e) {
    errors.push_back({field, e.code(), e.what()});
    return;
  }
  const SearchSpace limits = parameter_limits(kind);
  const auto it = std::find_if(limits.begin(), limits.end(), [&](const ParamRange& l) { return l.name == r.name; });
  if (it == limits.end()) {
    errors.push_back({field, ErrorCode::UnknownParam, "unknown parameter '" + r.name + "'"});
    return;
  }
  const bool lim_cat = it->domain == ParamRange::Domain::categorical;
  const bool r_cat = r.domain == ParamRange::Domain::categorical;
  if (lim_cat != r_cat) {
    errors.push_back({field, ErrorCode::ParamOutOfRange, "'" + r.name + "' has the wrong domain"});
    return;
  }
  if (lim_cat) {
    for (const auto& t : r.tokens) {
      if (std::find(it->tokens.begin(), it->tokens.end(), t) == it->tokens.end()) {
        errors.push_back({field, ErrorCode::ParamOutOfRange, "'" + r.name + "' does not accept '" + t + "'"});
      }
    }
  } else if (r.lo < it->lo || r.hi > it->hi ||
             (it->domain == ParamRange::Domain::integer && r.domain != ParamRange::Domain::integer)) {
    errors.push_back({field, ErrorCode::ParamOutOfRange,
                      "'" + r.name + "' range [" + format_param(r.lo) + ", " + format_param(r.hi) +
                          "] exceeds the limit [" + format_param(it->lo) + ", " + format_param(it->hi) + "]"});
  }
}

}  // namespace

std::vector<FieldError> validate_job_spec(const JobSpec& spec, const Dataset* train) {
  std::vector<FieldError> errors;
  if (spec.dataset_id.empty()) errors.push_back({"dataset_id", ErrorCode::InvalidSpec, "required"});
  if (!(spec.test_fraction > 0.0 && spec.test_fraction < 1.0)) {
    errors.push_back({"test_fraction", ErrorCode::InvalidSpec, "must lie strictly between 0 and 1"});
  }
  if (spec.models.empty()) {
    errors.push_back({"models", ErrorCode::ModelRosterInvalid, "select at least one model"});
  }
  std::set<ModelKind> seen;
  for (ModelKind k : spec.models) {
    if (!seen.insert(k).second) {
      errors.push_back({"models", ErrorCode::ModelRosterInvalid, std::string(to_string(k)) + " is listed twice"});
    }
    if (spec.task == Task::multiclass && !supports_multiclass(k)) {
      errors.push_back({"models", ErrorCode::MulticlassUnsupported,
                        std::string(to_string(k)) + " does not support multiclass tasks"});
    }
  }
  if (spec.tune && spec.n_iterations == 0) {
    errors.push_back({"n_iterations", ErrorCode::InvalidSpec, "must be at least 1 when tuning"});
  }
  for (const auto& [kind, space] : spec.param_overrides) {
    if (!seen.count(kind)) {
      errors.push_back({"param_overrides." + std::string(to_string(kind)), ErrorCode::InvalidSpec,
                        "model is not selected"});
    }
    for (const auto& r : space) check_override(kind, r, errors);
  }
  if (spec.feature_eval) {
    const auto& fe = *spec.feature_eval;
    const std::set<std::string> unique(fe.features.begin(), fe.features.end());
    if (fe.features.empty()) {
      errors.push_back({"feature_eval.features", ErrorCode::InvalidSpec, "list at least one feature"});
    } else if (unique.size() != fe.features.size()) {
      errors.push_back({"feature_eval.features", ErrorCode::InvalidSpec, "features are listed twice"});
    }
    if (fe.k == 0 || fe.k > fe.features.size()) {
      errors.push_back({"feature_eval.k", ErrorCode::InvalidSpec,
                        "k must be between 1 and the number of listed features (" +
                            std::to_string(fe.features.size()) + ")"});
    } else {
      const std::size_t count = combination_count(fe.features.size(), fe.k);
      if (count > spec.feature_eval_cap.max_combinations) {
        errors.push_back({"feature_eval", ErrorCode::CombinationBudgetExceeded,
                          std::to_string(count) + " feature combinations exceed the limit of " +
                              std::to_string(spec.feature_eval_cap.max_combinations)});
      }
    }
    if (train) {
      for (const auto& f : fe.features) {
        if (!train->features.find(f)) {
          errors.push_back({"feature_eval.features", ErrorCode::SchemaMismatch, "no feature named '" + f + "'"});
        }
      }
    }
  }
  if (spec.feature_eval_cap.max_combinations == 0) {
    errors.push_back({"feature_eval_max_combinations", ErrorCode::InvalidSpec, "must be positive"});
  }
  if (spec.shap_max_rows == 0) errors.push_back({"shap_max_rows", ErrorCode::InvalidSpec, "must be positive"});
  if (spec.shap_background == 0) errors.push_back({"shap_background", ErrorCode::InvalidSpec, "must be positive"});
  const auto names = synthesizer_names();
  if (std::find(names.begin(), names.end(), spec.synthesizer) == names.end()) {
    errors.push_back({"synthesizer", ErrorCode::InvalidSpec, "unknown synthesizer '" + spec.synthesizer + "'"});
  }
  if (spec.save_synthetic && spec.synth_mode == SynthMode::none) {
    errors.push_back({"save_synthetic", ErrorCode::InvalidSpec, "nothing is synthesized when synth_mode is none"});
  }
  if (train && spec.task == Task::binary && train->n_classes() > 2) {
    errors.push_back({"task", ErrorCode::InvalidSpec,
                      "the dataset has " + std::to_string(train->n_classes()) +
                          " classes; choose the multiclass task"});
  }
  return errors;
}

// ---- report serialization ----------------------------------------------------

nlohmann::json ModelReport::to_json() const {
  nlohmann::json j;
  j["model"] = to_string(kind);
  j["status"] = ok ? "ok" : "failed";
  j["failure"] = ok ? nlohmann::json(nullptr) : nlohmann::json(failure);
  j["chosen_params"] = params_to_json(chosen_params);
  j["metrics"] = ok ? nlohmann::json(metrics.to_json()) : nlohmann::json(nullptr);
  j["shap"] = shap ? shap->to_json() : nlohmann::json(nullptr);
  j["shap_method"] = shap_method;
  if (tuning) {
    j["tuning"] = {{"n_trials", tuning->n_trials},
                   {"n_pruned", tuning->n_pruned},
                   {"n_failed", tuning->n_failed},
                   {"best_validation_score", tuning->best_validation_score}};
  } else {
    j["tuning"] = nullptr;
  }
  j["train_seconds"] = train_seconds;
  return j;
}

ModelReport ModelReport::from_json(const nlohmann::json& doc) {
  ModelReport r;
  r.kind = model_kind_from_string(doc.at("model").get<std::string>());
  r.ok = doc.at("status").get<std::string>() == "ok";
  if (!r.ok) r.failure = doc.at("failure").get<std::string>();
  r.chosen_params = params_from_json(doc.at("chosen_params"));
  if (r.ok) r.metrics = MetricSet::from_json(doc.at("metrics"));
  if (!doc.at("shap").is_null()) r.shap = FeatureReport::from_json(doc.at("shap"));
  r.shap_method = doc.value("shap_method", "");
  if (!doc.at("tuning").is_null()) {
    const auto& t = doc.at("tuning");
    r.tuning = TuningSummary{t.at("n_trials").get<std::size_t>(), t.at("n_pruned").get<std::size_t>(),
                             t.at("n_failed").get<std::size_t>(),
                             t.at("best_validation_score").get<double>()};
  }
  r.train_seconds = doc.value("train_seconds", 0.0);
  return r;
}

nlohmann::json JobReport::to_json() const {
  nlohmann::json models_j = nlohmann::json::array();
  for (const auto& m : models) models_j.push_back(m.to_json());
  nlohmann::json fe = nlohmann::json::array();
  for (const auto& row : feature_eval_table) {
    fe.push_back({{"model", to_string(row.kind)}, {"features", row.features}, {"metrics", row.metrics.to_json()}});
  }
  nlohmann::json arts = nlohmann::json::array();
  for (const auto& a : artifacts) arts.push_back({{"name", a.name}, {"content_type", a.content_type}});
  return {{"format", "classify-report"},
          {"format_version", kReportFormatVersion},
          {"task", to_string(task)},
          {"class_names", class_names},
          {"models", models_j},
          {"synth_quality", synth_quality ? synth_quality->to_json() : nlohmann::json(nullptr)},
          {"feature_eval_table", fe},
          {"warnings", warnings},
          {"train_class_counts", train_class_counts},
          {"test_class_counts", test_class_counts},
          {"plots", plots},
          {"artifacts", arts},
          {"test_reads_before_scoring", test_reads_before_scoring}};
}

JobReport JobReport::from_json(const nlohmann::json& doc) {
  if (doc.value("format", "") != "classify-report") {
    throw Error(ErrorCode::BadRequest, "not a report document");
  }
  if (doc.at("format_version").get<int>() > kReportFormatVersion) {
    throw Error(ErrorCode::BadRequest, "report format version is newer than this build");
  }
  JobReport r;
  r.task = task_from(doc.at("task").get<std::string>());
  r.class_names = doc.at("class_names").get<std::vector<std::string>>();
  for (const auto& m : doc.at("models")) r.models.push_back(ModelReport::from_json(m));
  if (!doc.at("synth_quality").is_null()) r.synth_quality = SynthQuality::from_json(doc.at("synth_quality"));
  for (const auto& row : doc.at("feature_eval_table")) {
    r.feature_eval_table.push_back({model_kind_from_string(row.at("model").get<std::string>()),
                                    row.at("features").get<std::vector<std::string>>(),
                                    MetricSet::from_json(row.at("metrics"))});
  }
  r.warnings = doc.at("warnings").get<std::vector<std::string>>();
  r.train_class_counts = doc.at("train_class_counts").get<std::vector<std::size_t>>();
  r.test_class_counts = doc.at("test_class_counts").get<std::vector<std::size_t>>();
  r.plots = doc.at("plots").get<std::vector<std::string>>();
  for (const auto& a : doc.at("artifacts")) {
    r.artifacts.push_back({a.at("name").get<std::string>(), a.at("content_type").get<std::string>()});
  }
  r.test_reads_before_scoring = doc.value("test_reads_before_scoring", std::size_t{0});
  return r;
}

nlohmann::json without_timings(nlohmann::json report) {
  if (report.is_object()) {
    report.erase("train_seconds");
    report.erase("seconds");
    for (auto& [k, v] : report.items()) v = without_timings(v);
  } else if (report.is_array()) {
    for (auto& v : report) v = without_timings(v);
  }
  return report;
}

void GuardedRows::replace(Dataset rows) {
  if (!open_) throw Error(ErrorCode::Internal, "test rows replaced before scoring");
  rows_ = std::move(rows);
}

// ---- feature subsets ---------------------------------------------------------

std::vector<FeatureEvalRow> evaluate_feature_subsets(const JobSpec& spec, ModelKind kind,
                                                     const Dataset& train, const Dataset& test,
                                                     const FeatureEvalCap& cap) {
  if (!spec.feature_eval) throw Error(ErrorCode::InvalidSpec, "feature evaluation is not configured");
  const auto& fe = *spec.feature_eval;
  const std::size_t n = fe.features.size(), k = fe.k;
  if (k == 0 || k > n) throw Error(ErrorCode::InvalidSpec, "feature_eval.k must be between 1 and the feature count");
  const std::size_t count = combination_count(n, k);
  if (count > cap.max_combinations) {
    throw Error(ErrorCode::CombinationBudgetExceeded,
                std::to_string(count) + " feature combinations exceed the limit of " +
                    std::to_string(cap.max_combinations));
  }
  const bool multiclass = spec.task == Task::multiclass;
  std::vector<FeatureEvalRow> rows;
  std::vector<std::size_t> pick(k);
  std::iota(pick.begin(), pick.end(), 0);
  while (true) {
    std::vector<std::string> names;
    for (std::size_t i : pick) names.push_back(fe.features[i]);
    const Dataset tr = train.select_features(names);
    const Dataset te = test.select_features(names);
    const TrainedModel m = fit(kind, {}, tr, derive_seed(spec.seed, kSubsetStream + kind_index(kind)));
    rows.push_back({kind, names, evaluate_probabilities(m.predict_proba(te.features), te.labels, multiclass)});
    // Next k-subset in lexicographic index order.
    std::size_t i = k;
    while (i > 0 && pick[i - 1] == n - k + i - 1) --i;
    if (i == 0) break;
    ++pick[i - 1];
    for (std::size_t j = i; j < k; ++j) pick[j] = pick[j - 1] + 1;
  }
  std::stable_sort(rows.begin(), rows.end(), [](const FeatureEvalRow& a, const FeatureEvalRow& b) {
    const double x = a.metrics.auc.value_or(-INFINITY), y = b.metrics.auc.value_or(-INFINITY);
    if (x != y) return x > y;
    return a.features < b.features;
  });
  return rows;
}

// ---- run_job -----------------------------------------------------------------

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string counts_text(const std::vector<std::size_t>& counts, const std::vector<std::string>& names) {
  std::string s;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (c) s += ", ";
    s += names[c] + ": " + std::to_string(counts[c]);
  }
  return s;
}

Dataset complete_rows(const Dataset& ds) {
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < ds.n_rows(); ++i) {
    bool ok = true;
    for (const auto& c : ds.features.columns()) ok = ok && !is_missing(c.values[i]);
    if (ok) keep.push_back(i);
  }
  return ds.take_rows(keep);
}

std::string describe(const std::exception& e) {
  if (const auto* err = dynamic_cast<const Error*>(&e)) {
    return std::string(err->code_name()) + ": " + err->what();
  }
  return e.what();
}

void add_artifact(JobOutput& out, std::string name, std::string type, std::string bytes) {
  out.report.artifacts.push_back({name, type});
  out.artifacts.push_back({std::move(name), std::move(type), std::move(bytes)});
}

void add_plot(JobOutput& out, const std::string& stem, const PlotSpec& plot) {
  add_artifact(out, stem + ".json", "application/json", plot.to_json().dump(2));
  add_artifact(out, stem + ".svg", "image/svg+xml", render_svg(plot));
  out.report.plots.push_back(stem + ".json");
}

}  // namespace

JobOutput run_job(const JobSpec& spec, const DatasetProvider& datasets, const LogSink& log_sink) {
  const auto log = [&](const std::string& line) {
    if (log_sink) log_sink(line);
  };
  JobOutput out;
  JobReport& report = out.report;
  report.task = spec.task;

  log("loading dataset " + spec.dataset_id);
  const Dataset full = datasets(spec.dataset_id);
  const std::vector<FieldError> problems = validate_job_spec(spec, &full);
  if (!problems.empty()) {
    std::string msg;
    for (const auto& p : problems) msg += (msg.empty() ? "" : "; ") + p.field + ": " + p.message;
    throw Error(problems.front().code, msg, ErrorLocation{std::nullopt, problems.front().field});
  }
  report.class_names = full.class_names;
  const bool multiclass = spec.task == Task::multiclass;

  // (1) train / test
  Dataset train;
  std::optional<GuardedRows> guard;
  if (spec.test_dataset_id) {
    log("loading test dataset " + *spec.test_dataset_id);
    train = full;
    guard.emplace(align_encoding(datasets(*spec.test_dataset_id), full));
  } else {
    TrainTest tt = split(full, {spec.test_fraction, derive_seed(spec.seed, kSplitStream), true});
    log("split " + std::to_string(full.n_rows()) + " rows into " + std::to_string(tt.train.n_rows()) +
        " train / " + std::to_string(tt.test.n_rows()) + " test");
    train = std::move(tt.train);
    guard.emplace(std::move(tt.test));
  }

  // (2) synthesis, on training rows only
  std::optional<DatasetImputer> imputer;
  std::optional<Dataset> synthetic_out;
  const std::uint64_t synth_seed = derive_seed(spec.seed, kSynthStream);
  switch (spec.synth_mode) {
    case SynthMode::none:
      if (train.features.has_missing()) {
        report.warnings.push_back("the training data has missing cells and no imputation was requested; models that need complete rows will fail");
      }
      break;
    case SynthMode::impute: {
      imputer.emplace();
      const bool had_missing = train.features.has_missing();
      Dataset filled = imputer->fit_transform(train);
      if (had_missing) {
        log("imputed " + std::to_string(train.features.missing_count()) + " missing training cells");
        train = std::move(filled);
        synthetic_out = train;
      }
      break;
    }
    case SynthMode::balance:
    case SynthMode::generate: {
      if (train.features.has_missing()) {
        const std::size_t before = train.n_rows();
        train = complete_rows(train);
        report.warnings.push_back("dropped " + std::to_string(before - train.n_rows()) +
                                  " incomplete training rows before synthesis");
      }
      const Dataset real = train;
      if (spec.synth_mode == SynthMode::balance) {
        Balanced b = balance(train, train.meta, synth_seed, spec.synthesizer);
        log("balanced training classes with " + std::to_string(b.synthetic.n_rows()) + " synthetic rows");
        if (b.synthetic.n_rows() > 0) report.synth_quality = quality(real, b.synthetic, real.meta);
        train = std::move(b.augmented);
      } else {
        train = generate_full(train, train.meta, synth_seed, spec.synthesizer);
        log("generated " + std::to_string(train.n_rows()) + " synthetic training rows");
        report.synth_quality = quality(real, train, real.meta);
      }
      report.warnings.push_back("synthesis was applied to the training split only; the test split is unchanged real data");
      synthetic_out = train;
      break;
    }
  }
  report.train_class_counts = train.class_counts();
  log("training class counts: " + counts_text(report.train_class_counts, train.class_names));

  bool test_prepared = false;
  const auto open_test = [&]() -> const Dataset& {
    guard->open();
    if (!test_prepared) {
      test_prepared = true;
      if (imputer) guard->replace(imputer->transform(guard->read()));
    }
    return guard->read();
  };

  // (3) + (4) per model
  std::vector<std::pair<ModelKind, ModelExplanation>> explanations;
  for (ModelKind kind : spec.models) {
    const std::string name(to_string(kind));
    ModelReport mr;
    mr.kind = kind;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      HyperParams params;
      if (spec.tune) {
        const auto ov = spec.param_overrides.find(kind);
        const SearchSpace space = ov != spec.param_overrides.end() ? ov->second : default_search_space(kind);
        TunerConfig cfg;
        cfg.n_iterations = spec.n_iterations;
        cfg.n_startup_random = std::min(cfg.n_startup_random, cfg.n_iterations);
        cfg.seed = derive_seed(spec.seed, kTuneStream + kind_index(kind));
        log("[" + name + "] tuning " + std::to_string(cfg.n_iterations) + " trials");
        const StudyResult study = run_study(kind, space, train, cfg);
        params = study.best_params;
        TuningSummary ts;
        ts.n_trials = study.trials.size();
        ts.best_validation_score = study.best_score;
        for (const auto& t : study.trials) {
          ts.n_pruned += t.state == Trial::State::pruned;
          ts.n_failed += t.state == Trial::State::failed;
        }
        mr.tuning = ts;
        add_artifact(out, "trials_" + name + ".json", "application/json", study.to_json().dump(2));
      }
      mr.chosen_params = resolve_params(kind, params);
      log("[" + name + "] fitting on " + std::to_string(train.n_rows()) + " rows");
      const TrainedModel model = fit(kind, params, train, derive_seed(spec.seed, kFitStream + kind_index(kind)));
      mr.train_seconds = seconds_since(t0);

      const Dataset& test = open_test();
      mr.metrics = evaluate_probabilities(model.predict_proba(test.features), test.labels, multiclass);
      mr.ok = true;
      log("[" + name + "] test accuracy " + std::to_string(mr.metrics.accuracy));
      add_artifact(out, "model_" + name + ".json", "application/json", model.to_json().dump());

      if (spec.shap) {
        ExplainConfig ec;
        ec.max_background = spec.shap_background;
        ec.max_rows = spec.shap_max_rows;
        ec.seed = derive_seed(spec.seed, kExplainStream + kind_index(kind));
        log("[" + name + "] computing SHAP values");
        try {
          ModelExplanation e = explain_model(model, train, test, ec);
          mr.shap = e.report;
          mr.shap_method = e.method;
          explanations.emplace_back(kind, std::move(e));
        } catch (const std::exception& e) {
          report.warnings.push_back(name + ": SHAP failed (" + describe(e) + ")");
        }
      }
      guard->close();
    } catch (const std::exception& e) {
      guard->close();
      mr.ok = false;
      mr.failure = describe(e);
      mr.train_seconds = seconds_since(t0);
      log("[" + name + "] failed: " + mr.failure);
    }
    report.models.push_back(std::move(mr));
  }

  // (5) feature subsets, untuned
  if (spec.feature_eval) {
    for (const auto& mr : report.models) {
      if (!mr.ok) continue;
      log("[" + std::string(to_string(mr.kind)) + "] evaluating feature subsets");
      try {
        const Dataset& test = open_test();
        auto rows = evaluate_feature_subsets(spec, mr.kind, train, test, spec.feature_eval_cap);
        report.feature_eval_table.insert(report.feature_eval_table.end(), rows.begin(), rows.end());
      } catch (const std::exception& e) {
        report.warnings.push_back(std::string(to_string(mr.kind)) + ": feature evaluation failed (" + describe(e) + ")");
      }
      guard->close();
    }
  }

  report.test_class_counts = open_test().class_counts();
  guard->close();

  // (6) plots and artifacts
  try {
    add_plot(out, "plot_heatmap", heatmap_spec(report));
    add_plot(out, "plot_bar_auc", bar_spec(report, "auc"));
  } catch (const Error& e) {
    report.warnings.push_back(std::string("no comparison plots: ") + e.what());
  }
  for (const auto& [kind, e] : explanations) {
    const std::string name(to_string(kind));
    for (std::size_t c = 0; c < e.shap.size(); ++c) {
      PlotSpec p = beeswarm_spec(e.shap[c], e.feature_values, 20, e.row_index);
      std::string stem = "plot_beeswarm_" + name;
      if (e.shap.size() > 1) {
        stem += "_class_" + std::to_string(c);
        p.title = name + " SHAP values for class " + report.class_names[c];
      } else {
        p.title = name + " SHAP values (" + e.target + ")";
      }
      add_plot(out, stem, p);
    }
  }
  if (report.synth_quality) {
    add_artifact(out, "synthetic_quality.json", "application/json", report.synth_quality->to_json().dump(2));
  }
  if (spec.save_synthetic && synthetic_out) {
    add_artifact(out, "synthetic.csv", "text/csv", to_csv(*synthetic_out));
    add_artifact(out, "synthetic_metadata.json", "application/json", synthetic_out->meta.to_json().dump(2));
  }
  report.test_reads_before_scoring = guard->early_reads();
  log("job finished: " + std::to_string(std::count_if(report.models.begin(), report.models.end(),
                                                      [](const ModelReport& m) { return m.ok; })) +
      " of " + std::to_string(report.models.size()) + " models succeeded");
  return out;
}

}  // namespace classify
