#include <doctest.h>

#include <map>
#include <set>
#include <sstream>

#include "classify/pipeline.hpp"
#include "support.hpp"

using namespace classify;

namespace {

struct Store {
  std::map<std::string, Dataset> sets;

  DatasetProvider provider() const {
    return [this](const std::string& id) {
      const auto it = sets.find(id);
      if (it == sets.end()) throw Error(ErrorCode::DatasetNotFound, "no dataset '" + id + "'");
      return it->second;
    };
  }
};

Dataset blobs(std::size_t n, std::size_t d, std::uint64_t seed, double positive_rate = 0.5) {
  return parse_csv(test::blobs_csv(n, d, 2.0, seed, positive_rate));
}

/// Exactly `counts[c]` rows of class c; class c is shifted by c along x0, x1.
Dataset class_counts_dataset(const std::vector<std::size_t>& counts, std::uint64_t seed) {
  Rng rng(seed);
  std::ostringstream csv;
  csv << "index,x0,x1,x2,class\n";
  std::size_t id = 0;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    for (std::size_t k = 0; k < counts[c]; ++k) {
      csv << ++id << ',' << rng.normal() + 2.0 * double(c) << ',' << rng.normal() - 1.5 * double(c) << ','
          << rng.normal() << ",c" << c << '\n';
    }
  }
  return parse_csv(csv.str());
}

/// Only `signal` relates to the label; the other four columns are noise.
Dataset one_informative(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::ostringstream csv;
  csv << "index,n1,n2,signal,n3,n4,class\n";
  for (std::size_t i = 0; i < n; ++i) {
    const int y = rng.uniform() < 0.5;
    csv << i + 1 << ',' << rng.normal() << ',' << rng.normal() << ',' << rng.normal() + 2.5 * y << ','
        << rng.normal() << ',' << rng.normal() << ',' << y << '\n';
  }
  return parse_csv(csv.str());
}

JobSpec basic_spec(std::vector<ModelKind> models) {
  JobSpec s;
  s.dataset_id = "train";
  s.models = std::move(models);
  s.seed = 42;
  return s;
}

bool has_artifact(const JobOutput& out, const std::string& name) {
  const auto& refs = out.report.artifacts;
  const bool listed = std::any_of(refs.begin(), refs.end(), [&](const ArtifactRef& a) { return a.name == name; });
  const bool stored =
      std::any_of(out.artifacts.begin(), out.artifacts.end(), [&](const Artifact& a) { return a.name == name; });
  return listed && stored;
}

}  // namespace

TEST_SUITE("pipeline") {
  TEST_CASE("binary job reports the six binary metrics per model") {
    Store st;
    st.sets["train"] = blobs(200, 4, 1);
    const JobSpec spec = basic_spec({ModelKind::LogisticRegression, ModelKind::RandomForest});
    std::vector<std::string> log;
    const JobOutput out = run_job(spec, st.provider(), [&](const std::string& l) { log.push_back(l); });
    const JobReport& r = out.report;
    REQUIRE(r.models.size() == 2);
    CHECK(r.models[0].kind == ModelKind::LogisticRegression);
    for (const auto& m : r.models) {
      CHECK(m.ok);
      CHECK_FALSE(m.metrics.multiclass);
      for (const auto& name : MetricSet::names(false)) CHECK(m.metrics.get(name).has_value());
      CHECK_FALSE(m.metrics.kappa.has_value());
      CHECK(*m.metrics.auc > 0.8);
      CHECK_FALSE(m.chosen_params.empty());
    }
    CHECK(r.test_reads_before_scoring == 0);
    CHECK(r.train_class_counts.size() == 2);
    std::size_t total = 0;
    for (auto c : r.train_class_counts) total += c;
    for (auto c : r.test_class_counts) total += c;
    CHECK(total == 200);
    CHECK(has_artifact(out, "model_LogisticRegression.json"));
    CHECK(has_artifact(out, "plot_heatmap.json"));
    CHECK(has_artifact(out, "plot_bar_auc.svg"));
    CHECK_FALSE(log.empty());
  }

  TEST_CASE("multiclass job reports kappa instead of the binary rates") {
    Store st;
    st.sets["train"] = class_counts_dataset({60, 60, 60}, 3);
    JobSpec spec = basic_spec({ModelKind::RandomForest, ModelKind::LogisticRegression});
    spec.task = Task::multiclass;
    const JobReport r = run_job(spec, st.provider()).report;
    REQUIRE(r.models.size() == 2);
    for (const auto& m : r.models) {
      REQUIRE(m.ok);
      CHECK(m.metrics.multiclass);
      CHECK(m.metrics.kappa.has_value());
      CHECK_FALSE(m.metrics.sensitivity.has_value());
      CHECK_FALSE(m.metrics.specificity.has_value());
      CHECK_FALSE(m.metrics.ppv.has_value());
      CHECK_FALSE(m.metrics.npv.has_value());
    }
    CHECK(r.class_names.size() == 3);
  }

  TEST_CASE("balancing touches the training rows only") {
    Store st;
    st.sets["train"] = class_counts_dataset({90, 10}, 5);
    st.sets["test"] = class_counts_dataset({30, 6}, 6);
    JobSpec spec = basic_spec({ModelKind::LogisticRegression});
    spec.test_dataset_id = "test";
    spec.synth_mode = SynthMode::balance;
    spec.save_synthetic = true;
    const JobOutput out = run_job(spec, st.provider());
    const JobReport& r = out.report;
    CHECK(r.train_class_counts == std::vector<std::size_t>{90, 90});
    CHECK(r.test_class_counts == std::vector<std::size_t>{30, 6});
    CHECK(r.synth_quality.has_value());
    CHECK_FALSE(r.warnings.empty());
    CHECK(r.test_reads_before_scoring == 0);
    CHECK(has_artifact(out, "synthetic.csv"));
    CHECK(has_artifact(out, "synthetic_metadata.json"));
    const auto it = std::find_if(out.artifacts.begin(), out.artifacts.end(),
                                 [](const Artifact& a) { return a.name == "synthetic.csv"; });
    CHECK(parse_csv(it->bytes).n_rows() == 180);
  }

  TEST_CASE("generate replaces the training rows with equal classes") {
    Store st;
    st.sets["train"] = class_counts_dataset({70, 30}, 8);
    JobSpec spec = basic_spec({ModelKind::LogisticRegression});
    spec.synth_mode = SynthMode::generate;
    const JobReport r = run_job(spec, st.provider()).report;
    REQUIRE(r.train_class_counts.size() == 2);
    CHECK(r.train_class_counts[0] == r.train_class_counts[1]);
    CHECK(r.models[0].ok);
    CHECK(r.synth_quality.has_value());
  }

  TEST_CASE("feature subsets cover every combination") {
    Store st;
    st.sets["train"] = blobs(150, 3, 9);
    JobSpec spec = basic_spec({ModelKind::LogisticRegression});
    spec.feature_eval = FeatureEvalSpec{{"x0", "x1", "x2"}, 2};
    const JobReport r = run_job(spec, st.provider()).report;
    REQUIRE(r.feature_eval_table.size() == 3);
    std::set<std::vector<std::string>> subsets;
    for (const auto& row : r.feature_eval_table) subsets.insert(row.features);
    CHECK(subsets.size() == 3);
    for (std::size_t i = 1; i < r.feature_eval_table.size(); ++i) {
      CHECK(*r.feature_eval_table[i - 1].metrics.auc >= *r.feature_eval_table[i].metrics.auc);
    }
  }

  TEST_CASE("the informative feature ranks first") {
    const Dataset ds = one_informative(300, 10);
    const TrainTest tt = split(ds, {0.3, 4, true});
    JobSpec spec = basic_spec({ModelKind::LogisticRegression});
    spec.feature_eval = FeatureEvalSpec{{"n1", "n2", "signal", "n3", "n4"}, 1};
    const auto rows = evaluate_feature_subsets(spec, ModelKind::LogisticRegression, tt.train, tt.test);
    REQUIRE(rows.size() == 5);
    CHECK(rows[0].features == std::vector<std::string>{"signal"});
    // Independent check: the signal column alone separates the classes best.
    for (std::size_t i = 1; i < rows.size(); ++i) CHECK(*rows[0].metrics.auc > *rows[i].metrics.auc);
  }

  TEST_CASE("combination budget") {
    CHECK(combination_count(3, 2) == 3);
    CHECK(combination_count(30, 15) == 155117520);
    CHECK(combination_count(5, 0) == 1);
    CHECK(combination_count(2, 3) == 0);
    CHECK(combination_count(200, 100) == std::numeric_limits<std::size_t>::max());

    std::ostringstream csv;
    csv << "index";
    for (int j = 0; j < 30; ++j) csv << ",f" << j;
    csv << ",class\n";
    Rng rng(1);
    std::vector<std::string> names;
    for (int j = 0; j < 30; ++j) names.push_back("f" + std::to_string(j));
    for (int i = 0; i < 40; ++i) {
      csv << i;
      for (int j = 0; j < 30; ++j) csv << ',' << rng.normal();
      csv << ',' << i % 2 << '\n';
    }
    Store st;
    st.sets["train"] = parse_csv(csv.str());
    JobSpec spec = basic_spec({ModelKind::LogisticRegression});
    spec.feature_eval = FeatureEvalSpec{names, 15};
    const auto errs = validate_job_spec(spec, &st.sets["train"]);
    REQUIRE(errs.size() == 1);
    CHECK(errs[0].code == ErrorCode::CombinationBudgetExceeded);
    CHECK(errs[0].message.find("155117520") != std::string::npos);
    CHECK(test::error_of([&] { run_job(spec, st.provider()); }) == ErrorCode::CombinationBudgetExceeded);
    const TrainTest tt = split(st.sets["train"], {0.25, 1, true});
    CHECK(test::error_of([&] {
            evaluate_feature_subsets(spec, ModelKind::LogisticRegression, tt.train, tt.test);
          }) == ErrorCode::CombinationBudgetExceeded);
  }

  TEST_CASE("tuning never looks at the test rows") {
    Store st;
    st.sets["train"] = blobs(160, 3, 11);
    st.sets["test"] = blobs(60, 3, 12);
    Dataset scrambled = st.sets["test"];
    Rng rng(3);
    for (std::size_t j = 0; j < scrambled.features.columns().size(); ++j) {
      for (auto& v : scrambled.features.column(j).values) v = rng.normal() * 100.0;
    }
    st.sets["scrambled"] = scrambled;

    JobSpec spec = basic_spec({ModelKind::RandomForest, ModelKind::LogisticRegression});
    spec.test_dataset_id = "test";
    spec.tune = true;
    spec.n_iterations = 6;
    const JobReport a = run_job(spec, st.provider()).report;
    spec.test_dataset_id = "scrambled";
    const JobReport b = run_job(spec, st.provider()).report;
    REQUIRE(a.models.size() == b.models.size());
    for (std::size_t i = 0; i < a.models.size(); ++i) {
      CHECK(params_to_json(a.models[i].chosen_params) == params_to_json(b.models[i].chosen_params));
      INFO(a.models[i].failure);
      REQUIRE(a.models[i].tuning.has_value());
      CHECK(a.models[i].tuning->best_validation_score == b.models[i].tuning->best_validation_score);
      CHECK(a.models[i].tuning->n_trials == 6);
    }
    CHECK(a.test_reads_before_scoring == 0);
    CHECK(b.test_reads_before_scoring == 0);
  }

  TEST_CASE("identical specs give identical reports") {
    Store st;
    st.sets["train"] = blobs(150, 4, 13);
    JobSpec spec = basic_spec({ModelKind::RandomForest, ModelKind::LogisticRegression});
    spec.tune = true;
    spec.n_iterations = 4;
    spec.shap = true;
    spec.shap_max_rows = 20;
    spec.shap_background = 10;
    const JobOutput a = run_job(spec, st.provider());
    const JobOutput b = run_job(spec, st.provider());
    CHECK(without_timings(a.report.to_json()) == without_timings(b.report.to_json()));
    for (const auto& m : a.report.models) {
      REQUIRE(m.shap.has_value());
      CHECK_FALSE(m.shap_method.empty());
    }
    CHECK(has_artifact(a, "plot_beeswarm_RandomForest.json"));
    CHECK(has_artifact(a, "trials_LogisticRegression.json"));
    spec.seed = 43;
    const JobOutput c = run_job(spec, st.provider());
    CHECK(without_timings(a.report.to_json()) != without_timings(c.report.to_json()));
  }

  TEST_CASE("imputation on complete data changes nothing") {
    Store st;
    st.sets["train"] = blobs(120, 3, 14);
    JobSpec spec = basic_spec({ModelKind::LogisticRegression, ModelKind::KNearestNeighbors});
    const JobReport none = run_job(spec, st.provider()).report;
    spec.synth_mode = SynthMode::impute;
    const JobReport imp = run_job(spec, st.provider()).report;
    CHECK(without_timings(none.to_json()) == without_timings(imp.to_json()));
  }

  TEST_CASE("imputation fills missing cells in train and test") {
    Dataset ds = blobs(200, 4, 15);
    Rng rng(2);
    for (std::size_t j = 0; j < ds.features.columns().size(); ++j) {
      for (auto& v : ds.features.column(j).values) {
        if (rng.uniform() < 0.1) v = kMissing;
      }
    }
    Store st;
    st.sets["train"] = ds;
    JobSpec spec = basic_spec({ModelKind::LogisticRegression});
    const JobReport raw = run_job(spec, st.provider()).report;
    REQUIRE(raw.models.size() == 1);
    CHECK_FALSE(raw.models[0].ok);
    CHECK(raw.models[0].failure.find("MissingValues") != std::string::npos);
    CHECK_FALSE(raw.warnings.empty());

    spec.synth_mode = SynthMode::impute;
    const JobReport filled = run_job(spec, st.provider()).report;
    REQUIRE(filled.models[0].ok);
    CHECK(*filled.models[0].metrics.auc > 0.8);
    CHECK(filled.test_reads_before_scoring == 0);
  }

  TEST_CASE("every requested model appears in the report") {
    Dataset ds = blobs(100, 3, 16);
    ds.features.column(0).values[0] = kMissing;
    ds.features.column(0).values[1] = kMissing;
    ds.features.column(0).values[2] = kMissing;
    Store st;
    st.sets["train"] = ds;
    JobSpec spec = basic_spec({ModelKind::HistogramGradientBoosting, ModelKind::LogisticRegression,
                               ModelKind::KNearestNeighbors});
    const JobReport r = run_job(spec, st.provider()).report;
    REQUIRE(r.models.size() == spec.models.size());
    for (std::size_t i = 0; i < r.models.size(); ++i) CHECK(r.models[i].kind == spec.models[i]);
    const JobReport back = JobReport::from_json(r.to_json());
    CHECK(back.to_json() == r.to_json());
  }

  TEST_CASE("spec validation names the offending field") {
    Store st;
    st.sets["train"] = class_counts_dataset({20, 20, 20}, 1);
    JobSpec spec = basic_spec({});
    auto errs = validate_job_spec(spec);
    REQUIRE_FALSE(errs.empty());
    CHECK(errs[0].field == "models");
    CHECK(errs[0].code == ErrorCode::ModelRosterInvalid);

    spec.models = {ModelKind::RandomForest, ModelKind::RandomForest};
    CHECK(validate_job_spec(spec)[0].code == ErrorCode::ModelRosterInvalid);

    spec.models = {ModelKind::GradientBoosting};
    spec.task = Task::multiclass;
    errs = validate_job_spec(spec);
    REQUIRE(errs.size() == 1);
    CHECK(errs[0].code == ErrorCode::MulticlassUnsupported);

    spec.task = Task::binary;
    errs = validate_job_spec(spec, &st.sets["train"]);
    REQUIRE(errs.size() == 1);
    CHECK(errs[0].field == "task");

    spec.test_fraction = 1.0;
    spec.task = Task::multiclass;
    spec.models = {ModelKind::RandomForest};
    CHECK(validate_job_spec(spec)[0].field == "test_fraction");

    spec.test_fraction = 0.2;
    spec.feature_eval = FeatureEvalSpec{{"x0", "nope"}, 3};
    errs = validate_job_spec(spec, &st.sets["train"]);
    REQUIRE(errs.size() == 2);
    CHECK(errs[0].field == "feature_eval.k");
    CHECK(errs[1].field == "feature_eval.features");

    spec.feature_eval.reset();
    spec.param_overrides[ModelKind::RandomForest] = {ParamRange::integer("n_trees", 1, 1000000000)};
    errs = validate_job_spec(spec);
    REQUIRE(errs.size() == 1);
    CHECK(errs[0].code == ErrorCode::ParamOutOfRange);
    spec.param_overrides[ModelKind::RandomForest] = {ParamRange::real("no_such_knob", 0, 1)};
    CHECK(validate_job_spec(spec)[0].code == ErrorCode::UnknownParam);

    st.sets.erase("train");
    spec.param_overrides.clear();
    CHECK(test::error_of([&] { run_job(spec, st.provider()); }) == ErrorCode::DatasetNotFound);
  }

  TEST_CASE("spec JSON round trip and strict parsing") {
    JobSpec spec = basic_spec({ModelKind::RandomForest, ModelKind::KNearestNeighbors});
    spec.test_dataset_id = "held";
    spec.tune = true;
    spec.n_iterations = 7;
    spec.param_overrides[ModelKind::RandomForest] = {ParamRange::integer("max_depth", 2, 8)};
    spec.feature_eval = FeatureEvalSpec{{"a", "b"}, 1};
    spec.synth_mode = SynthMode::balance;
    spec.seed = 18446744073709551615ull;
    const nlohmann::json j = spec.to_json();
    CHECK(JobSpec::from_json(j).to_json() == j);

    const auto parse = [](const char* text) { return JobSpec::from_json(nlohmann::json::parse(text)); };
    CHECK(parse(R"({"dataset_id": "d", "models": ["LogisticRegression"]})").test_fraction == 0.2);
    CHECK(test::error_of([&] { parse(R"({"dataset_id": "d", "models": ["Nope"]})"); }) ==
          ErrorCode::ModelRosterInvalid);
    CHECK(test::error_of([&] { parse(R"({"dataset_id": "d", "models": [], "colour": 1})"); }) ==
          ErrorCode::InvalidSpec);
    CHECK(test::error_of([&] { parse(R"({"dataset_id": "d", "models": [], "seed": -1})"); }) ==
          ErrorCode::InvalidSpec);
    CHECK(test::error_of([&] { parse(R"({"dataset_id": "d", "models": [], "task": "regression"})"); }) ==
          ErrorCode::InvalidSpec);
    try {
      parse(R"({"dataset_id": "d", "models": [], "tune": "yes"})");
      FAIL("expected an error");
    } catch (const Error& e) {
      REQUIRE(e.location().column.has_value());
      CHECK(*e.location().column == "tune");
    }
  }

  TEST_CASE("guarded rows count early reads") {
    GuardedRows g(blobs(10, 2, 1));
    g.read();
    CHECK(g.early_reads() == 1);
    CHECK(test::error_of([&] { g.replace(blobs(10, 2, 2)); }) == ErrorCode::Internal);
    g.open();
    g.read();
    g.replace(blobs(10, 2, 2));
    g.close();
    CHECK(g.early_reads() == 1);
  }
}
