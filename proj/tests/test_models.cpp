#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "classify/metrics.hpp"
#include "classify/models.hpp"
#include "classify/models/neural.hpp"
#include "classify/models/trees.hpp"
#include "support.hpp"

using namespace classify;

namespace {

Dataset blobs(std::size_t n, std::size_t d, double sep, std::uint64_t seed) {
  return parse_csv(test::blobs_csv(n, d, sep, seed));
}

Dataset three_class(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::string csv = "index,a,b,c,class\n";
  for (std::size_t i = 0; i < n; ++i) {
    const int y = int(i % 3);
    csv += std::to_string(i) + "," + std::to_string(rng.normal() + 2.5 * (y == 1)) + "," +
           std::to_string(rng.normal() + 2.5 * (y == 2)) + "," + std::to_string(rng.normal()) +
           "," + std::to_string(y) + "\n";
  }
  return parse_csv(csv);
}

double train_accuracy(const TrainedModel& m, const Dataset& ds) {
  const auto pred = predict_labels(m.predict_proba(ds.features));
  std::size_t ok = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) ok += pred[i] == ds.labels[i];
  return double(ok) / double(pred.size());
}

/// Small parameter settings so the whole roster trains quickly.
HyperParams quick(ModelKind kind) {
  using I = std::int64_t;
  switch (kind) {
    case ModelKind::RandomForest: return {{"n_trees", I{15}}};
    case ModelKind::GradientBoosting:
    case ModelKind::RegularizedGradientBoosting:
    case ModelKind::HistogramGradientBoosting: return {{"n_rounds", I{20}}};
    case ModelKind::MultiLayerPerceptron: return {{"hidden", I{16}}, {"epochs", I{30}}};
    default: return {};
  }
}

}  // namespace

TEST_SUITE("models") {

TEST_CASE("roster and default spaces") {
  CHECK(all_model_kinds().size() == 9);
  for (ModelKind k : all_model_kinds()) {
    CHECK(model_kind_from_string(to_string(k)) == k);
    const SearchSpace space = default_search_space(k);
    CHECK_FALSE(space.empty());
    const SearchSpace limits = parameter_limits(k);
    for (const ParamRange& r : space) {
      r.validate();
      const auto lim = std::find_if(limits.begin(), limits.end(),
                                    [&](const ParamRange& l) { return l.name == r.name; });
      REQUIRE(lim != limits.end());
      if (r.is_numeric()) {
        CHECK(lim->lo <= r.lo);
        CHECK(r.hi <= lim->hi);
      }
    }
    CHECK_NOTHROW(resolve_params(k, default_params(k)));
  }
  const SearchSpace rf = default_search_space(ModelKind::RandomForest);
  CHECK(rf[0] == ParamRange::integer("n_trees", 50, 500));
  const SearchSpace mlp = default_search_space(ModelKind::MultiLayerPerceptron);
  CHECK(mlp[0] == ParamRange::integer("hidden", 8, 256));
  CHECK(test::error_of([] { model_kind_from_string("TabPFN"); }) == ErrorCode::UnknownModel);
}

TEST_CASE("parameter validation") {
  CHECK(test::error_of([] { resolve_params(ModelKind::KNearestNeighbors, {{"depth", std::int64_t{3}}}); }) ==
        ErrorCode::UnknownParam);
  CHECK(test::error_of([] { resolve_params(ModelKind::KNearestNeighbors, {{"k", std::int64_t{0}}}); }) ==
        ErrorCode::ParamOutOfRange);
  CHECK(test::error_of([] { resolve_params(ModelKind::KNearestNeighbors, {{"weights", std::string("cosine")}}); }) ==
        ErrorCode::ParamOutOfRange);
  CHECK(get_int(resolve_params(ModelKind::KNearestNeighbors, {{"k", 7.0}}), "k") == 7);
  CHECK(get_real(resolve_params(ModelKind::LogisticRegression, {{"l2", std::int64_t{2}}}), "l2") == 2.0);
  CHECK(test::error_of([] { ParamRange::log_real("x", 0.0, 1.0).validate(); }) == ErrorCode::ParamOutOfRange);
  CHECK(test::error_of([] { ParamRange::real("x", 1.0, 1.0).validate(); }) == ErrorCode::ParamOutOfRange);
  const ParamRange r = ParamRange::log_real("lr", 1e-3, 0.5);
  CHECK(ParamRange::from_json(r.to_json()) == r);
}

TEST_CASE("nearest neighbor recalls training rows") {
  const Dataset ds = blobs(60, 3, 0.5, 1);
  const TrainedModel m = fit(ModelKind::KNearestNeighbors, {{"k", std::int64_t{1}}}, ds, 0);
  CHECK(train_accuracy(m, ds) == 1.0);
}

TEST_CASE("logistic regression separates separable data") {
  const Dataset ds = parse_csv(
      "index,x,y,class\n1,0,0,0\n2,1,0,0\n3,0,1,0\n4,3,3,1\n5,4,3,1\n6,3,4,1\n7,0.5,0.5,0\n8,3.5,3.5,1\n");
  const TrainedModel m = fit(ModelKind::LogisticRegression, {}, ds, 0);
  CHECK(train_accuracy(m, ds) == 1.0);
}

TEST_CASE("single unbounded tree memorizes") {
  const Dataset ds = blobs(80, 4, 0.3, 2);
  const TrainedModel m = fit(ModelKind::RandomForest,
                             {{"n_trees", std::int64_t{1}}, {"bootstrap", std::string("false")}},
                             ds, 0);
  CHECK(train_accuracy(m, ds) == 1.0);
}

TEST_CASE("every model learns, outputs valid probabilities, and is deterministic") {
  const Dataset ds = blobs(200, 4, 2.0, 3);
  const TrainTest tt = split(ds, {0.3, 1, true});
  for (ModelKind kind : all_model_kinds()) {
    CAPTURE(to_string(kind));
    const TrainedModel m = fit(kind, quick(kind), tt.train, 99);
    const Matrix p = m.predict_proba(tt.test.features);
    REQUIRE(p.rows() == Eigen::Index(tt.test.n_rows()));
    REQUIRE(p.cols() == 2);
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      CHECK(std::abs(p.row(i).sum() - 1.0) <= 1e-9);
      CHECK(p.row(i).minCoeff() >= 0.0);
      CHECK(p(i, 0) == 1.0 - p(i, 1));
    }
    const MetricSet metrics = evaluate_probabilities(p, tt.test.labels, false);
    CHECK(*metrics.auc > 0.85);

    const TrainedModel again = fit(kind, quick(kind), tt.train, 99);
    CHECK(again.predict_proba(tt.test.features) == p);

    const TrainedModel loaded = TrainedModel::from_json(nlohmann::json::parse(m.to_json().dump()));
    CHECK(loaded.predict_proba(tt.test.features) == p);
    CHECK(loaded.params() == m.params());
  }
}

TEST_CASE("multiclass support follows the roster") {
  const Dataset ds = three_class(150, 4);
  for (ModelKind kind : all_model_kinds()) {
    CAPTURE(to_string(kind));
    if (supports_multiclass(kind)) {
      const TrainedModel m = fit(kind, quick(kind), ds, 1);
      const Matrix p = m.predict_proba(ds.features);
      CHECK(p.cols() == 3);
      for (Eigen::Index i = 0; i < p.rows(); ++i) CHECK(std::abs(p.row(i).sum() - 1.0) <= 1e-9);
      CHECK(train_accuracy(m, ds) > 0.6);
    } else {
      CHECK(test::error_of([&] { fit(kind, {}, ds, 1); }) == ErrorCode::MulticlassUnsupported);
    }
  }
}

TEST_CASE("training preconditions") {
  Dataset ds = blobs(30, 2, 1.0, 5);
  ds.features.column(0).values[3] = kMissing;
  CHECK(test::error_of([&] { fit(ModelKind::LogisticRegression, {}, ds, 0); }) == ErrorCode::MissingValues);
  const Dataset ok = blobs(30, 2, 1.0, 5);
  const std::vector<std::size_t> zeros = [&] {
    std::vector<std::size_t> v;
    for (std::size_t i = 0; i < ok.n_rows(); ++i) {
      if (ok.labels[i] == 0) v.push_back(i);
    }
    return v;
  }();
  CHECK(test::error_of([&] { fit(ModelKind::RandomForest, {}, ok.take_rows(zeros), 0); }) ==
        ErrorCode::SingleClass);

  const TrainedModel m = fit(ModelKind::KNearestNeighbors, {}, ok, 0);
  const Dataset renamed = parse_csv("index,x0,z,class\n1,0,0,0\n2,1,1,1\n");
  CHECK(test::error_of([&] { m.predict_proba(renamed.features); }) == ErrorCode::SchemaMismatch);
}

TEST_CASE("categorical features are one-hot encoded") {
  const DatasetMeta meta = DatasetMeta::from_json_text(
      R"({"columns":{"index":"id","color":"categorical","x":"numerical","class":"categorical"}})");
  std::string csv = "index,color,x,class\n";
  Rng rng(8);
  const char* colors[] = {"red", "green", "blue"};
  for (int i = 0; i < 120; ++i) {
    const int c = int(rng.uniform_int(0, 2));
    csv += std::to_string(i) + "," + colors[c] + "," + std::to_string(rng.normal()) + "," +
           (c == 0 ? "1" : "0") + "\n";
  }
  const Dataset ds = parse_csv(csv, &meta);
  for (ModelKind kind : all_model_kinds()) {
    CAPTURE(to_string(kind));
    const TrainedModel m = fit(kind, quick(kind), ds, 3);
    CHECK(m.encoder().n_encoded() == 4);
    CHECK(train_accuracy(m, ds) > 0.95);
  }
  // A token unseen in training encodes as all zeros instead of failing.
  const Dataset fresh = parse_csv("index,color,x,class\n1,purple,0.1,0\n2,red,0.2,1\n", &meta);
  const TrainedModel m = fit(ModelKind::LogisticRegression, {}, ds, 3);
  const Matrix p = m.predict_proba(fresh.features);
  CHECK(p(1, 1) > 0.5);
}

TEST_CASE("standardization uses training statistics only") {
  const Dataset ds = blobs(100, 3, 1.5, 6);
  const TrainTest tt = split(ds, {0.25, 2, true});
  for (ModelKind kind : {ModelKind::MultiLayerPerceptron, ModelKind::StochasticGradientLinear,
                         ModelKind::LogisticRegression, ModelKind::KNearestNeighbors}) {
    const TrainedModel m = fit(kind, quick(kind), tt.train, 5);
    const Matrix before = m.predict_proba(tt.test.features);
    // Poison the test set: extreme extra rows would move any statistic
    // computed over the scored rows.
    Dataset poisoned = tt.test;
    Dataset extreme = tt.test.take_rows(std::vector<std::size_t>{0, 1, 2});
    for (auto& col : extreme.features.columns()) {
      for (double& v : col.values) v = 1e6;
    }
    poisoned.append(extreme);
    const Matrix after = m.predict_proba(poisoned.features);
    CHECK(after.topRows(before.rows()) == before);
    const auto& feats = m.encoder().features();
    for (std::size_t j = 0; j < feats.size(); ++j) {
      const auto& v = tt.train.features.column(j).values;
      double mean = 0;
      for (double x : v) mean += x;
      mean /= double(v.size());
      CHECK(feats[j].mean == doctest::Approx(mean).epsilon(1e-12));
    }
  }
}

TEST_CASE("perceptron gradient matches finite differences") {
  Rng rng(12);
  const Eigen::Index n = 5, d = 4, h = 6, c = 3;
  Matrix X(n, d);
  for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = rng.normal();
  const std::vector<int> y{0, 2, 1, 2, 0};
  neural::MlpWeights w{Matrix(d, h), Vector(h), Matrix(h, c), Vector(c)};
  Vector flat(Eigen::Index(w.size()));
  for (Eigen::Index i = 0; i < flat.size(); ++i) flat[i] = rng.normal() * 0.5;
  w.assign(flat);
  const double l2 = 1e-2;
  neural::MlpWeights grad = w;
  neural::mlp_loss(w, X, y, l2, &grad);
  const Vector g = grad.flatten();
  const double step = 1e-5;
  double worst = 0;
  for (Eigen::Index k = 0; k < flat.size(); ++k) {
    Vector up = flat, down = flat;
    up[k] += step;
    down[k] -= step;
    neural::MlpWeights wu = w, wd = w;
    wu.assign(up);
    wd.assign(down);
    const double fd = (neural::mlp_loss(wu, X, y, l2, nullptr) - neural::mlp_loss(wd, X, y, l2, nullptr)) / (2 * step);
    const double rel = std::abs(fd - g[k]) / std::max(1e-8, std::abs(fd) + std::abs(g[k]));
    worst = std::max(worst, rel);
  }
  CHECK(worst <= 1e-4);
}

TEST_CASE("boosting training loss never increases") {
  const Dataset ds = blobs(150, 5, 1.0, 7);
  for (ModelKind kind : {ModelKind::GradientBoosting, ModelKind::RegularizedGradientBoosting,
                         ModelKind::HistogramGradientBoosting}) {
    CAPTURE(to_string(kind));
    std::vector<double> losses;
    FitObserver obs = [&](std::size_t, const TrainedModel& partial) {
      const auto& bt = dynamic_cast<const trees::BoostedTrees&>(partial.estimator());
      const Matrix X = partial.encoder().encode(partial.raw_view(ds.features));
      losses.push_back(trees::logistic_loss(bt, X, ds.labels));
      return false;
    };
    // Report every round by training with n_rounds and checking each prefix.
    const TrainedModel m = fit(kind, {{"n_rounds", std::int64_t{60}}}, ds, 0, obs);
    REQUIRE(losses.size() == 6);
    for (std::size_t i = 1; i < losses.size(); ++i) CHECK(losses[i] <= losses[i - 1] + 1e-12);

    // Per-round check through the low-level API.
    const Matrix X = m.encoder().encode(m.raw_view(ds.features));
    trees::BoostingOptions o;
    o.flavor = kind == ModelKind::GradientBoosting ? trees::BoostingFlavor::classic
               : kind == ModelKind::RegularizedGradientBoosting ? trees::BoostingFlavor::regularized
                                                                : trees::BoostingFlavor::histogram;
    o.n_rounds = 40;
    o.report_every = 1;
    o.lambda = 1.0;
    trees::BoostedTrees bt;
    double prev = INFINITY;
    bool monotone = true;
    trees::fit_boosting(bt, X, ds.labels, o, 0, [&](std::size_t) {
      const double l = trees::logistic_loss(bt, X, ds.labels);
      monotone = monotone && l <= prev + 1e-12;
      prev = l;
      return false;
    });
    CHECK(monotone);
  }
}

TEST_CASE("ensembles average their members") {
  const Dataset ds = blobs(100, 3, 1.0, 8);
  for (ModelKind kind : {ModelKind::RandomForest, ModelKind::Bagging}) {
    const TrainedModel m = fit(kind, kind == ModelKind::RandomForest ? HyperParams{{"n_trees", std::int64_t{12}}} : HyperParams{}, ds, 4);
    const auto& ens = dynamic_cast<const trees::TreeEnsemble&>(m.estimator());
    const Matrix X = m.encoder().encode(m.raw_view(ds.features));
    Matrix avg = Matrix::Zero(X.rows(), 2);
    for (std::size_t t = 0; t < ens.size(); ++t) {
      const Matrix mp = ens.member_proba(t, X);
      CHECK(mp.minCoeff() >= 0.0);
      avg += mp;
    }
    avg /= double(ens.size());
    CHECK((ens.predict_proba(X) - avg).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("histogram bins stay within 255") {
  Rng rng(2);
  Matrix X(2000, 2);
  for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = rng.normal();
  const auto mapper = trees::BinMapper::fit(X, 255);
  CHECK(mapper.n_bins(0) <= 255);
  for (Eigen::Index i = 0; i < X.rows(); ++i) CHECK(mapper.bin(0, X(i, 0)) < mapper.n_bins(0));
}

TEST_CASE("linear margin matches the probability output") {
  const Dataset ds = blobs(80, 3, 1.5, 9);
  for (ModelKind kind : {ModelKind::LogisticRegression, ModelKind::StochasticGradientLinear}) {
    const TrainedModel m = fit(kind, {}, ds, 0);
    const auto lf = m.linear_margin();
    REQUIRE(lf.has_value());
    const Matrix X = m.encoder().encode(m.raw_view(ds.features));
    const Matrix p = m.predict_proba(ds.features);
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      const double z = X.row(i).dot(lf->weights) + lf->intercept;
      CHECK(p(i, 1) == doctest::Approx(1.0 / (1.0 + std::exp(-z))).epsilon(1e-9));
    }
  }
  CHECK_FALSE(fit(ModelKind::KNearestNeighbors, {}, ds, 0).linear_margin().has_value());
}

}
