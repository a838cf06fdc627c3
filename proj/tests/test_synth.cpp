#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <set>
#include <sstream>

#include "classify/synth.hpp"
#include "support.hpp"

using namespace classify;

namespace {

/// Random rank-r matrix (product of Gaussian factors) and a copy with a
/// `drop` fraction of cells set to NaN.
struct LowRank {
  Matrix full;
  Matrix holed;
};

LowRank low_rank_instance(std::uint64_t seed, Eigen::Index n, Eigen::Index d, Eigen::Index r, double drop) {
  Rng rng(seed);
  Matrix a(n, r), b(r, d);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = rng.normal();
  for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = rng.normal();
  LowRank out{a * b, a * b};
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) {
      if (rng.uniform() < drop) out.holed(i, j) = kMissing;
    }
  }
  // Every column keeps at least one observed cell.
  for (Eigen::Index j = 0; j < d; ++j) out.holed(0, j) = out.full(0, j);
  return out;
}

double missing_cell_error(const LowRank& inst, const Matrix& completed) {
  double num = 0, den = 0;
  for (Eigen::Index i = 0; i < inst.full.rows(); ++i) {
    for (Eigen::Index j = 0; j < inst.full.cols(); ++j) {
      if (!std::isnan(inst.holed(i, j))) continue;
      num += std::pow(completed(i, j) - inst.full(i, j), 2);
      den += std::pow(inst.full(i, j), 2);
    }
  }
  return std::sqrt(num / den);
}

bool observed_identical(const Matrix& x, const Matrix& y) {
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double a = x.data()[i];
    if (!std::isnan(a) && std::memcmp(&a, y.data() + i, sizeof a) != 0) return false;
  }
  return true;
}

/// Numerical features plus one categorical column `g` and a boolean `flag`;
/// class counts as given.
Dataset mixed_dataset(const std::vector<std::size_t>& counts, std::uint64_t seed) {
  Rng rng(seed);
  std::ostringstream csv;
  csv << "index,x,y,g,flag,class\n";
  std::size_t id = 0;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    for (std::size_t k = 0; k < counts[c]; ++k) {
      const double x = rng.normal() + double(c);
      const double y = 0.8 * x + 0.6 * rng.normal();
      const char* g = rng.uniform() < 0.2 + 0.3 * double(c) ? "red" : (rng.uniform() < 0.5 ? "green" : "blue");
      csv << ++id << ',' << x << ',' << y << ',' << g << ',' << (rng.uniform() < 0.3 ? "TRUE" : "FALSE")
          << ',' << c << '\n';
    }
  }
  const DatasetMeta meta = DatasetMeta::from_json_text(
      R"({"columns": {"index": "id", "x": "numerical", "y": "numerical", "g": "categorical",
                      "flag": "boolean", "class": "categorical"}})");
  return parse_csv(csv.str(), &meta);
}

std::vector<std::size_t> counts_of(const Dataset& ds) { return ds.class_counts(); }

}  // namespace

TEST_SUITE("synth") {

TEST_CASE("soft impute passes complete matrices through") {
  Rng rng(1);
  Matrix x(6, 4);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  const Matrix out = soft_impute(x);
  CHECK(std::memcmp(out.data(), x.data(), sizeof(double) * std::size_t(x.size())) == 0);
}

TEST_CASE("rank-one completion") {
  Matrix x(2, 2);
  x << kMissing, 2, 2, 4;
  ImputeConfig cfg;
  cfg.lambda = 1e-3;
  const Matrix out = soft_impute(x, cfg);
  // The only rank-one completion is 2*2/4.
  CHECK(std::abs(out(0, 0) - 1.0) <= 0.05);
  CHECK(out(1, 1) == 4.0);
}

TEST_CASE("rank-two recovery from 20% missing") {
  double total = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const LowRank inst = low_rank_instance(seed, 50, 8, 2, 0.2);
    ImputeConfig cfg;
    cfg.lambda = 0.01;
    const Matrix out = soft_impute(inst.holed, cfg);
    CHECK(observed_identical(inst.holed, out));
    total += missing_cell_error(inst, out);
  }
  CHECK(total / 20 <= 0.05);
}

TEST_CASE("soft impute objective never increases") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const LowRank inst = low_rank_instance(100 + seed, 30, 6, 3, 0.3);
    Matrix noisy = inst.holed;
    Rng rng(seed);
    for (Eigen::Index i = 0; i < noisy.size(); ++i) noisy.data()[i] += 0.1 * rng.normal();
    for (std::size_t path : {std::size_t(1), std::size_t(10)}) {
      ImputeConfig cfg;
      cfg.path_length = path;
      cfg.lambda = 0.5;
      const ImputeResult r = soft_impute_detailed(noisy, cfg);
      REQUIRE(r.objective.size() >= 2);
      for (std::size_t k = 1; k < r.objective.size(); ++k) {
        CHECK(r.objective[k] <= r.objective[k - 1] * (1 + 1e-12) + 1e-12);
      }
    }
  }
}

TEST_CASE("soft impute errors") {
  Matrix x(3, 2);
  x << 1, kMissing, 2, kMissing, 3, kMissing;
  CHECK(test::error_of([&] { soft_impute(x); }) == ErrorCode::EmptyColumn);
  ImputeConfig bad;
  bad.tol = 0;
  CHECK(test::error_of([&] { soft_impute(Matrix::Ones(2, 2), bad); }) == ErrorCode::InvalidSpec);
}

TEST_CASE("dataset imputer fills only missing cells, with valid codes") {
  const Dataset full = mixed_dataset({60, 60}, 3);
  Dataset holed = full;
  Rng rng(4);
  for (auto& col : holed.features.columns()) {
    for (double& v : col.values) {
      if (rng.uniform() < 0.2) v = kMissing;
    }
  }
  DatasetImputer imp;
  const Dataset done = imp.fit_transform(holed);
  CHECK_FALSE(done.features.has_missing());
  for (std::size_t j = 0; j < holed.features.n_columns(); ++j) {
    const Column& h = holed.features.column(j);
    const Column& d = done.features.column(j);
    for (std::size_t i = 0; i < h.values.size(); ++i) {
      if (!is_missing(h.values[i])) CHECK(d.values[i] == h.values[i]);
      if (h.type == ColumnType::categorical) {
        CHECK(d.values[i] >= 0);
        CHECK(d.values[i] < double(h.categories.size()));
        CHECK(d.values[i] == std::floor(d.values[i]));
      }
      if (h.type == ColumnType::boolean) CHECK((d.values[i] == 0.0 || d.values[i] == 1.0));
    }
  }
  // Correlated x/y: an imputed y tracks its row's x better than the mean does.
  double err_fit = 0, err_mean = 0;
  const Column& y_true = full.features.column(1);
  for (std::size_t i = 0; i < y_true.values.size(); ++i) {
    if (!is_missing(holed.features.column(1).values[i]) || is_missing(holed.features.column(0).values[i])) continue;
    err_fit += std::pow(done.features.column(1).values[i] - y_true.values[i], 2);
    err_mean += std::pow(y_true.values[i] - 0.5 * 0.8, 2);
  }
  CHECK(err_fit < err_mean);

  // Applying to other rows leaves the fit untouched and fills their holes.
  Dataset other = mixed_dataset({10, 10}, 8);
  other.features.column(0).values[0] = kMissing;
  other.features.column(2).values[1] = kMissing;
  const double lambda = imp.lambda();
  const Dataset t = imp.transform(other);
  CHECK_FALSE(t.features.has_missing());
  CHECK(imp.lambda() == lambda);
  CHECK(t.features.column(1).values[0] == other.features.column(1).values[0]);
  CHECK(imp.transform(full).same_cells(full));
}

TEST_CASE("copula latent correlations") {
  SUBCASE("single column") {
    std::ostringstream csv;
    csv << "index,a,class\n";
    for (int i = 0; i < 20; ++i) csv << i << ',' << i * 0.5 << ',' << i % 2 << '\n';
    const Dataset ds = parse_csv(csv.str());
    const CopulaModel m = fit_copula(ds, ds.meta);
    CHECK(m.classes[0].correlation.rows() == 1);
    CHECK(m.classes[0].correlation(0, 0) == 1.0);
  }
  SUBCASE("identical columns and independent columns") {
    Rng rng(5);
    std::ostringstream same, indep;
    same << "index,a,b,class\n";
    indep << "index,a,b,class\n";
    for (int i = 0; i < 2000; ++i) {
      const double v = rng.normal();
      if (i < 500) same << i << ',' << v << ',' << v << ',' << i % 2 << '\n';
      indep << i << ',' << rng.normal() << ',' << rng.uniform() << ',' << i % 2 << '\n';
    }
    const Dataset s = parse_csv(same.str());
    const Dataset d = parse_csv(indep.str());
    for (const auto& c : fit_copula(s, s.meta).classes) CHECK(c.correlation(0, 1) >= 0.99);
    for (const auto& c : fit_copula(d, d.meta).classes) CHECK(std::abs(c.correlation(0, 1)) <= 0.1);
  }
}

TEST_CASE("nearest correlation projection") {
  Rng rng(6);
  for (int rep = 0; rep < 50; ++rep) {
    const Eigen::Index d = 2 + Eigen::Index(rng.uniform_int(0, 6));
    Matrix m = Matrix::Identity(d, d);
    for (Eigen::Index a = 0; a < d; ++a) {
      for (Eigen::Index b = a + 1; b < d; ++b) m(a, b) = m(b, a) = rng.uniform(-1, 1);
    }
    const Matrix c = nearest_correlation(m);
    CHECK((c - c.transpose()).cwiseAbs().maxCoeff() == 0.0);
    CHECK((c.diagonal().array() - 1.0).abs().maxCoeff() == 0.0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig{Eigen::MatrixXd(c)};
    CHECK(eig.eigenvalues().minCoeff() >= -1e-10);
  }
  const Matrix ok = (Matrix(2, 2) << 1, 0.3, 0.3, 1).finished();
  CHECK((nearest_correlation(ok) - ok).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("copula sampling contracts") {
  const Dataset ds = mixed_dataset({200, 150}, 7);
  const CopulaModel m = fit_copula(ds, ds.meta);
  CHECK(sample(m, 0, 0, 1).n_rows() == 0);

  const Dataset s = sample(m, 1, 5000, 9);
  CHECK(s.n_rows() == 5000);
  CHECK(std::all_of(s.labels.begin(), s.labels.end(), [](int y) { return y == 1; }));
  // Numerical samples stay inside the class's observed range.
  for (std::size_t j : {std::size_t(0), std::size_t(1)}) {
    double lo = INFINITY, hi = -INFINITY;
    for (std::size_t i = 0; i < ds.n_rows(); ++i) {
      if (ds.labels[i] != 1) continue;
      lo = std::min(lo, ds.features.column(j).values[i]);
      hi = std::max(hi, ds.features.column(j).values[i]);
    }
    for (double v : s.features.column(j).values) {
      CHECK(v >= lo);
      CHECK(v <= hi);
    }
  }
  // Category frequencies of the samples match the fitted class frequencies.
  const Column& g = ds.features.column(2);
  std::vector<double> fitted(g.categories.size(), 0), drawn(g.categories.size(), 0);
  double n1 = 0;
  for (std::size_t i = 0; i < ds.n_rows(); ++i) {
    if (ds.labels[i] != 1) continue;
    fitted[std::size_t(g.values[i])] += 1;
    n1 += 1;
  }
  for (double v : s.features.column(2).values) drawn[std::size_t(v)] += 1;
  for (std::size_t k = 0; k < fitted.size(); ++k) CHECK(std::abs(fitted[k] / n1 - drawn[k] / 5000) <= 0.03);

  CHECK(sample(m, 1, 50, 3).same_cells(sample(m, 1, 50, 3)));
  CHECK_FALSE(sample(m, 1, 50, 3).same_cells(sample(m, 1, 50, 4)));
  CHECK(test::error_of([&] { sample(m, 2, 5, 1); }) == ErrorCode::UnknownClass);
}

TEST_CASE("copula preconditions") {
  const Dataset small = mixed_dataset({20, 4}, 1);
  CHECK(test::error_of([&] { fit_copula(small, small.meta); }) == ErrorCode::ClassTooSmall);
  Dataset holed = mixed_dataset({20, 20}, 1);
  holed.features.column(0).values[3] = kMissing;
  CHECK(test::error_of([&] { fit_copula(holed, holed.meta); }) == ErrorCode::MissingValuesPresent);
  CHECK(test::error_of([&] { make_synthesizer("ctgan"); }) == ErrorCode::InvalidSpec);
}

TEST_CASE("balancing tops minorities up to the majority") {
  const Dataset ds = mixed_dataset({90, 10}, 2);
  const Balanced b = balance(ds, ds.meta, 5);
  CHECK(counts_of(b.augmented) == std::vector<std::size_t>{90, 90});
  CHECK(b.synthetic.n_rows() == 80);
  std::vector<std::size_t> prefix(ds.n_rows());
  std::iota(prefix.begin(), prefix.end(), 0);
  CHECK(b.augmented.take_rows(prefix).same_cells(ds));
  std::set<std::string> ids(b.augmented.index.begin(), b.augmented.index.end());
  CHECK(ids.size() == b.augmented.n_rows());

  const Dataset even = mixed_dataset({30, 30}, 2);
  const Balanced e = balance(even, even.meta, 5);
  CHECK(e.synthetic.n_rows() == 0);
  CHECK(e.augmented.same_cells(even));

  const Dataset three = mixed_dataset({50, 30, 20}, 2);
  CHECK(counts_of(balance(three, three.meta, 1).augmented) == std::vector<std::size_t>{50, 50, 50});
  CHECK(balance(ds, ds.meta, 5).augmented.same_cells(b.augmented));
}

TEST_CASE("full generation") {
  const Dataset ds = mixed_dataset({70, 30}, 4);
  const Dataset g = generate_full(ds, ds.meta, 8);
  CHECK(g.n_rows() == 100);
  CHECK(counts_of(g) == std::vector<std::size_t>{50, 50});
  CHECK(equal_class_counts(10, 3) == std::vector<std::size_t>{4, 3, 3});
  CHECK(equal_class_counts(100, 2) == std::vector<std::size_t>{50, 50});
  // No numeric row of the original reappears.
  for (std::size_t i = 0; i < g.n_rows(); ++i) {
    for (std::size_t r = 0; r < ds.n_rows(); ++r) {
      const bool same = g.features.column(0).values[i] == ds.features.column(0).values[r] &&
                        g.features.column(1).values[i] == ds.features.column(1).values[r];
      if (same) FAIL("copied row " << r);
    }
  }
  // Schema survives a CSV round trip under the same metadata.
  const Dataset back = parse_csv(to_csv(g), &ds.meta);
  CHECK(back.same_cells(g));
  CHECK(validate_metadata(back, ds.meta).size() == validate_metadata(ds, ds.meta).size());
}

TEST_CASE("quality scores") {
  const Dataset ds = mixed_dataset({80, 80}, 6);
  const SynthQuality self = quality(ds, ds, ds.meta);
  CHECK(self.column_shapes == 1.0);
  CHECK(self.column_pair_trends == 1.0);
  CHECK(self.overall == 1.0);

  SUBCASE("hand KS on four points") {
    // Real {1,2,3,4}; synthetic constant at the median 2.5. Just below 2.5
    // the real CDF is 0.5 and the synthetic 0; at 2.5 they are 0.5 and 1.
    CHECK(ks_statistic({1, 2, 3, 4}, {2.5, 2.5, 2.5, 2.5}) == 0.5);
    const Dataset real = parse_csv("index,a,class\n1,1,0\n2,2,1\n3,3,0\n4,4,1\n");
    const Dataset syn = parse_csv("index,a,class\n1,2.5,0\n2,2.5,1\n3,2.5,0\n4,2.5,1\n");
    CHECK(quality(real, syn, real.meta).per_column.at("a") == 0.5);
  }
  SUBCASE("opposite correlations score zero") {
    const Dataset up = parse_csv("index,a,b,class\n1,1,1,0\n2,2,2,1\n3,3,3,0\n");
    const Dataset down = parse_csv("index,a,b,class\n1,1,3,0\n2,2,2,1\n3,3,1,0\n");
    CHECK(quality(up, down, up.meta).per_pair.at("a|b") == 0.0);
  }
  SUBCASE("bounds and schema") {
    const Dataset g = generate_full(ds, ds.meta, 1);
    const SynthQuality q = quality(ds, g, ds.meta);
    for (double v : {q.column_shapes, q.column_pair_trends, q.overall}) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    CHECK(q.overall == doctest::Approx(0.5 * (q.column_shapes + q.column_pair_trends)));
    CHECK(q.overall > 0.7);
    CHECK(SynthQuality::from_json(q.to_json()).to_json() == q.to_json());
    const std::vector<std::string> names{"x", "y"};
    const Dataset narrow = ds.select_features(names);
    CHECK(test::error_of([&] { quality(ds, narrow, ds.meta); }) == ErrorCode::SchemaMismatch);
  }
}

}
