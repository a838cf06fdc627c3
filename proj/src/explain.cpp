#include "classify/explain.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Cholesky>

#include "classify/error.hpp"
#include "classify/rng.hpp"
#include "json_util.hpp"

namespace classify {

namespace {

using Coalition = std::vector<std::uint8_t>;

/// Rows evaluated per predict call when averaging over the background.
constexpr std::size_t kBatchRows = 16384;

/// v(z) for each coalition: mean over background rows of the model with the
/// features in z taken from x.
Matrix coalition_values(const BatchPredict& predict, const Vector& x, const Matrix& background,
                        const std::vector<Coalition>& coalitions) {
  const std::size_t nb = std::size_t(background.rows());
  const std::size_t per_batch = std::max<std::size_t>(1, kBatchRows / nb);
  Matrix out;
  Matrix rows;
  for (std::size_t start = 0; start < coalitions.size(); start += per_batch) {
    const std::size_t stop = std::min(coalitions.size(), start + per_batch);
    rows.resize(Eigen::Index((stop - start) * nb), background.cols());
    for (std::size_t c = start; c < stop; ++c) {
      const Coalition& z = coalitions[c];
      for (std::size_t b = 0; b < nb; ++b) {
        auto row = rows.row(Eigen::Index((c - start) * nb + b));
        row = background.row(Eigen::Index(b));
        for (std::size_t j = 0; j < z.size(); ++j) {
          if (z[j]) row[Eigen::Index(j)] = x[Eigen::Index(j)];
        }
      }
    }
    const Matrix p = predict(rows);
    if (out.size() == 0) out.resize(Eigen::Index(coalitions.size()), p.cols());
    for (std::size_t c = start; c < stop; ++c) {
      out.row(Eigen::Index(c)) =
          p.middleRows(Eigen::Index((c - start) * nb), Eigen::Index(nb)).colwise().mean();
    }
  }
  return out;
}

void check_dims(const Vector& x, const Matrix& background) {
  if (background.rows() == 0) throw Error(ErrorCode::DimensionMismatch, "background is empty");
  if (x.size() != background.cols()) {
    throw Error(ErrorCode::DimensionMismatch,
                "row has " + std::to_string(x.size()) + " features, background has " +
                    std::to_string(background.cols()));
  }
  if (x.size() == 0) throw Error(ErrorCode::DimensionMismatch, "no features to explain");
}

double log_choose(double n, double k) {
  return std::lgamma(n + 1) - std::lgamma(k + 1) - std::lgamma(n - k + 1);
}

Coalition from_mask(std::uint64_t mask, std::size_t m) {
  Coalition z(m);
  for (std::size_t j = 0; j < m; ++j) z[j] = (mask >> j) & 1u;
  return z;
}

/// Solves the constrained regression once. Returns false when singular.
bool solve_kernel(const std::vector<Coalition>& zs, const std::vector<double>& w, const Matrix& v,
                  const Vector& base, const Vector& delta, Matrix& phi) {
  const std::size_t m = zs.front().size();
  const std::size_t k_out = std::size_t(v.cols());
  const auto p = Eigen::Index(m - 1);
  Matrix A = Matrix::Zero(p, p);
  Matrix rhs = Matrix::Zero(p, Eigen::Index(k_out));
  Vector row(p);
  for (std::size_t s = 0; s < zs.size(); ++s) {
    const Coalition& z = zs[s];
    const double zl = z[m - 1];
    for (Eigen::Index j = 0; j < p; ++j) row[j] = double(z[std::size_t(j)]) - zl;
    A.noalias() += w[s] * row * row.transpose();
    for (std::size_t k = 0; k < k_out; ++k) {
      const double y = v(Eigen::Index(s), Eigen::Index(k)) - base[Eigen::Index(k)] - zl * delta[Eigen::Index(k)];
      rhs.col(Eigen::Index(k)) += w[s] * y * row;
    }
  }
  Eigen::LDLT<Matrix> ldlt(A);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) return false;
  // Zero pivots are silently skipped by solve(), so test them directly.
  const Vector d = ldlt.vectorD().cwiseAbs();
  if (d.maxCoeff() <= 0.0 || d.minCoeff() < 1e-12 * d.maxCoeff() || ldlt.rcond() < 1e-12) return false;
  const Matrix sol = ldlt.solve(rhs);
  phi.resize(Eigen::Index(m), Eigen::Index(k_out));
  phi.topRows(p) = sol;
  for (std::size_t k = 0; k < k_out; ++k) {
    phi(p, Eigen::Index(k)) = delta[Eigen::Index(k)] - sol.col(Eigen::Index(k)).sum();
  }
  return true;
}

}  // namespace

double ShapMatrix::efficiency_residual() const {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    worst = std::max(worst, std::abs(values.row(i).sum() - (outputs[i] - base_value)));
  }
  return worst;
}

nlohmann::json ShapMatrix::to_json() const {
  return {{"feature_names", feature_names},
          {"base_value", base_value},
          {"outputs", detail::vector_to_json(outputs)},
          {"values", detail::matrix_to_json(values)}};
}

ShapMatrix ShapMatrix::from_json(const nlohmann::json& doc) {
  ShapMatrix s;
  s.feature_names = doc.at("feature_names").get<std::vector<std::string>>();
  s.base_value = doc.at("base_value").get<double>();
  s.outputs = detail::vector_from_json(doc.at("outputs"));
  s.values = detail::matrix_from_json(doc.at("values"));
  return s;
}

ShapMatrix linear_shap(const Vector& weights, double intercept, const Matrix& X,
                       const Matrix& background, std::vector<std::string> feature_names) {
  if (X.cols() != weights.size() || background.cols() != weights.size()) {
    throw Error(ErrorCode::DimensionMismatch, "weights, rows and background disagree on width");
  }
  if (background.rows() == 0) throw Error(ErrorCode::DimensionMismatch, "background is empty");
  if (!feature_names.empty() && feature_names.size() != std::size_t(weights.size())) {
    throw Error(ErrorCode::DimensionMismatch, "feature name count differs from weights");
  }
  const Vector mean = background.colwise().mean().transpose();
  ShapMatrix s;
  s.feature_names = std::move(feature_names);
  s.base_value = weights.dot(mean) + intercept;
  s.values = (X.rowwise() - mean.transpose()).array().rowwise() * weights.transpose().array();
  s.outputs = (X * weights).array() + intercept;
  return s;
}

Vector background_mean_output(const BatchPredict& predict, const Matrix& background) {
  return predict(background).colwise().mean().transpose();
}

Matrix exact_shap(const BatchPredict& predict, const Vector& x, const Matrix& background) {
  check_dims(x, background);
  const std::size_t m = std::size_t(x.size());
  if (m > kMaxExactFeatures) {
    throw Error(ErrorCode::TooManyFeatures, "exact Shapley values need at most " +
                                                std::to_string(kMaxExactFeatures) + " features, got " +
                                                std::to_string(m));
  }
  const std::uint64_t n_sets = std::uint64_t{1} << m;
  std::vector<Coalition> all;
  all.reserve(n_sets);
  for (std::uint64_t mask = 0; mask < n_sets; ++mask) all.push_back(from_mask(mask, m));
  const Matrix v = coalition_values(predict, x, background, all);

  std::vector<double> weight(m);
  for (std::size_t s = 0; s < m; ++s) {
    // |S|! (M-|S|-1)! / M!
    weight[s] = std::exp(std::lgamma(double(s) + 1) + std::lgamma(double(m - s)) -
                         std::lgamma(double(m) + 1));
  }
  Matrix phi = Matrix::Zero(Eigen::Index(m), v.cols());
  for (std::uint64_t mask = 0; mask < n_sets; ++mask) {
    const std::size_t size = std::size_t(__builtin_popcountll(mask));
    for (std::size_t j = 0; j < m; ++j) {
      if ((mask >> j) & 1u) continue;
      phi.row(Eigen::Index(j)) +=
          weight[size] * (v.row(Eigen::Index(mask | (std::uint64_t{1} << j))) - v.row(Eigen::Index(mask)));
    }
  }
  return phi;
}

Matrix kernel_shap(const BatchPredict& predict, const Vector& x, const Matrix& background,
                   std::size_t n_samples, std::uint64_t seed) {
  check_dims(x, background);
  const std::size_t m = std::size_t(x.size());
  const Vector base = background_mean_output(predict, background);
  const Vector fx = predict(x.transpose()).row(0).transpose();
  const Vector delta = fx - base;
  if (m == 1) return delta.transpose();

  const bool enumerate = m < 63 && double(n_samples) >= std::ldexp(1.0, int(m)) - 2.0;
  for (int attempt = 0; attempt < 3; ++attempt) {
    std::vector<Coalition> zs;
    std::vector<double> w;
    if (enumerate) {
      const std::uint64_t full = (std::uint64_t{1} << m) - 1;
      for (std::uint64_t mask = 1; mask < full; ++mask) {
        const double s = double(__builtin_popcountll(mask));
        zs.push_back(from_mask(mask, m));
        w.push_back(std::exp(std::log(double(m - 1)) - log_choose(double(m), s) -
                             std::log(s * (double(m) - s))));
      }
    } else {
      Rng rng(derive_seed(seed, std::uint64_t(attempt)));
      std::vector<double> cdf(m - 1);
      double total = 0.0;
      for (std::size_t s = 1; s < m; ++s) {
        total += double(m - 1) / (double(s) * double(m - s));
        cdf[s - 1] = total;
      }
      std::vector<std::size_t> perm(m);
      const std::size_t pairs = std::max<std::size_t>(1, n_samples / 2);
      for (std::size_t k = 0; k < pairs; ++k) {
        const double u = rng.uniform() * total;
        const std::size_t s =
            std::size_t(std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin()) + 1;
        std::iota(perm.begin(), perm.end(), 0);
        Coalition z(m, 0);
        for (std::size_t i = 0; i < s; ++i) {
          const std::size_t j = i + rng.index(m - i);
          std::swap(perm[i], perm[j]);
          z[perm[i]] = 1;
        }
        Coalition comp(m);
        for (std::size_t j = 0; j < m; ++j) comp[j] = 1 - z[j];
        zs.push_back(std::move(z));
        zs.push_back(std::move(comp));
        w.push_back(1.0);
        w.push_back(1.0);
      }
    }
    const Matrix v = coalition_values(predict, x, background, zs);
    Matrix phi;
    if (solve_kernel(zs, w, v, base, delta, phi)) return phi;
    if (enumerate) break;
  }
  throw Error(ErrorCode::SingularSystem,
              "coalition sample does not determine the attributions; increase the sample count");
}

// ---- aggregation -----------------------------------------------------------

namespace {

void finish_percentages(FeatureReport& r) {
  double total = 0.0;
  for (const auto& f : r.features) total += f.mean_abs;
  for (auto& f : r.features) f.percentage = total > 0 ? 100.0 * f.mean_abs / total : 0.0;
}

int sign_of(double v) { return v > 0 ? 1 : v < 0 ? -1 : 0; }

std::string feature_name(const ShapMatrix& s, std::size_t j) {
  return j < s.feature_names.size() ? s.feature_names[j] : "f" + std::to_string(j);
}

}  // namespace

FeatureReport aggregate(const ShapMatrix& shap) {
  FeatureReport r;
  const double n = double(shap.values.rows());
  for (Eigen::Index j = 0; j < shap.values.cols(); ++j) {
    FeatureScore f;
    f.name = feature_name(shap, std::size_t(j));
    if (n > 0) {
      f.mean_signed = shap.values.col(j).sum() / n;
      f.mean_abs = shap.values.col(j).cwiseAbs().sum() / n;
    }
    f.sign = sign_of(f.mean_signed);
    r.features.push_back(std::move(f));
  }
  finish_percentages(r);
  return r;
}

FeatureReport aggregate(const std::vector<ShapMatrix>& per_class) {
  if (per_class.size() == 1) return aggregate(per_class.front());
  FeatureReport r;
  if (per_class.empty()) return r;
  const ShapMatrix& first = per_class.front();
  const double n = double(first.values.rows());
  for (Eigen::Index j = 0; j < first.values.cols(); ++j) {
    FeatureScore f;
    f.name = feature_name(first, std::size_t(j));
    for (const ShapMatrix& s : per_class) {
      if (n > 0) {
        f.class_mean_signed.push_back(s.values.col(j).sum() / n);
        f.mean_abs += s.values.col(j).cwiseAbs().sum() / n;
      } else {
        f.class_mean_signed.push_back(0.0);
      }
    }
    r.features.push_back(std::move(f));
  }
  finish_percentages(r);
  return r;
}

nlohmann::json FeatureReport::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& f : features) {
    nlohmann::json jf = {{"name", f.name},
                         {"mean_signed", f.mean_signed},
                         {"mean_abs", f.mean_abs},
                         {"percentage", f.percentage},
                         {"sign", f.sign == 0 ? "0" : f.sign > 0 ? "+" : "-"}};
    if (!f.class_mean_signed.empty()) jf["class_mean_signed"] = f.class_mean_signed;
    arr.push_back(std::move(jf));
  }
  return {{"features", arr}};
}

FeatureReport FeatureReport::from_json(const nlohmann::json& doc) {
  FeatureReport r;
  for (const auto& jf : doc.at("features")) {
    FeatureScore f;
    f.name = jf.at("name").get<std::string>();
    f.mean_signed = jf.at("mean_signed").get<double>();
    f.mean_abs = jf.at("mean_abs").get<double>();
    f.percentage = jf.at("percentage").get<double>();
    const std::string s = jf.at("sign").get<std::string>();
    f.sign = s == "+" ? 1 : s == "-" ? -1 : 0;
    if (jf.contains("class_mean_signed")) {
      f.class_mean_signed = jf.at("class_mean_signed").get<std::vector<double>>();
    }
    r.features.push_back(std::move(f));
  }
  return r;
}

// ---- models ----------------------------------------------------------------

nlohmann::json ExplainConfig::to_json() const {
  return {{"max_background", max_background},
          {"max_rows", max_rows},
          {"kernel_samples", kernel_samples},
          {"exact_max_features", exact_max_features},
          {"seed", seed}};
}

nlohmann::json ModelExplanation::to_json() const {
  nlohmann::json mats = nlohmann::json::array();
  for (const auto& s : shap) mats.push_back(s.to_json());
  return {{"target", target},
          {"method", method},
          {"shap", mats},
          {"row_index", row_index},
          {"feature_values", detail::matrix_to_json(feature_values)},
          {"report", report.to_json()}};
}

std::vector<std::size_t> sample_rows(std::size_t n, std::size_t k, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  if (k >= n) return idx;
  Rng rng(seed);
  rng.shuffle(idx);
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

ModelExplanation explain_model(const TrainedModel& model, const Dataset& train, const Dataset& rows,
                               const ExplainConfig& config) {
  ModelExplanation out;
  const std::vector<std::string> names = model.feature_names();
  const Matrix train_raw = model.raw_view(train.features);
  const Matrix rows_raw = model.raw_view(rows.features);

  Matrix background(0, train_raw.cols());
  {
    const auto idx = sample_rows(std::size_t(train_raw.rows()), config.max_background,
                                 derive_seed(config.seed, 1));
    background.resize(Eigen::Index(idx.size()), train_raw.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) background.row(Eigen::Index(i)) = train_raw.row(Eigen::Index(idx[i]));
  }
  const auto picked = sample_rows(std::size_t(rows_raw.rows()), config.max_rows, derive_seed(config.seed, 2));
  Matrix X(Eigen::Index(picked.size()), rows_raw.cols());
  for (std::size_t i = 0; i < picked.size(); ++i) {
    X.row(Eigen::Index(i)) = rows_raw.row(Eigen::Index(picked[i]));
    out.row_index.push_back(rows.index[picked[i]]);
  }
  out.feature_values = X;

  if (const auto lf = model.linear_margin()) {
    const Encoder& enc = model.encoder();
    const ShapMatrix encoded = linear_shap(lf->weights, lf->intercept, enc.encode(X), enc.encode(background));
    ShapMatrix s;
    s.feature_names = names;
    s.base_value = encoded.base_value;
    s.outputs = encoded.outputs;
    s.values = Matrix::Zero(X.rows(), X.cols());
    for (std::size_t k = 0; k < enc.n_encoded(); ++k) {
      s.values.col(Eigen::Index(enc.source_of(k))) += encoded.values.col(Eigen::Index(k));
    }
    out.target = "margin";
    out.method = "linear";
    out.shap.push_back(std::move(s));
    out.report = aggregate(out.shap);
    return out;
  }

  const bool binary = model.n_classes() == 2;
  const BatchPredict predict = [&](const Matrix& r) -> Matrix {
    Matrix p = model.predict_proba_raw(r);
    if (binary) return p.col(1);
    return p;
  };
  const std::size_t m = std::size_t(X.cols());
  const bool exact = m <= std::min(config.exact_max_features, kMaxExactFeatures);
  const std::size_t samples = config.kernel_samples ? config.kernel_samples : 2 * m + 256;
  out.target = "probability";
  out.method = exact ? "exact" : "kernel";

  const Vector base = background_mean_output(predict, background);
  const Matrix fx = predict(X);
  const std::size_t k_out = std::size_t(fx.cols());
  out.shap.resize(k_out);
  for (std::size_t k = 0; k < k_out; ++k) {
    out.shap[k].feature_names = names;
    out.shap[k].base_value = base[Eigen::Index(k)];
    out.shap[k].outputs = fx.col(Eigen::Index(k));
    out.shap[k].values.resize(X.rows(), X.cols());
  }
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const Vector x = X.row(i).transpose();
    const Matrix phi = exact ? exact_shap(predict, x, background)
                             : kernel_shap(predict, x, background, samples,
                                           derive_seed(config.seed, 1000 + std::uint64_t(i)));
    for (std::size_t k = 0; k < k_out; ++k) out.shap[k].values.row(i) = phi.col(Eigen::Index(k)).transpose();
  }
  out.report = aggregate(out.shap);
  return out;
}

}  // namespace classify
