#include "classify/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <boost/math/distributions/normal.hpp>

#include "classify/error.hpp"
#include "classify/rng.hpp"
#include "json_util.hpp"

namespace classify {

// ---- soft impute ------------------------------------------------------------

void ImputeConfig::validate() const {
  if (!(tol > 0.0)) throw Error(ErrorCode::InvalidSpec, "impute tol must be positive");
  if (lambda && !(*lambda >= 0.0)) throw Error(ErrorCode::InvalidSpec, "impute lambda must be >= 0");
  if (max_iter == 0) throw Error(ErrorCode::InvalidSpec, "impute max_iter must be positive");
  if (path_length == 0) throw Error(ErrorCode::InvalidSpec, "impute path_length must be positive");
}

nlohmann::json ImputeConfig::to_json() const {
  nlohmann::json j = {{"max_iter", max_iter},
                      {"tol", tol},
                      {"rank_cap", rank_cap},
                      {"path_length", path_length}};
  j["lambda"] = lambda ? nlohmann::json(*lambda) : nlohmann::json(nullptr);
  return j;
}

namespace {

struct Shrunk {
  Matrix z;
  double nuclear = 0.0;
};

Shrunk svd_shrink(const Matrix& y, double lambda, std::size_t rank_cap) {
  Eigen::BDCSVD<Eigen::MatrixXd> svd(y, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();
  Vector kept = Vector::Zero(s.size());
  for (Eigen::Index i = 0; i < s.size() && std::size_t(i) < rank_cap; ++i) {
    kept[i] = std::max(0.0, s[i] - lambda);
  }
  Shrunk out;
  out.z = svd.matrixU() * kept.asDiagonal() * svd.matrixV().transpose();
  out.nuclear = kept.sum();
  return out;
}

double largest_singular_value(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::BDCSVD<Eigen::MatrixXd> svd(m);
  return svd.singularValues()[0];
}

}  // namespace

ImputeResult soft_impute_detailed(const Matrix& X, const ImputeConfig& config) {
  config.validate();
  const Eigen::Index n = X.rows(), d = X.cols();
  Vector means = Vector::Zero(d);
  bool any_missing = false;
  for (Eigen::Index j = 0; j < d; ++j) {
    double sum = 0.0;
    std::size_t seen = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (std::isnan(X(i, j))) {
        any_missing = true;
      } else {
        sum += X(i, j);
        ++seen;
      }
    }
    if (seen == 0) {
      throw Error(ErrorCode::EmptyColumn, "column " + std::to_string(j) + " has no observed value");
    }
    means[j] = sum / double(seen);
  }
  Matrix filled = X;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) {
      if (std::isnan(filled(i, j))) filled(i, j) = means[j];
    }
  }

  ImputeResult out;
  const double top = largest_singular_value(filled);
  out.lambda = config.lambda.value_or(0.1 * top);
  const std::size_t rank_cap =
      config.rank_cap ? config.rank_cap : std::size_t(std::min(n, d));
  if (!any_missing) {
    out.completed = X;
    out.low_rank = svd_shrink(X, out.lambda, rank_cap).z;
    out.converged = true;
    return out;
  }

  std::vector<double> path;
  if (config.path_length > 1 && out.lambda > 0.0 && out.lambda < top) {
    const double ratio = out.lambda / top;
    for (std::size_t k = 1; k < config.path_length; ++k) {
      path.push_back(top * std::pow(ratio, double(k) / double(config.path_length)));
    }
  }
  path.push_back(out.lambda);

  Matrix z = filled;
  for (std::size_t stage = 0; stage < path.size(); ++stage) {
    const double lambda = path[stage];
    const bool last = stage + 1 == path.size();
    bool converged = false;
    for (std::size_t it = 0; it < config.max_iter; ++it) {
      Matrix y = X;
      for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < d; ++j) {
          if (std::isnan(y(i, j))) y(i, j) = z(i, j);
        }
      }
      Shrunk next = svd_shrink(y, lambda, rank_cap);
      const double denom = std::max(z.norm(), 1e-300);
      const double change = (next.z - z).norm() / denom;
      z = std::move(next.z);
      ++out.iterations;
      if (last) {
        double fit = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
          for (Eigen::Index j = 0; j < d; ++j) {
            if (!std::isnan(X(i, j))) fit += (X(i, j) - z(i, j)) * (X(i, j) - z(i, j));
          }
        }
        out.objective.push_back(0.5 * fit + lambda * next.nuclear);
      }
      if (change < config.tol) {
        converged = true;
        break;
      }
    }
    if (last) out.converged = converged;
  }

  out.completed = X;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) {
      if (std::isnan(X(i, j))) out.completed(i, j) = z(i, j);
    }
  }
  out.low_rank = std::move(z);
  return out;
}

Matrix soft_impute(const Matrix& X, const ImputeConfig& config) {
  return soft_impute_detailed(X, config).completed;
}

// ---- dataset imputer ---------------------------------------------------------

Matrix DatasetImputer::encode(const FeatureTable& features) const {
  const std::size_t n = features.n_rows();
  Matrix out = Matrix::Constant(Eigen::Index(n), Eigen::Index(width_), kMissing);
  for (const Block& b : blocks_) {
    const Column& col = features.column(b.column);
    for (std::size_t i = 0; i < n; ++i) {
      const double v = col.values[i];
      if (is_missing(v)) continue;
      if (col.type == ColumnType::categorical) {
        for (std::size_t k = 0; k < b.width; ++k) {
          out(Eigen::Index(i), Eigen::Index(b.first + k)) = 0.0 - column_means_[Eigen::Index(b.first + k)];
        }
        const std::size_t code = std::size_t(v);
        if (code < b.width) out(Eigen::Index(i), Eigen::Index(b.first + code)) += 1.0;
      } else {
        out(Eigen::Index(i), Eigen::Index(b.first)) = (v - b.mean) / b.scale;
      }
    }
  }
  return out;
}

void DatasetImputer::decode_into(const Matrix& filled, Dataset& out) const {
  for (const Block& b : blocks_) {
    Column& col = out.features.column(b.column);
    for (std::size_t i = 0; i < col.values.size(); ++i) {
      if (!is_missing(col.values[i])) continue;
      const auto r = Eigen::Index(i);
      if (col.type == ColumnType::categorical) {
        std::size_t best = 0;
        double best_v = -INFINITY;
        for (std::size_t k = 0; k < b.width; ++k) {
          const double v = filled(r, Eigen::Index(b.first + k)) + column_means_[Eigen::Index(b.first + k)];
          if (v > best_v) {
            best_v = v;
            best = k;
          }
        }
        col.values[i] = double(best);
      } else {
        const double v = filled(r, Eigen::Index(b.first)) * b.scale + b.mean;
        col.values[i] = col.type == ColumnType::boolean ? (v >= 0.5 ? 1.0 : 0.0) : v;
      }
    }
  }
}

Dataset DatasetImputer::fit_transform(const Dataset& train, const ImputeConfig& config) {
  blocks_.clear();
  names_ = train.features.names();
  width_ = 0;
  std::vector<double> means;
  for (std::size_t c = 0; c < train.features.n_columns(); ++c) {
    const Column& col = train.features.column(c);
    Block b{c, width_, 1};
    if (col.type == ColumnType::categorical) {
      b.width = std::max<std::size_t>(1, col.categories.size());
      std::vector<double> freq(b.width, 0.0);
      std::size_t seen = 0;
      for (double v : col.values) {
        if (is_missing(v)) continue;
        ++seen;
        if (std::size_t(v) < b.width) freq[std::size_t(v)] += 1.0;
      }
      if (seen == 0) throw Error(ErrorCode::EmptyColumn, "column '" + col.name + "' has no observed value");
      for (double f : freq) means.push_back(f / double(seen));
    } else {
      double sum = 0.0, sq = 0.0;
      std::size_t seen = 0;
      for (double v : col.values) {
        if (is_missing(v)) continue;
        sum += v;
        ++seen;
      }
      if (seen == 0) throw Error(ErrorCode::EmptyColumn, "column '" + col.name + "' has no observed value");
      b.mean = sum / double(seen);
      for (double v : col.values) {
        if (!is_missing(v)) sq += (v - b.mean) * (v - b.mean);
      }
      const double sd = std::sqrt(sq / double(seen));
      b.scale = sd > 0.0 ? sd : 1.0;
      means.push_back(0.0);
    }
    width_ += b.width;
    blocks_.push_back(b);
  }
  column_means_ = Eigen::Map<const Vector>(means.data(), Eigen::Index(means.size()));

  const Matrix encoded = encode(train.features);
  const ImputeResult r = soft_impute_detailed(encoded, config);
  lambda_ = r.lambda;
  // Row space of the low-rank fit, scaled by its singular values.
  Eigen::BDCSVD<Eigen::MatrixXd> svd(r.low_rank, Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();
  Eigen::Index rank = 0;
  while (rank < s.size() && s[rank] > 1e-10 * std::max(1.0, s[0])) ++rank;
  basis_ = (svd.matrixV().leftCols(rank) * s.head(rank).asDiagonal()).transpose();
  fitted_ = true;

  Dataset out = train;
  decode_into(r.completed, out);
  return out;
}

Dataset DatasetImputer::transform(const Dataset& rows) const {
  if (!fitted_) throw Error(ErrorCode::Internal, "imputer used before fitting");
  if (rows.features.names() != names_) {
    throw Error(ErrorCode::SchemaMismatch, "imputer applied to a different feature schema");
  }
  if (!rows.features.has_missing()) return rows;
  Matrix encoded = encode(rows.features);
  const Eigen::Index rank = basis_.rows();
  for (Eigen::Index i = 0; i < encoded.rows(); ++i) {
    std::vector<Eigen::Index> seen, gone;
    for (Eigen::Index j = 0; j < encoded.cols(); ++j) {
      (std::isnan(encoded(i, j)) ? gone : seen).push_back(j);
    }
    if (gone.empty()) continue;
    Vector coef = Vector::Zero(rank);
    if (rank > 0 && !seen.empty()) {
      Matrix b(rank, Eigen::Index(seen.size()));
      Vector x(static_cast<Eigen::Index>(seen.size()));
      for (std::size_t k = 0; k < seen.size(); ++k) {
        b.col(Eigen::Index(k)) = basis_.col(seen[k]);
        x[Eigen::Index(k)] = encoded(i, seen[k]);
      }
      // Small ridge keeps rows with few observed cells well posed.
      Matrix gram = b * b.transpose();
      gram.diagonal().array() += 1e-8 * std::max(1.0, gram.diagonal().maxCoeff());
      coef = gram.ldlt().solve(b * x);
    }
    for (Eigen::Index j : gone) encoded(i, j) = rank > 0 ? basis_.col(j).dot(coef) : 0.0;
  }
  Dataset out = rows;
  decode_into(encoded, out);
  return out;
}

// ---- copula ------------------------------------------------------------------

namespace {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double normal_quantile(double u) {
  static const boost::math::normal_distribution<double> standard;
  return boost::math::quantile(standard, u);
}

}  // namespace

double Marginal::to_uniform(double value) const {
  if (type == ColumnType::numerical) {
    const double n = double(sorted.size());
    const auto lo = std::lower_bound(sorted.begin(), sorted.end(), value) - sorted.begin();
    const auto hi = std::upper_bound(sorted.begin(), sorted.end(), value) - sorted.begin();
    // Mid-rank; clamped for values outside the fitted sample.
    const double u = 0.5 * double(lo + hi) / n;
    return std::clamp(u, 0.5 / n, 1.0 - 0.5 / n);
  }
  const std::size_t k = std::size_t(value);
  const double below = k == 0 ? 0.0 : cumulative[k - 1];
  return 0.5 * (below + cumulative[k]);
}

double Marginal::from_uniform(double u) const {
  if (type == ColumnType::numerical) {
    const double pos = std::clamp(u * double(sorted.size()) - 0.5, 0.0, double(sorted.size() - 1));
    const auto lo = std::size_t(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double t = pos - double(lo);
    return std::clamp(sorted[lo] + t * (sorted[hi] - sorted[lo]), sorted.front(), sorted.back());
  }
  auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
  std::size_t k = std::size_t(it - cumulative.begin());
  if (k >= cumulative.size()) {
    // u rounded up to 1: take the last code that actually occurs.
    k = cumulative.size() - 1;
    while (k > 0 && cumulative[k] == cumulative[k - 1]) --k;
  }
  return double(k);
}

Matrix nearest_correlation(const Matrix& m) {
  const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym);
  const Vector clipped = eig.eigenvalues().cwiseMax(0.0);
  Eigen::MatrixXd psd = eig.eigenvectors() * clipped.asDiagonal() * eig.eigenvectors().transpose();
  for (Eigen::Index i = 0; i < psd.rows(); ++i) {
    if (!(psd(i, i) > 1e-12)) {
      psd.row(i).setZero();
      psd.col(i).setZero();
      psd(i, i) = 1.0;
    }
  }
  const Vector inv = psd.diagonal().cwiseSqrt().cwiseInverse();
  Matrix out = inv.asDiagonal() * psd * inv.asDiagonal();
  out = 0.5 * (out + out.transpose()).eval();
  out.diagonal().setOnes();
  return out;
}

const ClassCopula& CopulaModel::for_class(int label) const {
  for (const auto& c : classes) {
    if (c.label == label) return c;
  }
  throw Error(ErrorCode::UnknownClass, "no copula fitted for class code " + std::to_string(label));
}

nlohmann::json CopulaModel::to_json() const {
  nlohmann::json cls = nlohmann::json::array();
  for (const auto& c : classes) {
    cls.push_back({{"label", class_names[std::size_t(c.label)]},
                   {"n_rows", c.n_rows},
                   {"correlation", detail::matrix_to_json(c.correlation)}});
  }
  std::vector<std::string> names;
  for (const auto& col : schema) names.push_back(col.name);
  return {{"synthesizer", kDefaultSynthesizer}, {"features", names}, {"classes", cls}};
}

CopulaModel fit_copula(const Dataset& ds, const DatasetMeta& meta) {
  if (ds.features.has_missing()) {
    throw Error(ErrorCode::MissingValuesPresent, "copula fitting needs complete rows");
  }
  CopulaModel model;
  model.meta = meta;
  model.class_names = ds.class_names;
  for (const Column& c : ds.features.columns()) {
    Column s;
    s.name = c.name;
    s.type = c.type;
    s.categories = c.categories;
    model.schema.push_back(std::move(s));
  }
  const std::size_t d = model.schema.size();
  const std::vector<std::size_t> counts = ds.class_counts();
  for (std::size_t label = 0; label < ds.n_classes(); ++label) {
    if (counts[label] < 5) {
      throw Error(ErrorCode::ClassTooSmall, "class '" + ds.class_names[label] + "' has " +
                                                std::to_string(counts[label]) +
                                                " rows; at least 5 are needed");
    }
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < ds.n_rows(); ++i) {
      if (ds.labels[i] == int(label)) rows.push_back(i);
    }
    ClassCopula cc;
    cc.label = int(label);
    cc.n_rows = rows.size();
    for (std::size_t j = 0; j < d; ++j) {
      const Column& col = ds.features.column(j);
      Marginal m;
      m.type = col.type == ColumnType::numerical ? ColumnType::numerical : col.type;
      if (m.type == ColumnType::numerical) {
        for (std::size_t i : rows) m.sorted.push_back(col.values[i]);
        std::sort(m.sorted.begin(), m.sorted.end());
      } else {
        const std::size_t k = col.type == ColumnType::boolean ? 2 : std::max<std::size_t>(1, col.categories.size());
        std::vector<double> freq(k, 0.0);
        for (std::size_t i : rows) freq[std::size_t(col.values[i])] += 1.0;
        double acc = 0.0;
        for (double f : freq) {
          acc += f / double(rows.size());
          m.cumulative.push_back(acc);
        }
        m.cumulative.back() = 1.0;
      }
      cc.marginals.push_back(std::move(m));
    }
    Matrix latent(Eigen::Index(rows.size()), Eigen::Index(d));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      for (std::size_t j = 0; j < d; ++j) {
        latent(Eigen::Index(r), Eigen::Index(j)) =
            normal_quantile(cc.marginals[j].to_uniform(ds.features.column(j).values[rows[r]]));
      }
    }
    Matrix corr = Matrix::Identity(Eigen::Index(d), Eigen::Index(d));
    const Eigen::RowVectorXd mean = latent.colwise().mean();
    const Matrix centered = latent.rowwise() - mean;
    const Vector sd = centered.colwise().norm().transpose();
    for (Eigen::Index a = 0; a < Eigen::Index(d); ++a) {
      for (Eigen::Index b = a + 1; b < Eigen::Index(d); ++b) {
        if (sd[a] <= 1e-12 || sd[b] <= 1e-12) continue;
        const double r = centered.col(a).dot(centered.col(b)) / (sd[a] * sd[b]);
        corr(a, b) = corr(b, a) = std::clamp(r, -1.0, 1.0);
      }
    }
    cc.correlation = nearest_correlation(corr);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig{Eigen::MatrixXd(cc.correlation)};
    cc.factor = eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
    model.classes.push_back(std::move(cc));
  }
  return model;
}

Dataset sample(const CopulaModel& model, int class_label, std::size_t n, std::uint64_t seed,
               const std::string& index_prefix) {
  const ClassCopula& cc = model.for_class(class_label);
  const auto d = Eigen::Index(model.schema.size());
  std::vector<Column> columns = model.schema;
  for (auto& c : columns) c.values.reserve(n);
  Rng rng(seed);
  Vector eps(d);
  Dataset out;
  for (std::size_t i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) eps[j] = rng.normal();
    const Vector z = cc.factor * eps;
    for (Eigen::Index j = 0; j < d; ++j) {
      columns[std::size_t(j)].values.push_back(
          cc.marginals[std::size_t(j)].from_uniform(normal_cdf(z[j])));
    }
    out.index.push_back(index_prefix + std::to_string(i + 1));
    out.labels.push_back(class_label);
  }
  out.class_names = model.class_names;
  out.features = FeatureTable(std::move(columns));
  out.meta = model.meta;
  return out;
}

namespace {

class CopulaSynthesizer final : public Synthesizer {
 public:
  std::string name() const override { return std::string(kDefaultSynthesizer); }
  void fit(const Dataset& ds, const DatasetMeta& meta) override { model_ = fit_copula(ds, meta); }
  Dataset sample(int class_label, std::size_t n, std::uint64_t seed,
                 const std::string& index_prefix) const override {
    return classify::sample(model_, class_label, n, seed, index_prefix);
  }

 private:
  CopulaModel model_;
};

/// A prefix no existing index value starts with.
std::string fresh_prefix(const std::vector<std::string>& index) {
  for (int attempt = 0;; ++attempt) {
    const std::string p = attempt == 0 ? "synthetic-" : "synthetic" + std::to_string(attempt) + "-";
    const bool clash = std::any_of(index.begin(), index.end(),
                                   [&](const std::string& s) { return s.rfind(p, 0) == 0; });
    if (!clash) return p;
  }
}

Dataset empty_like(const Dataset& ds) {
  const std::vector<std::size_t> none;
  return ds.take_rows(none);
}

Dataset sample_counts(const Synthesizer& synth, const Dataset& like,
                      const std::vector<std::size_t>& counts, std::uint64_t seed,
                      const std::string& prefix) {
  Dataset out = empty_like(like);
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] == 0) continue;
    out.append(synth.sample(int(c), counts[c], derive_seed(seed, c), prefix));
  }
  for (std::size_t i = 0; i < out.index.size(); ++i) out.index[i] = prefix + std::to_string(i + 1);
  return out;
}

}  // namespace

std::unique_ptr<Synthesizer> make_synthesizer(std::string_view name) {
  if (name == kDefaultSynthesizer) return std::make_unique<CopulaSynthesizer>();
  throw Error(ErrorCode::InvalidSpec, "unknown synthesizer '" + std::string(name) + "'");
}

std::vector<std::string> synthesizer_names() { return {std::string(kDefaultSynthesizer)}; }

Balanced balance(const Dataset& ds, const DatasetMeta& meta, std::uint64_t seed,
                 std::string_view synthesizer) {
  const std::vector<std::size_t> counts = ds.class_counts();
  const std::size_t majority = counts.empty() ? 0 : *std::max_element(counts.begin(), counts.end());
  std::vector<std::size_t> need(counts.size());
  std::size_t total = 0;
  for (std::size_t c = 0; c < counts.size(); ++c) total += need[c] = majority - counts[c];
  auto synth = make_synthesizer(synthesizer);
  Balanced out{ds, empty_like(ds)};
  if (total == 0) return out;
  synth->fit(ds, meta);
  out.synthetic = sample_counts(*synth, ds, need, seed, fresh_prefix(ds.index));
  out.augmented.append(out.synthetic);
  return out;
}

std::vector<std::size_t> equal_class_counts(std::size_t n_rows, std::size_t n_classes) {
  std::vector<std::size_t> counts(n_classes, n_classes ? n_rows / n_classes : 0);
  for (std::size_t c = 0; n_classes && c < n_rows % n_classes; ++c) ++counts[c];
  return counts;
}

Dataset generate_full(const Dataset& ds, const DatasetMeta& meta, std::uint64_t seed,
                      std::string_view synthesizer) {
  auto synth = make_synthesizer(synthesizer);
  synth->fit(ds, meta);
  return sample_counts(*synth, ds, equal_class_counts(ds.n_rows(), ds.n_classes()), seed,
                       "synthetic-");
}

// ---- quality -----------------------------------------------------------------

nlohmann::json SynthQuality::to_json() const {
  return {{"column_shapes", column_shapes},
          {"column_pair_trends", column_pair_trends},
          {"overall", overall},
          {"per_column", per_column},
          {"per_pair", per_pair}};
}

SynthQuality SynthQuality::from_json(const nlohmann::json& doc) {
  SynthQuality q;
  q.column_shapes = doc.at("column_shapes").get<double>();
  q.column_pair_trends = doc.at("column_pair_trends").get<double>();
  q.overall = doc.at("overall").get<double>();
  q.per_column = doc.at("per_column").get<std::map<std::string, double>>();
  q.per_pair = doc.value("per_pair", std::map<std::string, double>{});
  return q;
}

double ks_statistic(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) return a.empty() && b.empty() ? 0.0 : 1.0;
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double worst = 0.0;
  while (i < a.size() || j < b.size()) {
    double x;
    if (j >= b.size() || (i < a.size() && a[i] <= b[j])) x = a[i];
    else x = b[j];
    while (i < a.size() && a[i] == x) ++i;
    while (j < b.size() && b[j] == x) ++j;
    worst = std::max(worst, std::abs(double(i) / double(a.size()) - double(j) / double(b.size())));
  }
  return worst;
}

namespace {

std::vector<double> observed(const Column& c) {
  std::vector<double> out;
  for (double v : c.values) {
    if (!is_missing(v)) out.push_back(v);
  }
  return out;
}

std::string token_of(const Column& c, double v) {
  if (c.type == ColumnType::categorical) return c.categories[std::size_t(v)];
  return v != 0.0 ? "TRUE" : "FALSE";
}

double total_variation(const std::map<std::string, double>& p, const std::map<std::string, double>& q) {
  double tv = 0.0;
  for (const auto& [k, v] : p) {
    const auto it = q.find(k);
    tv += std::abs(v - (it == q.end() ? 0.0 : it->second));
  }
  for (const auto& [k, v] : q) {
    if (!p.count(k)) tv += v;
  }
  return 0.5 * tv;
}

void normalize(std::map<std::string, double>& m) {
  double total = 0.0;
  for (const auto& [k, v] : m) total += v;
  if (total > 0) {
    for (auto& [k, v] : m) v /= total;
  }
}

/// Decile cut points of the real column; numerical cells are binned by them
/// when paired with a categorical column.
std::vector<double> decile_edges(const Column& real) {
  std::vector<double> v = observed(real);
  std::sort(v.begin(), v.end());
  std::vector<double> edges;
  if (v.empty()) return edges;
  for (int q = 1; q < 10; ++q) {
    const double e = v[std::min(v.size() - 1, std::size_t(double(q) / 10.0 * double(v.size())))];
    if (edges.empty() || e > edges.back()) edges.push_back(e);
  }
  return edges;
}

std::string cell_key(const Column& c, double v, const std::vector<double>& edges) {
  if (c.type != ColumnType::numerical) return token_of(c, v);
  return "bin" + std::to_string(std::upper_bound(edges.begin(), edges.end(), v) - edges.begin());
}

double pearson(const Column& a, const Column& b) {
  double n = 0, sa = 0, sb = 0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    if (is_missing(a.values[i]) || is_missing(b.values[i])) continue;
    n += 1;
    sa += a.values[i];
    sb += b.values[i];
  }
  if (n < 2) return 0.0;
  const double ma = sa / n, mb = sb / n;
  double cab = 0, caa = 0, cbb = 0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    if (is_missing(a.values[i]) || is_missing(b.values[i])) continue;
    const double x = a.values[i] - ma, y = b.values[i] - mb;
    cab += x * y;
    caa += x * x;
    cbb += y * y;
  }
  // A constant column carries no linear trend.
  if (caa <= 0 || cbb <= 0) return 0.0;
  return std::clamp(cab / std::sqrt(caa * cbb), -1.0, 1.0);
}

std::map<std::string, double> joint_table(const Column& a, const Column& b,
                                          const std::vector<double>& ea,
                                          const std::vector<double>& eb) {
  std::map<std::string, double> t;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    if (is_missing(a.values[i]) || is_missing(b.values[i])) continue;
    t[cell_key(a, a.values[i], ea) + '\x1f' + cell_key(b, b.values[i], eb)] += 1.0;
  }
  normalize(t);
  return t;
}

}  // namespace

SynthQuality quality(const Dataset& real, const Dataset& synth, const DatasetMeta& meta) {
  const FeatureTable& R = real.features;
  const FeatureTable& S = synth.features;
  if (R.names() != S.names()) throw Error(ErrorCode::SchemaMismatch, "feature names differ");
  for (std::size_t j = 0; j < R.n_columns(); ++j) {
    const auto declared = meta.type_of(R.column(j).name);
    if (R.column(j).type != S.column(j).type || (declared && *declared != R.column(j).type)) {
      throw Error(ErrorCode::SchemaMismatch, "column '" + R.column(j).name + "' changes type");
    }
  }
  SynthQuality q;
  double shapes = 0.0;
  for (std::size_t j = 0; j < R.n_columns(); ++j) {
    const Column& a = R.column(j);
    const Column& b = S.column(j);
    double score;
    if (a.type == ColumnType::numerical) {
      score = 1.0 - ks_statistic(observed(a), observed(b));
    } else {
      std::map<std::string, double> p, r;
      for (double v : observed(a)) p[token_of(a, v)] += 1.0;
      for (double v : observed(b)) r[token_of(b, v)] += 1.0;
      normalize(p);
      normalize(r);
      score = 1.0 - total_variation(p, r);
    }
    q.per_column[a.name] = score;
    shapes += score;
  }
  q.column_shapes = R.n_columns() ? shapes / double(R.n_columns()) : 1.0;

  double pairs = 0.0;
  std::size_t n_pairs = 0;
  std::vector<std::vector<double>> edges;
  for (const Column& c : R.columns()) edges.push_back(decile_edges(c));
  for (std::size_t i = 0; i < R.n_columns(); ++i) {
    for (std::size_t j = i + 1; j < R.n_columns(); ++j) {
      const Column &ra = R.column(i), &rb = R.column(j);
      const Column &sa = S.column(i), &sb = S.column(j);
      double score;
      if (ra.type == ColumnType::numerical && rb.type == ColumnType::numerical) {
        score = 1.0 - std::abs(pearson(ra, rb) - pearson(sa, sb)) / 2.0;
      } else {
        score = 1.0 - total_variation(joint_table(ra, rb, edges[i], edges[j]),
                                      joint_table(sa, sb, edges[i], edges[j]));
      }
      q.per_pair[ra.name + "|" + rb.name] = score;
      pairs += score;
      ++n_pairs;
    }
  }
  q.column_pair_trends = n_pairs ? pairs / double(n_pairs) : 1.0;
  q.overall = 0.5 * (q.column_shapes + q.column_pair_trends);
  return q;
}

}  // namespace classify
