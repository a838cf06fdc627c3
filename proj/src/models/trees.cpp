#include "classify/models/trees.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>

#include "classify/error.hpp"
#include "json_util.hpp"

namespace classify::trees {

namespace {

/// Midpoint between two distinct sorted values that stays strictly below `hi`.
double split_point(double lo, double hi) {
  const double mid = lo + (hi - lo) / 2.0;
  return mid < hi ? mid : lo;
}

std::int32_t add_leaf(Tree& tree, std::span<const double> value) {
  Tree::Node node;
  node.value_offset = static_cast<std::int32_t>(tree.values.size());
  tree.values.insert(tree.values.end(), value.begin(), value.end());
  tree.nodes.push_back(node);
  return static_cast<std::int32_t>(tree.nodes.size() - 1);
}

struct SplitChoice {
  bool found = false;
  std::size_t feature = 0;
  double threshold = 0.0;
  double score = -std::numeric_limits<double>::infinity();
};

class ClassificationBuilder {
 public:
  ClassificationBuilder(const Matrix& X, std::span<const int> y, std::size_t n_classes,
                        const ClassificationTreeOptions& options, Rng& rng)
      : X_(X), y_(y), n_classes_(n_classes), options_(options), rng_(rng) {
    tree_.leaf_width = n_classes;
    features_.resize(static_cast<std::size_t>(X.cols()));
    std::iota(features_.begin(), features_.end(), 0);
  }

  Tree build(std::vector<std::size_t> samples) {
    samples_ = std::move(samples);
    grow(0, samples_.size(), 0);
    return std::move(tree_);
  }

 private:
  std::vector<double> class_counts(std::size_t b, std::size_t e) const {
    std::vector<double> counts(n_classes_, 0.0);
    for (std::size_t i = b; i < e; ++i) counts[static_cast<std::size_t>(y_[samples_[i]])] += 1.0;
    return counts;
  }

  std::int32_t grow(std::size_t b, std::size_t e, std::size_t depth) {
    const std::vector<double> counts = class_counts(b, e);
    const double n = static_cast<double>(e - b);
    const bool pure = std::count_if(counts.begin(), counts.end(), [](double c) { return c > 0; }) <= 1;
    const auto make_leaf = [&] {
      std::vector<double> value(counts);
      for (double& v : value) v /= n;
      return add_leaf(tree_, value);
    };
    if (pure || depth >= options_.max_depth || (e - b) < 2 * options_.min_leaf) return make_leaf();

    const SplitChoice choice = best_split(b, e, counts);
    if (!choice.found) return make_leaf();

    const auto mid_it = std::stable_partition(
        samples_.begin() + std::ptrdiff_t(b), samples_.begin() + std::ptrdiff_t(e),
        [&](std::size_t r) { return X_(Eigen::Index(r), Eigen::Index(choice.feature)) <= choice.threshold; });
    const auto mid = static_cast<std::size_t>(mid_it - samples_.begin());

    const auto id = static_cast<std::int32_t>(tree_.nodes.size());
    tree_.nodes.push_back({});
    tree_.nodes[std::size_t(id)].feature = static_cast<std::int32_t>(choice.feature);
    tree_.nodes[std::size_t(id)].threshold = choice.threshold;
    const std::int32_t left = grow(b, mid, depth + 1);
    const std::int32_t right = grow(mid, e, depth + 1);
    tree_.nodes[std::size_t(id)].left = left;
    tree_.nodes[std::size_t(id)].right = right;
    return id;
  }

  /// Maximizes sum_c L_c^2/n_L + sum_c R_c^2/n_R, i.e. minimizes the
  /// weighted Gini impurity of the children.
  SplitChoice best_split(std::size_t b, std::size_t e, const std::vector<double>& total) {
    const std::size_t d = features_.size();
    const std::size_t wanted = options_.max_features == 0 ? d : std::min(options_.max_features, d);
    std::vector<std::size_t> order = features_;
    if (wanted < d) rng_.shuffle(order);

    SplitChoice best;
    std::size_t evaluated = 0;
    std::vector<std::pair<double, int>> column(e - b);
    std::vector<double> left(n_classes_);
    for (std::size_t f : order) {
      if (evaluated >= wanted) break;
      for (std::size_t i = b; i < e; ++i) {
        const std::size_t r = samples_[i];
        column[i - b] = {X_(Eigen::Index(r), Eigen::Index(f)), y_[r]};
      }
      std::sort(column.begin(), column.end(),
                [](const auto& a, const auto& c) { return a.first < c.first; });
      if (column.front().first == column.back().first) continue;
      ++evaluated;

      std::fill(left.begin(), left.end(), 0.0);
      double left_sq = 0.0;
      double right_sq = 0.0;
      for (double c : total) right_sq += c * c;
      const std::size_t n = column.size();
      for (std::size_t i = 0; i + 1 < n; ++i) {
        const auto c = static_cast<std::size_t>(column[i].second);
        const double lc = left[c];
        const double rc = total[c] - lc;
        left_sq += 2.0 * lc + 1.0;
        right_sq += -2.0 * rc + 1.0;
        left[c] = lc + 1.0;
        const std::size_t n_left = i + 1;
        if (column[i].first == column[i + 1].first) continue;
        if (n_left < options_.min_leaf || n - n_left < options_.min_leaf) continue;
        const double score = left_sq / double(n_left) + right_sq / double(n - n_left);
        if (score > best.score || (score == best.score && f < best.feature)) {
          best = {true, f, split_point(column[i].first, column[i + 1].first), score};
        }
      }
    }
    return best;
  }

  const Matrix& X_;
  std::span<const int> y_;
  std::size_t n_classes_;
  ClassificationTreeOptions options_;
  Rng& rng_;
  Tree tree_;
  std::vector<std::size_t> samples_;
  std::vector<std::size_t> features_;
};

class GradientBuilder {
 public:
  GradientBuilder(const Matrix& X, std::span<const double> grad, std::span<const double> hess,
                  const GradientTreeOptions& options)
      : X_(X), grad_(grad), hess_(hess), options_(options) {
    tree_.leaf_width = 1;
  }

  Tree build(std::vector<std::size_t> samples) {
    samples_ = std::move(samples);
    grow(0, samples_.size(), 0);
    return std::move(tree_);
  }

 private:
  double split_h(std::size_t r) const { return options_.unit_hessian_splits ? 1.0 : hess_[r]; }

  std::int32_t grow(std::size_t b, std::size_t e, std::size_t depth) {
    double g = 0.0, h = 0.0;
    for (std::size_t i = b; i < e; ++i) {
      g += grad_[samples_[i]];
      h += hess_[samples_[i]];
    }
    const auto make_leaf = [&] {
      const double den = h + options_.lambda;
      const double value = den > 1e-300 ? -g / den : 0.0;
      return add_leaf(tree_, std::span<const double>(&value, 1));
    };
    if (depth >= options_.max_depth || (e - b) < 2 * options_.min_leaf) return make_leaf();

    const SplitChoice choice = best_split(b, e);
    if (!choice.found) return make_leaf();

    const auto mid_it = std::stable_partition(
        samples_.begin() + std::ptrdiff_t(b), samples_.begin() + std::ptrdiff_t(e),
        [&](std::size_t r) { return X_(Eigen::Index(r), Eigen::Index(choice.feature)) <= choice.threshold; });
    const auto mid = static_cast<std::size_t>(mid_it - samples_.begin());

    const auto id = static_cast<std::int32_t>(tree_.nodes.size());
    tree_.nodes.push_back({});
    tree_.nodes[std::size_t(id)].feature = static_cast<std::int32_t>(choice.feature);
    tree_.nodes[std::size_t(id)].threshold = choice.threshold;
    const std::int32_t left = grow(b, mid, depth + 1);
    const std::int32_t right = grow(mid, e, depth + 1);
    tree_.nodes[std::size_t(id)].left = left;
    tree_.nodes[std::size_t(id)].right = right;
    return id;
  }

  SplitChoice best_split(std::size_t b, std::size_t e) {
    struct Entry {
      double x, g, hs, h;
    };
    const double lambda = options_.lambda;
    double g_total = 0.0, hs_total = 0.0, h_total = 0.0;
    std::vector<Entry> column(e - b);
    for (std::size_t i = b; i < e; ++i) {
      const std::size_t r = samples_[i];
      g_total += grad_[r];
      hs_total += split_h(r);
      h_total += hess_[r];
    }
    const double parent = g_total * g_total / (hs_total + lambda);

    SplitChoice best;
    best.score = 1e-12;
    for (std::size_t f = 0; f < static_cast<std::size_t>(X_.cols()); ++f) {
      for (std::size_t i = b; i < e; ++i) {
        const std::size_t r = samples_[i];
        column[i - b] = {X_(Eigen::Index(r), Eigen::Index(f)), grad_[r], split_h(r), hess_[r]};
      }
      std::sort(column.begin(), column.end(), [](const Entry& a, const Entry& c) { return a.x < c.x; });
      if (column.front().x == column.back().x) continue;
      double gl = 0.0, hsl = 0.0, hl = 0.0;
      const std::size_t n = column.size();
      for (std::size_t i = 0; i + 1 < n; ++i) {
        gl += column[i].g;
        hsl += column[i].hs;
        hl += column[i].h;
        if (column[i].x == column[i + 1].x) continue;
        const std::size_t n_left = i + 1;
        if (n_left < options_.min_leaf || n - n_left < options_.min_leaf) continue;
        if (hl < options_.min_child_hessian || h_total - hl < options_.min_child_hessian) continue;
        const double gr = g_total - gl;
        const double hsr = hs_total - hsl;
        const double gain = gl * gl / (hsl + lambda) + gr * gr / (hsr + lambda) - parent;
        if (gain > best.score) best = {true, f, split_point(column[i].x, column[i + 1].x), gain};
      }
    }
    return best;
  }

  const Matrix& X_;
  std::span<const double> grad_;
  std::span<const double> hess_;
  GradientTreeOptions options_;
  Tree tree_;
  std::vector<std::size_t> samples_;
};

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double ez = std::exp(z);
  return ez / (1.0 + ez);
}

}  // namespace

const double* Tree::leaf_for(const double* row) const {
  std::size_t id = 0;
  while (nodes[id].left >= 0) {
    const Node& n = nodes[id];
    id = static_cast<std::size_t>(row[n.feature] <= n.threshold ? n.left : n.right);
  }
  return values.data() + nodes[id].value_offset;
}

std::size_t Tree::depth() const {
  std::vector<std::size_t> level(nodes.size(), 0);
  std::size_t deepest = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    deepest = std::max(deepest, level[i]);
    if (nodes[i].left >= 0) {
      level[std::size_t(nodes[i].left)] = level[i] + 1;
      level[std::size_t(nodes[i].right)] = level[i] + 1;
    }
  }
  return deepest;
}

std::size_t Tree::leaf_count() const {
  return static_cast<std::size_t>(
      std::count_if(nodes.begin(), nodes.end(), [](const Node& n) { return n.left < 0; }));
}

nlohmann::json Tree::to_json() const {
  nlohmann::json feature = nlohmann::json::array(), threshold = nlohmann::json::array(),
                 left = nlohmann::json::array(), right = nlohmann::json::array(),
                 offset = nlohmann::json::array();
  for (const Node& n : nodes) {
    feature.push_back(n.feature);
    threshold.push_back(n.threshold);
    left.push_back(n.left);
    right.push_back(n.right);
    offset.push_back(n.value_offset);
  }
  return {{"leaf_width", leaf_width}, {"feature", feature},     {"threshold", threshold},
          {"left", left},             {"right", right},         {"value_offset", offset},
          {"values", values}};
}

Tree Tree::from_json(const nlohmann::json& doc) {
  Tree t;
  t.leaf_width = doc.at("leaf_width").get<std::size_t>();
  t.values = doc.at("values").get<std::vector<double>>();
  const auto& feature = doc.at("feature");
  t.nodes.resize(feature.size());
  for (std::size_t i = 0; i < t.nodes.size(); ++i) {
    t.nodes[i].feature = feature[i].get<std::int32_t>();
    t.nodes[i].threshold = doc.at("threshold")[i].get<double>();
    t.nodes[i].left = doc.at("left")[i].get<std::int32_t>();
    t.nodes[i].right = doc.at("right")[i].get<std::int32_t>();
    t.nodes[i].value_offset = doc.at("value_offset")[i].get<std::int32_t>();
  }
  return t;
}

Tree grow_classification_tree(const Matrix& X, std::span<const int> y, std::size_t n_classes,
                              std::span<const std::size_t> samples,
                              const ClassificationTreeOptions& options, Rng& rng) {
  ClassificationBuilder builder(X, y, n_classes, options, rng);
  return builder.build(std::vector<std::size_t>(samples.begin(), samples.end()));
}

Tree grow_gradient_tree(const Matrix& X, std::span<const double> grad, std::span<const double> hess,
                        std::span<const std::size_t> samples, const GradientTreeOptions& options) {
  GradientBuilder builder(X, grad, hess, options);
  return builder.build(std::vector<std::size_t>(samples.begin(), samples.end()));
}

BinMapper BinMapper::fit(const Matrix& X, std::size_t max_bins) {
  max_bins = std::clamp<std::size_t>(max_bins, 2, 255);
  BinMapper mapper;
  mapper.edges.resize(static_cast<std::size_t>(X.cols()));
  std::vector<double> col(static_cast<std::size_t>(X.rows()));
  for (Eigen::Index f = 0; f < X.cols(); ++f) {
    for (Eigen::Index i = 0; i < X.rows(); ++i) col[std::size_t(i)] = X(i, f);
    std::sort(col.begin(), col.end());
    std::vector<double> distinct(col);
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    auto& edges = mapper.edges[std::size_t(f)];
    if (distinct.size() <= max_bins) {
      for (std::size_t k = 0; k + 1 < distinct.size(); ++k) {
        edges.push_back(split_point(distinct[k], distinct[k + 1]));
      }
    } else {
      const std::size_t n = col.size();
      for (std::size_t k = 1; k < max_bins; ++k) {
        const double q = col[k * n / max_bins];
        if (q < col.back() && (edges.empty() || q > edges.back())) edges.push_back(q);
      }
    }
  }
  return mapper;
}

std::uint8_t BinMapper::bin(std::size_t feature, double x) const {
  const auto& e = edges[feature];
  return static_cast<std::uint8_t>(std::lower_bound(e.begin(), e.end(), x) - e.begin());
}

Tree grow_histogram_tree(const std::vector<std::uint8_t>& binned, std::size_t n_features,
                         const BinMapper& mapper, std::span<const double> grad,
                         std::span<const double> hess, std::span<const std::size_t> samples,
                         const HistogramTreeOptions& options) {
  struct Candidate {
    bool found = false;
    std::size_t feature = 0;
    std::size_t bin = 0;
    double gain = 0.0;
  };
  struct Leaf {
    std::size_t node;
    std::size_t b, e;
    std::size_t depth;
    double g, h;
    Candidate split;
  };

  std::vector<std::size_t> rows(samples.begin(), samples.end());
  const double lambda = options.lambda;
  Tree tree;
  tree.leaf_width = 1;

  const auto evaluate = [&](Leaf& leaf) {
    leaf.split = {};
    if (leaf.depth >= options.max_depth || leaf.e - leaf.b < 2 * options.min_leaf) return;
    const double parent = leaf.g * leaf.g / (leaf.h + lambda);
    std::vector<double> hg, hh;
    std::vector<std::size_t> hc;
    for (std::size_t f = 0; f < n_features; ++f) {
      const std::size_t nb = mapper.n_bins(f);
      if (nb < 2) continue;
      hg.assign(nb, 0.0);
      hh.assign(nb, 0.0);
      hc.assign(nb, 0);
      for (std::size_t i = leaf.b; i < leaf.e; ++i) {
        const std::size_t r = rows[i];
        const std::size_t bin = binned[r * n_features + f];
        hg[bin] += grad[r];
        hh[bin] += hess[r];
        ++hc[bin];
      }
      double gl = 0.0, hl = 0.0;
      std::size_t cl = 0;
      const std::size_t n = leaf.e - leaf.b;
      for (std::size_t bin = 0; bin + 1 < nb; ++bin) {
        gl += hg[bin];
        hl += hh[bin];
        cl += hc[bin];
        if (cl < options.min_leaf || n - cl < options.min_leaf) continue;
        const double hr = leaf.h - hl;
        if (hl < options.min_child_hessian || hr < options.min_child_hessian) continue;
        const double gr = leaf.g - gl;
        const double gain = gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - parent;
        if (gain > 1e-12 && (!leaf.split.found || gain > leaf.split.gain)) {
          leaf.split = {true, f, bin, gain};
        }
      }
    }
  };

  const auto make_leaf = [&](std::size_t b, std::size_t e, std::size_t depth) {
    Leaf leaf{tree.nodes.size(), b, e, depth, 0.0, 0.0, {}};
    for (std::size_t i = b; i < e; ++i) {
      leaf.g += grad[rows[i]];
      leaf.h += hess[rows[i]];
    }
    tree.nodes.push_back({});
    evaluate(leaf);
    return leaf;
  };

  std::vector<Leaf> open;
  std::vector<Leaf> closed;
  open.push_back(make_leaf(0, rows.size(), 0));
  std::size_t n_leaves = 1;
  while (n_leaves < options.max_leaves) {
    auto it = std::max_element(open.begin(), open.end(), [](const Leaf& a, const Leaf& b) {
      if (a.split.found != b.split.found) return !a.split.found;
      if (a.split.gain != b.split.gain) return a.split.gain < b.split.gain;
      return a.node > b.node;
    });
    if (it == open.end() || !it->split.found) break;
    Leaf leaf = *it;
    open.erase(it);
    const std::size_t f = leaf.split.feature;
    const std::size_t cut = leaf.split.bin;
    const auto mid_it = std::stable_partition(
        rows.begin() + std::ptrdiff_t(leaf.b), rows.begin() + std::ptrdiff_t(leaf.e),
        [&](std::size_t r) { return binned[r * n_features + f] <= cut; });
    const auto mid = static_cast<std::size_t>(mid_it - rows.begin());
    Leaf left = make_leaf(leaf.b, mid, leaf.depth + 1);
    Leaf right = make_leaf(mid, leaf.e, leaf.depth + 1);
    auto& node = tree.nodes[leaf.node];
    node.feature = static_cast<std::int32_t>(f);
    node.threshold = mapper.edges[f][cut];
    node.left = static_cast<std::int32_t>(left.node);
    node.right = static_cast<std::int32_t>(right.node);
    open.push_back(std::move(left));
    open.push_back(std::move(right));
    ++n_leaves;
  }
  for (const Leaf& leaf : open) closed.push_back(leaf);
  for (const Leaf& leaf : closed) {
    const double den = leaf.h + lambda;
    tree.nodes[leaf.node].value_offset = static_cast<std::int32_t>(tree.values.size());
    tree.values.push_back(den > 1e-300 ? -leaf.g / den : 0.0);
  }
  return tree;
}

Matrix TreeEnsemble::predict_proba(const Matrix& X) const {
  Matrix out = Matrix::Zero(X.rows(), Eigen::Index(n_classes_));
  for (const Tree& t : trees_) {
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      const double* v = t.leaf_for(X.row(i).data());
      for (std::size_t c = 0; c < n_classes_; ++c) out(i, Eigen::Index(c)) += v[c];
    }
  }
  out /= static_cast<double>(trees_.size());
  return out;
}

Matrix TreeEnsemble::member_proba(std::size_t t, const Matrix& X) const {
  Matrix out(X.rows(), Eigen::Index(n_classes_));
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const double* v = trees_.at(t).leaf_for(X.row(i).data());
    for (std::size_t c = 0; c < n_classes_; ++c) out(i, Eigen::Index(c)) = v[c];
  }
  return out;
}

nlohmann::json TreeEnsemble::to_json() const {
  nlohmann::json trees = nlohmann::json::array();
  for (const Tree& t : trees_) trees.push_back(t.to_json());
  return {{"type", "tree_ensemble"}, {"n_classes", n_classes_}, {"trees", trees}};
}

std::unique_ptr<TreeEnsemble> TreeEnsemble::from_json(const nlohmann::json& doc) {
  std::vector<Tree> trees;
  for (const auto& t : doc.at("trees")) trees.push_back(Tree::from_json(t));
  return std::make_unique<TreeEnsemble>(doc.at("n_classes").get<std::size_t>(), std::move(trees));
}

std::unique_ptr<TreeEnsemble> fit_ensemble(const Matrix& X, std::span<const int> y,
                                           std::size_t n_classes, const EnsembleOptions& options,
                                           std::uint64_t seed) {
  const std::size_t n = static_cast<std::size_t>(X.rows());
  const std::size_t m = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(options.sample_fraction * static_cast<double>(n))));
  std::vector<Tree> trees;
  trees.reserve(options.n_trees);
  std::vector<std::size_t> samples;
  for (std::size_t t = 0; t < options.n_trees; ++t) {
    Rng rng(derive_seed(seed, t));
    samples.clear();
    if (options.bootstrap) {
      for (std::size_t k = 0; k < m; ++k) samples.push_back(rng.index(n));
    } else {
      samples.resize(n);
      std::iota(samples.begin(), samples.end(), 0);
      if (m < n) {
        rng.shuffle(samples);
        samples.resize(m);
      }
    }
    std::sort(samples.begin(), samples.end());
    trees.push_back(grow_classification_tree(X, y, n_classes, samples, options.tree, rng));
  }
  return std::make_unique<TreeEnsemble>(n_classes, std::move(trees));
}

Vector BoostedTrees::decision_function(const Matrix& X) const {
  Vector f = Vector::Constant(X.rows(), base_score_);
  for (const Tree& t : trees_) {
    for (Eigen::Index i = 0; i < X.rows(); ++i) f[i] += *t.leaf_for(X.row(i).data());
  }
  return f;
}

Matrix BoostedTrees::predict_proba(const Matrix& X) const {
  const Vector f = decision_function(X);
  Matrix out(X.rows(), 2);
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const double p = sigmoid(f[i]);
    out(i, 1) = p;
    out(i, 0) = 1.0 - p;
  }
  return out;
}

nlohmann::json BoostedTrees::to_json() const {
  nlohmann::json trees = nlohmann::json::array();
  for (const Tree& t : trees_) trees.push_back(t.to_json());
  return {{"type", "boosted_trees"}, {"base_score", base_score_}, {"trees", trees}};
}

std::unique_ptr<BoostedTrees> BoostedTrees::from_json(const nlohmann::json& doc) {
  auto out = std::make_unique<BoostedTrees>(doc.at("base_score").get<double>());
  for (const auto& t : doc.at("trees")) out->add_tree(Tree::from_json(t));
  return out;
}

void fit_boosting(BoostedTrees& model, const Matrix& X, std::span<const int> y,
                  const BoostingOptions& options, std::uint64_t seed, const RoundCallback& on_round) {
  const std::size_t n = static_cast<std::size_t>(X.rows());
  double positives = 0.0;
  for (int v : y) positives += v == 1 ? 1.0 : 0.0;
  const double prior = std::clamp(positives / static_cast<double>(n), 1e-6, 1.0 - 1e-6);
  model.set_base_score(std::log(prior / (1.0 - prior)));

  BinMapper mapper;
  std::vector<std::uint8_t> binned;
  const std::size_t d = static_cast<std::size_t>(X.cols());
  if (options.flavor == BoostingFlavor::histogram) {
    mapper = BinMapper::fit(X, options.max_bins);
    binned.resize(n * d);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t f = 0; f < d; ++f) binned[i * d + f] = mapper.bin(f, X(Eigen::Index(i), Eigen::Index(f)));
    }
  }

  std::vector<double> score(n, model.base_score());
  std::vector<double> grad(n), hess(n);
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), 0);
  const std::size_t n_sub = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(options.subsample * static_cast<double>(n))));

  for (std::size_t round = 0; round < options.n_rounds; ++round) {
    for (std::size_t i = 0; i < n; ++i) {
      const double p = sigmoid(score[i]);
      grad[i] = p - (y[i] == 1 ? 1.0 : 0.0);
      hess[i] = std::max(p * (1.0 - p), 1e-16);
    }
    std::vector<std::size_t> samples = all;
    if (n_sub < n) {
      Rng rng(derive_seed(seed, round));
      rng.shuffle(samples);
      samples.resize(n_sub);
      std::sort(samples.begin(), samples.end());
    }

    Tree tree;
    switch (options.flavor) {
      case BoostingFlavor::classic:
        tree = grow_gradient_tree(X, grad, hess, samples,
                                  {options.max_depth, options.min_leaf, 0.0, 0.0, true});
        break;
      case BoostingFlavor::regularized:
        tree = grow_gradient_tree(X, grad, hess, samples,
                                  {options.max_depth, options.min_leaf, options.lambda,
                                   options.min_child_hessian, false});
        break;
      case BoostingFlavor::histogram:
        tree = grow_histogram_tree(binned, d, mapper, grad, hess, samples,
                                   {options.max_depth, options.max_leaves, options.min_leaf,
                                    options.lambda, options.min_child_hessian});
        break;
    }
    for (double& v : tree.values) v *= options.learning_rate;
    for (std::size_t i = 0; i < n; ++i) score[i] += *tree.leaf_for(X.row(Eigen::Index(i)).data());
    model.add_tree(std::move(tree));

    const std::size_t done = round + 1;
    if (on_round && (done % options.report_every == 0 || done == options.n_rounds)) {
      if (on_round(done)) break;
    }
  }
}

double logistic_loss(const BoostedTrees& model, const Matrix& X, std::span<const int> y) {
  const Vector f = model.decision_function(X);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < f.size(); ++i) {
    const double z = y[std::size_t(i)] == 1 ? f[i] : -f[i];
    loss += z > 0 ? std::log1p(std::exp(-z)) : -z + std::log1p(std::exp(z));
  }
  return loss / static_cast<double>(f.size());
}

}  // namespace classify::trees
