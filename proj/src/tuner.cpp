#include "classify/tuner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>

#include "classify/error.hpp"
#include "classify/metrics.hpp"

namespace classify {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double to_internal(const ParamRange& r, double v) {
  return r.domain == ParamRange::Domain::real_log ? std::log(v) : v;
}

double from_internal(const ParamRange& r, double t) {
  double v = r.domain == ParamRange::Domain::real_log ? std::exp(t) : t;
  if (r.domain == ParamRange::Domain::integer) v = std::round(v);
  return std::clamp(v, r.lo, r.hi);
}

ParamValue make_value(const ParamRange& r, double v) {
  if (r.domain == ParamRange::Domain::integer) return static_cast<std::int64_t>(std::llround(v));
  return v;
}

std::optional<double> numeric_value(const ParamValue& v) {
  if (const auto* i = std::get_if<std::int64_t>(&v)) return double(*i);
  if (const auto* d = std::get_if<double>(&v)) return *d;
  return std::nullopt;
}

ParamValue sample_uniform(const ParamRange& r, Rng& rng) {
  switch (r.domain) {
    case ParamRange::Domain::integer:
      return rng.uniform_int(std::int64_t(r.lo), std::int64_t(r.hi));
    case ParamRange::Domain::real_linear:
      return r.lo + (r.hi - r.lo) * rng.uniform();
    case ParamRange::Domain::real_log:
      return std::clamp(std::exp(std::log(r.lo) + (std::log(r.hi) - std::log(r.lo)) * rng.uniform()),
                        r.lo, r.hi);
    case ParamRange::Domain::categorical:
      return r.tokens[rng.index(r.tokens.size())];
  }
  return 0.0;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

/// Mixture of Gaussians truncated to [lo, hi], one per observation.
class TruncatedKde {
 public:
  TruncatedKde(std::vector<double> centers, double lo, double hi)
      : centers_(std::move(centers)), lo_(lo), hi_(hi) {
    sigma_ = (hi - lo) / std::sqrt(double(centers_.size()));
    for (double c : centers_) {
      mass_.push_back(std::max(normal_cdf((hi_ - c) / sigma_) - normal_cdf((lo_ - c) / sigma_), 1e-300));
    }
  }

  double sample(Rng& rng) const {
    const double c = centers_[rng.index(centers_.size())];
    for (int attempt = 0; attempt < 100; ++attempt) {
      const double x = c + sigma_ * rng.normal();
      if (x >= lo_ && x <= hi_) return x;
    }
    return std::clamp(c, lo_, hi_);
  }

  double log_density(double x) const {
    double m = kNegInf;
    std::vector<double> terms(centers_.size());
    for (std::size_t k = 0; k < centers_.size(); ++k) {
      const double z = (x - centers_[k]) / sigma_;
      terms[k] = -0.5 * z * z - std::log(mass_[k]);
      m = std::max(m, terms[k]);
    }
    double s = 0.0;
    for (double t : terms) s += std::exp(t - m);
    return m + std::log(s) - std::log(sigma_ * double(centers_.size()));
  }

 private:
  std::vector<double> centers_;
  std::vector<double> mass_;
  double lo_, hi_, sigma_;
};

ParamValue tpe_numeric(const ParamRange& r, const std::vector<double>& good,
                       const std::vector<double>& bad, std::size_t n_candidates, Rng& rng) {
  const double lo = to_internal(r, r.lo), hi = to_internal(r, r.hi);
  const TruncatedKde l(good, lo, hi), g(bad, lo, hi);
  double best_v = 0.0, best_ratio = kNegInf;
  for (std::size_t k = 0; k < n_candidates; ++k) {
    const double v = from_internal(r, l.sample(rng));
    const double t = to_internal(r, v);
    const double ratio = l.log_density(t) - g.log_density(t);
    if (ratio > best_ratio) {
      best_ratio = ratio;
      best_v = v;
    }
  }
  return make_value(r, best_v);
}

ParamValue tpe_categorical(const ParamRange& r, const std::vector<std::size_t>& good,
                           const std::vector<std::size_t>& bad, std::size_t n_candidates, Rng& rng) {
  const std::size_t k = r.tokens.size();
  std::vector<double> pg(k, 1.0), pb(k, 1.0);
  for (std::size_t v : good) pg[v] += 1.0;
  for (std::size_t v : bad) pb[v] += 1.0;
  const double ng = double(good.size() + k), nb = double(bad.size() + k);
  std::size_t best = 0;
  double best_ratio = kNegInf;
  for (std::size_t c = 0; c < n_candidates; ++c) {
    // Draw from the good-set frequencies.
    double u = rng.uniform() * ng;
    std::size_t v = 0;
    while (v + 1 < k && u >= pg[v]) u -= pg[v++];
    const double ratio = std::log(pg[v] / ng) - std::log(pb[v] / nb);
    if (ratio > best_ratio) {
      best_ratio = ratio;
      best = v;
    }
  }
  return r.tokens[best];
}

void check_space(ModelKind kind, const SearchSpace& space) {
  if (space.empty()) throw Error(ErrorCode::EmptySpace, "search space is empty");
  const SearchSpace limits = parameter_limits(kind);
  for (const ParamRange& r : space) {
    r.validate();
    const auto lim = std::find_if(limits.begin(), limits.end(),
                                  [&](const ParamRange& l) { return l.name == r.name; });
    if (lim == limits.end()) {
      throw Error(ErrorCode::UnknownParam,
                  "'" + r.name + "' is not a parameter of " + std::string(to_string(kind)),
                  {std::nullopt, r.name});
    }
    if (lim->domain != r.domain && !(lim->is_numeric() && r.is_numeric() &&
                                     lim->domain != ParamRange::Domain::integer &&
                                     r.domain != ParamRange::Domain::integer)) {
      throw Error(ErrorCode::ParamOutOfRange, "range for '" + r.name + "' has the wrong domain",
                  {std::nullopt, r.name});
    }
    const bool inside = r.is_numeric()
                            ? (r.lo >= lim->lo && r.hi <= lim->hi)
                            : std::all_of(r.tokens.begin(), r.tokens.end(), [&](const auto& t) {
                                return lim->contains(ParamValue(t));
                              });
    if (!inside) {
      throw Error(ErrorCode::ParamOutOfRange,
                  "range for '" + r.name + "' exceeds the allowed " + lim->to_json().dump(),
                  {std::nullopt, r.name});
    }
  }
}

}  // namespace

std::string_view to_string(Trial::State s) {
  switch (s) {
    case Trial::State::running: return "running";
    case Trial::State::complete: return "complete";
    case Trial::State::pruned: return "pruned";
    case Trial::State::failed: return "failed";
  }
  return "";
}

std::optional<double> Trial::score_at(std::size_t step) const {
  for (const auto& [s, v] : intermediate) {
    if (s == step) return v;
  }
  return std::nullopt;
}

nlohmann::json Trial::to_json() const {
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& [s, v] : intermediate) steps.push_back({{"step", s}, {"score", v}});
  nlohmann::json out = {{"trial_id", id},
                        {"params", params_to_json(params)},
                        {"intermediate_scores", steps},
                        {"state", to_string(state)},
                        {"seconds", seconds}};
  if (state == State::complete && std::isfinite(final_score)) {
    out["final_score"] = final_score;
  } else if (state == State::pruned) {
    out["final_score"] = "PRUNED";
  } else if (state == State::failed) {
    out["final_score"] = "FAILED";
  } else {
    out["final_score"] = nullptr;
  }
  if (!error.empty()) out["error"] = error;
  return out;
}

Trial Trial::from_json(const nlohmann::json& doc) {
  Trial t;
  t.id = doc.at("trial_id").get<std::size_t>();
  t.params = params_from_json(doc.at("params"));
  for (const auto& s : doc.at("intermediate_scores")) {
    t.intermediate.emplace_back(s.at("step").get<std::size_t>(), s.at("score").get<double>());
  }
  const std::string state = doc.at("state").get<std::string>();
  t.state = state == "complete" ? State::complete
            : state == "pruned" ? State::pruned
            : state == "failed" ? State::failed
                                : State::running;
  const auto& fs = doc.at("final_score");
  t.final_score = fs.is_number() ? fs.get<double>() : kNegInf;
  t.error = doc.value("error", "");
  t.seconds = doc.value("seconds", 0.0);
  return t;
}

void TunerConfig::validate() const {
  const auto fail = [](const std::string& why) { throw Error(ErrorCode::InvalidSpec, why); };
  if (n_iterations == 0) fail("tuning needs at least one iteration");
  if (n_startup_random > n_iterations) fail("startup trials exceed the iteration count");
  if (!(gamma > 0.0 && gamma < 1.0)) fail("gamma must lie in (0, 1)");
  if (n_candidates == 0) fail("need at least one TPE candidate");
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
    fail("validation fraction must lie in (0, 1)");
  }
}

nlohmann::json TunerConfig::to_json() const {
  return {{"n_iterations", n_iterations},     {"n_startup_random", n_startup_random},
          {"gamma", gamma},                   {"n_candidates", n_candidates},
          {"pruning_enabled", pruning_enabled}, {"seed", seed},
          {"objective", objective.empty() ? "auc" : objective},
          {"validation_fraction", validation_fraction},
          {"enqueue_defaults", enqueue_defaults}};
}

nlohmann::json StudyResult::to_json() const {
  nlohmann::json trials_json = nlohmann::json::array();
  for (const auto& t : trials) trials_json.push_back(t.to_json());
  return {{"best_params", params_to_json(best_params)},
          {"best_score", best_score},
          {"best_trial", best_trial},
          {"trials", trials_json}};
}

HyperParams suggest(const SearchSpace& space, const std::vector<Trial>& history, Rng& rng,
                    const TunerConfig& config) {
  if (space.empty()) throw Error(ErrorCode::EmptySpace, "search space is empty");

  std::vector<const Trial*> scored;
  std::vector<const Trial*> rest;
  for (const Trial& t : history) {
    if (t.state == Trial::State::complete && std::isfinite(t.final_score)) {
      scored.push_back(&t);
    } else if (t.state != Trial::State::running) {
      rest.push_back(&t);
    }
  }
  std::stable_sort(scored.begin(), scored.end(),
                   [](const Trial* a, const Trial* b) { return a->final_score > b->final_score; });
  const std::size_t n_good =
      std::size_t(std::ceil(config.gamma * double(scored.size())));
  std::vector<const Trial*> good(scored.begin(), scored.begin() + std::ptrdiff_t(n_good));
  std::vector<const Trial*> bad(scored.begin() + std::ptrdiff_t(n_good), scored.end());
  bad.insert(bad.end(), rest.begin(), rest.end());

  const bool startup = history.size() < config.n_startup_random || good.size() < 2 || bad.size() < 2;

  HyperParams out;
  for (const ParamRange& r : space) {
    if (startup) {
      out[r.name] = sample_uniform(r, rng);
      continue;
    }
    if (r.is_numeric()) {
      const auto collect = [&](const std::vector<const Trial*>& set) {
        std::vector<double> v;
        for (const Trial* t : set) {
          const auto it = t->params.find(r.name);
          if (it == t->params.end()) continue;
          const auto x = numeric_value(it->second);
          if (x && *x >= r.lo && *x <= r.hi) v.push_back(to_internal(r, *x));
        }
        return v;
      };
      const auto g = collect(good), b = collect(bad);
      out[r.name] = g.empty() || b.empty() ? sample_uniform(r, rng)
                                           : tpe_numeric(r, g, b, config.n_candidates, rng);
    } else {
      const auto collect = [&](const std::vector<const Trial*>& set) {
        std::vector<std::size_t> v;
        for (const Trial* t : set) {
          const auto it = t->params.find(r.name);
          if (it == t->params.end()) continue;
          const auto* s = std::get_if<std::string>(&it->second);
          if (!s) continue;
          const auto pos = std::find(r.tokens.begin(), r.tokens.end(), *s);
          if (pos != r.tokens.end()) v.push_back(std::size_t(pos - r.tokens.begin()));
        }
        return v;
      };
      out[r.name] = tpe_categorical(r, collect(good), collect(bad), config.n_candidates, rng);
    }
  }
  return out;
}

bool should_prune(const Trial& trial, const std::vector<Trial>& completed, std::size_t step) {
  const auto mine = trial.score_at(step);
  if (!mine) return false;
  std::vector<double> peers;
  for (const Trial& t : completed) {
    if (t.state != Trial::State::complete || t.id == trial.id) continue;
    if (const auto s = t.score_at(step)) peers.push_back(*s);
  }
  if (peers.size() < 5) return false;
  std::sort(peers.begin(), peers.end());
  const std::size_t m = peers.size() / 2;
  const double median = peers.size() % 2 ? peers[m] : 0.5 * (peers[m - 1] + peers[m]);
  return *mine < median;
}

std::optional<double> objective_score(const TrainedModel& model, const Dataset& validation,
                                      const std::string& objective) {
  const Matrix p = model.predict_proba(validation.features);
  const bool multiclass = model.n_classes() > 2;
  const MetricSet m = evaluate_probabilities(p, validation.labels, multiclass);
  return m.get(objective.empty() ? "auc" : objective);
}

TrainTest validation_split(const Dataset& train, const TunerConfig& config) {
  return split(train, {config.validation_fraction, derive_seed(config.seed, 0x76616c), true});
}

std::uint64_t study_model_seed(std::uint64_t study_seed) {
  return derive_seed(study_seed, 0x6d6f64656c);
}

StudyResult run_study(ModelKind kind, const SearchSpace& space, const Dataset& train,
                      const TunerConfig& config, const StudyHooks& hooks) {
  config.validate();
  check_space(kind, space);
  {
    const auto names = MetricSet::names(train.n_classes() > 2);
    if (!config.objective.empty() &&
        std::find(names.begin(), names.end(), config.objective) == names.end()) {
      throw Error(ErrorCode::UnknownMetric, "objective '" + config.objective +
                                                "' is not reported for this task");
    }
  }

  const TrainTest parts = validation_split(train, config);
  const Dataset& fit_rows = parts.train;
  const Dataset& val_rows = parts.test;
  const std::uint64_t model_seed = study_model_seed(config.seed);
  const bool prunable = config.pruning_enabled && is_iterative(kind);

  StudyResult result;
  result.best_score = kNegInf;
  bool have_best = false;
  std::vector<Trial> completed;

  for (std::size_t t = 0; t < config.n_iterations; ++t) {
    if (hooks.cancelled && hooks.cancelled()) break;
    Trial trial;
    trial.id = t;
    if (t == 0 && config.enqueue_defaults) {
      const HyperParams defaults = default_params(kind);
      for (const ParamRange& r : space) trial.params[r.name] = defaults.at(r.name);
    } else {
      Rng rng(derive_seed(config.seed, t));
      trial.params = suggest(space, result.trials, rng, config);
    }

    const auto start = std::chrono::steady_clock::now();
    try {
      FitObserver observer;
      if (is_iterative(kind)) {
        observer = [&](std::size_t step, const TrainedModel& partial) {
          const auto s = objective_score(partial, val_rows, config.objective);
          if (!trial.intermediate.empty() && trial.intermediate.back().first >= step) return false;
          trial.intermediate.emplace_back(step, s.value_or(kNegInf));
          if (prunable && should_prune(trial, completed, step)) {
            trial.state = Trial::State::pruned;
            return true;
          }
          return false;
        };
      }
      const TrainedModel model = fit(kind, trial.params, fit_rows, model_seed, observer);
      if (trial.state != Trial::State::pruned) {
        const auto s = objective_score(model, val_rows, config.objective);
        trial.state = s ? Trial::State::complete : Trial::State::failed;
        trial.final_score = s.value_or(kNegInf);
        if (!s) trial.error = "objective undefined on the validation split";
      }
    } catch (const std::exception& e) {
      trial.state = Trial::State::failed;
      trial.final_score = kNegInf;
      trial.error = e.what();
    }
    trial.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    if (trial.state == Trial::State::complete) {
      if (!have_best || trial.final_score > result.best_score) {
        have_best = true;
        result.best_score = trial.final_score;
        result.best_params = trial.params;
        result.best_trial = t;
      }
      completed.push_back(trial);
    }
    result.trials.push_back(trial);
    if (hooks.on_trial) hooks.on_trial(result.trials.back());
  }

  if (!have_best) {
    std::string last;
    for (const Trial& t : result.trials) {
      if (!t.error.empty()) last = t.error;
    }
    throw Error(ErrorCode::AllTrialsFailed,
                "no tuning trial completed" + (last.empty() ? std::string() : ": " + last));
  }
  return result;
}

}  // namespace classify
