// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if any fails. Optional arguments select criteria by
// substring of their names.
#include "classify/explain.hpp"
#include "classify/metrics.hpp"
#include "classify/models.hpp"
#include "classify/models/neural.hpp"
#include "classify/pipeline.hpp"
#include "classify/service.hpp"
#include "classify/synth.hpp"
#include "classify/tuner.hpp"
#include "oracles.hpp"
#include "shap_fixtures.hpp"
#include "support.hpp"

// After classify headers: <resolv.h> defines `_res`, which Eigen also uses.
#include <httplib.h>

#include <fcntl.h>
#include <netinet/in.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

using namespace classify;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool ok = false;
  std::string detail;
};

std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s << std::setprecision(digits) << v;
  return s.str();
}

// ---- metric oracles --------------------------------------------------------

Outcome metric_oracles() {
  Rng rng(101);
  std::size_t auc_bad = 0, count_bad = 0;
  for (int rep = 0; rep < 1000; ++rep) {
    const auto inst = oracle::random_binary_instance(rng, 50);
    if (binary_auc(inst.scores, inst.labels) != oracle::pair_count_auc(inst.scores, inst.labels)) ++auc_bad;
    std::vector<int> preds;
    const double cut = rng.uniform();
    for (double s : inst.scores) preds.push_back(s >= cut ? 1 : 0);
    const MetricSet m = binary_metrics(confusion(inst.labels, preds, 2), inst.scores, inst.labels);
    const auto h = oracle::hand_count(inst.labels, preds);
    const bool same = m.accuracy == double(h.tp + h.tn) / double(inst.labels.size()) &&
                      m.sensitivity == oracle::ratio(h.tp, h.tp + h.fn) &&
                      m.specificity == oracle::ratio(h.tn, h.tn + h.fp) && m.ppv == oracle::ratio(h.tp, h.tp + h.fp) &&
                      m.npv == oracle::ratio(h.tn, h.tn + h.fn);
    if (!same) ++count_bad;
  }
  double kappa_worst = 0;
  std::size_t kappa_bad = 0;
  for (int rep = 0; rep < 1000; ++rep) {
    ConfusionCounts t(3);
    for (std::size_t a = 0; a < 3; ++a) {
      for (std::size_t b = 0; b < 3; ++b) t.at(a, b) = std::size_t(rng.uniform_int(0, 20));
    }
    if (t.total() == 0) continue;
    const auto k = cohen_kappa(t);
    const auto ref = oracle::kappa_formula(t);
    if (k.has_value() != ref.has_value()) {
      ++kappa_bad;
    } else if (k) {
      kappa_worst = std::max(kappa_worst, std::abs(*k - *ref));
    }
  }
  return {auc_bad == 0 && count_bad == 0 && kappa_bad == 0 && kappa_worst <= 1e-12,
          "auc mismatches " + std::to_string(auc_bad) + ", count mismatches " + std::to_string(count_bad) +
              ", kappa max diff " + fmt(kappa_worst)};
}

// ---- Shapley ------------------------------------------------------------------

BatchPredict column_of(const BatchPredict& f, Eigen::Index c) {
  return [f, c](const Matrix& rows) -> Matrix { return f(rows).col(c); };
}

Outcome shapley() {
  Rng rng(202);
  double worst_fn = 0;
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t m = std::size_t(rng.uniform_int(2, 10));
    const fixture::RandomFunction rf(rng, m, rep % 3);
    const Matrix bg = fixture::random_rows(rng, 5, m);
    const Vector x = fixture::random_rows(rng, 1, m).row(0).transpose();
    const Matrix e = exact_shap(rf.batch(), x, bg);
    const Matrix k = kernel_shap(rf.batch(), x, bg, std::size_t(1) << m, std::uint64_t(rep));
    worst_fn = std::max(worst_fn, (e - k).cwiseAbs().maxCoeff());
  }

  // Every trained model kind, probability output, 8 features.
  const Dataset ds = parse_csv(test::blobs_csv(120, 8, 1.5, 7));
  double worst_model = 0;
  for (ModelKind kind : all_model_kinds()) {
    const TrainedModel model = fit(kind, {}, ds, 3);
    const BatchPredict f = column_of([&model](const Matrix& raw) { return model.predict_proba_raw(raw); }, 1);
    const Matrix raw = model.raw_view(ds.features);
    const Matrix bg = raw.topRows(6);
    for (Eigen::Index r = 10; r < 12; ++r) {
      const Vector x = raw.row(r).transpose();
      const Matrix e = exact_shap(f, x, bg);
      const Matrix k = kernel_shap(f, x, bg, std::size_t(1) << 8, 1);
      worst_model = std::max(worst_model, (e - k).cwiseAbs().maxCoeff());
    }
  }

  Vector w(12);
  for (Eigen::Index j = 0; j < w.size(); ++j) w[j] = rng.normal() * 5;
  const double residual = linear_shap(w, 0.3, fixture::random_rows(rng, 40, 12), fixture::random_rows(rng, 25, 12))
                              .efficiency_residual();

  const std::size_t m = 14;
  const fixture::RandomFunction rf(rng, m - 1, 0);
  const BatchPredict reads_first = [&rf](const Matrix& rows) {
    Matrix out(rows.rows(), 1);
    for (Eigen::Index i = 0; i < rows.rows(); ++i) out(i, 0) = rf(rows.row(i).data());
    return out;
  };
  const Matrix bg = fixture::random_rows(rng, 10, m);
  const Vector x = fixture::random_rows(rng, 1, m).row(0).transpose();
  const double dummy = std::abs(kernel_shap(reads_first, x, bg, 10000, 9)(Eigen::Index(m - 1), 0));

  return {worst_fn <= 1e-6 && worst_model <= 1e-6 && residual <= 1e-9 && dummy <= 0.01,
          "kernel vs exact: functions " + fmt(worst_fn) + ", models " + fmt(worst_model) + "; efficiency " +
              fmt(residual) + "; dummy " + fmt(dummy)};
}

// ---- MLP gradient ----------------------------------------------------------------

Outcome mlp_gradient() {
  Rng rng(303);
  const Eigen::Index n = 5, d = 6, h = 8, c = 3;
  Matrix X(n, d);
  for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = rng.normal();
  const std::vector<int> y{2, 0, 1, 1, 2};
  neural::MlpWeights w{Matrix(d, h), Vector(h), Matrix(h, c), Vector(c)};
  Vector flat(Eigen::Index(w.size()));
  for (Eigen::Index i = 0; i < flat.size(); ++i) flat[i] = rng.normal() * 0.5;
  w.assign(flat);
  const double l2 = 1e-3;
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
    worst = std::max(worst, std::abs(fd - g[k]) / std::max(1e-8, std::abs(fd) + std::abs(g[k])));
  }
  return {worst <= 1e-4, std::to_string(flat.size()) + " parameters, worst relative error " + fmt(worst)};
}

// ---- soft impute -----------------------------------------------------------------

Outcome soft_impute_recovery() {
  double total = 0;
  bool identical = true;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(1000 + seed);
    Matrix a(50, 2), b(2, 8);
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = rng.normal();
    for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = rng.normal();
    const Matrix full = a * b;
    Matrix holed = full;
    for (Eigen::Index i = 0; i < holed.size(); ++i) {
      if (rng.uniform() < 0.2) holed.data()[i] = kMissing;
    }
    ImputeConfig cfg;
    cfg.lambda = 0.01;
    const Matrix out = soft_impute(holed, cfg);
    double num = 0, den = 0;
    for (Eigen::Index i = 0; i < full.size(); ++i) {
      const double o = holed.data()[i];
      if (std::isnan(o)) {
        num += std::pow(out.data()[i] - full.data()[i], 2);
        den += std::pow(full.data()[i], 2);
      } else if (std::memcmp(&o, out.data() + i, sizeof o) != 0) {
        identical = false;
      }
    }
    total += std::sqrt(num / den);
  }
  const double mean = total / 20;
  return {mean <= 0.05 && identical,
          "mean relative error " + fmt(mean) + (identical ? ", observed cells bit-identical" : ", observed cells changed")};
}

// ---- synthesis --------------------------------------------------------------------

Dataset mixed(const std::vector<std::size_t>& counts, std::uint64_t seed) {
  Rng rng(seed);
  std::ostringstream csv;
  csv << "index,x,y,g,class\n";
  std::size_t id = 0;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    for (std::size_t k = 0; k < counts[c]; ++k) {
      const double x = rng.normal() + double(c);
      const char* g = rng.uniform() < 0.3 + 0.3 * double(c) ? "red" : "blue";
      csv << ++id << ',' << x << ',' << 0.7 * x + 0.5 * rng.normal() << ',' << g << ',' << c << '\n';
    }
  }
  const DatasetMeta meta = DatasetMeta::from_json_text(
      R"({"columns": {"index": "id", "x": "numerical", "y": "numerical", "g": "categorical", "class": "categorical"}})");
  return parse_csv(csv.str(), &meta);
}

Outcome synthesis() {
  const Dataset imbalanced = mixed({90, 10}, 11);
  const auto balanced = balance(imbalanced, imbalanced.meta, 3).augmented.class_counts();
  const Dataset skewed = mixed({70, 30}, 12);
  const auto generated = generate_full(skewed, skewed.meta, 4).class_counts();
  const Dataset bc = test::breast_cancer();
  const double self = quality(bc, bc, bc.meta).overall;
  const bool ok = balanced == std::vector<std::size_t>{90, 90} && generated == std::vector<std::size_t>{50, 50} &&
                  self >= 0.999;
  return {ok, "balance {" + std::to_string(balanced[0]) + "," + std::to_string(balanced[1]) + "}, generate {" +
                  std::to_string(generated[0]) + "," + std::to_string(generated[1]) + "}, self quality " + fmt(self)};
}

// ---- pipeline-level criteria -------------------------------------------------------

DatasetProvider provide(std::map<std::string, Dataset> sets) {
  return [sets = std::move(sets)](const std::string& id) -> Dataset {
    const auto it = sets.find(id);
    if (it == sets.end()) throw Error(ErrorCode::DatasetNotFound, id);
    return it->second;
  };
}

double mean_of(const JobReport& r, const std::string& metric, std::size_t* n_ok = nullptr) {
  double sum = 0;
  std::size_t n = 0;
  for (const auto& m : r.models) {
    if (!m.ok) continue;
    const auto v = m.metrics.get(metric);
    if (!v) continue;
    sum += *v;
    ++n;
  }
  if (n_ok) *n_ok = n;
  return n ? sum / double(n) : std::nan("");
}

Outcome breast_cancer_reproduction() {
  JobSpec spec;
  spec.dataset_id = "bc";
  spec.models = {ModelKind::RandomForest, ModelKind::GradientBoosting, ModelKind::HistogramGradientBoosting};
  spec.tune = true;
  spec.n_iterations = 100;
  spec.seed = 42;
  const JobOutput out = run_job(spec, provide({{"bc", test::breast_cancer()}}));
  double best = 0;
  std::string detail;
  for (const auto& m : out.report.models) {
    const double auc = m.ok && m.metrics.auc ? *m.metrics.auc : 0.0;
    best = std::max(best, auc);
    detail += std::string(to_string(m.kind)) + " " + (m.ok ? fmt(auc) : "failed") + "; ";
  }
  return {best >= 0.95, detail + "best held-out AUC " + fmt(best)};
}

Outcome tuning_helps() {
  struct Named {
    std::string name;
    Dataset ds;
  };
  const std::vector<Named> sets{{"noisy-knn", parse_csv(test::noisy_knn_csv(500, 17))},
                                {"breast-cancer", test::breast_cancer()}};
  std::size_t worse = 0, total = 0;
  std::string detail;
  for (const auto& set : sets) {
    for (ModelKind kind : all_model_kinds()) {
      TunerConfig cfg;
      cfg.n_iterations = 100;
      cfg.seed = 9;
      const StudyResult r = run_study(kind, default_search_space(kind), set.ds, cfg);
      // The default parameters, scored the same way on the same partition.
      const TrainTest parts = validation_split(set.ds, cfg);
      const TrainedModel base = fit(kind, default_params(kind), parts.train, study_model_seed(cfg.seed));
      const double untuned = objective_score(base, parts.test, "").value_or(0.0);
      ++total;
      if (r.best_score < untuned) {
        ++worse;
        detail += set.name + "/" + std::string(to_string(kind)) + " tuned " + fmt(r.best_score) + " < default " +
                  fmt(untuned) + "; ";
      }
    }
  }
  return {worse == 0, std::to_string(total - worse) + "/" + std::to_string(total) +
                          " studies at or above the default" + (detail.empty() ? "" : ": " + detail)};
}

Outcome balancing_helps() {
  const Dataset ds = parse_csv(test::blobs_csv(1000, 6, 1.5, 77, 0.13));
  const auto counts = ds.class_counts();
  JobSpec spec;
  spec.dataset_id = "heart";
  spec.models = all_model_kinds();
  spec.seed = 13;
  const auto provider = provide({{"heart", ds}});
  const JobReport before = run_job(spec, provider).report;
  spec.synth_mode = SynthMode::balance;
  const JobReport after = run_job(spec, provider).report;
  std::size_t n_before = 0, n_after = 0;
  const double sens0 = mean_of(before, "sensitivity", &n_before), sens1 = mean_of(after, "sensitivity", &n_after);
  const double auc0 = mean_of(before, "auc"), auc1 = mean_of(after, "auc");
  const double rate = double(counts[1]) / double(ds.n_rows());
  const bool ok = n_before == spec.models.size() && n_after == spec.models.size() && sens1 >= sens0 &&
                  auc1 >= auc0 - 0.02;
  return {ok, "positive rate " + fmt(rate, 3) + "; mean sensitivity " + fmt(sens0) + " -> " + fmt(sens1) +
                  "; mean AUC " + fmt(auc0) + " -> " + fmt(auc1)};
}

Outcome imputation_near_lossless() {
  const Dataset full = test::breast_cancer();
  const TrainTest tt = split(full, {0.2, 21, true});
  Dataset holed = tt.train;
  Rng rng(23);
  std::size_t dropped = 0, cells = 0;
  for (auto& col : holed.features.columns()) {
    for (double& v : col.values) {
      ++cells;
      if (rng.uniform() < 0.2) {
        v = kMissing;
        ++dropped;
      }
    }
  }
  JobSpec spec;
  spec.dataset_id = "train";
  spec.test_dataset_id = "test";
  spec.models = all_model_kinds();
  spec.seed = 5;
  const JobReport complete = run_job(spec, provide({{"train", tt.train}, {"test", tt.test}})).report;
  spec.synth_mode = SynthMode::impute;
  const JobReport imputed = run_job(spec, provide({{"train", holed}, {"test", tt.test}})).report;
  std::size_t n0 = 0, n1 = 0;
  const double a0 = mean_of(complete, "auc", &n0), a1 = mean_of(imputed, "auc", &n1);
  const bool ok = n0 == spec.models.size() && n1 == spec.models.size() && std::abs(a1 - a0) <= 0.05;
  return {ok, fmt(100.0 * double(dropped) / double(cells), 3) + "% cells dropped; mean AUC complete " + fmt(a0) +
                  ", imputed " + fmt(a1)};
}

// ---- service ------------------------------------------------------------------------

int free_port() {
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = 0;
  ::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr);
  socklen_t len = sizeof addr;
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  ::close(fd);
  return ntohs(addr.sin_port);
}

/// A `classify serve` child process on a fixed port.
class ServerProcess {
 public:
  ServerProcess(fs::path root, int port) : root_(std::move(root)), port_(port) {}
  ~ServerProcess() { kill(); }

  void start() {
    const std::string addr = "127.0.0.1:" + std::to_string(port_);
    const std::string log = (root_.parent_path() / "server.log").string();
    pid_ = ::fork();
    if (pid_ == 0) {
      const int fd = ::open(log.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
      ::dup2(fd, 2);
      ::dup2(fd, 1);
      ::execl(CLASSIFY_CLI, CLASSIFY_CLI, "serve", "--root", root_.c_str(), "--addr", addr.c_str(), "--workers", "1",
              static_cast<char*>(nullptr));
      ::_exit(127);
    }
    httplib::Client cli("127.0.0.1", port_);
    for (int i = 0; i < 500; ++i) {
      if (auto res = cli.Get("/api/health"); res && res->status == 200) return;
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    throw Error(ErrorCode::Internal, "server did not come up");
  }

  void kill() {
    if (pid_ <= 0) return;
    ::kill(pid_, SIGKILL);
    ::waitpid(pid_, nullptr, 0);
    pid_ = -1;
  }

 private:
  fs::path root_;
  int port_;
  pid_t pid_ = -1;
};

int rank(JobState s) {
  switch (s) {
    case JobState::templated: return 0;
    case JobState::queued: return 1;
    case JobState::running: return 2;
    default: return 3;
  }
}

/// True when `to` can be reached from `from` along legal edges. Observations
/// poll over HTTP, so a worker may take several steps between two polls.
bool reachable(JobState from, JobState to) {
  if (from == to) return true;
  if (legal_transition(from, to)) return true;
  for (JobState mid : {JobState::queued, JobState::running}) {
    if (rank(mid) > rank(from) && legal_transition(from, mid) && reachable(mid, to)) return true;
  }
  return false;
}

Outcome service_state_machine() {
  const fs::path base = fs::temp_directory_path() / ("classify-acceptance-" + std::to_string(::getpid()));
  fs::remove_all(base);
  fs::create_directories(base);
  const fs::path root = base / "store";
  const int port = free_port();
  ServerProcess server(root, port);
  server.start();
  httplib::Client cli("127.0.0.1", port);
  cli.set_read_timeout(30, 0);

  const auto post_json = [&](const std::string& path, const nlohmann::json& body) {
    return cli.Post(path, body.dump(), "application/json");
  };
  const std::string bc_csv = test::read_file(std::string(CLASSIFY_DATA_DIR) + "/breast_cancer.csv");
  const auto upload = [&](const std::string& name, const std::string& csv) -> std::string {
    auto r = cli.Post("/api/datasets?name=" + name, csv, "text/csv");
    if (!r || r->status != 201) throw Error(ErrorCode::Internal, "dataset upload failed");
    return nlohmann::json::parse(r->body).at("dataset_id");
  };
  std::string small = upload("small", test::blobs_csv(60, 3, 2.0, 1));
  std::string big = upload("bc", bc_csv);
  const auto quick = [&] {
    return nlohmann::json{{"dataset_id", small}, {"models", {"LogisticRegression"}}, {"seed", 1}};
  };
  const auto slow = [&] {
    return nlohmann::json{{"dataset_id", big},
                          {"models", {"RandomForest", "GradientBoosting"}},
                          {"tune", true},
                          {"n_iterations", 40},
                          {"seed", 2}};
  };
  const auto invalid = [&] { return nlohmann::json{{"dataset_id", small}, {"models", nlohmann::json::array()}}; };
  httplib::Result res;

  std::map<std::string, JobState> seen;
  std::size_t illegal = 0, inconsistent = 0, rejected = 0, restarts = 0, unreadable = 0;
  std::vector<std::string> lost_mid_job;

  const auto observe = [&]() {
    auto r = cli.Get("/api/jobs");
    if (!r || r->status != 200) {
      ++unreadable;
      return;
    }
    std::map<std::string, JobState> now;
    const auto listing = nlohmann::json::parse(r->body);
    for (const auto& j : listing.at("jobs")) {
      const std::string id = j.at("job_id");
      const JobState st = job_state_from_string(j.at("state").get<std::string>());
      now[id] = st;
      if (j.at("error").is_null() == (st == JobState::failed)) ++inconsistent;
      const auto it = seen.find(id);
      if (it == seen.end() ? st != JobState::templated && st != JobState::queued && st != JobState::running &&
                                 st != JobState::succeeded && st != JobState::failed
                           : !reachable(it->second, st)) {
        ++illegal;
      }
    }
    seen = std::move(now);
  };

  Rng rng(4242);
  for (int op = 0; op < 500; ++op) {
    std::vector<std::string> ids;
    for (const auto& [id, st] : seen) ids.push_back(id);
    const std::string pick = ids.empty() ? "job-000001" : ids[rng.index(ids.size())];
    httplib::Result r;
    switch (rng.uniform_int(0, 9)) {
      case 0:
      case 1: r = post_json("/api/jobs", quick()); break;
      case 2: r = post_json("/api/jobs", rng.uniform() < 0.7 ? slow() : invalid()); break;
      case 3:
      case 4: {
        // Mostly jobs that can still be submitted; sometimes any job.
        std::string target = pick;
        if (rng.uniform() < 0.8) {
          for (const auto& [id, st] : seen) {
            if (st == JobState::templated) target = id;
          }
        }
        r = cli.Post("/api/jobs/" + target + "/submit");
        break;
      }
      case 5: r = cli.Get("/api/jobs/" + pick + "/results"); break;
      case 6: r = cli.Delete("/api/jobs/" + pick); break;
      case 7: r = cli.Get("/api/jobs/" + pick); break;
      case 8: {
        if (rng.uniform() < 0.7) {
          r = cli.Get("/api/datasets");
          break;
        }
        // Deleting is refused while queued or running jobs use the dataset.
        std::string& target = rng.uniform() < 0.5 ? small : big;
        r = cli.Delete("/api/datasets/" + target);
        if (r && r->status == 200) target = upload(&target == &small ? "small" : "bc", &target == &small ? test::blobs_csv(60, 3, 2.0, 1) : bc_csv);
        break;
      }
      default: {
        // Kill the server, often while a job is running, and restart it.
        std::string running;
        for (const auto& [id, st] : seen) {
          if (st == JobState::running) running = id;
        }
        server.kill();
        server.start();
        ++restarts;
        if (!running.empty()) lost_mid_job.push_back(running);
        break;
      }
    }
    if (r && r->status >= 400) {
      ++rejected;
      if (std::getenv("ACCEPTANCE_DEBUG")) std::cerr << r->status << " " << r->body << "\n";
      const auto body = nlohmann::json::parse(r->body, nullptr, false);
      if (body.is_discarded() || !body.contains("code")) ++inconsistent;
    }
    const bool got_results = r && r->status == 200 && r->body.find("\"artifacts\"") != std::string::npos;
    observe();
    // Results exist only for jobs that succeeded; terminal states are final.
    if (got_results && seen.count(pick) && seen.at(pick) != JobState::succeeded) ++inconsistent;
  }

  // A slow job killed mid-run comes back failed, and the store stays usable.
  res = post_json("/api/jobs", slow());
  const std::string victim = nlohmann::json::parse(res->body).at("job_id");
  cli.Post("/api/jobs/" + victim + "/submit");
  bool saw_running = false;
  for (int i = 0; i < 3000 && !saw_running; ++i) {
    auto g = cli.Get("/api/jobs/" + victim);
    saw_running = g && nlohmann::json::parse(g->body).at("state") == "running";
    if (!saw_running) std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
  std::this_thread::sleep_for(std::chrono::milliseconds(200));
  server.kill();
  server.start();
  observe();
  auto g = cli.Get("/api/jobs/" + victim);
  const auto victim_json = nlohmann::json::parse(g->body);
  const bool victim_failed = victim_json.at("state") == "failed" &&
                             victim_json.at("error").get<std::string>().find("worker lost") != std::string::npos;
  const bool lists = cli.Get("/api/jobs")->status == 200 && cli.Get("/api/datasets")->status == 200;

  // And it still runs new work after the crash.
  res = post_json("/api/jobs", quick());
  bool fresh_ok = false;
  {
    const std::string id = nlohmann::json::parse(res->body).at("job_id");
    cli.Post("/api/jobs/" + id + "/submit");
    for (int i = 0; i < 3000; ++i) {
      auto s = cli.Get("/api/jobs/" + id);
      const std::string st = nlohmann::json::parse(s->body).at("state");
      if (st == "succeeded") fresh_ok = cli.Get("/api/jobs/" + id + "/results")->status == 200;
      if (st == "succeeded" || st == "failed") break;
      std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
  }
  if (std::getenv("ACCEPTANCE_DEBUG")) {
    const auto listing = nlohmann::json::parse(cli.Get("/api/jobs")->body);
    for (const auto& j : listing.at("jobs")) std::cerr << j.at("state") << " " << j.at("error") << "\n";
  }
  std::map<JobState, std::size_t> finals;
  for (const auto& [id, st] : seen) ++finals[st];
  server.kill();

  // Every record on disk still parses.
  for (const auto& e : fs::directory_iterator(root / "jobs")) {
    try {
      JobRecord::from_json(nlohmann::json::parse(test::read_file((e.path() / "state.json").string())));
    } catch (const std::exception&) {
      ++unreadable;
    }
  }
  fs::remove_all(base);

  const bool ok = illegal == 0 && inconsistent == 0 && unreadable == 0 && saw_running && victim_failed && lists &&
                  fresh_ok;
  return {ok, "illegal " + std::to_string(illegal) + ", inconsistent " + std::to_string(inconsistent) +
                  ", unreadable " + std::to_string(unreadable) + ", rejected " + std::to_string(rejected) +
                  ", restarts " + std::to_string(restarts) + " (" + std::to_string(lost_mid_job.size()) +
                  " mid-job), final succeeded " + std::to_string(finals[JobState::succeeded]) + " failed " +
                  std::to_string(finals[JobState::failed]) + "; killed job " +
                  (victim_failed ? "failed as worker lost" : "NOT failed") + (fresh_ok ? "; new job ran" : "; new job did not run")};
}

struct Criterion {
  std::string name;
  double limit_seconds;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria{
      {"metric oracle equivalence", 10, metric_oracles},
      {"Shapley correctness", 60, shapley},
      {"MLP gradient check", 5, mlp_gradient},
      {"soft-impute recovery", 10, soft_impute_recovery},
      {"synthesis contracts", 30, synthesis},
      {"breast-cancer reproduction", 600, breast_cancer_reproduction},
      {"tuning helps", 900, tuning_helps},
      {"balancing helps when imbalanced", 900, balancing_helps},
      {"imputation is near-lossless", 900, imputation_near_lossless},
      {"service state machine", 300, service_state_machine},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    if (argc > 1) {
      bool selected = false;
      for (int i = 1; i < argc; ++i) selected |= c.name.find(argv[i]) != std::string::npos;
      if (!selected) continue;
    }
    const auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool pass = out.ok && secs < c.limit_seconds;
    if (!pass) ++failures;
    std::cout << (pass ? "PASS " : "FAIL ") << c.name << " [" << std::fixed << std::setprecision(1) << secs << " s / "
              << c.limit_seconds << " s] " << std::defaultfloat << out.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
