// Command-line entry point: HTTP service, headless single job, external worker.
#include "classify/service.hpp"

#include <signal.h>

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

using namespace classify;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::BadRequest, "cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Dataset load_file(const std::string& csv_path, const std::string& meta_path) {
  const std::string raw = slurp(csv_path);
  if (meta_path.empty()) return parse_csv(raw);
  const DatasetMeta meta = DatasetMeta::from_json_text(slurp(meta_path));
  return parse_csv(raw, &meta);
}

/// Blocks SIGINT/SIGTERM for every thread started afterwards and returns a
/// thread that waits for one of them and then runs `on_signal`.
std::thread signal_thread(std::function<void()> on_signal) {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);
  return std::thread([set, on_signal = std::move(on_signal)] {
    int sig = 0;
    sigwait(&set, &sig);
    on_signal();
  });
}

int report_error(const std::exception& e) {
  if (const auto* err = dynamic_cast<const Error*>(&e)) {
    std::cerr << "error: " << error_body(*err).dump() << "\n";
  } else {
    std::cerr << "error: " << e.what() << "\n";
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tabular classification service: train, tune, explain and compare models"};
  app.require_subcommand(1);

  // serve
  std::string root = "classify-data", addr = "127.0.0.1:8080", static_dir;
  std::size_t workers = 1;
  auto* serve = app.add_subcommand("serve", "Run the HTTP API with an in-process worker pool");
  serve->add_option("--root", root, "Store directory")->envname("CLASSIFY_ROOT")->capture_default_str();
  serve->add_option("--addr", addr, "Listen address HOST:PORT")->envname("CLASSIFY_ADDR")->capture_default_str();
  serve->add_option("--workers", workers, "Worker threads (0 = external workers only)")
      ->envname("CLASSIFY_WORKERS")
      ->capture_default_str();
  serve->add_option("--static", static_dir, "Directory of web assets served under /")->envname("CLASSIFY_STATIC");

  // run
  std::string dataset_path, metadata_path, test_path, test_metadata_path, spec_path, out_dir;
  bool quiet = false;
  auto* run = app.add_subcommand("run", "Run one job headless and print the report JSON");
  run->add_option("--dataset", dataset_path, "Training CSV")->required();
  run->add_option("--metadata", metadata_path, "Metadata JSON for the training CSV");
  run->add_option("--test-dataset", test_path, "Optional external test CSV");
  run->add_option("--test-metadata", test_metadata_path, "Metadata JSON for the test CSV");
  run->add_option("--spec", spec_path, "Job spec JSON")->required();
  run->add_option("--out", out_dir, "Directory for artifacts");
  run->add_flag("--quiet", quiet, "Do not echo log lines to stderr");

  // worker
  std::string worker_root = "classify-data";
  bool once = false;
  int poll_ms = 500;
  auto* worker = app.add_subcommand("worker", "Run queued jobs from a shared store");
  worker->add_option("--root", worker_root, "Store directory")->envname("CLASSIFY_ROOT")->capture_default_str();
  worker->add_flag("--once", once, "Exit when the queue is empty");
  worker->add_option("--poll-ms", poll_ms, "Idle polling interval")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*serve) {
      const auto colon = addr.rfind(':');
      if (colon == std::string::npos) throw Error(ErrorCode::BadRequest, "--addr must be HOST:PORT");
      ServerOptions opt;
      opt.host = addr.substr(0, colon);
      opt.port = std::stoi(addr.substr(colon + 1));
      opt.workers = workers;
      if (!static_dir.empty()) opt.static_dir = static_dir;
      Store store(root);
      ApiServer server(store, opt);
      std::thread sig = signal_thread([&] { server.stop(); });
      std::cerr << "serving " << fs::absolute(root).string() << " on http://" << addr << " with " << workers
                << " worker(s)\n";
      const bool ok = server.listen();
      if (!ok) {
        std::cerr << "error: cannot listen on " << addr << "\n";
        ::kill(::getpid(), SIGTERM);
      }
      sig.join();
      server.stop();
      return ok ? 0 : 1;
    }

    if (*run) {
      nlohmann::json doc = nlohmann::json::parse(slurp(spec_path));
      if (!doc.contains("dataset_id")) doc["dataset_id"] = "dataset";
      if (!test_path.empty() && !doc.contains("test_dataset_id")) doc["test_dataset_id"] = "test";
      const JobSpec spec = JobSpec::from_json(doc);
      const auto provider = [&](const std::string& id) {
        if (id == spec.dataset_id) return load_file(dataset_path, metadata_path);
        if (spec.test_dataset_id && id == *spec.test_dataset_id && !test_path.empty()) {
          return load_file(test_path, test_metadata_path);
        }
        throw Error(ErrorCode::DatasetNotFound, "no file given for dataset '" + id + "'");
      };
      const JobOutput out = run_job(spec, provider, [&](const std::string& line) {
        if (!quiet) std::cerr << line << "\n";
      });
      if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        for (const auto& a : out.artifacts) {
          std::ofstream(fs::path(out_dir) / a.name, std::ios::binary) << a.bytes;
        }
        std::ofstream(fs::path(out_dir) / "report.json") << out.report.to_json().dump(2);
      }
      std::cout << out.report.to_json().dump(2) << "\n";
      return 0;
    }

    if (*worker) {
      Store store(worker_root);
      const std::size_t lost = store.recover();
      if (lost) std::cerr << "marked " << lost << " orphaned job(s) failed\n";
      std::atomic<bool> stopping{false};
      std::thread sig = signal_thread([&] { stopping = true; });
      sig.detach();
      while (!stopping) {
        if (run_next_job(store)) continue;
        if (once) break;
        std::this_thread::sleep_for(std::chrono::milliseconds(poll_ms));
      }
      return 0;
    }
  } catch (const std::exception& e) {
    return report_error(e);
  }
  return 0;
}
