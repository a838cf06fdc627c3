#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "classify/error.hpp"
#include "classify/pipeline.hpp"

namespace classify {

enum class JobState { templated, queued, running, succeeded, failed };

std::string_view to_string(JobState s);
JobState job_state_from_string(std::string_view s);
/// The only edges are templated→queued→running→{succeeded, failed}.
bool legal_transition(JobState from, JobState to);

/// Spec validation failure with one entry per offending field. The code is
/// the first field's code.
class SpecRejected : public Error {
 public:
  explicit SpecRejected(std::vector<FieldError> fields);
  const std::vector<FieldError>& fields() const { return fields_; }

 private:
  std::vector<FieldError> fields_;
};

struct DatasetSummary {
  std::string dataset_id;
  std::string name;
  std::size_t n_rows = 0;
  std::size_t n_features = 0;
  std::vector<std::string> class_names;
  std::vector<std::size_t> class_counts;
  std::vector<std::string> warnings;
  std::string created;

  nlohmann::json to_json() const;
  static DatasetSummary from_json(const nlohmann::json& doc);
};

struct JobRecord {
  std::string job_id;
  JobSpec spec;
  JobState state = JobState::templated;
  std::string created;
  std::string started;
  std::string finished;
  std::optional<std::string> error;
  bool has_report = false;
  /// Instance id of the process running the job; empty unless running.
  std::string owner;

  nlohmann::json to_json() const;
  static JobRecord from_json(const nlohmann::json& doc);
};

/// Filesystem store rooted at one directory:
///   datasets/<id>/{data.csv, metadata.json, manifest.json}
///   jobs/<id>/{spec.json, state.json, log.txt, report.json, artifacts/*}
///   queue/<seq>_<job id>   FIFO entries, claimed by rename
/// JSON files are replaced atomically. Mutations take an exclusive lock on
/// the root, so several processes may share one store.
class Store {
 public:
  explicit Store(std::filesystem::path root);
  ~Store();
  Store(const Store&) = delete;
  Store& operator=(const Store&) = delete;

  const std::filesystem::path& root() const { return root_; }
  /// Random per-process id; its lock file is held while this Store lives.
  const std::string& instance() const { return instance_; }

  // datasets
  DatasetSummary add_dataset(std::string_view csv, const std::optional<std::string>& metadata_json,
                             const std::string& name = "");
  std::vector<DatasetSummary> list_datasets() const;
  DatasetSummary dataset(const std::string& id) const;
  DatasetMeta dataset_metadata(const std::string& id) const;
  /// Parsed dataset with its stored metadata. Throws DatasetNotFound.
  Dataset load_dataset(const std::string& id) const;
  /// Throws DatasetInUse while a queued or running job refers to it.
  void delete_dataset(const std::string& id);

  // jobs
  /// Validates against the referenced datasets; throws SpecRejected.
  JobRecord create_job(const JobSpec& spec);
  std::vector<JobRecord> list_jobs() const;
  JobRecord job(const std::string& id) const;
  JobRecord submit(const std::string& id);
  /// Oldest queued job, now running and owned by this instance.
  std::optional<JobRecord> claim();
  void append_log(const std::string& id, const std::string& line);
  std::vector<std::string> log(const std::string& id) const;
  void finish(const std::string& id, const JobOutput& output);
  void fail(const std::string& id, const std::string& reason);
  /// Throws JobNotFinished unless succeeded.
  nlohmann::json report(const std::string& id) const;
  std::vector<ArtifactRef> artifacts(const std::string& id) const;
  /// Bytes and content type. Throws ArtifactNotFound.
  std::pair<std::string, std::string> artifact(const std::string& id, const std::string& name) const;
  /// Throws JobBusy while running.
  void delete_job(const std::string& id);

  /// Marks running jobs whose owning process is gone as failed with
  /// "worker lost". Returns how many were marked.
  std::size_t recover();

 private:
  class RootLock;
  std::filesystem::path dataset_dir(const std::string& id) const;
  std::filesystem::path job_dir(const std::string& id) const;
  JobRecord read_job(const std::string& id) const;
  void write_job(const JobRecord& r) const;
  void transition(JobRecord& r, JobState to) const;
  std::uint64_t next_counter(const std::string& key);
  bool owner_alive(const std::string& owner) const;

  std::filesystem::path root_;
  std::string instance_;
  int instance_fd_ = -1;
  mutable std::mutex mutex_;
};

/// Claims and runs one queued job. Returns false when the queue is empty.
bool run_next_job(Store& store);

/// Worker threads pulling from the store's queue.
class WorkerPool {
 public:
  WorkerPool(Store& store, std::size_t n_workers, std::chrono::milliseconds poll = std::chrono::milliseconds(200));
  ~WorkerPool();
  void wake();
  void stop();

 private:
  void loop();
  Store& store_;
  std::chrono::milliseconds poll_;
  std::vector<std::thread> threads_;
  std::mutex mutex_;
  std::condition_variable cv_;
  bool stopping_ = false;
  bool woken_ = false;
};

/// HTTP status for an error code.
int http_status(ErrorCode code);
/// {"code", "message", optional "location", optional "fields"}.
nlohmann::json error_body(const Error& e);

struct ServerOptions {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::size_t workers = 1;
  /// Served under / when set.
  std::optional<std::filesystem::path> static_dir;
};

class ApiServer {
 public:
  ApiServer(Store& store, ServerOptions options);
  ~ApiServer();
  /// Binds and serves until stop(); returns false if binding fails.
  bool listen();
  /// Binds an ephemeral port and serves on a background thread.
  int start_background();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace classify
