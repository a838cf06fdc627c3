#include "classify/service.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <ctime>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

namespace fs = std::filesystem;

namespace classify {

std::string_view to_string(JobState s) {
  switch (s) {
    case JobState::templated: return "templated";
    case JobState::queued: return "queued";
    case JobState::running: return "running";
    case JobState::succeeded: return "succeeded";
    case JobState::failed: return "failed";
  }
  return "templated";
}

JobState job_state_from_string(std::string_view s) {
  for (JobState st : {JobState::templated, JobState::queued, JobState::running, JobState::succeeded,
                      JobState::failed}) {
    if (s == to_string(st)) return st;
  }
  throw Error(ErrorCode::Internal, "unknown job state '" + std::string(s) + "'");
}

bool legal_transition(JobState from, JobState to) {
  switch (from) {
    case JobState::templated: return to == JobState::queued;
    case JobState::queued: return to == JobState::running;
    case JobState::running: return to == JobState::succeeded || to == JobState::failed;
    default: return false;
  }
}

namespace {

std::string joined_messages(const std::vector<FieldError>& fields) {
  std::string msg;
  for (const auto& f : fields) msg += (msg.empty() ? "" : "; ") + f.field + ": " + f.message;
  return msg.empty() ? "invalid job spec" : msg;
}

}  // namespace

SpecRejected::SpecRejected(std::vector<FieldError> fields)
    : Error(fields.empty() ? ErrorCode::InvalidSpec : fields.front().code, joined_messages(fields),
            ErrorLocation{std::nullopt, fields.empty() ? std::nullopt : std::optional(fields.front().field)}),
      fields_(std::move(fields)) {}

nlohmann::json DatasetSummary::to_json() const {
  nlohmann::json distribution = nlohmann::json::object();
  for (std::size_t c = 0; c < class_names.size() && c < class_counts.size(); ++c) {
    distribution[class_names[c]] = class_counts[c];
  }
  return {{"dataset_id", dataset_id}, {"name", name},         {"n_rows", n_rows},
          {"n_features", n_features}, {"class_names", class_names}, {"class_counts", class_counts},
          {"class_distribution", distribution}, {"warnings", warnings}, {"created", created}};
}

DatasetSummary DatasetSummary::from_json(const nlohmann::json& doc) {
  DatasetSummary s;
  s.dataset_id = doc.at("dataset_id").get<std::string>();
  s.name = doc.value("name", "");
  s.n_rows = doc.at("n_rows").get<std::size_t>();
  s.n_features = doc.at("n_features").get<std::size_t>();
  s.class_names = doc.at("class_names").get<std::vector<std::string>>();
  s.class_counts = doc.at("class_counts").get<std::vector<std::size_t>>();
  s.warnings = doc.value("warnings", std::vector<std::string>{});
  s.created = doc.value("created", "");
  return s;
}

nlohmann::json JobRecord::to_json() const {
  return {{"job_id", job_id},
          {"spec", spec.to_json()},
          {"state", to_string(state)},
          {"created", created},
          {"started", started.empty() ? nlohmann::json(nullptr) : nlohmann::json(started)},
          {"finished", finished.empty() ? nlohmann::json(nullptr) : nlohmann::json(finished)},
          {"error", error ? nlohmann::json(*error) : nlohmann::json(nullptr)},
          {"has_report", has_report},
          {"owner", owner}};
}

JobRecord JobRecord::from_json(const nlohmann::json& doc) {
  JobRecord r;
  r.job_id = doc.at("job_id").get<std::string>();
  if (doc.contains("spec")) r.spec = JobSpec::from_json(doc.at("spec"));
  r.state = job_state_from_string(doc.at("state").get<std::string>());
  r.created = doc.value("created", "");
  if (doc.contains("started") && doc.at("started").is_string()) r.started = doc.at("started");
  if (doc.contains("finished") && doc.at("finished").is_string()) r.finished = doc.at("finished");
  if (doc.contains("error") && doc.at("error").is_string()) r.error = doc.at("error").get<std::string>();
  r.has_report = doc.value("has_report", false);
  r.owner = doc.value("owner", "");
  return r;
}

// ---- filesystem helpers ------------------------------------------------------

namespace {

std::string now_iso() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[40];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  char out[48];
  std::snprintf(out, sizeof out, "%s.%03dZ", buf, int(ms));
  return out;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCode::Internal, "cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Write-temp-then-rename, so readers see the old or the new file.
void write_atomic(const fs::path& p, std::string_view bytes) {
  static std::atomic<std::uint64_t> counter{0};
  const fs::path tmp = p.parent_path() / ("." + p.filename().string() + ".tmp" + std::to_string(::getpid()) + "." +
                                          std::to_string(counter++));
  {
    const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
    if (fd < 0) throw Error(ErrorCode::Internal, "cannot write " + tmp.string() + ": " + std::strerror(errno));
    std::size_t done = 0;
    while (done < bytes.size()) {
      const ssize_t w = ::write(fd, bytes.data() + done, bytes.size() - done);
      if (w < 0) {
        if (errno == EINTR) continue;
        ::close(fd);
        throw Error(ErrorCode::Internal, "write failed for " + tmp.string());
      }
      done += std::size_t(w);
    }
    ::fsync(fd);
    ::close(fd);
  }
  fs::rename(tmp, p);
}

nlohmann::json read_json(const fs::path& p) {
  try {
    return nlohmann::json::parse(read_text(p));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Internal, "corrupt store file " + p.string() + ": " + e.what());
  }
}

/// Ids are generated by the store; reject anything that could escape it.
bool safe_name(const std::string& s) {
  if (s.empty() || s.size() > 200 || s[0] == '.') return false;
  return std::all_of(s.begin(), s.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
  });
}

std::vector<std::string> child_names(const fs::path& dir) {
  std::vector<std::string> out;
  std::error_code ec;
  for (const auto& e : fs::directory_iterator(dir, ec)) {
    const std::string n = e.path().filename().string();
    if (!n.empty() && n[0] != '.') out.push_back(n);
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// Removes a directory so it vanishes in one step for readers.
void remove_dir(const fs::path& dir, const std::string& tag) {
  const fs::path trash = dir.parent_path() / (".trash-" + dir.filename().string() + "-" + tag);
  fs::rename(dir, trash);
  std::error_code ec;
  fs::remove_all(trash, ec);
}

std::string random_instance() {
  std::random_device rd;
  std::uint64_t v = (std::uint64_t(rd()) << 32) ^ rd() ^ std::uint64_t(::getpid());
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

/// Exclusive lock on the store root: a process mutex plus flock(2) on a
/// fresh descriptor, so threads and processes both serialize.
class Store::RootLock {
 public:
  explicit RootLock(const Store& s) : guard_(s.mutex_) {
    fd_ = ::open((s.root_ / ".lock").c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
    if (fd_ < 0) throw Error(ErrorCode::Internal, "cannot open the store lock");
    while (::flock(fd_, LOCK_EX) != 0) {
      if (errno != EINTR) {
        ::close(fd_);
        throw Error(ErrorCode::Internal, "cannot lock the store");
      }
    }
  }
  ~RootLock() {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }

 private:
  std::lock_guard<std::mutex> guard_;
  int fd_ = -1;
};

Store::Store(fs::path root) : root_(std::move(root)) {
  for (const char* sub : {"datasets", "jobs", "queue", "instances"}) fs::create_directories(root_ / sub);
  instance_ = random_instance();
  const fs::path lock = root_ / "instances" / (instance_ + ".lock");
  instance_fd_ = ::open(lock.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
  if (instance_fd_ < 0 || ::flock(instance_fd_, LOCK_EX | LOCK_NB) != 0) {
    throw Error(ErrorCode::Internal, "cannot register store instance under " + root_.string());
  }
}

Store::~Store() {
  std::error_code ec;
  fs::remove(root_ / "instances" / (instance_ + ".lock"), ec);
  if (instance_fd_ >= 0) ::close(instance_fd_);
}

bool Store::owner_alive(const std::string& owner) const {
  if (owner == instance_) return true;
  if (!safe_name(owner)) return false;
  const fs::path lock = root_ / "instances" / (owner + ".lock");
  const int fd = ::open(lock.c_str(), O_RDWR | O_CLOEXEC);
  if (fd < 0) return false;
  const bool held = ::flock(fd, LOCK_EX | LOCK_NB) != 0 && errno == EWOULDBLOCK;
  if (!held) {
    std::error_code ec;
    fs::remove(lock, ec);
  }
  ::close(fd);
  return held;
}

std::uint64_t Store::next_counter(const std::string& key) {
  const fs::path p = root_ / "counters.json";
  nlohmann::json c = fs::exists(p) ? read_json(p) : nlohmann::json::object();
  const std::uint64_t v = c.value(key, std::uint64_t{0}) + 1;
  c[key] = v;
  write_atomic(p, c.dump());
  return v;
}

fs::path Store::dataset_dir(const std::string& id) const {
  if (!safe_name(id) || !fs::is_directory(root_ / "datasets" / id)) {
    throw Error(ErrorCode::DatasetNotFound, "no dataset '" + id + "'");
  }
  return root_ / "datasets" / id;
}

fs::path Store::job_dir(const std::string& id) const {
  if (!safe_name(id) || !fs::is_directory(root_ / "jobs" / id)) {
    throw Error(ErrorCode::JobNotFound, "no job '" + id + "'");
  }
  return root_ / "jobs" / id;
}

// ---- datasets ----------------------------------------------------------------

DatasetSummary Store::add_dataset(std::string_view csv, const std::optional<std::string>& metadata_json,
                                  const std::string& name) {
  DatasetSummary s;
  DatasetMeta meta;
  Dataset ds;
  if (metadata_json) {
    meta = DatasetMeta::from_json_text(*metadata_json);
    ds = parse_csv(csv, &meta);
    s.warnings = validate_metadata(ds, meta);
  } else {
    ds = parse_csv(csv);
    InferredMeta inferred = infer_metadata(ds);
    meta = std::move(inferred.meta);
    s.warnings = std::move(inferred.warnings);
    // Stored data is always read back with its metadata; make sure that
    // reading agrees with what was just validated.
    ds = parse_csv(csv, &meta);
  }
  s.name = name;
  s.n_rows = ds.n_rows();
  s.n_features = ds.features.columns().size();
  s.class_names = ds.class_names;
  s.class_counts = ds.class_counts();
  s.created = now_iso();

  RootLock lock(*this);
  char id[32];
  std::snprintf(id, sizeof id, "ds-%06llu", static_cast<unsigned long long>(next_counter("dataset")));
  s.dataset_id = id;
  const fs::path tmp = root_ / "datasets" / (".tmp-" + s.dataset_id);
  fs::remove_all(tmp);
  fs::create_directories(tmp);
  write_atomic(tmp / "data.csv", csv);
  write_atomic(tmp / "metadata.json", meta.to_json().dump(2));
  write_atomic(tmp / "manifest.json", s.to_json().dump(2));
  fs::rename(tmp, root_ / "datasets" / s.dataset_id);
  return s;
}

std::vector<DatasetSummary> Store::list_datasets() const {
  std::vector<DatasetSummary> out;
  for (const auto& id : child_names(root_ / "datasets")) {
    try {
      out.push_back(DatasetSummary::from_json(read_json(root_ / "datasets" / id / "manifest.json")));
    } catch (const std::exception&) {
      // Deleted between listing and reading.
    }
  }
  return out;
}

DatasetSummary Store::dataset(const std::string& id) const {
  return DatasetSummary::from_json(read_json(dataset_dir(id) / "manifest.json"));
}

DatasetMeta Store::dataset_metadata(const std::string& id) const {
  return DatasetMeta::from_json(read_json(dataset_dir(id) / "metadata.json"));
}

Dataset Store::load_dataset(const std::string& id) const {
  const fs::path dir = dataset_dir(id);
  const DatasetMeta meta = DatasetMeta::from_json(read_json(dir / "metadata.json"));
  return parse_csv(read_text(dir / "data.csv"), &meta);
}

void Store::delete_dataset(const std::string& id) {
  RootLock lock(*this);
  const fs::path dir = dataset_dir(id);
  for (const auto& jid : child_names(root_ / "jobs")) {
    JobRecord r;
    try {
      r = read_job(jid);
    } catch (const std::exception&) {
      continue;
    }
    if (r.state != JobState::queued && r.state != JobState::running) continue;
    if (r.spec.dataset_id == id || r.spec.test_dataset_id == id) {
      throw Error(ErrorCode::DatasetInUse,
                  "dataset '" + id + "' is used by " + std::string(to_string(r.state)) + " job '" + jid + "'");
    }
  }
  remove_dir(dir, instance_);
}

// ---- jobs --------------------------------------------------------------------

JobRecord Store::read_job(const std::string& id) const {
  const fs::path dir = job_dir(id);
  nlohmann::json state = read_json(dir / "state.json");
  state["spec"] = read_json(dir / "spec.json");
  return JobRecord::from_json(state);
}

void Store::write_job(const JobRecord& r) const {
  nlohmann::json j = r.to_json();
  j.erase("spec");
  write_atomic(root_ / "jobs" / r.job_id / "state.json", j.dump(2));
}

void Store::transition(JobRecord& r, JobState to) const {
  if (!legal_transition(r.state, to)) {
    throw Error(ErrorCode::InvalidStateTransition, "job '" + r.job_id + "' cannot move from " +
                                                       std::string(to_string(r.state)) + " to " +
                                                       std::string(to_string(to)));
  }
  r.state = to;
}

JobRecord Store::create_job(const JobSpec& spec) {
  std::vector<FieldError> errors;
  std::optional<Dataset> train;
  try {
    train = load_dataset(spec.dataset_id);
  } catch (const Error& e) {
    errors.push_back({"dataset_id", e.code(), e.what()});
  }
  if (spec.test_dataset_id) {
    try {
      const Dataset test = load_dataset(*spec.test_dataset_id);
      if (train) align_encoding(test, *train);
    } catch (const Error& e) {
      errors.push_back({"test_dataset_id", e.code(), e.what()});
    }
  }
  for (auto& f : validate_job_spec(spec, train ? &*train : nullptr)) {
    if (f.field == "dataset_id" && !errors.empty()) continue;
    errors.push_back(std::move(f));
  }
  if (!errors.empty()) throw SpecRejected(std::move(errors));

  RootLock lock(*this);
  JobRecord r;
  char id[32];
  std::snprintf(id, sizeof id, "job-%06llu", static_cast<unsigned long long>(next_counter("job")));
  r.job_id = id;
  r.spec = spec;
  r.created = now_iso();
  const fs::path tmp = root_ / "jobs" / (".tmp-" + r.job_id);
  fs::remove_all(tmp);
  fs::create_directories(tmp / "artifacts");
  write_atomic(tmp / "spec.json", spec.to_json().dump(2));
  nlohmann::json state = r.to_json();
  state.erase("spec");
  write_atomic(tmp / "state.json", state.dump(2));
  write_atomic(tmp / "log.txt", "");
  fs::rename(tmp, root_ / "jobs" / r.job_id);
  return r;
}

std::vector<JobRecord> Store::list_jobs() const {
  std::vector<JobRecord> out;
  for (const auto& id : child_names(root_ / "jobs")) {
    try {
      out.push_back(read_job(id));
    } catch (const std::exception&) {
    }
  }
  return out;
}

JobRecord Store::job(const std::string& id) const { return read_job(id); }

JobRecord Store::submit(const std::string& id) {
  RootLock lock(*this);
  JobRecord r = read_job(id);
  transition(r, JobState::queued);
  char entry[64];
  std::snprintf(entry, sizeof entry, "%012llu_", static_cast<unsigned long long>(next_counter("queue")));
  // Queue entry first: a crash before the state write leaves an entry that
  // claim() discards, never a queued job that nothing will pick up.
  write_atomic(root_ / "queue" / (entry + id), id);
  write_job(r);
  return r;
}

std::optional<JobRecord> Store::claim() {
  RootLock lock(*this);
  for (const auto& entry : child_names(root_ / "queue")) {
    const fs::path p = root_ / "queue" / entry;
    const auto sep = entry.find('_');
    const std::string id = sep == std::string::npos ? "" : entry.substr(sep + 1);
    std::optional<JobRecord> r;
    try {
      r = read_job(id);
    } catch (const Error&) {
    }
    std::error_code ec;
    if (!r || r->state != JobState::queued) {
      fs::remove(p, ec);
      continue;
    }
    transition(*r, JobState::running);
    r->owner = instance_;
    r->started = now_iso();
    write_job(*r);
    fs::remove(p, ec);
    return r;
  }
  return std::nullopt;
}

void Store::append_log(const std::string& id, const std::string& line) {
  const fs::path p = job_dir(id) / "log.txt";
  const int fd = ::open(p.c_str(), O_WRONLY | O_APPEND | O_CLOEXEC);
  if (fd < 0) return;
  std::string text = line;
  std::replace(text.begin(), text.end(), '\n', ' ');
  text += '\n';
  // One write per line; O_APPEND keeps concurrent lines whole.
  [[maybe_unused]] const ssize_t w = ::write(fd, text.data(), text.size());
  ::close(fd);
}

std::vector<std::string> Store::log(const std::string& id) const {
  std::vector<std::string> lines;
  std::istringstream in(read_text(job_dir(id) / "log.txt"));
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  return lines;
}

void Store::finish(const std::string& id, const JobOutput& output) {
  RootLock lock(*this);
  JobRecord r = read_job(id);
  if (r.state != JobState::running || r.owner != instance_) {
    throw Error(ErrorCode::InvalidStateTransition, "job '" + id + "' is not running under this worker");
  }
  const fs::path dir = job_dir(id);
  for (const auto& a : output.artifacts) {
    if (!safe_name(a.name)) throw Error(ErrorCode::Internal, "bad artifact name '" + a.name + "'");
    write_atomic(dir / "artifacts" / a.name, a.bytes);
  }
  write_atomic(dir / "report.json", output.report.to_json().dump(2));
  transition(r, JobState::succeeded);
  r.has_report = true;
  r.finished = now_iso();
  r.owner.clear();
  write_job(r);
}

void Store::fail(const std::string& id, const std::string& reason) {
  RootLock lock(*this);
  JobRecord r = read_job(id);
  transition(r, JobState::failed);
  r.error = reason;
  r.finished = now_iso();
  r.owner.clear();
  write_job(r);
}

nlohmann::json Store::report(const std::string& id) const {
  const JobRecord r = read_job(id);
  if (r.state != JobState::succeeded) {
    throw Error(ErrorCode::JobNotFinished,
                "job '" + id + "' is " + std::string(to_string(r.state)) + "; results exist only for succeeded jobs");
  }
  return read_json(job_dir(id) / "report.json");
}

std::vector<ArtifactRef> Store::artifacts(const std::string& id) const {
  std::vector<ArtifactRef> out;
  const JobRecord r = read_job(id);
  if (r.state == JobState::succeeded) {
    const nlohmann::json report = read_json(job_dir(id) / "report.json");
    for (const auto& a : report.at("artifacts")) {
      out.push_back({a.at("name").get<std::string>(), a.at("content_type").get<std::string>()});
    }
  }
  out.push_back({"log.txt", "text/plain"});
  return out;
}

std::pair<std::string, std::string> Store::artifact(const std::string& id, const std::string& name) const {
  const fs::path dir = job_dir(id);
  if (safe_name(name)) {
    if (name == "log.txt") return {read_text(dir / "log.txt"), "text/plain"};
    for (const auto& a : artifacts(id)) {
      if (a.name == name && fs::exists(dir / "artifacts" / name)) {
        return {read_text(dir / "artifacts" / name), a.content_type};
      }
    }
  }
  throw Error(ErrorCode::ArtifactNotFound, "job '" + id + "' has no artifact '" + name + "'");
}

void Store::delete_job(const std::string& id) {
  RootLock lock(*this);
  const JobRecord r = read_job(id);
  if (r.state == JobState::running) {
    throw Error(ErrorCode::JobBusy, "job '" + id + "' is running and cannot be deleted");
  }
  for (const auto& entry : child_names(root_ / "queue")) {
    const auto sep = entry.find('_');
    if (sep != std::string::npos && entry.substr(sep + 1) == id) {
      std::error_code ec;
      fs::remove(root_ / "queue" / entry, ec);
    }
  }
  remove_dir(job_dir(id), instance_);
}

std::size_t Store::recover() {
  RootLock lock(*this);
  std::size_t marked = 0;
  std::set<std::string> enqueued;
  for (const auto& entry : child_names(root_ / "queue")) {
    const auto sep = entry.find('_');
    if (sep != std::string::npos) enqueued.insert(entry.substr(sep + 1));
  }
  for (const auto& id : child_names(root_ / "jobs")) {
    JobRecord r;
    try {
      r = read_job(id);
    } catch (const std::exception&) {
      continue;
    }
    if (r.state == JobState::running && !owner_alive(r.owner)) {
      transition(r, JobState::failed);
      r.error = "worker lost";
      r.finished = now_iso();
      r.owner.clear();
      write_job(r);
      ++marked;
    } else if (r.state == JobState::queued && !enqueued.count(id)) {
      char entry[64];
      std::snprintf(entry, sizeof entry, "%012llu_", static_cast<unsigned long long>(next_counter("queue")));
      write_atomic(root_ / "queue" / (entry + id), id);
    }
  }
  // Leftovers from interrupted writes and deletions.
  for (const char* sub : {"datasets", "jobs"}) {
    std::error_code ec;
    for (const auto& e : fs::directory_iterator(root_ / sub, ec)) {
      const std::string n = e.path().filename().string();
      if (n.rfind(".tmp-", 0) == 0 || n.rfind(".trash-", 0) == 0) fs::remove_all(e.path(), ec);
    }
  }
  return marked;
}

// ---- workers -----------------------------------------------------------------

bool run_next_job(Store& store) {
  const std::optional<JobRecord> r = store.claim();
  if (!r) return false;
  const std::string id = r->job_id;
  const auto log = [&](const std::string& line) { store.append_log(id, now_iso() + " " + line); };
  log("job started by worker " + store.instance());
  try {
    const JobOutput out =
        run_job(r->spec, [&](const std::string& ds) { return store.load_dataset(ds); }, log);
    for (const auto& w : out.report.warnings) log("warning: " + w);
    store.finish(id, out);
    log("job succeeded");
  } catch (const std::exception& e) {
    const auto* err = dynamic_cast<const Error*>(&e);
    const std::string reason = err ? std::string(err->code_name()) + ": " + e.what() : std::string(e.what());
    log("job failed: " + reason);
    try {
      store.fail(id, reason);
    } catch (const std::exception&) {
      // Already terminal; nothing more to record.
    }
  }
  return true;
}

WorkerPool::WorkerPool(Store& store, std::size_t n_workers, std::chrono::milliseconds poll)
    : store_(store), poll_(poll) {
  for (std::size_t i = 0; i < n_workers; ++i) threads_.emplace_back([this] { loop(); });
}

WorkerPool::~WorkerPool() { stop(); }

void WorkerPool::wake() {
  {
    std::lock_guard<std::mutex> g(mutex_);
    woken_ = true;
  }
  cv_.notify_all();
}

void WorkerPool::stop() {
  {
    std::lock_guard<std::mutex> g(mutex_);
    stopping_ = true;
  }
  cv_.notify_all();
  for (auto& t : threads_) {
    if (t.joinable()) t.join();
  }
  threads_.clear();
}

void WorkerPool::loop() {
  while (true) {
    {
      std::lock_guard<std::mutex> g(mutex_);
      if (stopping_) return;
    }
    bool ran = false;
    try {
      ran = run_next_job(store_);
    } catch (const std::exception&) {
    }
    if (!ran) {
      std::unique_lock<std::mutex> g(mutex_);
      cv_.wait_for(g, poll_, [this] { return stopping_ || woken_; });
      woken_ = false;
    }
  }
}

}  // namespace classify
