// Before httplib: <resolv.h> defines a `_res` macro that collides with Eigen.
#include "classify/service.hpp"

#include <httplib.h>

#include <chrono>
#include <thread>

namespace classify {

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingRequiredColumn:
    case ErrorCode::ForbiddenString:
    case ErrorCode::EmptyDataset:
    case ErrorCode::RaggedRow:
    case ErrorCode::MissingLabel:
    case ErrorCode::SingleClass:
    case ErrorCode::MetadataMismatch:
    case ErrorCode::TooFewRows:
    case ErrorCode::SchemaMismatch:
    case ErrorCode::BadRequest:
      return 400;
    case ErrorCode::DatasetNotFound:
    case ErrorCode::JobNotFound:
    case ErrorCode::ArtifactNotFound:
      return 404;
    case ErrorCode::InvalidStateTransition:
    case ErrorCode::JobNotFinished:
    case ErrorCode::JobBusy:
    case ErrorCode::DatasetInUse:
      return 409;
    case ErrorCode::Internal:
      return 500;
    default:
      return 422;
  }
}

nlohmann::json error_body(const Error& e) {
  nlohmann::json j = {{"code", e.code_name()}, {"message", e.what()}};
  const auto& loc = e.location();
  if (loc.row || loc.column) {
    j["location"] = {{"row", loc.row ? nlohmann::json(*loc.row) : nlohmann::json(nullptr)},
                     {"column", loc.column ? nlohmann::json(*loc.column) : nlohmann::json(nullptr)}};
  }
  if (const auto* rej = dynamic_cast<const SpecRejected*>(&e)) {
    nlohmann::json fields = nlohmann::json::array();
    for (const auto& f : rej->fields()) fields.push_back(f.to_json());
    j["fields"] = fields;
  }
  return j;
}

struct ApiServer::Impl {
  Store& store;
  ServerOptions options;
  httplib::Server server;
  std::unique_ptr<WorkerPool> pool;
  std::thread background;

  Impl(Store& s, ServerOptions o) : store(s), options(std::move(o)) {}

  static void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  static void send_error(httplib::Response& res, const Error& e, std::optional<int> status = std::nullopt) {
    send_json(res, status.value_or(http_status(e.code())), error_body(e));
  }

  /// Wraps a handler so every failure becomes a JSON error body.
  template <class F>
  auto guarded(F fn) {
    return [fn](const httplib::Request& req, httplib::Response& res) {
      try {
        fn(req, res);
      } catch (const SpecRejected& e) {
        send_error(res, e, 422);
      } catch (const Error& e) {
        send_error(res, e);
      } catch (const nlohmann::json::exception& e) {
        send_error(res, Error(ErrorCode::BadRequest, std::string("malformed JSON: ") + e.what()));
      } catch (const std::exception& e) {
        send_error(res, Error(ErrorCode::Internal, e.what()));
      }
    };
  }

  std::vector<std::string> jobs_using(const std::string& dataset_id) const {
    std::vector<std::string> ids;
    for (const auto& j : store.list_jobs()) {
      if (j.spec.dataset_id == dataset_id || j.spec.test_dataset_id == dataset_id) ids.push_back(j.job_id);
    }
    return ids;
  }

  nlohmann::json job_json(const JobRecord& r, bool with_log) const {
    nlohmann::json j = r.to_json();
    j.erase("owner");
    j["results_url"] = r.state == JobState::succeeded ? nlohmann::json("/api/jobs/" + r.job_id + "/results")
                                                      : nlohmann::json(nullptr);
    if (with_log) j["log"] = store.log(r.job_id);
    return j;
  }

  void upload(const httplib::Request& req, httplib::Response& res) {
    std::string csv, name;
    std::optional<std::string> metadata;
    if (req.is_multipart_form_data()) {
      if (req.has_file("data")) csv = req.get_file_value("data").content;
      else if (req.has_file("file")) csv = req.get_file_value("file").content;
      else throw Error(ErrorCode::BadRequest, "multipart upload needs a 'data' part with the CSV");
      if (req.has_file("metadata")) {
        metadata = req.get_file_value("metadata").content;
        if (metadata->empty()) metadata.reset();
      }
      if (req.has_file("name")) name = req.get_file_value("name").content;
    } else if (req.get_header_value("Content-Type").rfind("application/json", 0) == 0) {
      const auto doc = nlohmann::json::parse(req.body);
      csv = doc.at("csv").get<std::string>();
      if (doc.contains("metadata") && !doc.at("metadata").is_null()) {
        metadata = doc.at("metadata").is_string() ? doc.at("metadata").get<std::string>() : doc.at("metadata").dump();
      }
      name = doc.value("name", "");
    } else {
      csv = req.body;
      if (req.has_param("name")) name = req.get_param_value("name");
    }
    const DatasetSummary s = store.add_dataset(csv, metadata, name);
    send_json(res, 201, s.to_json());
  }

  void create_job(const httplib::Request& req, httplib::Response& res) {
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(req.body);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::BadRequest, std::string("request body is not JSON: ") + e.what());
    }
    JobSpec spec;
    try {
      spec = JobSpec::from_json(doc);
    } catch (const Error& e) {
      const std::string field = e.location().column.value_or("spec");
      throw SpecRejected({{field, e.code(), e.what()}});
    }
    const JobRecord r = store.create_job(spec);
    send_json(res, 201, job_json(r, false));
  }

  void routes() {
    auto& s = server;
    s.Get("/api/health", guarded([](const httplib::Request&, httplib::Response& res) {
            send_json(res, 200, {{"status", "ok"}, {"report_format_version", kReportFormatVersion}});
          }));
    s.Post("/api/datasets", guarded([this](const httplib::Request& q, httplib::Response& r) { upload(q, r); }));
    s.Get("/api/datasets", guarded([this](const httplib::Request&, httplib::Response& res) {
            nlohmann::json arr = nlohmann::json::array();
            for (const auto& d : store.list_datasets()) {
              nlohmann::json j = d.to_json();
              j["jobs"] = jobs_using(d.dataset_id);
              arr.push_back(j);
            }
            send_json(res, 200, {{"datasets", arr}});
          }));
    s.Get(R"(/api/datasets/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const std::string id = req.matches[1];
            nlohmann::json j = store.dataset(id).to_json();
            j["metadata"] = store.dataset_metadata(id).to_json();
            j["jobs"] = jobs_using(id);
            send_json(res, 200, j);
          }));
    s.Delete(R"(/api/datasets/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
               const std::string id = req.matches[1];
               store.delete_dataset(id);
               send_json(res, 200, {{"deleted", id}});
             }));
    s.Post("/api/jobs", guarded([this](const httplib::Request& q, httplib::Response& r) { create_job(q, r); }));
    s.Get("/api/jobs", guarded([this](const httplib::Request&, httplib::Response& res) {
            nlohmann::json arr = nlohmann::json::array();
            for (const auto& j : store.list_jobs()) arr.push_back(job_json(j, false));
            send_json(res, 200, {{"jobs", arr}});
          }));
    s.Get(R"(/api/jobs/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
            send_json(res, 200, job_json(store.job(req.matches[1]), true));
          }));
    s.Post(R"(/api/jobs/([^/]+)/submit)", guarded([this](const httplib::Request& req, httplib::Response& res) {
             const JobRecord r = store.submit(req.matches[1]);
             if (pool) pool->wake();
             send_json(res, 200, job_json(r, false));
           }));
    s.Get(R"(/api/jobs/([^/]+)/results)", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const std::string id = req.matches[1];
            nlohmann::json report = store.report(id);
            nlohmann::json arts = nlohmann::json::array();
            for (const auto& a : store.artifacts(id)) {
              arts.push_back({{"name", a.name},
                              {"content_type", a.content_type},
                              {"url", "/api/jobs/" + id + "/artifacts/" + a.name}});
            }
            send_json(res, 200, {{"job_id", id}, {"report", report}, {"artifacts", arts}});
          }));
    s.Get(R"(/api/jobs/([^/]+)/artifacts/([^/]+))",
          guarded([this](const httplib::Request& req, httplib::Response& res) {
            auto [bytes, type] = store.artifact(req.matches[1], req.matches[2]);
            res.status = 200;
            res.set_header("Content-Disposition", "attachment; filename=\"" + std::string(req.matches[2]) + "\"");
            res.set_content(std::move(bytes), type);
          }));
    s.Delete(R"(/api/jobs/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
               const std::string id = req.matches[1];
               store.delete_job(id);
               send_json(res, 200, {{"deleted", id}});
             }));
    s.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr) {
      send_error(res, Error(ErrorCode::Internal, "unexpected server error"));
    });
    if (options.static_dir) s.set_mount_point("/", options.static_dir->string());
  }
};

ApiServer::ApiServer(Store& store, ServerOptions options)
    : impl_(std::make_unique<Impl>(store, std::move(options))) {
  store.recover();
  impl_->routes();
  if (impl_->options.workers > 0) impl_->pool = std::make_unique<WorkerPool>(store, impl_->options.workers);
}

ApiServer::~ApiServer() { stop(); }

bool ApiServer::listen() { return impl_->server.listen(impl_->options.host, impl_->options.port); }

int ApiServer::start_background() {
  const int port = impl_->server.bind_to_any_port(impl_->options.host);
  if (port <= 0) throw Error(ErrorCode::Internal, "cannot bind " + impl_->options.host);
  impl_->background = std::thread([this] { impl_->server.listen_after_bind(); });
  while (!impl_->server.is_running()) std::this_thread::sleep_for(std::chrono::milliseconds(1));
  return port;
}

void ApiServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->background.joinable()) impl_->background.join();
  if (impl_->pool) impl_->pool->stop();
}

}  // namespace classify
