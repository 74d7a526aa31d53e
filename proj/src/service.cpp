#include "kpnet/service.hpp"

#include "kpnet/cloud_ops.hpp"
#include "kpnet/error.hpp"
#include "kpnet/io.hpp"
#include "kpnet/rng.hpp"

#include <httplib.h>

#include <fstream>
#include <set>

namespace kpnet {

namespace {

ApiResponse error_response(int status, const std::string& message) { return {status, {{"error", message}}}; }

int status_for(const Error& e) {
  switch (e.code()) {
    case ErrorCode::InvalidDecision: return 409;
    case ErrorCode::SchemaError:
    case ErrorCode::InvalidConfig: return 400;
    case ErrorCode::MissingFile: return 404;
    default: return 500;
  }
}

std::vector<int> cluster_ids(const ClusterResult& c) {
  std::set<int> ids;
  for (int l : c.labels)
    if (l >= 0) ids.insert(l);
  return {ids.begin(), ids.end()};
}

}  // namespace

KeypointService::KeypointService(ServiceOptions options) : options_(std::move(options)) {
  dataset_ = load_dataset(options_.data);
  for (std::size_t i = 0; i < dataset_.clouds.size(); ++i) index_[dataset_.clouds[i].id] = i;
  if (!options_.aggregated.empty()) {
    ClusterState st;
    st.clusters = clusters_from_json(read_json(options_.aggregated / "clusters.json"), dataset_.clouds);
    for (const auto& c : dataset_.clouds)
      st.sets.push_back(load_aggregated(options_.aggregated / "aggregated" / (c.id + ".json")));
    clusters_ = std::move(st);
  }
  replay();
}

KeypointService::~KeypointService() { wait_for_jobs(); }

void KeypointService::wait_for_jobs() {
  std::vector<std::thread> workers;
  {
    std::unique_lock lock(mutex_);
    workers.swap(workers_);
  }
  for (auto& t : workers) t.join();
}

std::optional<std::size_t> KeypointService::model_index(const std::string& id) const {
  const auto it = index_.find(id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

void KeypointService::journal(const nlohmann::json& entry) {
  if (options_.journal.empty()) return;
  std::lock_guard lock(journal_mutex_);
  if (options_.journal.has_parent_path()) std::filesystem::create_directories(options_.journal.parent_path());
  std::ofstream out(options_.journal, std::ios::app);
  if (!out) throw Error(ErrorCode::IoError, "cannot append to journal " + options_.journal.string());
  out << entry.dump() << '\n';
  out.flush();
}

void KeypointService::replay() {
  if (options_.journal.empty() || !std::filesystem::exists(options_.journal)) return;
  std::ifstream in(options_.journal);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json e;
    try {
      e = nlohmann::json::parse(line);
      const auto op = e.at("op").get<std::string>();
      if (op == "annotation") {
        const auto labels = annotations_from_json({{"model_id", e.at("model")}, {"annotators", {e.at("labels")}}});
        apply_annotation(e.at("model").get<std::string>(), labels.annotators.at(0));
      } else if (op == "decision") {
        ClusterDecision d{decision_action_from_string(e.at("action").get<std::string>()), e.value("target", -1)};
        apply_decision(e.at("cluster").get<int>(), d);
      } else if (op == "aggregate") {
        apply_aggregate(e.at("payload"));
        next_job_ = std::max(next_job_, e.at("job").get<int>() + 1);
        jobs_[e.at("job").get<int>()] = Job{"done", e.at("payload").value("diagnostics", nlohmann::json::object())};
      } else {
        throw Error(ErrorCode::SchemaError, "unknown journal op '" + op + "'");
      }
    } catch (const nlohmann::json::exception& ex) {
      throw Error(ErrorCode::SchemaError, "journal line " + std::to_string(lineno) + ": " + ex.what());
    }
  }
}

void KeypointService::apply_annotation(const std::string& id, const AnnotatorLabels& labels) {
  auto& set = dataset_.annotations[index_.at(id)];
  for (auto& a : set.annotators)
    if (a.annotator == labels.annotator) {
      a.keypoints = labels.keypoints;  // last writer wins per annotator
      return;
    }
  set.annotators.push_back(labels);
}

void KeypointService::apply_decision(int cluster, const ClusterDecision& d) {
  if (!clusters_) throw Error(ErrorCode::InvalidDecision, "no clusters to decide on");
  clusters_->decisions.decisions[cluster] = d;
}

void KeypointService::apply_aggregate(const nlohmann::json& payload) {
  ClusterState st;
  st.clusters = clusters_from_json(payload.at("clusters"), dataset_.clouds);
  for (const auto& s : payload.at("sets")) st.sets.push_back(aggregated_from_json(s));
  clusters_ = std::move(st);
}

ApiResponse KeypointService::list_models() const {
  std::shared_lock lock(mutex_);
  nlohmann::json arr = nlohmann::json::array();
  for (std::size_t i = 0; i < dataset_.clouds.size(); ++i) {
    const auto& e = dataset_.manifest.entries[i];
    arr.push_back({{"id", e.id},
                   {"category", e.category},
                   {"split", to_string(e.split)},
                   {"annotators", dataset_.annotations[i].annotators.size()}});
  }
  return {200, arr};
}

ApiResponse KeypointService::get_cloud(const std::string& id) const {
  std::shared_lock lock(mutex_);
  const auto m = model_index(id);
  if (!m) return error_response(404, "unknown model '" + id + "'");
  return {200, cloud_to_json(dataset_.clouds[*m])};
}

ApiResponse KeypointService::get_annotations(const std::string& id) const {
  std::shared_lock lock(mutex_);
  const auto m = model_index(id);
  if (!m) return error_response(404, "unknown model '" + id + "'");
  return {200, annotations_to_json(dataset_.annotations[*m])};
}

ApiResponse KeypointService::post_annotations(const std::string& id, const std::string& body) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& ex) {
    return error_response(400, std::string("body is not JSON: ") + ex.what());
  }
  if (!j.is_object() || !j.contains("annotator") || !j["annotator"].is_string() || !j.contains("keypoints") ||
      !j["keypoints"].is_array())
    return error_response(400, "expected {\"annotator\": string, \"keypoints\": [[x, y, z], ...]}");
  AnnotatorLabels labels;
  labels.annotator = j["annotator"].get<std::string>();
  for (const auto& p : j["keypoints"]) {
    if (!p.is_array() || p.size() != 3 || !p[0].is_number() || !p[1].is_number() || !p[2].is_number())
      return error_response(400, "every keypoint must be [x, y, z]");
    labels.keypoints.emplace_back(p[0].get<double>(), p[1].get<double>(), p[2].get<double>());
  }
  if (labels.keypoints.size() > kMaxAnnotatorKeypoints)
    return error_response(422, "at most " + std::to_string(kMaxAnnotatorKeypoints) + " keypoints per annotator");

  std::unique_lock lock(mutex_);
  const auto m = model_index(id);
  if (!m) return error_response(404, "unknown model '" + id + "'");
  const auto& cloud = dataset_.clouds[*m];
  nlohmann::json indices = nlohmann::json::array();
  for (auto& p : labels.keypoints) {
    const int v = snap_to_vertex(cloud, p);
    p = cloud.point(static_cast<std::size_t>(v));
    indices.push_back(v);
  }
  apply_annotation(id, labels);
  const auto labels_json = annotations_to_json(RawAnnotationSet{id, {labels}})["annotators"][0];
  journal({{"op", "annotation"}, {"model", id}, {"labels", labels_json}});
  auto out = labels_json;
  out["model_id"] = id;
  out["point_indices"] = indices;
  return {200, out};
}

nlohmann::json KeypointService::cluster_view(int root, const std::map<int, int>& resolved) const {
  const auto& st = *clusters_;
  std::vector<int> sources;
  for (const auto& [id, r] : resolved)
    if (r == root) sources.push_back(id);
  nlohmann::json members = nlohmann::json::array();
  for (std::size_t i = 0; i < st.clusters.candidates.size(); ++i) {
    const int label = st.clusters.labels[i];
    if (label < 0 || resolved.at(label) != root) continue;
    const auto& c = st.clusters.candidates[i];
    members.push_back({{"model", dataset_.clouds[c.model].id},
                       {"point_index", c.point},
                       {"fidelity", c.fidelity},
                       {"xy", {st.clusters.coords(static_cast<Eigen::Index>(i), 0),
                               st.clusters.coords(static_cast<Eigen::Index>(i), 1)}},
                       {"source_cluster", label}});
  }
  nlohmann::json keypoints = nlohmann::json::array();
  for (const auto& s : st.sets)
    for (const auto& k : s.keypoints)
      if (resolved.count(k.semantic_index) && resolved.at(k.semantic_index) == root)
        keypoints.push_back({{"model", s.model_id}, {"point_index", k.point_index}, {"source_cluster", k.semantic_index}});
  const auto it = st.decisions.decisions.find(root);
  const std::string status = it == st.decisions.decisions.end() ? "pending" : to_string(it->second.action);
  return {{"id", root},        {"status", status},      {"size", members.size()},
          {"sources", sources}, {"members", members},    {"keypoints", keypoints}};
}

ApiResponse KeypointService::list_clusters() const {
  std::shared_lock lock(mutex_);
  nlohmann::json arr = nlohmann::json::array();
  if (!clusters_) return {200, arr};
  const auto resolved = resolve_decisions(cluster_ids(clusters_->clusters), clusters_->decisions);
  std::set<int> roots;
  for (const auto& [id, r] : resolved)
    if (r >= 0) roots.insert(r);
  for (int r : roots) arr.push_back(cluster_view(r, resolved));
  return {200, arr};
}

ApiResponse KeypointService::get_cluster(int id) const {
  std::shared_lock lock(mutex_);
  if (!clusters_) return error_response(404, "no clusters available");
  const auto resolved = resolve_decisions(cluster_ids(clusters_->clusters), clusters_->decisions);
  const auto it = resolved.find(id);
  if (it == resolved.end() || it->second != id) return error_response(404, "cluster " + std::to_string(id) + " is not live");
  return {200, cluster_view(id, resolved)};
}

ApiResponse KeypointService::post_decision(int id, const std::string& body) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& ex) {
    return error_response(400, std::string("body is not JSON: ") + ex.what());
  }
  if (!j.is_object() || !j.contains("action") || !j["action"].is_string())
    return error_response(400, "expected {\"action\": \"accept\"|\"reject\"|\"merge\", \"target\": int}");
  ClusterDecision d;
  try {
    d.action = decision_action_from_string(j["action"].get<std::string>());
  } catch (const Error& e) {
    return error_response(400, e.what());
  }
  if (d.action == DecisionAction::Merge) {
    if (!j.contains("target") || !j["target"].is_number_integer())
      return error_response(400, "merge needs an integer \"target\"");
    d.target = j["target"].get<int>();
  }

  std::unique_lock lock(mutex_);
  if (!clusters_) return error_response(404, "no clusters available");
  const auto ids = cluster_ids(clusters_->clusters);
  if (!std::binary_search(ids.begin(), ids.end(), id)) return error_response(404, "unknown cluster " + std::to_string(id));
  auto tentative = clusters_->decisions;
  tentative.decisions[id] = d;
  try {
    resolve_decisions(ids, tentative);
  } catch (const Error& e) {
    return error_response(status_for(e), e.what());
  }
  apply_decision(id, d);
  nlohmann::json entry = {{"op", "decision"}, {"cluster", id}, {"action", to_string(d.action)}};
  if (d.action == DecisionAction::Merge) entry["target"] = d.target;
  journal(entry);
  return {200, {{"cluster", id}, {"action", to_string(d.action)}, {"target", d.target}}};
}

ApiResponse KeypointService::start_aggregate(const std::string& body) {
  PipelineConfig cfg = options_.config;
  if (!body.empty()) {
    try {
      cfg = PipelineConfig::from_json(nlohmann::json::parse(body), cfg);
      cfg.validate();
    } catch (const nlohmann::json::exception& ex) {
      return error_response(400, std::string("body is not JSON: ") + ex.what());
    } catch (const Error& e) {
      return error_response(400, e.what());
    }
  }
  std::unique_lock lock(mutex_);
  const int job = next_job_++;
  jobs_[job] = Job{};
  auto clouds = dataset_.clouds;
  auto annotations = dataset_.annotations;
  workers_.emplace_back([this, job, cfg, clouds = std::move(clouds), annotations = std::move(annotations)] {
    {
      std::unique_lock l(mutex_);
      jobs_[job].status = "running";
    }
    try {
      AggregateConfig ac = cfg.aggregate;
      ac.seed = stage_seed(cfg.seed, "aggregate");
      const auto result = aggregate_run(clouds, annotations, ac);
      nlohmann::json sets = nlohmann::json::array();
      for (const auto& s : result.sets) sets.push_back(aggregated_to_json(s));
      const nlohmann::json payload = {{"clusters", clusters_to_json(result.clusters, clouds)},
                                      {"sets", sets},
                                      {"diagnostics", result.diagnostics.to_json(false)}};
      std::unique_lock l(mutex_);
      apply_aggregate(payload);
      journal({{"op", "aggregate"}, {"job", job}, {"payload", payload}});
      jobs_[job] = Job{"done", payload["diagnostics"]};
    } catch (const std::exception& e) {
      std::unique_lock l(mutex_);
      jobs_[job] = Job{"failed", {{"error", e.what()}}};
    }
  });
  return {202, {{"job", job}, {"status", "queued"}}};
}

ApiResponse KeypointService::get_job(int id) const {
  std::shared_lock lock(mutex_);
  const auto it = jobs_.find(id);
  if (it == jobs_.end()) return error_response(404, "unknown job " + std::to_string(id));
  return {200, {{"job", id}, {"status", it->second.status}, {"result", it->second.result}}};
}

nlohmann::json KeypointService::snapshot() const {
  std::shared_lock lock(mutex_);
  nlohmann::json ann = nlohmann::json::array();
  for (const auto& a : dataset_.annotations) ann.push_back(annotations_to_json(a));
  nlohmann::json out = {{"annotations", ann}};
  if (clusters_) {
    nlohmann::json sets = nlohmann::json::array();
    for (const auto& s : clusters_->sets) sets.push_back(aggregated_to_json(s));
    nlohmann::json decisions = nlohmann::json::object();
    for (const auto& [id, d] : clusters_->decisions.decisions)
      decisions[std::to_string(id)] = {{"action", to_string(d.action)}, {"target", d.target}};
    out["clusters"] = clusters_to_json(clusters_->clusters, dataset_.clouds);
    out["sets"] = sets;
    out["decisions"] = decisions;
  }
  return out;
}

void bind_routes(httplib::Server& server, KeypointService& service) {
  // httplib's default also sets SO_REUSEPORT, which lets a second server share a busy port
  server.set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof(yes));
  });
  auto send = [](httplib::Response& res, const ApiResponse& r) {
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };
  auto guarded = [send](auto fn) {
    return [fn, send](const httplib::Request& req, httplib::Response& res) {
      try {
        send(res, fn(req));
      } catch (const Error& e) {
        send(res, error_response(status_for(e), e.what()));
      } catch (const std::exception& e) {
        send(res, error_response(500, e.what()));
      }
    };
  };
  server.Get("/models", guarded([&](const httplib::Request&) { return service.list_models(); }));
  server.Get(R"(/models/([^/]+)/cloud)",
             guarded([&](const httplib::Request& req) { return service.get_cloud(req.matches[1]); }));
  server.Get(R"(/models/([^/]+)/annotations)",
             guarded([&](const httplib::Request& req) { return service.get_annotations(req.matches[1]); }));
  server.Post(R"(/models/([^/]+)/annotations)", guarded([&](const httplib::Request& req) {
                return service.post_annotations(req.matches[1], req.body);
              }));
  server.Get("/clusters", guarded([&](const httplib::Request&) { return service.list_clusters(); }));
  server.Get(R"(/clusters/(-?\d+))",
             guarded([&](const httplib::Request& req) { return service.get_cluster(std::stoi(req.matches[1])); }));
  server.Post(R"(/clusters/(-?\d+)/decision)", guarded([&](const httplib::Request& req) {
                return service.post_decision(std::stoi(req.matches[1]), req.body);
              }));
  server.Post("/jobs/aggregate", guarded([&](const httplib::Request& req) { return service.start_aggregate(req.body); }));
  server.Get(R"(/jobs/(\d+))",
             guarded([&](const httplib::Request& req) { return service.get_job(std::stoi(req.matches[1])); }));
}

void serve_forever(KeypointService& service, const std::string& host, int port) {
  httplib::Server server;
  bind_routes(server, service);
  if (!server.bind_to_port(host, port))
    throw Error(ErrorCode::IoError, "cannot bind " + host + ":" + std::to_string(port) + " (port busy?)");
  server.listen_after_bind();
}

}  // namespace kpnet
