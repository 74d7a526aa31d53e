#pragma once

#include "kpnet/aggregate.hpp"
#include "kpnet/pipeline.hpp"

#include <json.hpp>

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <thread>
#include <vector>

namespace httplib {
class Server;
}

namespace kpnet {

struct ServiceOptions {
  std::filesystem::path data;        // dataset directory
  std::filesystem::path aggregated;  // optional aggregate output to seed /clusters
  std::filesystem::path journal;     // append-only JSONL; replayed at startup
  PipelineConfig config{};
};

struct ApiResponse {
  int status = 200;
  nlohmann::json body;
};

/// In-memory state behind the HTTP API. Reads share a lock; every mutation
/// takes the writer lock, is applied, then appended to the journal.
class KeypointService {
 public:
  explicit KeypointService(ServiceOptions options);
  ~KeypointService();

  ApiResponse list_models() const;
  ApiResponse get_cloud(const std::string& id) const;
  ApiResponse get_annotations(const std::string& id) const;
  ApiResponse post_annotations(const std::string& id, const std::string& body);
  ApiResponse list_clusters() const;
  ApiResponse get_cluster(int id) const;
  ApiResponse post_decision(int id, const std::string& body);
  ApiResponse start_aggregate(const std::string& body);
  ApiResponse get_job(int id) const;

  /// Annotations, cluster state and decisions as one JSON value; two services
  /// with equal snapshots serve identical responses.
  nlohmann::json snapshot() const;
  void wait_for_jobs();

 private:
  struct ClusterState {
    ClusterResult clusters;
    std::vector<AggregatedKeypointSet> sets;  // semantic index = cluster id
    VerificationDecision decisions;
  };
  struct Job {
    std::string status = "queued";
    nlohmann::json result;
  };

  void apply_annotation(const std::string& id, const AnnotatorLabels& labels);
  void apply_decision(int cluster, const ClusterDecision& d);
  void apply_aggregate(const nlohmann::json& payload);
  void journal(const nlohmann::json& entry);
  void replay();
  nlohmann::json cluster_view(int root, const std::map<int, int>& resolved) const;
  std::optional<std::size_t> model_index(const std::string& id) const;

  ServiceOptions options_;
  Dataset dataset_;
  std::map<std::string, std::size_t> index_;
  std::optional<ClusterState> clusters_;
  std::map<int, Job> jobs_;
  int next_job_ = 1;
  mutable std::shared_mutex mutex_;
  std::mutex journal_mutex_;
  std::vector<std::thread> workers_;
};

/// Routes the API onto `server`.
void bind_routes(httplib::Server& server, KeypointService& service);

/// Binds and serves until the server is stopped; throws IoError when the port
/// cannot be bound.
void serve_forever(KeypointService& service, const std::string& host, int port);

}  // namespace kpnet
