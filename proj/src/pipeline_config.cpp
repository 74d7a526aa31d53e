#include "kpnet/pipeline_config.hpp"

#include "kpnet/error.hpp"
#include "kpnet/io.hpp"

#include <set>

namespace kpnet {

namespace {

nlohmann::json train_json(const TrainConfig& t) {
  return {{"learning_rate", t.learning_rate}, {"epochs", t.epochs},         {"batch_models", t.batch_models},
          {"margin", t.margin},               {"noise_sigma", t.noise_sigma}, {"lambda_consistency", t.lambda_consistency},
          {"hidden", t.shape.hidden},         {"mid", t.shape.mid}};
}

// reads `key` into `out` when present; type mismatches are config errors
template <typename T>
void take(const nlohmann::json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw Error(ErrorCode::InvalidConfig, where + "." + key + " has the wrong type");
  }
}

void only_keys(const nlohmann::json& j, std::initializer_list<const char*> keys, const std::string& where) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidConfig, where + " must be an object");
  std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& [k, v] : j.items())
    if (!allowed.count(k)) throw Error(ErrorCode::InvalidConfig, "unknown config key " + where + "." + k);
}

void read_train(const nlohmann::json& j, TrainConfig& t, const std::string& where) {
  only_keys(j, {"learning_rate", "epochs", "batch_models", "margin", "noise_sigma", "lambda_consistency", "hidden", "mid"},
            where);
  take(j, "learning_rate", t.learning_rate, where);
  take(j, "epochs", t.epochs, where);
  take(j, "batch_models", t.batch_models, where);
  take(j, "margin", t.margin, where);
  take(j, "noise_sigma", t.noise_sigma, where);
  take(j, "lambda_consistency", t.lambda_consistency, where);
  take(j, "hidden", t.shape.hidden, where);
  take(j, "mid", t.shape.mid, where);
}

}  // namespace

void PipelineConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::InvalidConfig, what); };
  if (synth.models < 2) fail("synth.models must be at least 2");
  if (synth.annotators < 1) fail("synth.annotators must be at least 1");
  if (synth.sigma < 0.0) fail("synth.sigma must be non-negative");
  if (synth.miss_rate < 0.0 || synth.miss_rate > 1.0) fail("synth.miss_rate must lie in [0, 1]");
  if (synth.spurious_rate < 0.0 || synth.spurious_rate > 1.0) fail("synth.spurious_rate must lie in [0, 1]");
  aggregate.validate();
  if (embed.margin <= 0.0) fail("embed.margin must be positive");
  embed.validate();
  if (project.resolution < 8) fail("project.resolution must be at least 8");
  if (!(project.distance > 1.0)) fail("project.distance must exceed 1 (clouds fill the unit ball)");
  if (!(project.radius > 0.0)) fail("project.radius must be positive");
  if (project.min_elevation_deg < -90.0 || project.max_elevation_deg > 90.0 ||
      project.min_elevation_deg > project.max_elevation_deg)
    fail("project elevation band must lie within [-90, 90]");
  project.finetune.validate();
  if (!(evaluate.alpha > 0.0)) fail("evaluate.alpha must be positive");
}

nlohmann::json PipelineConfig::to_json() const {
  const auto& a = aggregate;
  return {
      {"seed", seed},
      {"synth",
       {{"kind", to_string(synth.kind)},
        {"models", synth.models},
        {"annotators", synth.annotators},
        {"sigma", synth.sigma},
        {"miss_rate", synth.miss_rate},
        {"spurious_rate", synth.spurious_rate}}},
      {"aggregate",
       {{"sigma", a.sigma},
        {"graph_k", a.graph_k},
        {"smooth_bandwidth", a.smooth_bandwidth},
        {"neighborhood", a.neighborhood},
        {"bootstrap_eps", a.bootstrap_eps},
        {"bootstrap_min_fraction", a.bootstrap_min_fraction},
        {"perplexity", a.perplexity},
        {"tsne_iterations", a.tsne_iterations},
        {"cluster_eps", a.cluster_eps},
        {"cluster_min_fraction", a.cluster_min_fraction},
        {"max_candidates", a.max_candidates},
        {"support_fraction", a.support_fraction},
        {"iterations", a.iterations},
        {"train", train_json(a.train)}}},
      {"embed", train_json(embed)},
      {"project",
       {{"resolution", project.resolution},
        {"distance", project.distance},
        {"radius", project.radius},
        {"steps", project.finetune.steps},
        {"learning_rate", project.finetune.learning_rate},
        {"min_elevation_deg", project.min_elevation_deg},
        {"max_elevation_deg", project.max_elevation_deg}}},
      {"evaluate", {{"alpha", evaluate.alpha}, {"symmetric", evaluate.symmetric}}},
  };
}

PipelineConfig PipelineConfig::from_json(const nlohmann::json& j, PipelineConfig c) {
  only_keys(j, {"seed", "synth", "aggregate", "embed", "project", "evaluate"}, "config");
  take(j, "seed", c.seed, "config");
  if (j.contains("synth")) {
    const auto& s = j["synth"];
    only_keys(s, {"kind", "models", "annotators", "sigma", "miss_rate", "spurious_rate"}, "synth");
    if (s.contains("kind")) {
      std::string kind;
      take(s, "kind", kind, "synth");
      c.synth.kind = shape_kind_from_string(kind);
    }
    take(s, "models", c.synth.models, "synth");
    take(s, "annotators", c.synth.annotators, "synth");
    take(s, "sigma", c.synth.sigma, "synth");
    take(s, "miss_rate", c.synth.miss_rate, "synth");
    take(s, "spurious_rate", c.synth.spurious_rate, "synth");
  }
  if (j.contains("aggregate")) {
    const auto& s = j["aggregate"];
    auto& a = c.aggregate;
    only_keys(s,
              {"sigma", "graph_k", "smooth_bandwidth", "neighborhood", "bootstrap_eps", "bootstrap_min_fraction",
               "perplexity", "tsne_iterations", "cluster_eps", "cluster_min_fraction", "max_candidates",
               "support_fraction", "iterations", "train"},
              "aggregate");
    take(s, "sigma", a.sigma, "aggregate");
    take(s, "graph_k", a.graph_k, "aggregate");
    take(s, "smooth_bandwidth", a.smooth_bandwidth, "aggregate");
    take(s, "neighborhood", a.neighborhood, "aggregate");
    take(s, "bootstrap_eps", a.bootstrap_eps, "aggregate");
    take(s, "bootstrap_min_fraction", a.bootstrap_min_fraction, "aggregate");
    take(s, "perplexity", a.perplexity, "aggregate");
    take(s, "tsne_iterations", a.tsne_iterations, "aggregate");
    take(s, "cluster_eps", a.cluster_eps, "aggregate");
    take(s, "cluster_min_fraction", a.cluster_min_fraction, "aggregate");
    take(s, "max_candidates", a.max_candidates, "aggregate");
    take(s, "support_fraction", a.support_fraction, "aggregate");
    take(s, "iterations", a.iterations, "aggregate");
    if (s.contains("train")) read_train(s["train"], a.train, "aggregate.train");
  }
  if (j.contains("embed")) read_train(j["embed"], c.embed, "embed");
  if (j.contains("project")) {
    const auto& s = j["project"];
    only_keys(s, {"resolution", "distance", "radius", "steps", "learning_rate", "min_elevation_deg", "max_elevation_deg"},
              "project");
    take(s, "resolution", c.project.resolution, "project");
    take(s, "distance", c.project.distance, "project");
    take(s, "radius", c.project.radius, "project");
    take(s, "steps", c.project.finetune.steps, "project");
    take(s, "learning_rate", c.project.finetune.learning_rate, "project");
    take(s, "min_elevation_deg", c.project.min_elevation_deg, "project");
    take(s, "max_elevation_deg", c.project.max_elevation_deg, "project");
  }
  if (j.contains("evaluate")) {
    const auto& s = j["evaluate"];
    only_keys(s, {"alpha", "symmetric"}, "evaluate");
    take(s, "alpha", c.evaluate.alpha, "evaluate");
    take(s, "symmetric", c.evaluate.symmetric, "evaluate");
  }
  c.project.finetune.radius = c.project.radius;
  return c;
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& path, PipelineConfig base) {
  nlohmann::json j;
  try {
    j = read_json(path);
  } catch (const Error& e) {
    throw Error(ErrorCode::InvalidConfig, e.what());
  }
  return from_json(j, base);
}

PipelineConfig PipelineConfig::from_json(const nlohmann::json& j) { return from_json(j, PipelineConfig{}); }
PipelineConfig PipelineConfig::load(const std::filesystem::path& path) { return load(path, PipelineConfig{}); }

}  // namespace kpnet
