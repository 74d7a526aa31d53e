#pragma once

#include "kpnet/aggregate.hpp"
#include "kpnet/embed_train.hpp"
#include "kpnet/synth.hpp"
#include "kpnet/viewpoint_search.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>

namespace kpnet {

struct SynthSettings {
  ShapeKind kind = ShapeKind::Table;
  int models = 20;
  int annotators = 10;
  double sigma = 0.03;
  double miss_rate = 0.05;
  double spurious_rate = 0.05;
};

struct ProjectSettings {
  int resolution = 128;
  double distance = kDefaultDistance;
  double radius = kDefaultSplatRadius;
  FinetuneOptions finetune{};
  // true viewpoints of the rendered targets are drawn in this elevation band (degrees)
  double min_elevation_deg = -15.0;
  double max_elevation_deg = 45.0;
};

struct EvaluateSettings {
  double alpha = 0.1;
  bool symmetric = false;
};

/// Every tunable of the pipeline. All stage seeds derive from `seed`.
struct PipelineConfig {
  std::uint64_t seed = 0;
  SynthSettings synth{};
  AggregateConfig aggregate{};
  TrainConfig embed{};
  ProjectSettings project{};
  EvaluateSettings evaluate{};

  /// Throws InvalidConfig listing the first violated range.
  void validate() const;

  nlohmann::json to_json() const;
  /// Overlays the keys present in `j` onto `base`; unknown keys are rejected.
  static PipelineConfig from_json(const nlohmann::json& j, PipelineConfig base);
  static PipelineConfig from_json(const nlohmann::json& j);
  static PipelineConfig load(const std::filesystem::path& path, PipelineConfig base);
  static PipelineConfig load(const std::filesystem::path& path);
};

}  // namespace kpnet
