#pragma once

#include <Eigen/Core>
#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace kpnet {

enum class PckNorm { Image, BoundingBox };

struct PckConfig {
  double alpha = 0.1;
  PckNorm norm = PckNorm::Image;
  bool symmetric = false;  // score against the nearest member of each keypoint's symmetry orbit

  void validate() const;
};

struct KeypointPrediction {
  int semantic_index = 0;
  Eigen::Vector2d predicted = Eigen::Vector2d::Zero();
  Eigen::Vector2d truth = Eigen::Vector2d::Zero();
  bool visible = true;
  // projected symmetry orbit of the ground truth (may be empty)
  std::vector<Eigen::Vector2d> orbit;
};

struct ImagePredictions {
  std::string image_id;
  double image_width = 0.0;
  double image_height = 0.0;
  double bbox_width = 0.0;
  double bbox_height = 0.0;
  std::vector<KeypointPrediction> keypoints;

  double extent(PckNorm norm) const;
};

/// Inclusive correctness test d <= alpha * max(w, h).
bool pck_correct(double distance, double alpha, double width, double height);

/// Distance used for one keypoint (orbit-aware when cfg.symmetric).
double keypoint_distance(const KeypointPrediction& kp, const PckConfig& cfg);

/// Mean correctness over every visible keypoint of every image.
/// Throws NoKeypoints when nothing is visible.
double pck_score(const std::vector<ImagePredictions>& images, const PckConfig& cfg);

/// min over orbit members of |pred - member|; the truth itself counts as a member.
double orbit_distance(const Eigen::Vector2d& pred, const Eigen::Vector2d& truth,
                      const std::vector<Eigen::Vector2d>& orbit);

/// `samples` points of the projection of a circle (centre, unit axis, radius)
/// are produced by the caller; this helper returns the 3D circle samples.
std::vector<Eigen::Vector3d> rotation_orbit_samples(const Eigen::Vector3d& point, const Eigen::Vector3d& axis_point,
                                                    const Eigen::Vector3d& axis, int samples = 360);

struct PckRow {
  std::string image_id;
  int n_kp = 0;
  int n_correct_img = 0;
  int n_correct_bbox = 0;
  double pck_img = 0.0;
  double pck_bbox = 0.0;
};

struct PckReport {
  std::vector<PckRow> rows;
  double pck_img = 0.0;
  double pck_bbox = 0.0;
  int keypoints = 0;
  double alpha = 0.1;
  bool symmetric = false;

  /// `image_id, n_kp, n_correct, pck_img, pck_bbox`; n_correct counts the
  /// image-normalized hits.
  std::string csv() const;
  nlohmann::json summary() const;
};

/// Scores every image under both normalizations with pooled per-keypoint
/// averages. Images without visible keypoints are listed with zero counts.
PckReport evaluate_pck(const std::vector<ImagePredictions>& images, double alpha, bool symmetric = false);

nlohmann::json predictions_to_json(const std::vector<ImagePredictions>& images);
std::vector<ImagePredictions> predictions_from_json(const nlohmann::json& j);

}  // namespace kpnet
