#include "kpnet/pck.hpp"

#include "kpnet/error.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>

namespace kpnet {

void PckConfig::validate() const {
  if (!(alpha > 0.0)) throw Error(ErrorCode::InvalidConfig, "pck alpha must be positive");
}

double ImagePredictions::extent(PckNorm norm) const {
  const double w = norm == PckNorm::Image ? image_width : bbox_width;
  const double h = norm == PckNorm::Image ? image_height : bbox_height;
  if (!(w > 0.0) || !(h > 0.0))
    throw Error(ErrorCode::InvalidConfig, "image '" + image_id + "' has a non-positive reference size");
  return std::max(w, h);
}

bool pck_correct(double distance, double alpha, double width, double height) {
  return distance <= alpha * std::max(width, height);
}

double orbit_distance(const Eigen::Vector2d& pred, const Eigen::Vector2d& truth,
                      const std::vector<Eigen::Vector2d>& orbit) {
  double best = (pred - truth).norm();
  for (const auto& m : orbit) best = std::min(best, (pred - m).norm());
  return best;
}

std::vector<Eigen::Vector3d> rotation_orbit_samples(const Eigen::Vector3d& point, const Eigen::Vector3d& axis_point,
                                                    const Eigen::Vector3d& axis, int samples) {
  const Eigen::Vector3d a = axis.normalized();
  std::vector<Eigen::Vector3d> out;
  for (int s = 0; s < samples; ++s) {
    const double angle = 2.0 * std::numbers::pi * s / samples;
    out.push_back(axis_point + Eigen::AngleAxisd(angle, a) * (point - axis_point));
  }
  return out;
}

double keypoint_distance(const KeypointPrediction& kp, const PckConfig& cfg) {
  if (cfg.symmetric) return orbit_distance(kp.predicted, kp.truth, kp.orbit);
  return (kp.predicted - kp.truth).norm();
}

double pck_score(const std::vector<ImagePredictions>& images, const PckConfig& cfg) {
  cfg.validate();
  long visible = 0, correct = 0;
  for (const auto& img : images) {
    const double extent = img.keypoints.empty() ? 0.0 : img.extent(cfg.norm);
    for (const auto& kp : img.keypoints) {
      if (!kp.visible) continue;
      if (!kp.predicted.allFinite() || !kp.truth.allFinite())
        throw Error(ErrorCode::SchemaError, "non-finite keypoint in image '" + img.image_id + "'");
      ++visible;
      if (pck_correct(keypoint_distance(kp, cfg), cfg.alpha, extent, extent)) ++correct;
    }
  }
  if (visible == 0) throw Error(ErrorCode::NoKeypoints, "no visible keypoints to score");
  return static_cast<double>(correct) / static_cast<double>(visible);
}

PckReport evaluate_pck(const std::vector<ImagePredictions>& images, double alpha, bool symmetric) {
  PckConfig img_cfg{alpha, PckNorm::Image, symmetric};
  PckConfig box_cfg{alpha, PckNorm::BoundingBox, symmetric};
  img_cfg.validate();
  PckReport report;
  report.alpha = alpha;
  report.symmetric = symmetric;
  long total_img = 0, total_box = 0;
  for (const auto& img : images) {
    PckRow row;
    row.image_id = img.image_id;
    for (const auto& kp : img.keypoints) {
      if (!kp.visible) continue;
      ++row.n_kp;
      const double d_img = keypoint_distance(kp, img_cfg);
      if (pck_correct(d_img, alpha, img.image_width, img.image_height)) ++row.n_correct_img;
      if (pck_correct(keypoint_distance(kp, box_cfg), alpha, img.bbox_width, img.bbox_height)) ++row.n_correct_bbox;
    }
    if (row.n_kp > 0) {
      row.pck_img = static_cast<double>(row.n_correct_img) / row.n_kp;
      row.pck_bbox = static_cast<double>(row.n_correct_bbox) / row.n_kp;
    }
    report.keypoints += row.n_kp;
    total_img += row.n_correct_img;
    total_box += row.n_correct_bbox;
    report.rows.push_back(row);
  }
  if (report.keypoints == 0) throw Error(ErrorCode::NoKeypoints, "no visible keypoints to score");
  report.pck_img = static_cast<double>(total_img) / report.keypoints;
  report.pck_bbox = static_cast<double>(total_box) / report.keypoints;
  return report;
}

std::string PckReport::csv() const {
  std::ostringstream out;
  out << "image_id,n_kp,n_correct,pck_img,pck_bbox\n";
  char buf[64];
  for (const auto& r : rows) {
    out << r.image_id << ',' << r.n_kp << ',' << r.n_correct_img << ',';
    std::snprintf(buf, sizeof buf, "%.6f,%.6f", r.pck_img, r.pck_bbox);
    out << buf << '\n';
  }
  return out.str();
}

nlohmann::json PckReport::summary() const {
  return {{"alpha", alpha},
          {"symmetric", symmetric},
          {"images", rows.size()},
          {"keypoints", keypoints},
          {"pck_img", pck_img},
          {"pck_bbox", pck_bbox}};
}

namespace {
nlohmann::json vec2(const Eigen::Vector2d& v) { return nlohmann::json::array({v.x(), v.y()}); }

Eigen::Vector2d vec2_from(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
    throw Error(ErrorCode::SchemaError, "expected a 2D pixel [u, v]");
  return {j[0].get<double>(), j[1].get<double>()};
}

const nlohmann::json& field(const nlohmann::json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw Error(ErrorCode::SchemaError, std::string("missing field '") + key + "'");
  return j[key];
}
}  // namespace

nlohmann::json predictions_to_json(const std::vector<ImagePredictions>& images) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& img : images) {
    nlohmann::json kps = nlohmann::json::array();
    for (const auto& kp : img.keypoints) {
      nlohmann::json orbit = nlohmann::json::array();
      for (const auto& o : kp.orbit) orbit.push_back(vec2(o));
      kps.push_back({{"semantic_index", kp.semantic_index},
                     {"predicted", vec2(kp.predicted)},
                     {"truth", vec2(kp.truth)},
                     {"visible", kp.visible},
                     {"orbit", orbit}});
    }
    arr.push_back({{"image_id", img.image_id},
                   {"image_size", {img.image_width, img.image_height}},
                   {"bbox_size", {img.bbox_width, img.bbox_height}},
                   {"keypoints", kps}});
  }
  return {{"images", arr}};
}

std::vector<ImagePredictions> predictions_from_json(const nlohmann::json& j) {
  const auto& arr = field(j, "images");
  if (!arr.is_array()) throw Error(ErrorCode::SchemaError, "'images' must be an array");
  std::vector<ImagePredictions> out;
  for (const auto& e : arr) {
    ImagePredictions img;
    const auto& id = field(e, "image_id");
    if (!id.is_string()) throw Error(ErrorCode::SchemaError, "image_id must be a string");
    img.image_id = id.get<std::string>();
    const auto size = vec2_from(field(e, "image_size"));
    const auto box = vec2_from(field(e, "bbox_size"));
    img.image_width = size.x();
    img.image_height = size.y();
    img.bbox_width = box.x();
    img.bbox_height = box.y();
    for (const auto& k : field(e, "keypoints")) {
      KeypointPrediction kp;
      const auto& s = field(k, "semantic_index");
      if (!s.is_number_integer()) throw Error(ErrorCode::SchemaError, "semantic_index must be an integer");
      kp.semantic_index = s.get<int>();
      kp.predicted = vec2_from(field(k, "predicted"));
      kp.truth = vec2_from(field(k, "truth"));
      if (k.contains("visible")) kp.visible = k["visible"].get<bool>();
      if (k.contains("orbit"))
        for (const auto& o : k["orbit"]) kp.orbit.push_back(vec2_from(o));
      img.keypoints.push_back(std::move(kp));
    }
    out.push_back(std::move(img));
  }
  return out;
}

}  // namespace kpnet
