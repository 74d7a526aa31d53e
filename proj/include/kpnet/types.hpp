#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <string>
#include <vector>

namespace kpnet {

/// Number of samples every persisted model cloud carries.
inline constexpr std::size_t kCloudSize = 2048;

/// Upper bound on keypoints one annotator may click on one model.
inline constexpr std::size_t kMaxAnnotatorKeypoints = 24;

using Vec3 = Eigen::Vector3d;
using PointMatrix = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

struct ModelCloud {
  std::string id;
  std::string category;
  PointMatrix points;

  std::size_t size() const { return static_cast<std::size_t>(points.rows()); }
  Vec3 point(std::size_t i) const { return points.row(static_cast<Eigen::Index>(i)).transpose(); }

  friend bool operator==(const ModelCloud& a, const ModelCloud& b) {
    return a.id == b.id && a.category == b.category && a.points.rows() == b.points.rows() &&
           a.points == b.points;
  }
};

struct AnnotatorLabels {
  std::string annotator;
  std::vector<Vec3> keypoints;  // annotator-private order

  friend bool operator==(const AnnotatorLabels&, const AnnotatorLabels&) = default;
};

struct RawAnnotationSet {
  std::string model_id;
  std::vector<AnnotatorLabels> annotators;

  friend bool operator==(const RawAnnotationSet&, const RawAnnotationSet&) = default;
};

enum class SymmetryKind { ReflectionPair, FiniteRotation, InfiniteRotation };

/// Reflections store a plane `normal . p = offset`; rotations store the axis
/// direction plus a point on the axis. Members are semantic indices.
struct SymmetryGroup {
  SymmetryKind kind = SymmetryKind::ReflectionPair;
  int order = 2;  // finite rotations only
  std::vector<int> members;
  Vec3 direction = Vec3::UnitY();
  double offset = 0.0;
  Vec3 origin = Vec3::Zero();

  friend bool operator==(const SymmetryGroup&, const SymmetryGroup&) = default;
};

struct Keypoint {
  int point_index = 0;
  int semantic_index = 0;

  friend bool operator==(const Keypoint&, const Keypoint&) = default;
};

struct AggregatedKeypointSet {
  std::string model_id;
  std::vector<Keypoint> keypoints;
  std::vector<SymmetryGroup> symmetries;

  friend bool operator==(const AggregatedKeypointSet&, const AggregatedKeypointSet&) = default;
};

enum class Split { Train, Val, Test };

struct ManifestEntry {
  std::string id;
  std::string category;
  Split split = Split::Train;
  std::string path;

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct SplitCounts {
  int train = 0;
  int val = 0;
  int test = 0;
  int total() const { return train + val + test; }

  friend bool operator==(const SplitCounts&, const SplitCounts&) = default;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;

  SplitCounts counts(const std::string& category) const;
  SplitCounts totals() const;
  std::vector<std::string> categories() const;
};

std::string to_string(Split split);
std::string to_string(SymmetryKind kind);

}  // namespace kpnet
