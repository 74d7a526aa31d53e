#include "kpnet/cloud_ops.hpp"

#include "kpnet/error.hpp"
#include "kpnet/rng.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

namespace kpnet {

std::string to_string(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "train";
}

std::string to_string(SymmetryKind kind) {
  switch (kind) {
    case SymmetryKind::ReflectionPair: return "reflection";
    case SymmetryKind::FiniteRotation: return "finite_rotation";
    case SymmetryKind::InfiniteRotation: return "infinite_rotation";
  }
  return "reflection";
}

SplitCounts DatasetManifest::counts(const std::string& category) const {
  SplitCounts c;
  for (const auto& e : entries) {
    if (e.category != category) continue;
    switch (e.split) {
      case Split::Train: ++c.train; break;
      case Split::Val: ++c.val; break;
      case Split::Test: ++c.test; break;
    }
  }
  return c;
}

SplitCounts DatasetManifest::totals() const {
  SplitCounts c;
  for (const auto& cat : categories()) {
    const auto k = counts(cat);
    c.train += k.train;
    c.val += k.val;
    c.test += k.test;
  }
  return c;
}

std::vector<std::string> DatasetManifest::categories() const {
  std::set<std::string> cats;
  for (const auto& e : entries) cats.insert(e.category);
  return {cats.begin(), cats.end()};
}

NormalizeTransform normalization_of(const ModelCloud& cloud) {
  if (cloud.size() < 2) throw Error(ErrorCode::DegenerateCloud, "need at least two points");
  NormalizeTransform t;
  t.center = cloud.points.colwise().mean().transpose();
  const double radius = (cloud.points.rowwise() - t.center.transpose()).rowwise().norm().maxCoeff();
  if (!(radius > 0.0)) throw Error(ErrorCode::DegenerateCloud, "all points coincide");
  t.scale = 1.0 / radius;
  return t;
}

ModelCloud normalize_cloud(const ModelCloud& cloud) {
  const auto t = normalization_of(cloud);
  ModelCloud out = cloud;
  out.points = (cloud.points.rowwise() - t.center.transpose()) * t.scale;
  return out;
}

int snap_to_vertex(const ModelCloud& cloud, const Vec3& p) {
  const Eigen::VectorXd d = (cloud.points.rowwise() - p.transpose()).rowwise().squaredNorm();
  int best = 0;
  for (int i = 1; i < static_cast<int>(d.size()); ++i)
    if (d[i] < d[best]) best = i;
  return best;
}

std::vector<std::vector<int>> snap_annotations(const ModelCloud& cloud, const RawAnnotationSet& set) {
  std::vector<std::vector<int>> out;
  out.reserve(set.annotators.size());
  for (const auto& a : set.annotators) {
    std::vector<int> idx;
    idx.reserve(a.keypoints.size());
    for (const auto& p : a.keypoints) idx.push_back(snap_to_vertex(cloud, p));
    out.push_back(std::move(idx));
  }
  return out;
}

std::vector<Split> make_splits(std::span<const std::string> model_ids, SplitRatios ratios, std::uint64_t seed) {
  const std::size_t n = model_ids.size();
  const auto n_val = n * static_cast<std::size_t>(ratios.val) / static_cast<std::size_t>(ratios.sum());
  const auto n_test = n * static_cast<std::size_t>(ratios.test) / static_cast<std::size_t>(ratios.sum());

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(order[i - 1], order[pick(rng)]);
  }

  std::vector<Split> out(n, Split::Train);
  for (std::size_t r = 0; r < n_val; ++r) out[order[r]] = Split::Val;
  for (std::size_t r = n_val; r < n_val + n_test; ++r) out[order[r]] = Split::Test;
  return out;
}

std::vector<Split> make_stratified_splits(std::span<const std::string> model_ids,
                                          std::span<const std::string> categories, SplitRatios ratios,
                                          std::uint64_t seed) {
  std::map<std::string, std::vector<std::size_t>> by_cat;
  for (std::size_t i = 0; i < model_ids.size(); ++i) by_cat[categories[i]].push_back(i);
  std::vector<Split> out(model_ids.size(), Split::Train);
  for (const auto& [cat, rows] : by_cat) {
    std::vector<std::string> ids;
    for (auto r : rows) ids.push_back(model_ids[r]);
    const auto splits = make_splits(ids, ratios, stage_seed(seed, cat));
    for (std::size_t k = 0; k < rows.size(); ++k) out[rows[k]] = splits[k];
  }
  return out;
}

double split_ratio_deviation(const DatasetManifest& manifest, SplitRatios ratios) {
  double worst = 0.0;
  for (const auto& cat : manifest.categories()) {
    const auto c = manifest.counts(cat);
    const double n = c.total();
    const double s = ratios.sum();
    worst = std::max({worst, std::abs(c.train - n * ratios.train / s), std::abs(c.val - n * ratios.val / s),
                      std::abs(c.test - n * ratios.test / s)});
  }
  return worst;
}

KeypointCountStats keypoint_count_stats(std::span<const AggregatedKeypointSet> sets) {
  KeypointCountStats s;
  if (sets.empty()) return s;
  std::vector<int> counts;
  for (const auto& set : sets) counts.push_back(static_cast<int>(set.keypoints.size()));
  std::sort(counts.begin(), counts.end());
  s.models = static_cast<int>(counts.size());
  s.minimum = counts.front();
  s.maximum = counts.back();
  const std::size_t mid = counts.size() / 2;
  s.median = counts.size() % 2 == 1 ? counts[mid] : 0.5 * (counts[mid - 1] + counts[mid]);
  return s;
}

void validate_symmetry(const SymmetryGroup& g) {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::SchemaError, what); };
  if (std::abs(g.direction.norm() - 1.0) > 1e-9) fail("symmetry axis/normal must be unit length");
  switch (g.kind) {
    case SymmetryKind::ReflectionPair:
      if (g.members.size() != 2) fail("reflection pair needs exactly two members");
      break;
    case SymmetryKind::FiniteRotation:
      if (g.order < 2 || g.members.size() != static_cast<std::size_t>(g.order))
        fail("finite rotation of order n needs exactly n members");
      break;
    case SymmetryKind::InfiniteRotation:
      if (g.members.empty()) fail("infinite rotation needs at least one member");
      break;
  }
}

void validate_aggregated(const AggregatedKeypointSet& set) {
  std::set<int> points;
  for (const auto& k : set.keypoints) {
    if (k.point_index < 0 || k.semantic_index < 0)
      throw Error(ErrorCode::SchemaError, "negative keypoint index in " + set.model_id);
    if (!points.insert(k.point_index).second)
      throw Error(ErrorCode::SchemaError, "point index shared by two keypoints in " + set.model_id);
  }
  for (const auto& g : set.symmetries) validate_symmetry(g);
}

bool semantic_indices_dense(std::span<const AggregatedKeypointSet> sets) {
  std::set<int> used;
  for (const auto& s : sets)
    for (const auto& k : s.keypoints) used.insert(k.semantic_index);
  int expect = 0;
  for (int u : used)
    if (u != expect++) return false;
  return true;
}

}  // namespace kpnet
