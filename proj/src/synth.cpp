#include "kpnet/synth.hpp"

#include "kpnet/cloud_ops.hpp"
#include "kpnet/error.hpp"
#include "kpnet/rng.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

namespace kpnet {

namespace {

struct Box {
  Vec3 center;
  Vec3 half;

  double area() const {
    return 8.0 * (half.x() * half.y() + half.y() * half.z() + half.x() * half.z());
  }

  Vec3 sample(Rng& rng) const {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const double axy = half.x() * half.y(), ayz = half.y() * half.z(), axz = half.x() * half.z();
    std::uniform_real_distribution<double> face(0.0, axy + ayz + axz);
    const double f = face(rng);
    const double side = u(rng) < 0.0 ? -1.0 : 1.0;
    Vec3 p(u(rng), u(rng), u(rng));
    if (f < axy) p.z() = side;
    else if (f < axy + ayz) p.x() = side;
    else p.y() = side;
    return center + p.cwiseProduct(half);
  }
};

struct Blueprint {
  std::vector<Box> boxes;
  std::vector<Vec3> landmarks;
  std::vector<SymmetryGroup> symmetries;  // in the blueprint frame
};

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

SymmetryGroup reflection_x(int a, int b) {
  SymmetryGroup g;
  g.kind = SymmetryKind::ReflectionPair;
  g.members = {a, b};
  g.direction = Vec3::UnitX();
  g.offset = 0.0;
  return g;
}

// corner order (-,-), (+,-), (+,+), (-,+) so consecutive members are a quarter turn apart
const std::array<Eigen::Vector2d, 4> kCorners = {Eigen::Vector2d(-1, -1), Eigen::Vector2d(1, -1),
                                                 Eigen::Vector2d(1, 1), Eigen::Vector2d(-1, 1)};

Blueprint table(Rng& rng) {
  Blueprint b;
  const double s = uniform(rng, 0.45, 0.55);
  const double height = uniform(rng, 0.65, 0.85);
  const double thick = 0.04;
  const double leg = 0.03;
  const double inset = uniform(rng, 0.03, 0.06);
  const double leg_pos = s - inset - leg;
  b.boxes.push_back({Vec3(0, height - thick / 2, 0), Vec3(s, thick / 2, s)});
  for (const auto& c : kCorners)
    b.boxes.push_back({Vec3(c.x() * leg_pos, (height - thick) / 2, c.y() * leg_pos), Vec3(leg, (height - thick) / 2, leg)});
  for (const auto& c : kCorners) b.landmarks.emplace_back(c.x() * s, height, c.y() * s);
  for (const auto& c : kCorners) b.landmarks.emplace_back(c.x() * leg_pos, 0.0, c.y() * leg_pos);
  for (int base : {0, 4}) {
    b.symmetries.push_back(reflection_x(base + 0, base + 1));
    b.symmetries.push_back(reflection_x(base + 3, base + 2));
  }
  SymmetryGroup rot;
  rot.kind = SymmetryKind::FiniteRotation;
  rot.order = 4;
  rot.members = {0, 1, 2, 3};
  rot.direction = Vec3::UnitY();
  rot.origin = Vec3::Zero();
  b.symmetries.push_back(rot);
  return b;
}

Blueprint chair(Rng& rng) {
  Blueprint b;
  const double s = uniform(rng, 0.4, 0.5);
  const double seat = uniform(rng, 0.4, 0.5);
  const double back = uniform(rng, 0.5, 0.7);
  const double thick = 0.04;
  const double leg = 0.03;
  const double leg_pos = s - leg - 0.02;
  const double back_depth = 0.03;
  b.boxes.push_back({Vec3(0, seat - thick / 2, 0), Vec3(s, thick / 2, s)});
  for (const auto& c : kCorners)
    b.boxes.push_back({Vec3(c.x() * leg_pos, (seat - thick) / 2, c.y() * leg_pos), Vec3(leg, (seat - thick) / 2, leg)});
  b.boxes.push_back({Vec3(0, seat + back / 2, -s + back_depth), Vec3(s, back / 2, back_depth)});
  for (const auto& c : kCorners) b.landmarks.emplace_back(c.x() * s, seat, c.y() * s);
  for (const auto& c : kCorners) b.landmarks.emplace_back(c.x() * leg_pos, 0.0, c.y() * leg_pos);
  b.landmarks.emplace_back(-s, seat + back, -s + back_depth);
  b.landmarks.emplace_back(s, seat + back, -s + back_depth);
  for (int base : {0, 4}) {
    b.symmetries.push_back(reflection_x(base + 0, base + 1));
    b.symmetries.push_back(reflection_x(base + 3, base + 2));
  }
  b.symmetries.push_back(reflection_x(8, 9));
  return b;
}

Blueprint airplane(Rng& rng) {
  Blueprint b;
  const double length = uniform(rng, 0.9, 1.1);
  const double span = uniform(rng, 0.8, 1.0);
  const double wing_z = uniform(rng, 0.0, 0.15);
  const double tail_span = uniform(rng, 0.3, 0.4);
  const double fin = uniform(rng, 0.25, 0.35);
  const double body = 0.08;
  const double tail_z = -length + 0.1;
  b.boxes.push_back({Vec3(0, 0, 0), Vec3(body, body, length)});
  b.boxes.push_back({Vec3(0, 0, wing_z), Vec3(span, 0.02, 0.15)});
  b.boxes.push_back({Vec3(0, 0, tail_z), Vec3(tail_span, 0.015, 0.08)});
  b.boxes.push_back({Vec3(0, body + fin / 2, tail_z), Vec3(0.015, fin / 2, 0.08)});
  b.landmarks = {Vec3(0, 0, length),        Vec3(0, 0, -length),         Vec3(-span, 0, wing_z),
                 Vec3(span, 0, wing_z),     Vec3(-tail_span, 0, tail_z), Vec3(tail_span, 0, tail_z),
                 Vec3(0, body + fin, tail_z)};
  b.symmetries.push_back(reflection_x(2, 3));
  b.symmetries.push_back(reflection_x(4, 5));
  return b;
}

}  // namespace

std::string to_string(ShapeKind kind) {
  switch (kind) {
    case ShapeKind::Table: return "table";
    case ShapeKind::Chair: return "chair";
    case ShapeKind::AirplaneToy: return "airplane-toy";
  }
  return "table";
}

ShapeKind shape_kind_from_string(const std::string& name) {
  if (name == "table") return ShapeKind::Table;
  if (name == "chair") return ShapeKind::Chair;
  if (name == "airplane-toy" || name == "airplane") return ShapeKind::AirplaneToy;
  throw Error(ErrorCode::InvalidConfig, "unknown shape kind '" + name + "'");
}

int landmark_count(ShapeKind kind) {
  switch (kind) {
    case ShapeKind::Table: return 8;
    case ShapeKind::Chair: return 10;
    case ShapeKind::AirplaneToy: return 7;
  }
  return 0;
}

SyntheticShape generate_shape(const SyntheticShapeSpec& spec) {
  Rng rng(spec.seed);
  Blueprint bp;
  switch (spec.kind) {
    case ShapeKind::Table: bp = table(rng); break;
    case ShapeKind::Chair: bp = chair(rng); break;
    case ShapeKind::AirplaneToy: bp = airplane(rng); break;
  }

  const std::size_t k = bp.landmarks.size();
  std::vector<double> cumulative;
  double total = 0.0;
  for (const auto& box : bp.boxes) cumulative.push_back(total += box.area());
  std::uniform_real_distribution<double> pick(0.0, total);

  std::vector<Vec3> pts(bp.landmarks.begin(), bp.landmarks.end());
  while (pts.size() < kCloudSize) {
    const double r = pick(rng);
    const auto at = std::upper_bound(cumulative.begin(), cumulative.end(), r) - cumulative.begin();
    pts.push_back(bp.boxes[std::min<std::size_t>(at, bp.boxes.size() - 1)].sample(rng));
  }

  std::vector<int> order(kCloudSize);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[std::uniform_int_distribution<std::size_t>(0, i - 1)(rng)]);
  std::vector<int> where(kCloudSize);
  for (std::size_t i = 0; i < order.size(); ++i) where[order[i]] = static_cast<int>(i);

  SyntheticShape out;
  out.cloud.id = spec.id;
  out.cloud.category = to_string(spec.kind);
  out.cloud.points.resize(kCloudSize, 3);
  for (std::size_t i = 0; i < kCloudSize; ++i) out.cloud.points.row(static_cast<Eigen::Index>(i)) = pts[order[i]].transpose();

  const auto t = normalization_of(out.cloud);
  out.cloud = normalize_cloud(out.cloud);

  out.gt.model_id = spec.id;
  for (std::size_t s = 0; s < k; ++s) out.gt.keypoints.push_back({where[s], static_cast<int>(s)});
  for (auto g : bp.symmetries) {
    if (g.kind == SymmetryKind::ReflectionPair) {
      g.offset = t.scale * (g.offset - g.direction.dot(t.center));
    } else {
      g.origin = t.apply(g.origin);
    }
    out.gt.symmetries.push_back(g);
  }
  return out;
}

void AnnotatorProfile::validate() const {
  if (!(sigma >= 0.0)) throw Error(ErrorCode::InvalidConfig, "annotator sigma must be non-negative");
  if (miss_rate < 0.0 || miss_rate > 1.0 || spurious_rate < 0.0 || spurious_rate > 1.0)
    throw Error(ErrorCode::InvalidConfig, "annotator rates must lie in [0, 1]");
}

std::vector<AnnotatorProfile> make_annotator_pool(int count, double sigma, double miss_rate, double spurious_rate,
                                                  std::uint64_t seed) {
  std::vector<AnnotatorProfile> pool;
  for (int c = 0; c < count; ++c) {
    AnnotatorProfile p;
    p.name = "annotator_" + std::to_string(c);
    p.sigma = sigma;
    p.miss_rate = miss_rate;
    p.spurious_rate = spurious_rate;
    p.permutation_seed = stage_seed(seed, static_cast<std::uint64_t>(c));
    p.validate();
    pool.push_back(p);
  }
  return pool;
}

RawAnnotationSet simulate_annotations(const SyntheticShape& shape, std::span<const AnnotatorProfile> profiles,
                                      std::uint64_t seed, std::vector<double>* displacements) {
  RawAnnotationSet out;
  out.model_id = shape.cloud.id;
  const auto& kps = shape.gt.keypoints;
  Rng rng(seed);
  for (const auto& prof : profiles) {
    prof.validate();
    // the private permutation is fixed per annotator, shared across models
    Rng perm_rng(prof.permutation_seed);
    int max_sem = 0;
    for (const auto& k : kps) max_sem = std::max(max_sem, k.semantic_index + 1);
    std::vector<int> rank(max_sem);
    std::iota(rank.begin(), rank.end(), 0);
    for (std::size_t i = rank.size(); i > 1; --i)
      std::swap(rank[i - 1], rank[std::uniform_int_distribution<std::size_t>(0, i - 1)(perm_rng)]);

    std::bernoulli_distribution miss(prof.miss_rate);
    std::bernoulli_distribution spurious(prof.spurious_rate);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::uniform_int_distribution<int> any_vertex(0, static_cast<int>(shape.cloud.size()) - 1);

    std::vector<std::pair<int, Vec3>> kept;
    std::vector<Vec3> extra;
    for (const auto& k : kps) {
      const bool dropped = miss(rng);
      const Vec3 offset = Vec3(noise(rng), noise(rng), noise(rng)) * prof.sigma;
      const bool add_spurious = spurious(rng);
      const int spurious_vertex = any_vertex(rng);
      if (!dropped) {
        if (displacements) displacements->push_back(offset.norm());
        const Vec3 clicked = shape.cloud.point(static_cast<std::size_t>(k.point_index)) + offset;
        kept.emplace_back(rank[k.semantic_index], shape.cloud.point(static_cast<std::size_t>(snap_to_vertex(shape.cloud, clicked))));
      }
      if (add_spurious) extra.push_back(shape.cloud.point(static_cast<std::size_t>(spurious_vertex)));
    }
    std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.first < b.first; });

    AnnotatorLabels labels;
    labels.annotator = prof.name;
    for (const auto& [r, p] : kept) labels.keypoints.push_back(p);
    for (const auto& p : extra) labels.keypoints.push_back(p);
    if (labels.keypoints.size() > kMaxAnnotatorKeypoints) labels.keypoints.resize(kMaxAnnotatorKeypoints);
    out.annotators.push_back(std::move(labels));
  }
  return out;
}

TruthScore score_against_truth(std::span<const AggregatedKeypointSet> recovered,
                               std::span<const AggregatedKeypointSet> truth, std::span<const ModelCloud> clouds,
                               double radius) {
  TruthScore s;
  std::map<std::pair<int, int>, int> pair_counts;  // (recovered idx, truth idx) -> matches
  std::vector<std::pair<int, int>> matches;
  for (std::size_t m = 0; m < truth.size(); ++m) {
    const auto& cloud = clouds[m];
    const auto& rec = recovered[m].keypoints;
    const auto& gt = truth[m].keypoints;
    s.recovered += static_cast<int>(rec.size());
    s.truth += static_cast<int>(gt.size());
    struct Cand {
      double d;
      int r, g;
    };
    std::vector<Cand> cands;
    for (int r = 0; r < static_cast<int>(rec.size()); ++r)
      for (int g = 0; g < static_cast<int>(gt.size()); ++g) {
        const double d = (cloud.point(rec[r].point_index) - cloud.point(gt[g].point_index)).norm();
        if (d <= radius) cands.push_back({d, r, g});
      }
    std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
      return std::tie(a.d, a.r, a.g) < std::tie(b.d, b.r, b.g);
    });
    std::vector<char> used_r(rec.size(), 0), used_g(gt.size(), 0);
    for (const auto& c : cands) {
      if (used_r[c.r] || used_g[c.g]) continue;
      used_r[c.r] = used_g[c.g] = 1;
      ++s.matched;
      const std::pair<int, int> key{rec[c.r].semantic_index, gt[c.g].semantic_index};
      ++pair_counts[key];
      matches.push_back(key);
    }
  }
  s.recall = s.truth == 0 ? 1.0 : static_cast<double>(s.matched) / s.truth;
  if (s.recovered == 0) {
    s.precision = 1.0;
    s.precision_undefined = true;
  } else {
    s.precision = static_cast<double>(s.matched) / s.recovered;
  }

  // bijection: take index pairs by descending support
  std::vector<std::pair<int, std::pair<int, int>>> ranked;
  for (const auto& [key, count] : pair_counts) ranked.push_back({count, key});
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  std::set<int> used_r, used_g;
  int agreeing = 0;
  for (const auto& [count, key] : ranked) {
    if (used_r.count(key.first) || used_g.count(key.second)) continue;
    used_r.insert(key.first);
    used_g.insert(key.second);
    agreeing += count;
  }
  s.consistency = s.matched == 0 ? 1.0 : static_cast<double>(agreeing) / s.matched;
  return s;
}

}  // namespace kpnet
