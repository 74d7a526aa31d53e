#include <doctest.h>

#include "kpnet/cloud_ops.hpp"
#include "kpnet/error.hpp"
#include "kpnet/io.hpp"
#include "kpnet/rng.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <random>

using namespace kpnet;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = KPNET_FIXTURES;

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error raised");
  return ErrorCode::InvalidConfig;
}

ModelCloud random_cloud(std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> n(0, 1);
  ModelCloud c;
  c.id = "m" + std::to_string(seed);
  c.category = "chair";
  c.points.resize(kCloudSize, 3);
  for (Eigen::Index i = 0; i < c.points.size(); ++i) c.points.data()[i] = n(rng);
  return c;
}

std::vector<AggregatedKeypointSet> load_keypoint_fixture(const std::string& category) {
  std::vector<AggregatedKeypointSet> out;
  for (const auto& j : read_json(kFixtures / "keypoints" / (category + ".json"))) out.push_back(aggregated_from_json(j));
  return out;
}

}  // namespace

TEST_CASE("base64 and f64 packing") {
  CHECK(base64_encode(std::vector<std::uint8_t>{'M', 'a', 'n'}) == "TWFu");
  CHECK(base64_encode(std::vector<std::uint8_t>{'M', 'a'}) == "TWE=");
  CHECK(base64_encode(std::vector<std::uint8_t>{'M'}) == "TQ==");
  CHECK(base64_encode({}) == "");
  for (int len = 0; len < 20; ++len) {
    std::vector<std::uint8_t> b(len);
    for (int i = 0; i < len; ++i) b[i] = static_cast<std::uint8_t>(37 * i + 11);
    CHECK(base64_decode(base64_encode(b)) == b);
  }
  // 1.0 is 0x3ff0000000000000, little-endian bytes 00 .. 00 f0 3f
  CHECK(encode_f64(std::vector<double>{1.0}) == "AAAAAAAA8D8=");
  const std::vector<double> v{0.0, -0.0, 1e-300, -3.25, std::numeric_limits<double>::max()};
  const auto back = decode_f64(encode_f64(v));
  REQUIRE(back.size() == v.size());
  for (std::size_t i = 0; i < v.size(); ++i) CHECK(std::bit_cast<std::uint64_t>(back[i]) == std::bit_cast<std::uint64_t>(v[i]));
  CHECK(code_of([] { base64_decode("abc"); }) == ErrorCode::IoError);
  CHECK(code_of([] { base64_decode("ab!d"); }) == ErrorCode::IoError);
  CHECK(code_of([] { decode_f64("TWFu"); }) == ErrorCode::IoError);
}

TEST_CASE("cloud round-trip and schema errors") {
  TempDir tmp("kpnet_core_cloud");
  const auto c = random_cloud(1);
  save_cloud(tmp.path / "c.json", c);
  CHECK(load_cloud(tmp.path / "c.json") == c);

  auto j = cloud_to_json(c);
  j["n"] = 100;
  CHECK(code_of([&] { cloud_from_json(j); }) == ErrorCode::SchemaError);
  j = cloud_to_json(c);
  j.erase("category");
  CHECK(code_of([&] { cloud_from_json(j); }) == ErrorCode::SchemaError);
  j = cloud_to_json(c);
  j["xyz"] = encode_f64(std::vector<double>(30, 0.0));
  CHECK(code_of([&] { cloud_from_json(j); }) == ErrorCode::IoError);

  ModelCloud small = c;
  small.points.conservativeResize(10, 3);
  CHECK(code_of([&] { cloud_to_json(small); }) == ErrorCode::SchemaError);

  CHECK(code_of([&] { load_cloud(tmp.path / "missing.json"); }) == ErrorCode::IoError);
  std::ofstream(tmp.path / "broken.json") << "{\"id\": \"x\", ";
  CHECK(code_of([&] { load_cloud(tmp.path / "broken.json"); }) == ErrorCode::IoError);
}

TEST_CASE("annotation and aggregated round-trips") {
  TempDir tmp("kpnet_core_ann");
  RawAnnotationSet a{"m1", {{"ann0", {Vec3(0.1, 0.2, 0.3), Vec3(-1, 0, 1)}}, {"ann1", {}}}};
  save_annotations(tmp.path / "a.json", a);
  CHECK(load_annotations(tmp.path / "a.json") == a);
  CHECK(code_of([] { annotations_from_json({{"model_id", "m"}, {"annotators", {{{"annotator", "x"}, {"keypoints", {{1, 2}}}}}}}); }) ==
        ErrorCode::SchemaError);

  AggregatedKeypointSet s;
  s.model_id = "m1";
  s.keypoints = {{10, 0}, {20, 1}, {30, 2}, {40, 3}};
  SymmetryGroup refl;
  refl.members = {0, 1};
  refl.direction = Vec3::UnitX();
  refl.offset = 0.25;
  SymmetryGroup rot;
  rot.kind = SymmetryKind::FiniteRotation;
  rot.order = 2;
  rot.members = {2, 3};
  rot.origin = Vec3(0, 0.5, 0);
  SymmetryGroup ring;
  ring.kind = SymmetryKind::InfiniteRotation;
  ring.order = 0;
  ring.members = {1};
  s.symmetries = {refl, rot, ring};
  save_aggregated(tmp.path / "s.json", s);
  CHECK(load_aggregated(tmp.path / "s.json") == s);

  auto j = aggregated_to_json(s);
  j["symmetries"][0]["kind"] = "glide";
  CHECK(code_of([&] { aggregated_from_json(j); }) == ErrorCode::SchemaError);
  j = aggregated_to_json(s);
  j["keypoints"][0].erase("semantic_index");
  CHECK(code_of([&] { aggregated_from_json(j); }) == ErrorCode::SchemaError);
}

TEST_CASE("manifest parsing") {
  TempDir tmp("kpnet_core_manifest");
  DatasetManifest m;
  m.entries = {{"a", "chair", Split::Train, "clouds/a.json"}, {"b", "chair", Split::Test, "clouds/b.json"},
               {"c", "mug", Split::Val, "clouds/c.json"}};
  save_manifest(tmp.path / "m.json", m);
  const auto back = load_manifest(tmp.path / "m.json");
  CHECK(back.entries == m.entries);
  CHECK(back.counts("chair") == SplitCounts{1, 0, 1});
  CHECK(back.categories() == std::vector<std::string>{"chair", "mug"});

  const auto empty = manifest_from_json({{"models", nlohmann::json::array()}});
  CHECK(empty.entries.empty());
  CHECK(empty.totals().total() == 0);

  nlohmann::json dup{{"models",
                      {{{"id", "a"}, {"category", "c"}, {"split", "train"}, {"path", "p"}},
                       {{"id", "a"}, {"category", "c"}, {"split", "val"}, {"path", "q"}}}}};
  CHECK(code_of([&] { manifest_from_json(dup); }) == ErrorCode::DuplicateId);
  nlohmann::json bad_split{{"models", {{{"id", "a"}, {"category", "c"}, {"split", "dev"}, {"path", "p"}}}}};
  CHECK(code_of([&] { manifest_from_json(bad_split); }) == ErrorCode::SchemaError);
  nlohmann::json no_path{{"models", {{{"id", "a"}, {"category", "c"}, {"split", "train"}}}}};
  CHECK(code_of([&] { manifest_from_json(no_path); }) == ErrorCode::MissingFile);
  CHECK(code_of([&] { load_manifest(tmp.path / "nope.json"); }) == ErrorCode::MissingFile);
}

TEST_CASE("fixture manifest reproduces the dataset totals") {
  const auto m = load_manifest(kFixtures / "manifest_table3.json");
  CHECK(m.totals() == SplitCounts{5757, 824, 1653});
  CHECK(m.totals().total() == 8234);
  CHECK(m.categories().size() == 16);
  CHECK(m.counts("airplane") == SplitCounts{715, 102, 205});
  CHECK(m.counts("airplane").total() == 1022);
  // published per-category splits are 7:1:2 up to a couple of models of rounding
  CHECK(split_ratio_deviation(m) < 3.0);
}

TEST_CASE("fixture keypoint files reproduce the per-category bounds") {
  const auto air = keypoint_count_stats(load_keypoint_fixture("airplane"));
  CHECK(air.minimum == 5);
  CHECK(air.maximum == 17);
  CHECK(air.median == 14.0);

  const std::map<std::string, std::array<int, 3>> table{
      {"bathtub", {8, 24, 16}}, {"car", {14, 22, 22}}, {"chair", {8, 17, 10}}, {"table", {7, 12, 8}}};
  for (const auto& [cat, want] : table) {
    const auto s = keypoint_count_stats(load_keypoint_fixture(cat));
    CHECK(s.minimum == want[0]);
    CHECK(s.maximum == want[1]);
    CHECK(s.median == want[2]);
  }
  std::vector<AggregatedKeypointSet> even(4);
  for (int i = 0; i < 4; ++i) even[i].keypoints.resize(i + 3);
  CHECK(keypoint_count_stats(even).median == 4.5);
  CHECK(keypoint_count_stats({}).models == 0);
}

TEST_CASE("normalize and snap") {
  ModelCloud cube;
  cube.points.resize(8, 3);
  for (int i = 0; i < 8; ++i) cube.points.row(i) << 5 + (i & 1), 5 + ((i >> 1) & 1), 5 + ((i >> 2) & 1);
  const auto n = normalize_cloud(cube);
  CHECK(n.points.colwise().mean().norm() < 1e-12);
  CHECK(n.points.rowwise().norm().maxCoeff() == doctest::Approx(1.0));
  // uniform scale: all pairwise distance ratios preserved
  const double ratio = (n.point(0) - n.point(7)).norm() / (cube.point(0) - cube.point(7)).norm();
  CHECK((n.point(1) - n.point(6)).norm() == doctest::Approx(ratio * (cube.point(1) - cube.point(6)).norm()));
  CHECK((normalize_cloud(n).points - n.points).cwiseAbs().maxCoeff() < 1e-9);

  ModelCloud flat;
  flat.points = PointMatrix::Constant(5, 3, 2.0);
  CHECK(code_of([&] { normalize_cloud(flat); }) == ErrorCode::DegenerateCloud);

  CHECK(snap_to_vertex(cube, Vec3(5.9, 5.1, 5.2)) == 1);
  ModelCloud twin;
  twin.points.resize(3, 3);
  twin.points << 0, 0, 0, 1, 0, 0, 1, 0, 0;
  CHECK(snap_to_vertex(twin, Vec3(0.9, 0, 0)) == 1);  // lowest index on ties
  const auto snapped = snap_annotations(cube, {"c", {{"a", {Vec3(6, 6, 6), Vec3(5, 5, 5.2)}}}});
  CHECK(snapped == std::vector<std::vector<int>>{{7, 0}});
}

TEST_CASE("splits follow the ratio and the seed") {
  std::vector<std::string> ids;
  for (int i = 0; i < 1022; ++i) ids.push_back("m" + std::to_string(i));
  const auto s = make_splits(ids, {}, 5);
  std::map<Split, int> c;
  for (auto x : s) ++c[x];
  CHECK(c[Split::Val] == 102);
  CHECK(c[Split::Test] == 204);
  CHECK(c[Split::Train] == 716);
  CHECK(make_splits(ids, {}, 5) == s);
  CHECK(make_splits(ids, {}, 6) != s);

  std::vector<std::string> cats;
  for (int i = 0; i < 1022; ++i) cats.push_back(i % 3 == 0 ? "mug" : "car");
  const auto strat = make_stratified_splits(ids, cats, {}, 1);
  DatasetManifest m;
  for (std::size_t i = 0; i < ids.size(); ++i) m.entries.push_back({ids[i], cats[i], strat[i], "p"});
  CHECK(split_ratio_deviation(m) < 1.0);
}

TEST_CASE("symmetry and keypoint validation") {
  SymmetryGroup g;
  g.members = {0, 1};
  CHECK_NOTHROW(validate_symmetry(g));
  g.members = {0, 1, 2};
  CHECK(code_of([&] { validate_symmetry(g); }) == ErrorCode::SchemaError);
  g.kind = SymmetryKind::FiniteRotation;
  g.order = 3;
  CHECK_NOTHROW(validate_symmetry(g));
  g.order = 4;
  CHECK(code_of([&] { validate_symmetry(g); }) == ErrorCode::SchemaError);
  g.kind = SymmetryKind::InfiniteRotation;
  g.members = {};
  CHECK(code_of([&] { validate_symmetry(g); }) == ErrorCode::SchemaError);
  g.members = {4};
  g.direction = Vec3(1, 1, 0);
  CHECK(code_of([&] { validate_symmetry(g); }) == ErrorCode::SchemaError);

  AggregatedKeypointSet s{"m", {{1, 0}, {1, 1}}, {}};
  CHECK(code_of([&] { validate_aggregated(s); }) == ErrorCode::SchemaError);
  s.keypoints = {{1, 0}, {2, -1}};
  CHECK(code_of([&] { validate_aggregated(s); }) == ErrorCode::SchemaError);

  std::vector<AggregatedKeypointSet> sets{{"a", {{0, 0}, {1, 2}}, {}}, {"b", {{0, 1}}, {}}};
  CHECK(semantic_indices_dense(sets));
  sets[1].keypoints[0].semantic_index = 3;
  CHECK_FALSE(semantic_indices_dense(sets));
}
