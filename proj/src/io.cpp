#include "kpnet/io.hpp"

#include "kpnet/error.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

namespace kpnet {

using nlohmann::json;

namespace {

constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

int decode_char(char c) {
  if (c >= 'A' && c <= 'Z') return c - 'A';
  if (c >= 'a' && c <= 'z') return c - 'a' + 26;
  if (c >= '0' && c <= '9') return c - '0' + 52;
  if (c == '+') return 62;
  if (c == '/') return 63;
  return -1;
}

[[noreturn]] void schema_fail(const std::string& what) { throw Error(ErrorCode::SchemaError, what); }

template <typename T>
T field(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) schema_fail(std::string("missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    schema_fail(std::string("field '") + key + "': " + e.what());
  }
}

Vec3 vec3_from_json(const json& j) {
  if (!j.is_array() || j.size() != 3) schema_fail("expected a 3-vector");
  Vec3 v;
  for (int i = 0; i < 3; ++i) {
    if (!j[i].is_number()) schema_fail("non-numeric coordinate");
    v[i] = j[i].get<double>();
  }
  return v;
}

json vec3_to_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

}  // namespace

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    out.push_back(kAlphabet[(v >> 18) & 63]);
    out.push_back(kAlphabet[(v >> 12) & 63]);
    out.push_back(kAlphabet[(v >> 6) & 63]);
    out.push_back(kAlphabet[v & 63]);
  }
  const std::size_t rest = bytes.size() - i;
  if (rest == 1) {
    const std::uint32_t v = bytes[i] << 16;
    out.push_back(kAlphabet[(v >> 18) & 63]);
    out.push_back(kAlphabet[(v >> 12) & 63]);
    out += "==";
  } else if (rest == 2) {
    const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8);
    out.push_back(kAlphabet[(v >> 18) & 63]);
    out.push_back(kAlphabet[(v >> 12) & 63]);
    out.push_back(kAlphabet[(v >> 6) & 63]);
    out.push_back('=');
  }
  return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
  if (text.size() % 4 != 0) throw Error(ErrorCode::IoError, "base64 payload length is not a multiple of 4");
  std::vector<std::uint8_t> out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    std::array<int, 4> q{};
    int pad = 0;
    for (int k = 0; k < 4; ++k) {
      const char c = text[i + k];
      if (c == '=' && i + 4 == text.size() && k >= 2) {
        q[k] = 0;
        ++pad;
      } else {
        q[k] = decode_char(c);
        if (q[k] < 0 || pad > 0) throw Error(ErrorCode::IoError, "invalid base64 payload");
      }
    }
    const std::uint32_t v = (q[0] << 18) | (q[1] << 12) | (q[2] << 6) | q[3];
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    if (pad < 2) out.push_back(static_cast<std::uint8_t>(v >> 8));
    if (pad < 1) out.push_back(static_cast<std::uint8_t>(v));
  }
  return out;
}

std::string encode_f64(std::span<const double> values) {
  std::vector<std::uint8_t> bytes(values.size() * 8);
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto bits = std::bit_cast<std::uint64_t>(values[i]);
    for (int b = 0; b < 8; ++b) bytes[i * 8 + b] = static_cast<std::uint8_t>(bits >> (8 * b));
  }
  return base64_encode(bytes);
}

std::vector<double> decode_f64(const std::string& base64) {
  const auto bytes = base64_decode(base64);
  if (bytes.size() % 8 != 0) throw Error(ErrorCode::IoError, "binary payload is not a whole number of doubles");
  std::vector<double> values(bytes.size() / 8);
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[i * 8 + b]) << (8 * b);
    values[i] = std::bit_cast<double>(bits);
  }
  return values;
}

json cloud_to_json(const ModelCloud& cloud) {
  if (cloud.size() != kCloudSize) schema_fail("cloud must hold exactly 2048 points");
  std::vector<double> xyz(cloud.points.data(), cloud.points.data() + cloud.points.size());
  return json{{"id", cloud.id}, {"category", cloud.category}, {"n", cloud.size()}, {"xyz", encode_f64(xyz)}};
}

ModelCloud cloud_from_json(const json& j) {
  ModelCloud cloud;
  cloud.id = field<std::string>(j, "id");
  cloud.category = field<std::string>(j, "category");
  const auto n = field<std::size_t>(j, "n");
  if (n != kCloudSize) schema_fail("cloud header must declare n = 2048");
  const auto xyz = decode_f64(field<std::string>(j, "xyz"));
  if (xyz.size() != n * 3) throw Error(ErrorCode::IoError, "cloud payload truncated");
  cloud.points.resize(static_cast<Eigen::Index>(n), 3);
  std::memcpy(cloud.points.data(), xyz.data(), xyz.size() * sizeof(double));
  return cloud;
}

json annotations_to_json(const RawAnnotationSet& set) {
  json annotators = json::array();
  for (const auto& a : set.annotators) {
    json kps = json::array();
    for (const auto& p : a.keypoints) kps.push_back(vec3_to_json(p));
    annotators.push_back({{"annotator", a.annotator}, {"keypoints", kps}});
  }
  return json{{"model_id", set.model_id}, {"annotators", annotators}};
}

RawAnnotationSet annotations_from_json(const json& j) {
  RawAnnotationSet set;
  set.model_id = field<std::string>(j, "model_id");
  if (!j.contains("annotators") || !j["annotators"].is_array()) schema_fail("'annotators' must be an array");
  const auto& annotators = j["annotators"];
  for (const auto& a : annotators) {
    AnnotatorLabels labels;
    labels.annotator = field<std::string>(a, "annotator");
    if (!a.contains("keypoints") || !a["keypoints"].is_array()) schema_fail("'keypoints' must be an array");
    for (const auto& p : a["keypoints"]) labels.keypoints.push_back(vec3_from_json(p));
    set.annotators.push_back(std::move(labels));
  }
  return set;
}

json symmetry_to_json(const SymmetryGroup& g) {
  json j{{"kind", to_string(g.kind)}, {"members", g.members}};
  switch (g.kind) {
    case SymmetryKind::ReflectionPair:
      j["normal"] = vec3_to_json(g.direction);
      j["offset"] = g.offset;
      break;
    case SymmetryKind::FiniteRotation:
      j["order"] = g.order;
      [[fallthrough]];
    case SymmetryKind::InfiniteRotation:
      j["axis"] = vec3_to_json(g.direction);
      j["point"] = vec3_to_json(g.origin);
      break;
  }
  return j;
}

SymmetryGroup symmetry_from_json(const json& j) {
  SymmetryGroup g;
  const auto kind = field<std::string>(j, "kind");
  g.members = field<std::vector<int>>(j, "members");
  if (kind == "reflection") {
    g.kind = SymmetryKind::ReflectionPair;
    if (!j.contains("normal")) schema_fail("reflection needs 'normal'");
    g.direction = vec3_from_json(j["normal"]);
    g.offset = field<double>(j, "offset");
  } else if (kind == "finite_rotation" || kind == "infinite_rotation") {
    g.kind = kind == "finite_rotation" ? SymmetryKind::FiniteRotation : SymmetryKind::InfiniteRotation;
    if (g.kind == SymmetryKind::FiniteRotation) g.order = field<int>(j, "order");
    if (!j.contains("axis") || !j.contains("point")) schema_fail("rotation needs 'axis' and 'point'");
    g.direction = vec3_from_json(j["axis"]);
    g.origin = vec3_from_json(j["point"]);
  } else {
    schema_fail("unknown symmetry kind '" + kind + "'");
  }
  if (g.kind == SymmetryKind::InfiniteRotation) g.order = 0;
  return g;
}

json aggregated_to_json(const AggregatedKeypointSet& set) {
  json kps = json::array();
  for (const auto& k : set.keypoints) kps.push_back({{"point_index", k.point_index}, {"semantic_index", k.semantic_index}});
  json sym = json::array();
  for (const auto& g : set.symmetries) sym.push_back(symmetry_to_json(g));
  return json{{"model_id", set.model_id}, {"keypoints", kps}, {"symmetries", sym}};
}

AggregatedKeypointSet aggregated_from_json(const json& j) {
  AggregatedKeypointSet set;
  set.model_id = field<std::string>(j, "model_id");
  if (!j.contains("keypoints") || !j["keypoints"].is_array()) schema_fail("'keypoints' must be an array");
  for (const auto& k : j["keypoints"])
    set.keypoints.push_back({field<int>(k, "point_index"), field<int>(k, "semantic_index")});
  if (j.contains("symmetries")) {
    for (const auto& g : j["symmetries"]) set.symmetries.push_back(symmetry_from_json(g));
  }
  return set;
}

Split split_from_string(const std::string& tag) {
  if (tag == "train") return Split::Train;
  if (tag == "val") return Split::Val;
  if (tag == "test") return Split::Test;
  schema_fail("unknown split tag '" + tag + "'");
}

json manifest_to_json(const DatasetManifest& manifest) {
  json models = json::array();
  for (const auto& e : manifest.entries)
    models.push_back({{"id", e.id}, {"category", e.category}, {"split", to_string(e.split)}, {"path", e.path}});
  return json{{"models", models}};
}

DatasetManifest manifest_from_json(const json& j) {
  DatasetManifest manifest;
  if (!j.is_object() || !j.contains("models") || !j["models"].is_array()) schema_fail("manifest needs a 'models' array");
  std::set<std::string> seen;
  for (const auto& m : j["models"]) {
    ManifestEntry e;
    e.id = field<std::string>(m, "id");
    e.category = field<std::string>(m, "category");
    e.split = split_from_string(field<std::string>(m, "split"));
    if (!m.contains("path") || !m["path"].is_string() || m["path"].get<std::string>().empty())
      throw Error(ErrorCode::MissingFile, "model '" + e.id + "' has no file path");
    e.path = m["path"].get<std::string>();
    if (!seen.insert(e.id).second) throw Error(ErrorCode::DuplicateId, "model id '" + e.id + "' appears twice");
    manifest.entries.push_back(std::move(e));
  }
  return manifest;
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::IoError, path.string() + ": " + e.what());
  }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

void write_json(const std::filesystem::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

void save_cloud(const std::filesystem::path& path, const ModelCloud& cloud) { write_json(path, cloud_to_json(cloud)); }
ModelCloud load_cloud(const std::filesystem::path& path) { return cloud_from_json(read_json(path)); }

void save_annotations(const std::filesystem::path& path, const RawAnnotationSet& set) {
  write_json(path, annotations_to_json(set));
}
RawAnnotationSet load_annotations(const std::filesystem::path& path) {
  return annotations_from_json(read_json(path));
}

void save_aggregated(const std::filesystem::path& path, const AggregatedKeypointSet& set) {
  write_json(path, aggregated_to_json(set));
}
AggregatedKeypointSet load_aggregated(const std::filesystem::path& path) {
  return aggregated_from_json(read_json(path));
}

void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest) {
  write_json(path, manifest_to_json(manifest));
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error(ErrorCode::MissingFile, "manifest not found: " + path.string());
  return manifest_from_json(read_json(path));
}

}  // namespace kpnet
