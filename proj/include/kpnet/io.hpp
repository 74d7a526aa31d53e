#pragma once

#include "kpnet/types.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace kpnet {

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(const std::string& text);

/// Packs doubles as little-endian IEEE-754 binary64, independent of host order.
std::string encode_f64(std::span<const double> values);
std::vector<double> decode_f64(const std::string& base64);

nlohmann::json cloud_to_json(const ModelCloud& cloud);
ModelCloud cloud_from_json(const nlohmann::json& j);

nlohmann::json annotations_to_json(const RawAnnotationSet& set);
RawAnnotationSet annotations_from_json(const nlohmann::json& j);

nlohmann::json symmetry_to_json(const SymmetryGroup& group);
SymmetryGroup symmetry_from_json(const nlohmann::json& j);

nlohmann::json aggregated_to_json(const AggregatedKeypointSet& set);
AggregatedKeypointSet aggregated_from_json(const nlohmann::json& j);

nlohmann::json manifest_to_json(const DatasetManifest& manifest);
DatasetManifest manifest_from_json(const nlohmann::json& j);

Split split_from_string(const std::string& tag);

// File helpers. Reads raise IoError for unreadable/truncated input and
// SchemaError for well-formed JSON that violates the schema.
nlohmann::json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const nlohmann::json& j);
void write_text(const std::filesystem::path& path, const std::string& text);

void save_cloud(const std::filesystem::path& path, const ModelCloud& cloud);
ModelCloud load_cloud(const std::filesystem::path& path);
void save_annotations(const std::filesystem::path& path, const RawAnnotationSet& set);
RawAnnotationSet load_annotations(const std::filesystem::path& path);
void save_aggregated(const std::filesystem::path& path, const AggregatedKeypointSet& set);
AggregatedKeypointSet load_aggregated(const std::filesystem::path& path);
void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);
DatasetManifest load_manifest(const std::filesystem::path& path);

}  // namespace kpnet
