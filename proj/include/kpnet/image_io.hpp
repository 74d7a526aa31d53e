#pragma once

#include "kpnet/silhouette.hpp"
#include "kpnet/transfer.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace kpnet {

/// 8-bit grayscale PNG, value 255 * s rounded.
void write_png_gray(const std::filesystem::path& path, const SilhouetteImage& image);
/// 8-bit RGB PNG from interleaved rows.
void write_png_rgb(const std::filesystem::path& path, int width, int height, std::span<const std::uint8_t> rgb);
/// Reads an 8-bit grayscale PNG back into [0, 1] values.
SilhouetteImage read_png_gray(const std::filesystem::path& path);

/// Covered pixels projected onto the top three principal components of their
/// embeddings, each channel min-max scaled to [0, 255]; uncovered pixels are
/// black. Component signs are fixed so the largest loading is positive.
std::vector<std::uint8_t> embedding_preview(const EmbeddingImage& image);

void write_f64_raw(const std::filesystem::path& path, std::span<const double> values);
std::vector<double> read_f64_raw(const std::filesystem::path& path);

}  // namespace kpnet
