#include "kpnet/image_io.hpp"

#include "kpnet/error.hpp"

#include <png.h>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>

namespace kpnet {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void write_png(const std::filesystem::path& path, int width, int height, int color_type, int channels,
               std::span<const std::uint8_t> data) {
  if (data.size() != static_cast<std::size_t>(width) * height * channels)
    throw Error(ErrorCode::IoError, "image buffer size mismatch");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) throw Error(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorCode::IoError, "libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorCode::IoError, "failed writing " + path.string());
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8, color_type,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int r = 0; r < height; ++r)
    png_write_row(png, const_cast<png_bytep>(data.data() + static_cast<std::size_t>(r) * width * channels));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

void write_png_gray(const std::filesystem::path& path, const SilhouetteImage& image) {
  std::vector<std::uint8_t> px(static_cast<std::size_t>(image.width) * image.height);
  for (int r = 0; r < image.height; ++r)
    for (int c = 0; c < image.width; ++c)
      px[static_cast<std::size_t>(r) * image.width + c] =
          static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(image.values(r, c), 0.0, 1.0)));
  write_png(path, image.width, image.height, PNG_COLOR_TYPE_GRAY, 1, px);
}

void write_png_rgb(const std::filesystem::path& path, int width, int height, std::span<const std::uint8_t> rgb) {
  write_png(path, width, height, PNG_COLOR_TYPE_RGB, 3, rgb);
}

SilhouetteImage read_png_gray(const std::filesystem::path& path) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) throw Error(ErrorCode::MissingFile, "cannot open " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorCode::IoError, "libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorCode::IoError, "failed reading " + path.string());
  }
  png_init_io(png, file.get());
  png_read_info(png, info);
  if (png_get_color_type(png, info) != PNG_COLOR_TYPE_GRAY || png_get_bit_depth(png, info) != 8) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorCode::IoError, path.string() + " is not an 8-bit grayscale PNG");
  }
  const int width = static_cast<int>(png_get_image_width(png, info));
  const int height = static_cast<int>(png_get_image_height(png, info));
  auto out = SilhouetteImage::zeros(width, height);
  std::vector<std::uint8_t> row(static_cast<std::size_t>(width));
  for (int r = 0; r < height; ++r) {
    png_read_row(png, row.data(), nullptr);
    for (int c = 0; c < width; ++c) out.values(r, c) = row[c] / 255.0;
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

std::vector<std::uint8_t> embedding_preview(const EmbeddingImage& image) {
  const std::size_t pixels = image.mask.size();
  std::vector<std::uint8_t> rgb(pixels * 3, 0);
  std::vector<Eigen::Index> rows;
  for (std::size_t px = 0; px < pixels; ++px)
    if (image.mask[px]) rows.push_back(static_cast<Eigen::Index>(px));
  if (rows.empty() || image.embeddings.cols() == 0) return rgb;

  Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), image.embeddings.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) x.row(static_cast<Eigen::Index>(i)) = image.embeddings.row(rows[i]);
  const Eigen::RowVectorXd mean = x.colwise().mean();
  x.rowwise() -= mean;
  const Eigen::MatrixXd cov = x.transpose() * x / std::max<double>(1.0, static_cast<double>(x.rows()));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  const Eigen::Index d = cov.cols();
  const int comps = static_cast<int>(std::min<Eigen::Index>(3, d));
  Eigen::MatrixXd basis = Eigen::MatrixXd::Zero(d, 3);
  for (int c = 0; c < comps; ++c) {
    Eigen::VectorXd v = eig.eigenvectors().col(d - 1 - c);
    Eigen::Index arg = 0;
    for (Eigen::Index k = 1; k < d; ++k)
      if (std::abs(v[k]) > std::abs(v[arg])) arg = k;
    if (v[arg] < 0.0) v = -v;
    basis.col(c) = v;
  }
  const Eigen::MatrixXd proj = x * basis;
  for (int c = 0; c < 3; ++c) {
    const double lo = proj.col(c).minCoeff(), hi = proj.col(c).maxCoeff();
    const double span = hi - lo;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const double t = span > 0.0 ? (proj(static_cast<Eigen::Index>(i), c) - lo) / span : 0.5;
      rgb[static_cast<std::size_t>(rows[i]) * 3 + c] = static_cast<std::uint8_t>(std::lround(255.0 * t));
    }
  }
  return rgb;
}

void write_f64_raw(const std::filesystem::path& path, std::span<const double> values) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  for (double v : values) {
    auto bits = std::bit_cast<std::uint64_t>(v);
    char bytes[8];
    for (int b = 0; b < 8; ++b) bytes[b] = static_cast<char>((bits >> (8 * b)) & 0xff);
    out.write(bytes, 8);
  }
  if (!out) throw Error(ErrorCode::IoError, "failed writing " + path.string());
}

std::vector<double> read_f64_raw(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingFile, "cannot open " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() % 8 != 0) throw Error(ErrorCode::IoError, path.string() + " is not a whole number of doubles");
  std::vector<double> out(bytes.size() / 8);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[i * 8 + b])) << (8 * b);
    out[i] = std::bit_cast<double>(bits);
  }
  return out;
}

}  // namespace kpnet
