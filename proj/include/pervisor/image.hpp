#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace pervisor {

/// Row-major 8-bit raster. Rows index y, columns index x.
using PixelArray = Eigen::Array<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Cumulative sums, same layout as PixelArray.
using SumArray = Eigen::Array<std::int64_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Grayscale image, immutable once constructed.
class GrayImage {
 public:
  /// Wraps a raster; throws std::invalid_argument on an empty raster.
  explicit GrayImage(PixelArray pixels);

  /// Builds a width x height image from row-major values.
  GrayImage(int width, int height, std::span<const std::uint8_t> values);

  /// Constant-valued image.
  static GrayImage filled(int width, int height, std::uint8_t value);

  int width() const { return static_cast<int>(pixels_.cols()); }
  int height() const { return static_cast<int>(pixels_.rows()); }
  std::uint8_t at(int x, int y) const { return pixels_(y, x); }
  const PixelArray& pixels() const { return pixels_; }

  friend bool operator==(const GrayImage& a, const GrayImage& b) {
    return a.pixels_.rows() == b.pixels_.rows() && a.pixels_.cols() == b.pixels_.cols() &&
           (a.pixels_ == b.pixels_).all();
  }

 private:
  PixelArray pixels_;
};

/// Inclusive integral image: sum(x, y) covers every pixel (i, j) with i <= x and j <= y.
class IntegralImage {
 public:
  explicit IntegralImage(const GrayImage& img);

  int width() const { return static_cast<int>(sums_.cols()); }
  int height() const { return static_cast<int>(sums_.rows()); }
  std::int64_t sum(int x, int y) const { return sums_(y, x); }
  const SumArray& sums() const { return sums_; }

  /// Sum over the inclusive rectangle [x0, x1] x [y0, y1] in four lookups.
  /// Throws std::out_of_range unless 0 <= x0 <= x1 < width and 0 <= y0 <= y1 < height.
  std::int64_t box_sum(int x0, int y0, int x1, int y1) const;

  /// Same as box_sum without the bounds check. Caller guarantees validity.
  std::int64_t box_sum_unchecked(int x0, int y0, int x1, int y1) const {
    std::int64_t s = sums_(y1, x1);
    if (x0 > 0) s -= sums_(y1, x0 - 1);
    if (y0 > 0) s -= sums_(y0 - 1, x1);
    if (x0 > 0 && y0 > 0) s += sums_(y0 - 1, x0 - 1);
    return s;
  }

 private:
  SumArray sums_;
};

inline IntegralImage integral(const GrayImage& img) { return IntegralImage(img); }

enum class PgmErrorKind {
  kIo,
  kUnsupportedMagic,
  kMalformedHeader,
  kMaxvalTooLarge,
  kTruncatedData,
};

class PgmError : public std::runtime_error {
 public:
  PgmError(PgmErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  PgmErrorKind kind() const { return kind_; }

 private:
  PgmErrorKind kind_;
};

/// Parses a P2 or P5 graymap held in memory.
GrayImage decode_pgm(std::span<const std::uint8_t> bytes);

/// Binary P5 encoding with header "P5\n<w> <h>\n255\n".
std::vector<std::uint8_t> encode_pgm(const GrayImage& img);

GrayImage load_pgm(const std::filesystem::path& path);
void save_pgm(const GrayImage& img, const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

}  // namespace pervisor
