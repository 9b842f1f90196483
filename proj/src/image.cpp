#include "pervisor/image.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <iterator>

namespace pervisor {

GrayImage::GrayImage(PixelArray pixels) : pixels_(std::move(pixels)) {
  if (pixels_.rows() < 1 || pixels_.cols() < 1) {
    throw std::invalid_argument("GrayImage: width and height must be >= 1");
  }
}

GrayImage::GrayImage(int width, int height, std::span<const std::uint8_t> values) {
  if (width < 1 || height < 1) {
    throw std::invalid_argument("GrayImage: width and height must be >= 1");
  }
  if (values.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
    throw std::invalid_argument("GrayImage: pixel count does not match width x height");
  }
  pixels_ = Eigen::Map<const PixelArray>(values.data(), height, width);
}

GrayImage GrayImage::filled(int width, int height, std::uint8_t value) {
  if (width < 1 || height < 1) {
    throw std::invalid_argument("GrayImage: width and height must be >= 1");
  }
  return GrayImage(PixelArray::Constant(height, width, value));
}

IntegralImage::IntegralImage(const GrayImage& img) : sums_(img.height(), img.width()) {
  const auto& px = img.pixels();
  for (Eigen::Index y = 0; y < px.rows(); ++y) {
    std::int64_t row = 0;
    for (Eigen::Index x = 0; x < px.cols(); ++x) {
      row += px(y, x);
      sums_(y, x) = (y > 0 ? sums_(y - 1, x) : 0) + row;
    }
  }
}

std::int64_t IntegralImage::box_sum(int x0, int y0, int x1, int y1) const {
  if (x0 < 0 || y0 < 0 || x0 > x1 || y0 > y1 || x1 >= width() || y1 >= height()) {
    throw std::out_of_range("box_sum: rectangle outside the image");
  }
  return box_sum_unchecked(x0, y0, x1, y1);
}

namespace {

class HeaderReader {
 public:
  explicit HeaderReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  // Reads the next whitespace-delimited unsigned token, skipping '#' comments.
  long next_number(const char* field) {
    skip_space_and_comments();
    std::size_t start = pos_;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) ++pos_;
    if (start == pos_) {
      throw PgmError(PgmErrorKind::kMalformedHeader, std::string("malformed header: bad ") + field);
    }
    long value = 0;
    auto first = reinterpret_cast<const char*>(bytes_.data() + start);
    auto last = reinterpret_cast<const char*>(bytes_.data() + pos_);
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last) {
      throw PgmError(PgmErrorKind::kMalformedHeader, std::string("malformed header: bad ") + field);
    }
    return value;
  }

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  // P5 raster begins after exactly one whitespace byte following maxval.
  void consume_single_whitespace() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) {
      throw PgmError(PgmErrorKind::kMalformedHeader, "malformed header: missing separator before raster");
    }
    ++pos_;
  }

  std::size_t pos() const { return pos_; }
  void seek(std::size_t p) { pos_ = p; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

GrayImage decode_pgm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P') {
    throw PgmError(PgmErrorKind::kUnsupportedMagic, "unsupported magic");
  }
  const bool binary = bytes[1] == '5';
  if (!binary && bytes[1] != '2') {
    throw PgmError(PgmErrorKind::kUnsupportedMagic, "unsupported magic");
  }
  HeaderReader reader(bytes);
  reader.seek(2);
  if (reader.pos() < bytes.size() && !std::isspace(bytes[2]) && bytes[2] != '#') {
    throw PgmError(PgmErrorKind::kUnsupportedMagic, "unsupported magic");
  }
  const long width = reader.next_number("width");
  const long height = reader.next_number("height");
  const long maxval = reader.next_number("maxval");
  if (width < 1 || height < 1 || width > (1L << 20) || height > (1L << 20)) {
    throw PgmError(PgmErrorKind::kMalformedHeader, "malformed header: bad dimensions");
  }
  if (maxval < 1) {
    throw PgmError(PgmErrorKind::kMalformedHeader, "malformed header: bad maxval");
  }
  if (maxval > 255) {
    throw PgmError(PgmErrorKind::kMaxvalTooLarge, "maxval > 255 not supported");
  }

  const auto count = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  std::vector<std::uint8_t> values;
  values.reserve(count);
  if (binary) {
    reader.consume_single_whitespace();
    if (bytes.size() - reader.pos() < count) {
      throw PgmError(PgmErrorKind::kTruncatedData, "truncated pixel data");
    }
    values.assign(bytes.begin() + reader.pos(), bytes.begin() + reader.pos() + count);
  } else {
    for (std::size_t i = 0; i < count; ++i) {
      reader.skip_space_and_comments();
      if (reader.pos() >= bytes.size()) {
        throw PgmError(PgmErrorKind::kTruncatedData, "truncated pixel data");
      }
      const long v = reader.next_number("pixel");
      if (v > maxval) {
        throw PgmError(PgmErrorKind::kMalformedHeader, "pixel value exceeds maxval");
      }
      values.push_back(static_cast<std::uint8_t>(v));
    }
  }
  for (auto v : values) {
    if (v > maxval) throw PgmError(PgmErrorKind::kMalformedHeader, "pixel value exceeds maxval");
  }
  return GrayImage(static_cast<int>(width), static_cast<int>(height), values);
}

std::vector<std::uint8_t> encode_pgm(const GrayImage& img) {
  const std::string header =
      "P5\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), img.pixels().data(), img.pixels().data() + img.pixels().size());
  return out;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PgmError(PgmErrorKind::kIo, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

GrayImage load_pgm(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return decode_pgm(bytes);
}

void save_pgm(const GrayImage& img, const std::filesystem::path& path) {
  const auto bytes = encode_pgm(img);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw PgmError(PgmErrorKind::kIo, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw PgmError(PgmErrorKind::kIo, "write failed for " + path.string());
}

}  // namespace pervisor
