#include "support/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Geometry>

namespace pervisor::testing {

namespace {

std::uint8_t to_pixel(double v) { return static_cast<std::uint8_t>(std::clamp(std::round(v), 0.0, 255.0)); }

}  // namespace

GrayImage gaussian_blob(int width, int height, double cx, double cy, double sigma, bool bright) {
  const GrayImage img = blob_field(width, height, {{cx, cy, sigma, 255.0}});
  return bright ? img : negate(img);
}

GrayImage blob_field(int width, int height, const std::vector<Blob>& blobs, double background) {
  PixelArray px(height, width);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      double v = background;
      for (const auto& b : blobs) {
        const double dx = x - b.cx;
        const double dy = y - b.cy;
        v += b.amplitude * std::exp(-(dx * dx + dy * dy) / (2.0 * b.sigma * b.sigma));
      }
      px(y, x) = to_pixel(v);
    }
  }
  return GrayImage(std::move(px));
}

GrayImage textured_image(int size, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double c = (size - 1) / 2.0;
  const double disc = 0.36 * size;
  std::vector<Blob> blobs;
  const int count = size * size / 300;
  for (int i = 0; i < count; ++i) {
    const double r = disc * std::sqrt(unit(rng));
    const double t = 2.0 * std::numbers::pi * unit(rng);
    const double sigma = 1.5 + 3.0 * unit(rng);
    const double amplitude = (unit(rng) < 0.5 ? -1.0 : 1.0) * (50.0 + 70.0 * unit(rng));
    blobs.push_back({c + r * std::cos(t), c + r * std::sin(t), sigma, amplitude});
  }
  return blob_field(size, size, blobs, 128.0);
}

GrayImage random_image(int width, int height, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  PixelArray px(height, width);
  for (Eigen::Index i = 0; i < px.size(); ++i) px.data()[i] = static_cast<std::uint8_t>(rng() & 0xFF);
  return GrayImage(std::move(px));
}

Eigen::Vector2d rotate_point(const Eigen::Vector2d& p, int width, int height, double angle_rad) {
  const Eigen::Vector2d c((width - 1) / 2.0, (height - 1) / 2.0);
  const Eigen::Rotation2Dd rot(angle_rad);
  return rot * (p - c) + c;
}

GrayImage rotate_image(const GrayImage& img, double angle_rad, std::uint8_t fill) {
  const int w = img.width();
  const int h = img.height();
  PixelArray out(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const Eigen::Vector2d src = rotate_point({double(x), double(y)}, w, h, -angle_rad);
      const double sx = src.x();
      const double sy = src.y();
      if (sx < 0.0 || sy < 0.0 || sx > w - 1 || sy > h - 1) {
        out(y, x) = fill;
        continue;
      }
      const int x0 = std::min(static_cast<int>(std::floor(sx)), w - 1);
      const int y0 = std::min(static_cast<int>(std::floor(sy)), h - 1);
      const int x1 = std::min(x0 + 1, w - 1);
      const int y1 = std::min(y0 + 1, h - 1);
      const double fx = sx - x0;
      const double fy = sy - y0;
      const double v = (1 - fy) * ((1 - fx) * img.at(x0, y0) + fx * img.at(x1, y0)) +
                       fy * ((1 - fx) * img.at(x0, y1) + fx * img.at(x1, y1));
      out(y, x) = to_pixel(v);
    }
  }
  return GrayImage(std::move(out));
}

GrayImage add_noise(const GrayImage& img, double sigma, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, sigma);
  PixelArray px = img.pixels();
  for (Eigen::Index i = 0; i < px.size(); ++i) px.data()[i] = to_pixel(px.data()[i] + noise(rng));
  return GrayImage(std::move(px));
}

GrayImage negate(const GrayImage& img) {
  return GrayImage(PixelArray((255 - img.pixels().cast<int>()).cast<std::uint8_t>()));
}

Descriptor random_unit_descriptor(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Matrix<double, kDescriptorSize, 1> v;
  for (auto& x : v) x = n(rng);
  return v.normalized().cast<float>();
}

Descriptor perturb_descriptor(const Descriptor& d, double sigma, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, sigma);
  Eigen::Matrix<double, kDescriptorSize, 1> v = d.cast<double>();
  for (auto& x : v) x += n(rng);
  return v.normalized().cast<float>();
}

FeatureDb random_db(std::size_t objects, std::size_t features, std::mt19937_64& rng) {
  std::uniform_real_distribution<float> coord(0.0f, 640.0f);
  std::vector<ObjectEntry> entries;
  std::vector<std::uint32_t> ids;
  std::uint32_t id = static_cast<std::uint32_t>(rng() % 5);
  for (std::size_t i = 0; i < objects; ++i) {
    std::string name = "obj-" + std::to_string(i);
    // Some multi-byte UTF-8 and odd bytes in the free-text fields.
    std::string meta = (i % 3 == 0) ? "" : "caf\xc3\xa9 \t" + std::to_string(rng() % 1000);
    entries.push_back({id, name, meta});
    ids.push_back(id);
    id += 1 + static_cast<std::uint32_t>(rng() % 3);
  }
  std::vector<FeatureRecord> records;
  for (std::size_t i = 0; i < features && !ids.empty(); ++i) {
    FeatureRecord r;
    r.object_id = ids[rng() % ids.size()];
    r.x = coord(rng);
    r.y = coord(rng);
    r.scale = 1.2f + coord(rng) / 64.0f;
    r.orientation = coord(rng) / 640.0f * 6.28f;
    r.laplacian_sign = (rng() & 1) ? 1 : -1;
    r.descriptor = random_unit_descriptor(rng);
    records.push_back(r);
  }
  return FeatureDb::from_tables(std::move(entries), std::move(records));
}

std::vector<GrayImage> desk_corpus() {
  std::vector<GrayImage> out;
  for (std::uint64_t i = 0; i < 10; ++i) out.push_back(textured_image(128, 1000 + i));
  return out;
}

FeatureDb desk_db() {
  FeatureDb db;
  const auto corpus = desk_corpus();
  for (std::size_t i = 0; i < corpus.size(); ++i) db.add_object("object-" + std::to_string(i), "", corpus[i]);
  return db;
}

std::int64_t brute_prefix_sum(const GrayImage& img, int x, int y) {
  std::int64_t s = 0;
  for (int j = 0; j <= y; ++j) {
    for (int i = 0; i <= x; ++i) s += img.at(i, j);
  }
  return s;
}

std::int64_t brute_box_sum(const GrayImage& img, int x0, int y0, int x1, int y1) {
  std::int64_t s = 0;
  for (int j = y0; j <= y1; ++j) {
    for (int i = x0; i <= x1; ++i) s += img.at(i, j);
  }
  return s;
}

}  // namespace pervisor::testing
