#include "pervisor/morph.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>
#include <string>

namespace pervisor::morph {

namespace {

void require_same_size(const GrayImage& a, const GrayImage& b) {
  if (a.width() != b.width() || a.height() != b.height()) {
    throw std::invalid_argument("morph: source and destination dimensions differ");
  }
}

double sample_bilinear(const PixelArray& px, double x, double y) {
  const double cx = std::clamp(x, 0.0, static_cast<double>(px.cols() - 1));
  const double cy = std::clamp(y, 0.0, static_cast<double>(px.rows() - 1));
  const auto x0 = static_cast<Eigen::Index>(std::floor(cx));
  const auto y0 = static_cast<Eigen::Index>(std::floor(cy));
  const Eigen::Index x1 = std::min<Eigen::Index>(x0 + 1, px.cols() - 1);
  const Eigen::Index y1 = std::min<Eigen::Index>(y0 + 1, px.rows() - 1);
  const double fx = cx - static_cast<double>(x0);
  const double fy = cy - static_cast<double>(y0);
  if (fx == 0.0 && fy == 0.0) return px(y0, x0);
  const double top = (1.0 - fx) * px(y0, x0) + fx * px(y0, x1);
  const double bottom = (1.0 - fx) * px(y1, x0) + fx * px(y1, x1);
  return (1.0 - fy) * top + fy * bottom;
}

std::uint8_t to_pixel(double v) { return static_cast<std::uint8_t>(std::clamp(std::round(v), 0.0, 255.0)); }

}  // namespace

void validate(const ContourPair& pair, int width, int height) {
  if (pair.source.size() != pair.dest.size()) throw std::invalid_argument("contour lists differ in length");
  if (pair.source.size() < 2) throw std::invalid_argument("contours need at least 2 points");
  const auto inside = [&](const Point& p) {
    return p.x() >= 0.0 && p.y() >= 0.0 && p.x() <= width - 1 && p.y() <= height - 1;
  };
  for (std::size_t i = 0; i < pair.source.size(); ++i) {
    if (!inside(pair.source[i]) || !inside(pair.dest[i])) {
      throw std::invalid_argument("contour point " + std::to_string(i) + " lies outside the image");
    }
  }
}

std::vector<Point> interpolate_contour(const ContourPair& pair, double alpha) {
  if (pair.source.size() != pair.dest.size()) throw std::invalid_argument("contour lists differ in length");
  std::vector<Point> out;
  out.reserve(pair.source.size());
  for (std::size_t i = 0; i < pair.source.size(); ++i) {
    out.push_back(alpha * pair.source[i] + (1.0 - alpha) * pair.dest[i]);
  }
  return out;
}

GrayImage blend(const GrayImage& src, const GrayImage& dst, double alpha) {
  require_same_size(src, dst);
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("blend: alpha outside [0, 1]");
  const PixelArray out = (alpha * src.pixels().cast<double>() + (1.0 - alpha) * dst.pixels().cast<double>())
                             .round()
                             .cwiseMax(0.0)
                             .cwiseMin(255.0)
                             .cast<std::uint8_t>();
  return GrayImage(out);
}

GrayImage warp_idw(const GrayImage& img, const std::vector<Point>& anchors, const std::vector<Point>& targets) {
  if (anchors.size() != targets.size()) throw std::invalid_argument("warp_idw: anchor/target count mismatch");
  const PixelArray& px = img.pixels();
  PixelArray out(px.rows(), px.cols());
  for (Eigen::Index y = 0; y < px.rows(); ++y) {
    for (Eigen::Index x = 0; x < px.cols(); ++x) {
      const Point p(static_cast<double>(x), static_cast<double>(y));
      Point disp = Point::Zero();
      double weight_sum = 0.0;
      bool exact = false;
      for (std::size_t i = 0; i < anchors.size(); ++i) {
        const double d2 = (p - anchors[i]).squaredNorm();
        if (d2 == 0.0) {
          disp = targets[i] - anchors[i];
          exact = true;
          break;
        }
        const double w = 1.0 / d2;
        disp += w * (targets[i] - anchors[i]);
        weight_sum += w;
      }
      if (!exact && weight_sum > 0.0) disp /= weight_sum;
      const Point q = p + disp;
      out(y, x) = to_pixel(sample_bilinear(px, q.x(), q.y()));
    }
  }
  return GrayImage(std::move(out));
}

std::vector<GrayImage> morph_sequence(const GrayImage& src, const GrayImage& dst,
                                      const std::optional<ContourPair>& pair, int n_frames) {
  require_same_size(src, dst);
  if (n_frames < 2) throw std::invalid_argument("morph_sequence: need at least 2 frames");
  if (pair) validate(*pair, src.width(), src.height());

  std::vector<GrayImage> frames;
  frames.reserve(static_cast<std::size_t>(n_frames));
  for (int k = 0; k < n_frames; ++k) {
    // Endpoints are pinned so that frame 0 is src and the last frame is dst exactly.
    const double alpha = k == 0 ? 1.0 : (k == n_frames - 1 ? 0.0 : 1.0 - static_cast<double>(k) / (n_frames - 1));
    if (!pair) {
      frames.push_back(blend(src, dst, alpha));
      continue;
    }
    const auto contour = interpolate_contour(*pair, alpha);
    // Output pixels on the interpolated contour sample the matching source/destination points.
    const GrayImage warped_src = alpha == 0.0 ? src : warp_idw(src, contour, pair->source);
    const GrayImage warped_dst = alpha == 1.0 ? dst : warp_idw(dst, contour, pair->dest);
    frames.push_back(blend(warped_src, warped_dst, alpha));
  }
  return frames;
}

ContourPair read_contours(std::istream& in) {
  ContourPair pair;
  std::vector<Point>* block = &pair.source;
  bool seen_points = false;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) {
      if (seen_points && block == &pair.source) block = &pair.dest;
      continue;
    }
    std::istringstream fields(line);
    double x = 0.0, y = 0.0;
    std::string extra;
    if (!(fields >> x >> y) || (fields >> extra)) {
      throw std::invalid_argument("contour line " + std::to_string(line_no) + ": expected 'x y'");
    }
    block->emplace_back(x, y);
    seen_points = true;
  }
  if (pair.dest.empty()) throw std::invalid_argument("contour file needs a source and a destination block");
  return pair;
}

std::vector<std::filesystem::path> write_frames(const std::vector<GrayImage>& frames,
                                                const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> paths;
  for (std::size_t k = 0; k < frames.size(); ++k) {
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%03zu.pgm", k);
    paths.push_back(dir / name);
    save_pgm(frames[k], paths.back());
  }
  return paths;
}

}  // namespace pervisor::morph
