#pragma once

#include <filesystem>
#include <istream>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "pervisor/image.hpp"

namespace pervisor::morph {

using Point = Eigen::Vector2d;

/// Corresponding contour points on the source and destination images.
struct ContourPair {
  std::vector<Point> source;
  std::vector<Point> dest;
};

/// Throws std::invalid_argument unless both lists have the same length >= 2
/// and every point lies inside its image.
void validate(const ContourPair& pair, int width, int height);

/// alpha * source + (1 - alpha) * dest, per point.
std::vector<Point> interpolate_contour(const ContourPair& pair, double alpha);

/// round(alpha * src + (1 - alpha) * dst) per pixel, half away from zero.
GrayImage blend(const GrayImage& src, const GrayImage& dst, double alpha);

/// Backward warp: each output pixel p samples img at p + d(p), where d is the
/// inverse-distance-weighted (power 2) displacement from anchors[i] to targets[i].
/// Bilinear sampling with edge clamping.
GrayImage warp_idw(const GrayImage& img, const std::vector<Point>& anchors, const std::vector<Point>& targets);

/// Frame k of n uses alpha = 1 - k / (n - 1). Throws std::invalid_argument on
/// mismatched sizes or n_frames < 2.
std::vector<GrayImage> morph_sequence(const GrayImage& src, const GrayImage& dst,
                                      const std::optional<ContourPair>& pair, int n_frames);

/// Two blocks of `x y` lines separated by a blank line: source, then destination.
ContourPair read_contours(std::istream& in);

/// Writes frame_000.pgm, frame_001.pgm, ... into dir (created if missing).
std::vector<std::filesystem::path> write_frames(const std::vector<GrayImage>& frames, const std::filesystem::path& dir);

}  // namespace pervisor::morph
