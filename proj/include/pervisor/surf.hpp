#pragma once

#include <array>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "pervisor/image.hpp"

namespace pervisor {

inline constexpr int kDescriptorSize = 64;

/// Unit-norm 64-d SURF descriptor: 4x4 subregions x (sum dx, sum |dx|, sum dy, sum |dy|).
using Descriptor = Eigen::Matrix<float, kDescriptorSize, 1>;

struct InterestPoint {
  double x = 0.0;
  double y = 0.0;
  double scale = 0.0;        // sigma = 1.2 * filter_size / 9
  double orientation = 0.0;  // radians in [0, 2pi)
  int laplacian_sign = 1;    // -1 bright blob on dark, +1 dark blob on light
  double response = 0.0;     // area-normalized det of the approximated Hessian
  int filter_size = 0;

  friend bool operator==(const InterestPoint&, const InterestPoint&) = default;
};

struct Feature {
  InterestPoint point;
  Descriptor descriptor;
};

struct ExtractResult {
  std::vector<Feature> features;
  std::size_t skipped = 0;  // detections whose orientation/descriptor window left the image
};

inline constexpr double kDefaultThreshold = 10.0;
inline constexpr double kDxyWeight = 0.9;
inline constexpr int kOctaves = 4;
inline constexpr int kLayersPerOctave = 4;

/// Box-filter side lengths per octave; the sampling stride is 1 << octave.
inline constexpr std::array<std::array<int, kLayersPerOctave>, kOctaves> kFilterSizes{{
    {9, 15, 21, 27},
    {15, 27, 39, 51},
    {27, 51, 75, 99},
    {51, 99, 147, 195},
}};

inline double filter_scale(int filter_size) { return 1.2 * filter_size / 9.0; }

struct HessianResponse {
  double response = 0.0;
  int sign = 1;
  double dxx = 0.0;
  double dyy = 0.0;
  double dxy = 0.0;
};

/// True when the square footprint of a filter of this size centered at (x, y) lies inside the image.
bool filter_fits(const IntegralImage& ii, int x, int y, int filter_size);

/// det(H) = Dxx*Dyy - (0.9*Dxy)^2 from box filters normalized by filter area.
/// filter_size must be an odd multiple of 3; throws std::out_of_range when the
/// footprint leaves the image and std::invalid_argument for a bad size.
HessianResponse hessian_response(const IntegralImage& ii, int x, int y, int filter_size);

/// Scale-space maxima (3x3x3 suppression) with response above threshold,
/// sorted by descending response.
std::vector<InterestPoint> detect(const IntegralImage& ii, double threshold = kDefaultThreshold);

/// Dominant Haar-response direction in a pi/3 sliding window.
/// Returns nullopt when the sampling disc leaves the image.
std::optional<InterestPoint> assign_orientation(const IntegralImage& ii, const InterestPoint& pt);

/// Oriented 20-sigma descriptor. Returns nullopt when the window leaves the
/// image or every Haar response is zero.
std::optional<Descriptor> describe(const IntegralImage& ii, const InterestPoint& pt);

/// detect, then assign_orientation and describe each point; skips are counted.
ExtractResult extract(const GrayImage& img, double threshold = kDefaultThreshold);

/// Haar wavelet responses with an even side length centered at (x, y).
/// Caller guarantees the footprint is inside the image.
double haar_x(const IntegralImage& ii, int x, int y, int side);
double haar_y(const IntegralImage& ii, int x, int y, int side);

}  // namespace pervisor
