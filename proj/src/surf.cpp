#include "pervisor/surf.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <tuple>

namespace pervisor {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double normalize_angle(double a) {
  a = std::fmod(a, kTwoPi);
  if (a < 0.0) a += kTwoPi;
  if (a >= kTwoPi) a = 0.0;
  return a;
}

bool box_inside(const IntegralImage& ii, int x0, int y0, int x1, int y1) {
  return x0 >= 0 && y0 >= 0 && x1 < ii.width() && y1 < ii.height();
}

// Integer sampling step used by orientation and descriptor windows.
int sample_step(double scale) { return std::max(1, static_cast<int>(std::lround(scale))); }

HessianResponse hessian_unchecked(const IntegralImage& ii, int x, int y, int size) {
  const int lobe = size / 3;
  const int border = (size - 1) / 2;
  const int half_lobe = lobe / 2;
  const double inv_area = 1.0 / (static_cast<double>(size) * size);

  const auto box = [&](int x0, int y0, int x1, int y1) {
    return static_cast<double>(ii.box_sum_unchecked(x0, y0, x1, y1));
  };

  const double dxx = box(x - border, y - lobe + 1, x + border, y + lobe - 1) -
                     3.0 * box(x - half_lobe, y - lobe + 1, x - half_lobe + lobe - 1, y + lobe - 1);
  const double dyy = box(x - lobe + 1, y - border, x + lobe - 1, y + border) -
                     3.0 * box(x - lobe + 1, y - half_lobe, x + lobe - 1, y - half_lobe + lobe - 1);
  const double dxy = box(x + 1, y - lobe, x + lobe, y - 1) + box(x - lobe, y + 1, x - 1, y + lobe) -
                     box(x - lobe, y - lobe, x - 1, y - 1) - box(x + 1, y + 1, x + lobe, y + lobe);

  HessianResponse r;
  r.dxx = dxx * inv_area;
  r.dyy = dyy * inv_area;
  r.dxy = dxy * inv_area;
  r.response = r.dxx * r.dyy - (kDxyWeight * r.dxy) * (kDxyWeight * r.dxy);
  r.sign = (r.dxx + r.dyy) < 0.0 ? -1 : 1;
  return r;
}

// Responses of one filter size sampled on the octave grid; NaN where the filter does not fit.
struct ResponseLayer {
  int size = 0;
  Eigen::ArrayXXd response;
  Eigen::ArrayXXi sign;
};

ResponseLayer compute_layer(const IntegralImage& ii, int size, int step, Eigen::Index rows, Eigen::Index cols) {
  ResponseLayer layer;
  layer.size = size;
  layer.response = Eigen::ArrayXXd::Constant(rows, cols, std::numeric_limits<double>::quiet_NaN());
  layer.sign = Eigen::ArrayXXi::Ones(rows, cols);
  for (Eigen::Index gy = 0; gy < rows; ++gy) {
    for (Eigen::Index gx = 0; gx < cols; ++gx) {
      const int x = static_cast<int>(gx) * step;
      const int y = static_cast<int>(gy) * step;
      if (!filter_fits(ii, x, y, size)) continue;
      const auto r = hessian_unchecked(ii, x, y, size);
      layer.response(gy, gx) = r.response;
      layer.sign(gy, gx) = r.sign;
    }
  }
  return layer;
}

bool is_local_maximum(const std::array<ResponseLayer, kLayersPerOctave>& layers, int li, Eigen::Index gy,
                      Eigen::Index gx) {
  const double v = layers[li].response(gy, gx);
  const Eigen::Index rows = layers[li].response.rows();
  const Eigen::Index cols = layers[li].response.cols();
  if (gy < 1 || gx < 1 || gy + 1 >= rows || gx + 1 >= cols) return false;
  for (int dl = -1; dl <= 1; ++dl) {
    const auto& r = layers[li + dl].response;
    for (Eigen::Index dy = -1; dy <= 1; ++dy) {
      for (Eigen::Index dx = -1; dx <= 1; ++dx) {
        if (dl == 0 && dy == 0 && dx == 0) continue;
        const double n = r(gy + dy, gx + dx);
        // A neighbour without a response means the filter stack does not fit here.
        if (std::isnan(n) || n >= v) return false;
      }
    }
  }
  return true;
}

}  // namespace

bool filter_fits(const IntegralImage& ii, int x, int y, int filter_size) {
  const int border = (filter_size - 1) / 2;
  return box_inside(ii, x - border, y - border, x + border, y + border);
}

HessianResponse hessian_response(const IntegralImage& ii, int x, int y, int filter_size) {
  if (filter_size < 9 || filter_size % 2 == 0 || filter_size % 3 != 0) {
    throw std::invalid_argument("hessian_response: filter size must be an odd multiple of 3, >= 9");
  }
  if (!filter_fits(ii, x, y, filter_size)) {
    throw std::out_of_range("hessian_response: filter footprint outside the image");
  }
  return hessian_unchecked(ii, x, y, filter_size);
}

std::vector<InterestPoint> detect(const IntegralImage& ii, double threshold) {
  std::vector<InterestPoint> points;
  for (int octave = 0; octave < kOctaves; ++octave) {
    const int step = 1 << octave;
    if (!filter_fits(ii, ii.width() / 2, ii.height() / 2, kFilterSizes[octave][1])) break;
    const Eigen::Index rows = (ii.height() + step - 1) / step;
    const Eigen::Index cols = (ii.width() + step - 1) / step;
    std::array<ResponseLayer, kLayersPerOctave> layers;
    for (int li = 0; li < kLayersPerOctave; ++li) {
      layers[li] = compute_layer(ii, kFilterSizes[octave][li], step, rows, cols);
    }
    for (int li = 1; li + 1 < kLayersPerOctave; ++li) {
      for (Eigen::Index gy = 0; gy < rows; ++gy) {
        for (Eigen::Index gx = 0; gx < cols; ++gx) {
          const double v = layers[li].response(gy, gx);
          if (std::isnan(v) || !(v > threshold)) continue;
          if (!is_local_maximum(layers, li, gy, gx)) continue;
          InterestPoint p;
          p.x = static_cast<double>(gx * step);
          p.y = static_cast<double>(gy * step);
          p.filter_size = layers[li].size;
          p.scale = filter_scale(p.filter_size);
          p.laplacian_sign = layers[li].sign(gy, gx);
          p.response = v;
          points.push_back(p);
        }
      }
    }
  }
  std::stable_sort(points.begin(), points.end(), [](const InterestPoint& a, const InterestPoint& b) {
    return std::tie(b.response, a.filter_size, a.y, a.x) < std::tie(a.response, b.filter_size, b.y, b.x);
  });
  return points;
}

double haar_x(const IntegralImage& ii, int x, int y, int side) {
  const int h = side / 2;
  return static_cast<double>(ii.box_sum_unchecked(x, y - h, x + h - 1, y + h - 1) -
                             ii.box_sum_unchecked(x - h, y - h, x - 1, y + h - 1));
}

double haar_y(const IntegralImage& ii, int x, int y, int side) {
  const int h = side / 2;
  return static_cast<double>(ii.box_sum_unchecked(x - h, y, x + h - 1, y + h - 1) -
                             ii.box_sum_unchecked(x - h, y - h, x + h - 1, y - 1));
}

std::optional<InterestPoint> assign_orientation(const IntegralImage& ii, const InterestPoint& pt) {
  constexpr int kRadius = 6;
  constexpr double kWindow = std::numbers::pi / 3.0;
  constexpr int kWindowSteps = 72;

  const int s = sample_step(pt.scale);
  const int cx = static_cast<int>(std::lround(pt.x));
  const int cy = static_cast<int>(std::lround(pt.y));
  const int side = 4 * s;
  // Samples reach (kRadius - 1) * s from the center, plus half a wavelet.
  const int reach = (kRadius - 1) * s + side / 2;
  if (!box_inside(ii, cx - reach, cy - reach, cx + reach - 1, cy + reach - 1)) return std::nullopt;

  struct Sample {
    double dx, dy, angle;
  };
  std::vector<Sample> samples;
  samples.reserve(113);
  const double inv_two_var = 1.0 / (2.0 * 2.5 * 2.5);
  for (int j = -kRadius + 1; j < kRadius; ++j) {
    for (int i = -kRadius + 1; i < kRadius; ++i) {
      if (i * i + j * j >= kRadius * kRadius) continue;
      const double g = std::exp(-(i * i + j * j) * inv_two_var);
      const double rx = g * haar_x(ii, cx + i * s, cy + j * s, side);
      const double ry = g * haar_y(ii, cx + i * s, cy + j * s, side);
      if (rx == 0.0 && ry == 0.0) continue;
      samples.push_back({rx, ry, normalize_angle(std::atan2(ry, rx))});
    }
  }

  double best_norm = -1.0;
  double best_x = 0.0;
  double best_y = 0.0;
  for (int w = 0; w < kWindowSteps; ++w) {
    const double start = kTwoPi * w / kWindowSteps;
    double sx = 0.0;
    double sy = 0.0;
    for (const auto& smp : samples) {
      const double rel = normalize_angle(smp.angle - start);
      if (rel < kWindow) {
        sx += smp.dx;
        sy += smp.dy;
      }
    }
    const double norm = sx * sx + sy * sy;
    if (norm > best_norm) {
      best_norm = norm;
      best_x = sx;
      best_y = sy;
    }
  }

  InterestPoint out = pt;
  out.orientation = (best_x == 0.0 && best_y == 0.0) ? 0.0 : normalize_angle(std::atan2(best_y, best_x));
  return out;
}

std::optional<Descriptor> describe(const IntegralImage& ii, const InterestPoint& pt) {
  constexpr int kSubregions = 4;
  constexpr int kSamplesPerSub = 5;
  constexpr int kHalfWindow = kSubregions * kSamplesPerSub / 2;

  const double sigma = pt.scale;
  const int s = sample_step(sigma);
  const int side = 2 * s;
  const double co = std::cos(pt.orientation);
  const double si = std::sin(pt.orientation);
  const double inv_two_var = 1.0 / (2.0 * (3.3 * sigma) * (3.3 * sigma));

  struct Position {
    int x, y;
    double u, v;
  };
  std::array<Position, kSubregions * kSubregions * kSamplesPerSub * kSamplesPerSub> positions{};
  std::size_t n = 0;
  for (int sj = 0; sj < kSubregions; ++sj) {
    for (int si_ = 0; si_ < kSubregions; ++si_) {
      for (int l = 0; l < kSamplesPerSub; ++l) {
        for (int k = 0; k < kSamplesPerSub; ++k) {
          const double u = (-kHalfWindow + si_ * kSamplesPerSub + k + 0.5) * sigma;
          const double v = (-kHalfWindow + sj * kSamplesPerSub + l + 0.5) * sigma;
          const int px = static_cast<int>(std::lround(pt.x + u * co - v * si));
          const int py = static_cast<int>(std::lround(pt.y + u * si + v * co));
          if (!box_inside(ii, px - s, py - s, px + s - 1, py + s - 1)) return std::nullopt;
          positions[n++] = {px, py, u, v};
        }
      }
    }
  }

  Eigen::Matrix<double, kDescriptorSize, 1> raw;
  n = 0;
  for (int sub = 0; sub < kSubregions * kSubregions; ++sub) {
    double sum_du = 0.0, sum_adu = 0.0, sum_dv = 0.0, sum_adv = 0.0;
    for (int smp = 0; smp < kSamplesPerSub * kSamplesPerSub; ++smp) {
      const auto& p = positions[n++];
      const double g = std::exp(-(p.u * p.u + p.v * p.v) * inv_two_var);
      const double rx = haar_x(ii, p.x, p.y, side);
      const double ry = haar_y(ii, p.x, p.y, side);
      const double du = g * (rx * co + ry * si);
      const double dv = g * (-rx * si + ry * co);
      sum_du += du;
      sum_adu += std::abs(du);
      sum_dv += dv;
      sum_adv += std::abs(dv);
    }
    raw.segment<4>(4 * sub) << sum_du, sum_adu, sum_dv, sum_adv;
  }

  const double norm = raw.norm();
  if (norm == 0.0) return std::nullopt;
  return Descriptor((raw / norm).cast<float>());
}

ExtractResult extract(const GrayImage& img, double threshold) {
  const IntegralImage ii(img);
  ExtractResult result;
  for (const auto& detected : detect(ii, threshold)) {
    const auto oriented = assign_orientation(ii, detected);
    if (!oriented) {
      ++result.skipped;
      continue;
    }
    const auto desc = describe(ii, *oriented);
    if (!desc) {
      ++result.skipped;
      continue;
    }
    result.features.push_back({*oriented, *desc});
  }
  return result;
}

}  // namespace pervisor
