#pragma once

#include <array>
#include <istream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace pervisor::geo {

/// Mean earth radius in meters.
inline constexpr double kEarthRadiusM = 6'371'000.0;

/// Latitude in [-90, 90], longitude wrapped into (-180, 180] on construction.
class GeoPoint {
 public:
  /// Throws std::invalid_argument for a non-finite coordinate or |lat| > 90.
  GeoPoint(double lat_deg, double lon_deg);

  double lat() const { return lat_; }
  double lon() const { return lon_; }

  friend bool operator==(const GeoPoint&, const GeoPoint&) = default;

 private:
  double lat_;
  double lon_;
};

struct Poi {
  std::string id;
  std::string name;
  GeoPoint location{0.0, 0.0};
  std::string description;
  unsigned priority = 0;  // 0 = landmark

  friend bool operator==(const Poi&, const Poi&) = default;
};

enum class Sector { kAhead, kAheadRight, kRight, kBehindRight, kBehind, kBehindLeft, kLeft, kAheadLeft };

std::string_view sector_name(Sector s);

struct AnnotationPlacement {
  std::string poi_id;
  double distance_m = 0.0;
  double bearing_deg = 0.0;  // [0, 360) from true north, clockwise
  Sector sector = Sector::kAhead;
};

/// Great-circle distance in meters by the haversine formula.
double haversine_distance(const GeoPoint& p1, const GeoPoint& p2);

/// Forward azimuth from p1 to p2 in [0, 360).
double initial_bearing(const GeoPoint& p1, const GeoPoint& p2);

/// 45-degree bin of (bearing - heading) mod 360, AHEAD centered on 0. A value on
/// a bin edge belongs to the counter-clockwise bin.
Sector sector_for(double bearing_deg, double heading_deg);

struct PoiDistance {
  Poi poi;
  double distance_m = 0.0;
};

/// POIs within radius_m, ordered by (priority, distance, id), truncated to max_results.
std::vector<PoiDistance> filter_pois_with_distance(const GeoPoint& user, const std::vector<Poi>& pois,
                                                   double radius_m, std::size_t max_results);

std::vector<Poi> filter_pois(const GeoPoint& user, const std::vector<Poi>& pois, double radius_m,
                             std::size_t max_results);

/// Throws std::invalid_argument when the POI coincides with the user.
AnnotationPlacement place_annotation(const GeoPoint& user, double heading_deg, const Poi& poi);

class CsvError : public std::runtime_error {
 public:
  CsvError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Reads `id,name,lat,lon,priority,description` CSV with RFC-4180 quoting.
/// An empty stream yields no POIs; otherwise the header row is required.
std::vector<Poi> read_pois_csv(std::istream& in);

}  // namespace pervisor::geo
