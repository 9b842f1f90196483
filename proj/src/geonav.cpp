#include "pervisor/geonav.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <iterator>
#include <numbers>
#include <tuple>
#include <unordered_set>

namespace pervisor::geo {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

double wrap_degrees(double deg) {
  double r = std::fmod(deg, 360.0);
  if (r < 0.0) r += 360.0;
  if (r >= 360.0) r = 0.0;
  return r;
}

// Splits RFC-4180 CSV text into records of fields, tracking the line each record starts on.
struct CsvRecord {
  std::size_t line = 0;
  std::vector<std::string> fields;
};

std::vector<CsvRecord> parse_csv(const std::string& text) {
  std::vector<CsvRecord> records;
  CsvRecord current;
  std::string field;
  std::size_t line = 1;
  current.line = line;
  bool in_quotes = false;
  bool field_started = false;
  bool after_quote = false;

  const auto end_field = [&] {
    current.fields.push_back(std::move(field));
    field.clear();
    field_started = false;
    after_quote = false;
  };
  const auto end_record = [&] {
    end_field();
    // A line holding nothing at all is skipped.
    if (!(current.fields.size() == 1 && current.fields[0].empty())) records.push_back(std::move(current));
    current = CsvRecord{};
    current.line = line;
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
          after_quote = true;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    if (c == ',') {
      end_field();
    } else if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') {
      continue;
    } else if (c == '\n') {
      ++line;
      end_record();
    } else if (c == '"' && !field_started) {
      in_quotes = true;
      field_started = true;
    } else {
      if (after_quote) throw CsvError(line, "unexpected character after closing quote");
      field_started = true;
      field.push_back(c);
    }
  }
  if (in_quotes) throw CsvError(line, "unterminated quoted field");
  if (field_started || !current.fields.empty()) end_record();
  return records;
}

double parse_double(const std::string& s, std::size_t line, const char* what) {
  double v = 0.0;
  const auto* first = s.data();
  const auto* last = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (s.empty() || ec != std::errc() || ptr != last) throw CsvError(line, std::string("bad ") + what + ": '" + s + "'");
  return v;
}

unsigned parse_priority(const std::string& s, std::size_t line) {
  unsigned v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
    throw CsvError(line, "bad priority: '" + s + "'");
  }
  return v;
}

}  // namespace

GeoPoint::GeoPoint(double lat_deg, double lon_deg) {
  if (!std::isfinite(lat_deg) || !std::isfinite(lon_deg)) {
    throw std::invalid_argument("GeoPoint: coordinates must be finite");
  }
  if (lat_deg < -90.0 || lat_deg > 90.0) throw std::invalid_argument("GeoPoint: latitude outside [-90, 90]");
  double lon = std::fmod(lon_deg, 360.0);
  if (lon > 180.0) lon -= 360.0;
  if (lon <= -180.0) lon += 360.0;
  lat_ = lat_deg;
  lon_ = lon;
}

std::string_view sector_name(Sector s) {
  static constexpr std::array<std::string_view, 8> kNames{
      "AHEAD", "AHEAD_RIGHT", "RIGHT", "BEHIND_RIGHT", "BEHIND", "BEHIND_LEFT", "LEFT", "AHEAD_LEFT"};
  return kNames[static_cast<std::size_t>(s)];
}

double haversine_distance(const GeoPoint& p1, const GeoPoint& p2) {
  const double phi1 = p1.lat() * kDegToRad;
  const double phi2 = p2.lat() * kDegToRad;
  const double dphi = phi2 - phi1;
  const double dlambda = (p2.lon() - p1.lon()) * kDegToRad;
  const double s_phi = std::sin(dphi / 2.0);
  const double s_lambda = std::sin(dlambda / 2.0);
  double a = s_phi * s_phi + std::cos(phi1) * std::cos(phi2) * s_lambda * s_lambda;
  a = std::clamp(a, 0.0, 1.0);
  // 1 - a written as a sum of squares; the plain subtraction loses ~1e-8 near antipodes.
  const double c_phi = std::cos(dphi / 2.0);
  const double c_lambda = std::cos(dlambda / 2.0);
  const double s_sum = std::sin((phi1 + phi2) / 2.0);
  const double b = std::clamp(c_phi * c_phi * c_lambda * c_lambda + s_sum * s_sum * s_lambda * s_lambda, 0.0, 1.0);
  const double c = 2.0 * std::atan2(std::sqrt(a), std::sqrt(b));
  return kEarthRadiusM * c;
}

double initial_bearing(const GeoPoint& p1, const GeoPoint& p2) {
  const double phi1 = p1.lat() * kDegToRad;
  const double phi2 = p2.lat() * kDegToRad;
  const double dlambda = (p2.lon() - p1.lon()) * kDegToRad;
  const double y = std::sin(dlambda) * std::cos(phi2);
  const double x = std::cos(phi1) * std::sin(phi2) - std::sin(phi1) * std::cos(phi2) * std::cos(dlambda);
  return wrap_degrees(std::atan2(y, x) / kDegToRad);
}

Sector sector_for(double bearing_deg, double heading_deg) {
  const double rel = wrap_degrees(bearing_deg - heading_deg);
  // Bins are (lo, hi]; AHEAD spans (337.5, 22.5].
  const auto bin = static_cast<int>(std::ceil((rel - 22.5) / 45.0));
  return static_cast<Sector>(((bin % 8) + 8) % 8);
}

std::vector<PoiDistance> filter_pois_with_distance(const GeoPoint& user, const std::vector<Poi>& pois,
                                                   double radius_m, std::size_t max_results) {
  std::vector<PoiDistance> out;
  for (const auto& p : pois) {
    const double d = haversine_distance(user, p.location);
    if (d <= radius_m) out.push_back({p, d});
  }
  std::sort(out.begin(), out.end(), [](const PoiDistance& a, const PoiDistance& b) {
    return std::tie(a.poi.priority, a.distance_m, a.poi.id) < std::tie(b.poi.priority, b.distance_m, b.poi.id);
  });
  if (out.size() > max_results) out.resize(max_results);
  return out;
}

std::vector<Poi> filter_pois(const GeoPoint& user, const std::vector<Poi>& pois, double radius_m,
                             std::size_t max_results) {
  std::vector<Poi> out;
  for (auto& pd : filter_pois_with_distance(user, pois, radius_m, max_results)) out.push_back(std::move(pd.poi));
  return out;
}

AnnotationPlacement place_annotation(const GeoPoint& user, double heading_deg, const Poi& poi) {
  if (poi.location == user) throw std::invalid_argument("place_annotation: POI coincides with the user");
  AnnotationPlacement a;
  a.poi_id = poi.id;
  a.distance_m = haversine_distance(user, poi.location);
  a.bearing_deg = initial_bearing(user, poi.location);
  a.sector = sector_for(a.bearing_deg, heading_deg);
  return a;
}

std::vector<Poi> read_pois_csv(std::istream& in) {
  const std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  const auto records = parse_csv(text);
  if (records.empty()) return {};

  static const std::vector<std::string> kHeader{"id", "name", "lat", "lon", "priority", "description"};
  auto header = records.front().fields;
  // Tolerate a UTF-8 byte-order mark.
  if (!header.empty() && header[0].rfind("\xEF\xBB\xBF", 0) == 0) header[0].erase(0, 3);
  if (header != kHeader) throw CsvError(records.front().line, "expected header id,name,lat,lon,priority,description");

  std::vector<Poi> pois;
  std::unordered_set<std::string> ids;
  for (auto it = std::next(records.begin()); it != records.end(); ++it) {
    const auto& f = it->fields;
    if (f.size() != kHeader.size()) throw CsvError(it->line, "expected 6 fields, got " + std::to_string(f.size()));
    Poi p;
    p.id = f[0];
    p.name = f[1];
    try {
      p.location = GeoPoint(parse_double(f[2], it->line, "lat"), parse_double(f[3], it->line, "lon"));
    } catch (const std::invalid_argument& e) {
      throw CsvError(it->line, e.what());
    }
    p.priority = parse_priority(f[4], it->line);
    p.description = f[5];
    if (!ids.insert(p.id).second) throw CsvError(it->line, "duplicate POI id '" + p.id + "'");
    pois.push_back(std::move(p));
  }
  return pois;
}

}  // namespace pervisor::geo
