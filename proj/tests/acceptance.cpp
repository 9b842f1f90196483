// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "pervisor/featuredb.hpp"
#include "pervisor/geonav.hpp"
#include "pervisor/match.hpp"
#include "pervisor/morph.hpp"
#include "pervisor/recognizer.hpp"
#include "pervisor/service.hpp"
#include "pervisor/surf.hpp"
#include "pervisor/wire.hpp"
#include "support/geo_oracle.hpp"
#include "support/loopback.hpp"
#include "support/synth.hpp"

using namespace pervisor;
using namespace pervisor::testing;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

DescriptorSet random_points(std::size_t n, std::mt19937_64& rng) {
  DescriptorSet set(n);
  for (std::size_t i = 0; i < n; ++i) set.assign(i, random_unit_descriptor(rng), (rng() & 1) ? 1 : -1);
  return set;
}

const std::vector<GrayImage>& corpus() {
  static const std::vector<GrayImage> images = desk_corpus();
  return images;
}

std::shared_ptr<const RecognitionIndex> desk_index() {
  static const auto index = std::make_shared<const RecognitionIndex>(RecognitionIndex::build(desk_db(), 4, 42));
  return index;
}

RecognizerConfig exact_config() {
  RecognizerConfig c;
  c.checks = std::nullopt;
  return c;
}

// Bitwise reflected CRC-32 (polynomial 0xEDB88320).
std::uint32_t reference_crc32(const std::uint8_t* data, std::size_t n) {
  std::uint32_t crc = 0xFFFFFFFFu;
  for (std::size_t i = 0; i < n; ++i) {
    crc ^= data[i];
    for (int k = 0; k < 8; ++k) crc = (crc >> 1) ^ (0xEDB88320u & (0u - (crc & 1u)));
  }
  return ~crc;
}

Outcome integral_exactness() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(101);
  std::size_t mismatches = 0, rects = 0;
  for (int n = 0; n < 100; ++n) {
    const int w = 1 + static_cast<int>(rng() % 64);
    const int h = 1 + static_cast<int>(rng() % 64);
    const GrayImage img = random_image(w, h, rng());
    const IntegralImage ii(img);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) mismatches += ii.sum(x, y) != brute_prefix_sum(img, x, y);
    }
    for (int r = 0; r < 200; ++r) {
      int x0 = static_cast<int>(rng() % w), x1 = static_cast<int>(rng() % w);
      int y0 = static_cast<int>(rng() % h), y1 = static_cast<int>(rng() % h);
      if (x0 > x1) std::swap(x0, x1);
      if (y0 > y1) std::swap(y0, y1);
      mismatches += ii.box_sum(x0, y0, x1, y1) != brute_box_sum(img, x0, y0, x1, y1);
      ++rects;
    }
  }
  const double secs = seconds_since(t0);
  return {mismatches == 0 && secs < 5.0,
          fmt("100 images, %zu rectangles, %zu mismatches, %.2f s", rects, mismatches, secs)};
}

Outcome detector_localization() {
  int ok = 0, total = 0;
  std::string worst;
  for (double sb : {3.0, 4.0, 6.0}) {
    for (bool bright : {true, false}) {
      ++total;
      const auto pts = detect(IntegralImage(gaussian_blob(64, 64, 32, 32, sb, bright)));
      const bool good = !pts.empty() && std::hypot(pts[0].x - 32, pts[0].y - 32) <= 2.0 &&
                        pts[0].laplacian_sign == (bright ? -1 : 1);
      ok += good;
      if (!good) worst += fmt(" miss(sigma_b=%.0f,%s)", sb, bright ? "bright" : "dark");
    }
  }
  return {ok == total, fmt("%d/%d blobs located with correct sign%s", ok, total, worst.c_str())};
}

Outcome rotation_repeatability() {
  constexpr double kAngle = std::numbers::pi / 6;
  const GrayImage img = textured_image(128, 1);
  const GrayImage rot = rotate_image(img, kAngle);
  const auto a = extract(img).features;
  const auto b = extract(rot).features;
  if (a.empty() || b.empty()) return {false, "no features"};

  DescriptorSet set(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) set.assign(i, a[i].descriptor, a[i].point.laplacian_sign);
  const auto forest = build_forest(std::move(set));
  MatchOptions opts;
  opts.ratio = 0.7;
  const auto matches = ratio_match(forest, b, opts);

  const auto mapped = [&](std::size_t i) {
    return rotate_point({a[i].point.x, a[i].point.y}, 128, 128, kAngle);
  };
  std::size_t repeated = 0, correct = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const Eigen::Vector2d q = mapped(i);
    std::optional<std::size_t> partner;
    double best = 3.0;
    for (std::size_t j = 0; j < b.size(); ++j) {
      const double d = std::hypot(b[j].point.x - q.x(), b[j].point.y - q.y());
      if (d <= best) best = d, partner = j;
    }
    if (!partner) continue;
    ++repeated;
    const auto& m = matches[*partner];
    if (!m.best_index) continue;
    const Eigen::Vector2d hit = mapped(*m.best_index);
    if (std::hypot(b[*partner].point.x - hit.x(), b[*partner].point.y - hit.y()) <= 3.0) ++correct;
  }
  const bool pass = 2 * repeated >= a.size() && 2 * correct >= repeated && repeated > 0;
  return {pass, fmt("%zu features, %zu re-detected (%.0f%%), %zu of those matched (%.0f%%)", a.size(), repeated,
                    100.0 * repeated / a.size(), correct, repeated ? 100.0 * correct / repeated : 0.0)};
}

Outcome exact_search_oracle() {
  std::mt19937_64 rng(404);
  const DescriptorSet set = random_points(10'000, rng);
  const auto forest = build_forest(set, 4, 42);
  SearchOptions exact;
  exact.checks = std::nullopt;
  std::size_t mismatches = 0;
  for (int q = 0; q < 1000; ++q) {
    const Descriptor query = random_unit_descriptor(rng);
    const int sign = (rng() & 1) ? 1 : -1;
    const auto got = knn_search(forest, query, sign, 2, exact);
    const auto want = linear_knn(set, query, sign, 2);
    bool same = got.size() == want.size();
    for (std::size_t i = 0; same && i < got.size(); ++i) {
      same = got[i].index == want[i].index &&
             std::abs(got[i].distance - want[i].distance) <= 1e-12 * std::max(want[i].distance, 1e-300);
    }
    mismatches += !same;
  }
  return {mismatches == 0, fmt("1000 queries against 10000 points, %zu mismatches", mismatches)};
}

Outcome ann_recall() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(404);
  const DescriptorSet set = random_points(10'000, rng);
  const auto forest = build_forest(set, 4, 42);
  // Queries are perturbed copies of indexed descriptors: the regime the ratio test accepts.
  std::mt19937_64 qrng(505);
  int hit32 = 0, hit128 = 0, uniform32 = 0;
  for (int q = 0; q < 1000; ++q) {
    const std::size_t src = qrng() % set.size();
    const Descriptor query = perturb_descriptor(set.descriptors.col(src), 0.03, qrng);
    const int sign = set.signs[src];
    const auto truth = linear_knn(set, query, sign, 1).at(0).index;
    SearchOptions opts;
    opts.checks = 32;
    hit32 += knn_search(forest, query, sign, 1, opts).at(0).index == truth;
    opts.checks = 128;
    hit128 += knn_search(forest, query, sign, 1, opts).at(0).index == truth;

    const Descriptor u = random_unit_descriptor(qrng);
    opts.checks = 32;
    uniform32 += knn_search(forest, u, sign, 1, opts).at(0).index == linear_knn(set, u, sign, 1).at(0).index;
  }
  const double secs = seconds_since(t0);
  const double r32 = hit32 / 1000.0, r128 = hit128 / 1000.0;
  return {r32 >= 0.80 && r128 >= r32 && secs < 60.0,
          fmt("recall@32 %.3f, recall@128 %.3f (uniform-query recall@32 %.3f, informational), %.1f s", r32, r128,
              uniform32 / 1000.0, secs)};
}

struct CorpusResults {
  std::vector<Recognition> self_exact;
  int self_ok = 0, self_default_ok = 0, noisy_exact_ok = 0, noisy_default_ok = 0;
};

const CorpusResults& corpus_results() {
  static const CorpusResults results = [] {
    CorpusResults r;
    const auto& index = *desk_index();
    for (std::size_t i = 0; i < corpus().size(); ++i) {
      const std::optional<std::uint32_t> want = static_cast<std::uint32_t>(i);
      r.self_exact.push_back(recognize(index, corpus()[i], exact_config()));
      r.self_ok += r.self_exact.back().object_id == want;
      r.self_default_ok += recognize(index, corpus()[i]).object_id == want;
      const GrayImage noisy = add_noise(corpus()[i], 5.0, 500 + i);
      r.noisy_exact_ok += recognize(index, noisy, exact_config()).object_id == want;
      r.noisy_default_ok += recognize(index, noisy).object_id == want;
    }
    return r;
  }();
  return results;
}

Outcome end_to_end_recognition() {
  const auto& r = corpus_results();
  return {r.self_ok == 10 && r.self_default_ok == 10 && r.noisy_exact_ok >= 8 && r.noisy_default_ok >= 7,
          fmt("self-match %d/10 exact, %d/10 checks=32; noisy %d/10 exact, %d/10 checks=32", r.self_ok,
              r.self_default_ok, r.noisy_exact_ok, r.noisy_default_ok)};
}

Outcome haversine() {
  using geo::GeoPoint;
  const double pi_r = std::numbers::pi * geo::kEarthRadiusM;
  std::mt19937_64 rng(707);
  std::uniform_real_distribution<double> lat(-90, 90), lon(-180, 180);
  bool ok = geo::haversine_distance(GeoPoint(12.5, 99.1), GeoPoint(12.5, 99.1)) == 0.0;
  double worst_anti = 0.0, worst_rel = 0.0;
  for (int i = 0; i < 20; ++i) {
    const double phi = lat(rng), lam = lon(rng);
    const double d = geo::haversine_distance(GeoPoint(phi, lam), GeoPoint(-phi, lam + 180.0));
    worst_anti = std::max(worst_anti, std::abs(d - pi_r) / pi_r);
  }
  int pairs = 0;
  while (pairs < 20) {
    const GeoPoint a(lat(rng), lon(rng)), b(lat(rng), lon(rng));
    const double oracle = cosine_law_distance(a, b);
    if (oracle < 1.0) continue;
    worst_rel = std::max(worst_rel, std::abs(geo::haversine_distance(a, b) - oracle) / oracle);
    ++pairs;
  }
  ok = ok && worst_anti <= 1e-9 && worst_rel <= 1e-3;
  return {ok, fmt("identical 0; antipodal rel. error %.2e; 20 pairs vs law of cosines, worst rel. error %.2e",
                  worst_anti, worst_rel)};
}

Outcome poi_filtering() {
  std::mt19937_64 rng(808);
  const auto pois = random_pois(200, 45.0, 7.0, 0.05, rng);
  std::uniform_real_distribution<double> off(-0.03, 0.03), radius(50, 8000);
  int ok = 0;
  for (int q = 0; q < 50; ++q) {
    const geo::GeoPoint user(45.0 + off(rng), 7.0 + off(rng));
    const double r = radius(rng);
    const std::size_t max = (q % 5 == 0) ? 15 : 1000;
    std::vector<std::string> got;
    for (const auto& p : geo::filter_pois(user, pois, r, max)) got.push_back(p.id);
    ok += got == brute_filter_ids(user, pois, r, max);
  }
  return {ok == 50, fmt("%d/50 queries equal the oracle (set and order)", ok)};
}

Outcome morphing() {
  bool ok = true;
  std::string notes;
  for (std::uint64_t s = 0; s < 10; ++s) {
    const GrayImage a = random_image(40, 30, 10 + s), b = random_image(40, 30, 20 + s);
    for (int n : {2, 3, 5, 9}) {
      const auto frames = morph::morph_sequence(a, b, std::nullopt, n);
      ok = ok && frames.front() == a && frames.back() == b;
      morph::ContourPair pair{{{5, 5}, {30, 6}, {20, 25}}, {{7, 4}, {33, 9}, {18, 22}}};
      const auto warped = morph::morph_sequence(a, b, pair, n);
      ok = ok && warped.front() == a && warped.back() == b;
    }
    const auto three = morph::morph_sequence(a, b, std::nullopt, 3);
    for (int y = 0; y < 30; ++y) {
      for (int x = 0; x < 40; ++x) ok = ok && three[1].at(x, y) == (a.at(x, y) + b.at(x, y) + 1) / 2;
    }
    morph::ContourPair ident{{{3, 3}, {25, 20}}, {{3, 3}, {25, 20}}};
    for (const auto& f : morph::morph_sequence(a, a, ident, 5)) ok = ok && f == a;
    for (const auto& f : morph::morph_sequence(a, a, std::nullopt, 5)) ok = ok && f == a;
  }
  return {ok, "endpoints bit-exact, 3-frame midpoint = rounded average, identical-image morph constant"};
}

Outcome wire_protocol() {
  std::mt19937_64 rng(909);
  int roundtrip_ok = 0;
  for (int i = 0; i < 1000; ++i) {
    wire::Message m;
    m.type = static_cast<wire::MessageType>(1 + rng() % 3);
    m.payload.resize(rng() % 2048);
    for (auto& b : m.payload) b = static_cast<std::uint8_t>(rng());
    roundtrip_ok += wire::decode_frame(wire::encode_frame(m)) == m;
  }

  ServerConfig config;
  config.recognizer = exact_config();
  RunningServer running(desk_index(), config);
  const auto valid = wire::encode_frame({wire::MessageType::kRecognizeRequest, encode_pgm(corpus()[0])});
  int replies = 0, silent = 0;
  for (int i = 0; i < 1000; ++i) {
    std::vector<std::uint8_t> bytes;
    if (i % 2 == 0) {
      bytes.resize(rng() % 96);
      for (auto& b : bytes) b = static_cast<std::uint8_t>(rng());
      if (i % 4 == 0 && bytes.size() >= 4) std::copy(wire::kMagic.begin(), wire::kMagic.end(), bytes.begin());
    } else {
      bytes = valid;
      for (int k = 0; k < 3; ++k) bytes[rng() % bytes.size()] = static_cast<std::uint8_t>(rng());
      bytes.resize(rng() % (bytes.size() + 1));
    }
    const auto reply = exchange_bytes("127.0.0.1", running.port(), bytes, std::chrono::seconds(30));
    if (reply.empty()) {
      ++silent;
      continue;
    }
    try {
      wire::decode_frame(reply);
      ++replies;
    } catch (const wire::ProtocolError&) {
    }
  }

  int e2e_ok = 0;
  const auto& local = corpus_results().self_exact;
  for (std::size_t i = 0; i < corpus().size(); ++i) {
    e2e_ok += client_recognize_bytes("127.0.0.1", running.port(), encode_pgm(corpus()[i])) == local[i];
  }
  const bool pass = roundtrip_ok == 1000 && replies + silent == 1000 && e2e_ok == 10;
  return {pass, fmt("%d/1000 frames round-trip; 1000 fuzzed streams -> %d well-formed replies, %d closed silently, "
                    "server alive; loopback self-match %d/10 identical to local",
                    roundtrip_ok, replies, silent, e2e_ok)};
}

Outcome persistence() {
  std::mt19937_64 rng(1111);
  int roundtrip_ok = 0, crc_ok = 0, detected = 0, flips = 0;
  constexpr int kDbs = 40;
  for (int n = 0; n < kDbs; ++n) {
    const FeatureDb db = random_db(rng() % 8, rng() % 300, rng);
    const auto bytes = encode_db(db);
    roundtrip_ok += decode_db(bytes) == db && encode_db(decode_db(bytes)) == bytes;
    const std::size_t body = bytes.size() - 4;
    const std::uint32_t stored = bytes[body] | (bytes[body + 1] << 8) | (bytes[body + 2] << 16) |
                                 (static_cast<std::uint32_t>(bytes[body + 3]) << 24);
    crc_ok += stored == reference_crc32(bytes.data(), body);
    for (int k = 0; k < 25; ++k) {
      auto bad = bytes;
      bad[rng() % bad.size()] ^= static_cast<std::uint8_t>(1 + rng() % 255);
      ++flips;
      try {
        decode_db(bad);
      } catch (const DbError&) {
        ++detected;
      }
    }
  }
  return {roundtrip_ok == kDbs && crc_ok == kDbs && detected == flips,
          fmt("%d/%d round-trips, %d/%d CRC trailers match a reference CRC-32, %d/%d corruptions detected",
              roundtrip_ok, kDbs, crc_ok, kDbs, detected, flips)};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"integral-image exactness", integral_exactness},
      {"detector localization", detector_localization},
      {"rotation repeatability", rotation_repeatability},
      {"exact-search oracle", exact_search_oracle},
      {"ANN recall", ann_recall},
      {"end-to-end recognition", end_to_end_recognition},
      {"haversine", haversine},
      {"POI filtering", poi_filtering},
      {"morphing", morphing},
      {"wire protocol", wire_protocol},
      {"persistence", persistence},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %2zu. %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
