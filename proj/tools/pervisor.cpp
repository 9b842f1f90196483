// pervisor: command-line front end for the recognition, geo and morphing pipelines.
// Results go to stdout as TSV, diagnostics to stderr.
// Exit codes: 0 success, 1 domain error, 2 usage error.

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "pervisor/featuredb.hpp"
#include "pervisor/geonav.hpp"
#include "pervisor/morph.hpp"
#include "pervisor/recognizer.hpp"
#include "pervisor/service.hpp"
#include "pervisor/surf.hpp"

namespace {

constexpr int kExitDomain = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::uint64_t index_seed() {
  const char* env = std::getenv("PERVISOR_SEED");
  if (env == nullptr || *env == '\0') return 42;
  try {
    std::size_t pos = 0;
    const unsigned long long v = std::stoull(env, &pos, 10);
    if (pos != std::string(env).size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw UsageError(std::string("PERVISOR_SEED must be an unsigned integer, got '") + env + "'");
  }
}

std::optional<std::size_t> parse_checks(const std::string& text) {
  if (text == "unlimited") return std::nullopt;
  try {
    std::size_t pos = 0;
    const unsigned long long v = std::stoull(text, &pos, 10);
    if (pos == text.size() && v > 0) return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
  }
  throw UsageError("--checks must be a positive integer or 'unlimited', got '" + text + "'");
}

struct RecognizerFlags {
  double threshold = pervisor::kDefaultThreshold;
  double ratio = 0.7;
  std::string checks = "32";
  std::size_t min_matches = 4;
  bool no_sign_filter = false;
  bool linear = false;
  int trees = pervisor::kDefaultTrees;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--threshold", threshold, "Hessian response threshold")->check(CLI::NonNegativeNumber);
    cmd->add_option("--ratio", ratio, "Nearest/second-nearest ratio")->check(CLI::Range(0.0, 1.0));
    cmd->add_option("--checks", checks, "Search budget: positive integer or 'unlimited'");
    cmd->add_option("--min-matches", min_matches, "Votes needed to report an object")->check(CLI::PositiveNumber);
    cmd->add_flag("--no-sign-filter", no_sign_filter, "Compare features regardless of Laplacian sign");
    cmd->add_flag("--linear", linear, "Exhaustive linear scan instead of the KD-forest");
    cmd->add_option("--trees", trees, "Number of randomized KD-trees")->check(CLI::PositiveNumber);
  }

  pervisor::RecognizerConfig config() const {
    pervisor::RecognizerConfig c;
    c.threshold = threshold;
    c.ratio = ratio;
    c.checks = parse_checks(checks);
    c.min_matches = min_matches;
    c.sign_filter = !no_sign_filter;
    c.linear_scan = linear;
    return c;
  }
};

void print_recognition(const pervisor::Recognition& r) {
  std::cout << (r.object_id ? static_cast<long long>(*r.object_id) : -1LL) << '\t' << r.object_name.value_or("-")
            << '\t' << r.match_count << '\t' << r.total_query_features << '\t' << std::setprecision(6) << r.score
            << '\n';
}

std::pair<std::string, std::uint16_t> split_host_port(const std::string& server) {
  const auto colon = server.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == server.size()) {
    throw UsageError("--server must be HOST:PORT, got '" + server + "'");
  }
  try {
    std::size_t pos = 0;
    const std::string port_text = server.substr(colon + 1);
    const unsigned long port = std::stoul(port_text, &pos, 10);
    if (pos != port_text.size() || port == 0 || port > 65535) throw std::out_of_range("port");
    return {server.substr(0, colon), static_cast<std::uint16_t>(port)};
  } catch (const std::exception&) {
    throw UsageError("invalid port in '" + server + "'");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pervisor: object recognition, POI filtering and morphing tools"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);

  // db
  auto* db_cmd = app.add_subcommand("db", "Feature database maintenance");
  db_cmd->require_subcommand(1);
  std::string db_path;
  std::string name;
  std::string meta;
  std::string image_path;
  double threshold = pervisor::kDefaultThreshold;
  auto* db_add = db_cmd->add_subcommand("add", "Extract features from an image and enroll it as an object");
  db_add->add_option("--db", db_path, "Database file (created if missing)")->required();
  db_add->add_option("--name", name, "Object name")->required();
  db_add->add_option("--meta", meta, "Free-form metadata");
  db_add->add_option("--threshold", threshold, "Hessian response threshold")->check(CLI::NonNegativeNumber);
  db_add->add_option("image", image_path, "PGM image")->required();
  auto* db_info = db_cmd->add_subcommand("info", "Print object and feature counts");
  db_info->add_option("--db", db_path, "Database file")->required();

  // extract
  auto* extract_cmd = app.add_subcommand("extract", "List SURF features of an image");
  extract_cmd->add_option("image", image_path, "PGM image")->required();
  extract_cmd->add_option("--threshold", threshold, "Hessian response threshold")->check(CLI::NonNegativeNumber);

  // match
  RecognizerFlags match_flags;
  auto* match_cmd = app.add_subcommand("match", "Recognize an image against a database offline");
  match_cmd->add_option("--db", db_path, "Database file")->required();
  match_cmd->add_option("image", image_path, "PGM image")->required();
  match_flags.add_to(match_cmd);

  // serve
  RecognizerFlags serve_flags;
  std::string bind = "127.0.0.1";
  int port = 0;
  auto* serve_cmd = app.add_subcommand("serve", "Run the recognition server");
  serve_cmd->add_option("--db", db_path, "Database file")->required();
  serve_cmd->add_option("--bind", bind, "IPv4 bind address");
  serve_cmd->add_option("--port", port, "TCP port")->required()->check(CLI::Range(0, 65535));
  serve_flags.add_to(serve_cmd);

  // recognize
  std::string server;
  auto* recognize_cmd = app.add_subcommand("recognize", "Send an image to a recognition server");
  recognize_cmd->add_option("--server", server, "HOST:PORT")->required();
  recognize_cmd->add_option("image", image_path, "PGM image")->required();

  // geo
  auto* geo_cmd = app.add_subcommand("geo", "Point-of-interest tools");
  geo_cmd->require_subcommand(1);
  double lat = 0.0, lon = 0.0, radius = 0.0;
  std::size_t max_results = 20;
  std::optional<double> heading;
  std::string pois_path;
  auto* geo_filter = geo_cmd->add_subcommand("filter", "POIs within a radius, landmarks first");
  geo_filter->add_option("--lat", lat, "User latitude (degrees)")->required()->check(CLI::Range(-90.0, 90.0));
  geo_filter->add_option("--lon", lon, "User longitude (degrees)")->required();
  geo_filter->add_option("--radius", radius, "Radius in meters")->required()->check(CLI::PositiveNumber);
  geo_filter->add_option("--max", max_results, "Maximum number of results")->check(CLI::PositiveNumber);
  geo_filter->add_option("--heading", heading, "User heading in degrees; adds bearing and sector columns");
  geo_filter->add_option("pois", pois_path, "POI CSV file")->required();

  // morph
  std::string src_path, dst_path, contours_path, out_dir;
  int frames = 0;
  auto* morph_cmd = app.add_subcommand("morph", "Generate a morphing sequence between two images");
  morph_cmd->add_option("--src", src_path, "Source PGM")->required();
  morph_cmd->add_option("--dst", dst_path, "Destination PGM")->required();
  morph_cmd->add_option("--frames", frames, "Number of frames (>= 2)")->required()->check(CLI::Range(2, 100000));
  morph_cmd->add_option("--contours", contours_path, "Contour correspondence file");
  morph_cmd->add_option("--out", out_dir, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (db_add->parsed()) {
      pervisor::FeatureDb db;
      if (std::filesystem::exists(db_path)) db = pervisor::load(db_path);
      const auto result = db.add_object(name, meta, pervisor::load_pgm(image_path), threshold);
      pervisor::save(db, db_path);
      if (result.warning) std::cerr << "warning: no features extracted from " << image_path << "\n";
      std::cout << result.object_id << '\t' << result.feature_count << '\n';
    } else if (db_info->parsed()) {
      const auto db = pervisor::load(db_path);
      std::cout << "objects\t" << db.objects().size() << "\nfeatures\t" << db.records().size() << '\n';
    } else if (extract_cmd->parsed()) {
      const auto result = pervisor::extract(pervisor::load_pgm(image_path), threshold);
      std::cout << std::setprecision(9);
      for (const auto& f : result.features) {
        std::cout << f.point.x << '\t' << f.point.y << '\t' << f.point.scale << '\t' << f.point.orientation << '\t'
                  << f.point.laplacian_sign << '\n';
      }
      std::cerr << result.features.size() << " features, " << result.skipped << " skipped at the border\n";
    } else if (match_cmd->parsed()) {
      const auto config = match_flags.config();
      const auto index = pervisor::RecognitionIndex::build(pervisor::load(db_path), match_flags.trees, index_seed());
      print_recognition(pervisor::recognize(index, pervisor::load_pgm(image_path), config));
    } else if (serve_cmd->parsed()) {
      pervisor::ServerConfig config;
      config.bind_address = bind;
      config.port = static_cast<std::uint16_t>(port);
      config.recognizer = serve_flags.config();
      pervisor::serve(db_path, config, serve_flags.trees, index_seed());
    } else if (recognize_cmd->parsed()) {
      const auto [host, p] = split_host_port(server);
      print_recognition(pervisor::client_recognize(host, p, image_path));
    } else if (geo_filter->parsed()) {
      std::ifstream in(pois_path);
      if (!in) throw std::runtime_error("cannot open " + pois_path);
      const auto pois = pervisor::geo::read_pois_csv(in);
      const pervisor::geo::GeoPoint user(lat, lon);
      std::cout << std::fixed << std::setprecision(1);
      for (const auto& pd : pervisor::geo::filter_pois_with_distance(user, pois, radius, max_results)) {
        std::cout << pd.poi.id << '\t' << pd.poi.name << '\t' << pd.poi.priority << '\t' << pd.distance_m;
        if (heading) {
          if (pd.poi.location == user) {
            std::cout << "\t-\t-";
          } else {
            const auto a = pervisor::geo::place_annotation(user, *heading, pd.poi);
            std::cout << '\t' << a.bearing_deg << '\t' << pervisor::geo::sector_name(a.sector);
          }
        }
        std::cout << '\n';
      }
    } else if (morph_cmd->parsed()) {
      std::optional<pervisor::morph::ContourPair> pair;
      if (!contours_path.empty()) {
        std::ifstream in(contours_path);
        if (!in) throw std::runtime_error("cannot open " + contours_path);
        pair = pervisor::morph::read_contours(in);
      }
      const auto seq = pervisor::morph::morph_sequence(pervisor::load_pgm(src_path), pervisor::load_pgm(dst_path),
                                                       pair, frames);
      for (const auto& p : pervisor::morph::write_frames(seq, out_dir)) std::cout << p.string() << '\n';
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDomain;
  }
  return 0;
}
