#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pervisor/image.hpp"
#include "pervisor/match.hpp"
#include "pervisor/surf.hpp"

namespace pervisor {

struct ObjectEntry {
  std::uint32_t object_id = 0;
  std::string name;
  std::string metadata;

  friend bool operator==(const ObjectEntry&, const ObjectEntry&) = default;
};

/// One stored feature. Only laplacian_sign and descriptor take part in matching.
struct FeatureRecord {
  std::uint32_t object_id = 0;
  float x = 0.0f;
  float y = 0.0f;
  float scale = 0.0f;
  float orientation = 0.0f;
  std::int8_t laplacian_sign = 1;
  Descriptor descriptor = Descriptor::Zero();

  friend bool operator==(const FeatureRecord& a, const FeatureRecord& b) {
    return a.object_id == b.object_id && a.x == b.x && a.y == b.y && a.scale == b.scale &&
           a.orientation == b.orientation && a.laplacian_sign == b.laplacian_sign && a.descriptor == b.descriptor;
  }
};

enum class DbErrorKind {
  kIo,
  kBadMagic,
  kVersionMismatch,
  kTruncated,
  kChecksum,
  kInvalid,
};

class DbError : public std::runtime_error {
 public:
  DbError(DbErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  DbErrorKind kind() const { return kind_; }

 private:
  DbErrorKind kind_;
};

struct AddResult {
  std::uint32_t object_id = 0;
  std::size_t feature_count = 0;
  bool warning = false;  // set when no features were extracted
};

/// Objects and their SURF feature records.
class FeatureDb {
 public:
  /// Extracts features from img and stores them under a new object id.
  AddResult add_object(const std::string& name, const std::string& metadata, const GrayImage& img,
                       double threshold = kDefaultThreshold);

  /// Stores pre-extracted features under a new object id.
  AddResult add_object(const std::string& name, const std::string& metadata, std::span<const Feature> features);

  const std::vector<ObjectEntry>& objects() const { return objects_; }
  const std::vector<FeatureRecord>& records() const { return records_; }

  /// Object entry by id, or nullptr.
  const ObjectEntry* find(std::uint32_t object_id) const;

  std::uint32_t next_object_id() const;

  /// Builds a database from raw tables; throws DbError(kInvalid) on duplicate ids,
  /// empty or oversize names, dangling object references, or bad descriptors.
  static FeatureDb from_tables(std::vector<ObjectEntry> objects, std::vector<FeatureRecord> records);

  friend bool operator==(const FeatureDb&, const FeatureDb&) = default;

 private:
  std::vector<ObjectEntry> objects_;
  std::vector<FeatureRecord> records_;
};

inline constexpr std::uint16_t kPvdbVersion = 1;

/// Little-endian PVDB encoding with CRC-32 trailer.
std::vector<std::uint8_t> encode_db(const FeatureDb& db);
FeatureDb decode_db(std::span<const std::uint8_t> bytes);

void save(const FeatureDb& db, const std::filesystem::path& path);
FeatureDb load(const std::filesystem::path& path);

/// KD-forest over every record; forest index i refers to db.records()[i].
/// Throws DbError(kInvalid) for a database without features.
KdForest build_index(const FeatureDb& db, int num_trees = kDefaultTrees, std::uint64_t seed = 42);

}  // namespace pervisor
