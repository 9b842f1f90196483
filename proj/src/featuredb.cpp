#include "pervisor/featuredb.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <unordered_set>

#include <zlib.h>

namespace pervisor {

namespace {

constexpr std::uint32_t kMaxStringBytes = 0xFFFF;
constexpr char kMagic[4] = {'P', 'V', 'D', 'B'};

void validate_name(const std::string& name) {
  if (name.empty()) throw DbError(DbErrorKind::kInvalid, "object name must be non-empty");
  if (name.size() > kMaxStringBytes) throw DbError(DbErrorKind::kInvalid, "object name longer than 65535 bytes");
}

void validate_descriptor(const Descriptor& d) {
  const double norm = d.cast<double>().norm();
  if (!(std::abs(norm - 1.0) <= 1e-6)) throw DbError(DbErrorKind::kInvalid, "descriptor is not unit-norm");
}

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, bytes.data(), static_cast<uInt>(bytes.size()));
  return static_cast<std::uint32_t>(crc);
}

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void str(const std::string& s) {
    u16(static_cast<std::uint16_t>(s.size()));
    out_.insert(out_.end(), s.begin(), s.end());
  }
  void raw(const char* p, std::size_t n) { out_.insert(out_.end(), p, p + n); }
  std::vector<std::uint8_t>& bytes() { return out_; }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint8_t u8() {
    need(1);
    return bytes_[pos_++];
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = static_cast<std::uint16_t>(bytes_[pos_] | (bytes_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str() {
    const std::uint16_t n = u16();
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw DbError(DbErrorKind::kTruncated, "truncated database file");
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

// Size of one serialized feature record.
constexpr std::size_t kRecordBytes = 4 + 4 * 4 + 1 + kDescriptorSize * 4;

}  // namespace

AddResult FeatureDb::add_object(const std::string& name, const std::string& metadata, const GrayImage& img,
                                double threshold) {
  validate_name(name);
  const auto extracted = extract(img, threshold);
  return add_object(name, metadata, extracted.features);
}

AddResult FeatureDb::add_object(const std::string& name, const std::string& metadata,
                                std::span<const Feature> features) {
  validate_name(name);
  if (metadata.size() > kMaxStringBytes) throw DbError(DbErrorKind::kInvalid, "metadata longer than 65535 bytes");
  for (const auto& f : features) validate_descriptor(f.descriptor);

  AddResult result;
  result.object_id = next_object_id();
  result.feature_count = features.size();
  result.warning = features.empty();
  objects_.push_back({result.object_id, name, metadata});
  for (const auto& f : features) {
    FeatureRecord r;
    r.object_id = result.object_id;
    r.x = static_cast<float>(f.point.x);
    r.y = static_cast<float>(f.point.y);
    r.scale = static_cast<float>(f.point.scale);
    r.orientation = static_cast<float>(f.point.orientation);
    r.laplacian_sign = static_cast<std::int8_t>(f.point.laplacian_sign < 0 ? -1 : 1);
    r.descriptor = f.descriptor;
    records_.push_back(r);
  }
  return result;
}

const ObjectEntry* FeatureDb::find(std::uint32_t object_id) const {
  const auto it = std::find_if(objects_.begin(), objects_.end(),
                               [&](const ObjectEntry& o) { return o.object_id == object_id; });
  return it == objects_.end() ? nullptr : &*it;
}

std::uint32_t FeatureDb::next_object_id() const {
  std::uint32_t next = 0;
  for (const auto& o : objects_) next = std::max(next, o.object_id + 1);
  return next;
}

FeatureDb FeatureDb::from_tables(std::vector<ObjectEntry> objects, std::vector<FeatureRecord> records) {
  std::unordered_set<std::uint32_t> ids;
  for (const auto& o : objects) {
    validate_name(o.name);
    if (o.metadata.size() > kMaxStringBytes) throw DbError(DbErrorKind::kInvalid, "metadata longer than 65535 bytes");
    if (!ids.insert(o.object_id).second) {
      throw DbError(DbErrorKind::kInvalid, "duplicate object id " + std::to_string(o.object_id));
    }
  }
  for (const auto& r : records) {
    if (!ids.contains(r.object_id)) {
      throw DbError(DbErrorKind::kInvalid, "feature references unknown object id " + std::to_string(r.object_id));
    }
    if (r.laplacian_sign != 1 && r.laplacian_sign != -1) {
      throw DbError(DbErrorKind::kInvalid, "laplacian sign must be -1 or +1");
    }
    validate_descriptor(r.descriptor);
  }
  FeatureDb db;
  db.objects_ = std::move(objects);
  db.records_ = std::move(records);
  return db;
}

std::vector<std::uint8_t> encode_db(const FeatureDb& db) {
  Writer w;
  w.raw(kMagic, 4);
  w.u16(kPvdbVersion);
  w.u32(static_cast<std::uint32_t>(db.objects().size()));
  w.u32(static_cast<std::uint32_t>(db.records().size()));
  for (const auto& o : db.objects()) {
    w.u32(o.object_id);
    w.str(o.name);
    w.str(o.metadata);
  }
  for (const auto& r : db.records()) {
    w.u32(r.object_id);
    w.f32(r.x);
    w.f32(r.y);
    w.f32(r.scale);
    w.f32(r.orientation);
    w.u8(static_cast<std::uint8_t>(r.laplacian_sign));
    for (int i = 0; i < kDescriptorSize; ++i) w.f32(r.descriptor(i));
  }
  const std::uint32_t crc = crc32_of(w.bytes());
  w.u32(crc);
  return std::move(w.bytes());
}

FeatureDb decode_db(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw DbError(DbErrorKind::kBadMagic, "bad magic");
  }
  Reader r(bytes.subspan(4));
  const std::uint16_t version = r.u16();
  if (version != kPvdbVersion) {
    throw DbError(DbErrorKind::kVersionMismatch, "unsupported database version " + std::to_string(version));
  }
  const std::uint32_t object_count = r.u32();
  const std::uint32_t feature_count = r.u32();

  // Each object needs at least 8 bytes; reject impossible counts before allocating.
  if (static_cast<std::uint64_t>(object_count) * 8 + static_cast<std::uint64_t>(feature_count) * kRecordBytes + 4 >
      r.remaining()) {
    throw DbError(DbErrorKind::kTruncated, "truncated database file");
  }

  std::vector<ObjectEntry> objects(object_count);
  for (auto& o : objects) {
    o.object_id = r.u32();
    o.name = r.str();
    o.metadata = r.str();
  }
  std::vector<FeatureRecord> records(feature_count);
  for (auto& rec : records) {
    rec.object_id = r.u32();
    rec.x = r.f32();
    rec.y = r.f32();
    rec.scale = r.f32();
    rec.orientation = r.f32();
    rec.laplacian_sign = static_cast<std::int8_t>(r.u8());
    for (int i = 0; i < kDescriptorSize; ++i) rec.descriptor(i) = r.f32();
  }
  const std::uint32_t stored_crc = r.u32();
  // Trailing bytes mean a length field was damaged; the checksum cannot match either.
  if (r.remaining() != 0 || crc32_of(bytes.first(bytes.size() - 4)) != stored_crc) {
    throw DbError(DbErrorKind::kChecksum, "checksum mismatch");
  }
  return FeatureDb::from_tables(std::move(objects), std::move(records));
}

void save(const FeatureDb& db, const std::filesystem::path& path) {
  const auto bytes = encode_db(db);
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DbError(DbErrorKind::kIo, "cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DbError(DbErrorKind::kIo, "write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw DbError(DbErrorKind::kIo, "cannot replace " + path.string() + ": " + ec.message());
}

FeatureDb load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DbError(DbErrorKind::kIo, "cannot open " + path.string());
  const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return decode_db(bytes);
}

KdForest build_index(const FeatureDb& db, int num_trees, std::uint64_t seed) {
  if (db.records().empty()) throw DbError(DbErrorKind::kInvalid, "database has no features to index");
  DescriptorSet points(db.records().size());
  for (std::size_t i = 0; i < db.records().size(); ++i) {
    points.assign(i, db.records()[i].descriptor, db.records()[i].laplacian_sign);
  }
  return build_forest(std::move(points), num_trees, seed);
}

}  // namespace pervisor
