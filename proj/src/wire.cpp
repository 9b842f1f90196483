#include "pervisor/wire.hpp"

#include <algorithm>

namespace pervisor::wire {

namespace {

void put_be(std::vector<std::uint8_t>& out, std::uint64_t v, int bytes) {
  for (int i = bytes - 1; i >= 0; --i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_be(std::span<const std::uint8_t> in, std::size_t& pos, int bytes) {
  if (in.size() - pos < static_cast<std::size_t>(bytes)) throw ProtocolError(code::kBadPayload, "short payload");
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v = (v << 8) | in[pos + i];
  pos += static_cast<std::size_t>(bytes);
  return v;
}

}  // namespace

std::vector<std::uint8_t> encode_frame(const Message& msg) {
  if (msg.payload.size() > kMaxPayload) throw ProtocolError(code::kOversize);
  std::vector<std::uint8_t> out(kMagic.begin(), kMagic.end());
  out.reserve(kHeaderSize + msg.payload.size());
  out.push_back(kVersion);
  out.push_back(static_cast<std::uint8_t>(msg.type));
  put_be(out, msg.payload.size(), 4);
  out.insert(out.end(), msg.payload.begin(), msg.payload.end());
  return out;
}

FrameHeader decode_header(std::span<const std::uint8_t, kHeaderSize> header) {
  if (!std::equal(kMagic.begin(), kMagic.end(), header.begin())) throw ProtocolError(code::kBadMagic);
  if (header[4] != kVersion) throw ProtocolError(code::kBadVersion);
  const std::uint8_t type = header[5];
  if (type < 1 || type > 3) throw ProtocolError(code::kUnknownType);
  std::size_t pos = 6;
  const auto len = static_cast<std::uint32_t>(get_be(header, pos, 4));
  if (len > kMaxPayload) throw ProtocolError(code::kOversize);
  return {static_cast<MessageType>(type), len};
}

Message decode_frame(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderSize) {
    // Report a wrong magic as such even on a short buffer.
    const std::size_t n = std::min(bytes.size(), kMagic.size());
    if (!std::equal(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(n), kMagic.begin())) {
      throw ProtocolError(code::kBadMagic);
    }
    throw ProtocolError(code::kTruncated);
  }
  const auto header = decode_header(bytes.first<kHeaderSize>());
  const auto body = bytes.subspan(kHeaderSize);
  if (body.size() < header.payload_len) throw ProtocolError(code::kTruncated);
  if (body.size() > header.payload_len) throw ProtocolError(code::kBadPayload, "trailing bytes after frame");
  return {header.type, {body.begin(), body.end()}};
}

std::vector<std::uint8_t> encode_response(const Recognition& r) {
  std::vector<std::uint8_t> out;
  const std::int64_t id = r.object_id ? static_cast<std::int64_t>(*r.object_id) : -1;
  put_be(out, static_cast<std::uint64_t>(id), 8);
  put_be(out, static_cast<std::uint32_t>(r.match_count), 4);
  put_be(out, static_cast<std::uint32_t>(r.total_query_features), 4);
  if (r.object_id) {
    const std::string name = r.object_name.value_or("");
    if (name.size() > 0xFFFF) throw ProtocolError(code::kBadPayload, "object name too long");
    put_be(out, name.size(), 2);
    out.insert(out.end(), name.begin(), name.end());
  }
  return out;
}

Recognition decode_response(std::span<const std::uint8_t> payload) {
  std::size_t pos = 0;
  const auto id = static_cast<std::int64_t>(get_be(payload, pos, 8));
  Recognition r;
  r.match_count = static_cast<std::size_t>(get_be(payload, pos, 4));
  r.total_query_features = static_cast<std::size_t>(get_be(payload, pos, 4));
  if (id >= 0) {
    if (id > static_cast<std::int64_t>(UINT32_MAX)) throw ProtocolError(code::kBadPayload, "object id out of range");
    const auto len = static_cast<std::size_t>(get_be(payload, pos, 2));
    if (payload.size() - pos < len) throw ProtocolError(code::kBadPayload, "short name");
    r.object_id = static_cast<std::uint32_t>(id);
    r.object_name = std::string(payload.begin() + static_cast<std::ptrdiff_t>(pos),
                                payload.begin() + static_cast<std::ptrdiff_t>(pos + len));
    pos += len;
    r.score = static_cast<double>(r.match_count) /
              static_cast<double>(std::max<std::size_t>(r.total_query_features, 1));
  } else if (id != -1) {
    throw ProtocolError(code::kBadPayload, "negative object id");
  }
  if (pos != payload.size()) throw ProtocolError(code::kBadPayload, "trailing bytes in response");
  return r;
}

Message make_error(const std::string& code) { return {MessageType::kError, {code.begin(), code.end()}}; }

std::string decode_error(std::span<const std::uint8_t> payload) { return {payload.begin(), payload.end()}; }

}  // namespace pervisor::wire
