#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pervisor/recognizer.hpp"

// PARS framing: "PARS" | version u8 | type u8 | payload_len u32 BE | payload.
namespace pervisor::wire {

inline constexpr std::array<std::uint8_t, 4> kMagic{'P', 'A', 'R', 'S'};
inline constexpr std::uint8_t kVersion = 1;
inline constexpr std::size_t kHeaderSize = 10;
inline constexpr std::uint32_t kMaxPayload = 16u * 1024u * 1024u;

enum class MessageType : std::uint8_t {
  kRecognizeRequest = 1,
  kRecognizeResponse = 2,
  kError = 3,
};

struct Message {
  MessageType type = MessageType::kError;
  std::vector<std::uint8_t> payload;

  friend bool operator==(const Message&, const Message&) = default;
};

struct FrameHeader {
  MessageType type = MessageType::kError;
  std::uint32_t payload_len = 0;
};

/// Error codes carried in Error messages and ProtocolError.
namespace code {
inline constexpr const char* kBadMagic = "bad magic";
inline constexpr const char* kBadVersion = "bad version";
inline constexpr const char* kUnknownType = "unknown message type";
inline constexpr const char* kUnexpectedType = "unexpected message type";
inline constexpr const char* kOversize = "oversize payload";
inline constexpr const char* kTruncated = "truncated frame";
inline constexpr const char* kBadPayload = "bad payload";
inline constexpr const char* kBadImage = "bad image";
inline constexpr const char* kInternal = "internal error";
}  // namespace code

class ProtocolError : public std::runtime_error {
 public:
  ProtocolError(std::string code, const std::string& detail = {})
      : std::runtime_error(detail.empty() ? code : code + ": " + detail), code_(std::move(code)) {}
  const std::string& code() const { return code_; }

 private:
  std::string code_;
};

std::vector<std::uint8_t> encode_frame(const Message& msg);

/// Validates magic, version, type and the payload size limit.
FrameHeader decode_header(std::span<const std::uint8_t, kHeaderSize> header);

/// Decodes exactly one frame occupying the whole buffer.
Message decode_frame(std::span<const std::uint8_t> bytes);

/// object_id i64 (-1 = none) | match_count u32 | total u32 | [name_len u16 | name], all big-endian.
std::vector<std::uint8_t> encode_response(const Recognition& r);
Recognition decode_response(std::span<const std::uint8_t> payload);

/// Error payload is the UTF-8 error code text.
Message make_error(const std::string& code);
std::string decode_error(std::span<const std::uint8_t> payload);

}  // namespace pervisor::wire
