#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace pbge::server {

/// Frame: u32 little-endian payload length | u8 tag | payload.
/// The length counts payload bytes only.
enum class Tag : std::uint8_t { hello = 1, config = 2, reset = 3, step = 4, obs = 5, result = 6, error = 7, close = 8 };

inline constexpr std::uint32_t kProtocolVersion = 1;
inline constexpr std::uint32_t kMaxPayload = 64u << 20;
inline constexpr std::uint16_t kDefaultPort = 7480;
inline constexpr std::size_t kHeaderSize = 5;
inline constexpr std::uint8_t kDtypeF32 = 0;

class FramingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace error_code {
inline constexpr std::uint16_t unknown_tag = 1;
inline constexpr std::uint16_t malformed = 2;
inline constexpr std::uint16_t bad_config = 3;
inline constexpr std::uint16_t no_active_episode = 10;
inline constexpr std::uint16_t hello_required = 11;
inline constexpr std::uint16_t version_mismatch = 12;
inline constexpr std::uint16_t unexpected_message = 13;
inline constexpr std::uint16_t env_failure = 14;
inline constexpr std::uint16_t timeout = 20;
inline constexpr std::uint16_t frame_too_large = 21;
}  // namespace error_code

struct Hello {
  std::uint32_t version = kProtocolVersion;
  friend bool operator==(const Hello&, const Hello&) = default;
};
/// Environment settings in the key-value config format, applied on top of
/// the server's base configuration.
struct Config {
  std::string text;
  friend bool operator==(const Config&, const Config&) = default;
};
struct Reset {
  friend bool operator==(const Reset&, const Reset&) = default;
};
struct Step {
  std::uint8_t action = 0;
  friend bool operator==(const Step&, const Step&) = default;
};
/// u8 dtype | u8 rank | u32 extents[rank] | little-endian f32 data.
struct Obs {
  std::uint8_t dtype = kDtypeF32;
  std::vector<std::uint32_t> extents;
  std::vector<float> data;
  friend bool operator==(const Obs&, const Obs&) = default;
};
/// f32 reward | u8 terminated | u8 truncated | u8 success.
struct Result {
  float reward = 0.0f;
  bool terminated = false;
  bool truncated = false;
  bool success = false;
  friend bool operator==(const Result&, const Result&) = default;
};
/// u16 code | UTF-8 text.
struct Error {
  std::uint16_t code = 0;
  std::string text;
  friend bool operator==(const Error&, const Error&) = default;
};
struct Close {
  friend bool operator==(const Close&, const Close&) = default;
};
/// A frame whose tag this side does not know.
struct Unknown {
  std::uint8_t tag = 0;
  std::vector<std::uint8_t> payload;
  friend bool operator==(const Unknown&, const Unknown&) = default;
};

using Message = std::variant<Hello, Config, Reset, Step, Obs, Result, Error, Close, Unknown>;

std::uint8_t tag_of(const Message& m);
std::vector<std::uint8_t> encode(const Message& m);
std::vector<std::uint8_t> encode_payload(const Message& m);

/// Payload length from a 5-byte header; throws FramingError above kMaxPayload.
std::uint32_t payload_length(std::span<const std::uint8_t> header);

/// Decodes exactly one complete frame. Short or overlong input and payloads
/// that do not match the tag's layout raise FramingError.
Message decode(std::span<const std::uint8_t> frame);
Message decode_payload(std::uint8_t tag, std::span<const std::uint8_t> payload);

}  // namespace pbge::server
