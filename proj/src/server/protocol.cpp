#include "pbge/server/protocol.hpp"

#include <bit>
#include <cstring>

namespace pbge::server {

namespace {

class Writer {
 public:
  void u8(std::uint8_t v) { out.push_back(v); }
  void u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out.insert(out.end(), b, b + n);
  }
  std::vector<std::uint8_t> out;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}
  std::uint8_t u8() {
    need(1);
    return in_[pos_++];
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = static_cast<std::uint16_t>(in_[pos_] | (in_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::span<const std::uint8_t> rest() {
    auto r = in_.subspan(pos_);
    pos_ = in_.size();
    return r;
  }
  std::size_t remaining() const { return in_.size() - pos_; }
  void done() const {
    if (pos_ != in_.size()) throw FramingError("trailing bytes in payload");
  }

 private:
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw FramingError("payload shorter than its layout");
  }
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

bool flag(std::uint8_t b) {
  if (b > 1) throw FramingError("flag byte must be 0 or 1");
  return b == 1;
}

}  // namespace

std::uint8_t tag_of(const Message& m) {
  if (const auto* u = std::get_if<Unknown>(&m)) return u->tag;
  return static_cast<std::uint8_t>(m.index() + 1);
}

std::vector<std::uint8_t> encode_payload(const Message& m) {
  Writer w;
  std::visit(
      [&](const auto& msg) {
        using T = std::decay_t<decltype(msg)>;
        if constexpr (std::is_same_v<T, Hello>) {
          w.u32(msg.version);
        } else if constexpr (std::is_same_v<T, Config>) {
          w.bytes(msg.text.data(), msg.text.size());
        } else if constexpr (std::is_same_v<T, Step>) {
          w.u8(msg.action);
        } else if constexpr (std::is_same_v<T, Obs>) {
          std::size_t count = 1;
          for (auto e : msg.extents) count *= e;
          if (count != msg.data.size()) throw FramingError("observation extents do not match its data");
          if (msg.extents.size() > 255) throw FramingError("observation rank above 255");
          w.u8(msg.dtype);
          w.u8(static_cast<std::uint8_t>(msg.extents.size()));
          for (auto e : msg.extents) w.u32(e);
          for (float v : msg.data) w.f32(v);
        } else if constexpr (std::is_same_v<T, Result>) {
          w.f32(msg.reward);
          w.u8(msg.terminated);
          w.u8(msg.truncated);
          w.u8(msg.success);
        } else if constexpr (std::is_same_v<T, Error>) {
          w.u16(msg.code);
          w.bytes(msg.text.data(), msg.text.size());
        } else if constexpr (std::is_same_v<T, Unknown>) {
          if (msg.tag >= 1 && msg.tag <= 8) throw FramingError("unknown-message tag collides with a known tag");
          w.bytes(msg.payload.data(), msg.payload.size());
        }
      },
      m);
  if (w.out.size() > kMaxPayload) throw FramingError("payload above the frame limit");
  return std::move(w.out);
}

std::vector<std::uint8_t> encode(const Message& m) {
  const std::vector<std::uint8_t> payload = encode_payload(m);
  Writer w;
  w.u32(static_cast<std::uint32_t>(payload.size()));
  w.u8(tag_of(m));
  w.out.insert(w.out.end(), payload.begin(), payload.end());
  return std::move(w.out);
}

std::uint32_t payload_length(std::span<const std::uint8_t> header) {
  if (header.size() < kHeaderSize) throw FramingError("short frame header");
  Reader r(header.first(4));
  const std::uint32_t n = r.u32();
  if (n > kMaxPayload) throw FramingError("frame length " + std::to_string(n) + " above the 64 MiB limit");
  return n;
}

Message decode_payload(std::uint8_t tag, std::span<const std::uint8_t> payload) {
  Reader r(payload);
  Message out;
  switch (tag) {
    case static_cast<std::uint8_t>(Tag::hello):
      out = Hello{r.u32()};
      break;
    case static_cast<std::uint8_t>(Tag::config): {
      const auto b = r.rest();
      out = Config{std::string(b.begin(), b.end())};
      break;
    }
    case static_cast<std::uint8_t>(Tag::reset):
      out = Reset{};
      break;
    case static_cast<std::uint8_t>(Tag::step):
      out = Step{r.u8()};
      break;
    case static_cast<std::uint8_t>(Tag::obs): {
      Obs o;
      o.dtype = r.u8();
      if (o.dtype != kDtypeF32) throw FramingError("unsupported observation dtype");
      const std::size_t rank = r.u8();
      std::size_t count = 1;
      for (std::size_t i = 0; i < rank; ++i) {
        o.extents.push_back(r.u32());
        count *= o.extents.back();
      }
      if (r.remaining() != count * 4) throw FramingError("observation payload does not match its extents");
      o.data.resize(count);
      for (auto& v : o.data) v = r.f32();
      out = std::move(o);
      break;
    }
    case static_cast<std::uint8_t>(Tag::result): {
      Result res;
      res.reward = r.f32();
      res.terminated = flag(r.u8());
      res.truncated = flag(r.u8());
      res.success = flag(r.u8());
      out = res;
      break;
    }
    case static_cast<std::uint8_t>(Tag::error): {
      Error e;
      e.code = r.u16();
      const auto b = r.rest();
      e.text.assign(b.begin(), b.end());
      out = std::move(e);
      break;
    }
    case static_cast<std::uint8_t>(Tag::close):
      out = Close{};
      break;
    default: {
      const auto b = r.rest();
      out = Unknown{tag, std::vector<std::uint8_t>(b.begin(), b.end())};
    }
  }
  r.done();
  return out;
}

Message decode(std::span<const std::uint8_t> frame) {
  const std::uint32_t n = payload_length(frame);
  if (frame.size() < kHeaderSize + n) throw FramingError("short frame");
  if (frame.size() > kHeaderSize + n) throw FramingError("frame longer than its length prefix");
  return decode_payload(frame[4], frame.subspan(kHeaderSize, n));
}

}  // namespace pbge::server
