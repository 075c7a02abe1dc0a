#include "pbge/tensor/serialize.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace pbge {

namespace {

constexpr std::uint64_t kMaxExtent = std::uint64_t{1} << 40;
constexpr std::size_t kBytesPerSlot = 6;  // 48 bits stay exact in a double mantissa

template <class T>
void write_le(std::ostream& os, T value) {
  unsigned char buf[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>((value >> (8 * i)) & 0xFF);
  os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <class T>
T read_le(std::istream& is) {
  unsigned char buf[sizeof(T)];
  is.read(reinterpret_cast<char*>(buf), sizeof(T));
  if (!is) throw FormatError("truncated tensor archive");
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(buf[i]) << (8 * i);
  return value;
}

}  // namespace

void TensorArchive::put(std::string name, const Tensor& tensor) {
  auto it = std::find_if(entries_.begin(), entries_.end(), [&](const auto& e) { return e.first == name; });
  if (it != entries_.end()) {
    it->second = tensor.detach();
  } else {
    entries_.emplace_back(std::move(name), tensor.detach());
  }
}

bool TensorArchive::contains(std::string_view name) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const auto& e) { return e.first == name; });
}

const Tensor& TensorArchive::get(std::string_view name) const {
  auto it = std::find_if(entries_.begin(), entries_.end(), [&](const auto& e) { return e.first == name; });
  if (it == entries_.end()) throw FormatError("archive has no entry '" + std::string(name) + "'");
  return it->second;
}

void TensorArchive::put_scalar(std::string name, double value) { put(std::move(name), Tensor::scalar(value)); }

double TensorArchive::get_scalar(std::string_view name) const { return get(name).item(); }

void TensorArchive::put_u64(std::string name, std::uint64_t value) {
  // Two 32-bit halves, each exactly representable.
  put(std::move(name), Tensor::vector({static_cast<double>(value >> 32), static_cast<double>(value & 0xFFFFFFFFu)}));
}

std::uint64_t TensorArchive::get_u64(std::string_view name) const {
  const Tensor& t = get(name);
  if (t.size() != 2) throw FormatError("entry '" + std::string(name) + "' is not a u64");
  return (static_cast<std::uint64_t>(t[0]) << 32) | static_cast<std::uint64_t>(t[1]);
}

void TensorArchive::put_doubles(std::string name, const std::vector<double>& values) {
  std::vector<double> payload;
  payload.reserve(values.size() + 1);
  payload.push_back(static_cast<double>(values.size()));
  payload.insert(payload.end(), values.begin(), values.end());
  put(std::move(name), Tensor::vector(std::move(payload)));
}

std::vector<double> TensorArchive::get_doubles(std::string_view name) const {
  const Tensor& t = get(name);
  const auto n = static_cast<std::size_t>(t[0]);
  if (n + 1 != t.size()) throw FormatError("entry '" + std::string(name) + "' has a bad length prefix");
  return std::vector<double>(t.data().begin() + 1, t.data().end());
}

void TensorArchive::put_bytes(std::string name, const std::vector<std::uint8_t>& bytes) {
  const std::size_t slots = (bytes.size() + kBytesPerSlot - 1) / kBytesPerSlot;
  std::vector<double> payload(slots + 1, 0.0);
  payload[0] = static_cast<double>(bytes.size());
  for (std::size_t s = 0; s < slots; ++s) {
    std::uint64_t packed = 0;
    for (std::size_t b = 0; b < kBytesPerSlot; ++b) {
      const std::size_t i = s * kBytesPerSlot + b;
      if (i < bytes.size()) packed |= static_cast<std::uint64_t>(bytes[i]) << (8 * b);
    }
    payload[s + 1] = static_cast<double>(packed);
  }
  put(std::move(name), Tensor::vector(std::move(payload)));
}

std::vector<std::uint8_t> TensorArchive::get_bytes(std::string_view name) const {
  const Tensor& t = get(name);
  const auto n = static_cast<std::size_t>(t[0]);
  const std::size_t slots = (n + kBytesPerSlot - 1) / kBytesPerSlot;
  if (slots + 1 != t.size()) throw FormatError("entry '" + std::string(name) + "' has a bad length prefix");
  std::vector<std::uint8_t> bytes(n);
  for (std::size_t s = 0; s < slots; ++s) {
    const auto packed = static_cast<std::uint64_t>(t[s + 1]);
    for (std::size_t b = 0; b < kBytesPerSlot; ++b) {
      const std::size_t i = s * kBytesPerSlot + b;
      if (i < n) bytes[i] = static_cast<std::uint8_t>((packed >> (8 * b)) & 0xFF);
    }
  }
  return bytes;
}

void TensorArchive::put_text(std::string name, std::string_view text) {
  put_bytes(std::move(name), std::vector<std::uint8_t>(text.begin(), text.end()));
}

std::string TensorArchive::get_text(std::string_view name) const {
  auto bytes = get_bytes(name);
  return std::string(bytes.begin(), bytes.end());
}

void TensorArchive::write(std::ostream& os) const {
  os.write(kMagic, 8);
  write_le<std::uint32_t>(os, kVersion);
  write_le<std::uint32_t>(os, static_cast<std::uint32_t>(entries_.size()));
  for (const auto& [name, tensor] : entries_) {
    write_le<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_le<std::uint32_t>(os, static_cast<std::uint32_t>(tensor.rank()));
    for (auto e : tensor.shape()) write_le<std::uint64_t>(os, e);
    for (double v : tensor.data()) write_le<std::uint64_t>(os, std::bit_cast<std::uint64_t>(v));
  }
}

TensorArchive TensorArchive::read(std::istream& is) {
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0) throw FormatError("not a tensor archive (bad magic)");
  const auto version = read_le<std::uint32_t>(is);
  if (version != kVersion) throw FormatError("unsupported tensor archive version " + std::to_string(version));
  const auto count = read_le<std::uint32_t>(is);
  TensorArchive archive;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = read_le<std::uint32_t>(is);
    if (name_len > 4096) throw FormatError("tensor name too long");
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    const auto rank = read_le<std::uint32_t>(is);
    if (rank == 0 || rank > 8) throw FormatError("bad tensor rank " + std::to_string(rank));
    Shape shape(rank);
    for (auto& e : shape) {
      const auto extent = read_le<std::uint64_t>(is);
      if (extent == 0 || extent > kMaxExtent) throw FormatError("bad tensor extent");
      e = static_cast<std::size_t>(extent);
    }
    std::vector<double> data(shape_size(shape));
    for (double& v : data) v = std::bit_cast<double>(read_le<std::uint64_t>(is));
    archive.entries_.emplace_back(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  return archive;
}

void TensorArchive::save(const std::string& path) const {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open '" + tmp + "' for writing");
    write(os);
    if (!os) throw std::runtime_error("write to '" + tmp + "' failed");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw std::runtime_error("cannot move '" + tmp + "' into place");
}

TensorArchive TensorArchive::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open '" + path + "'");
  return read(is);
}

void save_optimizer(TensorArchive& ar, const std::string& prefix, const OptimizerState& st) {
  ar.put_doubles(prefix + ".hyper", {static_cast<double>(st.kind), st.learning_rate, st.rho, st.beta1, st.beta2, st.eps});
  ar.put_u64(prefix + ".step_count", st.step_count);
  ar.put_u64(prefix + ".slots", st.first_moment.size());
  ar.put_u64(prefix + ".slots2", st.second_moment.size());
  for (std::size_t i = 0; i < st.first_moment.size(); ++i) ar.put_doubles(prefix + ".m" + std::to_string(i), st.first_moment[i]);
  for (std::size_t i = 0; i < st.second_moment.size(); ++i) ar.put_doubles(prefix + ".v" + std::to_string(i), st.second_moment[i]);
}

OptimizerState load_optimizer(const TensorArchive& ar, const std::string& prefix) {
  const auto h = ar.get_doubles(prefix + ".hyper");
  if (h.size() != 6) throw FormatError("optimizer '" + prefix + "' has a malformed header");
  OptimizerState st;
  st.kind = static_cast<OptimizerKind>(static_cast<int>(h[0]));
  st.learning_rate = h[1];
  st.rho = h[2];
  st.beta1 = h[3];
  st.beta2 = h[4];
  st.eps = h[5];
  st.step_count = ar.get_u64(prefix + ".step_count");
  st.first_moment.resize(ar.get_u64(prefix + ".slots"));
  st.second_moment.resize(ar.get_u64(prefix + ".slots2"));
  for (std::size_t i = 0; i < st.first_moment.size(); ++i) st.first_moment[i] = ar.get_doubles(prefix + ".m" + std::to_string(i));
  for (std::size_t i = 0; i < st.second_moment.size(); ++i) st.second_moment[i] = ar.get_doubles(prefix + ".v" + std::to_string(i));
  return st;
}

}  // namespace pbge
