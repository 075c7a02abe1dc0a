#pragma once

#include <cstdint>
#include <iosfwd>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pbge/tensor/optim.hpp"
#include "pbge/tensor/tensor.hpp"

namespace pbge {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Ordered collection of named tensors with a versioned binary encoding:
///
///   "PBGETENS" | u32 version | u32 count |
///   count x ( u32 name_len | name | u32 rank | u64 extents[rank] | f64 data[] )
///
/// All integers and floats are little-endian.
class TensorArchive {
 public:
  static constexpr char kMagic[9] = "PBGETENS";
  static constexpr std::uint32_t kVersion = 1;

  void put(std::string name, const Tensor& tensor);
  bool contains(std::string_view name) const;
  const Tensor& get(std::string_view name) const;
  std::size_t size() const { return entries_.size(); }
  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }

  // Scalars and opaque payloads ride along as small tensors.
  void put_scalar(std::string name, double value);
  double get_scalar(std::string_view name) const;
  void put_u64(std::string name, std::uint64_t value);
  std::uint64_t get_u64(std::string_view name) const;
  void put_text(std::string name, std::string_view text);
  std::string get_text(std::string_view name) const;
  void put_doubles(std::string name, const std::vector<double>& values);
  std::vector<double> get_doubles(std::string_view name) const;
  void put_bytes(std::string name, const std::vector<std::uint8_t>& bytes);
  std::vector<std::uint8_t> get_bytes(std::string_view name) const;

  template <class Engine>
  void put_rng(std::string name, const Engine& engine) {
    std::ostringstream os;
    os << engine;
    put_text(std::move(name), os.str());
  }
  template <class Engine>
  void get_rng(std::string_view name, Engine& engine) const {
    std::istringstream is(get_text(name));
    is >> engine;
    if (!is) throw FormatError("corrupt generator state '" + std::string(name) + "'");
  }

  void write(std::ostream& os) const;
  static TensorArchive read(std::istream& is);
  void save(const std::string& path) const;
  static TensorArchive load(const std::string& path);

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
};

void save_optimizer(TensorArchive& archive, const std::string& prefix, const OptimizerState& state);
OptimizerState load_optimizer(const TensorArchive& archive, const std::string& prefix);

}  // namespace pbge
