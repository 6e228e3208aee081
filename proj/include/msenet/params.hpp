#pragma once

// Named parameter store. Names are module-qualified paths ("encoder.rgb.
// stage1.conv.weight") and registration order is preserved, so enumeration,
// checkpointing and optimizer state all share one stable ordering.
//
// Checkpoint format (little-endian): magic "MSENETCK", u32 version, u32 count,
// then per parameter { u32 name_len, name bytes, u32 ndim, i32 dims...,
// f32 values... }.

#include <bit>
#include <cstdint>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "msenet/tensor.hpp"

namespace msenet {

static_assert(std::endian::native == std::endian::little,
              "checkpoint io assumes a little-endian host");

inline constexpr char kCheckpointMagic[8] = {'M', 'S', 'E', 'N', 'E', 'T', 'C', 'K'};
inline constexpr uint32_t kCheckpointVersion = 1;

template <class Real>
class ParamStore {
 public:
  Tensor<Real> create(const std::string& name, std::vector<int> shape,
                      std::vector<Real> values) {
    MSENET_REQUIRE(find(name) < 0, "duplicate parameter name: ", name);
    auto t = Tensor<Real>::from_values(std::move(shape), std::move(values), true);
    entries_.emplace_back(name, t);
    return t;
  }

  Tensor<Real> create_randn(const std::string& name, std::vector<int> shape,
                            std::mt19937_64& rng, double stddev) {
    MSENET_REQUIRE(find(name) < 0, "duplicate parameter name: ", name);
    auto t = Tensor<Real>::randn(std::move(shape), rng, (Real)stddev, true);
    entries_.emplace_back(name, t);
    return t;
  }

  Tensor<Real> create_const(const std::string& name, std::vector<int> shape,
                            Real value) {
    MSENET_REQUIRE(find(name) < 0, "duplicate parameter name: ", name);
    auto t = Tensor<Real>::full(std::move(shape), value, true);
    entries_.emplace_back(name, t);
    return t;
  }

  bool has(const std::string& name) const { return find(name) >= 0; }

  Tensor<Real> get(const std::string& name) const {
    const int i = find(name);
    MSENET_REQUIRE(i >= 0, "unknown parameter: ", name);
    return entries_[(size_t)i].second;
  }

  const std::vector<std::pair<std::string, Tensor<Real>>>& entries() const {
    return entries_;
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& [n, t] : entries_) out.push_back(n);
    return out;
  }

  int64_t total_values() const {
    int64_t n = 0;
    for (const auto& [name, t] : entries_) n += t.numel();
    return n;
  }

  void zero_grads() {
    for (auto& [name, t] : entries_) t.zero_grad();
  }

  void save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) fail_io("cannot open checkpoint for writing: ", path);
    f.write(kCheckpointMagic, 8);
    write_u32(f, kCheckpointVersion);
    write_u32(f, (uint32_t)entries_.size());
    for (const auto& [name, t] : entries_) {
      write_u32(f, (uint32_t)name.size());
      f.write(name.data(), (std::streamsize)name.size());
      write_u32(f, (uint32_t)t.shape().size());
      for (int d : t.shape()) {
        const int32_t d32 = d;
        f.write(reinterpret_cast<const char*>(&d32), 4);
      }
      for (Real v : t.values()) {
        const float v32 = (float)v;
        f.write(reinterpret_cast<const char*>(&v32), 4);
      }
    }
    if (!f) fail_io("failed writing checkpoint: ", path);
  }

  // Loads into the already-registered parameters; names, order and shapes
  // must match the store exactly.
  void load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) fail_io("cannot open checkpoint: ", path);
    char magic[8];
    f.read(magic, 8);
    if (!f || std::string(magic, 8) != std::string(kCheckpointMagic, 8))
      fail_io("not a checkpoint file: ", path);
    const uint32_t version = read_u32(f, path);
    if (version != kCheckpointVersion)
      fail_io("unsupported checkpoint version ", version, " in ", path);
    const uint32_t count = read_u32(f, path);
    MSENET_REQUIRE(count == entries_.size(), "checkpoint ", path, " holds ",
                   count, " parameters, model has ", entries_.size());
    for (auto& [name, t] : entries_) {
      const uint32_t name_len = read_u32(f, path);
      std::string got(name_len, '\0');
      f.read(got.data(), name_len);
      MSENET_REQUIRE(got == name, "checkpoint parameter ", got,
                     " does not match model parameter ", name);
      const uint32_t ndim = read_u32(f, path);
      std::vector<int> shape(ndim);
      for (auto& d : shape) {
        int32_t d32;
        f.read(reinterpret_cast<char*>(&d32), 4);
        d = d32;
      }
      MSENET_REQUIRE(shape == t.shape(), "checkpoint shape ", shape_str(shape),
                     " does not match ", name, " ", shape_str(t.shape()));
      auto& vals = t.mutable_values();
      for (auto& v : vals) {
        float v32;
        f.read(reinterpret_cast<char*>(&v32), 4);
        v = (Real)v32;
      }
      if (!f) fail_io("truncated checkpoint: ", path);
    }
  }

 private:
  int find(const std::string& name) const {
    for (size_t i = 0; i < entries_.size(); ++i) {
      if (entries_[i].first == name) return (int)i;
    }
    return -1;
  }

  static void write_u32(std::ofstream& f, uint32_t v) {
    f.write(reinterpret_cast<const char*>(&v), 4);
  }

  static uint32_t read_u32(std::ifstream& f, const std::string& path) {
    uint32_t v = 0;
    f.read(reinterpret_cast<char*>(&v), 4);
    if (!f) fail_io("truncated checkpoint: ", path);
    return v;
  }

  std::vector<std::pair<std::string, Tensor<Real>>> entries_;
};

}  // namespace msenet
