#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "layers.hpp"
#include "tensor.hpp"

namespace hazeforge {

/**
 * @brief Binary checkpoint, format version 1.
 *
 * "HZF1", u32 tensor count, then per tensor: u32 name length, UTF-8 name,
 * u32 rank, u32 dims, float32 values. All integers and floats little-endian.
 * Integer state (step counters, seeds, RNG state) is stored as float tensors
 * of exactly representable pieces; see encode_u64 and encode_bytes.
 */
inline constexpr std::array<char, 4> kCheckpointMagic{'H', 'Z', 'F', '1'};

struct CheckpointEntry {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

class Checkpoint {
public:
  void add(std::string name, Shape shape, std::vector<float> values) {
    if (shape_numel(shape) != values.size()) {
      throw std::invalid_argument("checkpoint: entry " + name + " has " + std::to_string(values.size()) +
                                  " values for shape " + shape_str(shape));
    }
    if (index_.count(name)) {
      throw std::invalid_argument("checkpoint: duplicate entry " + name);
    }
    index_[name] = entries_.size();
    entries_.push_back({std::move(name), std::move(shape), std::move(values)});
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  const CheckpointEntry& at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) {
      throw std::runtime_error("checkpoint: missing entry " + name);
    }
    return entries_[it->second];
  }

  const std::vector<CheckpointEntry>& entries() const { return entries_; }

  template <class T>
  void add_parameters(const std::string& prefix, const ParameterList<T>& params) {
    for (const auto& p : params) {
      std::vector<float> v(p.tensor.data().begin(), p.tensor.data().end());
      add(prefix + p.name, p.tensor.shape(), std::move(v));
    }
  }

  /// Overwrites parameter values in place; names and shapes must match exactly.
  template <class T>
  void restore_parameters(const std::string& prefix, const ParameterList<T>& params) const {
    for (const auto& p : params) {
      const auto& e = at(prefix + p.name);
      if (e.shape != p.tensor.shape()) {
        throw std::runtime_error("checkpoint: shape mismatch for " + e.name + ": stored " + shape_str(e.shape) +
                                 ", expected " + shape_str(p.tensor.shape()));
      }
      auto t = p.tensor;
      t.data().assign(e.values.begin(), e.values.end());
    }
  }

  /// Stores an unsigned integer as four 16-bit pieces (exact in float32).
  void add_u64(const std::string& name, std::uint64_t v) {
    std::vector<float> pieces(4);
    for (std::size_t i = 0; i < 4; ++i) {
      pieces[i] = static_cast<float>((v >> (16 * i)) & 0xffffU);
    }
    add(name, {4}, std::move(pieces));
  }

  std::uint64_t get_u64(const std::string& name) const {
    const auto& e = at(name);
    if (e.values.size() != 4) {
      throw std::runtime_error("checkpoint: " + name + " is not an encoded integer");
    }
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < 4; ++i) {
      v |= static_cast<std::uint64_t>(e.values[i]) << (16 * i);
    }
    return v;
  }

  /// Stores a byte string one byte per float.
  void add_bytes(const std::string& name, const std::string& bytes) {
    std::vector<float> v(bytes.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) {
      v[i] = static_cast<float>(static_cast<unsigned char>(bytes[i]));
    }
    add(name, {bytes.size()}, std::move(v));
  }

  std::string get_bytes(const std::string& name) const {
    const auto& e = at(name);
    std::string out(e.values.size(), '\0');
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] = static_cast<char>(static_cast<unsigned char>(e.values[i]));
    }
    return out;
  }

private:
  std::vector<CheckpointEntry> entries_;
  std::map<std::string, std::size_t> index_;
};

namespace detail {

inline void put_u32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t get_u32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) {
    throw std::runtime_error("checkpoint " + path + ": truncated file");
  }
  return static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
         static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
}

inline std::uint32_t checked_u32(std::size_t v, const char* what) {
  if (v > 0xffffffffULL) {
    throw std::runtime_error(std::string("checkpoint: ") + what + " exceeds 32 bits");
  }
  return static_cast<std::uint32_t>(v);
}

}  // namespace detail

/// Writes to `path` via a temporary file and rename, so readers never see a partial file.
inline void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw std::runtime_error("cannot write checkpoint " + tmp.string());
    }
    out.write(kCheckpointMagic.data(), kCheckpointMagic.size());
    detail::put_u32(out, detail::checked_u32(ckpt.entries().size(), "tensor count"));
    for (const auto& e : ckpt.entries()) {
      detail::put_u32(out, detail::checked_u32(e.name.size(), "name length"));
      out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
      detail::put_u32(out, detail::checked_u32(e.shape.size(), "rank"));
      for (std::size_t d : e.shape) {
        detail::put_u32(out, detail::checked_u32(d, "dimension"));
      }
      for (float v : e.values) {
        std::uint32_t bits = 0;
        std::memcpy(&bits, &v, sizeof bits);
        detail::put_u32(out, bits);
      }
    }
    if (!out) {
      throw std::runtime_error("failed writing checkpoint " + tmp.string());
    }
  }
  std::filesystem::rename(tmp, path);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string p = path.string();
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot open checkpoint " + p);
  }
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kCheckpointMagic) {
    throw std::runtime_error("checkpoint " + p + ": bad magic or unsupported version (expected HZF1)");
  }
  const auto file_size = std::filesystem::file_size(path);
  Checkpoint ckpt;
  const std::uint32_t count = detail::get_u32(in, p);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t len = detail::get_u32(in, p);
    if (len > file_size) {
      throw std::runtime_error("checkpoint " + p + ": corrupt name length");
    }
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) {
      throw std::runtime_error("checkpoint " + p + ": truncated file");
    }
    const std::uint32_t rank = detail::get_u32(in, p);
    if (rank > 8) {
      throw std::runtime_error("checkpoint " + p + ": corrupt rank for " + name);
    }
    Shape shape(rank);
    std::size_t n = 1;
    for (auto& d : shape) {
      d = detail::get_u32(in, p);
      n *= d;
    }
    if (n * 4 > file_size) {
      throw std::runtime_error("checkpoint " + p + ": corrupt shape for " + name);
    }
    std::vector<float> values(n);
    for (auto& v : values) {
      const std::uint32_t bits = detail::get_u32(in, p);
      std::memcpy(&v, &bits, sizeof v);
    }
    ckpt.add(std::move(name), std::move(shape), std::move(values));
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw std::runtime_error("checkpoint " + p + ": trailing bytes after last tensor");
  }
  return ckpt;
}

}  // namespace hazeforge
