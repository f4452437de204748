#ifndef EVOPO_CHECKPOINT_HPP
#define EVOPO_CHECKPOINT_HPP

// Binary tensor dump of policy parameters.
//
// Layout (all integers little-endian):
//   magic   "EVPOTNSR"            8 bytes
//   version u32 = 1
//   count   u32                   number of tensors
//   per tensor, in order:
//     name_len u32, name bytes (UTF-8, no terminator)
//     rank u32, dims u64 x rank
//     data float64 x prod(dims), row-major, little-endian

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "evopo/error.hpp"
#include "evopo/policy.hpp"

namespace evopo {

namespace detail {

template <typename T>
void put_le(std::ostream& os, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  os.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get_le(std::istream& is) {
  unsigned char bytes[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(bytes), sizeof(T))) throw InvalidInput("checkpoint: truncated file");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

inline constexpr char kCheckpointMagic[8] = {'E', 'V', 'P', 'O', 'T', 'N', 'S', 'R'};

}  // namespace detail

inline void write_checkpoint(std::ostream& os, const policy::PolicyParams& params) {
  os.write(detail::kCheckpointMagic, sizeof(detail::kCheckpointMagic));
  detail::put_le<std::uint32_t>(os, 1);
  const auto layout = params.layout();
  const auto tensors = params.tensors();
  detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(layout.size()));
  for (std::size_t k = 0; k < layout.size(); ++k) {
    detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(layout[k].name.size()));
    os.write(layout[k].name.data(), static_cast<std::streamsize>(layout[k].name.size()));
    detail::put_le<std::uint32_t>(os, 2);
    for (auto d : layout[k].shape) detail::put_le<std::uint64_t>(os, d);
    for (double x : tensors[k]) detail::put_le<double>(os, x);
  }
  if (!os) throw Error("checkpoint: write failed");
}

/// Reads a checkpoint written by write_checkpoint; the tensor names and shapes
/// must match the policy layout.
inline policy::PolicyParams read_checkpoint(std::istream& is) {
  char magic[8];
  if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, detail::kCheckpointMagic, sizeof(magic)) != 0)
    throw InvalidInput("checkpoint: bad magic");
  if (detail::get_le<std::uint32_t>(is) != 1) throw InvalidInput("checkpoint: unsupported version");
  const auto count = detail::get_le<std::uint32_t>(is);
  if (count != 3) throw InvalidInput("checkpoint: expected 3 tensors");

  std::vector<std::string> names;
  std::vector<std::vector<std::uint64_t>> shapes;
  std::vector<std::vector<double>> data;
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto len = detail::get_le<std::uint32_t>(is);
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw InvalidInput("checkpoint: truncated name");
    const auto rank = detail::get_le<std::uint32_t>(is);
    std::vector<std::uint64_t> shape(rank);
    std::uint64_t total = 1;
    for (auto& d : shape) total *= (d = detail::get_le<std::uint64_t>(is));
    std::vector<double> values(total);
    for (auto& x : values) x = detail::get_le<double>(is);
    names.push_back(std::move(name));
    shapes.push_back(std::move(shape));
    data.push_back(std::move(values));
  }
  if (names[0] != "context_proj" || names[1] != "emission" || names[2] != "emission_bias")
    throw InvalidInput("checkpoint: unexpected tensor names");

  policy::PolicyDims dims;
  dims.context_dim = static_cast<int>(shapes[0][0]);
  dims.hidden = static_cast<int>(shapes[0][1]);
  dims.vocab = static_cast<int>(shapes[2][1]);
  auto params = policy::PolicyParams::zeros(dims);
  if (params.emission.size() != data[1].size() || params.context_proj.size() != data[0].size())
    throw InvalidInput("checkpoint: inconsistent tensor shapes");
  params.context_proj = std::move(data[0]);
  params.emission = std::move(data[1]);
  params.emission_bias = std::move(data[2]);
  return params;
}

inline void save_checkpoint(const std::string& path, const policy::PolicyParams& params) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("checkpoint: cannot open " + path);
  write_checkpoint(os, params);
}

inline policy::PolicyParams load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("checkpoint: cannot open " + path);
  return read_checkpoint(is);
}

}  // namespace evopo

#endif  // EVOPO_CHECKPOINT_HPP
