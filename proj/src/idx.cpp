#include "paser/idx.hpp"

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace paser {

namespace {

std::uint32_t read_be32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    throw std::runtime_error("idx: truncated file: " + path);
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) |
         std::uint32_t(b[3]);
}

}  // namespace

Tensor<float> read_idx(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("idx: cannot open " + path);

  std::uint32_t magic = read_be32(in, path);
  int ndims;
  if (magic == 0x00000803u)
    ndims = 3;
  else if (magic == 0x00000801u)
    ndims = 1;
  else
    throw std::runtime_error("idx: bad magic in " + path);

  Shape shape(static_cast<std::size_t>(ndims));
  std::int64_t total = 1;
  for (int i = 0; i < ndims; ++i) {
    std::uint32_t d = read_be32(in, path);
    if (d == 0) throw std::runtime_error("idx: zero dimension in " + path);
    shape[static_cast<std::size_t>(i)] = static_cast<int>(d);
    total *= d;
  }

  std::vector<unsigned char> bytes(static_cast<std::size_t>(total));
  if (!in.read(reinterpret_cast<char*>(bytes.data()), total))
    throw std::runtime_error("idx: truncated file: " + path);

  Tensor<float> out(shape);
  for (std::int64_t i = 0; i < total; ++i)
    out.data[i] = static_cast<float>(bytes[static_cast<std::size_t>(i)]) / 255.0f;
  return out;
}

}  // namespace paser
