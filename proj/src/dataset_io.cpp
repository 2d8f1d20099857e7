#include "paser/dataset_io.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>

static_assert(std::endian::native == std::endian::little,
              "PASERDS payloads are little-endian; byte swapping is not implemented");

namespace paser {

void write_paserds(const std::string& path, const Dataset& data) {
  if (data.empty()) throw std::invalid_argument("write_paserds: empty dataset");
  const SegSample& first = data.front();
  int c = first.image.dim(0);
  for (const SegSample& s : data) {
    if (s.height != first.height || s.width != first.width || s.classes != first.classes ||
        s.image.dim(0) != c)
      throw std::invalid_argument("write_paserds: samples must share C,H,W,K");
  }

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_paserds: cannot open " + path);
  out << "PASERDS v1 " << data.size() << " " << c << " " << first.height << " " << first.width
      << " " << first.classes << "\n";
  for (const SegSample& s : data) {
    out.write(reinterpret_cast<const char*>(s.image.data.data()),
              static_cast<std::streamsize>(s.image.size() * sizeof(float)));
    out.write(reinterpret_cast<const char*>(s.labels.data()),
              static_cast<std::streamsize>(s.labels.size()));
  }
  if (!out) throw std::runtime_error("write_paserds: write failed for " + path);
}

Dataset read_paserds(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_paserds: cannot open " + path);
  std::string header;
  std::getline(in, header);
  std::istringstream hs(header);
  std::string magic, version;
  std::int64_t n = 0;
  int c = 0, h = 0, w = 0, k = 0;
  hs >> magic >> version >> n >> c >> h >> w >> k;
  if (magic != "PASERDS" || version != "v1" || !hs || n <= 0 || c <= 0 || h <= 0 || w <= 0 ||
      k <= 0)
    throw std::runtime_error("read_paserds: bad header in " + path);

  Dataset data;
  data.reserve(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    SegSample s;
    s.height = h;
    s.width = w;
    s.classes = k;
    s.image = Tensor<float>({c, h, w});
    s.labels.resize(static_cast<std::size_t>(h) * w);
    if (!in.read(reinterpret_cast<char*>(s.image.data.data()),
                 static_cast<std::streamsize>(s.image.size() * sizeof(float))) ||
        !in.read(reinterpret_cast<char*>(s.labels.data()),
                 static_cast<std::streamsize>(s.labels.size())))
      throw std::runtime_error("read_paserds: truncated file " + path);
    for (std::uint8_t v : s.labels)
      if (v >= k) throw std::runtime_error("read_paserds: label out of range in " + path);
    data.push_back(std::move(s));
  }
  return data;
}

}  // namespace paser
