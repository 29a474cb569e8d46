#pragma once

// Test-side PNG reader for the subset the encoder emits: 8-bit depth,
// no interlace, filter type 0 on every row.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <zlib.h>

namespace pngtest {

struct Decoded {
  std::uint32_t width = 0, height = 0;
  int color_type = 0;
  std::vector<std::uint8_t> pixels;
  std::vector<std::uint8_t> plte, trns;
  int channels() const { return color_type == 6 ? 4 : color_type == 2 ? 3 : 1; }
};

inline std::uint32_t be32(const std::string& s, std::size_t at) {
  return (static_cast<std::uint32_t>(static_cast<std::uint8_t>(s[at])) << 24) |
         (static_cast<std::uint32_t>(static_cast<std::uint8_t>(s[at + 1])) << 16) |
         (static_cast<std::uint32_t>(static_cast<std::uint8_t>(s[at + 2])) << 8) |
         static_cast<std::uint32_t>(static_cast<std::uint8_t>(s[at + 3]));
}

inline Decoded decode(const std::string& png) {
  if (png.size() < 8 || png.compare(0, 8, std::string("\x89PNG\r\n\x1a\n", 8)) != 0)
    throw std::runtime_error("bad signature");
  Decoded d;
  std::string idat;
  std::size_t at = 8;
  bool ended = false;
  while (at + 12 <= png.size()) {
    const std::uint32_t len = be32(png, at);
    const std::string type = png.substr(at + 4, 4);
    const std::string body = png.substr(at + 8, len);
    const std::uint32_t crc = be32(png, at + 8 + len);
    const auto* p = reinterpret_cast<const Bytef*>(png.data() + at + 4);
    if (crc32(0L, p, len + 4) != crc) throw std::runtime_error("crc mismatch in " + type);
    if (type == "IHDR") {
      d.width = be32(body, 0);
      d.height = be32(body, 4);
      if (body[8] != 8) throw std::runtime_error("bit depth");
      d.color_type = body[9];
    } else if (type == "PLTE") {
      d.plte.assign(body.begin(), body.end());
    } else if (type == "tRNS") {
      d.trns.assign(body.begin(), body.end());
    } else if (type == "IDAT") {
      idat += body;
    } else if (type == "IEND") {
      ended = true;
      break;
    }
    at += 12 + len;
  }
  if (!ended) throw std::runtime_error("missing IEND");
  const std::size_t stride = static_cast<std::size_t>(d.width) * d.channels();
  std::vector<std::uint8_t> raw((stride + 1) * d.height);
  uLongf out_len = static_cast<uLongf>(raw.size());
  if (uncompress(raw.data(), &out_len, reinterpret_cast<const Bytef*>(idat.data()),
                 static_cast<uLong>(idat.size())) != Z_OK ||
      out_len != raw.size())
    throw std::runtime_error("inflate failed");
  for (std::uint32_t r = 0; r < d.height; ++r) {
    if (raw[r * (stride + 1)] != 0) throw std::runtime_error("unsupported filter");
    d.pixels.insert(d.pixels.end(), raw.begin() + r * (stride + 1) + 1,
                    raw.begin() + (r + 1) * (stride + 1));
  }
  return d;
}

}  // namespace pngtest
