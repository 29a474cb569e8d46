#pragma once

// Minimal PNG writer (8-bit grayscale, palette, RGBA). Scanlines use filter
// type 0 and zlib level 6, so identical images encode to identical bytes.

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <zlib.h>

#include "uqcure/error.hpp"

namespace uqcure::png {

enum class ColorType : std::uint8_t { gray = 0, rgb = 2, palette = 3, rgba = 6 };

struct PaletteEntry {
  std::uint8_t r = 0, g = 0, b = 0, a = 255;
};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v >> 24));
  out.push_back(static_cast<char>(v >> 16));
  out.push_back(static_cast<char>(v >> 8));
  out.push_back(static_cast<char>(v));
}

inline void chunk(std::string& out, const char (&type)[5], std::string_view body) {
  put_u32(out, static_cast<std::uint32_t>(body.size()));
  const std::size_t start = out.size();
  out.append(type, 4);
  out.append(body);
  const auto* p = reinterpret_cast<const Bytef*>(out.data() + start);
  put_u32(out, static_cast<std::uint32_t>(crc32(0L, p, static_cast<uInt>(out.size() - start))));
}

inline std::string deflate(std::string_view raw) {
  uLongf len = compressBound(static_cast<uLong>(raw.size()));
  std::string out(len, '\0');
  if (compress2(reinterpret_cast<Bytef*>(out.data()), &len,
                reinterpret_cast<const Bytef*>(raw.data()), static_cast<uLong>(raw.size()),
                6) != Z_OK) {
    throw Error("zlib compression failed");
  }
  out.resize(len);
  return out;
}

}  // namespace detail

// `pixels` holds height rows of width * channels bytes.
inline std::string encode(std::uint32_t width, std::uint32_t height, ColorType type,
                          std::span<const std::uint8_t> pixels,
                          std::span<const PaletteEntry> palette = {}) {
  const std::size_t channels = type == ColorType::rgba ? 4 : type == ColorType::rgb ? 3 : 1;
  const std::size_t stride = width * channels;
  if (pixels.size() != stride * height) throw Error("pixel buffer size does not match image");
  if (type == ColorType::palette && (palette.empty() || palette.size() > 256))
    throw Error("palette must have 1..256 entries");

  std::string out("\x89PNG\r\n\x1a\n", 8);
  std::string ihdr;
  detail::put_u32(ihdr, width);
  detail::put_u32(ihdr, height);
  ihdr.push_back(8);  // bit depth
  ihdr.push_back(static_cast<char>(type));
  ihdr.append(3, '\0');  // compression, filter, interlace
  detail::chunk(out, "IHDR", ihdr);

  if (type == ColorType::palette) {
    std::string plte, trns;
    for (const auto& e : palette) {
      plte.push_back(static_cast<char>(e.r));
      plte.push_back(static_cast<char>(e.g));
      plte.push_back(static_cast<char>(e.b));
      trns.push_back(static_cast<char>(e.a));
    }
    detail::chunk(out, "PLTE", plte);
    detail::chunk(out, "tRNS", trns);
  }

  std::string raw;
  raw.reserve((stride + 1) * height);
  for (std::uint32_t row = 0; row < height; ++row) {
    raw.push_back('\0');
    raw.append(reinterpret_cast<const char*>(pixels.data()) + row * stride, stride);
  }
  detail::chunk(out, "IDAT", detail::deflate(raw));
  detail::chunk(out, "IEND", "");
  return out;
}

}  // namespace uqcure::png
