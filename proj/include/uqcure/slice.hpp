#pragma once

// 2D slice rendering for the curation viewer.
//
//   raw            8-bit gray, round(255 * clamp((v - lo) / (hi - lo), 0, 1));
//                  default window is the volume's min/max
//   seg            palette: 0 transparent, 1 red (255,0,0)
//   unc            RGBA yellow (255,255,0) with alpha round(255 * u)
//   region_labels  palette: 0 transparent, label L -> entry ((L-1) % 255) + 1
//
// Slices are taken perpendicular to `axis`: z gives (y rows, x cols),
// y gives (z, x), x gives (z, y).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "uqcure/png.hpp"
#include "uqcure/volume.hpp"

namespace uqcure {

enum class Axis { z = 0, y = 1, x = 2 };
enum class Layer { raw, seg, unc, region_labels };

inline Axis parse_axis(std::string_view s) {
  if (s == "z") return Axis::z;
  if (s == "y") return Axis::y;
  if (s == "x") return Axis::x;
  throw ValidationError("axis must be z, y or x, got '" + std::string(s) + "'");
}

inline Layer parse_layer(std::string_view s) {
  if (s == "raw") return Layer::raw;
  if (s == "seg") return Layer::seg;
  if (s == "unc") return Layer::unc;
  if (s == "region_labels") return Layer::region_labels;
  throw ValidationError("layer must be raw, seg, unc or region_labels, got '" + std::string(s) + "'");
}

struct SliceRequest {
  Axis axis = Axis::z;
  std::int64_t index = 0;
  Layer layer = Layer::raw;
  std::optional<std::pair<double, double>> window;

  void validate(const Shape& shape) const {
    const std::int64_t n = shape[static_cast<int>(axis)];
    if (index < 0 || index >= n) {
      throw ValidationError("slice index " + std::to_string(index) + " out of range [0," +
                            std::to_string(n) + ")");
    }
    if (window && !(window->first < window->second)) {
      throw ValidationError("window low must be below window high");
    }
  }
};

struct Image {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  png::ColorType type = png::ColorType::gray;
  std::vector<std::uint8_t> pixels;
  std::vector<png::PaletteEntry> palette;

  std::string encode_png() const { return png::encode(width, height, type, pixels, palette); }
};

struct PlaneGeometry {
  std::int64_t rows = 0, cols = 0;
};

inline PlaneGeometry plane_geometry(const Shape& s, Axis axis) {
  switch (axis) {
    case Axis::z: return {s.y, s.x};
    case Axis::y: return {s.z, s.x};
    case Axis::x: return {s.z, s.y};
  }
  return {};
}

template <typename T>
std::vector<T> extract_plane(const Volume<T>& vol, Axis axis, std::int64_t index) {
  const auto g = plane_geometry(vol.shape(), axis);
  std::vector<T> out;
  out.reserve(static_cast<std::size_t>(g.rows * g.cols));
  for (std::int64_t r = 0; r < g.rows; ++r)
    for (std::int64_t c = 0; c < g.cols; ++c) {
      switch (axis) {
        case Axis::z: out.push_back(vol.at(index, r, c)); break;
        case Axis::y: out.push_back(vol.at(r, index, c)); break;
        case Axis::x: out.push_back(vol.at(r, c, index)); break;
      }
    }
  return out;
}

inline std::uint8_t window_gray(double v, double lo, double hi) {
  if (!(hi > lo)) return 0;
  return static_cast<std::uint8_t>(std::lround(255.0 * std::clamp((v - lo) / (hi - lo), 0.0, 1.0)));
}

inline std::uint8_t uncertainty_alpha(double u) {
  return static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(u, 0.0, 1.0)));
}

inline png::PaletteEntry region_color(std::uint32_t entry) {
  if (entry == 0) return {0, 0, 0, 0};
  return {static_cast<std::uint8_t>((entry * 37u + 60u) & 0xFF),
          static_cast<std::uint8_t>((entry * 91u + 140u) & 0xFF),
          static_cast<std::uint8_t>((entry * 151u + 200u) & 0xFF), 255};
}

template <typename T>
Image render_raw_slice(const Volume<T>& raw, const SliceRequest& req) {
  req.validate(raw.shape());
  double lo, hi;
  if (req.window) {
    std::tie(lo, hi) = *req.window;
  } else {
    const auto [mn, mx] = std::minmax_element(raw.data().begin(), raw.data().end());
    lo = static_cast<double>(*mn);
    hi = static_cast<double>(*mx);
  }
  const auto g = plane_geometry(raw.shape(), req.axis);
  Image img{static_cast<std::uint32_t>(g.cols), static_cast<std::uint32_t>(g.rows),
            png::ColorType::gray, {}, {}};
  for (const T v : extract_plane(raw, req.axis, req.index))
    img.pixels.push_back(window_gray(static_cast<double>(v), lo, hi));
  return img;
}

inline Image render_raw_slice(const AnyVolume& raw, const SliceRequest& req) {
  return std::visit([&](const auto& v) { return render_raw_slice(v, req); }, raw);
}

inline Image render_seg_slice(const Volume<std::uint8_t>& seg, const SliceRequest& req) {
  req.validate(seg.shape());
  const auto g = plane_geometry(seg.shape(), req.axis);
  Image img{static_cast<std::uint32_t>(g.cols), static_cast<std::uint32_t>(g.rows),
            png::ColorType::palette, {}, {{0, 0, 0, 0}, {255, 0, 0, 255}}};
  for (const auto v : extract_plane(seg, req.axis, req.index))
    img.pixels.push_back(v ? 1 : 0);
  return img;
}

inline Image render_unc_slice(const Volume<float>& unc, const SliceRequest& req) {
  req.validate(unc.shape());
  const auto g = plane_geometry(unc.shape(), req.axis);
  Image img{static_cast<std::uint32_t>(g.cols), static_cast<std::uint32_t>(g.rows),
            png::ColorType::rgba, {}, {}};
  for (const float u : extract_plane(unc, req.axis, req.index)) {
    img.pixels.insert(img.pixels.end(), {255, 255, 0, uncertainty_alpha(u)});
  }
  return img;
}

inline Image render_label_slice(const Volume<std::uint32_t>& labels, const SliceRequest& req) {
  req.validate(labels.shape());
  const auto g = plane_geometry(labels.shape(), req.axis);
  Image img{static_cast<std::uint32_t>(g.cols), static_cast<std::uint32_t>(g.rows),
            png::ColorType::palette, {}, {}};
  for (std::uint32_t e = 0; e < 256; ++e) img.palette.push_back(region_color(e));
  for (const auto l : extract_plane(labels, req.axis, req.index))
    img.pixels.push_back(l == 0 ? 0 : static_cast<std::uint8_t>((l - 1) % 255 + 1));
  return img;
}

}  // namespace uqcure
