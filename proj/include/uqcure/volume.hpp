#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include "uqcure/error.hpp"

namespace uqcure {

// Voxel coordinate in z,y,x order. Signed so that out-of-range input can be
// represented and rejected.
struct Voxel {
  std::int64_t z = 0;
  std::int64_t y = 0;
  std::int64_t x = 0;

  friend bool operator==(const Voxel&, const Voxel&) = default;
  friend auto operator<=>(const Voxel&, const Voxel&) = default;
};

struct Shape {
  std::int64_t z = 0;
  std::int64_t y = 0;
  std::int64_t x = 0;

  std::int64_t voxels() const { return z * y * x; }
  std::int64_t operator[](int axis) const { return axis == 0 ? z : axis == 1 ? y : x; }
  bool contains(const Voxel& v) const {
    return v.z >= 0 && v.y >= 0 && v.x >= 0 && v.z < z && v.y < y && v.x < x;
  }
  friend bool operator==(const Shape&, const Shape&) = default;
};

inline std::string to_string(const Shape& s) {
  return "[" + std::to_string(s.z) + "," + std::to_string(s.y) + "," + std::to_string(s.x) + "]";
}

// Inclusive min/max corner pair.
struct Box {
  Voxel min;
  Voxel max;

  static Box of(const Voxel& v) { return {v, v}; }

  void extend(const Voxel& v) {
    min = {std::min(min.z, v.z), std::min(min.y, v.y), std::min(min.x, v.x)};
    max = {std::max(max.z, v.z), std::max(max.y, v.y), std::max(max.x, v.x)};
  }
  bool contains(const Voxel& v) const {
    return v.z >= min.z && v.z <= max.z && v.y >= min.y && v.y <= max.y && v.x >= min.x &&
           v.x <= max.x;
  }
  bool intersects(const Box& o) const {
    return min.z <= o.max.z && o.min.z <= max.z && min.y <= o.max.y && o.min.y <= max.y &&
           min.x <= o.max.x && o.min.x <= max.x;
  }
  Box dilated(std::int64_t r) const {
    return {{min.z - r, min.y - r, min.x - r}, {max.z + r, max.y + r, max.x + r}};
  }
  Box clamped(const Shape& s) const {
    return {{std::max<std::int64_t>(min.z, 0), std::max<std::int64_t>(min.y, 0),
             std::max<std::int64_t>(min.x, 0)},
            {std::min(max.z, s.z - 1), std::min(max.y, s.y - 1), std::min(max.x, s.x - 1)}};
  }
  Shape extent() const { return {max.z - min.z + 1, max.y - min.y + 1, max.x - min.x + 1}; }
  bool within(const Shape& s) const { return s.contains(min) && s.contains(max) && min.z <= max.z && min.y <= max.y && min.x <= max.x; }

  friend bool operator==(const Box&, const Box&) = default;
};

enum class DType { uint8, uint16, uint32, float32 };

inline std::size_t dtype_size(DType t) {
  switch (t) {
    case DType::uint8: return 1;
    case DType::uint16: return 2;
    case DType::uint32: return 4;
    case DType::float32: return 4;
  }
  return 0;
}

inline std::string_view dtype_name(DType t) {
  switch (t) {
    case DType::uint8: return "uint8";
    case DType::uint16: return "uint16";
    case DType::uint32: return "uint32";
    case DType::float32: return "float32";
  }
  return "?";
}

inline DType parse_dtype(std::string_view name) {
  if (name == "uint8") return DType::uint8;
  if (name == "uint16") return DType::uint16;
  if (name == "uint32") return DType::uint32;
  if (name == "float32") return DType::float32;
  throw ValidationError("unsupported dtype '" + std::string(name) + "'");
}

template <typename T> struct dtype_of;
template <> struct dtype_of<std::uint8_t> { static constexpr DType value = DType::uint8; };
template <> struct dtype_of<std::uint16_t> { static constexpr DType value = DType::uint16; };
template <> struct dtype_of<std::uint32_t> { static constexpr DType value = DType::uint32; };
template <> struct dtype_of<float> { static constexpr DType value = DType::float32; };

using Spacing = std::array<double, 3>;

inline constexpr std::int64_t kDefaultMaxVoxels = std::int64_t{1} << 31;

struct VolumeMeta {
  Shape shape;
  DType dtype = DType::uint8;
  Spacing spacing{1.0, 1.0, 1.0};

  std::size_t payload_bytes() const {
    return static_cast<std::size_t>(shape.voxels()) * dtype_size(dtype);
  }

  void validate(std::int64_t max_voxels = kDefaultMaxVoxels) const {
    if (shape.z <= 0 || shape.y <= 0 || shape.x <= 0) {
      throw ValidationError("shape " + to_string(shape) + " must be positive on every axis");
    }
    // Checked per axis first so the product cannot overflow.
    if (shape.z > max_voxels || shape.y > max_voxels || shape.x > max_voxels ||
        shape.z * shape.y > max_voxels || shape.voxels() > max_voxels) {
      throw ValidationError("shape " + to_string(shape) + " exceeds voxel budget of " +
                            std::to_string(max_voxels));
    }
    for (double s : spacing) {
      if (!(s > 0.0) || !std::isfinite(s)) throw ValidationError("spacing must be positive");
    }
  }

  friend bool operator==(const VolumeMeta&, const VolumeMeta&) = default;
};

// Dense 3D array in z-major, then y, then x order.
template <typename T>
class Volume {
 public:
  using value_type = T;

  Volume() = default;
  explicit Volume(Shape shape, T fill = T{}, Spacing spacing = {1.0, 1.0, 1.0})
      : meta_{shape, dtype_of<T>::value, spacing} {
    meta_.validate();
    data_.assign(static_cast<std::size_t>(shape.voxels()), fill);
  }
  Volume(Shape shape, std::vector<T> data, Spacing spacing = {1.0, 1.0, 1.0})
      : meta_{shape, dtype_of<T>::value, spacing}, data_(std::move(data)) {
    meta_.validate();
    if (data_.size() != static_cast<std::size_t>(shape.voxels())) {
      throw ValidationError("buffer length " + std::to_string(data_.size()) +
                            " does not match shape " + to_string(shape));
    }
  }

  const VolumeMeta& meta() const { return meta_; }
  const Shape& shape() const { return meta_.shape; }
  std::size_t size() const { return data_.size(); }

  std::size_t index(std::int64_t z, std::int64_t y, std::int64_t x) const {
    return static_cast<std::size_t>((z * meta_.shape.y + y) * meta_.shape.x + x);
  }
  std::size_t index(const Voxel& v) const { return index(v.z, v.y, v.x); }
  Voxel coord(std::size_t i) const {
    const auto yx = meta_.shape.y * meta_.shape.x;
    const auto li = static_cast<std::int64_t>(i);
    return {li / yx, (li / meta_.shape.x) % meta_.shape.y, li % meta_.shape.x};
  }

  T& at(std::int64_t z, std::int64_t y, std::int64_t x) { return data_[index(z, y, x)]; }
  const T& at(std::int64_t z, std::int64_t y, std::int64_t x) const { return data_[index(z, y, x)]; }
  T& operator[](const Voxel& v) { return data_[index(v)]; }
  const T& operator[](const Voxel& v) const { return data_[index(v)]; }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  const std::vector<T>& buffer() const { return data_; }

  friend bool operator==(const Volume& a, const Volume& b) {
    return a.meta_ == b.meta_ && a.data_ == b.data_;
  }

 private:
  VolumeMeta meta_;
  std::vector<T> data_;
};

using AnyVolume =
    std::variant<Volume<std::uint8_t>, Volume<std::uint16_t>, Volume<std::uint32_t>, Volume<float>>;

inline const VolumeMeta& meta_of(const AnyVolume& v) {
  return std::visit([](const auto& vol) -> const VolumeMeta& { return vol.meta(); }, v);
}

template <typename T>
const Volume<T>& expect_dtype(const AnyVolume& v, std::string_view role) {
  if (const auto* p = std::get_if<Volume<T>>(&v)) return *p;
  throw ValidationError(std::string(role) + " volume must be " +
                        std::string(dtype_name(dtype_of<T>::value)) + ", got " +
                        std::string(dtype_name(meta_of(v).dtype)));
}

// Copy of the sub-volume covered by `box` (which must lie inside the volume).
template <typename T>
Volume<T> crop(const Volume<T>& vol, const Box& box) {
  if (!box.within(vol.shape())) throw ValidationError("crop box out of range");
  const Shape ext = box.extent();
  Volume<T> out(ext, T{}, vol.meta().spacing);
  for (std::int64_t z = 0; z < ext.z; ++z)
    for (std::int64_t y = 0; y < ext.y; ++y) {
      const T* src = &vol.at(box.min.z + z, box.min.y + y, box.min.x);
      std::copy(src, src + ext.x, &out.at(z, y, 0));
    }
  return out;
}

// Values of `vol` inside `box`, in z,y,x order.
template <typename T>
std::vector<T> extract_box(const Volume<T>& vol, const Box& box) {
  return crop(vol, box).buffer();
}

template <typename T>
void paste_box(Volume<T>& vol, const Box& box, std::span<const T> values) {
  const Shape ext = box.extent();
  if (!box.within(vol.shape()) || values.size() != static_cast<std::size_t>(ext.voxels())) {
    throw ValidationError("patch does not fit box");
  }
  std::size_t k = 0;
  for (std::int64_t z = box.min.z; z <= box.max.z; ++z)
    for (std::int64_t y = box.min.y; y <= box.max.y; ++y)
      for (std::int64_t x = box.min.x; x <= box.max.x; ++x) vol.at(z, y, x) = values[k++];
}

template <typename T>
bool box_equal(const Volume<T>& a, const Volume<T>& b, const Box& box) {
  for (std::int64_t z = box.min.z; z <= box.max.z; ++z)
    for (std::int64_t y = box.min.y; y <= box.max.y; ++y)
      for (std::int64_t x = box.min.x; x <= box.max.x; ++x)
        if (a.at(z, y, x) != b.at(z, y, x)) return false;
  return true;
}

// Raw image + binary segmentation + uncertainty map describing one dataset.
struct DatasetTriplet {
  AnyVolume raw;
  Volume<std::uint8_t> seg;
  Volume<float> unc;
  std::string id;
};

inline void check_uncertainty_range(const Volume<float>& unc) {
  for (std::size_t i = 0; i < unc.size(); ++i) {
    const float u = unc.data()[i];
    if (!(u >= 0.0f && u <= 1.0f)) {
      const Voxel c = unc.coord(i);
      throw ValidationError("uncertainty out of range [0,1]: value " + std::to_string(u) +
                            " at (" + std::to_string(c.z) + "," + std::to_string(c.y) + "," +
                            std::to_string(c.x) + ")");
    }
  }
}

inline void check_binary(const Volume<std::uint8_t>& seg) {
  for (std::size_t i = 0; i < seg.size(); ++i) {
    if (seg.data()[i] > 1) {
      throw ValidationError("segmentation is not binary: value " +
                            std::to_string(seg.data()[i]) + " at index " + std::to_string(i));
    }
  }
}

inline DatasetTriplet validate_triplet(AnyVolume raw, AnyVolume seg, AnyVolume unc,
                                       std::string id = {}) {
  const Shape rs = meta_of(raw).shape;
  if (meta_of(seg).shape != rs) {
    throw ValidationError("shape mismatch: seg " + to_string(meta_of(seg).shape) + " vs raw " +
                          to_string(rs));
  }
  if (meta_of(unc).shape != rs) {
    throw ValidationError("shape mismatch: unc " + to_string(meta_of(unc).shape) + " vs raw " +
                          to_string(rs));
  }
  auto& s = expect_dtype<std::uint8_t>(seg, "segmentation");
  auto& u = expect_dtype<float>(unc, "uncertainty");
  check_binary(s);
  check_uncertainty_range(u);
  return {std::move(raw), std::move(std::get<Volume<std::uint8_t>>(seg)),
          std::move(std::get<Volume<float>>(unc)), std::move(id)};
}

}  // namespace uqcure
