#pragma once

// Two-pass union-find connected-component labeling over a 3D grid.
//
// Voxels carry a class key (0 = not selected). Two selected voxels are
// joined when they are adjacent under the chosen connectivity and share the
// same key, so one pass labels both binary masks and quantized maps.
//
// The union-find forest lives over voxel indices and always links the larger
// root under the smaller one. The root of every component is therefore its
// first voxel in z,y,x scan order, which makes the final relabeling
// (first-touch order) independent of how the forest was built. The volume is
// split into z-slabs that are labeled concurrently and then stitched along
// slab boundaries; output is identical for every worker count.

#include <algorithm>
#include <array>
#include <cstdint>
#include <span>
#include <thread>
#include <vector>

#include "uqcure/volume.hpp"

namespace uqcure {

enum class Connectivity : int { six = 6, twentysix = 26 };

inline Connectivity parse_connectivity(int c) {
  if (c == 6) return Connectivity::six;
  if (c == 26) return Connectivity::twentysix;
  throw ValidationError("connectivity must be 6 or 26, got " + std::to_string(c));
}

struct Offset {
  int dz, dy, dx;
};

// Neighbors that precede a voxel in scan order.
inline std::span<const Offset> backward_offsets(Connectivity c) {
  static constexpr std::array<Offset, 3> k6{{{-1, 0, 0}, {0, -1, 0}, {0, 0, -1}}};
  static constexpr std::array<Offset, 13> k26{{{-1, -1, -1}, {-1, -1, 0}, {-1, -1, 1},
                                               {-1, 0, -1},  {-1, 0, 0},  {-1, 0, 1},
                                               {-1, 1, -1},  {-1, 1, 0},  {-1, 1, 1},
                                               {0, -1, -1},  {0, -1, 0},  {0, -1, 1},
                                               {0, 0, -1}}};
  if (c == Connectivity::six) return k6;
  return k26;
}

struct ComponentLabels {
  std::vector<std::uint32_t> labels;  // 0 = unselected, else 1..count
  std::uint32_t count = 0;
};

namespace detail {

class IndexForest {
 public:
  explicit IndexForest(std::size_t n) : parent_(n) {}

  void make(std::uint32_t i) { parent_[i] = i; }

  std::uint32_t find(std::uint32_t i) {
    while (parent_[i] != i) {
      parent_[i] = parent_[parent_[i]];
      i = parent_[i];
    }
    return i;
  }

  void unite(std::uint32_t a, std::uint32_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (a < b) {
      parent_[b] = a;
    } else {
      parent_[a] = b;
    }
  }

 private:
  std::vector<std::uint32_t> parent_;
};

inline unsigned default_workers() {
  const unsigned hw = std::thread::hardware_concurrency();
  return std::clamp(hw, 1u, 8u);
}

}  // namespace detail

// `key(i)` returns the class of linear voxel index i (0 = background).
// workers == 0 picks a default based on hardware concurrency.
template <typename KeyFn>
ComponentLabels label_components(const Shape& shape, Connectivity conn, KeyFn&& key,
                                 unsigned workers = 0) {
  const std::int64_t Z = shape.z, Y = shape.y, X = shape.x;
  const std::size_t n = static_cast<std::size_t>(shape.voxels());
  if (n >= std::size_t{0xFFFFFFFF}) throw ValidationError("volume too large for 32-bit labels");

  detail::IndexForest forest(n);
  const auto offsets = backward_offsets(conn);

  // Joins voxel (z,y,x) with its backward neighbors whose z is >= z_floor.
  auto link_voxel = [&](std::int64_t z, std::int64_t y, std::int64_t x, std::int64_t z_floor,
                        bool only_previous_plane) {
    const std::size_t i = static_cast<std::size_t>((z * Y + y) * X + x);
    const auto k = key(i);
    if (k == 0) return;
    for (const Offset& o : offsets) {
      if (only_previous_plane && o.dz != -1) continue;
      const std::int64_t nz = z + o.dz, ny = y + o.dy, nx = x + o.dx;
      if (nz < z_floor || ny < 0 || ny >= Y || nx < 0 || nx >= X) continue;
      const std::size_t j = static_cast<std::size_t>((nz * Y + ny) * X + nx);
      if (key(j) == k) forest.unite(static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j));
    }
  };

  auto label_slab = [&](std::int64_t z0, std::int64_t z1) {
    for (std::int64_t z = z0; z < z1; ++z)
      for (std::int64_t y = 0; y < Y; ++y)
        for (std::int64_t x = 0; x < X; ++x) {
          const std::size_t i = static_cast<std::size_t>((z * Y + y) * X + x);
          if (key(i) != 0) {
            forest.make(static_cast<std::uint32_t>(i));
            link_voxel(z, y, x, z0, false);
          }
        }
  };

  if (workers == 0) workers = detail::default_workers();
  const std::int64_t slabs = std::clamp<std::int64_t>(workers, 1, Z);
  std::vector<std::int64_t> bounds(static_cast<std::size_t>(slabs) + 1);
  for (std::int64_t s = 0; s <= slabs; ++s) bounds[static_cast<std::size_t>(s)] = s * Z / slabs;

  if (slabs == 1) {
    label_slab(0, Z);
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(static_cast<std::size_t>(slabs));
    for (std::int64_t s = 0; s < slabs; ++s) {
      pool.emplace_back(label_slab, bounds[static_cast<std::size_t>(s)],
                        bounds[static_cast<std::size_t>(s) + 1]);
    }
    pool.clear();
    for (std::int64_t s = 1; s < slabs; ++s) {
      const std::int64_t z = bounds[static_cast<std::size_t>(s)];
      for (std::int64_t y = 0; y < Y; ++y)
        for (std::int64_t x = 0; x < X; ++x) link_voxel(z, y, x, 0, true);
    }
  }

  ComponentLabels out;
  out.labels.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    if (key(i) == 0) continue;
    const std::uint32_t r = forest.find(static_cast<std::uint32_t>(i));
    out.labels[i] = (r == i) ? ++out.count : out.labels[r];
  }
  return out;
}

}  // namespace uqcure
