#pragma once

// Connectivity structure of binary segmentations: component labeling, Betti
// numbers and the merge/break classification of before/after differences.
//
// Foreground uses 6-adjacency and background 26-adjacency. The Euler
// characteristic is taken on the cubical complex matching that pairing:
// foreground voxel centers are vertices, 6-adjacent pairs are edges, fully
// foreground 2x2 squares are faces and fully foreground 2x2x2 blocks are
// cubes. beta0 and beta2 come from labeling; beta1 follows from the Euler
// relation.

#include <algorithm>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "uqcure/ccl.hpp"
#include "uqcure/volume.hpp"

namespace uqcure {

struct TopologyReport {
  std::int64_t beta0 = 0;
  std::int64_t beta1 = 0;
  std::int64_t beta2 = 0;
  std::int64_t euler = 0;
  std::vector<std::int64_t> component_sizes;  // descending

  friend bool operator==(const TopologyReport&, const TopologyReport&) = default;
};

enum class TopologyChange { none, split, join, loop_change, cavity_change, mixed };

inline std::string_view to_string(TopologyChange c) {
  switch (c) {
    case TopologyChange::none: return "none";
    case TopologyChange::split: return "split";
    case TopologyChange::join: return "join";
    case TopologyChange::loop_change: return "loop_change";
    case TopologyChange::cavity_change: return "cavity_change";
    case TopologyChange::mixed: return "mixed";
  }
  return "none";
}

struct TopologyDiff {
  std::int64_t d_beta0 = 0;
  std::int64_t d_beta1 = 0;
  std::int64_t d_beta2 = 0;
  TopologyChange classification = TopologyChange::none;

  friend bool operator==(const TopologyDiff&, const TopologyDiff&) = default;
};

struct LabeledVolume {
  Volume<std::uint32_t> labels;
  std::uint32_t count = 0;
};

inline LabeledVolume connected_components(const Volume<std::uint8_t>& seg, Connectivity conn,
                                          unsigned workers = 0) {
  const auto data = seg.data();
  auto cc = label_components(seg.shape(), conn, [&](std::size_t i) { return data[i] != 0; },
                             workers);
  return {Volume<std::uint32_t>(seg.shape(), std::move(cc.labels), seg.meta().spacing), cc.count};
}

// Alternating cell count V - E + F - C of the 6-adjacency complex.
inline std::int64_t euler_characteristic(const Volume<std::uint8_t>& seg) {
  const Shape s = seg.shape();
  auto fg = [&](std::int64_t z, std::int64_t y, std::int64_t x) { return seg.at(z, y, x) != 0; };
  std::int64_t v = 0, e = 0, f = 0, c = 0;
  for (std::int64_t z = 0; z < s.z; ++z)
    for (std::int64_t y = 0; y < s.y; ++y)
      for (std::int64_t x = 0; x < s.x; ++x) {
        if (!fg(z, y, x)) continue;
        ++v;
        const bool pz = z + 1 < s.z && fg(z + 1, y, x);
        const bool py = y + 1 < s.y && fg(z, y + 1, x);
        const bool px = x + 1 < s.x && fg(z, y, x + 1);
        e += pz + py + px;
        const bool pyx = py && px && fg(z, y + 1, x + 1);
        const bool pzx = pz && px && fg(z + 1, y, x + 1);
        const bool pzy = pz && py && fg(z + 1, y + 1, x);
        f += pyx + pzx + pzy;
        if (pyx && pzx && pzy && fg(z + 1, y + 1, x + 1)) ++c;
      }
  return v - e + f - c;
}

inline TopologyReport betti_numbers(const Volume<std::uint8_t>& seg, unsigned workers = 0) {
  const Shape s = seg.shape();
  const auto data = seg.data();
  TopologyReport r;

  auto fg = label_components(s, Connectivity::six, [&](std::size_t i) { return data[i] != 0; },
                             workers);
  r.beta0 = fg.count;
  r.component_sizes.assign(fg.count, 0);
  for (auto l : fg.labels)
    if (l) ++r.component_sizes[l - 1];
  std::sort(r.component_sizes.begin(), r.component_sizes.end(), std::greater<>());

  // Cavities: 26-connected background components that do not reach the border.
  auto bg = label_components(s, Connectivity::twentysix,
                             [&](std::size_t i) { return data[i] == 0; }, workers);
  std::vector<char> touches(static_cast<std::size_t>(bg.count) + 1, 0);
  for (std::size_t i = 0; i < bg.labels.size(); ++i) {
    if (!bg.labels[i]) continue;
    const Voxel p = seg.coord(i);
    if (p.z == 0 || p.y == 0 || p.x == 0 || p.z == s.z - 1 || p.y == s.y - 1 || p.x == s.x - 1)
      touches[bg.labels[i]] = 1;
  }
  r.beta2 = static_cast<std::int64_t>(std::count(touches.begin() + 1, touches.end(), 0));

  r.euler = euler_characteristic(seg);
  r.beta1 = r.beta0 + r.beta2 - r.euler;
  return r;
}

// Deltas are after - before. Conflicting signs among the nonzero deltas give
// `mixed`; otherwise the first of split > join > loop_change > cavity_change.
inline TopologyDiff topology_diff(const TopologyReport& before, const TopologyReport& after) {
  TopologyDiff d{after.beta0 - before.beta0, after.beta1 - before.beta1,
                 after.beta2 - before.beta2, TopologyChange::none};
  const bool any_pos = d.d_beta0 > 0 || d.d_beta1 > 0 || d.d_beta2 > 0;
  const bool any_neg = d.d_beta0 < 0 || d.d_beta1 < 0 || d.d_beta2 < 0;
  if (any_pos && any_neg) {
    d.classification = TopologyChange::mixed;
  } else if (d.d_beta0 > 0) {
    d.classification = TopologyChange::split;
  } else if (d.d_beta0 < 0) {
    d.classification = TopologyChange::join;
  } else if (d.d_beta1 != 0) {
    d.classification = TopologyChange::loop_change;
  } else if (d.d_beta2 != 0) {
    d.classification = TopologyChange::cavity_change;
  }
  return d;
}

inline constexpr std::int64_t kDefaultTopologyMargin = 5;

// `bbox` dilated by `margin` and clamped to the volume.
inline Box local_window(const Shape& shape, const Box& bbox, std::int64_t margin) {
  if (!bbox.within(shape)) throw ValidationError("bbox out of range");
  if (margin < 0) throw ValidationError("margin must be non-negative");
  return bbox.dilated(margin).clamped(shape);
}

inline TopologyReport local_topology(const Volume<std::uint8_t>& seg, const Box& bbox,
                                     std::int64_t margin = kDefaultTopologyMargin) {
  return betti_numbers(crop(seg, local_window(seg.shape(), bbox, margin)), 1);
}

}  // namespace uqcure
