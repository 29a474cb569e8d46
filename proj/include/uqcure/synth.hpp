#pragma once

// Synthetic vascular phantoms with injected topology errors, a matching
// uncertainty map, and simulated curators used to compare guided against
// unguided review.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "uqcure/regions.hpp"
#include "uqcure/topology.hpp"
#include "uqcure/volume.hpp"
#include "uqcure/volume_io.hpp"

namespace uqcure {

struct Vec3 {
  double z = 0, y = 0, x = 0;

  Vec3 operator+(const Vec3& o) const { return {z + o.z, y + o.y, x + o.x}; }
  Vec3 operator-(const Vec3& o) const { return {z - o.z, y - o.y, x - o.x}; }
  Vec3 operator*(double s) const { return {z * s, y * s, x * s}; }
  double dot(const Vec3& o) const { return z * o.z + y * o.y + x * o.x; }
  double norm() const { return std::sqrt(dot(*this)); }
  static Vec3 of(const Voxel& v) {
    return {static_cast<double>(v.z), static_cast<double>(v.y), static_cast<double>(v.x)};
  }
  Voxel rounded() const { return {std::llround(z), std::llround(y), std::llround(x)}; }
};

inline double distance_to_segment(const Vec3& p, const Vec3& a, const Vec3& b) {
  const Vec3 ab = b - a;
  const double len2 = ab.dot(ab);
  const double t = len2 > 0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
  return (p - (a + ab * t)).norm();
}

// SplitMix64 finalizer; derives independent streams from one user seed.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline double unit_hash(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  const std::uint64_t h = mix_seed(mix_seed(seed, a), b);
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

struct Tube {
  std::vector<Vec3> path;  // polyline through voxel space
  double radius = 1.0;
};

struct VesselConfig {
  std::int64_t size = 100;
  int n_tubes = 8;
  double radius = 3.0;

  void validate() const {
    if (size < 32) throw ValidationError("phantom size must be >= 32, got " + std::to_string(size));
    if (n_tubes < 1) throw ValidationError("phantom needs at least one tube");
    if (!(radius >= 1.0)) throw ValidationError("tube radius must be >= 1");
    if (2 * (radius + 2) >= static_cast<double>(size)) throw ValidationError("tube radius too large");
  }
};

struct VesselPhantom {
  Volume<float> raw;
  Volume<std::uint8_t> gt;
  std::vector<Tube> tubes;
};

// Sets every voxel within `radius` of segment a-b to `value`. Returns the
// voxels that actually changed.
inline std::vector<Voxel> stamp_segment(Volume<std::uint8_t>& vol, const Vec3& a, const Vec3& b,
                                        double radius, std::uint8_t value) {
  const Shape s = vol.shape();
  const auto lo = [&](double p, double q) {
    return std::max<std::int64_t>(0, static_cast<std::int64_t>(std::floor(std::min(p, q) - radius)));
  };
  const auto hi = [&](double p, double q, std::int64_t n) {
    return std::min<std::int64_t>(n - 1, static_cast<std::int64_t>(std::ceil(std::max(p, q) + radius)));
  };
  std::vector<Voxel> changed;
  for (std::int64_t z = lo(a.z, b.z); z <= hi(a.z, b.z, s.z); ++z)
    for (std::int64_t y = lo(a.y, b.y); y <= hi(a.y, b.y, s.y); ++y)
      for (std::int64_t x = lo(a.x, b.x); x <= hi(a.x, b.x, s.x); ++x) {
        const Vec3 p{static_cast<double>(z), static_cast<double>(y), static_cast<double>(x)};
        if (distance_to_segment(p, a, b) <= radius && vol.at(z, y, x) != value) {
          vol.at(z, y, x) = value;
          changed.push_back({z, y, x});
        }
      }
  return changed;
}

inline void rasterize_tube(Volume<std::uint8_t>& vol, const Tube& t) {
  for (std::size_t k = 0; k + 1 < t.path.size(); ++k)
    stamp_segment(vol, t.path[k], t.path[k + 1], t.radius, 1);
}

// Separable Gaussian blur with clamp-to-edge borders.
inline void gaussian_blur(Volume<float>& vol, double sigma) {
  const int r = static_cast<int>(std::ceil(3 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * r + 1));
  for (int i = -r; i <= r; ++i) k[static_cast<std::size_t>(i + r)] = std::exp(-i * i / (2 * sigma * sigma));
  const double ksum = std::accumulate(k.begin(), k.end(), 0.0);
  for (auto& w : k) w /= ksum;

  const Shape s = vol.shape();
  std::vector<float> line;
  for (int axis = 0; axis < 3; ++axis) {
    const std::int64_t n = s[axis];
    line.resize(static_cast<std::size_t>(n));
    const std::int64_t a1 = axis == 0 ? s.y : s.z;
    const std::int64_t a2 = axis == 2 ? s.y : s.x;
    for (std::int64_t i = 0; i < a1; ++i)
      for (std::int64_t j = 0; j < a2; ++j) {
        auto ref = [&](std::int64_t t) -> float& {
          if (axis == 0) return vol.at(t, i, j);
          if (axis == 1) return vol.at(i, t, j);
          return vol.at(i, j, t);
        };
        for (std::int64_t t = 0; t < n; ++t) line[static_cast<std::size_t>(t)] = ref(t);
        for (std::int64_t t = 0; t < n; ++t) {
          double acc = 0;
          for (int d = -r; d <= r; ++d) {
            const std::int64_t q = std::clamp<std::int64_t>(t + d, 0, n - 1);
            acc += k[static_cast<std::size_t>(d + r)] * line[static_cast<std::size_t>(q)];
          }
          ref(t) = static_cast<float>(acc);
        }
      }
  }
}

// Vessel intensity 0.8 on background 0.1, blurred (sigma 1) with additive
// Gaussian noise (sigma 0.05), clamped to [0,1].
inline Volume<float> render_raw(const Volume<std::uint8_t>& gt, std::uint64_t seed) {
  Volume<float> raw(gt.shape(), 0.0f, gt.meta().spacing);
  for (std::size_t i = 0; i < gt.size(); ++i) raw.data()[i] = gt.data()[i] ? 0.8f : 0.1f;
  gaussian_blur(raw, 1.0);
  std::mt19937_64 rng(mix_seed(seed, 11));
  std::normal_distribution<double> noise(0.0, 0.05);
  for (auto& v : raw.data()) v = static_cast<float>(std::clamp(v + noise(rng), 0.0, 1.0));
  return raw;
}

inline VesselPhantom phantom_from_tubes(const Shape& shape, std::vector<Tube> tubes,
                                        std::uint64_t seed) {
  VesselPhantom ph;
  ph.gt = Volume<std::uint8_t>(shape);
  for (const auto& t : tubes) rasterize_tube(ph.gt, t);
  ph.raw = render_raw(ph.gt, seed);
  ph.tubes = std::move(tubes);
  return ph;
}

// Random piecewise-linear tubes: endpoints on two different faces of the
// cube, 2-4 interior waypoints in between.
inline VesselPhantom generate_vessels(const VesselConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const double D = static_cast<double>(cfg.size);
  std::mt19937_64 rng(mix_seed(seed, 1));
  std::uniform_real_distribution<double> inner(cfg.radius + 1, D - 2 - cfg.radius);
  std::uniform_int_distribution<int> face(0, 5), waypoints(2, 4);

  auto on_face = [&](int f) {
    Vec3 p{inner(rng), inner(rng), inner(rng)};
    const double edge = (f % 2 == 0) ? 0.0 : D - 1;
    if (f / 2 == 0) p.z = edge;
    if (f / 2 == 1) p.y = edge;
    if (f / 2 == 2) p.x = edge;
    return p;
  };

  std::vector<Tube> tubes;
  for (int t = 0; t < cfg.n_tubes; ++t) {
    const int f0 = face(rng);
    int f1 = face(rng);
    while (f1 == f0) f1 = face(rng);
    Tube tube;
    tube.radius = cfg.radius;
    tube.path.push_back(on_face(f0));
    const int n = waypoints(rng);
    for (int w = 0; w < n; ++w) tube.path.push_back({inner(rng), inner(rng), inner(rng)});
    tube.path.push_back(on_face(f1));
    tubes.push_back(std::move(tube));
  }
  return phantom_from_tubes({cfg.size, cfg.size, cfg.size}, std::move(tubes), seed);
}

// Two straight tubes running along x, separated by `surface_gap` background
// voxels. The canonical false-merge scene.
inline VesselPhantom make_two_tube_phantom(std::int64_t size = 48, double radius = 3.0,
                                           double surface_gap = 4.0, std::uint64_t seed = 0) {
  const double c = static_cast<double>(size - 1) / 2.0;
  const double off = radius + surface_gap / 2.0;
  const double end = static_cast<double>(size - 1);
  std::vector<Tube> tubes{{{{c, c - off, 0.0}, {c, c - off, end}}, radius},
                          {{{c, c + off, 0.0}, {c, c + off, end}}, radius}};
  return phantom_from_tubes({size, size, size}, std::move(tubes), seed);
}

// ---------------------------------------------------------------------------
// Error injection

enum class ErrorKind { false_merge, false_break };

inline std::string_view to_string(ErrorKind k) {
  return k == ErrorKind::false_merge ? "false_merge" : "false_break";
}

struct ErrorSite {
  std::int64_t error_id = 0;
  ErrorKind kind = ErrorKind::false_merge;
  Box bbox;
  std::vector<std::uint8_t> gt_patch;  // ground truth inside bbox, z,y,x order
  bool fixed = false;
};

struct InjectionConfig {
  double bridge_radius = 2.0;
  double max_gap = 10.0;
  double slab_thickness = 4.0;
  std::int64_t site_margin = 5;  // min background spacing around each site bbox
  std::int64_t border_margin = 6;
  bool allow_partial = false;
};

struct InjectionResult {
  Volume<std::uint8_t> corrupted;
  std::vector<ErrorSite> errors;
  int merges_placed = 0;
  int breaks_placed = 0;
};

namespace detail {

struct CenterlineSample {
  Vec3 p;
  Vec3 tangent;
  std::size_t tube = 0;
  double clearance = 0;  // distance to the nearest polyline vertex
};

inline std::vector<CenterlineSample> sample_centerlines(std::span<const Tube> tubes, double step) {
  std::vector<CenterlineSample> out;
  for (std::size_t t = 0; t < tubes.size(); ++t) {
    const auto& path = tubes[t].path;
    for (std::size_t k = 0; k + 1 < path.size(); ++k) {
      const Vec3 d = path[k + 1] - path[k];
      const double len = d.norm();
      if (len <= 0) continue;
      const Vec3 dir = d * (1.0 / len);
      for (double s = 0; s < len; s += step)
        out.push_back({path[k] + dir * s, dir, t, std::min(s, len - s)});
    }
  }
  return out;
}

inline bool inside_margin(const Vec3& p, const Shape& s, double m) {
  return p.z >= m && p.y >= m && p.x >= m && p.z <= static_cast<double>(s.z - 1) - m &&
         p.y <= static_cast<double>(s.y - 1) - m && p.x <= static_cast<double>(s.x - 1) - m;
}

inline Box bbox_of(std::span<const Voxel> voxels) {
  Box b = Box::of(voxels.front());
  for (const auto& v : voxels) b.extend(v);
  return b;
}

}  // namespace detail

// Adds false merges (bridging cylinders across narrow gaps between two
// tubes) and false breaks (4-voxel slabs cut out of a tube) to the ground
// truth. Every site changes the local topology and sites are separated by
// at least 2 * site_margin background voxels.
inline InjectionResult inject_errors(const VesselPhantom& ph, int k_merges, int k_breaks,
                                     std::uint64_t seed, const InjectionConfig& cfg = {}) {
  if (k_merges < 0 || k_breaks < 0) throw ValidationError("error counts must be non-negative");
  const Volume<std::uint8_t>& gt = ph.gt;
  const Shape shape = gt.shape();
  InjectionResult res{gt, {}, 0, 0};
  if (k_merges == 0 && k_breaks == 0) return res;

  std::mt19937_64 rng(mix_seed(seed, 2));
  const auto samples = detail::sample_centerlines(ph.tubes, 1.0);
  const double border = static_cast<double>(cfg.border_margin);

  auto separated = [&](const Box& b) {
    for (const auto& e : res.errors)
      if (b.dilated(cfg.site_margin).intersects(e.bbox.dilated(cfg.site_margin))) return false;
    return true;
  };
  auto changes_topology = [&](const Volume<std::uint8_t>& candidate, const Box& b) {
    const auto before = local_topology(gt, b);
    const auto after = local_topology(candidate, b);
    return topology_diff(before, after).classification != TopologyChange::none;
  };
  auto record = [&](ErrorKind kind, const Box& b) {
    ErrorSite site;
    site.error_id = static_cast<std::int64_t>(res.errors.size()) + 1;
    site.kind = kind;
    site.bbox = b;
    site.gt_patch = extract_box(gt, b);
    res.errors.push_back(std::move(site));
  };

  // Merges: candidate point pairs on distinct tubes with a surface gap in
  // [1, max_gap]; closest pairs first, random order among equal gaps.
  if (k_merges > 0) {
    const auto labels = connected_components(gt, Connectivity::six, 1);
    auto comp = [&](const Vec3& p) {
      const Voxel v = p.rounded();
      return shape.contains(v) ? labels.labels[v] : 0u;
    };
    struct Pair {
      double d;
      double tie;
      bool cross;
      Vec3 a, b;
    };
    std::vector<Pair> pairs;
    std::uniform_real_distribution<double> tie(0.0, 1.0);
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const auto& si = samples[i];
      if (!detail::inside_margin(si.p, shape, border)) continue;
      // Closest partner on every other tube.
      std::vector<std::pair<double, std::size_t>> best(ph.tubes.size(), {1e300, 0});
      for (std::size_t j = 0; j < samples.size(); ++j) {
        const auto& sj = samples[j];
        if (sj.tube <= si.tube) continue;
        const double d = (si.p - sj.p).norm();
        if (d < best[sj.tube].first) best[sj.tube] = {d, j};
      }
      for (std::size_t t = 0; t < best.size(); ++t) {
        if (best[t].first > 1e299) continue;
        const auto& sj = samples[best[t].second];
        const double r = ph.tubes[si.tube].radius + ph.tubes[t].radius;
        const double gap = best[t].first - r;
        if (gap < 1.0 || gap > cfg.max_gap) continue;
        if (!detail::inside_margin(sj.p, shape, border)) continue;
        const auto ca = comp(si.p), cb = comp(sj.p);
        pairs.push_back({std::round(best[t].first * 4) / 4, tie(rng), ca != cb, si.p, sj.p});
      }
    }
    std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
      if (a.cross != b.cross) return a.cross;
      if (a.d != b.d) return a.d < b.d;
      return a.tie < b.tie;
    });
    for (const auto& p : pairs) {
      if (res.merges_placed == k_merges) break;
      Volume<std::uint8_t> trial = res.corrupted;
      auto added = stamp_segment(trial, p.a, p.b, cfg.bridge_radius, 1);
      if (added.empty()) continue;
      const Box b = detail::bbox_of(added);
      if (!separated(b) || !changes_topology(trial, b)) continue;
      res.corrupted = std::move(trial);
      record(ErrorKind::false_merge, b);
      ++res.merges_placed;
    }
  }

  // Breaks: a slab of the tube cross-section, away from bends and from
  // every other tube.
  if (k_breaks > 0) {
    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    const double half = cfg.slab_thickness / 2.0;
    for (std::size_t idx : order) {
      if (res.breaks_placed == k_breaks) break;
      const auto& s = samples[idx];
      const double r = ph.tubes[s.tube].radius;
      if (s.clearance < r + 3 || !detail::inside_margin(s.p, shape, border)) continue;
      bool isolated = true;
      for (const auto& o : samples) {
        if (o.tube != s.tube && (o.p - s.p).norm() <= r + ph.tubes[o.tube].radius + 4) {
          isolated = false;
          break;
        }
      }
      if (!isolated) continue;

      const double cut = r + 1.5;
      std::vector<Voxel> removed;
      Volume<std::uint8_t> trial = res.corrupted;
      const Box scan = Box::of(s.p.rounded()).dilated(static_cast<std::int64_t>(std::ceil(cut + half)));
      const Box clamped = scan.clamped(shape);
      for (std::int64_t z = clamped.min.z; z <= clamped.max.z; ++z)
        for (std::int64_t y = clamped.min.y; y <= clamped.max.y; ++y)
          for (std::int64_t x = clamped.min.x; x <= clamped.max.x; ++x) {
            const Vec3 q = Vec3::of({z, y, x}) - s.p;
            const double along = q.dot(s.tangent);
            if (along < -half || along >= half) continue;
            const double perp = (q - s.tangent * along).norm();
            if (perp <= cut && gt.at(z, y, x) && trial.at(z, y, x)) {
              trial.at(z, y, x) = 0;
              removed.push_back({z, y, x});
            }
          }
      if (removed.empty()) continue;
      const Box b = detail::bbox_of(removed);
      if (!separated(b) || !changes_topology(trial, b)) continue;
      res.corrupted = std::move(trial);
      record(ErrorKind::false_break, b);
      ++res.breaks_placed;
    }
  }

  if (!cfg.allow_partial && (res.merges_placed < k_merges || res.breaks_placed < k_breaks)) {
    throw ValidationError("could only place " + std::to_string(res.merges_placed) + "/" +
                          std::to_string(k_merges) + " merges and " +
                          std::to_string(res.breaks_placed) + "/" + std::to_string(k_breaks) +
                          " breaks");
  }
  return res;
}

// ---------------------------------------------------------------------------
// Synthetic uncertainty

inline constexpr double kBlobPeak = 0.8;
inline constexpr double kBlobSigma = 3.0;

inline Vec3 box_center(const Box& b) {
  return {(b.min.z + b.max.z) / 2.0, (b.min.y + b.max.y) / 2.0, (b.min.x + b.max.x) / 2.0};
}

// Each site is covered with probability `coverage`; covered sites get a
// Gaussian blob (peak 0.8, sigma 3) at the voxel nearest their bbox center.
// Half-normal background noise is added everywhere and the result clamped
// to [0,1].
inline Volume<float> synth_uncertainty(std::span<const ErrorSite> errors, const Shape& shape,
                                       double coverage, double noise_sigma, std::uint64_t seed,
                                       std::vector<bool>* covered_out = nullptr) {
  if (!(coverage >= 0.0 && coverage <= 1.0)) throw ValidationError("coverage must be in [0,1]");
  if (!(noise_sigma >= 0.0)) throw ValidationError("noise sigma must be non-negative");
  std::vector<double> acc(static_cast<std::size_t>(shape.voxels()), 0.0);
  Volume<float> unc(shape, 0.0f);
  std::vector<bool> covered;
  for (const auto& e : errors) {
    const bool hit = unit_hash(seed, 3, static_cast<std::uint64_t>(e.error_id)) < coverage;
    covered.push_back(hit);
    if (!hit) continue;
    const Vec3 c = Vec3::of(box_center(e.bbox).rounded());
    const auto reach = static_cast<std::int64_t>(std::ceil(4 * kBlobSigma));
    const Box win = Box::of(c.rounded()).dilated(reach).clamped(shape);
    for (std::int64_t z = win.min.z; z <= win.max.z; ++z)
      for (std::int64_t y = win.min.y; y <= win.max.y; ++y)
        for (std::int64_t x = win.min.x; x <= win.max.x; ++x) {
          const Vec3 d = Vec3::of({z, y, x}) - c;
          acc[unc.index(z, y, x)] += kBlobPeak * std::exp(-d.dot(d) / (2 * kBlobSigma * kBlobSigma));
        }
  }
  std::mt19937_64 rng(mix_seed(seed, 4));
  std::normal_distribution<double> noise(0.0, noise_sigma > 0 ? noise_sigma : 1.0);
  for (std::size_t i = 0; i < acc.size(); ++i) {
    double v = acc[i];
    if (noise_sigma > 0) v += std::abs(noise(rng));
    unc.data()[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
  }
  if (covered_out) *covered_out = std::move(covered);
  return unc;
}

// ---------------------------------------------------------------------------
// Datasets

struct SynthConfig {
  VesselConfig vessels;
  int merges = 3;
  int breaks = 3;
  double coverage = 0.95;
  double noise_sigma = 0.05;
  InjectionConfig injection;
};

struct SynthDataset {
  Volume<float> raw;
  Volume<std::uint8_t> gt_seg;
  Volume<std::uint8_t> corrupted_seg;
  Volume<float> unc;
  std::vector<ErrorSite> errors;
  std::vector<bool> covered;
  std::uint64_t seed = 0;
};

inline SynthDataset assemble_dataset(VesselPhantom ph, const SynthConfig& cfg, std::uint64_t seed) {
  auto inj = inject_errors(ph, cfg.merges, cfg.breaks, seed, cfg.injection);
  SynthDataset ds;
  ds.unc = synth_uncertainty(inj.errors, ph.gt.shape(), cfg.coverage, cfg.noise_sigma, seed,
                             &ds.covered);
  ds.raw = std::move(ph.raw);
  ds.gt_seg = std::move(ph.gt);
  ds.corrupted_seg = std::move(inj.corrupted);
  ds.errors = std::move(inj.errors);
  ds.seed = seed;
  return ds;
}

inline SynthDataset make_synth_dataset(const SynthConfig& cfg, std::uint64_t seed) {
  return assemble_dataset(generate_vessels(cfg.vessels, seed), cfg, seed);
}

inline DatasetTriplet to_triplet(const SynthDataset& ds, std::string id) {
  return {ds.raw, ds.corrupted_seg, ds.unc, std::move(id)};
}

inline nlohmann::json errors_to_json(std::span<const ErrorSite> errors) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& e : errors) {
    arr.push_back({{"error_id", e.error_id},
                   {"kind", std::string(to_string(e.kind))},
                   {"bbox",
                    {{"min", {e.bbox.min.z, e.bbox.min.y, e.bbox.min.x}},
                     {"max", {e.bbox.max.z, e.bbox.max.y, e.bbox.max.x}}}},
                   {"gt_patch", e.gt_patch},
                   {"fixed", e.fixed}});
  }
  return arr;
}

inline std::vector<ErrorSite> errors_from_json(const nlohmann::json& arr) {
  std::vector<ErrorSite> out;
  try {
    for (const auto& j : arr) {
      ErrorSite e;
      e.error_id = j.at("error_id").get<std::int64_t>();
      const auto kind = j.at("kind").get<std::string>();
      if (kind != "false_merge" && kind != "false_break")
        throw ValidationError("unknown error kind '" + kind + "'");
      e.kind = kind == "false_merge" ? ErrorKind::false_merge : ErrorKind::false_break;
      e.bbox = {voxel_from_json(j.at("bbox").at("min")), voxel_from_json(j.at("bbox").at("max"))};
      e.gt_patch = j.at("gt_patch").get<std::vector<std::uint8_t>>();
      e.fixed = j.value("fixed", false);
      if (e.gt_patch.size() != static_cast<std::size_t>(e.bbox.extent().voxels()))
        throw ValidationError("gt_patch size does not match bbox");
      out.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed error list: ") + e.what());
  }
  return out;
}

// Writes raw/seg/unc (seg is the corrupted segmentation) plus gt.vqh and
// errors.json.
inline void write_synth_dataset(const SynthDataset& ds, const fs::path& dir) {
  write_dataset(to_triplet(ds, dir.filename().string()), dir);
  write_volume(ds.gt_seg, dir / "gt.vqh");
  nlohmann::json meta{{"seed", ds.seed}, {"errors", errors_to_json(ds.errors)}};
  detail::write_file(dir / "errors.json", meta.dump(2) + "\n");
}

inline SynthDataset read_synth_dataset(const fs::path& dir) {
  SynthDataset ds;
  auto t = read_dataset(dir);
  ds.raw = expect_dtype<float>(t.raw, "raw");
  ds.corrupted_seg = std::move(t.seg);
  ds.unc = std::move(t.unc);
  ds.gt_seg = read_volume_as<std::uint8_t>(dir / "gt.vqh", "ground truth");
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(detail::read_file(dir / "errors.json"));
    ds.seed = meta.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed errors.json: ") + e.what());
  }
  ds.errors = errors_from_json(meta.at("errors"));
  return ds;
}

// ---------------------------------------------------------------------------
// Simulated curators

enum class CuratorMode { guided, unguided };

inline std::string_view to_string(CuratorMode m) {
  return m == CuratorMode::guided ? "guided" : "unguided";
}

inline CuratorMode parse_curator_mode(std::string_view s) {
  if (s == "guided") return CuratorMode::guided;
  if (s == "unguided") return CuratorMode::unguided;
  throw ValidationError("mode must be guided or unguided, got '" + std::string(s) + "'");
}

struct CuratorParams {
  double p_detect = 0.7;
  double stop_fraction = 0.6;
  std::int64_t chunk = 32;
  std::int64_t detect_dilation = 3;
  std::optional<std::int64_t> max_inspections;  // guided budget; unlimited when unset

  void validate() const {
    if (!(p_detect >= 0.0 && p_detect <= 1.0)) throw ValidationError("p_detect must be in [0,1]");
    if (!(stop_fraction >= 0.0 && stop_fraction <= 1.0))
      throw ValidationError("stop_fraction must be in [0,1]");
    if (chunk < 1) throw ValidationError("chunk size must be positive");
    if (detect_dilation < 0) throw ValidationError("detection dilation must be non-negative");
  }
};

struct CurationResult {
  CuratorMode mode = CuratorMode::guided;
  double recall = 0.0;
  std::int64_t inspections = 0;
  std::int64_t corrections = 0;
  std::uint64_t seed = 0;
};

// Fraction of error sites whose bbox matches ground truth exactly.
inline double evaluate_recall(const Volume<std::uint8_t>& corrected, const SynthDataset& ds) {
  if (corrected.shape() != ds.gt_seg.shape()) {
    throw ValidationError("corrected segmentation shape " + to_string(corrected.shape()) +
                          " does not match ground truth " + to_string(ds.gt_seg.shape()));
  }
  if (ds.errors.empty()) return 1.0;
  std::size_t fixed = 0;
  for (const auto& e : ds.errors) fixed += box_equal(corrected, ds.gt_seg, e.bbox);
  return static_cast<double>(fixed) / static_cast<double>(ds.errors.size());
}

// Guided: walk regions in rank order; an error is found when its bbox
// (dilated) meets the region bbox. Unguided: walk shuffled chunks and give up
// after stop_fraction of them; each chunk/error encounter is detected with
// probability p_detect. Repairs restore ground truth exactly.
inline CurationResult simulate_curator(CuratorMode mode, const SynthDataset& ds,
                                       const RegionSet* regions, const CuratorParams& params,
                                       std::uint64_t seed) {
  params.validate();
  CurationResult res{mode, 0.0, 0, 0, seed};
  Volume<std::uint8_t> work = ds.corrupted_seg;
  std::vector<bool> fixed(ds.errors.size(), false);

  auto repair = [&](std::size_t k) {
    const auto& e = ds.errors[k];
    paste_box(work, e.bbox, std::span<const std::uint8_t>(e.gt_patch));
    fixed[k] = true;
    ++res.corrections;
  };

  if (mode == CuratorMode::guided) {
    if (!regions) throw ValidationError("guided curation requires an extracted region set");
    if (regions->shape != ds.corrupted_seg.shape())
      throw ValidationError("region set shape does not match dataset");
    for (const auto& r : regions->regions) {
      if (params.max_inspections && res.inspections >= *params.max_inspections) break;
      ++res.inspections;
      for (std::size_t k = 0; k < ds.errors.size(); ++k) {
        if (!fixed[k] && ds.errors[k].bbox.dilated(params.detect_dilation).intersects(r.bbox))
          repair(k);
      }
    }
  } else {
    const Shape s = ds.corrupted_seg.shape();
    std::vector<Box> chunks;
    for (std::int64_t z = 0; z < s.z; z += params.chunk)
      for (std::int64_t y = 0; y < s.y; y += params.chunk)
        for (std::int64_t x = 0; x < s.x; x += params.chunk)
          chunks.push_back(Box{{z, y, x}, {z + params.chunk - 1, y + params.chunk - 1,
                                           x + params.chunk - 1}}
                               .clamped(s));
    std::vector<std::size_t> order(chunks.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(mix_seed(seed, 5));
    std::shuffle(order.begin(), order.end(), rng);
    const auto budget = static_cast<std::size_t>(
        std::ceil(params.stop_fraction * static_cast<double>(chunks.size()) - 1e-9));
    for (std::size_t n = 0; n < std::min(budget, order.size()); ++n) {
      const std::size_t c = order[n];
      ++res.inspections;
      for (std::size_t k = 0; k < ds.errors.size(); ++k) {
        if (fixed[k] || !ds.errors[k].bbox.intersects(chunks[c])) continue;
        // Keyed on (chunk, error) so outcomes are monotone in p_detect.
        if (unit_hash(seed, 1000 + c, static_cast<std::uint64_t>(ds.errors[k].error_id)) <
            params.p_detect)
          repair(k);
      }
    }
  }
  res.recall = evaluate_recall(work, ds);
  return res;
}

}  // namespace uqcure
