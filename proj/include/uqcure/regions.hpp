#pragma once

// Ranked regions of similar uncertainty.
//
// Voxels at or above the threshold are quantized into equal-width bins
// [tau + k*w, tau + (k+1)*w), the last bin closed at 1. Connected voxels
// sharing a bin form a region; small regions are dropped and the rest are
// ranked by (score desc, voxel_count desc, bbox min asc) and numbered 1..N
// in that order.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "uqcure/ccl.hpp"
#include "uqcure/volume.hpp"
#include "uqcure/volume_io.hpp"

namespace uqcure {

struct ExtractionConfig {
  double tau = 0.5;
  double bin_width = 0.1;
  Connectivity connectivity = Connectivity::twentysix;
  std::int64_t min_region_voxels = 10;

  void validate() const {
    if (!(tau >= 0.0 && tau < 1.0)) {
      throw ValidationError("threshold tau must be in [0,1), got " + std::to_string(tau));
    }
    if (!(bin_width > 0.0 && bin_width <= 1.0)) {
      throw ValidationError("bin width must be in (0,1], got " + std::to_string(bin_width));
    }
    if (min_region_voxels < 1) throw ValidationError("min region size must be positive");
  }

  friend bool operator==(const ExtractionConfig&, const ExtractionConfig&) = default;
};

// Slack so that values sitting exactly on a bin edge (0.6 with tau 0.5,
// w 0.1) land in the upper bin despite binary rounding of the quotient.
inline constexpr double kBinEdgeSlack = 1e-9;

inline std::int64_t bin_count(const ExtractionConfig& cfg) {
  const double n = std::ceil((1.0 - cfg.tau) / cfg.bin_width - kBinEdgeSlack);
  return std::max<std::int64_t>(1, static_cast<std::int64_t>(n));
}

// Bin of a selected value u >= tau.
inline std::int64_t bin_index(double u, const ExtractionConfig& cfg, std::int64_t nbins) {
  const auto k = static_cast<std::int64_t>(std::floor((u - cfg.tau) / cfg.bin_width + kBinEdgeSlack));
  return std::clamp<std::int64_t>(k, 0, nbins - 1);
}

enum class RegionStatus { pending, inspected, edited, done };

inline std::string_view to_string(RegionStatus s) {
  switch (s) {
    case RegionStatus::pending: return "pending";
    case RegionStatus::inspected: return "inspected";
    case RegionStatus::edited: return "edited";
    case RegionStatus::done: return "done";
  }
  return "pending";
}

inline RegionStatus parse_region_status(std::string_view s) {
  if (s == "pending") return RegionStatus::pending;
  if (s == "inspected") return RegionStatus::inspected;
  if (s == "edited") return RegionStatus::edited;
  if (s == "done") return RegionStatus::done;
  throw ValidationError("unknown region status '" + std::string(s) + "'");
}

struct UncertaintyRegion {
  std::int64_t region_id = 0;
  std::int64_t voxel_count = 0;
  Box bbox;
  std::array<double, 3> centroid{};
  double score = 0.0;  // max uncertainty
  double mean_uncertainty = 0.0;
  std::int64_t bin_index = 0;
  RegionStatus status = RegionStatus::pending;

  friend bool operator==(const UncertaintyRegion&, const UncertaintyRegion&) = default;
};

struct RegionSet {
  std::string dataset_id;
  ExtractionConfig config;
  Shape shape;
  std::vector<UncertaintyRegion> regions;  // rank order, region_id == position + 1
  Volume<std::uint32_t> label_volume;

  bool empty() const { return regions.empty(); }
  std::optional<double> top_score() const {
    if (regions.empty()) return std::nullopt;
    return regions.front().score;
  }
  const UncertaintyRegion* find(std::int64_t id) const {
    if (id < 1 || id > static_cast<std::int64_t>(regions.size())) return nullptr;
    return &regions[static_cast<std::size_t>(id - 1)];
  }
  UncertaintyRegion* find(std::int64_t id) {
    return const_cast<UncertaintyRegion*>(std::as_const(*this).find(id));
  }
};

// True when `a` ranks strictly ahead of `b`.
inline bool ranks_before(const UncertaintyRegion& a, const UncertaintyRegion& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.voxel_count != b.voxel_count) return a.voxel_count > b.voxel_count;
  return a.bbox.min < b.bbox.min;
}

// Stable: records that tie on every key keep their input order.
inline std::vector<UncertaintyRegion> rank_regions(std::vector<UncertaintyRegion> regions) {
  std::stable_sort(regions.begin(), regions.end(), ranks_before);
  return regions;
}

inline RegionSet extract_regions(const Volume<float>& unc, const ExtractionConfig& cfg = {},
                                 std::string dataset_id = {}, unsigned workers = 0) {
  cfg.validate();
  check_uncertainty_range(unc);

  const auto u = unc.data();
  const std::int64_t nbins = bin_count(cfg);
  // Key is bin + 1 so that 0 stays "unselected". Compared in double to match
  // bin_index() exactly.
  auto key = [&](std::size_t i) -> std::int64_t {
    const double v = u[i];
    if (v < cfg.tau) return 0;
    return bin_index(v, cfg, nbins) + 1;
  };
  auto cc = label_components(unc.shape(), cfg.connectivity, key, workers);

  struct Acc {
    std::int64_t count = 0;
    double sum = 0.0, min = 0.0, max = 0.0;
    double cz = 0.0, cy = 0.0, cx = 0.0;
    Box bbox;
    std::int64_t bin = 0;
  };
  std::vector<Acc> acc(cc.count);
  for (std::size_t i = 0; i < cc.labels.size(); ++i) {
    const auto l = cc.labels[i];
    if (!l) continue;
    Acc& a = acc[l - 1];
    const Voxel p = unc.coord(i);
    const double v = u[i];
    if (a.count == 0) {
      a.bbox = Box::of(p);
      a.min = a.max = v;
      a.bin = key(i) - 1;
    } else {
      a.bbox.extend(p);
      a.min = std::min(a.min, v);
      a.max = std::max(a.max, v);
    }
    ++a.count;
    a.sum += v;
    a.cz += static_cast<double>(p.z);
    a.cy += static_cast<double>(p.y);
    a.cx += static_cast<double>(p.x);
  }

  // Candidates in first-touch label order, then ranked.
  std::vector<UncertaintyRegion> kept;
  for (std::uint32_t l = 0; l < cc.count; ++l) {
    const Acc& a = acc[l];
    if (a.count < cfg.min_region_voxels) continue;
    UncertaintyRegion r;
    r.region_id = static_cast<std::int64_t>(l) + 1;  // provisional: CCL label
    r.voxel_count = a.count;
    r.bbox = a.bbox;
    const double n = static_cast<double>(a.count);
    r.centroid = {a.cz / n, a.cy / n, a.cx / n};
    r.score = a.max;
    r.mean_uncertainty = std::clamp(a.sum / n, a.min, a.max);
    r.bin_index = a.bin;
    kept.push_back(r);
  }
  kept = rank_regions(std::move(kept));

  std::vector<std::uint32_t> remap(static_cast<std::size_t>(cc.count) + 1, 0);
  for (std::size_t rank = 0; rank < kept.size(); ++rank) {
    remap[static_cast<std::size_t>(kept[rank].region_id)] = static_cast<std::uint32_t>(rank + 1);
    kept[rank].region_id = static_cast<std::int64_t>(rank + 1);
  }
  for (auto& l : cc.labels) l = remap[l];

  RegionSet set;
  set.dataset_id = std::move(dataset_id);
  set.config = cfg;
  set.shape = unc.shape();
  set.regions = std::move(kept);
  set.label_volume = Volume<std::uint32_t>(unc.shape(), std::move(cc.labels), unc.meta().spacing);
  return set;
}

struct VolumeScore {
  std::string dataset_id;
  std::optional<double> top_score;  // empty when the volume has no regions
};

// Dataset ids ordered by top region score desc; empty sets last; ties by id.
inline std::vector<std::string> rank_volume_scores(std::vector<VolumeScore> scores) {
  std::sort(scores.begin(), scores.end(), [](const VolumeScore& a, const VolumeScore& b) {
    if (a.top_score.has_value() != b.top_score.has_value()) return a.top_score.has_value();
    if (a.top_score && *a.top_score != *b.top_score) return *a.top_score > *b.top_score;
    return a.dataset_id < b.dataset_id;
  });
  std::vector<std::string> ids;
  for (auto& s : scores) ids.push_back(std::move(s.dataset_id));
  return ids;
}

inline std::vector<std::string> rank_volumes(std::span<const RegionSet> sets) {
  std::vector<VolumeScore> scores;
  for (const auto& s : sets) scores.push_back({s.dataset_id, s.top_score()});
  return rank_volume_scores(std::move(scores));
}

// Binary entropy, in bits, of the foreground fraction across members.
inline Volume<float> ensemble_entropy(std::span<const Volume<std::uint8_t>> members) {
  if (members.size() < 2) {
    throw ValidationError("ensemble entropy needs at least 2 members, got " +
                          std::to_string(members.size()));
  }
  const Shape shape = members.front().shape();
  for (const auto& m : members) {
    if (m.shape() != shape) {
      throw ValidationError("shape mismatch between ensemble members: " + to_string(m.shape()) +
                            " vs " + to_string(shape));
    }
    check_binary(m);
  }
  const std::size_t k = members.size();
  // Entropy only depends on the vote count, so tabulate it once.
  std::vector<float> table(k + 1, 0.0f);
  for (std::size_t c = 1; c < k; ++c) {
    const double p = static_cast<double>(c) / static_cast<double>(k);
    table[c] = static_cast<float>(-p * std::log2(p) - (1.0 - p) * std::log2(1.0 - p));
  }
  Volume<float> out(shape, 0.0f, members.front().meta().spacing);
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) {
    std::size_t votes = 0;
    for (const auto& m : members) votes += m.data()[i];
    o[i] = table[votes];
  }
  return out;
}

// ---------------------------------------------------------------------------
// regions.vqr

inline nlohmann::json to_json(const UncertaintyRegion& r) {
  return {{"region_id", r.region_id},
          {"voxel_count", r.voxel_count},
          {"bbox",
           {{"min", {r.bbox.min.z, r.bbox.min.y, r.bbox.min.x}},
            {"max", {r.bbox.max.z, r.bbox.max.y, r.bbox.max.x}}}},
          {"centroid", {r.centroid[0], r.centroid[1], r.centroid[2]}},
          {"score", r.score},
          {"mean_uncertainty", r.mean_uncertainty},
          {"bin_index", r.bin_index},
          {"status", std::string(to_string(r.status))}};
}

inline Voxel voxel_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 3) throw ValidationError("expected [z,y,x]");
  return {j[0].get<std::int64_t>(), j[1].get<std::int64_t>(), j[2].get<std::int64_t>()};
}

inline UncertaintyRegion region_from_json(const nlohmann::json& j) {
  UncertaintyRegion r;
  r.region_id = j.at("region_id").get<std::int64_t>();
  r.voxel_count = j.at("voxel_count").get<std::int64_t>();
  r.bbox = {voxel_from_json(j.at("bbox").at("min")), voxel_from_json(j.at("bbox").at("max"))};
  const auto& c = j.at("centroid");
  r.centroid = {c.at(0).get<double>(), c.at(1).get<double>(), c.at(2).get<double>()};
  r.score = j.at("score").get<double>();
  r.mean_uncertainty = j.at("mean_uncertainty").get<double>();
  r.bin_index = j.at("bin_index").get<std::int64_t>();
  r.status = parse_region_status(j.value("status", std::string("pending")));
  return r;
}

inline nlohmann::json to_json(const ExtractionConfig& c) {
  return {{"tau", c.tau},
          {"bin_width", c.bin_width},
          {"connectivity", static_cast<int>(c.connectivity)},
          {"min_region_voxels", c.min_region_voxels}};
}

inline ExtractionConfig config_from_json(const nlohmann::json& j) {
  ExtractionConfig c;
  c.tau = j.at("tau").get<double>();
  c.bin_width = j.at("bin_width").get<double>();
  c.connectivity = parse_connectivity(j.at("connectivity").get<int>());
  c.min_region_voxels = j.at("min_region_voxels").get<std::int64_t>();
  c.validate();
  return c;
}

inline fs::path label_volume_path_for(const fs::path& vqr_path) {
  return vqr_path.parent_path() / (vqr_path.stem().string() + "_labels.vqh");
}

inline void write_region_set(const RegionSet& set, const fs::path& vqr_path) {
  const fs::path labels = label_volume_path_for(vqr_path);
  nlohmann::json j;
  j["dataset_id"] = set.dataset_id;
  j["config"] = to_json(set.config);
  j["shape"] = {set.shape.z, set.shape.y, set.shape.x};
  j["label_volume"] = labels.filename().string();
  j["regions"] = nlohmann::json::array();
  for (const auto& r : set.regions) j["regions"].push_back(to_json(r));
  detail::write_file(vqr_path, j.dump(2) + "\n");

  if (set.regions.size() <= 0xFFFF) {
    std::vector<std::uint16_t> narrow(set.label_volume.buffer().begin(),
                                      set.label_volume.buffer().end());
    write_volume(Volume<std::uint16_t>(set.shape, std::move(narrow), set.label_volume.meta().spacing),
                 labels);
  } else {
    write_volume(set.label_volume, labels);
  }
}

inline RegionSet read_region_set(const fs::path& vqr_path) {
  RegionSet set;
  try {
    const auto j = nlohmann::json::parse(detail::read_file(vqr_path));
    set.dataset_id = j.at("dataset_id").get<std::string>();
    set.config = config_from_json(j.at("config"));
    const Voxel s = voxel_from_json(j.at("shape"));
    set.shape = {s.z, s.y, s.x};
    for (const auto& r : j.at("regions")) set.regions.push_back(region_from_json(r));
    const fs::path labels = vqr_path.parent_path() / j.at("label_volume").get<std::string>();
    AnyVolume lv = read_volume(labels);
    std::visit(
        [&](const auto& v) {
          using T = typename std::decay_t<decltype(v)>::value_type;
          if constexpr (std::is_same_v<T, float>) {
            throw ValidationError("region label volume must be an integer volume");
          } else {
            std::vector<std::uint32_t> wide(v.buffer().begin(), v.buffer().end());
            set.label_volume = Volume<std::uint32_t>(v.shape(), std::move(wide), v.meta().spacing);
          }
        },
        lv);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("malformed region file " + vqr_path.string() + ": " + e.what());
  }
  if (set.label_volume.shape() != set.shape) {
    throw ValidationError("region label volume shape does not match region file");
  }
  for (std::size_t i = 0; i < set.regions.size(); ++i) {
    if (set.regions[i].region_id != static_cast<std::int64_t>(i) + 1) {
      throw ValidationError("region ids must be dense and in rank order");
    }
  }
  return set;
}

}  // namespace uqcure
