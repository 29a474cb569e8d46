#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <map>
#include <random>
#include <set>

#include <unistd.h>

#include "oracles.hpp"
#include "uqcure/regions.hpp"

using namespace uqcure;
namespace fs = std::filesystem;

namespace {

void fill_block(Volume<float>& v, Voxel lo, std::int64_t edge, float value) {
  for (std::int64_t z = 0; z < edge; ++z)
    for (std::int64_t y = 0; y < edge; ++y)
      for (std::int64_t x = 0; x < edge; ++x) v.at(lo.z + z, lo.y + y, lo.x + x) = value;
}

Volume<float> random_field(std::mt19937_64& rng, std::int64_t max_edge) {
  std::uniform_int_distribution<std::int64_t> edge(1, max_edge);
  Volume<float> v({edge(rng), edge(rng), edge(rng)});
  // Smooth-ish field: random blobs on a noisy floor, quantized so bin edges
  // and exact 1.0 values occur.
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (auto& x : v.data()) x = static_cast<float>(unit(rng));
  if (unit(rng) < 0.5) {
    for (auto& x : v.data()) x = static_cast<float>(std::round(x * 20.0) / 20.0);
  }
  return v;
}

ExtractionConfig random_config(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  ExtractionConfig c;
  c.tau = std::round(unit(rng) * 18.0) / 20.0;
  c.bin_width = std::max(0.05, std::round(unit(rng) * 10.0) / 20.0);
  c.connectivity = unit(rng) < 0.5 ? Connectivity::six : Connectivity::twentysix;
  c.min_region_voxels = 1 + static_cast<std::int64_t>(unit(rng) * 6);
  return c;
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("uqcure_test_regions_" + std::to_string(::getpid())) / name;
  fs::create_directories(p.parent_path());
  return p;
}

UncertaintyRegion rec(double score, std::int64_t count, Voxel min, std::int64_t id = 0) {
  UncertaintyRegion r;
  r.region_id = id;
  r.score = score;
  r.voxel_count = count;
  r.bbox = {min, min};
  return r;
}

}  // namespace

TEST(ExtractRegions, AllZeroIsEmpty) {
  auto set = extract_regions(Volume<float>({20, 20, 20}));
  EXPECT_TRUE(set.empty());
  EXPECT_FALSE(set.top_score());
  for (auto l : set.label_volume.data()) EXPECT_EQ(l, 0u);
}

TEST(ExtractRegions, SingleBlock) {
  Volume<float> u({20, 20, 20});
  fill_block(u, {5, 6, 7}, 3, 0.8f);
  auto set = extract_regions(u);
  ASSERT_EQ(set.regions.size(), 1u);
  const auto& r = set.regions[0];
  EXPECT_EQ(r.region_id, 1);
  EXPECT_EQ(r.voxel_count, 27);
  EXPECT_FLOAT_EQ(r.score, 0.8f);
  EXPECT_EQ(r.bin_index, 3);
  EXPECT_EQ(r.bbox, (Box{{5, 6, 7}, {7, 8, 9}}));
  EXPECT_DOUBLE_EQ(r.centroid[0], 6.0);
  EXPECT_DOUBLE_EQ(r.centroid[1], 7.0);
  EXPECT_DOUBLE_EQ(r.centroid[2], 8.0);
  EXPECT_EQ(r.status, RegionStatus::pending);
}

TEST(ExtractRegions, TwoBlocksRankedByScore) {
  Volume<float> u({20, 20, 20});
  fill_block(u, {1, 1, 1}, 4, 0.55f);
  fill_block(u, {12, 12, 12}, 3, 0.8f);
  auto set = extract_regions(u);
  ASSERT_EQ(set.regions.size(), 2u);
  EXPECT_FLOAT_EQ(set.regions[0].score, 0.8f);
  EXPECT_EQ(set.regions[0].voxel_count, 27);
  EXPECT_EQ(set.regions[1].voxel_count, 64);
  EXPECT_EQ(set.label_volume.at(13, 13, 13), 1u);
  EXPECT_EQ(set.label_volume.at(2, 2, 2), 2u);
}

TEST(ExtractRegions, AdjacentBinsStaySeparate) {
  Volume<float> u({4, 4, 8});
  fill_block(u, {0, 0, 0}, 4, 0.65f);
  fill_block(u, {0, 0, 4}, 4, 0.75f);
  auto set = extract_regions(u);
  ASSERT_EQ(set.regions.size(), 2u);
  EXPECT_EQ(set.regions[0].bin_index, 2);
  EXPECT_EQ(set.regions[1].bin_index, 1);
}

TEST(ExtractRegions, OneIsInLastBin) {
  Volume<float> u({3, 3, 6});
  fill_block(u, {0, 0, 0}, 3, 1.0f);
  fill_block(u, {0, 0, 3}, 3, 0.95f);
  auto set = extract_regions(u);
  ASSERT_EQ(set.regions.size(), 1u);
  EXPECT_EQ(set.regions[0].bin_index, 4);
  EXPECT_EQ(set.regions[0].voxel_count, 54);
  EXPECT_EQ(bin_count(ExtractionConfig{}), 5);
}

TEST(ExtractRegions, ConfigValidation) {
  Volume<float> u({2, 2, 2});
  for (auto bad : {ExtractionConfig{1.5, 0.1, Connectivity::twentysix, 10},
                   ExtractionConfig{1.0, 0.1, Connectivity::twentysix, 10},
                   ExtractionConfig{-0.1, 0.1, Connectivity::twentysix, 10},
                   ExtractionConfig{0.5, 0.0, Connectivity::twentysix, 10},
                   ExtractionConfig{0.5, 1.1, Connectivity::twentysix, 10},
                   ExtractionConfig{0.5, 0.1, Connectivity::twentysix, 0}}) {
    EXPECT_THROW(extract_regions(u, bad), ValidationError);
  }
  u.at(0, 0, 0) = 1.2f;
  EXPECT_THROW(extract_regions(u), ValidationError);
}

TEST(ExtractRegions, MatchesFloodFillOracle) {
  std::mt19937_64 rng(1234);
  for (int trial = 0; trial < 60; ++trial) {
    auto u = random_field(rng, 16);
    const auto cfg = random_config(rng);
    auto set = extract_regions(u, cfg);
    auto ref = oracle::region_partition(u, cfg.tau, cfg.bin_width, static_cast<int>(cfg.connectivity),
                                        cfg.min_region_voxels);
    ASSERT_TRUE(oracle::same_partition(set.label_volume.buffer(), ref)) << "trial " << trial;
  }
}

TEST(ExtractRegions, RegionInvariants) {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 40; ++trial) {
    auto u = random_field(rng, 20);
    const auto cfg = random_config(rng);
    auto set = extract_regions(u, cfg);
    std::map<std::uint32_t, std::int64_t> counts;
    for (auto l : set.label_volume.data())
      if (l) ++counts[l];
    ASSERT_EQ(counts.size(), set.regions.size());
    for (std::size_t k = 0; k < set.regions.size(); ++k) {
      const auto& r = set.regions[k];
      EXPECT_EQ(r.region_id, static_cast<std::int64_t>(k) + 1);
      EXPECT_EQ(counts[static_cast<std::uint32_t>(r.region_id)], r.voxel_count);
      EXPECT_GE(r.voxel_count, cfg.min_region_voxels);
      EXPECT_LE(cfg.tau, r.mean_uncertainty + 1e-12);
      EXPECT_LE(r.mean_uncertainty, r.score);
      EXPECT_LE(r.score, 1.0);
      EXPECT_TRUE(r.bbox.contains(Voxel{static_cast<std::int64_t>(std::floor(r.centroid[0])),
                                        static_cast<std::int64_t>(std::floor(r.centroid[1])),
                                        static_cast<std::int64_t>(std::floor(r.centroid[2]))}));
      for (int a = 0; a < 3; ++a) {
        EXPECT_GE(r.centroid[a], static_cast<double>(a == 0 ? r.bbox.min.z : a == 1 ? r.bbox.min.y : r.bbox.min.x));
        EXPECT_LE(r.centroid[a], static_cast<double>(a == 0 ? r.bbox.max.z : a == 1 ? r.bbox.max.y : r.bbox.max.x));
      }
      if (k > 0) { EXPECT_FALSE(ranks_before(r, set.regions[k - 1])); }
    }
  }
}

TEST(ExtractRegions, ThresholdMonotonicity) {
  std::mt19937_64 rng(55);
  for (int trial = 0; trial < 30; ++trial) {
    auto u = random_field(rng, 16);
    ExtractionConfig lo, hi;
    lo.tau = 0.3;
    hi.tau = 0.6;
    lo.min_region_voxels = hi.min_region_voxels = 1;
    lo.bin_width = hi.bin_width = 0.1;
    auto a = extract_regions(u, lo), b = extract_regions(u, hi);
    for (std::size_t i = 0; i < u.size(); ++i) {
      if (b.label_volume.data()[i]) { ASSERT_NE(a.label_volume.data()[i], 0u); }
    }
  }
}

TEST(ExtractRegions, DeterministicAcrossWorkers) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    auto u = random_field(rng, 24);
    const auto cfg = random_config(rng);
    auto a = extract_regions(u, cfg, "d", 1);
    for (unsigned w : {2u, 4u, 7u}) {
      auto b = extract_regions(u, cfg, "d", w);
      ASSERT_EQ(a.regions, b.regions);
      ASSERT_EQ(a.label_volume, b.label_volume);
    }
  }
}

TEST(RankRegions, ByScore) {
  auto out = rank_regions({rec(0.6, 10, {0, 0, 0}, 1), rec(0.9, 10, {0, 0, 0}, 2), rec(0.7, 10, {0, 0, 0}, 3)});
  EXPECT_EQ(out[0].region_id, 2);
  EXPECT_EQ(out[1].region_id, 3);
  EXPECT_EQ(out[2].region_id, 1);
}

TEST(RankRegions, SizeTieBreak) {
  auto out = rank_regions({rec(0.8, 27, {0, 0, 0}, 1), rec(0.8, 64, {5, 5, 5}, 2)});
  EXPECT_EQ(out[0].voxel_count, 64);
}

TEST(RankRegions, BboxTieBreakAndStability) {
  auto out = rank_regions({rec(0.8, 27, {0, 0, 5}, 1), rec(0.8, 27, {0, 0, 0}, 2)});
  EXPECT_EQ(out[0].bbox.min, (Voxel{0, 0, 0}));
  auto same = rank_regions({rec(0.8, 27, {0, 0, 0}, 1), rec(0.8, 27, {0, 0, 0}, 2)});
  EXPECT_EQ(same[0].region_id, 1);
  EXPECT_EQ(same[1].region_id, 2);
}

TEST(RankVolumes, Examples) {
  EXPECT_EQ(rank_volume_scores({{"B", 0.3}, {"A", 0.8}}), (std::vector<std::string>{"A", "B"}));
  EXPECT_EQ(rank_volume_scores({{"B", 0.8}, {"A", 0.8}}), (std::vector<std::string>{"A", "B"}));
  EXPECT_EQ(rank_volume_scores({{"A", std::nullopt}, {"B", 0.3}}), (std::vector<std::string>{"B", "A"}));
}

TEST(RankVolumes, FromRegionSets) {
  Volume<float> a({10, 10, 10}), b({10, 10, 10});
  fill_block(a, {0, 0, 0}, 3, 0.6f);
  fill_block(b, {0, 0, 0}, 3, 0.9f);
  std::vector<RegionSet> sets{extract_regions(a, {}, "a"), extract_regions(b, {}, "b"),
                              extract_regions(Volume<float>({10, 10, 10}), {}, "0")};
  EXPECT_EQ(rank_volumes(sets), (std::vector<std::string>{"b", "a", "0"}));
}

TEST(EnsembleEntropy, Examples) {
  Volume<std::uint8_t> a({2, 2, 2}), b({2, 2, 2}), c({2, 2, 2});
  a.at(1, 1, 1) = b.at(1, 1, 1) = c.at(1, 1, 1) = 1;
  std::vector<Volume<std::uint8_t>> same{a, a};
  const auto h_same = ensemble_entropy(same);
  for (auto v : h_same.data()) EXPECT_EQ(v, 0.0f);

  b.at(0, 0, 0) = 1;
  std::vector<Volume<std::uint8_t>> two{a, b};
  auto h2 = ensemble_entropy(two);
  EXPECT_FLOAT_EQ(h2.at(0, 0, 0), 1.0f);
  EXPECT_EQ(h2.at(1, 1, 1), 0.0f);

  std::vector<Volume<std::uint8_t>> three{a, b, c};
  auto h3 = ensemble_entropy(three);
  EXPECT_NEAR(h3.at(0, 0, 0), 0.9183, 1e-4);
}

TEST(EnsembleEntropy, Errors) {
  Volume<std::uint8_t> a({2, 2, 2}), b({2, 2, 3}), c({2, 2, 2}, 2);
  std::vector<Volume<std::uint8_t>> one{a}, mismatch{a, b}, nonbinary{a, c};
  EXPECT_THROW(ensemble_entropy(one), ValidationError);
  EXPECT_THROW(ensemble_entropy(mismatch), ValidationError);
  EXPECT_THROW(ensemble_entropy(nonbinary), ValidationError);
}

TEST(EnsembleEntropy, PermutationAndDuplication) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<Volume<std::uint8_t>> m;
    const std::size_t k = 2 + trial % 4;
    for (std::size_t i = 0; i < k; ++i) {
      Volume<std::uint8_t> v({5, 6, 7});
      for (auto& x : v.data()) x = rng() & 1;
      m.push_back(v);
    }
    const auto base = ensemble_entropy(m);
    for (float h : base.data()) {
      EXPECT_GE(h, 0.0f);
      EXPECT_LE(h, 1.0f);
    }
    auto shuffled = m;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    EXPECT_EQ(ensemble_entropy(shuffled), base);
    auto doubled = m;
    doubled.insert(doubled.end(), m.begin(), m.end());
    EXPECT_EQ(ensemble_entropy(doubled), base);
  }
}

TEST(RegionSetFile, RoundTrip) {
  Volume<float> u({12, 12, 12});
  fill_block(u, {1, 1, 1}, 4, 0.55f);
  fill_block(u, {7, 7, 7}, 3, 0.8f);
  auto set = extract_regions(u, {}, "demo");
  set.regions[1].status = RegionStatus::edited;
  const auto path = scratch("regions.vqr");
  write_region_set(set, path);
  EXPECT_TRUE(fs::exists(label_volume_path_for(path)));
  auto back = read_region_set(path);
  EXPECT_EQ(back.dataset_id, "demo");
  EXPECT_EQ(back.shape, set.shape);
  EXPECT_EQ(back.regions, set.regions);
  EXPECT_EQ(back.label_volume, set.label_volume);
  EXPECT_EQ(back.config.tau, set.config.tau);
  EXPECT_EQ(back.config.connectivity, set.config.connectivity);
}
