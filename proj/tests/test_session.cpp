#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include <unistd.h>

#include "uqcure/regions.hpp"
#include "uqcure/session.hpp"
#include "uqcure/synth.hpp"

using namespace uqcure;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("uqcure_test_session_" + std::to_string(::getpid())) / name;
  fs::create_directories(p.parent_path());
  return p;
}

// Original segmentation with the surviving (not undone) edits re-applied
// from scratch; shares nothing with JournalFold.
Volume<std::uint8_t> replay_oracle(Volume<std::uint8_t> seg, const std::vector<EditOp>& journal) {
  std::vector<const EditOp*> live;
  for (const auto& op : journal) {
    if (op.kind == EditKind::paint || op.kind == EditKind::erase) live.push_back(&op);
    if (op.kind == EditKind::undo) live.pop_back();
  }
  for (const EditOp* op : live)
    for (const auto& v : op->voxels) seg[v] = op->kind == EditKind::paint ? 1 : 0;
  return seg;
}

// Three separated uncertainty blocks -> three regions, plus a simple seg.
DatasetTriplet small_triplet(Shape s = {20, 20, 20}) {
  Volume<float> unc(s);
  auto block = [&](Voxel lo, std::int64_t e, float v) {
    for (std::int64_t z = 0; z < e; ++z)
      for (std::int64_t y = 0; y < e; ++y)
        for (std::int64_t x = 0; x < e; ++x) unc.at(lo.z + z, lo.y + y, lo.x + x) = v;
  };
  block({1, 1, 1}, 3, 0.9f);
  block({8, 8, 8}, 3, 0.8f);
  block({14, 14, 14}, 3, 0.7f);
  Volume<std::uint8_t> seg(s);
  for (std::int64_t x = 0; x < s.x; ++x) seg.at(10, 10, x) = 1;
  return {Volume<float>(s, 0.5f), seg, unc, "t"};
}

CurationSession open_small(std::int64_t* clock = nullptr) {
  auto t = small_triplet();
  auto regions = extract_regions(t.unc, {}, t.id);
  Clock c = [clock]() { return clock ? (*clock)++ : std::int64_t{1000}; };
  return CurationSession::open(std::move(t), std::move(regions), c);
}

// Two-tube phantom joined by a straight 5-voxel bridge along y.
struct BridgeScene {
  DatasetTriplet triplet;
  std::vector<Voxel> bridge;
  RegionSet regions;
};

BridgeScene bridge_scene() {
  auto ph = make_two_tube_phantom(33, 2.0, 5.0, 1);
  auto seg = ph.gt;
  const std::int64_t c = 16;
  std::vector<Voxel> bridge;
  for (auto y = static_cast<std::int64_t>(ph.tubes[0].path[0].y);
       y < static_cast<std::int64_t>(ph.tubes[1].path[0].y); ++y) {
    if (!seg.at(c, y, c)) bridge.push_back({c, y, c});
  }
  for (const auto& v : bridge) seg[v] = 1;
  Volume<float> unc(seg.shape());
  for (const auto& v : bridge)
    for (std::int64_t dz = -1; dz <= 1; ++dz)
      for (std::int64_t dx = -1; dx <= 1; ++dx) unc.at(v.z + dz, v.y, v.x + dx) = 0.8f;
  DatasetTriplet t{ph.raw, seg, unc, "bridge"};
  auto regions = extract_regions(t.unc, {}, t.id);
  return {std::move(t), std::move(bridge), std::move(regions)};
}

}  // namespace

TEST(OpenSession, CursorAtRankOne) {
  auto s = open_small();
  EXPECT_EQ(s.regions().regions.size(), 3u);
  EXPECT_EQ(s.cursor(), 1);
  EXPECT_TRUE(s.journal().empty());
  EXPECT_EQ(s.working_seg(), s.triplet().seg);
  for (const auto& r : s.regions().regions) EXPECT_EQ(r.status, RegionStatus::pending);
}

TEST(OpenSession, HundredCubeSynthDataset) {
  SynthConfig cfg;
  auto ds = make_synth_dataset(cfg, 7);
  auto t = to_triplet(ds, "synth");
  auto regions = extract_regions(t.unc, {}, t.id);
  ASSERT_FALSE(regions.empty());
  auto s = CurationSession::open(std::move(t), std::move(regions));
  EXPECT_EQ(s.cursor(), 1);
}

TEST(OpenSession, EmptyRegionSet) {
  auto t = small_triplet();
  auto regions = extract_regions(Volume<float>(t.seg.shape()), {}, t.id);
  auto s = CurationSession::open(t, regions);
  EXPECT_FALSE(s.cursor());
  const auto p = scratch("empty_regions.vqh");
  s.export_segmentation(p);
  EXPECT_EQ(read_volume_as<std::uint8_t>(p), t.seg);
}

TEST(OpenSession, ShapeMismatch) {
  auto t = small_triplet();
  auto regions = extract_regions(Volume<float>({10, 20, 20}));
  EXPECT_THROW(CurationSession::open(t, regions), ValidationError);
}

TEST(OpenSession, ResetsStatuses) {
  auto t = small_triplet();
  auto regions = extract_regions(t.unc);
  regions.regions[0].status = RegionStatus::done;
  auto s = CurationSession::open(t, regions);
  EXPECT_EQ(s.regions().regions[0].status, RegionStatus::pending);
}

TEST(ApplyEdit, EraseBridgeIsSplit) {
  auto scene = bridge_scene();
  ASSERT_EQ(scene.bridge.size(), 5u);
  ASSERT_FALSE(scene.regions.empty());
  auto s = CurationSession::open(scene.triplet, scene.regions);
  const auto before = betti_numbers(s.working_seg());
  auto out = s.apply_edit(EditKind::erase, scene.bridge, 1);
  EXPECT_EQ(out.seq, 1);
  EXPECT_EQ(out.local_diff.classification, TopologyChange::split);
  EXPECT_EQ(out.local_diff.d_beta0, 1);
  EXPECT_EQ(s.regions().regions[0].status, RegionStatus::edited);
  EXPECT_EQ(betti_numbers(s.working_seg()).beta0, before.beta0 + 1);
}

TEST(ApplyEdit, PaintForegroundIsNoOp) {
  auto s = open_small();
  std::vector<Voxel> vs{{10, 10, 3}, {10, 10, 4}, {10, 10, 5}};
  auto out = s.apply_edit(EditKind::paint, vs);
  EXPECT_EQ(s.journal().back().prev_values, (std::vector<std::uint8_t>{1, 1, 1}));
  EXPECT_EQ(s.working_seg(), s.triplet().seg);
  EXPECT_EQ(out.local_diff.classification, TopologyChange::none);
}

TEST(ApplyEdit, OutOfBoundsRejectedAtomically) {
  auto s = open_small();
  const auto seg = s.working_seg();
  std::vector<Voxel> vs{{1, 1, 1}, {-1, 0, 0}};
  EXPECT_THROW(s.apply_edit(EditKind::paint, vs, 1), ValidationError);
  EXPECT_TRUE(s.journal().empty());
  EXPECT_EQ(s.working_seg(), seg);
  EXPECT_EQ(s.regions().regions[0].status, RegionStatus::pending);
  std::vector<Voxel> far{{0, 0, 20}};
  EXPECT_THROW(s.apply_edit(EditKind::erase, far), ValidationError);
  EXPECT_THROW(s.apply_edit(EditKind::erase, std::vector<Voxel>{}), ValidationError);
  EXPECT_THROW(s.apply_edit(EditKind::erase, std::vector<Voxel>{{0, 0, 0}}, 99), NotFoundError);
  EXPECT_THROW(s.apply_edit(EditKind::done, std::vector<Voxel>{{0, 0, 0}}), ValidationError);
  EXPECT_TRUE(s.journal().empty());
}

TEST(ApplyEdit, RecordsOpFields) {
  std::int64_t t = 500;
  auto s = open_small(&t);
  std::vector<Voxel> vs{{0, 0, 0}, {0, 0, 1}};
  s.apply_edit(EditKind::paint, vs, 2);
  const auto& op = s.journal().back();
  EXPECT_EQ(op.seq, 1);
  EXPECT_EQ(op.timestamp_ms, 500);
  EXPECT_EQ(op.region_id, 2);
  EXPECT_EQ(op.kind, EditKind::paint);
  EXPECT_EQ(op.voxels, vs);
  EXPECT_EQ(op.prev_values, (std::vector<std::uint8_t>{0, 0}));
  EXPECT_EQ(op.new_value, 1);
}

TEST(Undo, PaintThenUndo) {
  auto s = open_small();
  const auto original = s.working_seg();
  s.apply_edit(EditKind::paint, std::vector<Voxel>{{2, 2, 2}, {2, 2, 3}});
  EXPECT_NE(s.working_seg(), original);
  EXPECT_EQ(s.undo(), 2);
  EXPECT_EQ(s.working_seg(), original);
  EXPECT_EQ(s.journal().back().kind, EditKind::undo);
  EXPECT_TRUE(s.journal().back().voxels.empty());
}

TEST(Undo, PaintEraseUndoUndo) {
  auto s = open_small();
  const auto original = s.working_seg();
  s.apply_edit(EditKind::paint, std::vector<Voxel>{{2, 2, 2}});
  s.apply_edit(EditKind::erase, std::vector<Voxel>{{2, 2, 2}, {10, 10, 10}});
  s.undo();
  s.undo();
  EXPECT_EQ(s.working_seg(), original);
  EXPECT_FALSE(s.can_undo());
  EXPECT_THROW(s.undo(), StateError);
}

TEST(Undo, FreshSession) {
  auto s = open_small();
  EXPECT_THROW(s.undo(), StateError);
  EXPECT_TRUE(s.journal().empty());
}

TEST(Undo, RepeatedVoxelInOneOp) {
  auto s = open_small();
  const auto original = s.working_seg();
  s.apply_edit(EditKind::paint, std::vector<Voxel>{{3, 3, 3}, {3, 3, 3}});
  s.undo();
  EXPECT_EQ(s.working_seg(), original);
}

TEST(Undo, DoneIsNotUndoable) {
  auto s = open_small();
  s.mark_done(1);
  EXPECT_THROW(s.undo(), StateError);
}

TEST(MarkDone, AdvancesCursor) {
  auto s = open_small();
  EXPECT_EQ(s.mark_done(1), 2);
  EXPECT_EQ(s.cursor(), 2);
  EXPECT_EQ(s.regions().regions[0].status, RegionStatus::done);
  EXPECT_EQ(s.journal().back().kind, EditKind::done);
  EXPECT_EQ(s.journal().back().region_id, 1);
}

TEST(MarkDone, LastReturnsNone) {
  auto s = open_small();
  EXPECT_EQ(s.mark_done(2), 1);
  EXPECT_EQ(s.mark_done(1), 3);
  EXPECT_EQ(s.mark_done(3), std::nullopt);
  EXPECT_EQ(s.n_done(), 3);
}

TEST(MarkDone, Errors) {
  auto s = open_small();
  s.mark_done(1);
  const auto n = s.journal().size();
  EXPECT_THROW(s.mark_done(1), StateError);
  EXPECT_THROW(s.mark_done(0), NotFoundError);
  EXPECT_THROW(s.mark_done(4), NotFoundError);
  EXPECT_EQ(s.journal().size(), n);
}

TEST(MarkDone, DoneIsTerminal) {
  auto s = open_small();
  s.mark_done(1);
  s.apply_edit(EditKind::paint, std::vector<Voxel>{{2, 2, 2}}, 1);
  EXPECT_EQ(s.regions().regions[0].status, RegionStatus::done);
}

TEST(Export, NoEditsIsByteIdentical) {
  auto s = open_small();
  const auto p = scratch("noedit.vqh");
  s.export_segmentation(p);
  EXPECT_EQ(detail::read_file(payload_path_for(p)), encode_payload(s.triplet().seg));
  EXPECT_TRUE(fs::exists(journal_path_for(p)));
  EXPECT_TRUE(read_journal(journal_path_for(p)).empty());
}

TEST(Export, AfterBridgeEraseBetaZeroUp) {
  auto scene = bridge_scene();
  auto s = CurationSession::open(scene.triplet, scene.regions);
  s.apply_edit(EditKind::erase, scene.bridge, 1);
  const auto p = scratch("bridge.vqh");
  s.export_segmentation(p);
  auto out = read_volume_as<std::uint8_t>(p);
  EXPECT_EQ(betti_numbers(out).beta0, betti_numbers(scene.triplet.seg).beta0 + 1);
  EXPECT_EQ(replay_journal(scene.triplet.seg, read_journal(journal_path_for(p))), out);
}

TEST(Journal, RandomOpsReplayDeterminism) {
  std::mt19937_64 rng(42);
  std::int64_t clock = 0;
  auto s = open_small(&clock);
  const auto original = s.triplet().seg;
  std::uniform_int_distribution<std::int64_t> coord(0, 19);
  for (int i = 0; i < 300; ++i) {
    const auto pick = rng() % 10;
    if (pick < 2 && s.can_undo()) {
      s.undo();
    } else {
      std::vector<Voxel> vs(1 + rng() % 8);
      for (auto& v : vs) v = {coord(rng), coord(rng), coord(rng)};
      const auto rid = rng() % 2 ? std::optional<std::int64_t>(1 + rng() % 3) : std::nullopt;
      s.apply_edit(pick < 6 ? EditKind::paint : EditKind::erase, vs, rid);
    }
    ASSERT_EQ(replay_journal(original, s.journal()), s.working_seg()) << "op " << i;
    ASSERT_EQ(replay_oracle(original, s.journal()), s.working_seg()) << "op " << i;
  }
  for (std::size_t i = 1; i < s.journal().size(); ++i)
    EXPECT_EQ(s.journal()[i].seq, s.journal()[i - 1].seq + 1);
}

TEST(Journal, AppendOnly) {
  auto s = open_small();
  s.apply_edit(EditKind::paint, std::vector<Voxel>{{1, 1, 1}}, 1);
  const auto first = s.journal().front();
  s.apply_edit(EditKind::erase, std::vector<Voxel>{{1, 1, 1}});
  s.undo();
  s.mark_done(1);
  EXPECT_EQ(s.journal().front(), first);
  EXPECT_EQ(s.journal().size(), 4u);
}

TEST(Journal, TextRoundTrip) {
  auto s = open_small();
  s.apply_edit(EditKind::paint, std::vector<Voxel>{{1, 2, 3}}, 1);
  s.apply_edit(EditKind::erase, std::vector<Voxel>{{1, 2, 3}, {4, 5, 6}});
  s.undo();
  s.mark_done(2);
  const auto text = journal_to_text(s.journal());
  EXPECT_EQ(journal_from_text(text), s.journal());
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 4);
}

TEST(Journal, MalformedText) {
  EXPECT_THROW(journal_from_text("{not json}\n"), ValidationError);
  const std::string op =
      R"({"seq":1,"timestamp_ms":0,"region_id":null,"kind":"paint","voxels":[[0,0,0]],"prev_values":[0],"new_value":1})";
  EXPECT_EQ(journal_from_text(op + "\n").size(), 1u);
  EXPECT_THROW(journal_from_text(op + "\n" + op + "\n"), ValidationError);
  EXPECT_THROW(journal_from_text(
                   R"({"seq":1,"timestamp_ms":0,"region_id":null,"kind":"paint","voxels":[[0,0,0]],"prev_values":[],"new_value":1})"),
               ValidationError);
  EXPECT_THROW(journal_from_text(
                   R"({"seq":1,"timestamp_ms":0,"region_id":null,"kind":"smudge","voxels":[],"prev_values":[],"new_value":null})"),
               ValidationError);
}

TEST(Journal, ReplayRejectsBadEntries) {
  Volume<std::uint8_t> seg({2, 2, 2});
  EditOp op;
  op.seq = 1;
  op.kind = EditKind::paint;
  op.voxels = {{2, 0, 0}};
  op.prev_values = {0};
  op.new_value = 1;
  EXPECT_THROW(replay_journal(seg, std::vector<EditOp>{op}), ValidationError);
  EditOp undo;
  undo.seq = 1;
  undo.kind = EditKind::undo;
  EXPECT_THROW(replay_journal(seg, std::vector<EditOp>{undo}), StateError);
}
