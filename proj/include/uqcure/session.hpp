#pragma once

// Curation session: mutable working segmentation plus an append-only edit
// journal. Undo is itself journaled, so folding the journal over the original
// segmentation always reproduces the working state.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "uqcure/regions.hpp"
#include "uqcure/topology.hpp"
#include "uqcure/volume.hpp"
#include "uqcure/volume_io.hpp"

namespace uqcure {

enum class EditKind { paint, erase, done, undo };

inline std::string_view to_string(EditKind k) {
  switch (k) {
    case EditKind::paint: return "paint";
    case EditKind::erase: return "erase";
    case EditKind::done: return "done";
    case EditKind::undo: return "undo";
  }
  return "paint";
}

inline EditKind parse_edit_kind(std::string_view s) {
  if (s == "paint") return EditKind::paint;
  if (s == "erase") return EditKind::erase;
  if (s == "done") return EditKind::done;
  if (s == "undo") return EditKind::undo;
  throw ValidationError("unknown edit kind '" + std::string(s) + "'");
}

inline bool is_voxel_edit(EditKind k) { return k == EditKind::paint || k == EditKind::erase; }

struct EditOp {
  std::int64_t seq = 0;
  std::int64_t timestamp_ms = 0;
  std::optional<std::int64_t> region_id;
  EditKind kind = EditKind::paint;
  std::vector<Voxel> voxels;
  std::vector<std::uint8_t> prev_values;
  std::optional<std::uint8_t> new_value;  // set for paint (1) and erase (0)

  friend bool operator==(const EditOp&, const EditOp&) = default;
};

inline nlohmann::json to_json(const EditOp& op) {
  nlohmann::json voxels = nlohmann::json::array();
  for (const auto& v : op.voxels) voxels.push_back({v.z, v.y, v.x});
  nlohmann::json j;
  j["seq"] = op.seq;
  j["timestamp_ms"] = op.timestamp_ms;
  j["region_id"] = op.region_id ? nlohmann::json(*op.region_id) : nlohmann::json(nullptr);
  j["kind"] = std::string(to_string(op.kind));
  j["voxels"] = std::move(voxels);
  j["prev_values"] = op.prev_values;
  j["new_value"] = op.new_value ? nlohmann::json(*op.new_value) : nlohmann::json(nullptr);
  return j;
}

inline EditOp edit_op_from_json(const nlohmann::json& j) {
  EditOp op;
  op.seq = j.at("seq").get<std::int64_t>();
  op.timestamp_ms = j.at("timestamp_ms").get<std::int64_t>();
  if (!j.at("region_id").is_null()) op.region_id = j.at("region_id").get<std::int64_t>();
  op.kind = parse_edit_kind(j.at("kind").get<std::string>());
  for (const auto& v : j.at("voxels")) op.voxels.push_back(voxel_from_json(v));
  op.prev_values = j.at("prev_values").get<std::vector<std::uint8_t>>();
  if (!j.at("new_value").is_null()) op.new_value = j.at("new_value").get<std::uint8_t>();
  if (op.prev_values.size() != op.voxels.size()) {
    throw ValidationError("journal entry " + std::to_string(op.seq) +
                          ": prev_values length differs from voxels");
  }
  return op;
}

inline std::string journal_to_text(std::span<const EditOp> journal) {
  std::string out;
  for (const auto& op : journal) {
    out += to_json(op).dump();
    out += '\n';
  }
  return out;
}

inline std::vector<EditOp> journal_from_text(const std::string& text) {
  std::vector<EditOp> ops;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      ops.push_back(edit_op_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("malformed journal line " + std::to_string(lineno) + ": " + e.what());
    }
    if (ops.size() > 1 && ops.back().seq <= ops[ops.size() - 2].seq) {
      throw ValidationError("journal seq not strictly increasing at line " +
                            std::to_string(lineno));
    }
  }
  return ops;
}

inline void write_journal(const fs::path& path, std::span<const EditOp> journal) {
  detail::write_file(path, journal_to_text(journal));
}

inline std::vector<EditOp> read_journal(const fs::path& path) {
  return journal_from_text(detail::read_file(path));
}

// Sidecar next to an exported header: out.vqh -> out.journal.jsonl
inline fs::path journal_path_for(const fs::path& header_path) {
  fs::path p = header_path;
  p.replace_extension(".journal.jsonl");
  return p;
}

// Folds journal entries over a segmentation. Undo reverts the most recent
// paint/erase that has not been undone yet, restoring its prev_values in
// reverse order so repeated voxels within one op unwind correctly.
class JournalFold {
 public:
  bool can_undo() const { return !undoable_.empty(); }

  void apply(Volume<std::uint8_t>& seg, std::span<const EditOp> journal, std::size_t i) {
    const EditOp& op = journal[i];
    switch (op.kind) {
      case EditKind::paint:
      case EditKind::erase:
        for (const auto& v : op.voxels) seg[v] = *op.new_value;
        undoable_.push_back(i);
        break;
      case EditKind::undo: {
        if (undoable_.empty()) throw StateError("nothing to undo");
        const EditOp& target = journal[undoable_.back()];
        for (std::size_t k = target.voxels.size(); k-- > 0;)
          seg[target.voxels[k]] = target.prev_values[k];
        undoable_.pop_back();
        break;
      }
      case EditKind::done: break;
    }
  }

 private:
  std::vector<std::size_t> undoable_;
};

inline Volume<std::uint8_t> replay_journal(Volume<std::uint8_t> original,
                                           std::span<const EditOp> journal) {
  JournalFold fold;
  for (std::size_t i = 0; i < journal.size(); ++i) {
    const EditOp& op = journal[i];
    if (is_voxel_edit(op.kind)) {
      for (const auto& v : op.voxels)
        if (!original.shape().contains(v))
          throw ValidationError("journal entry " + std::to_string(op.seq) + " is out of bounds");
      if (!op.new_value) throw ValidationError("journal voxel edit without new_value");
    }
    fold.apply(original, journal, i);
  }
  return original;
}

using Clock = std::function<std::int64_t()>;

inline std::int64_t system_clock_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

struct EditOutcome {
  std::int64_t seq = 0;
  TopologyDiff local_diff;
};

class CurationSession {
 public:
  static CurationSession open(DatasetTriplet triplet, RegionSet regions,
                              Clock clock = system_clock_ms) {
    if (regions.shape != triplet.seg.shape() ||
        (!regions.label_volume.buffer().empty() &&
         regions.label_volume.shape() != triplet.seg.shape())) {
      throw ValidationError("region set was built from a volume of shape " +
                            to_string(regions.shape) + ", dataset has " +
                            to_string(triplet.seg.shape()));
    }
    for (auto& r : regions.regions) r.status = RegionStatus::pending;
    return CurationSession(std::move(triplet), std::move(regions), std::move(clock));
  }

  const DatasetTriplet& triplet() const { return triplet_; }
  const RegionSet& regions() const { return regions_; }
  const Volume<std::uint8_t>& working_seg() const { return working_; }
  const std::vector<EditOp>& journal() const { return journal_; }
  std::optional<std::int64_t> cursor() const { return cursor_; }
  std::int64_t last_seq() const { return journal_.empty() ? 0 : journal_.back().seq; }
  bool can_undo() const { return fold_.can_undo(); }

  std::int64_t n_done() const {
    std::int64_t n = 0;
    for (const auto& r : regions_.regions) n += r.status == RegionStatus::done;
    return n;
  }

  // Paints (1) or erases (0) the given voxels; rejected as a whole if any
  // voxel is out of bounds. Returns the local topology change around the edit.
  EditOutcome apply_edit(EditKind kind, std::span<const Voxel> voxels,
                         std::optional<std::int64_t> region_id = std::nullopt,
                         std::int64_t margin = kDefaultTopologyMargin) {
    if (!is_voxel_edit(kind)) throw ValidationError("edit kind must be paint or erase");
    if (voxels.empty()) throw ValidationError("edit must contain at least one voxel");
    for (const auto& v : voxels) {
      if (!working_.shape().contains(v)) {
        throw ValidationError("voxel (" + std::to_string(v.z) + "," + std::to_string(v.y) + "," +
                              std::to_string(v.x) + ") is outside volume " +
                              to_string(working_.shape()));
      }
    }
    UncertaintyRegion* region = nullptr;
    if (region_id) {
      region = regions_.find(*region_id);
      if (!region) throw NotFoundError("unknown region " + std::to_string(*region_id));
    }

    Box box = Box::of(voxels.front());
    for (const auto& v : voxels) box.extend(v);
    const Box window = local_window(working_.shape(), box, margin);
    const TopologyReport before = betti_numbers(crop(working_, window), 1);

    EditOp op;
    op.seq = last_seq() + 1;
    op.timestamp_ms = clock_();
    op.region_id = region_id;
    op.kind = kind;
    op.voxels.assign(voxels.begin(), voxels.end());
    op.new_value = kind == EditKind::paint ? 1 : 0;
    op.prev_values.reserve(voxels.size());
    // Sequential capture: a voxel listed twice sees the first write.
    Volume<std::uint8_t> scratch = crop(working_, window);
    for (const auto& v : voxels) {
      const Voxel local{v.z - window.min.z, v.y - window.min.y, v.x - window.min.x};
      op.prev_values.push_back(scratch[local]);
      scratch[local] = *op.new_value;
    }
    const TopologyReport after = betti_numbers(scratch, 1);

    append(std::move(op));
    if (region && region->status != RegionStatus::done) region->status = RegionStatus::edited;
    return {last_seq(), topology_diff(before, after)};
  }

  std::int64_t undo() {
    if (!fold_.can_undo()) throw StateError("nothing to undo");
    EditOp op;
    op.seq = last_seq() + 1;
    op.timestamp_ms = clock_();
    op.kind = EditKind::undo;
    append(std::move(op));
    return last_seq();
  }

  // Marks a region done and moves the cursor to the highest-ranked region
  // that is not done yet.
  std::optional<std::int64_t> mark_done(std::int64_t region_id) {
    UncertaintyRegion* region = regions_.find(region_id);
    if (!region) throw NotFoundError("unknown region " + std::to_string(region_id));
    if (region->status == RegionStatus::done) {
      throw StateError("region " + std::to_string(region_id) + " is already done");
    }
    EditOp op;
    op.seq = last_seq() + 1;
    op.timestamp_ms = clock_();
    op.region_id = region_id;
    op.kind = EditKind::done;
    append(std::move(op));
    region->status = RegionStatus::done;
    cursor_ = next_open_region();
    return cursor_;
  }

  // Writes the working segmentation plus the journal sidecar.
  void export_segmentation(const fs::path& header_path) const {
    write_volume(working_, header_path);
    write_journal(journal_path_for(header_path), journal_);
  }

 private:
  CurationSession(DatasetTriplet triplet, RegionSet regions, Clock clock)
      : triplet_(std::move(triplet)),
        regions_(std::move(regions)),
        working_(triplet_.seg),
        clock_(std::move(clock)) {
    cursor_ = next_open_region();
  }

  void append(EditOp op) {
    journal_.push_back(std::move(op));
    fold_.apply(working_, journal_, journal_.size() - 1);
  }

  std::optional<std::int64_t> next_open_region() const {
    for (const auto& r : regions_.regions)
      if (r.status != RegionStatus::done) return r.region_id;
    return std::nullopt;
  }

  DatasetTriplet triplet_;
  RegionSet regions_;
  Volume<std::uint8_t> working_;
  std::vector<EditOp> journal_;
  std::optional<std::int64_t> cursor_;
  Clock clock_;
  JournalFold fold_;
};

}  // namespace uqcure
