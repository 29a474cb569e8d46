#pragma once

// Local HTTP API over a set of curation sessions.
//
//   GET  /datasets                              ranked dataset summaries
//   GET  /datasets/{id}/regions                 ranked region records
//   GET  /datasets/{id}/regions/{rid}           record + recommended view
//   GET  /datasets/{id}/slice?axis=&index=&layer=[&low=&high=]   PNG
//   POST /datasets/{id}/edits                   {kind, region_id, voxels, expected_seq?}
//   POST /datasets/{id}/undo                    {expected_seq?}
//   POST /datasets/{id}/regions/{rid}/done      {expected_seq?}
//   GET  /datasets/{id}/export                  volume header + payload + journal
//   GET  /datasets/{id}/topology                global report of working seg
//
// Errors are returned as {"code": <http status>, "message": "..."}.
// Mutations on one dataset are serialized; reads take a shared lock and
// therefore observe a journal prefix.

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <vector>

#ifndef CPPHTTPLIB_LISTEN_BACKLOG
#define CPPHTTPLIB_LISTEN_BACKLOG 128
#endif
#include <httplib.h>
#include <json.hpp>

#include "uqcure/regions.hpp"
#include "uqcure/session.hpp"
#include "uqcure/slice.hpp"
#include "uqcure/topology.hpp"
#include "uqcure/volume_io.hpp"

namespace uqcure {

inline constexpr int kDefaultPort = 8077;

inline std::string base64_encode(std::string_view in) {
  static constexpr char kAlphabet[] =
      "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((in.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < in.size(); i += 3) {
    const std::uint32_t n = (std::uint32_t(std::uint8_t(in[i])) << 16) |
                            (std::uint32_t(std::uint8_t(in[i + 1])) << 8) | std::uint8_t(in[i + 2]);
    out += kAlphabet[(n >> 18) & 63];
    out += kAlphabet[(n >> 12) & 63];
    out += kAlphabet[(n >> 6) & 63];
    out += kAlphabet[n & 63];
  }
  if (i < in.size()) {
    std::uint32_t n = std::uint32_t(std::uint8_t(in[i])) << 16;
    if (i + 1 < in.size()) n |= std::uint32_t(std::uint8_t(in[i + 1])) << 8;
    out += kAlphabet[(n >> 18) & 63];
    out += kAlphabet[(n >> 12) & 63];
    out += i + 1 < in.size() ? kAlphabet[(n >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

inline nlohmann::json to_json(const TopologyReport& r) {
  return {{"beta0", r.beta0},
          {"beta1", r.beta1},
          {"beta2", r.beta2},
          {"euler", r.euler},
          {"component_sizes", r.component_sizes}};
}

inline nlohmann::json to_json(const TopologyDiff& d) {
  return {{"d_beta0", d.d_beta0},
          {"d_beta1", d.d_beta1},
          {"d_beta2", d.d_beta2},
          {"classification", std::string(to_string(d.classification))}};
}

// Nearest voxel to the region centroid, per axis.
inline Voxel recommended_view(const UncertaintyRegion& r) {
  return {std::llround(r.centroid[0]), std::llround(r.centroid[1]), std::llround(r.centroid[2])};
}

class CurationService {
 public:
  CurationService() = default;
  CurationService(const CurationService&) = delete;
  CurationService& operator=(const CurationService&) = delete;

  void add_dataset(DatasetTriplet triplet, const ExtractionConfig& cfg = {}) {
    RegionSet regions = extract_regions(triplet.unc, cfg, triplet.id);
    add_session(CurationSession::open(std::move(triplet), std::move(regions)));
  }

  void add_session(CurationSession session) {
    const std::string id = session.triplet().id;
    if (id.empty()) throw ValidationError("dataset id must not be empty");
    if (entries_.count(id)) throw ValidationError("duplicate dataset id '" + id + "'");
    entries_.emplace(id, std::make_unique<Entry>(std::move(session)));
  }

  // A directory holding raw/seg/unc.vqh is one dataset; otherwise every
  // subdirectory that does is loaded.
  void load_directory(const fs::path& dir, const ExtractionConfig& cfg = {}) {
    if (!fs::is_directory(dir)) throw IoError("data directory not found: " + dir.string());
    if (fs::exists(dir / "seg.vqh")) {
      add_dataset(read_dataset(dir), cfg);
      return;
    }
    std::vector<fs::path> subdirs;
    for (const auto& e : fs::directory_iterator(dir))
      if (e.is_directory() && fs::exists(e.path() / "seg.vqh")) subdirs.push_back(e.path());
    std::sort(subdirs.begin(), subdirs.end());
    for (const auto& d : subdirs) add_dataset(read_dataset(d), cfg);
  }

  std::size_t size() const { return entries_.size(); }

  nlohmann::json list_datasets() const {
    std::vector<VolumeScore> scores;
    std::map<std::string, nlohmann::json> rows;
    for (const auto& [id, e] : entries_) {
      std::shared_lock lock(e->mutex);
      const auto& s = e->session;
      const auto top = s.regions().top_score();
      const Shape sh = s.working_seg().shape();
      rows[id] = {{"id", id},
                  {"shape", {sh.z, sh.y, sh.x}},
                  {"top_score", top ? nlohmann::json(*top) : nlohmann::json(nullptr)},
                  {"n_regions", s.regions().regions.size()},
                  {"n_done", s.n_done()}};
      scores.push_back({id, top});
    }
    nlohmann::json out = nlohmann::json::array();
    for (const auto& id : rank_volume_scores(std::move(scores))) out.push_back(rows[id]);
    return out;
  }

  nlohmann::json list_regions(const std::string& id) const {
    const Entry& e = entry(id);
    std::shared_lock lock(e.mutex);
    nlohmann::json out = nlohmann::json::array();
    for (const auto& r : e.session.regions().regions) out.push_back(to_json(r));
    return out;
  }

  nlohmann::json region_detail(const std::string& id, std::int64_t rid) const {
    const Entry& e = entry(id);
    std::shared_lock lock(e.mutex);
    const auto* r = e.session.regions().find(rid);
    if (!r) throw NotFoundError("unknown region " + std::to_string(rid) + " in dataset '" + id + "'");
    nlohmann::json j = to_json(*r);
    const Voxel v = recommended_view(*r);
    j["recommended_view"] = {{"z", v.z}, {"y", v.y}, {"x", v.x}};
    return j;
  }

  std::string slice_png(const std::string& id, const SliceRequest& req) const {
    const Entry& e = entry(id);
    std::shared_lock lock(e.mutex);
    const auto& s = e.session;
    switch (req.layer) {
      case Layer::raw: return render_raw_slice(s.triplet().raw, req).encode_png();
      case Layer::seg: return render_seg_slice(s.working_seg(), req).encode_png();
      case Layer::unc: return render_unc_slice(s.triplet().unc, req).encode_png();
      case Layer::region_labels:
        return render_label_slice(s.regions().label_volume, req).encode_png();
    }
    throw ValidationError("unknown layer");
  }

  nlohmann::json apply_edit(const std::string& id, EditKind kind, std::span<const Voxel> voxels,
                            std::optional<std::int64_t> region_id,
                            std::optional<std::int64_t> expected_seq) {
    Entry& e = entry(id);
    std::unique_lock lock(e.mutex);
    check_seq(e, expected_seq);
    const auto out = e.session.apply_edit(kind, voxels, region_id);
    return {{"seq", out.seq}, {"local_topology_diff", to_json(out.local_diff)}};
  }

  nlohmann::json undo(const std::string& id, std::optional<std::int64_t> expected_seq) {
    Entry& e = entry(id);
    std::unique_lock lock(e.mutex);
    check_seq(e, expected_seq);
    return {{"seq", e.session.undo()}};
  }

  nlohmann::json mark_done(const std::string& id, std::int64_t rid,
                           std::optional<std::int64_t> expected_seq) {
    Entry& e = entry(id);
    std::unique_lock lock(e.mutex);
    check_seq(e, expected_seq);
    const auto next = e.session.mark_done(rid);
    return {{"seq", e.session.last_seq()},
            {"next_region", next ? nlohmann::json(*next) : nlohmann::json(nullptr)}};
  }

  // Same bytes export_segmentation would write, taken from one snapshot.
  nlohmann::json export_bundle(const std::string& id) const {
    const Entry& e = entry(id);
    std::shared_lock lock(e.mutex);
    const auto& s = e.session;
    return {{"header", header_json(s.working_seg().meta(), id + ".raw")},
            {"payload_base64", base64_encode(encode_payload(s.working_seg()))},
            {"journal", journal_to_text(s.journal())},
            {"seq", s.last_seq()}};
  }

  nlohmann::json topology(const std::string& id) const {
    const Entry& e = entry(id);
    std::shared_lock lock(e.mutex);
    return to_json(betti_numbers(e.session.working_seg()));
  }

  // Runs `fn(const CurationSession&)` under the dataset's read lock.
  template <typename Fn>
  auto inspect(const std::string& id, Fn&& fn) const {
    const Entry& e = entry(id);
    std::shared_lock lock(e.mutex);
    return fn(e.session);
  }

 private:
  struct Entry {
    explicit Entry(CurationSession s) : session(std::move(s)) {}
    mutable std::shared_mutex mutex;
    CurationSession session;
  };

  static void check_seq(const Entry& e, std::optional<std::int64_t> expected) {
    if (expected && *expected != e.session.last_seq()) {
      throw StateError("stale client state: expected_seq " + std::to_string(*expected) +
                       ", journal is at " + std::to_string(e.session.last_seq()));
    }
  }

  const Entry& entry(const std::string& id) const {
    auto it = entries_.find(id);
    if (it == entries_.end()) throw NotFoundError("unknown dataset '" + id + "'");
    return *it->second;
  }
  Entry& entry(const std::string& id) {
    return const_cast<Entry&>(std::as_const(*this).entry(id));
  }

  std::map<std::string, std::unique_ptr<Entry>> entries_;
};

namespace detail {

inline int http_status_for(const std::exception& e) {
  if (dynamic_cast<const NotFoundError*>(&e)) return 404;
  if (dynamic_cast<const ValidationError*>(&e)) return 400;
  if (dynamic_cast<const StateError*>(&e)) return 409;
  if (dynamic_cast<const nlohmann::json::exception*>(&e)) return 400;
  return 500;
}

template <typename Fn>
void guarded(httplib::Response& res, Fn&& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    const int code = http_status_for(e);
    res.status = code;
    res.set_content(nlohmann::json{{"code", code}, {"message", e.what()}}.dump(),
                    "application/json");
  }
}

inline void reply_json(httplib::Response& res, const nlohmann::json& j) {
  res.status = 200;
  res.set_content(j.dump(), "application/json");
}

inline nlohmann::json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return nlohmann::json::object();
  auto j = nlohmann::json::parse(req.body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ValidationError("request body must be a JSON object");
  return j;
}

inline std::optional<std::int64_t> optional_int(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  if (!j.at(key).is_number_integer()) throw ValidationError(std::string(key) + " must be an integer");
  return j.at(key).get<std::int64_t>();
}

inline std::int64_t parse_int(const std::string& s, const char* what) {
  std::size_t used = 0;
  std::int64_t v = 0;
  try {
    v = std::stoll(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) throw ValidationError(std::string(what) + " must be an integer");
  return v;
}

inline double parse_real(const std::string& s, const char* what) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) throw ValidationError(std::string(what) + " must be a number");
  return v;
}

}  // namespace detail

inline void install_routes(httplib::Server& server, CurationService& svc) {
  using detail::guarded;
  using detail::reply_json;
  using httplib::Request;
  using httplib::Response;

  server.Get("/datasets", [&](const Request&, Response& res) {
    guarded(res, [&] { reply_json(res, svc.list_datasets()); });
  });

  server.Get(R"(/datasets/([^/]+)/regions)", [&](const Request& req, Response& res) {
    guarded(res, [&] { reply_json(res, svc.list_regions(req.matches[1])); });
  });

  server.Get(R"(/datasets/([^/]+)/regions/([^/]+))", [&](const Request& req, Response& res) {
    guarded(res, [&] {
      const auto rid = detail::parse_int(req.matches[2], "region id");
      reply_json(res, svc.region_detail(req.matches[1], rid));
    });
  });

  server.Get(R"(/datasets/([^/]+)/slice)", [&](const Request& req, Response& res) {
    guarded(res, [&] {
      SliceRequest sr;
      sr.axis = parse_axis(req.has_param("axis") ? req.get_param_value("axis") : "z");
      if (!req.has_param("index")) throw ValidationError("index is required");
      sr.index = detail::parse_int(req.get_param_value("index"), "index");
      sr.layer = parse_layer(req.has_param("layer") ? req.get_param_value("layer") : "raw");
      if (req.has_param("low") || req.has_param("high")) {
        if (!req.has_param("low") || !req.has_param("high"))
          throw ValidationError("window needs both low and high");
        sr.window = std::make_pair(detail::parse_real(req.get_param_value("low"), "low"),
                                   detail::parse_real(req.get_param_value("high"), "high"));
      }
      res.set_content(svc.slice_png(req.matches[1], sr), "image/png");
      res.status = 200;
    });
  });

  server.Post(R"(/datasets/([^/]+)/edits)", [&](const Request& req, Response& res) {
    guarded(res, [&] {
      const auto body = detail::parse_body(req);
      if (!body.contains("kind") || !body.at("kind").is_string())
        throw ValidationError("kind is required");
      const EditKind kind = parse_edit_kind(body.at("kind").get<std::string>());
      if (!body.contains("voxels") || !body.at("voxels").is_array())
        throw ValidationError("voxels must be an array of [z,y,x]");
      std::vector<Voxel> voxels;
      for (const auto& v : body.at("voxels")) {
        if (!v.is_array() || v.size() != 3 || !v[0].is_number_integer() ||
            !v[1].is_number_integer() || !v[2].is_number_integer())
          throw ValidationError("voxels must be an array of integer [z,y,x] triples");
        voxels.push_back(voxel_from_json(v));
      }
      reply_json(res, svc.apply_edit(req.matches[1], kind, voxels,
                                     detail::optional_int(body, "region_id"),
                                     detail::optional_int(body, "expected_seq")));
    });
  });

  server.Post(R"(/datasets/([^/]+)/undo)", [&](const Request& req, Response& res) {
    guarded(res, [&] {
      const auto body = detail::parse_body(req);
      reply_json(res, svc.undo(req.matches[1], detail::optional_int(body, "expected_seq")));
    });
  });

  server.Post(R"(/datasets/([^/]+)/regions/([^/]+)/done)", [&](const Request& req, Response& res) {
    guarded(res, [&] {
      const auto body = detail::parse_body(req);
      const auto rid = detail::parse_int(req.matches[2], "region id");
      reply_json(res, svc.mark_done(req.matches[1], rid, detail::optional_int(body, "expected_seq")));
    });
  });

  server.Get(R"(/datasets/([^/]+)/export)", [&](const Request& req, Response& res) {
    guarded(res, [&] { reply_json(res, svc.export_bundle(req.matches[1])); });
  });

  server.Get(R"(/datasets/([^/]+)/topology)", [&](const Request& req, Response& res) {
    guarded(res, [&] { reply_json(res, svc.topology(req.matches[1])); });
  });
}

// Port from an explicit value, else UQCURE_PORT, else 8077.
inline int resolve_port(std::optional<int> explicit_port) {
  if (explicit_port) return *explicit_port;
  if (const char* env = std::getenv("UQCURE_PORT")) {
    const auto p = detail::parse_int(env, "UQCURE_PORT");
    if (p < 0 || p > 65535) throw ValidationError("UQCURE_PORT out of range");
    return static_cast<int>(p);
  }
  return kDefaultPort;
}

}  // namespace uqcure
