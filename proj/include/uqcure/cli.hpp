#pragma once

// `uqcure` command line: extract, rank, topology, synth, simulate, serve,
// export, entropy. Exit codes: 0 success, 1 validation error, 2 I/O error.

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "uqcure/regions.hpp"
#include "uqcure/service.hpp"
#include "uqcure/session.hpp"
#include "uqcure/synth.hpp"
#include "uqcure/topology.hpp"
#include "uqcure/volume_io.hpp"

namespace uqcure::cli {

enum ExitCode : int { kOk = 0, kValidation = 1, kIo = 2 };

struct ExtractArgs {
  double tau = 0.5;
  double bin = 0.1;
  std::int64_t min_size = 10;
  int connectivity = 26;

  void add_to(CLI::App* app) {
    app->add_option("--tau", tau, "Uncertainty threshold in [0,1)")->capture_default_str();
    app->add_option("--bin", bin, "Uncertainty bin width in (0,1]")->capture_default_str();
    app->add_option("--min-size", min_size, "Minimum region size in voxels")->capture_default_str();
    app->add_option("--connectivity", connectivity, "Region connectivity (6 or 26)")
        ->capture_default_str();
  }
  ExtractionConfig config() const {
    ExtractionConfig c{tau, bin, parse_connectivity(connectivity), min_size};
    c.validate();
    return c;
  }
};

inline Box parse_bbox(const std::string& s) {
  std::vector<std::int64_t> v;
  std::stringstream in(s);
  std::string tok;
  while (std::getline(in, tok, ',')) {
    try {
      std::size_t used = 0;
      v.push_back(std::stoll(tok, &used));
      if (used != tok.size()) throw ValidationError("");
    } catch (const std::exception&) {
      throw ValidationError("bbox must be z0,y0,x0,z1,y1,x1 integers, got '" + s + "'");
    }
  }
  if (v.size() != 6) throw ValidationError("bbox must have 6 comma-separated integers");
  return {{v[0], v[1], v[2]}, {v[3], v[4], v[5]}};
}

inline std::string format_result_row(const CurationResult& r) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%s,%llu,%.6f,%lld,%lld", std::string(to_string(r.mode)).c_str(),
                static_cast<unsigned long long>(r.seed), r.recall,
                static_cast<long long>(r.inspections), static_cast<long long>(r.corrections));
  return buf;
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  CLI::App app{"Uncertainty-guided curation engine for 3D segmentations", "uqcure"};
  app.require_subcommand(1);

  // extract
  std::string dataset_dir, regions_out;
  ExtractArgs extract_args;
  unsigned workers = 0;
  auto* extract = app.add_subcommand("extract", "Extract and rank uncertainty regions of a dataset");
  extract->add_option("--dataset", dataset_dir, "Dataset directory (raw.vqh, seg.vqh, unc.vqh)")
      ->required();
  extract_args.add_to(extract);
  extract->add_option("--out", regions_out, "Region file (default <dataset>/regions.vqr)");
  extract->add_option("--workers", workers, "Labeling threads (0 = auto)");

  // rank
  std::vector<std::string> rank_datasets;
  std::string rank_data;
  ExtractArgs rank_args;
  auto* rank = app.add_subcommand("rank", "Rank datasets by their highest-scoring region");
  rank->add_option("--dataset", rank_datasets, "Dataset directories");
  rank->add_option("--data", rank_data, "Directory whose subdirectories are datasets");
  rank_args.add_to(rank);

  // topology
  std::string topo_seg, topo_bbox;
  std::int64_t topo_margin = kDefaultTopologyMargin;
  auto* topo = app.add_subcommand("topology", "Betti numbers of a binary segmentation");
  topo->add_option("--seg", topo_seg, "Segmentation header (.vqh)")->required();
  topo->add_option("--bbox", topo_bbox, "Local window z0,y0,x0,z1,y1,x1 (inclusive)");
  topo->add_option("--margin", topo_margin, "Margin around --bbox in voxels")->capture_default_str();

  // synth
  SynthConfig synth_cfg;
  std::uint64_t seed = 0;
  std::string synth_out;
  auto add_synth_options = [&](CLI::App* sub) {
    sub->add_option("--size", synth_cfg.vessels.size, "Volume edge length")->capture_default_str();
    sub->add_option("--tubes", synth_cfg.vessels.n_tubes, "Number of tubes")->capture_default_str();
    sub->add_option("--radius", synth_cfg.vessels.radius, "Tube radius")->capture_default_str();
    sub->add_option("--merges", synth_cfg.merges, "Injected false merges")->capture_default_str();
    sub->add_option("--breaks", synth_cfg.breaks, "Injected false breaks")->capture_default_str();
    sub->add_option("--coverage", synth_cfg.coverage, "Fraction of errors flagged by uncertainty")
        ->capture_default_str();
    sub->add_option("--noise", synth_cfg.noise_sigma, "Uncertainty background noise sigma")
        ->capture_default_str();
    sub->add_option("--seed", seed, "Random seed")->capture_default_str();
  };
  auto* synth = app.add_subcommand("synth", "Generate a synthetic vessel dataset with errors");
  add_synth_options(synth);
  synth->add_option("--out", synth_out, "Output directory")->required();

  // simulate
  std::string mode_name, sim_out;
  int runs = 20;
  CuratorParams curator;
  ExtractArgs sim_args;
  auto* simulate = app.add_subcommand("simulate", "Run simulated curators over synthetic datasets");
  simulate->add_option("--mode", mode_name, "guided or unguided")->required();
  simulate->add_option("--runs", runs, "Number of datasets (seeds seed..seed+runs-1)")
      ->capture_default_str();
  simulate->add_option("--out", sim_out, "Results CSV")->required();
  simulate->add_option("--p-detect", curator.p_detect, "Unguided detection probability")
      ->capture_default_str();
  simulate->add_option("--stop-fraction", curator.stop_fraction,
                       "Unguided fraction of chunks inspected")
      ->capture_default_str();
  add_synth_options(simulate);
  sim_args.add_to(simulate);

  // serve
  std::string serve_data;
  std::optional<int> port;
  ExtractArgs serve_args;
  auto* serve = app.add_subcommand("serve", "Serve datasets over the local HTTP API");
  serve->add_option("--data", serve_data, "Dataset directory or directory of datasets")->required();
  serve->add_option("--port", port, "Port (default $UQCURE_PORT or 8077)");
  serve_args.add_to(serve);

  // export
  std::string export_dataset, export_journal, export_out;
  auto* exp = app.add_subcommand("export", "Replay a journal over a segmentation and export it");
  exp->add_option("--seg", export_dataset, "Original segmentation header (.vqh)")->required();
  exp->add_option("--journal", export_journal, "Journal file (.jsonl)")->required();
  exp->add_option("--out", export_out, "Output header (.vqh)")->required();

  // entropy
  std::vector<std::string> members;
  std::string entropy_out;
  auto* entropy = app.add_subcommand("entropy", "Pixel-wise ensemble entropy of binary members");
  entropy->add_option("--members", members, "Member segmentation headers (>= 2)")->required();
  entropy->add_option("--out", entropy_out, "Output uncertainty header (.vqh)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kValidation;
  }

  try {
    if (*extract) {
      const auto cfg = extract_args.config();
      const auto triplet = read_dataset(dataset_dir);
      const auto set = extract_regions(triplet.unc, cfg, triplet.id, workers);
      const fs::path dest = regions_out.empty() ? fs::path(dataset_dir) / "regions.vqr" : fs::path(regions_out);
      write_region_set(set, dest);
      out << "extracted " << set.regions.size() << " regions";
      if (const auto top = set.top_score()) out << " (top score " << *top << ")";
      out << " -> " << dest.string() << "\n";
    } else if (*rank) {
      const auto cfg = rank_args.config();
      std::vector<fs::path> dirs(rank_datasets.begin(), rank_datasets.end());
      if (!rank_data.empty()) {
        if (!fs::is_directory(rank_data)) throw IoError("not a directory: " + rank_data);
        std::vector<fs::path> found;
        for (const auto& e : fs::directory_iterator(rank_data))
          if (e.is_directory() && fs::exists(e.path() / "unc.vqh")) found.push_back(e.path());
        std::sort(found.begin(), found.end());
        dirs.insert(dirs.end(), found.begin(), found.end());
      }
      if (dirs.empty()) throw ValidationError("rank needs --dataset or --data");
      std::vector<VolumeScore> scores;
      std::map<std::string, std::size_t> counts;
      for (const auto& d : dirs) {
        const auto t = read_dataset(d);
        const auto set = extract_regions(t.unc, cfg, t.id);
        scores.push_back({t.id, set.top_score()});
        counts[t.id] = set.regions.size();
      }
      std::map<std::string, std::optional<double>> top;
      for (const auto& s : scores) top[s.dataset_id] = s.top_score;
      std::size_t r = 0;
      for (const auto& id : rank_volume_scores(scores)) {
        out << ++r << "\t" << id << "\t";
        if (top[id]) out << *top[id]; else out << "-";
        out << "\t" << counts[id] << "\n";
      }
    } else if (*topo) {
      const auto seg = read_volume_as<std::uint8_t>(topo_seg, "segmentation");
      check_binary(seg);
      const TopologyReport rep = topo_bbox.empty() ? betti_numbers(seg)
                                                   : local_topology(seg, parse_bbox(topo_bbox), topo_margin);
      out << to_json(rep).dump(2) << "\n";
    } else if (*synth) {
      const auto ds = make_synth_dataset(synth_cfg, seed);
      write_synth_dataset(ds, synth_out);
      out << "wrote " << synth_out << " with " << ds.errors.size() << " errors\n";
    } else if (*simulate) {
      const CuratorMode mode = parse_curator_mode(mode_name);
      curator.validate();
      const auto cfg = sim_args.config();
      if (runs < 1) throw ValidationError("runs must be positive");
      std::string csv = "mode,seed,recall,inspections,corrections\n";
      for (int i = 0; i < runs; ++i) {
        const std::uint64_t s = seed + static_cast<std::uint64_t>(i);
        const auto ds = make_synth_dataset(synth_cfg, s);
        std::optional<RegionSet> regions;
        if (mode == CuratorMode::guided) regions = extract_regions(ds.unc, cfg);
        const auto res = simulate_curator(mode, ds, regions ? &*regions : nullptr, curator, s);
        csv += format_result_row(res) + "\n";
      }
      detail::write_file(sim_out, csv);
      out << "wrote " << runs << " runs to " << sim_out << "\n";
    } else if (*serve) {
      CurationService svc;
      svc.load_directory(serve_data, serve_args.config());
      httplib::Server server;
      install_routes(server, svc);
      const int p = resolve_port(port);
      out << "serving " << svc.size() << " dataset(s) on http://127.0.0.1:" << p << "\n" << std::flush;
      if (!server.listen("127.0.0.1", p)) throw IoError("cannot listen on port " + std::to_string(p));
    } else if (*exp) {
      auto seg = read_volume_as<std::uint8_t>(export_dataset, "segmentation");
      const auto journal = read_journal(export_journal);
      const auto result = replay_journal(std::move(seg), journal);
      write_volume(result, export_out);
      write_journal(journal_path_for(export_out), journal);
      out << "replayed " << journal.size() << " journal entries -> " << export_out << "\n";
    } else if (*entropy) {
      std::vector<Volume<std::uint8_t>> vols;
      for (const auto& m : members) vols.push_back(read_volume_as<std::uint8_t>(m, "member"));
      write_volume(ensemble_entropy(vols), entropy_out);
      out << "wrote " << entropy_out << "\n";
    }
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kIo;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kIo;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kValidation;
  }
  return kOk;
}

}  // namespace uqcure::cli
