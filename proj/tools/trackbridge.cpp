// trackbridge command-line entry point.
#include <cstdio>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "trackbridge/graph_io.hpp"
#include "trackbridge/project.hpp"
#include "trackbridge/server.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace trackbridge;

namespace {

json read_json(const fs::path& file) {
  try {
    return json::parse(read_text_file(file));
  } catch (const json::exception& e) {
    throw ValidationError(file.string() + " is not valid JSON: " + e.what());
  }
}

LineageGraph open_graph(const fs::path& file, std::int32_t timepoints) {
  if (!fs::exists(file)) return LineageGraph(timepoints);
  return load_graph(file, timepoints);
}

std::pair<std::size_t, std::size_t> parse_range(const std::string& text) {
  const auto dash = text.find('-');
  try {
    if (dash == std::string::npos) {
      const auto v = std::stoul(text);
      return {v, v};
    }
    return {std::stoul(text.substr(0, dash)), std::stoul(text.substr(dash + 1))};
  } catch (const std::exception&) {
    throw ValidationError("expected N or MIN-MAX, got '" + text + "'");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cell-lineage tracking engine: offline tools and session server"};
  app.require_subcommand(1);

  // generate
  auto* generate = app.add_subcommand("generate", "Render a synthetic scene to a volume");
  std::string scene_file, volume_out, manifest_out;
  std::uint64_t seed = 1;
  double noise = 0.0;
  generate->add_option("--spec", scene_file, "Scene JSON: {header, cells, divisions}")->required()->check(CLI::ExistingFile);
  generate->add_option("--out", volume_out, "Output volume directory")->required();
  generate->add_option("--seed", seed, "Noise seed");
  generate->add_option("--noise", noise, "Uniform noise amplitude (intensity units)")->check(CLI::NonNegativeNumber);
  generate->add_option("--manifest", manifest_out, "Also write a project manifest and an empty graph");

  // extract
  auto* extract = app.add_subcommand("extract", "Extract a track from recorded rays");
  std::string volume_dir, trace_file, track_out, graph_file;
  int iterations = 4;
  double merge_radius = -1.0;
  extract->add_option("--volume", volume_dir, "Volume directory")->required();
  extract->add_option("--trace", trace_file, "Trace JSON: [{timepoint, origin, direction, step, raw?}]")
      ->required()
      ->check(CLI::ExistingFile);
  extract->add_option("--iterations", iterations, "Smoothing iterations")->check(CLI::NonNegativeNumber);
  extract->add_option("--out", track_out, "Track CSV (timepoint,x,y,z)")->required();
  extract->add_option("--graph", graph_file, "Commit the track into this graph file");
  extract->add_option("--merge-radius", merge_radius, "Endpoint merge radius (default 2 voxels)");

  // detect
  auto* detect_cmd = app.add_subcommand("detect", "Difference-of-Gaussians spot detection");
  std::int32_t t = 0;
  DetectionConfig dcfg;
  detect_cmd->add_option("--volume", volume_dir, "Volume directory")->required();
  detect_cmd->add_option("--t", t, "Timepoint")->required();
  detect_cmd->add_option("--sigma-small", dcfg.sigma_small, "Inner Gaussian sigma (voxels)");
  detect_cmd->add_option("--sigma-large", dcfg.sigma_large, "Outer Gaussian sigma (voxels)");
  detect_cmd->add_option("--threshold", dcfg.response_threshold, "Response threshold (fraction of frame max)");
  detect_cmd->add_option("--min-separation", dcfg.min_separation, "Non-maximum suppression radius (world)");
  detect_cmd->add_option("--graph", graph_file, "Graph file to add spots to (created if missing)")->required();

  // link
  auto* link_cmd = app.add_subcommand("link", "Greedy nearest-neighbour linking t -> t+1");
  LinkingConfig lcfg;
  std::int32_t from = 0;
  link_cmd->add_option("--graph", graph_file, "Graph file")->required()->check(CLI::ExistingFile);
  link_cmd->add_option("--from", from, "Source timepoint")->required();
  link_cmd->add_option("--max-dist", lcfg.max_link_distance, "Maximum link distance (world)");
  link_cmd->add_flag("--divisions", lcfg.allow_divisions, "Allow two successors per spot");

  // export
  auto* export_cmd = app.add_subcommand("export", "Write spots.csv and links.csv");
  std::string export_dir;
  export_cmd->add_option("--graph", graph_file, "Graph file (missing means empty)");
  export_cmd->add_option("--out", export_dir, "Output directory")->required();

  // bench populate
  auto* bench = app.add_subcommand("bench", "Benchmarks");
  bench->require_subcommand(1);
  auto* populate = bench->add_subcommand("populate", "Scene population time for a synthetic lineage");
  std::size_t bench_links = 3000;
  std::string spots_per_tp;
  std::string report_file;
  int repeats = 3;
  populate->add_option("--links", bench_links, "Number of links")->required();
  populate->add_option("--spots-per-tp", spots_per_tp,
                       "Spots per timepoint, N or MIN-MAX (default 90-110, or 2500-3700 for >= 100000 links)");
  populate->add_option("--report", report_file, "Report JSON (stdout if omitted)");
  populate->add_option("--seed", seed, "Graph seed");
  populate->add_option("--repeats", repeats, "Timed repetitions (minimum is reported)")->check(CLI::PositiveNumber);

  // serve
  auto* serve = app.add_subcommand("serve", "Serve a project over HTTP and WebSocket");
  std::string manifest_file, bind = "127.0.0.1:8080";
  serve->add_option("--manifest", manifest_file, "Project manifest")->required();
  serve->add_option("--bind", bind, "host:port");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*generate) {
      const json doc = read_json(scene_file);
      if (!doc.contains("header")) throw ValidationError("scene file needs a 'header' block");
      const VolumeHeader header = header_from_json(doc["header"]);
      const SyntheticScene scene = scene_from_json(doc);
      const VolumeTimeSeries volume = generate_synthetic(scene, header, noise, seed);
      save_volume(volume, volume_out);
      if (!manifest_out.empty()) {
        const fs::path mpath(manifest_out);
        ProjectManifest m;
        m.name = fs::path(volume_out).filename().string();
        if (m.name.empty()) m.name = "project";
        m.volume = fs::absolute(volume_out);
        m.graph = fs::absolute(mpath).parent_path() / "graph.json";
        m.colormap = ColorMap::viridis(0.0, std::max(1, header.timepoints - 1));
        if (!fs::exists(m.graph)) save_graph(LineageGraph(header.timepoints), m.graph);
        save_manifest(m, fs::absolute(mpath));
      }
      std::cout << "wrote " << header.timepoints << " frames of " << header.dims[0] << "x" << header.dims[1] << "x"
                << header.dims[2] << " to " << volume_out << "\n";
    } else if (*extract) {
      const VolumeTimeSeries volume = load_volume(volume_dir);
      SmoothingConfig scfg;
      scfg.iterations = iterations;
      auto rays = rays_from_json(read_json(trace_file));
      const PlaybackDirection dir = rays.size() >= 2 && rays.front().timepoint < rays.back().timepoint
                                        ? PlaybackDirection::Forwards
                                        : PlaybackDirection::Backwards;
      const double length = 2.0 * (volume.header().world_extent() + volume.header().voxel_size).norm();
      TraceSession session(scfg, dir);
      for (RayProfile& ray : rays) {
        if (ray.raw.empty()) ray.raw = volume.sample_ray(ray.timepoint, ray.origin, ray.direction, ray.step, length);
        session.add_ray(std::move(ray));
      }
      session.analyze();
      const auto track = extract_track(session);
      std::string csv = "timepoint,x,y,z\n";
      for (const TrackPoint& p : track) {
        csv += std::to_string(p.timepoint) + "," + format_number(p.position.x()) + "," +
               format_number(p.position.y()) + "," + format_number(p.position.z()) + "\n";
      }
      write_text_file(track_out, csv);
      if (!graph_file.empty()) {
        LineageGraph graph = open_graph(graph_file, volume.timepoints());
        const double radius = merge_radius >= 0.0 ? merge_radius : 2.0 * volume.header().voxel_size.minCoeff();
        const CommitResult r = commit_track(track, graph, radius);
        save_graph(graph, graph_file);
        std::cout << "committed " << r.spots.size() << " spots (" << r.created_spots << " new), " << r.links.size()
                  << " links\n";
      }
      std::cout << "extracted " << track.size() << " track points\n";
    } else if (*detect_cmd) {
      dcfg.validate();
      const VolumeTimeSeries volume = load_volume(volume_dir);
      LineageGraph graph = open_graph(graph_file, volume.timepoints());
      const auto found = detect(volume, t, dcfg);
      const double sd = dcfg.sigma_small * volume.header().voxel_size.minCoeff();
      const auto ids = add_detections(graph, t, found, SymMat3::isotropic(sd));
      save_graph(graph, graph_file);
      std::cout << "detected " << ids.size() << " spots at t=" << t << "\n";
    } else if (*link_cmd) {
      lcfg.validate();
      LineageGraph graph = load_graph(graph_file);
      const auto ids = link_timepoints(graph, from, lcfg);
      save_graph(graph, graph_file);
      std::cout << "created " << ids.size() << " links from t=" << from << "\n";
    } else if (*export_cmd) {
      const LineageGraph graph = graph_file.empty() ? LineageGraph() : open_graph(graph_file, LineageGraph::kUnboundedTimepoints);
      write_csv_export(graph, export_dir);
      std::cout << "exported " << graph.spot_count() << " spots, " << graph.link_count() << " links\n";
    } else if (*populate) {
      std::pair<std::size_t, std::size_t> range =
          spots_per_tp.empty() ? (bench_links >= 100000 ? std::pair<std::size_t, std::size_t>{2500, 3700}
                                                         : std::pair<std::size_t, std::size_t>{90, 110})
                               : parse_range(spots_per_tp);
      const BenchReport report = bench_populate(bench_links, range.first, range.second, seed, repeats);
      const std::string text = bench_report_to_json(report).dump(2) + "\n";
      if (report_file.empty()) {
        std::cout << text;
      } else {
        write_text_file(report_file, text);
        std::cout << "populated " << report.links << " links in " << report.population_seconds << " s\n";
      }
    } else if (*serve) {
      Project project(load_manifest(manifest_file));
      const auto [host, port] = parse_bind_address(bind);
      Server server(project, host, port);
      std::cout << "serving '" << project.manifest().name << "' on " << host << ":" << server.port()
                << " (HTTP " << kApiPrefix << ", WebSocket /ws)" << std::endl;
      server.run(true);
    }
  } catch (const Error& e) {
    std::cerr << "error (" << e.code() << "): " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
