#include "trackbridge/project.hpp"

#include <algorithm>
#include <charconv>
#include <map>

#include "trackbridge/graph_io.hpp"

namespace trackbridge {

namespace fs = std::filesystem;
using nlohmann::json;

json smoothing_to_json(const SmoothingConfig& c) {
  return {{"kernel", c.kernel}, {"iterations", c.iterations}, {"maximaThresholdFraction", c.maxima_threshold_fraction}};
}

SmoothingConfig smoothing_from_json(const json& j) {
  SmoothingConfig c;
  c.kernel = j.value("kernel", c.kernel);
  c.iterations = j.value("iterations", c.iterations);
  c.maxima_threshold_fraction = j.value("maximaThresholdFraction", c.maxima_threshold_fraction);
  c.validate();
  return c;
}

json detection_to_json(const DetectionConfig& c) {
  return {{"sigmaSmall", c.sigma_small},
          {"sigmaLarge", c.sigma_large},
          {"threshold", c.response_threshold},
          {"minSeparation", c.min_separation}};
}

DetectionConfig detection_from_json(const json& j) {
  DetectionConfig c;
  c.sigma_small = j.value("sigmaSmall", c.sigma_small);
  c.sigma_large = j.value("sigmaLarge", c.sigma_large);
  c.response_threshold = j.value("threshold", c.response_threshold);
  c.min_separation = j.value("minSeparation", c.min_separation);
  c.validate();
  return c;
}

json linking_to_json(const LinkingConfig& c) {
  return {{"maxLinkDistance", c.max_link_distance}, {"allowDivisions", c.allow_divisions}};
}

LinkingConfig linking_from_json(const json& j) {
  LinkingConfig c;
  c.max_link_distance = j.value("maxLinkDistance", c.max_link_distance);
  c.allow_divisions = j.value("allowDivisions", c.allow_divisions);
  c.validate();
  return c;
}

namespace {

std::string relative_to(const fs::path& p, const fs::path& base) {
  if (base.empty() || p.is_relative()) return p.generic_string();
  const fs::path rel = p.lexically_relative(base);
  return rel.empty() ? p.generic_string() : rel.generic_string();
}

fs::path resolve(const std::string& p, const fs::path& base) {
  const fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

}  // namespace

json manifest_to_json(const ProjectManifest& m, const fs::path& base) {
  return {{"name", m.name},
          {"volume", relative_to(m.volume, base)},
          {"graph", relative_to(m.graph, base)},
          {"smoothing", smoothing_to_json(m.smoothing)},
          {"detection", detection_to_json(m.detection)},
          {"linking", linking_to_json(m.linking)},
          {"windowWidth", m.window_width},
          {"colormap", colormap_to_json(m.colormap)}};
}

ProjectManifest manifest_from_json(const json& j, const fs::path& base) {
  ProjectManifest m;
  try {
    m.name = j.value("name", m.name);
    m.volume = resolve(j.at("volume").get<std::string>(), base);
    m.graph = resolve(j.at("graph").get<std::string>(), base);
    if (j.contains("smoothing")) m.smoothing = smoothing_from_json(j["smoothing"]);
    if (j.contains("detection")) m.detection = detection_from_json(j["detection"]);
    if (j.contains("linking")) m.linking = linking_from_json(j["linking"]);
    m.window_width = j.value("windowWidth", m.window_width);
    if (j.contains("colormap")) m.colormap = colormap_from_json(j["colormap"]);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed manifest: ") + e.what());
  }
  return m;
}

void ProjectManifest::validate() const {
  smoothing.validate();
  detection.validate();
  linking.validate();
  colormap.validate();
  if (window_width < 0) throw ValidationError("window width must be >= 0");
  if (!fs::is_regular_file(volume / "volume.json")) {
    throw ValidationError("volume not found: " + (volume / "volume.json").string());
  }
  if (!fs::is_regular_file(graph)) throw ValidationError("graph file not found: " + graph.string());
  const VolumeHeader header = header_from_json(json::parse(read_text_file(volume / "volume.json")));
  load_graph(graph, header.timepoints);
}

ProjectManifest load_manifest(const fs::path& file) {
  json j;
  try {
    j = json::parse(read_text_file(file));
  } catch (const json::exception& e) {
    throw ValidationError("manifest " + file.string() + " is not valid JSON: " + e.what());
  }
  return manifest_from_json(j, fs::absolute(file).parent_path());
}

void save_manifest(const ProjectManifest& m, const fs::path& file) {
  write_text_file(file, manifest_to_json(m, file.parent_path()).dump(2) + "\n");
}

// ---------------------------------------------------------------------------

Project::Project(ProjectManifest manifest) : manifest_(std::move(manifest)) {
  manifest_.validate();
  volume_ = std::make_shared<const VolumeTimeSeries>(load_volume(manifest_.volume));
  SessionConfig config = SessionConfig::for_volume(volume_->header());
  config.smoothing = manifest_.smoothing;
  config.detection = manifest_.detection;
  config.linking = manifest_.linking;
  bridge_ = std::make_unique<SessionBridge>(load_graph(manifest_.graph, volume_->timepoints()), volume_, config);
  presenter_ = std::make_unique<ScenePresenter>(manifest_.window_width, manifest_.colormap);
  presenter_->show(bridge_->graph(), bridge_->timepoint());
  presenter_->rebuild(bridge_->graph());
  bridge_->add_listener([this](const Message& event) { presenter_->on_event(bridge_->graph(), event); });
}

void Project::save() const { save_graph(bridge_->graph(), manifest_.graph); }

void Project::reload() { bridge_->replace_graph(load_graph(manifest_.graph, volume_->timepoints())); }

// ---------------------------------------------------------------------------

SlabBox clip_slab(const SlabBox& requested, const VolumeHeader& header) {
  SlabBox out;
  for (int a = 0; a < 3; ++a) {
    out.lo[a] = std::clamp(requested.lo[a], 0, header.dims[a]);
    out.hi[a] = std::clamp(requested.hi[a], out.lo[a], header.dims[a]);
  }
  return out;
}

namespace {

json box_json(const SlabBox& b) {
  return {{"x0", b.lo[0]}, {"y0", b.lo[1]}, {"z0", b.lo[2]}, {"x1", b.hi[0]}, {"y1", b.hi[1]}, {"z1", b.hi[2]}};
}

void append_le(std::string& out, std::uint32_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

std::map<std::string, std::string, std::less<>> parse_query(std::string_view q) {
  std::map<std::string, std::string, std::less<>> out;
  while (!q.empty()) {
    const auto amp = q.find('&');
    const std::string_view pair = q.substr(0, amp);
    const auto eq = pair.find('=');
    if (!pair.empty()) {
      out[std::string(pair.substr(0, eq))] = eq == std::string_view::npos ? "" : std::string(pair.substr(eq + 1));
    }
    if (amp == std::string_view::npos) break;
    q.remove_prefix(amp + 1);
  }
  return out;
}

std::int32_t query_int(const std::map<std::string, std::string, std::less<>>& q, std::string_view key,
                       std::optional<std::int32_t> fallback) {
  auto it = q.find(key);
  if (it == q.end()) {
    if (!fallback) throw ValidationError("missing query parameter '" + std::string(key) + "'");
    return *fallback;
  }
  std::int32_t v = 0;
  const auto& s = it->second;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ValidationError("query parameter '" + std::string(key) + "' must be an integer");
  }
  return v;
}

int status_for(const Error& e) {
  const std::string code = e.code();
  if (code == "not_found") return 404;
  if (code == "state" || code == "duplicate") return 409;
  return 400;
}

DocumentResponse json_response(const json& j, int status = 200) { return {status, "application/json", j.dump()}; }

}  // namespace

std::string encode_slab(const VolumeTimeSeries& volume, std::int32_t t, const SlabBox& requested) {
  const auto frame = volume.frame(t);  // throws RangeError for bad t
  const SlabBox box = clip_slab(requested, volume.header());
  const std::array<std::int32_t, 3> size{box.hi[0] - box.lo[0], box.hi[1] - box.lo[1], box.hi[2] - box.lo[2]};
  const json descriptor = {{"t", t},
                           {"box", box_json(box)},
                           {"requested", box_json(requested)},
                           {"clipped", box.lo != requested.lo || box.hi != requested.hi},
                           {"size", size},
                           {"dtype", "uint16le"},
                           {"order", "zyx"},
                           {"voxelSize", vec3_json(volume.header().voxel_size)}};
  const std::string text = descriptor.dump();
  std::string out;
  const std::size_t voxels = static_cast<std::size_t>(size[0]) * static_cast<std::size_t>(size[1]) *
                             static_cast<std::size_t>(size[2]);
  out.reserve(4 + text.size() + 2 * voxels);
  append_le(out, static_cast<std::uint32_t>(text.size()), 4);
  out += text;
  for (std::int32_t z = box.lo[2]; z < box.hi[2]; ++z) {
    for (std::int32_t y = box.lo[1]; y < box.hi[1]; ++y) {
      for (std::int32_t x = box.lo[0]; x < box.hi[0]; ++x) append_le(out, frame[volume.index(x, y, z)], 2);
    }
  }
  return out;
}

DocumentResponse handle_document_request(Project& project, std::string_view method, std::string_view target,
                                         std::string_view body) {
  std::string_view path = target;
  std::string_view query;
  if (const auto qpos = target.find('?'); qpos != std::string_view::npos) {
    path = target.substr(0, qpos);
    query = target.substr(qpos + 1);
  }
  if (!path.starts_with(kApiPrefix)) return json_response({{"error", "not_found"}, {"reason", "unknown path"}}, 404);
  path.remove_prefix(kApiPrefix.size());

  try {
    SessionBridge& bridge = project.bridge();
    if (method == "GET") {
      if (path == "/info") {
        const VolumeHeader& h = project.volume()->header();
        return json_response({{"name", project.manifest().name},
                              {"protocol", kProtocolVersion},
                              {"version", bridge.version()},
                              {"timepoint", bridge.timepoint()},
                              {"volume", header_to_json(h)},
                              {"windowWidth", project.manifest().window_width},
                              {"colormap", colormap_to_json(project.manifest().colormap)},
                              {"spots", bridge.graph().spot_count()},
                              {"links", bridge.graph().link_count()}});
      }
      if (path == "/graph") {
        json snapshot = graph_to_json(bridge.graph());
        snapshot["version"] = bridge.version();
        return json_response(snapshot);
      }
      if (path == "/export/spots.csv") return {200, "text/csv", spots_csv(bridge.graph())};
      if (path == "/export/links.csv") return {200, "text/csv", links_csv(bridge.graph())};
      if (path == "/volume/slab") {
        const auto q = parse_query(query);
        const VolumeHeader& h = project.volume()->header();
        SlabBox req;
        req.lo = {query_int(q, "x0", 0), query_int(q, "y0", 0), query_int(q, "z0", 0)};
        req.hi = {query_int(q, "x1", h.dims[0]), query_int(q, "y1", h.dims[1]), query_int(q, "z1", h.dims[2])};
        const std::int32_t t = query_int(q, "t", bridge.timepoint());
        return {200, "application/octet-stream", encode_slab(*project.volume(), t, req)};
      }
    } else if (method == "POST") {
      (void)body;
      if (path == "/project/save") {
        project.save();
        return json_response({{"saved", project.manifest().graph.generic_string()}, {"version", bridge.version()}});
      }
      if (path == "/project/load") {
        project.reload();
        return json_response({{"spots", bridge.graph().spot_count()},
                              {"links", bridge.graph().link_count()},
                              {"version", bridge.version()}});
      }
    } else {
      return json_response({{"error", "method"}, {"reason", "unsupported method"}}, 405);
    }
  } catch (const Error& e) {
    return json_response({{"error", e.code()}, {"reason", e.what()}}, status_for(e));
  } catch (const std::exception& e) {
    return json_response({{"error", "internal"}, {"reason", e.what()}}, 500);
  }
  return json_response({{"error", "not_found"}, {"reason", "unknown path"}}, 404);
}

}  // namespace trackbridge
