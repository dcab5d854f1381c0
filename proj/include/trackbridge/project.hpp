#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "trackbridge/detection.hpp"
#include "trackbridge/render_prep.hpp"
#include "trackbridge/session.hpp"
#include "trackbridge/trace.hpp"
#include "trackbridge/volume.hpp"

namespace trackbridge {

struct ProjectManifest {
  std::string name = "untitled";
  std::filesystem::path volume;  // directory holding volume.json + volume.raw
  std::filesystem::path graph;   // graph snapshot (JSON)
  SmoothingConfig smoothing;
  DetectionConfig detection;
  LinkingConfig linking;
  std::int32_t window_width = 5;
  ColorMap colormap = ColorMap::viridis(0.0, 1.0);

  // Checks config blocks and that both referenced files exist and parse.
  void validate() const;
};

nlohmann::json smoothing_to_json(const SmoothingConfig& c);
SmoothingConfig smoothing_from_json(const nlohmann::json& j);
nlohmann::json detection_to_json(const DetectionConfig& c);
DetectionConfig detection_from_json(const nlohmann::json& j);
nlohmann::json linking_to_json(const LinkingConfig& c);
LinkingConfig linking_from_json(const nlohmann::json& j);

// Paths are stored relative to the manifest's directory when possible and
// resolved against it on load.
nlohmann::json manifest_to_json(const ProjectManifest& m, const std::filesystem::path& base = {});
ProjectManifest manifest_from_json(const nlohmann::json& j, const std::filesystem::path& base = {});
ProjectManifest load_manifest(const std::filesystem::path& file);
void save_manifest(const ProjectManifest& m, const std::filesystem::path& file);

// One open project: the volume, the live session, its manifest and the
// engine-side scene, which follows every event the session emits.
class Project {
 public:
  explicit Project(ProjectManifest manifest);
  Project(const Project&) = delete;
  Project& operator=(const Project&) = delete;

  const ProjectManifest& manifest() const { return manifest_; }
  SessionBridge& bridge() { return *bridge_; }
  const SessionBridge& bridge() const { return *bridge_; }
  std::shared_ptr<const VolumeTimeSeries> volume() const { return volume_; }
  const ScenePresenter& presenter() const { return *presenter_; }

  // Writes the live graph to the manifest's graph file.
  void save() const;
  // Re-reads the graph file and broadcasts a full redraw.
  void reload();

 private:
  ProjectManifest manifest_;
  std::shared_ptr<const VolumeTimeSeries> volume_;
  std::unique_ptr<SessionBridge> bridge_;
  std::unique_ptr<ScenePresenter> presenter_;
};

// --- document API (transport independent) ---

struct DocumentResponse {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

inline constexpr std::string_view kApiPrefix = "/api/v1";

// Slab: half-open voxel box [x0,x1) x [y0,y1) x [z0,z1) at timepoint t.
struct SlabBox {
  std::array<std::int32_t, 3> lo{0, 0, 0};
  std::array<std::int32_t, 3> hi{0, 0, 0};
};

SlabBox clip_slab(const SlabBox& requested, const VolumeHeader& header);
// u32 LE descriptor length, descriptor JSON, then LE u16 voxels (z, y, x order).
std::string encode_slab(const VolumeTimeSeries& volume, std::int32_t t, const SlabBox& requested);

// Routes one request. Caller serializes calls that mutate (POST) with the
// session owner.
DocumentResponse handle_document_request(Project& project, std::string_view method, std::string_view target,
                                         std::string_view body = {});

}  // namespace trackbridge
