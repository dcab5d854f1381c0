#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "trackbridge/lineage_graph.hpp"
#include "trackbridge/types.hpp"

namespace trackbridge {

enum class PlaybackDirection : std::uint8_t { Backwards, Forwards };

struct SmoothingConfig {
  std::array<double, 3> kernel{0.25, 0.5, 0.25};
  int iterations = 4;
  // Maxima below this fraction of the session-wide smoothed maximum are ignored.
  double maxima_threshold_fraction = 0.1;

  void validate() const;
};

struct RayProfile {
  std::int32_t timepoint = 0;
  Vec3 origin = Vec3::Zero();
  Vec3 direction = Vec3::UnitZ();
  double step = 1.0;
  std::vector<double> raw;
  std::vector<double> smoothed;

  Vec3 sample_position(std::size_t k) const { return origin + (static_cast<double>(k) * step) * direction; }
};

struct LocalMaximum {
  std::size_t ray_index = 0;
  std::size_t sample_index = 0;
  std::int32_t timepoint = 0;
  Vec3 world_position = Vec3::Zero();
  double value = 0.0;
};

// [0.25, 0.5, 0.25] convolution repeated `iterations` times, clamp padding.
std::vector<double> smooth_profile(std::span<const double> raw, const SmoothingConfig& config);

// Strict interior maxima with value >= threshold, ascending.
std::vector<std::size_t> find_local_maxima(std::span<const double> smoothed, double threshold);

class TraceSession {
 public:
  enum class State : std::uint8_t { Recording, Analyzed, Committed };

  explicit TraceSession(SmoothingConfig config = {}, PlaybackDirection direction = PlaybackDirection::Backwards);

  // Rays must follow the playback direction in time.
  void add_ray(RayProfile ray);
  // Smooths every ray and extracts its local maxima.
  void analyze();
  void mark_committed();

  State state() const { return state_; }
  PlaybackDirection direction() const { return direction_; }
  const SmoothingConfig& config() const { return config_; }
  const std::vector<RayProfile>& rays() const { return rays_; }
  // Per-ray maxima; valid once analyzed.
  const std::vector<std::vector<LocalMaximum>>& maxima() const { return maxima_; }
  double threshold() const { return threshold_; }

 private:
  SmoothingConfig config_;
  PlaybackDirection direction_;
  State state_ = State::Recording;
  std::vector<RayProfile> rays_;
  std::vector<std::vector<LocalMaximum>> maxima_;
  double threshold_ = 0.0;
};

struct LayerGraph {
  // One layer per ray that has maxima, in capture order. Edges are implicit:
  // every node of layer k connects to every node of layer k+1 with cost equal
  // to the Euclidean distance between them.
  std::vector<std::vector<LocalMaximum>> layers;
  // Capture-order indices of rays without maxima.
  std::vector<std::size_t> gaps;

  // The start node is layers[0][0]: the first maximum along the first ray.
  const LocalMaximum& start() const { return layers.front().front(); }
};

LayerGraph build_layer_graph(const TraceSession& session);

struct LayerPath {
  std::vector<std::size_t> nodes;  // node index per layer; nodes[0] == 0
  double cost = 0.0;
  std::size_t expanded = 0;       // A* node expansions
};

// A* over the layered graph from the start node to any node of the last
// layer. The heuristic is the distance to the last layer's centroid minus
// that layer's radius around the centroid, which never overestimates.
LayerPath shortest_layer_path(const LayerGraph& graph);

struct TrackPoint {
  std::int32_t timepoint = 0;
  Vec3 position = Vec3::Zero();
};

// Runs the layered path search and collapses the result to at most one
// position per timepoint, ordered by ascending timepoint.
std::vector<TrackPoint> extract_track(const TraceSession& session);

struct CommitResult {
  std::vector<SpotId> spots;  // ascending timepoint, includes reused spots
  std::vector<LinkId> links;
  std::size_t created_spots = 0;
  bool reused_first = false;
  bool reused_last = false;
};

// Writes a track into the graph as one undo batch. Missing timepoints between
// consecutive track points are filled by linear interpolation so that every
// link spans exactly one timepoint. End points within merge_radius of an
// existing spot at the same timepoint reuse that spot.
CommitResult commit_track(std::span<const TrackPoint> track, LineageGraph& graph, double merge_radius);

nlohmann::json rays_to_json(std::span<const RayProfile> rays);
std::vector<RayProfile> rays_from_json(const nlohmann::json& j);

}  // namespace trackbridge
