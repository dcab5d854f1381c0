#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "trackbridge/lineage_graph.hpp"

namespace trackbridge {

enum class InstanceKind : std::uint8_t { Spot, Link };

struct Instance {
  bool active = false;
  std::int32_t id = kNil;  // spot or link id bound to this instance, or NIL
  std::array<float, 16> transform{1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1};  // row-major
  Rgba color;
};

// Pre-generated instances. Slots are addressed by index and never move.
class InstancePool {
 public:
  explicit InstancePool(InstanceKind kind = InstanceKind::Spot, std::size_t capacity = 0);

  InstanceKind kind() const { return kind_; }
  std::size_t capacity() const { return instances_.size(); }
  std::size_t active_count() const;
  // Geometric growth (x1.5, at least to `required`). Returns true if it grew.
  bool reserve(std::size_t required);

  Instance& operator[](std::size_t slot) { return instances_[slot]; }
  const Instance& operator[](std::size_t slot) const { return instances_[slot]; }
  const std::vector<Instance>& instances() const { return instances_; }

 private:
  InstanceKind kind_;
  std::vector<Instance> instances_;
};

struct ColorMap {
  std::string name = "viridis";
  std::vector<Rgba> stops;
  double t_min = 0.0;
  double t_max = 1.0;

  void validate() const;
  static ColorMap viridis(double t_min, double t_max);
  static ColorMap grayscale(double t_min, double t_max);
};

Rgba track_color(const ColorMap& cmap, double t);

nlohmann::json colormap_to_json(const ColorMap& cmap);
ColorMap colormap_from_json(const nlohmann::json& j);

// Link id -> (min, max) endpoint timepoint, kept in step with the graph version.
class VisibilityWindow {
 public:
  VisibilityWindow() = default;
  VisibilityWindow(const LineageGraph& graph, std::int32_t width);

  void rebuild(const LineageGraph& graph);
  // Incremental maintenance for per-segment edits.
  void on_link_added(const LineageGraph& graph, LinkId id);
  void on_link_removed(LinkId id);
  void sync_version(const LineageGraph& graph) { version_ = graph.version(); }

  std::int32_t width() const { return width_; }
  void set_width(std::int32_t width);
  std::uint64_t version() const { return version_; }
  const std::unordered_map<LinkId, std::pair<std::int32_t, std::int32_t>>& index() const { return index_; }

 private:
  std::int32_t width_ = 0;
  std::uint64_t version_ = 0;
  std::unordered_map<LinkId, std::pair<std::int32_t, std::int32_t>> index_;
};

// Links with min endpoint >= current - width and max endpoint <= current,
// ascending id. Throws StaleIndexError when the window lags the graph.
std::vector<LinkId> visible_links(const VisibilityWindow& window, const LineageGraph& graph, std::int32_t current);

struct ScenePools {
  InstancePool spots{InstanceKind::Spot};
  InstancePool links{InstanceKind::Link};
  std::unordered_map<LinkId, std::size_t> link_slots;
  double population_seconds = 0.0;
  double link_radius = 0.2;
};

// Spot pool sized to the busiest timepoint, link pool to all alive links;
// every instance starts inactive. Link geometry is generated up front.
ScenePools populate_pools(const LineageGraph& graph, double link_radius = 0.2);

struct FrameStats {
  std::size_t active_spots = 0;
  std::size_t active_links = 0;
  std::size_t spot_capacity = 0;
  std::size_t link_capacity = 0;
  bool grew = false;
};

FrameStats update_for_timepoint(ScenePools& pools, const LineageGraph& graph, std::int32_t t,
                                const VisibilityWindow& window, const ColorMap& cmap);

// Ellipsoid transform: translation = position, linear part = R * diag(s)
// with covariance = R diag(s^2) R^T. Axes below 0.25 world units are raised
// to 0.25 so degenerate spots stay visible.
std::array<float, 16> spot_transform(const SpotRecord& spot);
// Unit cylinder along +Y centred at the origin mapped onto a segment.
std::array<float, 16> link_transform(const Vec3& from, const Vec3& to, double radius);

inline constexpr double kMinVisibleRadius = 0.25;

// Active instances as {kind, id, transform, rgba}.
nlohmann::json frame_dump(const ScenePools& pools, std::int32_t t);

// Engine-side 3D view that tracks graph edits per spot and per segment,
// and rebuilds only on full redraws.
class ScenePresenter {
 public:
  ScenePresenter(std::int32_t window_width, ColorMap cmap);

  void rebuild(const LineageGraph& graph);
  // Applies one protocol event (see session.hpp) to the presenter.
  void on_event(const LineageGraph& graph, const nlohmann::json& event);
  FrameStats show(const LineageGraph& graph, std::int32_t t);

  const ScenePools& pools() const { return pools_; }
  const VisibilityWindow& window() const { return window_; }
  std::int32_t timepoint() const { return timepoint_; }
  std::size_t full_redraws() const { return full_redraws_; }
  std::size_t partial_updates() const { return partial_updates_; }

 private:
  ScenePools pools_;
  VisibilityWindow window_;
  ColorMap cmap_;
  std::int32_t timepoint_ = 0;
  std::size_t full_redraws_ = 0;
  std::size_t partial_updates_ = 0;
};

// Synthetic lineage for population benchmarks: tracks of spots per
// timepoint drawn from [spots_min, spots_max], links added timepoint by
// timepoint until exactly `links` exist.
LineageGraph make_bench_graph(std::size_t links, std::size_t spots_min, std::size_t spots_max, std::uint64_t seed);

struct BenchReport {
  std::size_t links = 0;
  std::size_t spots_min = 0;
  std::size_t spots_max = 0;
  std::size_t spots = 0;
  std::int32_t timepoints = 0;
  std::size_t spot_capacity = 0;
  std::size_t link_capacity = 0;
  double population_seconds = 0.0;
  double seconds_per_link = 0.0;
  double generation_seconds = 0.0;
};

// Minimum population time over `repeats` runs.
BenchReport bench_populate(std::size_t links, std::size_t spots_min, std::size_t spots_max, std::uint64_t seed,
                           int repeats = 3);
nlohmann::json bench_report_to_json(const BenchReport& report);

}  // namespace trackbridge
