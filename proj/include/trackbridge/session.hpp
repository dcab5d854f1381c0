#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "trackbridge/detection.hpp"
#include "trackbridge/lineage_graph.hpp"
#include "trackbridge/trace.hpp"
#include "trackbridge/volume.hpp"

namespace trackbridge {

using ClientId = std::uint32_t;
inline constexpr ClientId kEngine = 0;
inline constexpr int kProtocolVersion = 1;

// Message envelope: {type, version, origin, payload} (+ optional requestId).
// Requests from clients carry no version; events emitted by the engine do.
using Message = nlohmann::json;
using MessageSink = std::function<void(const Message&)>;

struct SessionConfig {
  double merge_radius = 2.0;  // world units
  PlaybackDirection direction = PlaybackDirection::Backwards;
  double playback_rate = 4.0;  // timepoints per second while tracing
  SmoothingConfig smoothing;
  double ray_step = 0.5;      // world units
  double ray_length = 0.0;    // 0 selects the volume diagonal
  DetectionConfig detection;
  LinkingConfig linking;

  // Defaults derived from voxel size: merge radius 2 voxels, ray step half a voxel.
  static SessionConfig for_volume(const VolumeHeader& header);
  void validate() const;
};

enum class SessionMode : std::uint8_t { Idle, Annotating, Tracing };

struct AnnotationCursor {
  std::vector<SpotId> active_track;  // capture order
  PlaybackDirection direction = PlaybackDirection::Backwards;
};

struct BridgeStats {
  std::size_t emitted = 0;
  std::size_t suppressed_under_lock = 0;
  std::size_t dropped_echoes = 0;
  std::size_t rejected = 0;
};

// The synchronization core. Not thread-safe: one owner serializes every call.
class SessionBridge {
 public:
  SessionBridge(LineageGraph graph, std::shared_ptr<const VolumeTimeSeries> volume, SessionConfig config);

  // --- clients ---
  ClientId connect(MessageSink sink);
  void disconnect(ClientId id);
  std::size_t client_count() const { return clients_.size(); }
  // Engine-side observers see every applied event, including ones applied
  // under the lock.
  void add_listener(std::function<void(const Message&)> listener);

  // Entry point for every inbound message. Never throws on bad input:
  // failures turn into a reject sent to `origin` only.
  void handle_message(ClientId origin, const Message& message);
  void handle_text(ClientId origin, std::string_view text);

  // --- operations (throw trackbridge::Error on failure) ---
  // Graph edit request {type, payload}; returns the applied event.
  Message apply_edit(ClientId origin, const Message& request);
  void set_timepoint(ClientId origin, std::int32_t t);
  SpotId annotate_and_advance(ClientId origin, const Vec3& position);
  nlohmann::json terminate_track(ClientId origin);
  void start_trace(ClientId origin);
  void append_ray(ClientId origin, const Vec3& ray_origin, const Vec3& direction);
  nlohmann::json end_trace(ClientId origin);
  // Playback clock; advances one timepoint per 1/playback_rate seconds while
  // tracing and ends the trace after the first timepoint.
  void tick(double seconds);
  void set_playback_rate(double rate);
  bool undo(ClientId origin);
  bool redo(ClientId origin);

  // --- state ---
  const LineageGraph& graph() const { return graph_; }
  const VolumeTimeSeries* volume() const { return volume_.get(); }
  const SessionConfig& config() const { return config_; }
  std::int32_t timepoint() const { return timepoint_; }
  std::int32_t timepoint_count() const { return graph_.timepoint_count(); }
  std::uint64_t version() const { return version_; }
  SessionMode mode() const { return mode_; }
  const AnnotationCursor& cursor() const { return cursor_; }
  const TraceSession* trace() const { return trace_ ? &*trace_ : nullptr; }
  bool locked() const { return updating_; }
  const BridgeStats& stats() const { return stats_; }
  // Every emitted event in version order.
  const std::vector<Message>& event_log() const { return event_log_; }
  void set_event_logging(bool on) { log_events_ = on; }

  Message make_snapshot_event() const;
  // Replaces the graph (project load) and broadcasts a full redraw.
  void replace_graph(LineageGraph graph);

 private:
  class UpdateGuard;

  Message dispatch(ClientId origin, const std::string& type, const nlohmann::json& payload);
  Message emit(ClientId origin, const std::string& type, nlohmann::json payload);
  void send(ClientId to, const Message& message);
  void reject(ClientId origin, const std::string& type, const nlohmann::json& request_id, const char* code,
              const std::string& reason);
  Message full_redraw(ClientId origin);

  std::int32_t clamp_timepoint(std::int32_t t, bool* clamped) const;
  std::optional<std::int32_t> next_timepoint(std::int32_t t) const;
  std::optional<SpotId> hit_test(std::int32_t t, const Vec3& p) const;
  void require_idle_for_history() const;

  LineageGraph graph_;
  std::shared_ptr<const VolumeTimeSeries> volume_;
  SessionConfig config_;
  std::int32_t timepoint_ = 0;
  std::uint64_t version_ = 0;

  std::map<ClientId, MessageSink> clients_;
  std::vector<std::function<void(const Message&)>> listeners_;
  ClientId next_client_ = 1;
  bool updating_ = false;  // BridgeLock

  SessionMode mode_ = SessionMode::Idle;
  AnnotationCursor cursor_;
  std::size_t annotation_history_mark_ = 0;
  std::optional<TraceSession> trace_;
  ClientId trace_owner_ = kEngine;
  double playback_accumulator_ = 0.0;

  // Events produced by the request currently being handled, for its ack.
  std::vector<Message>* pending_ = nullptr;

  std::vector<Message> event_log_;
  bool log_events_ = true;
  BridgeStats stats_;
};

// A client-side mirror that applies engine events in version order.
class GraphReplica {
 public:
  explicit GraphReplica(std::int32_t timepoint_count = LineageGraph::kUnboundedTimepoints);

  // Applies an event, an ack (its embedded events) or a welcome message.
  void apply(const Message& message);

  const LineageGraph& graph() const { return graph_; }
  std::int32_t timepoint() const { return timepoint_; }
  std::uint64_t version() const { return version_; }
  bool needs_redraw() const { return needs_redraw_; }

 private:
  void apply_event(const Message& event);

  LineageGraph graph_;
  std::int32_t timepoint_ = 0;
  std::uint64_t version_ = 0;
  bool needs_redraw_ = false;
};

// Payload helpers shared with the server.
Vec3 json_vec3(const nlohmann::json& j);
nlohmann::json vec3_json(const Vec3& v);
SymMat3 json_covariance(const nlohmann::json& j);

}  // namespace trackbridge
