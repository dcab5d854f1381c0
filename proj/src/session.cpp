#include "trackbridge/session.hpp"

#include <algorithm>
#include <cmath>

#include "trackbridge/graph_io.hpp"

namespace trackbridge {

using nlohmann::json;

// ---------------------------------------------------------------------------
// payload helpers

Vec3 json_vec3(const json& j) {
  if (!j.is_array() || j.size() != 3) throw ValidationError("expected a 3-vector");
  Vec3 v(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
  if (!v.allFinite()) throw ValidationError("vector components must be finite");
  return v;
}

json vec3_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

SymMat3 json_covariance(const json& j) {
  if (!j.is_array()) throw ValidationError("covariance must be an array");
  if (j.size() == 6) {
    SymMat3 c;
    for (std::size_t i = 0; i < 6; ++i) c.v[i] = j[i].get<double>();
    return c;
  }
  if (j.size() == 9) {
    Mat3 m;
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) m(r, c) = j[static_cast<std::size_t>(r * 3 + c)].get<double>();
    }
    if (!m.allFinite() || (m - m.transpose()).cwiseAbs().maxCoeff() > 1e-9) {
      throw ValidationError("covariance is not symmetric");
    }
    return SymMat3::from_matrix(m);
  }
  throw ValidationError("covariance needs 6 (upper triangle) or 9 (row-major) values");
}

namespace {

std::int32_t json_int(const json& payload, const char* key) {
  if (!payload.contains(key) || !payload[key].is_number_integer()) {
    throw ValidationError(std::string("payload field '") + key + "' must be an integer");
  }
  const auto v = payload[key].get<std::int64_t>();
  if (v < std::numeric_limits<std::int32_t>::min() || v > std::numeric_limits<std::int32_t>::max()) {
    throw RangeError(std::string("payload field '") + key + "' out of range");
  }
  return static_cast<std::int32_t>(v);
}

Vec3 json_vec3_field(const json& payload, const char* key) {
  if (!payload.contains(key)) throw ValidationError(std::string("payload field '") + key + "' is required");
  return json_vec3(payload[key]);
}

}  // namespace

// ---------------------------------------------------------------------------

SessionConfig SessionConfig::for_volume(const VolumeHeader& header) {
  SessionConfig c;
  const double voxel = header.voxel_size.minCoeff();
  c.merge_radius = 2.0 * voxel;
  c.ray_step = header.default_ray_step();
  return c;
}

void SessionConfig::validate() const {
  if (!(merge_radius >= 0.0)) throw ValidationError("merge radius must be >= 0");
  if (!(playback_rate > 0.0)) throw ValidationError("playback rate must be > 0");
  if (!(ray_step > 0.0)) throw ValidationError("ray step must be > 0");
  if (!(ray_length >= 0.0)) throw ValidationError("ray length must be >= 0");
  smoothing.validate();
  detection.validate();
  linking.validate();
}

// Holds the bridge lock for the duration of one fan-out.
class SessionBridge::UpdateGuard {
 public:
  explicit UpdateGuard(bool& flag) : flag_(flag), previous_(flag) { flag_ = true; }
  ~UpdateGuard() { flag_ = previous_; }
  UpdateGuard(const UpdateGuard&) = delete;
  UpdateGuard& operator=(const UpdateGuard&) = delete;

 private:
  bool& flag_;
  bool previous_;
};

SessionBridge::SessionBridge(LineageGraph graph, std::shared_ptr<const VolumeTimeSeries> volume, SessionConfig config)
    : graph_(std::move(graph)), volume_(std::move(volume)), config_(std::move(config)) {
  config_.validate();
  if (volume_ && volume_->timepoints() != graph_.timepoint_count()) {
    throw ValidationError("graph and volume disagree on the number of timepoints");
  }
  if (graph_.timepoint_count() == LineageGraph::kUnboundedTimepoints) {
    throw ValidationError("session needs a bounded timepoint range");
  }
  cursor_.direction = config_.direction;
  timepoint_ = config_.direction == PlaybackDirection::Backwards ? graph_.timepoint_count() - 1 : 0;
}

ClientId SessionBridge::connect(MessageSink sink) {
  const ClientId id = next_client_++;
  clients_.emplace(id, std::move(sink));
  return id;
}

void SessionBridge::disconnect(ClientId id) { clients_.erase(id); }

void SessionBridge::add_listener(std::function<void(const Message&)> listener) {
  listeners_.push_back(std::move(listener));
}

void SessionBridge::send(ClientId to, const Message& message) {
  auto it = clients_.find(to);
  if (it != clients_.end() && it->second) it->second(message);
}

Message SessionBridge::emit(ClientId origin, const std::string& type, json payload) {
  if (updating_) {
    // Re-entrant update from a listener: applied, never re-emitted.
    ++stats_.suppressed_under_lock;
    return {{"type", type}, {"version", version_}, {"origin", origin}, {"payload", std::move(payload)}};
  }
  ++version_;
  Message event = {{"type", type}, {"version", version_}, {"origin", origin}, {"payload", std::move(payload)}};
  if (log_events_) event_log_.push_back(event);
  if (pending_ && origin != kEngine) pending_->push_back(event);
  ++stats_.emitted;

  UpdateGuard lock(updating_);
  for (auto& listener : listeners_) listener(event);
  // snapshot ids: sinks may disconnect while we iterate
  std::vector<ClientId> targets;
  for (const auto& [id, sink] : clients_) {
    if (id != origin) targets.push_back(id);
  }
  for (ClientId id : targets) send(id, event);
  return event;
}

void SessionBridge::reject(ClientId origin, const std::string& type, const json& request_id, const char* code,
                           const std::string& reason) {
  ++stats_.rejected;
  Message m = {{"type", "reject"},
               {"version", version_},
               {"origin", kEngine},
               {"payload", {{"request", type}, {"code", code}, {"reason", reason}}}};
  if (!request_id.is_null()) m["requestId"] = request_id;
  send(origin, m);
}

Message SessionBridge::make_snapshot_event() const {
  return {{"type", "fullRedraw"},
          {"version", version_},
          {"origin", kEngine},
          {"payload", {{"snapshot", graph_to_json(graph_)}, {"timepoint", timepoint_}}}};
}

Message SessionBridge::full_redraw(ClientId origin) {
  return emit(origin, "fullRedraw", {{"snapshot", graph_to_json(graph_)}, {"timepoint", timepoint_}});
}

void SessionBridge::replace_graph(LineageGraph graph) {
  if (mode_ != SessionMode::Idle) throw StateError("cannot replace the graph during annotation or tracing");
  if (graph.timepoint_count() != graph_.timepoint_count()) {
    throw ValidationError("replacement graph has a different timepoint range");
  }
  graph_ = std::move(graph);
  full_redraw(kEngine);
}

// ---------------------------------------------------------------------------
// inbound

void SessionBridge::handle_text(ClientId origin, std::string_view text) {
  json message;
  try {
    message = json::parse(text);
  } catch (const json::exception& e) {
    reject(origin, "", nullptr, "malformed", std::string("invalid JSON: ") + e.what());
    return;
  }
  handle_message(origin, message);
}

void SessionBridge::handle_message(ClientId origin, const Message& message) {
  if (!message.is_object() || !message.contains("type") || !message["type"].is_string()) {
    reject(origin, "", nullptr, "malformed", "message must be an object with a string 'type'");
    return;
  }
  const std::string type = message["type"].get<std::string>();
  const json request_id = message.contains("requestId") ? message["requestId"] : json(nullptr);

  // Anything carrying a version was produced by the engine; seeing it again
  // means a client is echoing an event it already received.
  if (message.contains("version") && !message["version"].is_null()) {
    const auto& v = message["version"];
    if (v.is_number_unsigned() && v.get<std::uint64_t>() <= version_) {
      ++stats_.dropped_echoes;
      return;
    }
    reject(origin, type, request_id, "malformed", "requests must not carry a version");
    return;
  }

  json payload = json::object();
  if (message.contains("payload")) {
    if (!message["payload"].is_object()) {
      reject(origin, type, request_id, "malformed", "payload must be an object");
      return;
    }
    payload = message["payload"];
  }

  if (type == "hello") {
    const int protocol = payload.value("protocol", 0);
    if (protocol != kProtocolVersion) {
      reject(origin, type, request_id, "protocol",
             "unsupported protocol version " + std::to_string(protocol) + ", server speaks " +
                 std::to_string(kProtocolVersion));
      return;
    }
    send(origin, {{"type", "welcome"},
                  {"version", version_},
                  {"origin", kEngine},
                  {"payload",
                   {{"protocol", kProtocolVersion},
                    {"clientId", origin},
                    {"timepoint", timepoint_},
                    {"timepointCount", graph_.timepoint_count()},
                    {"snapshot", graph_to_json(graph_)}}}});
    return;
  }
  if (type == "requestRedraw") {
    send(origin, make_snapshot_event());
    return;
  }

  if (updating_) {
    // Listener feedback during a fan-out: apply without re-emitting or acking.
    try {
      dispatch(origin, type, payload);
    } catch (const std::exception&) {
      ++stats_.rejected;
    }
    return;
  }

  std::vector<Message> produced;
  pending_ = &produced;
  try {
    json result = dispatch(origin, type, payload);
    pending_ = nullptr;
    Message ack = {{"type", "ack"},
                   {"version", version_},
                   {"origin", kEngine},
                   {"payload", {{"request", type}, {"result", std::move(result)}, {"events", std::move(produced)}}}};
    if (!request_id.is_null()) ack["requestId"] = request_id;
    send(origin, ack);
  } catch (const Error& e) {
    pending_ = nullptr;
    reject(origin, type, request_id, e.code(), e.what());
  } catch (const json::exception& e) {
    pending_ = nullptr;
    reject(origin, type, request_id, "malformed", e.what());
  } catch (const std::exception& e) {
    pending_ = nullptr;
    reject(origin, type, request_id, "internal", e.what());
  }
}

Message SessionBridge::dispatch(ClientId origin, const std::string& type, const json& payload) {
  static const char* const kEdits[] = {"addSpot", "moveSpot", "deleteSpot", "addLink", "deleteLink", "setTag"};
  for (const char* edit : kEdits) {
    if (type == edit) return apply_edit(origin, {{"type", type}, {"payload", payload}})["payload"];
  }
  if (type == "setTimepoint") {
    bool clamped = false;
    const std::int32_t requested = json_int(payload, "t");
    set_timepoint(origin, requested);
    clamp_timepoint(requested, &clamped);
    return {{"t", timepoint_}, {"clamped", clamped}};
  }
  if (type == "annotate") {
    const SpotId id = annotate_and_advance(origin, json_vec3_field(payload, "position"));
    return {{"spot", id}, {"timepoint", timepoint_}, {"active", mode_ == SessionMode::Annotating}};
  }
  if (type == "terminateTrack") return terminate_track(origin);
  if (type == "startTrace") {
    start_trace(origin);
    return {{"timepoint", timepoint_}};
  }
  if (type == "appendRay") {
    append_ray(origin, json_vec3_field(payload, "origin"), json_vec3_field(payload, "direction"));
    return {{"rays", trace_ ? trace_->rays().size() : 0}, {"timepoint", timepoint_}};
  }
  if (type == "endTrace") return end_trace(origin);
  if (type == "setPlaybackRate") {
    if (!payload.contains("rate") || !payload["rate"].is_number()) throw ValidationError("rate must be a number");
    set_playback_rate(payload["rate"].get<double>());
    return {{"rate", config_.playback_rate}};
  }
  if (type == "undo") return {{"applied", undo(origin)}};
  if (type == "redo") return {{"applied", redo(origin)}};
  if (type == "detect") {
    if (!volume_) throw StateError("no volume loaded");
    require_idle_for_history();
    DetectionConfig cfg = config_.detection;
    cfg.sigma_small = payload.value("sigmaSmall", cfg.sigma_small);
    cfg.sigma_large = payload.value("sigmaLarge", cfg.sigma_large);
    cfg.response_threshold = payload.value("threshold", cfg.response_threshold);
    cfg.min_separation = payload.value("minSeparation", cfg.min_separation);
    const std::int32_t t = payload.contains("t") ? json_int(payload, "t") : timepoint_;
    const auto found = detect(*volume_, t, cfg);
    const double sd = cfg.sigma_small * volume_->header().voxel_size.minCoeff();
    const auto ids = add_detections(graph_, t, found, SymMat3::isotropic(sd));
    if (!ids.empty()) full_redraw(origin);
    return {{"spots", ids}};
  }
  if (type == "link") {
    require_idle_for_history();
    LinkingConfig cfg = config_.linking;
    cfg.max_link_distance = payload.value("maxDistance", cfg.max_link_distance);
    cfg.allow_divisions = payload.value("divisions", cfg.allow_divisions);
    const std::int32_t from = payload.contains("from") ? json_int(payload, "from") : timepoint_;
    const auto ids = link_timepoints(graph_, from, cfg);
    if (!ids.empty()) full_redraw(origin);
    return {{"links", ids}};
  }
  if (type == "labelTP") {
    require_idle_for_history();
    const std::int32_t t = payload.contains("t") ? json_int(payload, "t") : timepoint_;
    const auto before = graph_.version();
    const std::size_t n = label_all_true_positive(graph_, t);
    if (graph_.version() != before) full_redraw(origin);
    return {{"count", n}};
  }
  if (type == "train") {
    return {{"message", "training is not available in this build; request acknowledged"}};
  }
  throw ValidationError("unknown message type '" + type + "'");
}

// ---------------------------------------------------------------------------
// edits

Message SessionBridge::apply_edit(ClientId origin, const Message& request) {
  const std::string type = request.at("type").get<std::string>();
  const json& p = request.contains("payload") ? request["payload"] : json::object();

  if (type == "addSpot") {
    const std::int32_t t = json_int(p, "timepoint");
    const Vec3 pos = json_vec3_field(p, "position");
    const SymMat3 cov = p.contains("covariance") ? json_covariance(p["covariance"]) : SymMat3::isotropic(config_.merge_radius / 2.0);
    std::optional<TagRef> tag;
    if (p.contains("tag") && !p["tag"].is_null()) {
      tag = graph_.find_tag(p["tag"].get<std::string>());
      if (!tag) throw NotFoundError("unknown tag");
    }
    SpotId id;
    {
      BatchScope batch(graph_);
      id = graph_.add_spot(t, pos, cov);
      if (tag) graph_.set_tag(id, graph_.tag_sets()[static_cast<std::size_t>(*tag)].name);
    }
    return emit(origin, "addSpot", spot_to_json(graph_, id));
  }
  if (type == "moveSpot") {
    const SpotId id = json_int(p, "id");
    graph_.move_spot(id, json_vec3_field(p, "position"));
    return emit(origin, "moveSpot", {{"id", id}, {"position", graph_.spot(id).position}});
  }
  if (type == "deleteSpot") {
    const SpotId id = json_int(p, "id");
    if (!graph_.is_spot_alive(id)) throw NotFoundError("spot " + std::to_string(id) + " not found");
    std::vector<LinkId> links = graph_.incoming_links(id);
    const auto out = graph_.outgoing_links(id);
    links.insert(links.end(), out.begin(), out.end());
    std::sort(links.begin(), links.end());
    graph_.delete_spot(id);
    return emit(origin, "deleteSpot", {{"id", id}, {"links", links}});
  }
  if (type == "addLink") {
    const LinkId id = graph_.add_link(json_int(p, "source"), json_int(p, "target"));
    return emit(origin, "addLink", link_to_json(graph_, id));
  }
  if (type == "deleteLink") {
    const LinkId id = json_int(p, "id");
    graph_.delete_link(id);
    return emit(origin, "deleteLink", {{"id", id}});
  }
  if (type == "setTag") {
    const SpotId id = json_int(p, "id");
    if (!p.contains("tag") || p["tag"].is_null()) {
      graph_.clear_tag(id);
      return emit(origin, "setTag", {{"id", id}, {"tag", nullptr}});
    }
    const std::string name = p["tag"].get<std::string>();
    if (!graph_.find_tag(name)) {
      // unknown tags are defined on the fly when the request brings a color
      if (!p.contains("color")) throw NotFoundError("unknown tag '" + name + "' (send a color to define it)");
      const auto c = p["color"].get<std::array<float, 4>>();
      if (!graph_.is_spot_alive(id)) throw NotFoundError("spot " + std::to_string(id) + " not found");
      graph_.define_tag(name, Rgba{c[0], c[1], c[2], c[3]});
    }
    graph_.set_tag(id, name);
    const Rgba c = graph_.tag_sets()[static_cast<std::size_t>(*graph_.find_tag(name))].color;
    return emit(origin, "setTag", {{"id", id}, {"tag", name}, {"color", {c.r, c.g, c.b, c.a}}});
  }
  throw ValidationError("'" + type + "' is not a graph edit");
}

std::int32_t SessionBridge::clamp_timepoint(std::int32_t t, bool* clamped) const {
  const std::int32_t c = std::clamp(t, 0, graph_.timepoint_count() - 1);
  if (clamped) *clamped = c != t;
  return c;
}

void SessionBridge::set_timepoint(ClientId origin, std::int32_t t) {
  if (mode_ != SessionMode::Idle) throw StateError("timepoint is driven by the active track");
  bool clamped = false;
  timepoint_ = clamp_timepoint(t, &clamped);
  emit(origin, "setTimepoint", {{"t", timepoint_}, {"clamped", clamped}, {"requested", t}});
}

std::optional<std::int32_t> SessionBridge::next_timepoint(std::int32_t t) const {
  const std::int32_t n = config_.direction == PlaybackDirection::Backwards ? t - 1 : t + 1;
  if (n < 0 || n >= graph_.timepoint_count()) return std::nullopt;
  return n;
}

std::optional<SpotId> SessionBridge::hit_test(std::int32_t t, const Vec3& p) const {
  std::optional<SpotId> best;
  double best_d = 0.0;
  for (SpotId id : graph_.spots_at_timepoint(t)) {
    const double d = (graph_.spot(id).pos() - p).norm();
    if (d <= config_.merge_radius && (!best || d < best_d)) {
      best = id;
      best_d = d;
    }
  }
  return best;
}

void SessionBridge::require_idle_for_history() const {
  if (mode_ != SessionMode::Idle) throw StateError("finish the active track first");
}

// ---------------------------------------------------------------------------
// controller-style annotation

SpotId SessionBridge::annotate_and_advance(ClientId origin, const Vec3& position) {
  if (mode_ == SessionMode::Tracing) throw StateError("cannot annotate while tracing");
  if (!position.allFinite()) throw ValidationError("position must be finite");
  if (mode_ == SessionMode::Idle) {
    mode_ = SessionMode::Annotating;
    cursor_.active_track.clear();
    cursor_.direction = config_.direction;
    annotation_history_mark_ = graph_.recorder().undo_depth();
  }

  const std::int32_t t = timepoint_;
  const std::optional<SpotId> hit = hit_test(t, position);
  const bool merging = hit && !cursor_.active_track.empty();

  SpotId id;
  if (hit) {
    id = *hit;
  } else {
    id = graph_.add_spot(t, position, SymMat3::isotropic(config_.merge_radius / 2.0));
    emit(origin, "addSpot", spot_to_json(graph_, id));
  }
  if (!cursor_.active_track.empty()) {
    const SpotId prev = cursor_.active_track.back();
    // links always point forward in time
    const bool prev_earlier = graph_.spot(prev).timepoint < t;
    const SpotId source = prev_earlier ? prev : id;
    const SpotId target = prev_earlier ? id : prev;
    if (!graph_.find_link(source, target)) {
      const LinkId link = graph_.add_link(source, target);
      emit(origin, "addLink", link_to_json(graph_, link));
    }
  }
  cursor_.active_track.push_back(id);

  const auto next = next_timepoint(t);
  if (merging || !next) {
    terminate_track(origin);
  } else {
    timepoint_ = *next;
    emit(origin, "setTimepoint", {{"t", timepoint_}, {"clamped", false}, {"requested", timepoint_}});
  }
  return id;
}

json SessionBridge::terminate_track(ClientId origin) {
  if (mode_ != SessionMode::Annotating || cursor_.active_track.empty()) {
    return {{"spots", 0}, {"committed", false}};
  }
  const std::size_t spots = cursor_.active_track.size();
  const bool changed = graph_.recorder().undo_depth() > annotation_history_mark_;
  graph_.coalesce_history(annotation_history_mark_);
  mode_ = SessionMode::Idle;
  cursor_.active_track.clear();
  if (changed) full_redraw(origin);
  return {{"spots", spots}, {"committed", changed}, {"version", version_}};
}

// ---------------------------------------------------------------------------
// gaze/pointer tracing

void SessionBridge::start_trace(ClientId origin) {
  if (!volume_) throw StateError("no volume loaded");
  if (mode_ != SessionMode::Idle) throw StateError("start_trace requires an idle session");
  trace_.emplace(config_.smoothing, config_.direction);
  trace_owner_ = origin;
  playback_accumulator_ = 0.0;
  mode_ = SessionMode::Tracing;
}

void SessionBridge::append_ray(ClientId, const Vec3& ray_origin, const Vec3& direction) {
  if (mode_ != SessionMode::Tracing || !trace_) throw StateError("append_ray requires a recording trace");
  double length = config_.ray_length;
  if (length <= 0.0) {
    const VolumeHeader& h = volume_->header();
    length = 2.0 * (h.world_extent() + h.voxel_size).norm();
  }
  RayProfile ray;
  ray.timepoint = timepoint_;
  ray.origin = ray_origin;
  ray.direction = direction;
  ray.step = config_.ray_step;
  ray.raw = volume_->sample_ray(timepoint_, ray_origin, direction, config_.ray_step, length);
  trace_->add_ray(std::move(ray));
}

json SessionBridge::end_trace(ClientId origin) {
  if (mode_ != SessionMode::Tracing || !trace_) throw StateError("no trace is recording");
  TraceSession session = std::move(*trace_);
  trace_.reset();
  mode_ = SessionMode::Idle;
  if (session.rays().empty()) throw ExtractionFailed("trace recorded no rays");
  session.analyze();
  const auto track = extract_track(session);
  const CommitResult committed = commit_track(track, graph_, config_.merge_radius);
  session.mark_committed();
  full_redraw(origin);

  json points = json::array();
  for (const TrackPoint& p : track) points.push_back({{"timepoint", p.timepoint}, {"position", vec3_json(p.position)}});
  return {{"spots", committed.spots},
          {"links", committed.links},
          {"created", committed.created_spots},
          {"track", std::move(points)}};
}

void SessionBridge::set_playback_rate(double rate) {
  if (!(rate > 0.0) || !std::isfinite(rate)) throw ValidationError("playback rate must be > 0");
  config_.playback_rate = rate;
}

void SessionBridge::tick(double seconds) {
  if (mode_ != SessionMode::Tracing || !(seconds > 0.0)) return;
  playback_accumulator_ += seconds * config_.playback_rate;
  while (playback_accumulator_ >= 1.0 && mode_ == SessionMode::Tracing) {
    playback_accumulator_ -= 1.0;
    const auto next = next_timepoint(timepoint_);
    if (!next) {
      const ClientId owner = trace_owner_;
      try {
        end_trace(kEngine);
      } catch (const Error& e) {
        send(owner, {{"type", "error"},
                     {"version", version_},
                     {"origin", kEngine},
                     {"payload", {{"request", "endTrace"}, {"code", e.code()}, {"reason", e.what()}}}});
      }
      break;
    }
    timepoint_ = *next;
    emit(kEngine, "setTimepoint", {{"t", timepoint_}, {"clamped", false}, {"requested", timepoint_}});
  }
}

// ---------------------------------------------------------------------------
// history

bool SessionBridge::undo(ClientId origin) {
  require_idle_for_history();
  if (!graph_.undo()) return false;
  full_redraw(origin);
  return true;
}

bool SessionBridge::redo(ClientId origin) {
  require_idle_for_history();
  if (!graph_.redo()) return false;
  full_redraw(origin);
  return true;
}

// ---------------------------------------------------------------------------
// replica

GraphReplica::GraphReplica(std::int32_t timepoint_count) : graph_(timepoint_count) {}

void GraphReplica::apply(const Message& message) {
  const std::string type = message.value("type", std::string());
  if (type == "welcome") {
    const json& p = message.at("payload");
    graph_ = graph_from_json(p.at("snapshot"), p.value("timepointCount", graph_.timepoint_count()));
    timepoint_ = p.value("timepoint", 0);
    version_ = message.at("version").get<std::uint64_t>();
    needs_redraw_ = false;
    return;
  }
  if (type == "ack") {
    for (const json& e : message.at("payload").value("events", json::array())) apply_event(e);
    return;
  }
  if (type == "reject" || type == "error") return;
  apply_event(message);
}

void GraphReplica::apply_event(const Message& event) {
  const std::string type = event.at("type").get<std::string>();
  const auto v = event.at("version").get<std::uint64_t>();
  const json& p = event.at("payload");

  if (type == "fullRedraw") {
    if (v < version_) return;
    graph_ = graph_from_json(p.at("snapshot"), graph_.timepoint_count());
    timepoint_ = p.value("timepoint", timepoint_);
    version_ = v;
    needs_redraw_ = false;
    return;
  }
  if (v <= version_ || needs_redraw_) return;
  if (v != version_ + 1) {
    needs_redraw_ = true;
    return;
  }

  if (type == "addSpot") {
    TagRef tag = kNoTag;
    if (p.contains("tag") && !p["tag"].is_null()) {
      const auto name = p["tag"].get<std::string>();
      tag = graph_.find_tag(name).value_or(kNoTag);
      if (tag == kNoTag) tag = graph_.define_tag(name, Rgba{});
    }
    const auto pos = p.at("position").get<std::array<double, 3>>();
    graph_.insert_spot_at(p.at("id").get<SpotId>(), p.at("timepoint").get<std::int32_t>(), Vec3(pos[0], pos[1], pos[2]),
                          json_covariance(p.at("covariance")), tag);
  } else if (type == "moveSpot") {
    graph_.move_spot(p.at("id").get<SpotId>(), json_vec3(p.at("position")));
  } else if (type == "deleteSpot") {
    graph_.delete_spot(p.at("id").get<SpotId>());
  } else if (type == "addLink") {
    graph_.insert_link_at(p.at("id").get<LinkId>(), p.at("source").get<SpotId>(), p.at("target").get<SpotId>());
  } else if (type == "deleteLink") {
    graph_.delete_link(p.at("id").get<LinkId>());
  } else if (type == "setTag") {
    const SpotId id = p.at("id").get<SpotId>();
    if (p.at("tag").is_null()) {
      graph_.clear_tag(id);
    } else {
      const auto name = p["tag"].get<std::string>();
      if (!graph_.find_tag(name)) {
        const auto c = p.value("color", std::array<float, 4>{1, 1, 1, 1});
        graph_.define_tag(name, Rgba{c[0], c[1], c[2], c[3]});
      }
      graph_.set_tag(id, name);
    }
  } else if (type == "setTimepoint") {
    timepoint_ = p.at("t").get<std::int32_t>();
  }
  version_ = v;
}

}  // namespace trackbridge
