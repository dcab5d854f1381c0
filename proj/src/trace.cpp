#include "trackbridge/trace.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <queue>

namespace trackbridge {

using nlohmann::json;

void SmoothingConfig::validate() const {
  if (iterations < 0) throw ValidationError("smoothing iterations must be >= 0");
  if (!(maxima_threshold_fraction >= 0.0 && maxima_threshold_fraction <= 1.0)) {
    throw ValidationError("maxima threshold fraction must be in [0, 1]");
  }
  if (std::abs(kernel[0] + kernel[1] + kernel[2] - 1.0) > 1e-12) {
    throw ValidationError("smoothing kernel weights must sum to 1");
  }
}

std::vector<double> smooth_profile(std::span<const double> raw, const SmoothingConfig& config) {
  std::vector<double> cur(raw.begin(), raw.end());
  if (cur.empty() || config.iterations <= 0) return cur;
  const auto [wl, wc, wr] = config.kernel;
  std::vector<double> next(cur.size());
  const std::size_t last = cur.size() - 1;
  for (int it = 0; it < config.iterations; ++it) {
    for (std::size_t i = 0; i <= last; ++i) {
      const double left = cur[i == 0 ? 0 : i - 1];
      const double right = cur[i == last ? last : i + 1];
      next[i] = wl * left + wc * cur[i] + wr * right;
    }
    cur.swap(next);
  }
  return cur;
}

std::vector<std::size_t> find_local_maxima(std::span<const double> smoothed, double threshold) {
  std::vector<std::size_t> out;
  for (std::size_t i = 1; i + 1 < smoothed.size(); ++i) {
    if (smoothed[i] > smoothed[i - 1] && smoothed[i] > smoothed[i + 1] && smoothed[i] >= threshold) {
      out.push_back(i);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

TraceSession::TraceSession(SmoothingConfig config, PlaybackDirection direction)
    : config_(config), direction_(direction) {
  config_.validate();
}

void TraceSession::add_ray(RayProfile ray) {
  if (state_ != State::Recording) throw StateError("trace session is no longer recording");
  if (!(ray.step > 0.0)) throw ValidationError("ray step must be > 0");
  if (std::abs(ray.direction.norm() - 1.0) > 1e-6) throw ValidationError("ray direction must be unit length");
  if (ray.raw.empty()) throw ValidationError("ray profile is empty");
  if (!rays_.empty()) {
    const auto prev = rays_.back().timepoint;
    const bool ok = direction_ == PlaybackDirection::Backwards ? ray.timepoint <= prev : ray.timepoint >= prev;
    if (!ok) throw ValidationError("ray timepoints must follow the playback direction");
  }
  ray.smoothed.clear();
  rays_.push_back(std::move(ray));
}

void TraceSession::analyze() {
  if (state_ == State::Committed) throw StateError("trace session already committed");
  double global_max = 0.0;
  for (RayProfile& ray : rays_) {
    ray.smoothed = smooth_profile(ray.raw, config_);
    for (double v : ray.smoothed) global_max = std::max(global_max, v);
  }
  threshold_ = config_.maxima_threshold_fraction * global_max;
  maxima_.assign(rays_.size(), {});
  for (std::size_t r = 0; r < rays_.size(); ++r) {
    const RayProfile& ray = rays_[r];
    for (std::size_t k : find_local_maxima(ray.smoothed, threshold_)) {
      maxima_[r].push_back({r, k, ray.timepoint, ray.sample_position(k), ray.smoothed[k]});
    }
  }
  state_ = State::Analyzed;
}

void TraceSession::mark_committed() {
  if (state_ != State::Analyzed) throw StateError("trace session must be analyzed before commit");
  state_ = State::Committed;
}

// ---------------------------------------------------------------------------

LayerGraph build_layer_graph(const TraceSession& session) {
  if (session.state() == TraceSession::State::Recording) throw StateError("trace session not analyzed");
  LayerGraph g;
  const auto& maxima = session.maxima();
  for (std::size_t r = 0; r < maxima.size(); ++r) {
    if (maxima[r].empty()) {
      g.gaps.push_back(r);
    } else {
      g.layers.push_back(maxima[r]);
    }
  }
  if (g.layers.empty()) throw ExtractionFailed("no ray contains a local maximum");
  return g;
}

LayerPath shortest_layer_path(const LayerGraph& graph) {
  if (graph.layers.empty()) throw ExtractionFailed("layer graph is empty");
  const std::size_t n_layers = graph.layers.size();
  const auto& last = graph.layers.back();

  Vec3 centroid = Vec3::Zero();
  for (const auto& m : last) centroid += m.world_position;
  centroid /= static_cast<double>(last.size());
  double radius = 0.0;
  for (const auto& m : last) radius = std::max(radius, (m.world_position - centroid).norm());
  auto heuristic = [&](const Vec3& p) { return std::max(0.0, (p - centroid).norm() - radius); };

  // node key = (layer, index); offsets give a flat index
  std::vector<std::size_t> offset(n_layers + 1, 0);
  for (std::size_t l = 0; l < n_layers; ++l) offset[l + 1] = offset[l] + graph.layers[l].size();
  const std::size_t total = offset[n_layers];
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> best(total, kInf);
  std::vector<std::size_t> parent(total, std::numeric_limits<std::size_t>::max());
  std::vector<bool> closed(total, false);

  struct Entry {
    double f;
    double g;
    std::size_t layer;
    std::size_t index;
  };
  auto worse = [](const Entry& a, const Entry& b) {
    if (a.f != b.f) return a.f > b.f;
    if (a.layer != b.layer) return a.layer < b.layer;  // prefer deeper nodes on ties
    return a.index > b.index;
  };
  std::priority_queue<Entry, std::vector<Entry>, decltype(worse)> open(worse);

  best[0] = 0.0;
  open.push({heuristic(graph.layers[0][0].world_position), 0.0, 0, 0});

  LayerPath result;
  std::size_t goal = total;
  while (!open.empty()) {
    const Entry e = open.top();
    open.pop();
    const std::size_t key = offset[e.layer] + e.index;
    if (closed[key]) continue;
    closed[key] = true;
    ++result.expanded;
    if (e.layer + 1 == n_layers) {
      goal = key;
      break;
    }
    const Vec3& p = graph.layers[e.layer][e.index].world_position;
    const auto& next = graph.layers[e.layer + 1];
    for (std::size_t j = 0; j < next.size(); ++j) {
      const std::size_t nkey = offset[e.layer + 1] + j;
      if (closed[nkey]) continue;
      const double g = e.g + (next[j].world_position - p).norm();
      if (g < best[nkey]) {
        best[nkey] = g;
        parent[nkey] = key;
        open.push({g + heuristic(next[j].world_position), g, e.layer + 1, j});
      }
    }
  }

  result.cost = best[goal];
  result.nodes.assign(n_layers, 0);
  for (std::size_t key = goal, layer = n_layers - 1;; --layer) {
    result.nodes[layer] = key - offset[layer];
    if (layer == 0) break;
    key = parent[key];
  }
  return result;
}

std::vector<TrackPoint> extract_track(const TraceSession& session) {
  const LayerGraph graph = build_layer_graph(session);
  const LayerPath path = shortest_layer_path(graph);

  // collapse to the strongest maximum per timepoint
  std::map<std::int32_t, const LocalMaximum*> per_timepoint;
  for (std::size_t l = 0; l < graph.layers.size(); ++l) {
    const LocalMaximum& m = graph.layers[l][path.nodes[l]];
    auto [it, inserted] = per_timepoint.try_emplace(m.timepoint, &m);
    if (!inserted && m.value > it->second->value) it->second = &m;
  }
  std::vector<TrackPoint> track;
  track.reserve(per_timepoint.size());
  for (const auto& [t, m] : per_timepoint) track.push_back({t, m->world_position});
  return track;
}

// ---------------------------------------------------------------------------

namespace {

std::optional<SpotId> nearest_spot(const LineageGraph& graph, std::int32_t t, const Vec3& p, double radius) {
  std::optional<SpotId> best;
  double best_d = 0.0;
  for (SpotId id : graph.spots_at_timepoint(t)) {
    const double d = (graph.spot(id).pos() - p).norm();
    if (d <= radius && (!best || d < best_d)) {
      best = id;
      best_d = d;
    }
  }
  return best;
}

}  // namespace

CommitResult commit_track(std::span<const TrackPoint> track, LineageGraph& graph, double merge_radius) {
  if (track.empty()) throw ValidationError("cannot commit an empty track");
  if (!(merge_radius >= 0.0)) throw ValidationError("merge radius must be >= 0");

  std::vector<TrackPoint> points(track.begin(), track.end());
  std::sort(points.begin(), points.end(), [](const TrackPoint& a, const TrackPoint& b) { return a.timepoint < b.timepoint; });
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto t = points[i].timepoint;
    if (t < 0 || t >= graph.timepoint_count()) throw RangeError("track timepoint " + std::to_string(t) + " outside dataset");
    if (!points[i].position.allFinite()) throw ValidationError("track position must be finite");
    if (i > 0 && t == points[i - 1].timepoint) throw ValidationError("track has two points at one timepoint");
  }

  // fill timepoint gaps
  std::vector<TrackPoint> filled;
  filled.reserve(static_cast<std::size_t>(points.back().timepoint - points.front().timepoint + 1));
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (i > 0) {
      const TrackPoint& a = points[i - 1];
      const TrackPoint& b = points[i];
      const double span = b.timepoint - a.timepoint;
      for (std::int32_t t = a.timepoint + 1; t < b.timepoint; ++t) {
        const double u = (t - a.timepoint) / span;
        filled.push_back({t, a.position + u * (b.position - a.position)});
      }
    }
    filled.push_back(points[i]);
  }

  const SymMat3 cov = SymMat3::isotropic(std::max(merge_radius, 1e-6) / 2.0);
  CommitResult result;
  BatchScope batch(graph);
  for (std::size_t i = 0; i < filled.size(); ++i) {
    const bool is_end = i == 0 || i + 1 == filled.size();
    std::optional<SpotId> reuse;
    if (is_end) reuse = nearest_spot(graph, filled[i].timepoint, filled[i].position, merge_radius);
    SpotId id;
    if (reuse) {
      id = *reuse;
      if (i == 0) result.reused_first = true;
      if (i + 1 == filled.size()) result.reused_last = true;
    } else {
      id = graph.add_spot(filled[i].timepoint, filled[i].position, cov);
      ++result.created_spots;
    }
    if (!result.spots.empty()) {
      const SpotId prev = result.spots.back();
      if (!graph.find_link(prev, id)) result.links.push_back(graph.add_link(prev, id));
    }
    result.spots.push_back(id);
  }
  return result;
}

// ---------------------------------------------------------------------------

json rays_to_json(std::span<const RayProfile> rays) {
  json out = json::array();
  for (const RayProfile& r : rays) {
    out.push_back({{"timepoint", r.timepoint},
                   {"origin", {r.origin.x(), r.origin.y(), r.origin.z()}},
                   {"direction", {r.direction.x(), r.direction.y(), r.direction.z()}},
                   {"step", r.step},
                   {"raw", r.raw}});
  }
  return out;
}

std::vector<RayProfile> rays_from_json(const json& j) {
  std::vector<RayProfile> rays;
  try {
    for (const json& r : j) {
      RayProfile ray;
      ray.timepoint = r.at("timepoint").get<std::int32_t>();
      const auto o = r.at("origin").get<std::array<double, 3>>();
      const auto d = r.at("direction").get<std::array<double, 3>>();
      ray.origin = Vec3(o[0], o[1], o[2]);
      ray.direction = Vec3(d[0], d[1], d[2]);
      ray.step = r.at("step").get<double>();
      if (r.contains("raw")) ray.raw = r["raw"].get<std::vector<double>>();
      rays.push_back(std::move(ray));
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed trace file: ") + e.what());
  }
  return rays;
}

}  // namespace trackbridge
