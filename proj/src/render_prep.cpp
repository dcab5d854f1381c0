#include "trackbridge/render_prep.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>

#include <Eigen/Eigenvalues>
#include <Eigen/Geometry>

namespace trackbridge {

using nlohmann::json;

InstancePool::InstancePool(InstanceKind kind, std::size_t capacity) : kind_(kind), instances_(capacity) {}

std::size_t InstancePool::active_count() const {
  return static_cast<std::size_t>(
      std::count_if(instances_.begin(), instances_.end(), [](const Instance& i) { return i.active; }));
}

bool InstancePool::reserve(std::size_t required) {
  if (required <= instances_.size()) return false;
  const auto grown = static_cast<std::size_t>(std::ceil(static_cast<double>(instances_.size()) * 1.5));
  instances_.resize(std::max(required, grown));
  return true;
}

// ---------------------------------------------------------------------------
// colormaps

void ColorMap::validate() const {
  if (stops.size() < 2) throw ValidationError("colormap needs at least two stops");
  if (!(t_min < t_max)) throw ValidationError("colormap domain must satisfy t_min < t_max");
}

ColorMap ColorMap::viridis(double t_min, double t_max) {
  ColorMap m;
  m.name = "viridis";
  m.stops = {{0.267f, 0.005f, 0.329f, 1.0f},
             {0.230f, 0.322f, 0.546f, 1.0f},
             {0.128f, 0.567f, 0.551f, 1.0f},
             {0.369f, 0.789f, 0.383f, 1.0f},
             {0.993f, 0.906f, 0.144f, 1.0f}};
  m.t_min = t_min;
  m.t_max = t_max;
  return m;
}

ColorMap ColorMap::grayscale(double t_min, double t_max) {
  ColorMap m;
  m.name = "grayscale";
  m.stops = {{0.0f, 0.0f, 0.0f, 1.0f}, {1.0f, 1.0f, 1.0f, 1.0f}};
  m.t_min = t_min;
  m.t_max = t_max;
  return m;
}

Rgba track_color(const ColorMap& cmap, double t) {
  cmap.validate();
  const double u = std::clamp((t - cmap.t_min) / (cmap.t_max - cmap.t_min), 0.0, 1.0);
  const double pos = u * static_cast<double>(cmap.stops.size() - 1);
  const auto lo = std::min(static_cast<std::size_t>(pos), cmap.stops.size() - 2);
  const double f = pos - static_cast<double>(lo);
  const Rgba& a = cmap.stops[lo];
  const Rgba& b = cmap.stops[lo + 1];
  auto mix = [f](float x, float y) { return static_cast<float>(x + f * (y - x)); };
  return {mix(a.r, b.r), mix(a.g, b.g), mix(a.b, b.b), mix(a.a, b.a)};
}

json colormap_to_json(const ColorMap& cmap) {
  json stops = json::array();
  for (const Rgba& c : cmap.stops) stops.push_back({c.r, c.g, c.b, c.a});
  return {{"name", cmap.name}, {"stops", stops}, {"domain", {cmap.t_min, cmap.t_max}}};
}

ColorMap colormap_from_json(const json& j) {
  ColorMap m;
  try {
    const auto domain = j.at("domain").get<std::array<double, 2>>();
    const std::string name = j.value("name", std::string("viridis"));
    if (!j.contains("stops") && name == "grayscale") {
      m = ColorMap::grayscale(domain[0], domain[1]);
    } else if (!j.contains("stops")) {
      m = ColorMap::viridis(domain[0], domain[1]);
    } else {
      m.name = name;
      m.t_min = domain[0];
      m.t_max = domain[1];
      for (const json& s : j["stops"]) {
        const auto c = s.get<std::array<float, 4>>();
        m.stops.push_back({c[0], c[1], c[2], c[3]});
      }
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed colormap: ") + e.what());
  }
  m.validate();
  return m;
}

// ---------------------------------------------------------------------------
// visibility

VisibilityWindow::VisibilityWindow(const LineageGraph& graph, std::int32_t width) {
  set_width(width);
  rebuild(graph);
}

void VisibilityWindow::set_width(std::int32_t width) {
  if (width < 0) throw ValidationError("window width must be >= 0");
  width_ = width;
}

void VisibilityWindow::rebuild(const LineageGraph& graph) {
  index_.clear();
  index_.reserve(graph.link_count());
  for (LinkId id : graph.alive_links()) on_link_added(graph, id);
  version_ = graph.version();
}

void VisibilityWindow::on_link_added(const LineageGraph& graph, LinkId id) {
  const LinkRecord& l = graph.link(id);
  const auto a = graph.spot(l.source).timepoint;
  const auto b = graph.spot(l.target).timepoint;
  index_[id] = {std::min(a, b), std::max(a, b)};
}

void VisibilityWindow::on_link_removed(LinkId id) { index_.erase(id); }

std::vector<LinkId> visible_links(const VisibilityWindow& window, const LineageGraph& graph, std::int32_t current) {
  if (window.version() != graph.version()) {
    throw StaleIndexError("visibility index at version " + std::to_string(window.version()) + ", graph at " +
                          std::to_string(graph.version()));
  }
  std::vector<LinkId> out;
  const std::int64_t lower = static_cast<std::int64_t>(current) - window.width();
  for (const auto& [id, range] : window.index()) {
    if (range.first >= lower && range.second <= current) out.push_back(id);
  }
  std::sort(out.begin(), out.end());
  return out;
}

// ---------------------------------------------------------------------------
// transforms

namespace {

std::array<float, 16> compose(const Mat3& linear, const Vec3& translation) {
  std::array<float, 16> m{};
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) m[static_cast<std::size_t>(r * 4 + c)] = static_cast<float>(linear(r, c));
    m[static_cast<std::size_t>(r * 4 + 3)] = static_cast<float>(translation[r]);
  }
  m[15] = 1.0f;
  return m;
}

}  // namespace

std::array<float, 16> spot_transform(const SpotRecord& spot) {
  Eigen::SelfAdjointEigenSolver<Mat3> solver;
  solver.computeDirect(spot.covariance.matrix());
  Mat3 rotation = solver.eigenvectors();
  if (rotation.determinant() < 0.0) rotation.col(0) = -rotation.col(0);
  Vec3 scale;
  for (int i = 0; i < 3; ++i) {
    const double lambda = solver.eigenvalues()[i];
    const double s = lambda > 0.0 ? std::sqrt(lambda) : 0.0;
    scale[i] = std::max(s, kMinVisibleRadius);
  }
  return compose(rotation * scale.asDiagonal(), spot.pos());
}

std::array<float, 16> link_transform(const Vec3& from, const Vec3& to, double radius) {
  const Vec3 d = to - from;
  const double length = d.norm();
  const Vec3 y = length > 0.0 ? Vec3(d / length) : Vec3::UnitY();
  const Vec3 helper = std::abs(y.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitZ();
  const Vec3 x = y.cross(helper).normalized();
  const Vec3 z = x.cross(y);
  Mat3 linear;
  linear.col(0) = x * radius;
  linear.col(1) = y * length;
  linear.col(2) = z * radius;
  return compose(linear, 0.5 * (from + to));
}

// ---------------------------------------------------------------------------
// pools

ScenePools populate_pools(const LineageGraph& graph, double link_radius) {
  const auto start = std::chrono::steady_clock::now();
  ScenePools pools;
  pools.link_radius = link_radius;

  std::unordered_map<std::int32_t, std::size_t> per_timepoint;
  for (SpotId id : graph.alive_spots()) ++per_timepoint[graph.spot(id).timepoint];
  std::size_t max_spots = 0;
  for (const auto& [t, n] : per_timepoint) max_spots = std::max(max_spots, n);
  pools.spots = InstancePool(InstanceKind::Spot, max_spots);

  const auto links = graph.alive_links();
  pools.links = InstancePool(InstanceKind::Link, links.size());
  pools.link_slots.reserve(links.size());
  for (std::size_t slot = 0; slot < links.size(); ++slot) {
    const LinkRecord& l = graph.link(links[slot]);
    Instance& inst = pools.links[slot];
    inst.id = links[slot];
    inst.transform = link_transform(graph.spot(l.source).pos(), graph.spot(l.target).pos(), link_radius);
    pools.link_slots.emplace(links[slot], slot);
  }

  pools.population_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return pools;
}

FrameStats update_for_timepoint(ScenePools& pools, const LineageGraph& graph, std::int32_t t,
                                const VisibilityWindow& window, const ColorMap& cmap) {
  FrameStats stats;
  const auto tag_color = [&graph](SpotId id) -> const Rgba* {
    const TagRef tag = graph.spot(id).tag;
    return tag == kNoTag ? nullptr : &graph.tag_sets()[static_cast<std::size_t>(tag)].color;
  };

  // spots: slot i shows the i-th spot of the timepoint in id order
  const auto spots = graph.spots_at_timepoint(t);
  stats.grew = pools.spots.reserve(spots.size());
  const Rgba time_color = track_color(cmap, t);
  for (std::size_t slot = 0; slot < pools.spots.capacity(); ++slot) {
    Instance& inst = pools.spots[slot];
    if (slot < spots.size()) {
      const SpotRecord& s = graph.spot(spots[slot]);
      inst.active = true;
      inst.id = spots[slot];
      inst.transform = spot_transform(s);
      const Rgba* tc = tag_color(spots[slot]);
      inst.color = tc ? *tc : time_color;
    } else {
      inst = Instance{};
    }
  }

  // links: slots are bound to link ids for the pool's lifetime
  const auto visible = visible_links(window, graph, t);
  for (LinkId id : visible) {
    if (pools.link_slots.count(id)) continue;
    const std::size_t slot = pools.link_slots.size();
    stats.grew = pools.links.reserve(slot + 1) || stats.grew;
    pools.link_slots.emplace(id, slot);
  }
  for (std::size_t slot = 0; slot < pools.links.capacity(); ++slot) pools.links[slot].active = false;
  for (LinkId id : visible) {
    Instance& inst = pools.links[pools.link_slots.at(id)];
    const LinkRecord& l = graph.link(id);
    inst.active = true;
    inst.id = id;
    inst.transform = link_transform(graph.spot(l.source).pos(), graph.spot(l.target).pos(), pools.link_radius);
    const Rgba* tc = tag_color(l.source);
    inst.color = tc ? *tc : track_color(cmap, graph.spot(l.source).timepoint);
  }

  stats.active_spots = spots.size();
  stats.active_links = visible.size();
  stats.spot_capacity = pools.spots.capacity();
  stats.link_capacity = pools.links.capacity();
  return stats;
}

json frame_dump(const ScenePools& pools, std::int32_t t) {
  json instances = json::array();
  auto dump = [&instances](const InstancePool& pool, const char* kind) {
    for (const Instance& inst : pool.instances()) {
      if (!inst.active) continue;
      instances.push_back({{"kind", kind},
                           {"id", inst.id},
                           {"transform", inst.transform},
                           {"rgba", {inst.color.r, inst.color.g, inst.color.b, inst.color.a}}});
    }
  };
  dump(pools.spots, "spot");
  dump(pools.links, "link");
  return {{"timepoint", t}, {"instances", std::move(instances)}};
}

// ---------------------------------------------------------------------------
// presenter

ScenePresenter::ScenePresenter(std::int32_t window_width, ColorMap cmap) : cmap_(std::move(cmap)) {
  cmap_.validate();
  window_.set_width(window_width);
}

void ScenePresenter::rebuild(const LineageGraph& graph) {
  pools_ = populate_pools(graph, pools_.link_radius);
  window_.rebuild(graph);
  ++full_redraws_;
  update_for_timepoint(pools_, graph, timepoint_, window_, cmap_);
}

FrameStats ScenePresenter::show(const LineageGraph& graph, std::int32_t t) {
  timepoint_ = t;
  if (window_.version() != graph.version()) window_.rebuild(graph);
  return update_for_timepoint(pools_, graph, t, window_, cmap_);
}

void ScenePresenter::on_event(const LineageGraph& graph, const json& event) {
  const std::string type = event.value("type", std::string());
  const json& payload = event.contains("payload") ? event["payload"] : json::object();
  if (type == "fullRedraw") {
    timepoint_ = payload.value("timepoint", timepoint_);
    rebuild(graph);
    return;
  }
  if (type == "setTimepoint") {
    show(graph, payload.value("t", timepoint_));
    return;
  }
  if (type == "addLink") {
    const LinkId id = payload.at("id").get<LinkId>();
    if (graph.is_link_alive(id)) window_.on_link_added(graph, id);
  } else if (type == "deleteLink") {
    window_.on_link_removed(payload.at("id").get<LinkId>());
  } else if (type == "deleteSpot") {
    for (const json& l : payload.value("links", json::array())) window_.on_link_removed(l.get<LinkId>());
  } else if (type != "addSpot" && type != "moveSpot" && type != "setTag") {
    return;
  }
  ++partial_updates_;
  window_.sync_version(graph);
  update_for_timepoint(pools_, graph, timepoint_, window_, cmap_);
}

// ---------------------------------------------------------------------------
// benchmark

LineageGraph make_bench_graph(std::size_t links, std::size_t spots_min, std::size_t spots_max, std::uint64_t seed) {
  if (spots_min == 0 || spots_max < spots_min) throw ValidationError("bench needs 0 < spots_min <= spots_max");
  LineageGraph graph;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> count(spots_min, spots_max);
  std::uniform_real_distribution<double> ux(0.0, 700.0);
  std::uniform_real_distribution<double> uy(0.0, 660.0);
  std::uniform_real_distribution<double> uz(0.0, 113.0);
  std::normal_distribution<double> jitter(0.0, 1.5);
  const SymMat3 cov = SymMat3::isotropic(3.0);

  graph.begin_batch();
  std::vector<SpotId> previous;
  const std::size_t first = count(rng);
  for (std::size_t i = 0; i < first; ++i) previous.push_back(graph.add_spot(0, Vec3(ux(rng), uy(rng), uz(rng)), cov));

  std::size_t made = 0;
  for (std::int32_t t = 1; made < links; ++t) {
    const std::size_t n = std::min(count(rng), previous.size() * 2);
    std::vector<SpotId> current;
    current.reserve(n);
    for (std::size_t j = 0; j < n && made < links; ++j) {
      // continuation for the first |previous| targets, divisions after that
      const SpotId parent = previous[j % previous.size()];
      const Vec3 p = graph.spot(parent).pos() + Vec3(jitter(rng), jitter(rng), jitter(rng));
      const SpotId child = graph.add_spot(t, p, cov);
      graph.add_link(parent, child);
      current.push_back(child);
      ++made;
    }
    previous = std::move(current);
  }
  graph.commit_batch();
  graph.clear_history();
  return graph;
}

BenchReport bench_populate(std::size_t links, std::size_t spots_min, std::size_t spots_max, std::uint64_t seed,
                           int repeats) {
  BenchReport report;
  const auto start = std::chrono::steady_clock::now();
  const LineageGraph graph = make_bench_graph(links, spots_min, spots_max, seed);
  report.generation_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  report.links = graph.link_count();
  report.spots_min = spots_min;
  report.spots_max = spots_max;
  report.spots = graph.spot_count();
  std::int32_t last_t = 0;
  for (SpotId id : graph.alive_spots()) last_t = std::max(last_t, graph.spot(id).timepoint);
  report.timepoints = last_t + 1;

  report.population_seconds = std::numeric_limits<double>::infinity();
  for (int r = 0; r < std::max(1, repeats); ++r) {
    const ScenePools pools = populate_pools(graph);
    report.population_seconds = std::min(report.population_seconds, pools.population_seconds);
    report.spot_capacity = pools.spots.capacity();
    report.link_capacity = pools.links.capacity();
  }
  report.seconds_per_link = report.links ? report.population_seconds / static_cast<double>(report.links) : 0.0;
  return report;
}

json bench_report_to_json(const BenchReport& r) {
  return {{"links", r.links},
          {"spotsPerTimepoint", {r.spots_min, r.spots_max}},
          {"spots", r.spots},
          {"timepoints", r.timepoints},
          {"spotCapacity", r.spot_capacity},
          {"linkCapacity", r.link_capacity},
          {"populationSeconds", r.population_seconds},
          {"secondsPerLink", r.seconds_per_link},
          {"generationSeconds", r.generation_seconds}};
}

}  // namespace trackbridge
