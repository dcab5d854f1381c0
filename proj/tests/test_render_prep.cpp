#include <doctest.h>

#include <algorithm>
#include <random>

#include <Eigen/SVD>

#include "trackbridge/render_prep.hpp"

using namespace trackbridge;

namespace {

Vec3 xform(const std::array<float, 16>& m, const Vec3& p) {
  Vec3 out;
  for (int r = 0; r < 3; ++r) {
    out[r] = m[static_cast<std::size_t>(r * 4 + 0)] * p.x() + m[static_cast<std::size_t>(r * 4 + 1)] * p.y() +
             m[static_cast<std::size_t>(r * 4 + 2)] * p.z() + m[static_cast<std::size_t>(r * 4 + 3)];
  }
  return out;
}

LineageGraph random_graph(std::mt19937_64& rng, std::int32_t timepoints, int spots) {
  LineageGraph g(timepoints);
  std::uniform_int_distribution<std::int32_t> ut(0, timepoints - 1);
  std::uniform_real_distribution<double> up(0, 30);
  for (int i = 0; i < spots; ++i) g.add_spot(ut(rng), Vec3(up(rng), up(rng), up(rng)));
  for (std::int32_t t = 0; t + 1 < timepoints; ++t) {
    const auto a = g.spots_at_timepoint(t), b = g.spots_at_timepoint(t + 1);
    for (SpotId s : a) {
      for (SpotId d : b) {
        if (std::uniform_int_distribution<int>(0, 3)(rng) == 0) g.add_link(s, d);
      }
    }
  }
  // a few deletions so ids have holes
  const auto links = g.alive_links();
  for (std::size_t i = 0; i < links.size(); i += 7) g.delete_link(links[i]);
  return g;
}

// Full scan: both endpoint timepoints inside [current - width, current].
std::vector<LinkId> visible_reference(const LineageGraph& g, std::int32_t width, std::int32_t current) {
  std::vector<LinkId> out;
  for (LinkId id = 0; id < static_cast<LinkId>(g.link_slots()); ++id) {
    if (!g.is_link_alive(id)) continue;
    const auto a = g.spot(g.link(id).source).timepoint, b = g.spot(g.link(id).target).timepoint;
    if (std::min(a, b) >= current - width && std::max(a, b) <= current) out.push_back(id);
  }
  return out;
}

}  // namespace

TEST_CASE("visibility examples") {
  LineageGraph g(20);
  const SpotId a = g.add_spot(5, Vec3::Zero());
  const SpotId b = g.add_spot(6, Vec3::Ones());
  const LinkId l = g.add_link(a, b);
  VisibilityWindow w(g, 3);
  CHECK(visible_links(w, g, 7) == std::vector<LinkId>{l});
  CHECK(visible_links(w, g, 10).empty());
  CHECK(visible_links(w, g, 5).empty());
  g.add_spot(7, Vec3::Zero());
  CHECK_THROWS_AS(visible_links(w, g, 7), StaleIndexError);
  w.rebuild(g);
  CHECK_NOTHROW(visible_links(w, g, 7));
  CHECK_THROWS_AS(w.set_width(-1), ValidationError);
}

TEST_CASE("visibility equals a brute-force filter on random triples, incremental updates included") {
  std::mt19937_64 rng(21);
  for (int i = 0; i < 100; ++i) {
    LineageGraph g = random_graph(rng, 12, 40);
    const std::int32_t width = std::uniform_int_distribution<std::int32_t>(0, 6)(rng);
    const std::int32_t current = std::uniform_int_distribution<std::int32_t>(-1, 13)(rng);
    VisibilityWindow w(g, width);
    REQUIRE(visible_links(w, g, current) == visible_reference(g, width, current));

    // per-segment maintenance
    const auto links = g.alive_links();
    if (!links.empty()) {
      g.delete_link(links.front());
      w.on_link_removed(links.front());
      w.sync_version(g);
      CHECK(visible_links(w, g, current) == visible_reference(g, width, current));
    }
  }
}

TEST_CASE("track colors") {
  const ColorMap gray = ColorMap::grayscale(0, 10);
  const Rgba lo = track_color(gray, 0), hi = track_color(gray, 10), mid = track_color(gray, 5);
  CHECK(lo.r == doctest::Approx(0.0));
  CHECK(hi.r == doctest::Approx(1.0));
  CHECK(mid.r == doctest::Approx(0.5));
  CHECK(mid.g == doctest::Approx(0.5));
  CHECK(track_color(gray, -4).r == doctest::Approx(0.0));
  CHECK(track_color(gray, 40).r == doctest::Approx(1.0));
  const ColorMap v = ColorMap::viridis(0, 100);
  CHECK(track_color(v, 0).r == v.stops.front().r);
  CHECK(track_color(v, 100).b == v.stops.back().b);

  ColorMap bad = gray;
  bad.t_max = bad.t_min;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = gray;
  bad.stops.resize(1);
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  const ColorMap back = colormap_from_json(colormap_to_json(v));
  CHECK(back.stops.size() == v.stops.size());
  CHECK(back.t_max == 100);
}

TEST_CASE("pool population and capacity") {
  LineageGraph empty;
  auto pools = populate_pools(empty);
  CHECK(pools.spots.capacity() == 0);
  CHECK(pools.links.capacity() == 0);

  const LineageGraph g = make_bench_graph(3000, 90, 110, 1);
  CHECK(g.link_count() == 3000);
  pools = populate_pools(g);
  CHECK(pools.links.capacity() == 3000);
  std::size_t max_per_t = 0;
  for (std::int32_t t = 0; t < 100; ++t) max_per_t = std::max(max_per_t, g.spots_at_timepoint(t).size());
  CHECK(pools.spots.capacity() == max_per_t);
  CHECK(pools.spots.active_count() == 0);
  CHECK(pools.links.active_count() == 0);
}

TEST_CASE("update_for_timepoint activates exactly the spots and links of a frame") {
  std::mt19937_64 rng(8);
  for (int i = 0; i < 20; ++i) {
    const LineageGraph g = random_graph(rng, 10, 50);
    auto pools = populate_pools(g);
    VisibilityWindow w(g, 2);
    const ColorMap cmap = ColorMap::viridis(0, 9);
    for (std::int32_t t = 0; t < 10; ++t) {
      const auto stats = update_for_timepoint(pools, g, t, w, cmap);
      CHECK(stats.active_spots == g.spots_at_timepoint(t).size());
      CHECK(pools.spots.active_count() == g.spots_at_timepoint(t).size());
      CHECK(pools.links.active_count() == visible_reference(g, 2, t).size());
      const auto before = frame_dump(pools, t);
      update_for_timepoint(pools, g, t, w, cmap);
      CHECK(frame_dump(pools, t) == before);  // idempotent
    }
  }
}

TEST_CASE("pool grows when a timepoint exceeds capacity, without moving slots") {
  LineageGraph g(4);
  for (int i = 0; i < 10; ++i) g.add_spot(0, Vec3::Constant(i));
  auto pools = populate_pools(g);
  REQUIRE(pools.spots.capacity() == 10);
  VisibilityWindow w(g, 1);
  const ColorMap cmap = ColorMap::viridis(0, 3);
  update_for_timepoint(pools, g, 0, w, cmap);
  const Instance first = pools.spots[3];
  for (int i = 0; i < 15; ++i) g.add_spot(1, Vec3::Constant(i));
  w.rebuild(g);
  const auto stats = update_for_timepoint(pools, g, 1, w, cmap);
  CHECK(stats.grew);
  CHECK(pools.spots.capacity() >= 15);
  CHECK(pools.spots.active_count() == 15);
  update_for_timepoint(pools, g, 0, w, cmap);
  CHECK(pools.spots[3].id == first.id);
  CHECK(pools.spots[3].transform == first.transform);

  InstancePool p(InstanceKind::Link, 10);
  p[7].id = 42;
  CHECK(p.reserve(11));
  CHECK(p.capacity() == 15);
  CHECK(p[7].id == 42);
  CHECK_FALSE(p.reserve(12));
}

TEST_CASE("instance transforms") {
  SpotRecord s;
  s.position = {1.0, 2.0, 3.0};
  s.covariance = SymMat3::from_matrix((Mat3() << 4, 0, 0, 0, 1, 0, 0, 0, 0).finished());
  const auto m = spot_transform(s);
  CHECK(xform(m, Vec3::Zero()).isApprox(Vec3(1, 2, 3)));
  // axis lengths: sqrt of eigenvalues, degenerate axis raised to the minimum
  Mat3 lin;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) lin(r, c) = m[static_cast<std::size_t>(r * 4 + c)];
  }
  Eigen::JacobiSVD<Mat3> svd(lin);
  CHECK(svd.singularValues()[0] == doctest::Approx(2.0));
  CHECK(svd.singularValues()[1] == doctest::Approx(1.0));
  CHECK(svd.singularValues()[2] == doctest::Approx(kMinVisibleRadius));

  const Vec3 from(1, 1, 1), to(4, 5, 1);
  const auto l = link_transform(from, to, 0.3);
  CHECK(xform(l, Vec3(0, -0.5, 0)).isApprox(from, 1e-6));
  CHECK(xform(l, Vec3(0, 0.5, 0)).isApprox(to, 1e-6));
  CHECK((xform(l, Vec3(1, 0, 0)) - xform(l, Vec3::Zero())).norm() == doctest::Approx(0.3).epsilon(1e-6));
}

TEST_CASE("presenter follows per-segment events and rebuilds on full redraw") {
  LineageGraph g(10);
  ScenePresenter p(3, ColorMap::viridis(0, 9));
  p.rebuild(g);
  const SpotId a = g.add_spot(4, Vec3::Zero());
  p.on_event(g, {{"type", "addSpot"}, {"payload", {{"id", a}}}});
  const SpotId b = g.add_spot(5, Vec3::Ones());
  const LinkId l = g.add_link(a, b);
  p.on_event(g, {{"type", "addLink"}, {"payload", {{"id", l}, {"source", a}, {"target", b}}}});
  const auto stats = p.show(g, 5);
  CHECK(stats.active_links == 1);
  CHECK(p.full_redraws() == 1);
  CHECK(p.partial_updates() == 2);
  p.on_event(g, {{"type", "fullRedraw"}, {"payload", {{"timepoint", 5}}}});
  CHECK(p.full_redraws() == 2);
  CHECK(p.pools().links.capacity() == 1);
}

TEST_CASE("bench graph has exactly the requested links and timepoint sizes in range") {
  const LineageGraph g = make_bench_graph(5000, 90, 110, 3);
  CHECK(g.link_count() == 5000);
  CHECK(g.validate().empty());
  std::int32_t t = 0;
  while (!g.spots_at_timepoint(t + 1).empty()) {
    const auto n = g.spots_at_timepoint(t).size();
    CHECK(n >= 90);
    CHECK(n <= 110);
    ++t;
  }
  const LineageGraph same = make_bench_graph(5000, 90, 110, 3);
  CHECK(same.alive_links() == g.alive_links());
  const auto report = bench_report_to_json(bench_populate(3000, 90, 110, 1, 1));
  CHECK(report["links"] == 3000);
  CHECK(report["spotsPerTimepoint"] == nlohmann::json::array({90, 110}));
  CHECK(report.contains("populationSeconds"));
}
