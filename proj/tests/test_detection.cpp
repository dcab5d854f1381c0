#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "trackbridge/detection.hpp"

using namespace trackbridge;

namespace {

VolumeHeader cube(std::int32_t n, std::int32_t t = 1) {
  VolumeHeader h;
  h.dims = {n, n, n};
  h.timepoints = t;
  return h;
}

// Direct (non-separable) 3D convolution with a normalized, truncated
// Gaussian and replicate padding.
std::vector<double> blur_reference(const VolumeTimeSeries& v, std::int32_t t, double sigma) {
  const int r = static_cast<int>(std::ceil(3.0 * sigma));
  const auto& d = v.header().dims;
  double norm = 0.0;
  for (int dz = -r; dz <= r; ++dz) {
    for (int dy = -r; dy <= r; ++dy) {
      for (int dx = -r; dx <= r; ++dx) norm += std::exp(-(dx * dx + dy * dy + dz * dz) / (2 * sigma * sigma));
    }
  }
  std::vector<double> out(v.header().voxels_per_frame());
  for (int z = 0; z < d[2]; ++z) {
    for (int y = 0; y < d[1]; ++y) {
      for (int x = 0; x < d[0]; ++x) {
        double s = 0.0;
        for (int dz = -r; dz <= r; ++dz) {
          for (int dy = -r; dy <= r; ++dy) {
            for (int dx = -r; dx <= r; ++dx) {
              const int xx = std::clamp(x + dx, 0, d[0] - 1), yy = std::clamp(y + dy, 0, d[1] - 1),
                        zz = std::clamp(z + dz, 0, d[2] - 1);
              s += std::exp(-(dx * dx + dy * dy + dz * dz) / (2 * sigma * sigma)) * v.at(t, xx, yy, zz);
            }
          }
        }
        out[v.index(x, y, z)] = s / norm;
      }
    }
  }
  return out;
}

// Brute-force greedy: repeatedly take the admissible pair with the smallest
// (distance, source, target).
std::set<std::pair<SpotId, SpotId>> greedy_reference(const LineageGraph& g, std::int32_t t, double max_d, bool div) {
  std::set<std::pair<SpotId, SpotId>> chosen;
  std::map<SpotId, int> out_deg, in_deg;
  for (LinkId l : g.alive_links()) {
    ++out_deg[g.link(l).source];
    ++in_deg[g.link(l).target];
  }
  const auto src = g.spots_at_timepoint(t), dst = g.spots_at_timepoint(t + 1);
  while (true) {
    std::optional<std::tuple<double, SpotId, SpotId>> best;
    for (SpotId a : src) {
      for (SpotId b : dst) {
        if (out_deg[a] >= (div ? 2 : 1) || in_deg[b] >= 1 || g.find_link(a, b)) continue;
        const double dist = (g.spot(a).pos() - g.spot(b).pos()).norm();
        if (dist > max_d) continue;
        const auto cand = std::make_tuple(dist, a, b);
        if (!best || cand < *best) best = cand;
      }
    }
    if (!best) break;
    const auto [dist, a, b] = *best;
    chosen.insert({a, b});
    ++out_deg[a];
    ++in_deg[b];
  }
  return chosen;
}

std::set<std::pair<SpotId, SpotId>> pairs(const LineageGraph& g, const std::vector<LinkId>& ids) {
  std::set<std::pair<SpotId, SpotId>> out;
  for (LinkId l : ids) out.insert({g.link(l).source, g.link(l).target});
  return out;
}

}  // namespace

TEST_CASE("config validation") {
  DetectionConfig d;
  d.sigma_large = d.sigma_small;
  CHECK_THROWS_AS(d.validate(), ValidationError);
  LinkingConfig l;
  l.max_link_distance = 0;
  CHECK_THROWS_AS(l.validate(), ValidationError);
}

TEST_CASE("separable blur equals direct 3D convolution") {
  std::mt19937_64 rng(5);
  VolumeTimeSeries v(cube(12));
  std::uniform_int_distribution<int> u(0, 500);
  for (auto& s : v.frame(0)) s = static_cast<std::uint16_t>(u(rng));
  for (double sigma : {1.0, 1.5}) {
    const auto fast = gaussian_blur(v.frame(0), v.header().dims, sigma);
    const auto ref = blur_reference(v, 0, sigma);
    for (std::size_t i = 0; i < ref.size(); ++i) REQUIRE(fast[i] == doctest::Approx(ref[i]).epsilon(1e-5));
  }
}

TEST_CASE("single blob: one detection at the brute-force DoG argmax") {
  SyntheticScene s;
  s.trajectories = {{{0, Vec3(9.3, 10.6, 8.2), 2.0, 1000.0}}};
  const auto v = generate_synthetic(s, cube(20), 0.0, 1);
  const DetectionConfig cfg;
  const auto small = blur_reference(v, 0, cfg.sigma_small);
  const auto large = blur_reference(v, 0, cfg.sigma_large);
  std::size_t arg = 0;
  for (std::size_t i = 0; i < small.size(); ++i) {
    if (small[i] - large[i] > small[arg] - large[arg]) arg = i;
  }
  const Vec3 argmax(static_cast<double>(arg % 20), static_cast<double>(arg / 20 % 20), static_cast<double>(arg / 400));

  const auto found = detect(v, 0, cfg);
  REQUIRE(found.size() == 1);
  CHECK((found[0].position - argmax).lpNorm<Eigen::Infinity>() <= 0.5 + 1e-9);
  CHECK((found[0].position - Vec3(9.3, 10.6, 8.2)).norm() <= 1.0);
}

TEST_CASE("empty frame and bad timepoint") {
  VolumeTimeSeries v(cube(8, 2));
  CHECK(detect(v, 0, {}).empty());
  CHECK_THROWS_AS(detect(v, 2, {}), RangeError);
}

TEST_CASE("two blobs 10 voxels apart give two detections, ordered by response") {
  SyntheticScene s;
  s.trajectories = {{{0, Vec3(8, 12, 12), 2.0, 600.0}}, {{0, Vec3(18, 12, 12), 2.0, 1000.0}}};
  const auto v = generate_synthetic(s, cube(26), 0.0, 1);
  DetectionConfig cfg;
  cfg.min_separation = 3.0;
  const auto found = detect(v, 0, cfg);
  REQUIRE(found.size() == 2);
  CHECK(found[0].response > found[1].response);
  CHECK((found[0].position - Vec3(18, 12, 12)).norm() < 1.0);
}

TEST_CASE("integer translation moves the detection by the same amount") {
  for (int shift : {1, 3, -2}) {
    SyntheticScene a, b;
    a.trajectories = {{{0, Vec3(11.2, 12.7, 10.4), 2.0, 1000.0}}};
    b.trajectories = {{{0, Vec3(11.2 + shift, 12.7, 10.4 - shift), 2.0, 1000.0}}};
    const auto fa = detect(generate_synthetic(a, cube(24), 0.0, 1), 0, {});
    const auto fb = detect(generate_synthetic(b, cube(24), 0.0, 1), 0, {});
    REQUIRE(fa.size() == 1);
    REQUIRE(fb.size() == 1);
    CHECK((fb[0].position - fa[0].position - Vec3(shift, 0, -shift)).norm() < 1e-4);
  }
}

TEST_CASE("linking examples") {
  LinkingConfig cfg;
  cfg.max_link_distance = 5.0;
  {
    LineageGraph g;
    g.add_spot(0, Vec3::Zero());
    g.add_spot(1, Vec3(1, 0, 0));
    CHECK(link_timepoints(g, 0, cfg).size() == 1);
  }
  {
    LineageGraph g;
    g.add_spot(0, Vec3::Zero());
    g.add_spot(1, Vec3(6, 0, 0));
    CHECK(link_timepoints(g, 0, cfg).empty());
  }
  {
    // 2x2 crossing: a0-b1 is the globally shortest pair
    LineageGraph g;
    const SpotId a0 = g.add_spot(0, Vec3(0, 0, 0));
    const SpotId a1 = g.add_spot(0, Vec3(2, 0, 0));
    const SpotId b0 = g.add_spot(1, Vec3(2.5, 0, 0));
    const SpotId b1 = g.add_spot(1, Vec3(0.2, 0, 0));
    const auto expected = greedy_reference(g, 0, 5.0, false);
    const auto ids = link_timepoints(g, 0, cfg);
    CHECK(pairs(g, ids) == expected);
    CHECK(expected == std::set<std::pair<SpotId, SpotId>>{{a0, b1}, {a1, b0}});
  }
}

TEST_CASE("greedy linking equals the brute-force simulation and respects degree bounds") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0, 12);
  for (int trial = 0; trial < 200; ++trial) {
    LineageGraph g;
    const int n0 = 1 + trial % 7, n1 = 1 + (trial * 3) % 8;
    for (int i = 0; i < n0; ++i) g.add_spot(0, Vec3(u(rng), u(rng), 0));
    for (int i = 0; i < n1; ++i) g.add_spot(1, Vec3(std::round(u(rng)), std::round(u(rng)), 0));  // ties happen
    LinkingConfig cfg;
    cfg.max_link_distance = 4.0;
    cfg.allow_divisions = trial % 2 == 1;
    if (trial % 5 == 0 && n0 > 0 && n1 > 0) g.add_link(0, n0);  // pre-existing link
    const auto expected = greedy_reference(g, 0, cfg.max_link_distance, cfg.allow_divisions);
    const auto ids = link_timepoints(g, 0, cfg);
    REQUIRE(pairs(g, ids) == expected);
    for (SpotId s : g.spots_at_timepoint(0)) CHECK(g.outgoing_links(s).size() <= (cfg.allow_divisions ? 2u : 1u));
    for (SpotId s : g.spots_at_timepoint(1)) CHECK(g.incoming_links(s).size() <= 1u);
    // deterministic
    LineageGraph again = g;
    while (again.recorder().can_undo() && again.link_count() > (trial % 5 == 0 ? 1u : 0u)) again.undo();
    CHECK(pairs(again, link_timepoints(again, 0, cfg)) == expected);
  }
}

TEST_CASE("label_all_true_positive") {
  LineageGraph g;
  for (int i = 0; i < 3; ++i) g.add_spot(2, Vec3::Constant(i));
  g.add_spot(3, Vec3::Zero());
  CHECK(label_all_true_positive(g, 2) == 3);
  for (SpotId s : g.spots_at_timepoint(2)) CHECK(g.tag_name(s) == "tp");
  CHECK(g.tag_name(3).empty());
  CHECK(label_all_true_positive(g, 2) == 3);
  CHECK(label_all_true_positive(g, 7) == 0);
}

TEST_CASE("add_detections is one undo batch") {
  LineageGraph g(4);
  const auto ids = add_detections(g, 1, {{Vec3(1, 1, 1), 5.0}, {Vec3(2, 2, 2), 4.0}}, SymMat3::isotropic(1.5));
  CHECK(ids.size() == 2);
  CHECK(g.recorder().undo_depth() == 1);
  CHECK_THROWS_AS(add_detections(g, 9, {{Vec3(1, 1, 1), 5.0}}, SymMat3::identity()), RangeError);
  CHECK(g.spot_count() == 2);
}
