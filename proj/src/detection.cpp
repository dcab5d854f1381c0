#include "trackbridge/detection.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

namespace trackbridge {

void DetectionConfig::validate() const {
  if (!(sigma_small > 0.0) || !(sigma_large > sigma_small)) {
    throw ValidationError("detection requires sigma_large > sigma_small > 0");
  }
  if (!(response_threshold >= 0.0 && response_threshold <= 1.0)) {
    throw ValidationError("response threshold must be a fraction in [0, 1]");
  }
  if (!(min_separation >= 0.0)) throw ValidationError("min separation must be >= 0");
}

void LinkingConfig::validate() const {
  if (!(max_link_distance > 0.0)) throw ValidationError("max link distance must be > 0");
}

namespace {

std::vector<double> gaussian_kernel(double sigma) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double v = std::exp(-0.5 * i * i / (sigma * sigma));
    k[static_cast<std::size_t>(i + radius)] = v;
    sum += v;
  }
  for (double& v : k) v /= sum;
  return k;
}

// One 1D pass along `axis` with clamp padding.
void convolve_axis(const std::vector<float>& in, std::vector<float>& out, const std::array<std::int32_t, 3>& dims,
                   int axis, const std::vector<double>& kernel) {
  const int radius = static_cast<int>(kernel.size() / 2);
  const std::size_t nx = static_cast<std::size_t>(dims[0]);
  const std::size_t ny = static_cast<std::size_t>(dims[1]);
  const std::size_t nz = static_cast<std::size_t>(dims[2]);
  const std::size_t stride = axis == 0 ? 1 : axis == 1 ? nx : nx * ny;
  const int n = dims[static_cast<std::size_t>(axis)];
  for (std::size_t z = 0; z < nz; ++z) {
    for (std::size_t y = 0; y < ny; ++y) {
      for (std::size_t x = 0; x < nx; ++x) {
        const std::size_t base = (z * ny + y) * nx + x;
        const int pos = static_cast<int>(axis == 0 ? x : axis == 1 ? y : z);
        const std::size_t line_start = base - static_cast<std::size_t>(pos) * stride;
        double acc = 0.0;
        for (int k = -radius; k <= radius; ++k) {
          const int p = std::clamp(pos + k, 0, n - 1);
          acc += kernel[static_cast<std::size_t>(k + radius)] * in[line_start + static_cast<std::size_t>(p) * stride];
        }
        out[base] = static_cast<float>(acc);
      }
    }
  }
}

}  // namespace

std::vector<float> gaussian_blur(std::span<const VolumeTimeSeries::Sample> frame, const std::array<std::int32_t, 3>& dims,
                                 double sigma) {
  const auto kernel = gaussian_kernel(sigma);
  std::vector<float> a(frame.begin(), frame.end());
  std::vector<float> b(a.size());
  convolve_axis(a, b, dims, 0, kernel);
  convolve_axis(b, a, dims, 1, kernel);
  convolve_axis(a, b, dims, 2, kernel);
  return b;
}

std::vector<float> dog_response(const VolumeTimeSeries& volume, std::int32_t t, const DetectionConfig& config) {
  config.validate();
  if (t < 0 || t >= volume.timepoints()) throw RangeError("timepoint " + std::to_string(t) + " out of range");
  const auto& dims = volume.header().dims;
  auto small = gaussian_blur(volume.frame(t), dims, config.sigma_small);
  const auto large = gaussian_blur(volume.frame(t), dims, config.sigma_large);
  for (std::size_t i = 0; i < small.size(); ++i) small[i] -= large[i];
  return small;
}

std::vector<Detection> detect(const VolumeTimeSeries& volume, std::int32_t t, const DetectionConfig& config) {
  const auto response = dog_response(volume, t, config);
  const VolumeHeader& h = volume.header();
  const auto& d = h.dims;

  float max_response = 0.0f;
  for (float v : response) max_response = std::max(max_response, v);
  if (!(max_response > 0.0f)) return {};
  const double threshold = config.response_threshold * max_response;

  auto at = [&](std::int32_t x, std::int32_t y, std::int32_t z) { return response[volume.index(x, y, z)]; };

  std::vector<Detection> candidates;
  for (std::int32_t z = 0; z < d[2]; ++z) {
    for (std::int32_t y = 0; y < d[1]; ++y) {
      for (std::int32_t x = 0; x < d[0]; ++x) {
        const float v = at(x, y, z);
        if (v <= 0.0f || v < threshold) continue;
        // Ties are resolved toward the lexicographically first voxel.
        bool is_max = true;
        for (int dz = -1; dz <= 1 && is_max; ++dz) {
          for (int dy = -1; dy <= 1 && is_max; ++dy) {
            for (int dx = -1; dx <= 1; ++dx) {
              if (!dx && !dy && !dz) continue;
              const int xx = x + dx;
              const int yy = y + dy;
              const int zz = z + dz;
              if (xx < 0 || yy < 0 || zz < 0 || xx >= d[0] || yy >= d[1] || zz >= d[2]) continue;
              const float w = at(xx, yy, zz);
              const bool earlier = std::tie(zz, yy, xx) < std::tie(z, y, x);
              if (w > v || (w == v && earlier)) {
                is_max = false;
                break;
              }
            }
          }
        }
        if (!is_max) continue;

        // parabolic sub-voxel refinement per axis
        Vec3 voxel(x, y, z);
        const std::array<std::int32_t, 3> c{x, y, z};
        for (int a = 0; a < 3; ++a) {
          auto cm = c;
          auto cp = c;
          cm[static_cast<std::size_t>(a)] -= 1;
          cp[static_cast<std::size_t>(a)] += 1;
          if (cm[static_cast<std::size_t>(a)] < 0 || cp[static_cast<std::size_t>(a)] >= d[static_cast<std::size_t>(a)]) continue;
          const double fm = at(cm[0], cm[1], cm[2]);
          const double fp = at(cp[0], cp[1], cp[2]);
          const double denom = fm - 2.0 * v + fp;
          if (denom < 0.0) voxel[a] += std::clamp(0.5 * (fm - fp) / denom, -0.5, 0.5);
        }
        candidates.push_back({h.voxel_to_world(voxel), v});
      }
    }
  }

  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const Detection& a, const Detection& b) { return a.response > b.response; });
  std::vector<Detection> kept;
  for (const Detection& c : candidates) {
    const bool clear = std::none_of(kept.begin(), kept.end(), [&](const Detection& k) {
      return (k.position - c.position).norm() < config.min_separation;
    });
    if (clear) kept.push_back(c);
  }
  return kept;
}

std::vector<SpotId> add_detections(LineageGraph& graph, std::int32_t t, const std::vector<Detection>& detections,
                                   const SymMat3& covariance) {
  std::vector<SpotId> ids;
  BatchScope batch(graph);
  for (const Detection& d : detections) ids.push_back(graph.add_spot(t, d.position, covariance));
  return ids;
}

std::vector<LinkId> link_timepoints(LineageGraph& graph, std::int32_t t_from, const LinkingConfig& config) {
  config.validate();
  const auto sources = graph.spots_at_timepoint(t_from);
  const auto targets = graph.spots_at_timepoint(t_from + 1);

  struct Candidate {
    double distance;
    SpotId source;
    SpotId target;
  };
  std::vector<Candidate> candidates;
  for (SpotId s : sources) {
    const Vec3 ps = graph.spot(s).pos();
    for (SpotId t : targets) {
      const double dist = (graph.spot(t).pos() - ps).norm();
      if (dist <= config.max_link_distance) candidates.push_back({dist, s, t});
    }
  }
  std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    return std::tie(a.distance, a.source, a.target) < std::tie(b.distance, b.source, b.target);
  });

  const std::size_t max_out = config.allow_divisions ? 2 : 1;
  std::vector<LinkId> created;
  BatchScope batch(graph);
  for (const Candidate& c : candidates) {
    if (!graph.incoming_links(c.target).empty()) continue;
    if (graph.outgoing_links(c.source).size() >= max_out) continue;
    created.push_back(graph.add_link(c.source, c.target));
  }
  return created;
}

std::size_t label_all_true_positive(LineageGraph& graph, std::int32_t t) {
  const auto spots = graph.spots_at_timepoint(t);
  if (spots.empty()) return 0;
  if (!graph.find_tag(kTruePositiveTag)) graph.define_tag(kTruePositiveTag, Rgba{0.2f, 0.8f, 0.2f, 1.0f});
  BatchScope batch(graph);
  for (SpotId id : spots) {
    if (graph.tag_name(id) != kTruePositiveTag) graph.set_tag(id, kTruePositiveTag);
  }
  return spots.size();
}

}  // namespace trackbridge
