#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "trackbridge/types.hpp"

namespace trackbridge {

struct VolumeHeader {
  std::array<std::int32_t, 3> dims{1, 1, 1};  // x, y, z voxels
  Vec3 voxel_size{1.0, 1.0, 1.0};            // world units per voxel
  std::int32_t timepoints = 1;

  void validate() const;
  std::size_t voxels_per_frame() const {
    return static_cast<std::size_t>(dims[0]) * static_cast<std::size_t>(dims[1]) * static_cast<std::size_t>(dims[2]);
  }
  // Voxel centers sit at index * voxel_size.
  Vec3 voxel_to_world(const Vec3& voxel) const { return voxel.cwiseProduct(voxel_size); }
  Vec3 world_to_voxel(const Vec3& world) const { return world.cwiseQuotient(voxel_size); }
  // World-space extent spanned by voxel centers.
  Vec3 world_extent() const;
  double default_ray_step() const { return 0.5 * voxel_size.minCoeff(); }
};

bool operator==(const VolumeHeader& a, const VolumeHeader& b);

// Dense unsigned 16-bit frames, x fastest, then y, then z.
class VolumeTimeSeries {
 public:
  using Sample = std::uint16_t;

  VolumeTimeSeries() = default;
  explicit VolumeTimeSeries(const VolumeHeader& header);

  const VolumeHeader& header() const { return header_; }
  std::int32_t timepoints() const { return header_.timepoints; }

  std::span<const Sample> frame(std::int32_t t) const;
  std::span<Sample> frame(std::int32_t t);

  std::size_t index(std::int32_t x, std::int32_t y, std::int32_t z) const {
    return (static_cast<std::size_t>(z) * static_cast<std::size_t>(header_.dims[1]) + static_cast<std::size_t>(y)) *
               static_cast<std::size_t>(header_.dims[0]) +
           static_cast<std::size_t>(x);
  }
  Sample at(std::int32_t t, std::int32_t x, std::int32_t y, std::int32_t z) const {
    return frame(t)[index(x, y, z)];
  }
  void set(std::int32_t t, std::int32_t x, std::int32_t y, std::int32_t z, Sample v) {
    frame(t)[index(x, y, z)] = v;
  }

  // Trilinear interpolation in world coordinates. Voxels outside the grid
  // read as zero, so the result fades to 0 within one voxel of the border
  // and is exactly 0 beyond it. Out-of-range timepoints also read as 0.
  double trilinear_sample(std::int32_t t, const Vec3& world) const;

  // Samples origin + k*step*direction for k = 0..floor(max_distance/step).
  std::vector<double> sample_ray(std::int32_t t, const Vec3& origin, const Vec3& direction, double step,
                                 double max_distance) const;

  friend bool operator==(const VolumeTimeSeries&, const VolumeTimeSeries&) = default;

 private:
  VolumeHeader header_;
  std::vector<std::vector<Sample>> frames_;
};

std::size_t ray_sample_count(double step, double max_distance);

struct BlobState {
  std::int32_t timepoint = 0;
  Vec3 center = Vec3::Zero();  // world units
  double sigma = 1.0;          // world units
  double peak = 1000.0;        // intensity
};

struct DivisionEvent {
  std::int32_t parent = 0;
  std::int32_t timepoint = 0;  // parent's last timepoint
  std::array<std::int32_t, 2> children{0, 0};
};

// Ground truth for synthetic data: one trajectory per cell.
struct SyntheticScene {
  std::vector<std::vector<BlobState>> trajectories;
  std::vector<DivisionEvent> divisions;

  void validate(const VolumeHeader& header) const;
  // Ground-truth center of a cell at t, if the cell exists then.
  std::optional<Vec3> center_at(std::size_t cell, std::int32_t t) const;
};

// Sum of isotropic Gaussian blobs plus uniform noise in [0, noise_level),
// rounded and clamped to the 16-bit range.
VolumeTimeSeries generate_synthetic(const SyntheticScene& scene, const VolumeHeader& header, double noise_level,
                                    std::uint64_t seed);

nlohmann::json header_to_json(const VolumeHeader& header);
VolumeHeader header_from_json(const nlohmann::json& j);
nlohmann::json scene_to_json(const SyntheticScene& scene);
SyntheticScene scene_from_json(const nlohmann::json& j);

// On disk: <dir>/volume.json header + <dir>/volume.raw, little-endian u16,
// frame-major, then z, then y, then x.
void save_volume(const VolumeTimeSeries& volume, const std::filesystem::path& dir);
VolumeTimeSeries load_volume(const std::filesystem::path& dir);

}  // namespace trackbridge
