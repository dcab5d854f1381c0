#pragma once

#include <vector>

#include "trackbridge/lineage_graph.hpp"
#include "trackbridge/volume.hpp"

namespace trackbridge {

struct DetectionConfig {
  double sigma_small = 1.5;           // voxels
  double sigma_large = 3.0;           // voxels
  double response_threshold = 0.1;    // fraction of the frame's max response
  double min_separation = 3.0;        // world units

  void validate() const;
};

struct LinkingConfig {
  double max_link_distance = 5.0;  // world units
  bool allow_divisions = false;

  void validate() const;
};

struct Detection {
  Vec3 position = Vec3::Zero();  // world units
  double response = 0.0;
};

// Separable Gaussian blur in voxel units, kernel radius ceil(3*sigma),
// replicate padding. Exposed for testing.
std::vector<float> gaussian_blur(std::span<const VolumeTimeSeries::Sample> frame, const std::array<std::int32_t, 3>& dims,
                                 double sigma);

// G(sigma_small)*frame - G(sigma_large)*frame.
std::vector<float> dog_response(const VolumeTimeSeries& volume, std::int32_t t, const DetectionConfig& config);

// Local 3D maxima of the DoG response above threshold, non-maximum
// suppressed within min_separation, ordered by descending response.
std::vector<Detection> detect(const VolumeTimeSeries& volume, std::int32_t t, const DetectionConfig& config);

// Adds detections as spots (one undo batch) and returns their ids.
std::vector<SpotId> add_detections(LineageGraph& graph, std::int32_t t, const std::vector<Detection>& detections,
                                   const SymMat3& covariance);

// Greedy nearest-neighbour linking from t_from to t_from + 1. Pairs are taken
// by ascending (distance, source id, target id). Existing links count toward
// the degree limits. One undo batch.
std::vector<LinkId> link_timepoints(LineageGraph& graph, std::int32_t t_from, const LinkingConfig& config);

inline constexpr const char* kTruePositiveTag = "tp";

// Tags every alive spot at t with "tp" (defined on demand). One undo batch.
std::size_t label_all_true_positive(LineageGraph& graph, std::int32_t t);

}  // namespace trackbridge
