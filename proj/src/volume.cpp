#include "trackbridge/volume.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "trackbridge/graph_io.hpp"

namespace trackbridge {

using nlohmann::json;

void VolumeHeader::validate() const {
  for (auto d : dims) {
    if (d < 1) throw ValidationError("volume dims must be >= 1");
  }
  for (int i = 0; i < 3; ++i) {
    if (!(voxel_size[i] > 0.0) || !std::isfinite(voxel_size[i])) throw ValidationError("voxel size must be > 0");
  }
  if (timepoints < 1) throw ValidationError("volume needs at least one timepoint");
}

Vec3 VolumeHeader::world_extent() const {
  return Vec3(dims[0] - 1, dims[1] - 1, dims[2] - 1).cwiseProduct(voxel_size);
}

bool operator==(const VolumeHeader& a, const VolumeHeader& b) {
  return a.dims == b.dims && a.voxel_size == b.voxel_size && a.timepoints == b.timepoints;
}

VolumeTimeSeries::VolumeTimeSeries(const VolumeHeader& header) : header_(header) {
  header_.validate();
  frames_.assign(static_cast<std::size_t>(header_.timepoints), std::vector<Sample>(header_.voxels_per_frame(), 0));
}

std::span<const VolumeTimeSeries::Sample> VolumeTimeSeries::frame(std::int32_t t) const {
  if (t < 0 || t >= header_.timepoints) throw RangeError("timepoint " + std::to_string(t) + " out of range");
  return frames_[static_cast<std::size_t>(t)];
}

std::span<VolumeTimeSeries::Sample> VolumeTimeSeries::frame(std::int32_t t) {
  if (t < 0 || t >= header_.timepoints) throw RangeError("timepoint " + std::to_string(t) + " out of range");
  return frames_[static_cast<std::size_t>(t)];
}

double VolumeTimeSeries::trilinear_sample(std::int32_t t, const Vec3& world) const {
  if (t < 0 || t >= header_.timepoints || !world.allFinite()) return 0.0;
  const Vec3 v = header_.world_to_voxel(world);
  const auto& d = header_.dims;
  for (int a = 0; a < 3; ++a) {
    if (v[a] <= -1.0 || v[a] >= d[static_cast<std::size_t>(a)]) return 0.0;
  }
  const double fx = std::floor(v.x());
  const double fy = std::floor(v.y());
  const double fz = std::floor(v.z());
  const auto x0 = static_cast<std::int32_t>(fx);
  const auto y0 = static_cast<std::int32_t>(fy);
  const auto z0 = static_cast<std::int32_t>(fz);
  const double tx = v.x() - fx;
  const double ty = v.y() - fy;
  const double tz = v.z() - fz;

  const auto& f = frames_[static_cast<std::size_t>(t)];
  auto fetch = [&](std::int32_t x, std::int32_t y, std::int32_t z) -> double {
    if (x < 0 || y < 0 || z < 0 || x >= d[0] || y >= d[1] || z >= d[2]) return 0.0;
    return f[index(x, y, z)];
  };

  double acc = 0.0;
  for (int dz = 0; dz < 2; ++dz) {
    const double wz = dz ? tz : 1.0 - tz;
    if (wz == 0.0) continue;
    for (int dy = 0; dy < 2; ++dy) {
      const double wy = dy ? ty : 1.0 - ty;
      if (wy == 0.0) continue;
      for (int dx = 0; dx < 2; ++dx) {
        const double wx = dx ? tx : 1.0 - tx;
        if (wx == 0.0) continue;
        acc += wx * wy * wz * fetch(x0 + dx, y0 + dy, z0 + dz);
      }
    }
  }
  return acc;
}

std::size_t ray_sample_count(double step, double max_distance) {
  if (!(step > 0.0) || !std::isfinite(step)) throw ValidationError("ray step must be > 0");
  if (!(max_distance >= 0.0) || !std::isfinite(max_distance)) throw ValidationError("ray length must be >= 0");
  // tolerance keeps step == max_distance at exactly two samples
  return static_cast<std::size_t>(std::floor(max_distance / step + 1e-9)) + 1;
}

std::vector<double> VolumeTimeSeries::sample_ray(std::int32_t t, const Vec3& origin, const Vec3& direction,
                                                 double step, double max_distance) const {
  if (!origin.allFinite()) throw ValidationError("ray origin must be finite");
  if (!direction.allFinite() || std::abs(direction.norm() - 1.0) > 1e-6) {
    throw ValidationError("ray direction must be unit length");
  }
  const std::size_t n = ray_sample_count(step, max_distance);
  std::vector<double> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    out[k] = trilinear_sample(t, origin + (static_cast<double>(k) * step) * direction);
  }
  return out;
}

// ---------------------------------------------------------------------------
// synthetic scenes

void SyntheticScene::validate(const VolumeHeader& header) const {
  header.validate();
  const Vec3 extent = header.world_extent();
  for (std::size_t c = 0; c < trajectories.size(); ++c) {
    const auto& traj = trajectories[c];
    for (std::size_t i = 0; i < traj.size(); ++i) {
      const BlobState& b = traj[i];
      if (i > 0 && b.timepoint != traj[i - 1].timepoint + 1) {
        throw ValidationError("trajectory " + std::to_string(c) + " is not contiguous in time");
      }
      if (b.timepoint < 0 || b.timepoint >= header.timepoints) {
        throw ValidationError("trajectory " + std::to_string(c) + " timepoint out of range");
      }
      if (!b.center.allFinite() || (b.center.array() < 0.0).any() || (b.center.array() > extent.array()).any()) {
        throw ValidationError("blob center of cell " + std::to_string(c) + " outside the volume");
      }
      if (!(b.sigma > 0.0)) throw ValidationError("blob sigma must be > 0");
      if (!(b.peak >= 0.0)) throw ValidationError("blob peak must be >= 0");
    }
  }
  for (const DivisionEvent& e : divisions) {
    auto valid = [&](std::int32_t cell) { return cell >= 0 && static_cast<std::size_t>(cell) < trajectories.size(); };
    if (!valid(e.parent) || !valid(e.children[0]) || !valid(e.children[1])) {
      throw ValidationError("division references unknown cell");
    }
    const auto& parent = trajectories[static_cast<std::size_t>(e.parent)];
    if (parent.empty() || parent.back().timepoint != e.timepoint) {
      throw ValidationError("division timepoint must be the parent's last timepoint");
    }
    for (auto child : e.children) {
      const auto& traj = trajectories[static_cast<std::size_t>(child)];
      if (traj.empty() || traj.front().timepoint != e.timepoint + 1) {
        throw ValidationError("children must start at the parent's last timepoint + 1");
      }
    }
  }
}

std::optional<Vec3> SyntheticScene::center_at(std::size_t cell, std::int32_t t) const {
  if (cell >= trajectories.size()) return std::nullopt;
  for (const BlobState& b : trajectories[cell]) {
    if (b.timepoint == t) return b.center;
  }
  return std::nullopt;
}

VolumeTimeSeries generate_synthetic(const SyntheticScene& scene, const VolumeHeader& header, double noise_level,
                                    std::uint64_t seed) {
  scene.validate(header);
  if (!(noise_level >= 0.0)) throw ValidationError("noise level must be >= 0");

  VolumeTimeSeries volume(header);
  const auto& d = header.dims;
  std::vector<double> acc(header.voxels_per_frame());
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> noise(0.0, noise_level > 0.0 ? noise_level : 1.0);

  for (std::int32_t t = 0; t < header.timepoints; ++t) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (const auto& traj : scene.trajectories) {
      for (const BlobState& b : traj) {
        if (b.timepoint != t) continue;
        const Vec3 c = header.world_to_voxel(b.center);
        std::array<std::int32_t, 3> lo{};
        std::array<std::int32_t, 3> hi{};
        for (int a = 0; a < 3; ++a) {
          const double r = 4.0 * b.sigma / header.voxel_size[a];
          lo[static_cast<std::size_t>(a)] = std::max(0, static_cast<std::int32_t>(std::floor(c[a] - r)));
          hi[static_cast<std::size_t>(a)] = std::min(d[static_cast<std::size_t>(a)] - 1, static_cast<std::int32_t>(std::ceil(c[a] + r)));
        }
        const double inv2s2 = 1.0 / (2.0 * b.sigma * b.sigma);
        for (std::int32_t z = lo[2]; z <= hi[2]; ++z) {
          for (std::int32_t y = lo[1]; y <= hi[1]; ++y) {
            for (std::int32_t x = lo[0]; x <= hi[0]; ++x) {
              const Vec3 w = header.voxel_to_world(Vec3(x, y, z));
              acc[volume.index(x, y, z)] += b.peak * std::exp(-(w - b.center).squaredNorm() * inv2s2);
            }
          }
        }
      }
    }
    auto f = volume.frame(t);
    for (std::size_t i = 0; i < acc.size(); ++i) {
      double v = acc[i];
      if (noise_level > 0.0) v += noise(rng);
      f[i] = static_cast<VolumeTimeSeries::Sample>(std::clamp(std::round(v), 0.0, 65535.0));
    }
  }
  return volume;
}

// ---------------------------------------------------------------------------
// serialization

json header_to_json(const VolumeHeader& header) {
  return {{"dims", header.dims},
          {"voxelSize", {header.voxel_size.x(), header.voxel_size.y(), header.voxel_size.z()}},
          {"timepoints", header.timepoints},
          {"valueType", "uint16"},
          {"byteOrder", "little"},
          {"layout", "t,z,y,x"}};
}

VolumeHeader header_from_json(const json& j) {
  VolumeHeader h;
  try {
    h.dims = j.at("dims").get<std::array<std::int32_t, 3>>();
    const auto vs = j.value("voxelSize", std::array<double, 3>{1.0, 1.0, 1.0});
    h.voxel_size = Vec3(vs[0], vs[1], vs[2]);
    h.timepoints = j.at("timepoints").get<std::int32_t>();
    if (j.value("valueType", std::string("uint16")) != "uint16") throw ValidationError("only uint16 volumes are supported");
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed volume header: ") + e.what());
  }
  h.validate();
  return h;
}

json scene_to_json(const SyntheticScene& scene) {
  json cells = json::array();
  for (const auto& traj : scene.trajectories) {
    json states = json::array();
    for (const BlobState& b : traj) {
      states.push_back({{"t", b.timepoint},
                        {"center", {b.center.x(), b.center.y(), b.center.z()}},
                        {"sigma", b.sigma},
                        {"peak", b.peak}});
    }
    cells.push_back(std::move(states));
  }
  json divisions = json::array();
  for (const DivisionEvent& e : scene.divisions) {
    divisions.push_back({{"parent", e.parent}, {"t", e.timepoint}, {"children", e.children}});
  }
  return {{"cells", std::move(cells)}, {"divisions", std::move(divisions)}};
}

SyntheticScene scene_from_json(const json& j) {
  SyntheticScene scene;
  try {
    for (const json& cell : j.at("cells")) {
      std::vector<BlobState> traj;
      for (const json& s : cell) {
        const auto c = s.at("center").get<std::array<double, 3>>();
        traj.push_back({s.at("t").get<std::int32_t>(), Vec3(c[0], c[1], c[2]), s.value("sigma", 2.0),
                        s.value("peak", 1000.0)});
      }
      scene.trajectories.push_back(std::move(traj));
    }
    for (const json& e : j.value("divisions", json::array())) {
      scene.divisions.push_back({e.at("parent").get<std::int32_t>(), e.at("t").get<std::int32_t>(),
                                 e.at("children").get<std::array<std::int32_t, 2>>()});
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed scene: ") + e.what());
  }
  return scene;
}

void save_volume(const VolumeTimeSeries& volume, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  json header = header_to_json(volume.header());
  header["dataFile"] = "volume.raw";
  write_text_file(dir / "volume.json", header.dump(2) + "\n");

  std::ofstream out(dir / "volume.raw", std::ios::binary);
  if (!out) throw ValidationError("cannot write " + (dir / "volume.raw").string());
  std::vector<unsigned char> bytes(volume.header().voxels_per_frame() * 2);
  for (std::int32_t t = 0; t < volume.timepoints(); ++t) {
    auto f = volume.frame(t);
    for (std::size_t i = 0; i < f.size(); ++i) {
      bytes[2 * i] = static_cast<unsigned char>(f[i] & 0xFF);
      bytes[2 * i + 1] = static_cast<unsigned char>(f[i] >> 8);
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  }
}

VolumeTimeSeries load_volume(const std::filesystem::path& dir) {
  json header_doc;
  try {
    header_doc = json::parse(read_text_file(dir / "volume.json"));
  } catch (const json::exception& e) {
    throw ValidationError(std::string("cannot parse volume header: ") + e.what());
  }
  VolumeTimeSeries volume(header_from_json(header_doc));
  const auto data_file = dir / header_doc.value("dataFile", std::string("volume.raw"));
  std::ifstream in(data_file, std::ios::binary);
  if (!in) throw NotFoundError("cannot open " + data_file.string());
  std::vector<unsigned char> bytes(volume.header().voxels_per_frame() * 2);
  for (std::int32_t t = 0; t < volume.timepoints(); ++t) {
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (static_cast<std::size_t>(in.gcount()) != bytes.size()) throw ValidationError("volume data file is truncated");
    auto f = volume.frame(t);
    for (std::size_t i = 0; i < f.size(); ++i) {
      f[i] = static_cast<VolumeTimeSeries::Sample>(bytes[2 * i] | (bytes[2 * i + 1] << 8));
    }
  }
  return volume;
}

}  // namespace trackbridge
