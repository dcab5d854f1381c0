#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace trackbridge {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

using SpotId = std::int32_t;
using LinkId = std::int32_t;
using TagRef = std::int16_t;

inline constexpr std::int32_t kNil = -1;
inline constexpr TagRef kNoTag = -1;

// Upper triangle of a symmetric 3x3 matrix: xx, xy, xz, yy, yz, zz.
struct SymMat3 {
  std::array<double, 6> v{1.0, 0.0, 0.0, 1.0, 0.0, 1.0};

  static SymMat3 identity() { return {}; }
  static SymMat3 isotropic(double sd) {
    const double var = sd * sd;
    return {{var, 0.0, 0.0, var, 0.0, var}};
  }
  static SymMat3 from_matrix(const Mat3& m) {
    return {{m(0, 0), m(0, 1), m(0, 2), m(1, 1), m(1, 2), m(2, 2)}};
  }

  Mat3 matrix() const {
    Mat3 m;
    m << v[0], v[1], v[2],
         v[1], v[3], v[4],
         v[2], v[4], v[5];
    return m;
  }

  // Smallest eigenvalue must be >= -tol.
  bool is_psd(double tol = 1e-9) const;

  friend bool operator==(const SymMat3&, const SymMat3&) = default;
};

struct Rgba {
  float r = 1.0f;
  float g = 1.0f;
  float b = 1.0f;
  float a = 1.0f;

  friend bool operator==(const Rgba&, const Rgba&) = default;
};

// Error taxonomy shared by every module.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* code() const noexcept { return "error"; }
};

class RangeError : public Error {
 public:
  using Error::Error;
  const char* code() const noexcept override { return "range"; }
};

class ValidationError : public Error {
 public:
  using Error::Error;
  const char* code() const noexcept override { return "validation"; }
};

class NotFoundError : public Error {
 public:
  using Error::Error;
  const char* code() const noexcept override { return "not_found"; }
};

class DuplicateError : public Error {
 public:
  using Error::Error;
  const char* code() const noexcept override { return "duplicate"; }
};

class StateError : public Error {
 public:
  using Error::Error;
  const char* code() const noexcept override { return "state"; }
};

class StaleIndexError : public Error {
 public:
  using Error::Error;
  const char* code() const noexcept override { return "stale_index"; }
};

class ExtractionFailed : public Error {
 public:
  using Error::Error;
  const char* code() const noexcept override { return "extraction_failed"; }
};

}  // namespace trackbridge
