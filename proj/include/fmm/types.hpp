#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace fmm {

//! Invalid argument to an operation (out-of-range key, point outside domain, ...)
class domain_error : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

//! Inconsistent or unsupported configuration (depth too large, too many ranks, ...)
class config_error : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Vec3 {
  double x = 0, y = 0, z = 0;

  constexpr Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  constexpr Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  constexpr Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  constexpr bool operator==(const Vec3&) const = default;
  constexpr double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
};

inline double norm2(const Vec3& v) { return v.x * v.x + v.y * v.y + v.z * v.z; }
inline double norm(const Vec3& v) { return std::sqrt(norm2(v)); }

//! Axis-aligned cube [lo, lo + width)^3
struct Domain {
  Vec3 lo;
  double width = 1;

  double half_width() const { return width / 2; }
  Vec3 center() const { return lo + Vec3{1, 1, 1} * half_width(); }
  bool contains(const Vec3& p) const {
    return p.x >= lo.x && p.x < lo.x + width && p.y >= lo.y && p.y < lo.y + width &&
           p.z >= lo.z && p.z < lo.z + width;
  }
};

enum class Precision { double_scalar, single_near_field };

inline std::string to_string(Precision p) {
  return p == Precision::double_scalar ? "double" : "single";
}

}  // namespace fmm
