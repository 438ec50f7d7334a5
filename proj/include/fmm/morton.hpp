#pragma once

#include <cmath>
#include <cstdint>
#include <tuple>

#include "types.hpp"

namespace fmm {

//! Deepest level representable in a 64-bit packed key (3 bits per level).
inline constexpr int max_level = 21;

//! Cell identifier. `packed` interleaves the anchor bits MSB first with
//! axis order (z, y, x) inside each 3-bit group, so keys of one level sort
//! in Morton order.
struct MortonKey {
  int level = 0;
  std::uint32_t ix = 0, iy = 0, iz = 0;
  std::uint64_t packed = 0;

  MortonKey parent() const;
  MortonKey child(int octant) const;
  int octant() const { return static_cast<int>(packed & 7u); }

  friend bool operator==(const MortonKey& a, const MortonKey& b) {
    return a.level == b.level && a.packed == b.packed;
  }
  friend auto operator<=>(const MortonKey& a, const MortonKey& b) {
    return std::tie(a.level, a.packed) <=> std::tie(b.level, b.packed);
  }
};

namespace detail {

// Spreads the low 21 bits of v so that bit b lands at bit 3b.
constexpr std::uint64_t spread3(std::uint64_t v) {
  v &= 0x1fffffu;
  v = (v | v << 32) & 0x1f00000000ffffull;
  v = (v | v << 16) & 0x1f0000ff0000ffull;
  v = (v | v << 8) & 0x100f00f00f00f00full;
  v = (v | v << 4) & 0x10c30c30c30c30c3ull;
  v = (v | v << 2) & 0x1249249249249249ull;
  return v;
}

constexpr std::uint32_t compact3(std::uint64_t v) {
  v &= 0x1249249249249249ull;
  v = (v ^ (v >> 2)) & 0x10c30c30c30c30c3ull;
  v = (v ^ (v >> 4)) & 0x100f00f00f00f00full;
  v = (v ^ (v >> 8)) & 0x1f0000ff0000ffull;
  v = (v ^ (v >> 16)) & 0x1f00000000ffffull;
  v = (v ^ (v >> 32)) & 0x1fffffu;
  return static_cast<std::uint32_t>(v);
}

inline void check_level(int level) {
  if (level < 0 || level > max_level) throw domain_error("morton: level out of range");
}

}  // namespace detail

inline MortonKey morton_encode(std::uint32_t ix, std::uint32_t iy, std::uint32_t iz, int level) {
  detail::check_level(level);
  const std::uint64_t side = std::uint64_t{1} << level;
  if (ix >= side || iy >= side || iz >= side)
    throw domain_error("morton_encode: anchor outside level grid");
  std::uint64_t packed = detail::spread3(ix) | detail::spread3(iy) << 1 | detail::spread3(iz) << 2;
  return {level, ix, iy, iz, packed};
}

//! Recovers the anchor from `packed`; validates the value against `level`.
inline MortonKey morton_decode(std::uint64_t packed, int level) {
  detail::check_level(level);
  if (level < max_level && (packed >> (3 * level)) != 0)
    throw domain_error("morton_decode: packed value too large for level");
  if (level == max_level && (packed >> 63) != 0)
    throw domain_error("morton_decode: packed value too large for level");
  return {level, detail::compact3(packed), detail::compact3(packed >> 1),
          detail::compact3(packed >> 2), packed};
}

inline MortonKey morton_decode(const MortonKey& key) { return morton_decode(key.packed, key.level); }

inline MortonKey MortonKey::parent() const {
  if (level == 0) throw domain_error("MortonKey::parent: root has no parent");
  return {level - 1, ix >> 1, iy >> 1, iz >> 1, packed >> 3};
}

inline MortonKey MortonKey::child(int oct) const {
  if (level >= max_level) throw domain_error("MortonKey::child: below max level");
  std::uint32_t o = static_cast<std::uint32_t>(oct);
  return {level + 1, ix << 1 | (o & 1u), iy << 1 | (o >> 1 & 1u), iz << 1 | (o >> 2 & 1u),
          packed << 3 | o};
}

namespace detail {

// Cell index along one axis of a point already known to be inside the domain.
// Half-open: a point on an internal face belongs to the higher-index cell.
inline std::uint32_t grid_coordinate(double offset, double width, std::uint64_t side) {
  double s = std::floor(offset / width * static_cast<double>(side));
  if (s < 0) return 0;
  if (s >= static_cast<double>(side)) return static_cast<std::uint32_t>(side - 1);  // rounding at the max face
  return static_cast<std::uint32_t>(s);
}

}  // namespace detail

inline MortonKey point_to_key(const Vec3& p, const Domain& domain, int level) {
  detail::check_level(level);
  if (!domain.contains(p)) throw domain_error("point_to_key: position outside domain");
  const std::uint64_t side = std::uint64_t{1} << level;
  const double w = domain.width;
  return morton_encode(detail::grid_coordinate(p.x - domain.lo.x, w, side),
                       detail::grid_coordinate(p.y - domain.lo.y, w, side),
                       detail::grid_coordinate(p.z - domain.lo.z, w, side), level);
}

}  // namespace fmm
