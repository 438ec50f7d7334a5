#pragma once

#include <cstring>
#include <random>
#include <vector>

#include "fmm/bodies.hpp"

namespace fmm::test {

//! Uniform positions in [lo, lo + width)^3, charges uniform in [qmin, qmax).
inline Bodies random_bodies(std::size_t n, std::uint64_t seed, Vec3 lo = {0, 0, 0}, double width = 1,
                            double qmin = 0.0, double qmax = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Bodies b(n);
  for (std::size_t i = 0; i < n; ++i) {
    Vec3 p{lo.x + width * u(rng), lo.y + width * u(rng), lo.z + width * u(rng)};
    b.set(i, p, qmin + (qmax - qmin) * u(rng));
  }
  return b;
}

inline bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof(double)) == 0; }

inline bool same_bits(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace fmm::test

#include <algorithm>

#include "fmm/tree.hpp"

namespace fmm::test {

//! One body at the center of every cell of a full 2^level grid over the unit cube.
inline Bodies full_grid(int level, double charge = 1.0) {
  const std::size_t side = std::size_t{1} << level;
  Bodies b(side * side * side);
  const double h = 1.0 / static_cast<double>(side);
  std::size_t i = 0;
  for (std::size_t z = 0; z < side; ++z)
    for (std::size_t y = 0; y < side; ++y)
      for (std::size_t x = 0; x < side; ++x) b.set(i++, {(x + 0.5) * h, (y + 0.5) * h, (z + 0.5) * h}, charge);
  return b;
}

inline bool adjacent_oracle(const MortonKey& a, const MortonKey& b) {
  auto d = [](long long u, long long v) { return u > v ? u - v : v - u; };
  return d(a.ix, b.ix) <= 1 && d(a.iy, b.iy) <= 1 && d(a.iz, b.iz) <= 1;
}

//! Same-level scan: cells within one anchor step on every axis.
inline std::vector<CellIndex> neighbors_oracle(const Tree& t, CellIndex c) {
  std::vector<CellIndex> out;
  auto [b, e] = t.level_range(t.cells[c].key.level);
  for (std::size_t i = b; i < e; ++i)
    if (adjacent_oracle(t.cells[i].key, t.cells[c].key)) out.push_back(static_cast<CellIndex>(i));
  return out;
}

//! Same-level scan: parents adjacent, cells not adjacent.
inline std::vector<CellIndex> interactions_oracle(const Tree& t, CellIndex c) {
  std::vector<CellIndex> out;
  const MortonKey& k = t.cells[c].key;
  auto [b, e] = t.level_range(k.level);
  for (std::size_t i = b; i < e; ++i) {
    const MortonKey& s = t.cells[i].key;
    if (adjacent_oracle(s.parent(), k.parent()) && !adjacent_oracle(s, k)) out.push_back(static_cast<CellIndex>(i));
  }
  return out;
}

inline std::size_t ancestor_at(const Tree& t, std::size_t cell, int level) {
  while (t.cells[cell].key.level > level) cell = static_cast<std::size_t>(t.cells[cell].parent);
  return cell;
}

/// Exhaustive check over ordered body pairs: each pair is either a P2P pair
/// (leaf(j) a neighbor of leaf(i)) or covered by exactly one M2L ancestor
/// pair, never both. Returns the number of violating pairs.
inline std::size_t pair_partition_violations(const Tree& t, const InteractionLists& lists) {
  const std::size_t n = t.bodies.size();
  std::vector<std::size_t> leaf_of(n);
  auto [lb, le] = t.leaf_range();
  for (std::size_t l = lb; l < le; ++l)
    for (std::size_t i = t.cells[l].body_start; i < t.cells[l].body_start + t.cells[l].body_count; ++i) leaf_of[i] = l;
  auto contains = [](std::span<const CellIndex> list, std::size_t c) {
    return std::find(list.begin(), list.end(), static_cast<CellIndex>(c)) != list.end();
  };
  std::size_t bad = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const bool near = contains(lists.neighbors[leaf_of[i]], leaf_of[j]);
      int far = 0;
      for (int level = 2; level <= t.max_level; ++level) {
        const std::size_t ai = ancestor_at(t, leaf_of[i], level), aj = ancestor_at(t, leaf_of[j], level);
        if (contains(lists.interactions[ai], aj)) ++far;
      }
      if (near == (far == 1) || far > 1) ++bad;
    }
  return bad;
}

}  // namespace fmm::test
