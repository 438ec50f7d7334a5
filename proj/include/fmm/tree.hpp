#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "bodies.hpp"
#include "config.hpp"
#include "morton.hpp"
#include "timing.hpp"

namespace fmm {

using CellIndex = std::uint32_t;

struct Cell {
  MortonKey key;
  Vec3 center;
  double half_width = 0;
  std::size_t body_start = 0;  //!< bodies [body_start, body_start + body_count) in sorted order
  std::size_t body_count = 0;
  std::uint8_t child_mask = 0;
  bool is_leaf = false;
  std::int64_t parent = -1;
  std::int64_t first_child = -1;  //!< children are contiguous at the next level

  int child_count() const { return std::popcount(child_mask); }
};

//! Uniform-depth linear octree. Cells are stored level by level (root first),
//! sorted by Morton key inside each level; empty cells are absent.
struct Tree {
  std::vector<Cell> cells;
  std::vector<std::size_t> level_offsets;  //!< cells of level l: [level_offsets[l], level_offsets[l+1])
  int max_level = 0;
  Domain domain;
  Bodies bodies;  //!< in leaf-key order; bodies.index maps back to the caller's order

  std::pair<std::size_t, std::size_t> level_range(int level) const {
    return {level_offsets[static_cast<std::size_t>(level)],
            level_offsets[static_cast<std::size_t>(level) + 1]};
  }
  std::size_t level_size(int level) const {
    auto [b, e] = level_range(level);
    return e - b;
  }
  std::pair<std::size_t, std::size_t> leaf_range() const { return level_range(max_level); }
  std::size_t leaf_count() const { return level_size(max_level); }

  //! Index of the occupied cell with this key, if any.
  std::optional<CellIndex> find(const MortonKey& key) const {
    if (key.level < 0 || key.level > max_level) return std::nullopt;
    auto [b, e] = level_range(key.level);
    auto first = cells.begin() + static_cast<std::ptrdiff_t>(b);
    auto last = cells.begin() + static_cast<std::ptrdiff_t>(e);
    auto it = std::lower_bound(first, last, key.packed,
                               [](const Cell& c, std::uint64_t k) { return c.key.packed < k; });
    if (it == last || it->key.packed != key.packed) return std::nullopt;
    return static_cast<CellIndex>(it - cells.begin());
  }
};

//! Uniform depth for N bodies: the smallest L with ncrit * 8^L >= N.
inline int depth_for(std::size_t n, int ncrit) {
  int level = 0;
  unsigned long long capacity = static_cast<unsigned long long>(ncrit);
  while (capacity < n) {
    ++level;
    if (level > max_level) throw config_error("build_tree: required depth exceeds max_level");
    capacity *= 8;
  }
  return level;
}

inline Vec3 cell_center(const MortonKey& key, const Domain& domain) {
  const double h = domain.width / static_cast<double>(std::uint64_t{1} << key.level);
  return domain.lo + Vec3{(key.ix + 0.5) * h, (key.iy + 0.5) * h, (key.iz + 0.5) * h};
}

//! Sorts bodies into leaf Morton order and materializes every occupied cell.
inline Tree build_tree(const Bodies& input, const FmmConfig& config,
                       std::optional<Domain> domain = std::nullopt,
                       TimingBreakdown* timing = nullptr) {
  config.validate();
  const std::size_t n = input.size();
  if (n == 0) throw domain_error("build_tree: no bodies");
  Tree tree;
  tree.domain = domain ? *domain : bounding_domain(input);
  tree.max_level = config.level ? *config.level : depth_for(n, config.effective_ncrit());
  if (tree.max_level > max_level) throw config_error("build_tree: level exceeds max_level");
  const int depth = tree.max_level;

  std::vector<std::pair<std::uint64_t, std::size_t>> keyed(n);
  {
    PhaseTimer t(timing, Phase::sort);
    for (std::size_t i = 0; i < n; ++i)
      keyed[i] = {point_to_key(input.position(i), tree.domain, depth).packed, i};
    std::sort(keyed.begin(), keyed.end());
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = keyed[i].second;
    tree.bodies = input.permuted(perm);
  }

  PhaseTimer t(timing, Phase::build_tree);
  // Levels are assembled leaf-up, then spliced root-first.
  std::vector<std::vector<Cell>> levels(static_cast<std::size_t>(depth) + 1);
  auto& leaves = levels[static_cast<std::size_t>(depth)];
  const double root_half = tree.domain.half_width();
  const double leaf_half = root_half / static_cast<double>(std::uint64_t{1} << depth);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && keyed[j].first == keyed[i].first) ++j;
    Cell c;
    c.key = morton_decode(keyed[i].first, depth);
    c.center = cell_center(c.key, tree.domain);
    c.half_width = leaf_half;
    c.body_start = i;
    c.body_count = j - i;
    c.is_leaf = true;
    leaves.push_back(c);
    i = j;
  }
  for (int l = depth - 1; l >= 0; --l) {
    const auto& below = levels[static_cast<std::size_t>(l) + 1];
    auto& here = levels[static_cast<std::size_t>(l)];
    const double half = root_half / static_cast<double>(std::uint64_t{1} << l);
    for (std::size_t i = 0; i < below.size();) {
      Cell c;
      c.key = below[i].key.parent();
      c.center = cell_center(c.key, tree.domain);
      c.half_width = half;
      c.body_start = below[i].body_start;
      c.first_child = static_cast<std::int64_t>(i);  // level-local for now
      std::size_t j = i;
      for (; j < below.size() && (below[j].key.packed >> 3) == c.key.packed; ++j) {
        c.child_mask |= static_cast<std::uint8_t>(1u << below[j].key.octant());
        c.body_count += below[j].body_count;
      }
      here.push_back(c);
      i = j;
    }
  }

  tree.level_offsets.assign(static_cast<std::size_t>(depth) + 2, 0);
  for (int l = 0; l <= depth; ++l)
    tree.level_offsets[static_cast<std::size_t>(l) + 1] =
        tree.level_offsets[static_cast<std::size_t>(l)] + levels[static_cast<std::size_t>(l)].size();
  tree.cells.reserve(tree.level_offsets.back());
  for (int l = 0; l <= depth; ++l) {
    for (auto c : levels[static_cast<std::size_t>(l)]) {
      if (!c.is_leaf)
        c.first_child += static_cast<std::int64_t>(tree.level_offsets[static_cast<std::size_t>(l) + 1]);
      tree.cells.push_back(c);
    }
  }
  for (std::size_t i = 0; i < tree.cells.size(); ++i) {
    const Cell& c = tree.cells[i];
    if (c.is_leaf) continue;
    for (int k = 0; k < c.child_count(); ++k)
      tree.cells[static_cast<std::size_t>(c.first_child + k)].parent = static_cast<std::int64_t>(i);
  }
  return tree;
}

//! Occupied same-level cells whose anchors differ by at most one on every
//! axis (vertex adjacency, the cell itself included). Ascending key order.
inline std::vector<CellIndex> neighbor_list(CellIndex cell, const Tree& tree) {
  const MortonKey& key = tree.cells[cell].key;
  const std::int64_t side = std::int64_t{1} << key.level;
  std::vector<CellIndex> out;
  for (int dz = -1; dz <= 1; ++dz)
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        std::int64_t x = key.ix + dx, y = key.iy + dy, z = key.iz + dz;
        if (x < 0 || y < 0 || z < 0 || x >= side || y >= side || z >= side) continue;
        auto idx = tree.find(morton_encode(static_cast<std::uint32_t>(x), static_cast<std::uint32_t>(y),
                                           static_cast<std::uint32_t>(z), key.level));
        if (idx) out.push_back(*idx);
      }
  std::sort(out.begin(), out.end());
  return out;
}

inline bool adjacent(const MortonKey& a, const MortonKey& b) {
  auto d = [](std::uint32_t u, std::uint32_t v) { return u > v ? u - v : v - u; };
  return d(a.ix, b.ix) <= 1 && d(a.iy, b.iy) <= 1 && d(a.iz, b.iz) <= 1;
}

//! Well-separated M2L partners: children of the parent's neighbors that are
//! not neighbors of `cell` (at most 189). Ascending key order.
inline std::vector<CellIndex> interaction_list(CellIndex cell, const Tree& tree) {
  const Cell& c = tree.cells[cell];
  if (c.key.level < 2) throw domain_error("interaction_list: defined for level >= 2 only");
  std::vector<CellIndex> out;
  for (CellIndex pn : neighbor_list(static_cast<CellIndex>(c.parent), tree)) {
    const Cell& p = tree.cells[pn];
    for (int k = 0; k < p.child_count(); ++k) {
      auto idx = static_cast<CellIndex>(p.first_child + k);
      if (!adjacent(tree.cells[idx].key, c.key)) out.push_back(idx);
    }
  }
  return out;
}

//! Compressed-row list storage: row i is entries[offsets[i] .. offsets[i+1]).
struct CellLists {
  std::vector<std::size_t> offsets;
  std::vector<CellIndex> entries;

  std::span<const CellIndex> operator[](std::size_t i) const {
    return {entries.data() + offsets[i], offsets[i + 1] - offsets[i]};
  }
  std::size_t total() const { return entries.size(); }
};

//! Neighbor lists for leaves and interaction lists for every cell of level >= 2,
//! both indexed by global cell index (rows of other cells are empty).
struct InteractionLists {
  CellLists neighbors;
  CellLists interactions;
};

inline InteractionLists build_interaction_lists(const Tree& tree) {
  InteractionLists lists;
  const std::size_t ncells = tree.cells.size();
  auto [leaf_begin, leaf_end] = tree.leaf_range();
  lists.neighbors.offsets.assign(ncells + 1, 0);
  lists.interactions.offsets.assign(ncells + 1, 0);
  for (std::size_t i = 0; i < ncells; ++i) {
    lists.neighbors.offsets[i] = lists.neighbors.entries.size();
    if (i >= leaf_begin && i < leaf_end) {
      auto nb = neighbor_list(static_cast<CellIndex>(i), tree);
      lists.neighbors.entries.insert(lists.neighbors.entries.end(), nb.begin(), nb.end());
    }
    lists.interactions.offsets[i] = lists.interactions.entries.size();
    if (tree.cells[i].key.level >= 2) {
      auto il = interaction_list(static_cast<CellIndex>(i), tree);
      lists.interactions.entries.insert(lists.interactions.entries.end(), il.begin(), il.end());
    }
  }
  lists.neighbors.offsets[ncells] = lists.neighbors.entries.size();
  lists.interactions.offsets[ncells] = lists.interactions.entries.size();
  return lists;
}

}  // namespace fmm
