#pragma once

#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "batched.hpp"
#include "config.hpp"
#include "kernels.hpp"
#include "parallel.hpp"
#include "timing.hpp"
#include "tree.hpp"

namespace fmm {

//! Multipole and local coefficients for every cell of a tree, flat storage.
class Expansions {
 public:
  Expansions() = default;
  Expansions(std::size_t cells, int p)
      : p_(p), stride_(harmonic_count(p)), multipole_(cells * stride_), local_(cells * stride_) {
    if (p < 1 || p > max_order) throw config_error("Expansions: order out of range");
  }

  int order() const { return p_; }
  std::size_t stride() const { return stride_; }
  std::size_t cells() const { return stride_ ? multipole_.size() / stride_ : 0; }

  std::span<complex> multipole(std::size_t cell) { return {multipole_.data() + cell * stride_, stride_}; }
  std::span<const complex> multipole(std::size_t cell) const {
    return {multipole_.data() + cell * stride_, stride_};
  }
  std::span<complex> local(std::size_t cell) { return {local_.data() + cell * stride_, stride_}; }
  std::span<const complex> local(std::size_t cell) const { return {local_.data() + cell * stride_, stride_}; }

 private:
  int p_ = 0;
  std::size_t stride_ = 0;
  std::vector<complex> multipole_, local_;
};

struct Diagnostics {
  std::size_t p2p_pairs = 0;         //!< ordered near-field pairs, self pairs excluded
  std::size_t m2l_pairs = 0;         //!< directed M2L translations
  std::size_t coincident_pairs = 0;  //!< distinct bodies at zero distance (skipped)
};

struct FmmResult {
  std::vector<double> potential, fx, fy, fz;  //!< caller's body order
  TimingBreakdown timing;
  Diagnostics diagnostics;
};

//! P2M at every leaf, then M2M level by level up to the root.
inline void upward_sweep(const Tree& tree, Expansions& ex, WorkerPool& pool,
                         TimingBreakdown* timing = nullptr) {
  const int p = ex.order();
  auto [leaf_begin, leaf_end] = tree.leaf_range();
  {
    PhaseTimer t(timing, Phase::p2m);
    parallel_apply(pool, leaf_end - leaf_begin, [&](std::size_t k) {
      const Cell& c = tree.cells[leaf_begin + k];
      p2m(tree.bodies, c.body_start, c.body_count, c.center, p, ex.multipole(leaf_begin + k));
    });
  }
  PhaseTimer t(timing, Phase::m2m);
  for (int level = tree.max_level - 1; level >= 0; --level) {
    auto [begin, end] = tree.level_range(level);
    parallel_apply(pool, end - begin, [&](std::size_t k) {
      const std::size_t i = begin + k;
      const Cell& c = tree.cells[i];
      for (int j = 0; j < c.child_count(); ++j) {
        const auto child = static_cast<std::size_t>(c.first_child + j);
        m2m(ex.multipole(child), tree.cells[child].center, c.center, p, ex.multipole(i));
      }
    });
  }
}

//! M2L for one target cell over its interaction list, ascending source key.
inline void m2l_gather(const Tree& tree, const InteractionLists& lists, Expansions& ex, std::size_t i) {
  const Cell& c = tree.cells[i];
  for (CellIndex s : lists.interactions[i])
    m2l(ex.multipole(s), tree.cells[s].center, c.center, ex.order(), ex.local(i));
}

/// Accumulates far-field interaction-list contributions into the locals of
/// every cell at levels 2..max_level. Levels carry no mutual dependency: by
/// default all of them form a single parallel loop with no barrier between
/// levels. A non-empty `level_order` processes levels one at a time in that
/// order instead (used to demonstrate the independence).
inline void transfer_m2l(const Tree& tree, const InteractionLists& lists, Expansions& ex,
                         WorkerPool& pool, TimingBreakdown* timing = nullptr,
                         std::span<const int> level_order = {}) {
  if (tree.max_level < 2) return;
  PhaseTimer t(timing, Phase::m2l);
  if (level_order.empty()) {
    const std::size_t begin = tree.level_offsets[2];
    const std::size_t end = tree.level_offsets.back();
    parallel_apply(pool, end - begin, [&](std::size_t k) { m2l_gather(tree, lists, ex, begin + k); });
    return;
  }
  for (int level : level_order) {
    if (level < 2 || level > tree.max_level) continue;
    auto [begin, end] = tree.level_range(level);
    parallel_apply(pool, end - begin, [&](std::size_t k) { m2l_gather(tree, lists, ex, begin + k); });
  }
}

//! L2L from level 2 down to the leaves' parents, then L2P at every leaf.
inline void downward_sweep(Tree& tree, Expansions& ex, WorkerPool& pool,
                           TimingBreakdown* timing = nullptr) {
  if (tree.max_level < 2) return;  // no interaction lists above level 2: locals are zero
  const int p = ex.order();
  {
    PhaseTimer t(timing, Phase::l2l);
    for (int level = 3; level <= tree.max_level; ++level) {
      auto [begin, end] = tree.level_range(level);
      parallel_apply(pool, end - begin, [&](std::size_t k) {
        const std::size_t i = begin + k;
        const auto parent = static_cast<std::size_t>(tree.cells[i].parent);
        l2l(ex.local(parent), tree.cells[parent].center, tree.cells[i].center, p, ex.local(i));
      });
    }
  }
  PhaseTimer t(timing, Phase::l2p);
  auto [leaf_begin, leaf_end] = tree.leaf_range();
  parallel_apply(pool, leaf_end - leaf_begin, [&](std::size_t k) {
    const Cell& c = tree.cells[leaf_begin + k];
    l2p(ex.local(leaf_begin + k), c.center, p, tree.bodies, c.body_start, c.body_count);
  });
}

//! Packs one target leaf and its sources (relative to the leaf center) into a batch.
template <class SourceLeaves>
void pack_leaf_batch(InteractionBatch& batch, const Bodies& targets, const Cell& leaf,
                     const Bodies& sources, const std::vector<Cell>& cells, const SourceLeaves& neighbors) {
  batch.clear();
  const Vec3 o = leaf.center;
  for (std::size_t i = leaf.body_start; i < leaf.body_start + leaf.body_count; ++i)
    batch.add_target(static_cast<float>(targets.x[i] - o.x), static_cast<float>(targets.y[i] - o.y),
                     static_cast<float>(targets.z[i] - o.z));
  for (CellIndex s : neighbors) {
    const Cell& src = cells[s];
    for (std::size_t j = src.body_start; j < src.body_start + src.body_count; ++j)
      batch.add_source(static_cast<float>(sources.x[j] - o.x), static_cast<float>(sources.y[j] - o.y),
                       static_cast<float>(sources.z[j] - o.z), static_cast<float>(sources.q[j]));
  }
  batch.pad();
}

inline void unpack_leaf_batch(const InteractionBatch& batch, Bodies& targets, const Cell& leaf) {
  for (std::size_t k = 0; k < leaf.body_count; ++k) {
    const std::size_t i = leaf.body_start + k;
    targets.potential[i] += batch.potential[k];
    targets.fx[i] += batch.fx[k];
    targets.fy[i] += batch.fy[k];
    targets.fz[i] += batch.fz[k];
  }
}

//! Near-field pairs for one target leaf; returns zero-distance pairs (self pairs included).
inline std::size_t near_field_leaf(Bodies& targets, const Bodies& sources, const std::vector<Cell>& cells,
                                   std::size_t leaf, std::span<const CellIndex> neighbors,
                                   Precision mode, InteractionBatch& batch) {
  const Cell& c = cells[leaf];
  if (mode == Precision::double_scalar) {
    std::size_t zeros = 0;
    for (CellIndex s : neighbors)
      zeros += p2p(targets, c.body_start, c.body_count, sources, cells[s].body_start, cells[s].body_count);
    return zeros;
  }
  pack_leaf_batch(batch, targets, c, sources, cells, neighbors);
  const std::size_t zeros = p2p_batched(batch);
  unpack_leaf_batch(batch, targets, c);
  return zeros;
}

//! Σ_leaves count_i · Σ_neighbors count_j − N.
inline std::size_t near_field_pair_count(const Tree& tree, const InteractionLists& lists) {
  auto [leaf_begin, leaf_end] = tree.leaf_range();
  std::size_t pairs = 0;
  for (std::size_t i = leaf_begin; i < leaf_end; ++i) {
    std::size_t src = 0;
    for (CellIndex s : lists.neighbors[i]) src += tree.cells[s].body_count;
    pairs += tree.cells[i].body_count * src;
  }
  return pairs - tree.bodies.size();
}

/// Every leaf gathers P2P from each leaf of its neighbor list (itself
/// included), ascending source key. Returns the number of coincident
/// distinct-body pairs that were skipped.
inline std::size_t near_field(Tree& tree, const InteractionLists& lists, Precision mode,
                              WorkerPool& pool, TimingBreakdown* timing = nullptr) {
  PhaseTimer t(timing, Phase::p2p);
  auto [leaf_begin, leaf_end] = tree.leaf_range();
  std::vector<std::size_t> zeros(static_cast<std::size_t>(pool.size()), 0);
  std::vector<InteractionBatch> batches(static_cast<std::size_t>(pool.size()));
  pool.run(leaf_end - leaf_begin, [&](std::size_t begin, std::size_t end, int w) {
    std::size_t z = 0;
    for (std::size_t k = begin; k < end; ++k) {
      const std::size_t leaf = leaf_begin + k;
      z += near_field_leaf(tree.bodies, tree.bodies, tree.cells, leaf, lists.neighbors[leaf], mode,
                           batches[static_cast<std::size_t>(w)]);
    }
    zeros[static_cast<std::size_t>(w)] = z;
  });
  return std::accumulate(zeros.begin(), zeros.end(), std::size_t{0}) - tree.bodies.size();
}

//! Scatters sorted-order accumulators back to the caller's body order.
inline void unpermute(const Bodies& sorted, FmmResult& out) {
  const std::size_t n = sorted.size();
  out.potential.assign(n, 0.0);
  out.fx.assign(n, 0.0);
  out.fy.assign(n, 0.0);
  out.fz.assign(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t i = sorted.index[k];
    out.potential[i] = sorted.potential[k];
    out.fx[i] = sorted.fx[k];
    out.fy[i] = sorted.fy[k];
    out.fz[i] = sorted.fz[k];
  }
}

/// Full evaluation: tree build, upward sweep, M2L, downward sweep, near field.
/// Outputs are returned in the caller's body order.
inline FmmResult fmm_evaluate(const Bodies& bodies, const FmmConfig& config,
                              std::optional<Domain> domain = std::nullopt) {
  config.validate();
  FmmResult result;
  TimingBreakdown& timing = result.timing;
  Tree tree = build_tree(bodies, config, domain, &timing);
  InteractionLists lists;
  {
    PhaseTimer t(&timing, Phase::build_tree);
    lists = build_interaction_lists(tree);
  }
  timing.n = bodies.size();
  timing.p = config.p;
  timing.workers = config.workers;
  timing.max_level = tree.max_level;

  WorkerPool pool(config.workers);
  Expansions ex(tree.cells.size(), config.p);
  tree.bodies.clear_outputs();
  upward_sweep(tree, ex, pool, &timing);
  transfer_m2l(tree, lists, ex, pool, &timing);
  downward_sweep(tree, ex, pool, &timing);
  result.diagnostics.coincident_pairs = near_field(tree, lists, config.precision, pool, &timing);
  result.diagnostics.p2p_pairs = near_field_pair_count(tree, lists);
  result.diagnostics.m2l_pairs = lists.interactions.total();
  unpermute(tree.bodies, result);
  return result;
}

//! sqrt(Σ(a−b)² / Σb²).
inline double relative_l2_error(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw domain_error("relative_l2_error: length mismatch");
  double num = 0, den = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    num += d * d;
    den += b[i] * b[i];
  }
  if (den == 0) throw domain_error("relative_l2_error: zero reference norm");
  return std::sqrt(num / den);
}

}  // namespace fmm
