#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "evaluator.hpp"

namespace fmm {

enum class BalanceMode { bodies, leaves };

/// Contiguous spans of the Morton-ordered leaf sequence, one per rank.
/// Cell ownership is the range of ranks holding the cell's leaves; a cell is
/// single-owner when that range has one element.
struct RankPartition {
  int nranks = 1;
  std::vector<std::size_t> leaf_offsets;  //!< rank r owns leaves [leaf_offsets[r], leaf_offsets[r+1]) (level-local)
  std::vector<std::size_t> body_offsets;  //!< rank r owns sorted bodies [body_offsets[r], body_offsets[r+1])
  std::vector<int> rank_lo, rank_hi;      //!< per cell

  bool single_owner(std::size_t cell) const { return rank_lo[cell] == rank_hi[cell]; }
  bool touches(std::size_t cell, int rank) const { return rank_lo[cell] <= rank && rank <= rank_hi[cell]; }
  std::size_t body_count(int rank) const {
    return body_offsets[static_cast<std::size_t>(rank) + 1] - body_offsets[static_cast<std::size_t>(rank)];
  }
};

/// Greedy contiguous split targeting equal body counts (or equal leaf counts)
/// per rank: cut r is placed at the leaf boundary whose prefix weight is
/// closest to r * total / nranks.
inline RankPartition partition(const Tree& tree, int nranks, BalanceMode mode = BalanceMode::bodies) {
  const std::size_t nleaves = tree.leaf_count();
  if (nranks < 1) throw config_error("partition: nranks must be >= 1");
  if (static_cast<std::size_t>(nranks) > nleaves) throw config_error("partition: more ranks than leaves");
  const std::size_t leaf_begin = tree.leaf_range().first;

  std::vector<double> prefix(nleaves + 1, 0.0);
  for (std::size_t k = 0; k < nleaves; ++k)
    prefix[k + 1] = prefix[k] + (mode == BalanceMode::bodies
                                     ? static_cast<double>(tree.cells[leaf_begin + k].body_count)
                                     : 1.0);

  RankPartition part;
  part.nranks = nranks;
  part.leaf_offsets.assign(static_cast<std::size_t>(nranks) + 1, 0);
  part.leaf_offsets.back() = nleaves;
  for (int r = 1; r < nranks; ++r) {
    const double target = prefix.back() * r / nranks;
    const std::size_t lo = part.leaf_offsets[static_cast<std::size_t>(r) - 1] + 1;
    const std::size_t hi = nleaves - static_cast<std::size_t>(nranks - r);
    auto it = std::lower_bound(prefix.begin() + static_cast<std::ptrdiff_t>(lo),
                               prefix.begin() + static_cast<std::ptrdiff_t>(hi) + 1, target);
    std::size_t k = std::min(static_cast<std::size_t>(it - prefix.begin()), hi);
    if (k > lo && target - prefix[k - 1] <= prefix[k] - target) --k;
    part.leaf_offsets[static_cast<std::size_t>(r)] = k;
  }

  part.body_offsets.assign(static_cast<std::size_t>(nranks) + 1, 0);
  for (int r = 0; r <= nranks; ++r) {
    const std::size_t k = part.leaf_offsets[static_cast<std::size_t>(r)];
    part.body_offsets[static_cast<std::size_t>(r)] =
        k < nleaves ? tree.cells[leaf_begin + k].body_start : tree.bodies.size();
  }

  part.rank_lo.assign(tree.cells.size(), 0);
  part.rank_hi.assign(tree.cells.size(), 0);
  for (int r = 0; r < nranks; ++r)
    for (std::size_t k = part.leaf_offsets[static_cast<std::size_t>(r)];
         k < part.leaf_offsets[static_cast<std::size_t>(r) + 1]; ++k)
      part.rank_lo[leaf_begin + k] = part.rank_hi[leaf_begin + k] = r;
  for (int level = tree.max_level - 1; level >= 0; --level) {
    auto [begin, end] = tree.level_range(level);
    for (std::size_t i = begin; i < end; ++i) {
      const Cell& c = tree.cells[i];
      part.rank_lo[i] = part.rank_lo[static_cast<std::size_t>(c.first_child)];
      part.rank_hi[i] = part.rank_hi[static_cast<std::size_t>(c.first_child + c.child_count() - 1)];
    }
  }
  return part;
}

//! Bytes per exchanged body: position and charge.
inline constexpr std::size_t body_record_bytes = 4 * sizeof(double);

//! Bytes per exchanged multipole: coefficients plus expansion center.
inline std::size_t multipole_record_bytes(int p) {
  return harmonic_count(p) * sizeof(complex) + 3 * sizeof(double);
}

struct RemoteCell {
  CellIndex cell = 0;
  int owner = 0;
  friend bool operator==(const RemoteCell&, const RemoteCell&) = default;
};

/// Local essential tree of one rank: the remote data it must receive.
/// Halo entries are remote leaves adjacent to an owned leaf. Multipole
/// entries cover every interaction-list cell that the rank does not hold
/// entirely: a remote single-owner cell is requested as is, a cell split
/// across ranks is requested as its maximal remote single-owner subtrees
/// (the rank rebuilds the split cell with M2M).
struct LetManifest {
  int rank = 0;
  std::vector<RemoteCell> halo_leaves;
  std::vector<RemoteCell> multipoles;
  std::size_t halo_bodies = 0;
  std::size_t bytes_p2p = 0;
  std::size_t bytes_m2l = 0;
};

namespace detail {

inline void collect_units(const Tree& tree, const RankPartition& part, int rank, std::size_t cell,
                          std::vector<CellIndex>& out) {
  if (part.single_owner(cell)) {
    if (part.rank_lo[cell] != rank) out.push_back(static_cast<CellIndex>(cell));
    return;
  }
  const Cell& c = tree.cells[cell];
  for (int k = 0; k < c.child_count(); ++k)
    collect_units(tree, part, rank, static_cast<std::size_t>(c.first_child + k), out);
}

inline void sort_unique(std::vector<CellIndex>& v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
}

}  // namespace detail

//! Interaction-list cells of every cell the rank touches (levels >= 2), unique and sorted.
inline std::vector<CellIndex> needed_m2l_sources(const Tree& tree, const InteractionLists& lists,
                                                 const RankPartition& part, int rank) {
  std::vector<CellIndex> needed;
  for (int level = 2; level <= tree.max_level; ++level) {
    auto [begin, end] = tree.level_range(level);
    for (std::size_t i = begin; i < end; ++i)
      if (part.touches(i, rank))
        needed.insert(needed.end(), lists.interactions[i].begin(), lists.interactions[i].end());
  }
  detail::sort_unique(needed);
  return needed;
}

inline LetManifest build_let(const RankPartition& part, const Tree& tree, const InteractionLists& lists,
                             int rank, int p) {
  if (rank < 0 || rank >= part.nranks) throw domain_error("build_let: rank out of range");
  LetManifest let;
  let.rank = rank;
  if (part.nranks == 1) return let;
  const std::size_t leaf_begin = tree.leaf_range().first;

  std::vector<CellIndex> halo;
  for (std::size_t k = part.leaf_offsets[static_cast<std::size_t>(rank)];
       k < part.leaf_offsets[static_cast<std::size_t>(rank) + 1]; ++k)
    for (CellIndex s : lists.neighbors[leaf_begin + k])
      if (part.rank_lo[s] != rank) halo.push_back(s);
  detail::sort_unique(halo);

  std::vector<CellIndex> units;
  for (CellIndex s : needed_m2l_sources(tree, lists, part, rank)) detail::collect_units(tree, part, rank, s, units);
  detail::sort_unique(units);

  for (CellIndex s : halo) {
    let.halo_leaves.push_back({s, part.rank_lo[s]});
    let.halo_bodies += tree.cells[s].body_count;
  }
  for (CellIndex s : units) let.multipoles.push_back({s, part.rank_lo[s]});
  let.bytes_p2p = let.halo_bodies * body_record_bytes;
  let.bytes_m2l = let.multipoles.size() * multipole_record_bytes(p);
  return let;
}

struct RankComm {
  int rank = 0;
  std::size_t bodies = 0;
  std::size_t halo_bodies = 0;
  std::size_t multipole_records = 0;
  std::size_t bytes_p2p = 0;
  std::size_t bytes_m2l = 0;
};

struct CommStats {
  std::vector<RankComm> ranks;
  std::size_t bytes_p2p = 0;
  std::size_t bytes_m2l = 0;
  double imbalance = 1;  //!< max / mean of per-rank received bytes (1 when nothing is sent)

  std::string to_csv() const {
    std::ostringstream os;
    os << "rank,bodies,halo_bodies,multipole_records,bytes_p2p,bytes_m2l\n";
    for (const auto& r : ranks)
      os << r.rank << ',' << r.bodies << ',' << r.halo_bodies << ',' << r.multipole_records << ','
         << r.bytes_p2p << ',' << r.bytes_m2l << '\n';
    return os.str();
  }
};

inline CommStats comm_stats(const std::vector<LetManifest>& manifests,
                            const RankPartition* part = nullptr) {
  CommStats stats;
  double max_bytes = 0, sum_bytes = 0;
  for (const auto& m : manifests) {
    RankComm r;
    r.rank = m.rank;
    r.bodies = part ? part->body_count(m.rank) : 0;
    r.halo_bodies = m.halo_bodies;
    r.multipole_records = m.multipoles.size();
    r.bytes_p2p = m.bytes_p2p;
    r.bytes_m2l = m.bytes_m2l;
    stats.bytes_p2p += m.bytes_p2p;
    stats.bytes_m2l += m.bytes_m2l;
    const double b = static_cast<double>(m.bytes_p2p + m.bytes_m2l);
    max_bytes = std::max(max_bytes, b);
    sum_bytes += b;
    stats.ranks.push_back(r);
  }
  if (sum_bytes > 0) stats.imbalance = max_bytes / (sum_bytes / static_cast<double>(manifests.size()));
  return stats;
}

struct DistributedResult {
  FmmResult result;  //!< merged; per-phase times are the max over ranks
  RankPartition partition;
  std::vector<LetManifest> manifests;
  std::vector<TimingBreakdown> rank_timing;
  CommStats comm;
};

/// In-process multi-rank FMM. Every rank shares the global tree topology but
/// only holds its own bodies and the multipoles it computed until the
/// simulated exchange copies its LET into its store. prepare() builds the
/// topology, partition and manifests; execute() runs the ranks with any
/// (possibly edited) manifests.
class DistributedRun {
 public:
  DistributedRun(const Bodies& bodies, const FmmConfig& config, int nranks,
                 BalanceMode mode = BalanceMode::bodies, std::optional<Domain> domain = std::nullopt)
      : config_(config) {
    config_.validate();
    tree_ = build_tree(bodies, config_, domain, &global_timing_);
    {
      PhaseTimer t(&global_timing_, Phase::build_tree);
      lists_ = build_interaction_lists(tree_);
    }
    part_ = partition(tree_, nranks, mode);
    for (int r = 0; r < nranks; ++r) manifests_.push_back(build_let(part_, tree_, lists_, r, config_.p));
  }

  const Tree& tree() const { return tree_; }
  const InteractionLists& lists() const { return lists_; }
  const RankPartition& rank_partition() const { return part_; }
  std::vector<LetManifest>& manifests() { return manifests_; }

  DistributedResult execute();

 private:
  struct RankStore {
    Bodies bodies;
    Expansions ex;
    std::vector<char> have_multipole;
  };

  void rank_upward(int rank, RankStore& store, WorkerPool& pool, TimingBreakdown& t);
  void complete_multipole(RankStore& store, std::size_t cell);
  void rank_downward(int rank, RankStore& store, WorkerPool& pool, TimingBreakdown& t, std::size_t& zeros);

  FmmConfig config_;
  TimingBreakdown global_timing_;
  Tree tree_;
  InteractionLists lists_;
  RankPartition part_;
  std::vector<LetManifest> manifests_;
};

inline void DistributedRun::rank_upward(int rank, RankStore& store, WorkerPool& pool, TimingBreakdown& t) {
  const int p = config_.p;
  const std::size_t leaf_begin = tree_.leaf_range().first;
  const std::size_t k0 = part_.leaf_offsets[static_cast<std::size_t>(rank)];
  const std::size_t k1 = part_.leaf_offsets[static_cast<std::size_t>(rank) + 1];
  {
    PhaseTimer timer(&t, Phase::p2m);
    parallel_apply(pool, k1 - k0, [&](std::size_t k) {
      const std::size_t i = leaf_begin + k0 + k;
      const Cell& c = tree_.cells[i];
      auto M = store.ex.multipole(i);
      std::fill(M.begin(), M.end(), complex{});
      p2m(store.bodies, c.body_start, c.body_count, c.center, p, M);
      store.have_multipole[i] = 1;
    });
  }
  PhaseTimer timer(&t, Phase::m2m);
  for (int level = tree_.max_level - 1; level >= 0; --level) {
    auto [begin, end] = tree_.level_range(level);
    parallel_apply(pool, end - begin, [&](std::size_t k) {
      const std::size_t i = begin + k;
      if (!part_.single_owner(i) || part_.rank_lo[i] != rank) return;
      const Cell& c = tree_.cells[i];
      auto M = store.ex.multipole(i);
      std::fill(M.begin(), M.end(), complex{});
      for (int j = 0; j < c.child_count(); ++j) {
        const auto child = static_cast<std::size_t>(c.first_child + j);
        m2m(store.ex.multipole(child), tree_.cells[child].center, c.center, p, M);
      }
      store.have_multipole[i] = 1;
    });
  }
}

//! Rebuilds a split cell's multipole from its children (same order as the serial sweep).
inline void DistributedRun::complete_multipole(RankStore& store, std::size_t cell) {
  if (store.have_multipole[cell] || part_.single_owner(cell)) return;
  const Cell& c = tree_.cells[cell];
  auto M = store.ex.multipole(cell);
  std::fill(M.begin(), M.end(), complex{});
  for (int j = 0; j < c.child_count(); ++j) {
    const auto child = static_cast<std::size_t>(c.first_child + j);
    complete_multipole(store, child);
    m2m(store.ex.multipole(child), tree_.cells[child].center, c.center, config_.p, M);
  }
  store.have_multipole[cell] = 1;
}

inline void DistributedRun::rank_downward(int rank, RankStore& store, WorkerPool& pool, TimingBreakdown& t,
                                          std::size_t& zeros) {
  const int p = config_.p;
  {
    PhaseTimer timer(&t, Phase::m2m);
    for (CellIndex s : needed_m2l_sources(tree_, lists_, part_, rank)) complete_multipole(store, s);
  }
  if (tree_.max_level >= 2) {
    {
      PhaseTimer timer(&t, Phase::m2l);
      const std::size_t begin = tree_.level_offsets[2], end = tree_.level_offsets.back();
      parallel_apply(pool, end - begin, [&](std::size_t k) {
        if (part_.touches(begin + k, rank)) m2l_gather(tree_, lists_, store.ex, begin + k);
      });
    }
    {
      PhaseTimer timer(&t, Phase::l2l);
      for (int level = 3; level <= tree_.max_level; ++level) {
        auto [begin, end] = tree_.level_range(level);
        parallel_apply(pool, end - begin, [&](std::size_t k) {
          const std::size_t i = begin + k;
          if (!part_.touches(i, rank)) return;
          const auto parent = static_cast<std::size_t>(tree_.cells[i].parent);
          l2l(store.ex.local(parent), tree_.cells[parent].center, tree_.cells[i].center, p, store.ex.local(i));
        });
      }
    }
  }
  const std::size_t leaf_begin = tree_.leaf_range().first;
  const std::size_t k0 = part_.leaf_offsets[static_cast<std::size_t>(rank)];
  const std::size_t k1 = part_.leaf_offsets[static_cast<std::size_t>(rank) + 1];
  if (tree_.max_level >= 2) {
    PhaseTimer timer(&t, Phase::l2p);
    parallel_apply(pool, k1 - k0, [&](std::size_t k) {
      const std::size_t i = leaf_begin + k0 + k;
      const Cell& c = tree_.cells[i];
      l2p(store.ex.local(i), c.center, p, store.bodies, c.body_start, c.body_count);
    });
  }
  PhaseTimer timer(&t, Phase::p2p);
  std::vector<std::size_t> z(static_cast<std::size_t>(pool.size()), 0);
  std::vector<InteractionBatch> batches(static_cast<std::size_t>(pool.size()));
  pool.run(k1 - k0, [&](std::size_t begin, std::size_t end, int w) {
    std::size_t acc = 0;
    for (std::size_t k = begin; k < end; ++k) {
      const std::size_t i = leaf_begin + k0 + k;
      acc += near_field_leaf(store.bodies, store.bodies, tree_.cells, i, lists_.neighbors[i],
                             config_.precision, batches[static_cast<std::size_t>(w)]);
    }
    z[static_cast<std::size_t>(w)] = acc;
  });
  for (auto v : z) zeros += v;
}

inline DistributedResult DistributedRun::execute() {
  const int nranks = part_.nranks;
  const std::size_t n = tree_.bodies.size();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  DistributedResult out;
  out.partition = part_;
  out.manifests = manifests_;
  out.rank_timing.assign(static_cast<std::size_t>(nranks), TimingBreakdown{});
  WorkerPool pool(config_.workers);

  // Rank-private stores: unknown remote data is NaN so a missing LET entry
  // cannot go unnoticed.
  std::vector<RankStore> stores(static_cast<std::size_t>(nranks));
  for (int r = 0; r < nranks; ++r) {
    auto& s = stores[static_cast<std::size_t>(r)];
    s.bodies.resize(n);
    for (auto* v : {&s.bodies.x, &s.bodies.y, &s.bodies.z, &s.bodies.q}) std::fill(v->begin(), v->end(), nan);
    for (std::size_t i = part_.body_offsets[static_cast<std::size_t>(r)];
         i < part_.body_offsets[static_cast<std::size_t>(r) + 1]; ++i) {
      s.bodies.x[i] = tree_.bodies.x[i];
      s.bodies.y[i] = tree_.bodies.y[i];
      s.bodies.z[i] = tree_.bodies.z[i];
      s.bodies.q[i] = tree_.bodies.q[i];
    }
    s.ex = Expansions(tree_.cells.size(), config_.p);
    for (std::size_t c = 0; c < tree_.cells.size(); ++c) {
      auto M = s.ex.multipole(c);
      std::fill(M.begin(), M.end(), complex{nan, nan});
    }
    s.have_multipole.assign(tree_.cells.size(), 0);
  }

  for (int r = 0; r < nranks; ++r)
    rank_upward(r, stores[static_cast<std::size_t>(r)], pool, out.rank_timing[static_cast<std::size_t>(r)]);

  // Simulated all-to-all, one round per category.
  for (int r = 0; r < nranks; ++r) {
    auto& dst = stores[static_cast<std::size_t>(r)];
    auto& t = out.rank_timing[static_cast<std::size_t>(r)];
    const LetManifest& let = manifests_[static_cast<std::size_t>(r)];
    {
      PhaseTimer timer(&t, Phase::sim_send_p2p);
      for (const RemoteCell& rc : let.halo_leaves) {
        const auto& src = stores[static_cast<std::size_t>(rc.owner)].bodies;
        const Cell& c = tree_.cells[rc.cell];
        for (std::size_t i = c.body_start; i < c.body_start + c.body_count; ++i) {
          dst.bodies.x[i] = src.x[i];
          dst.bodies.y[i] = src.y[i];
          dst.bodies.z[i] = src.z[i];
          dst.bodies.q[i] = src.q[i];
        }
      }
    }
    PhaseTimer timer(&t, Phase::sim_send_m2l);
    for (const RemoteCell& rc : let.multipoles) {
      auto from = stores[static_cast<std::size_t>(rc.owner)].ex.multipole(rc.cell);
      std::copy(from.begin(), from.end(), dst.ex.multipole(rc.cell).begin());
      dst.have_multipole[rc.cell] = 1;
    }
  }

  std::size_t zeros = 0;
  for (int r = 0; r < nranks; ++r)
    rank_downward(r, stores[static_cast<std::size_t>(r)], pool, out.rank_timing[static_cast<std::size_t>(r)], zeros);

  // Merge owned outputs in sorted order, then restore the caller's order.
  Bodies merged = tree_.bodies;
  for (int r = 0; r < nranks; ++r) {
    const auto& s = stores[static_cast<std::size_t>(r)].bodies;
    for (std::size_t i = part_.body_offsets[static_cast<std::size_t>(r)];
         i < part_.body_offsets[static_cast<std::size_t>(r) + 1]; ++i) {
      merged.potential[i] = s.potential[i];
      merged.fx[i] = s.fx[i];
      merged.fy[i] = s.fy[i];
      merged.fz[i] = s.fz[i];
    }
  }
  unpermute(merged, out.result);

  TimingBreakdown& merged_t = out.result.timing;
  merged_t = global_timing_;
  for (const auto& t : out.rank_timing)
    for (std::size_t ph = static_cast<std::size_t>(Phase::p2p); ph < phase_count; ++ph)
      merged_t.seconds[ph] = std::max(merged_t.seconds[ph], t.seconds[ph]);
  merged_t.n = n;
  merged_t.p = config_.p;
  merged_t.workers = config_.workers;
  merged_t.max_level = tree_.max_level;
  for (auto& t : out.rank_timing) {
    t.p = config_.p;
    t.workers = config_.workers;
    t.max_level = tree_.max_level;
  }
  for (int r = 0; r < nranks; ++r) out.rank_timing[static_cast<std::size_t>(r)].n = part_.body_count(r);

  out.result.diagnostics.coincident_pairs = zeros - n;
  out.result.diagnostics.p2p_pairs = near_field_pair_count(tree_, lists_);
  out.result.diagnostics.m2l_pairs = lists_.interactions.total();
  out.comm = comm_stats(manifests_, &part_);
  return out;
}

//! Partition, LET exchange and rank-local evaluation in one call.
inline DistributedResult distributed_evaluate(const Bodies& bodies, const FmmConfig& config, int nranks,
                                              BalanceMode mode = BalanceMode::bodies) {
  DistributedRun run(bodies, config, nranks, mode);
  return run.execute();
}

}  // namespace fmm
