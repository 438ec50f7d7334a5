#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <cstring>
#include <iomanip>
#include <iterator>
#include <numeric>
#include <numbers>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "partition.hpp"

namespace fmm::bench {

//! Bad command-line or benchmark setting (exit code 1).
class usage_error : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

//! File could not be read or written (exit code 2).
class io_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum exit_code : int { ok = 0, usage = 1, io = 2, assertion = 3 };

enum class Distribution { cube_uniform, sphere_surface, lattice };

inline std::string to_string(Distribution d) {
  switch (d) {
    case Distribution::cube_uniform: return "cube";
    case Distribution::sphere_surface: return "sphere";
    case Distribution::lattice: return "lattice";
  }
  return "cube";
}

inline Distribution parse_distribution(const std::string& s) {
  if (s == "cube" || s == "cube_uniform") return Distribution::cube_uniform;
  if (s == "sphere" || s == "sphere_surface") return Distribution::sphere_surface;
  if (s == "lattice") return Distribution::lattice;
  throw usage_error("unknown distribution '" + s + "'");
}

/// Deterministic body set for a seed. Positions lie in the unit cube.
/// Random charges are uniform in (0, 1/n] so the total charge is O(1).
inline Bodies generate(Distribution dist, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw usage_error("generate: n must be >= 1");
  Bodies b(n);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double inv_n = 1.0 / static_cast<double>(n);
  switch (dist) {
    case Distribution::cube_uniform:
      for (std::size_t i = 0; i < n; ++i) {
        const double x = u(rng), y = u(rng), z = u(rng);
        b.set(i, {x, y, z}, (1.0 - u(rng)) * inv_n);
      }
      break;
    case Distribution::sphere_surface:
      for (std::size_t i = 0; i < n; ++i) {
        const double cz = 2 * u(rng) - 1, phi = 2 * std::numbers::pi * u(rng);
        const double s = std::sqrt(std::max(0.0, 1 - cz * cz));
        const Vec3 d{s * std::cos(phi), s * std::sin(phi), cz};
        b.set(i, Vec3{0.5, 0.5, 0.5} + d * 0.5, (1.0 - u(rng)) * inv_n);
      }
      break;
    case Distribution::lattice: {
      std::size_t k = 1;
      while (k * k * k < n) ++k;
      const double h = 1.0 / static_cast<double>(k);
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t ix = i % k, iy = (i / k) % k, iz = i / (k * k);
        b.set(i, {(ix + 0.5) * h, (iy + 0.5) * h, (iz + 0.5) * h}, inv_n);
      }
      break;
    }
  }
  return b;
}

struct Check {
  enum class Kind { off, sampled, full } kind = Kind::off;
  std::size_t samples = 100;

  static Check parse(const std::string& s) {
    if (s == "off") return {Kind::off, 0};
    if (s == "full") return {Kind::full, 0};
    if (s.rfind("sampled", 0) == 0) {
      if (s == "sampled") return {Kind::sampled, 100};
      if (s.size() > 8 && s[7] == ':') {
        try {
          std::size_t pos = 0;
          const long long k = std::stoll(s.substr(8), &pos);
          if (pos == s.size() - 8 && k > 0) return {Kind::sampled, static_cast<std::size_t>(k)};
        } catch (const std::exception&) {
        }
      }
    }
    throw usage_error("bad --check value '" + s + "' (off|sampled:<k>|full)");
  }

  std::string str() const {
    switch (kind) {
      case Kind::off: return "off";
      case Kind::full: return "full";
      case Kind::sampled: return "sampled:" + std::to_string(samples);
    }
    return "off";
  }
};

inline constexpr std::size_t full_check_limit = 100000;

struct BenchSpec {
  std::size_t n = 10000;
  Distribution dist = Distribution::cube_uniform;
  std::uint64_t seed = 42;
  int p = 3;
  std::optional<int> ncrit;
  std::optional<int> level;
  int workers = 1;
  int sim_ranks = 1;
  Precision precision = Precision::double_scalar;
  Check check;
  bool allow_full_check = false;  //!< lifts the O(N^2) guard
  bool verify_serial = true;      //!< with sim_ranks > 1, also run serially and compare bitwise
  std::optional<double> assert_error_below;
  std::string out;
  std::string format = "csv";
  std::string rank_csv;  //!< optional per-rank comm table

  FmmConfig config() const {
    FmmConfig c;
    c.p = p;
    c.ncrit = ncrit;
    c.level = level;
    c.precision = precision;
    c.workers = workers;
    return c;
  }

  void validate() const {
    if (n == 0) throw usage_error("--n must be >= 1");
    if (p < 1 || p > max_order) throw usage_error("--p out of range");
    if (ncrit && level) throw usage_error("--ncrit and --level are mutually exclusive");
    if (ncrit && *ncrit < 1) throw usage_error("--ncrit must be >= 1");
    if (level && (*level < 0 || *level > max_level)) throw usage_error("--level out of range");
    if (workers < 1) throw usage_error("--workers must be >= 1");
    if (sim_ranks < 1) throw usage_error("--sim-ranks must be >= 1");
    if (format != "csv" && format != "json") throw usage_error("--format must be csv or json");
    if (check.kind == Check::Kind::full && n > full_check_limit && !allow_full_check)
      throw usage_error("--check full refused for n > 100000 (pass --allow-full-check to override)");
  }
};

struct BenchRecord {
  BenchSpec spec;
  TimingBreakdown timing;
  Diagnostics diagnostics;
  std::optional<double> err_l2;
  std::size_t err_targets = 0;
  std::size_t bytes_p2p = 0, bytes_m2l = 0;
  std::optional<bool> serial_equivalent;
  double rank_kernel_max = 0;  //!< slowest rank's P2P + M2L seconds
  std::vector<TimingBreakdown> rank_timing;
  CommStats comm;
};

inline const std::vector<std::string>& csv_columns() {
  static const std::vector<std::string> cols = {
      "n",          "dist",        "seed",        "p",           "ncrit",         "level",
      "workers",    "sim_ranks",   "precision",   "t_sort",      "t_buildTree",   "t_P2P",
      "t_P2M",      "t_M2M",       "t_M2L",       "t_L2L",       "t_L2P",         "t_simSendP2P",
      "t_simSendM2L", "t_total",   "err_l2",      "err_targets", "p2p_pairs",     "m2l_pairs",
      "bytes_p2p",  "bytes_m2l"};
  return cols;
}

inline std::string csv_header() {
  std::string h;
  for (const auto& c : csv_columns()) h += (h.empty() ? "" : ",") + c;
  return h;
}

inline std::string fmt_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

inline std::string csv_row(const BenchRecord& r) {
  std::ostringstream os;
  const auto& s = r.spec;
  os << s.n << ',' << to_string(s.dist) << ',' << s.seed << ',' << s.p << ','
     << (s.level ? std::string() : std::to_string(s.ncrit.value_or(s.config().effective_ncrit()))) << ','
     << r.timing.max_level << ',' << s.workers << ',' << s.sim_ranks << ',' << to_string(s.precision);
  for (double t : r.timing.seconds) os << ',' << fmt_double(t);
  os << ',' << fmt_double(r.timing.total()) << ',' << (r.err_l2 ? fmt_double(*r.err_l2) : std::string())
     << ',' << r.err_targets << ',' << r.diagnostics.p2p_pairs << ',' << r.diagnostics.m2l_pairs << ','
     << r.bytes_p2p << ',' << r.bytes_m2l;
  return os.str();
}

inline nlohmann::json to_json(const BenchRecord& r) {
  nlohmann::json j;
  const auto& s = r.spec;
  j["n"] = s.n;
  j["dist"] = to_string(s.dist);
  j["seed"] = s.seed;
  j["p"] = s.p;
  j["ncrit"] = s.level ? nlohmann::json() : nlohmann::json(s.ncrit.value_or(s.config().effective_ncrit()));
  j["level"] = r.timing.max_level;
  j["workers"] = s.workers;
  j["sim_ranks"] = s.sim_ranks;
  j["precision"] = to_string(s.precision);
  j["check"] = s.check.str();
  j["sample_seed"] = s.seed;
  for (std::size_t k = 0; k < phase_count; ++k) {
    j["t_" + std::string(phase_names[k])] = r.timing.seconds[k];
    j["t_" + std::string(phase_names[k]) + "_x_workers"] = r.timing.seconds[k] * s.workers;
  }
  j["t_total"] = r.timing.total();
  j["t_total_x_workers"] = r.timing.total() * s.workers;
  j["err_l2"] = r.err_l2 ? nlohmann::json(*r.err_l2) : nlohmann::json();
  j["err_targets"] = r.err_targets;
  j["p2p_pairs"] = r.diagnostics.p2p_pairs;
  j["m2l_pairs"] = r.diagnostics.m2l_pairs;
  j["coincident_pairs"] = r.diagnostics.coincident_pairs;
  j["bytes_p2p"] = r.bytes_p2p;
  j["bytes_m2l"] = r.bytes_m2l;
  if (r.serial_equivalent) j["serial_equivalent"] = *r.serial_equivalent;
  if (!r.rank_timing.empty()) {
    j["rank_kernel_max"] = r.rank_kernel_max;
    j["comm_imbalance"] = r.comm.imbalance;
    auto& ranks = j["ranks"] = nlohmann::json::array();
    for (std::size_t k = 0; k < r.rank_timing.size(); ++k) {
      nlohmann::json e;
      e["rank"] = k;
      e["bodies"] = r.rank_timing[k].n;
      for (std::size_t ph = 0; ph < phase_count; ++ph)
        e["t_" + std::string(phase_names[ph])] = r.rank_timing[k].seconds[ph];
      if (k < r.comm.ranks.size()) {
        e["bytes_p2p"] = r.comm.ranks[k].bytes_p2p;
        e["bytes_m2l"] = r.comm.ranks[k].bytes_m2l;
      }
      ranks.push_back(e);
    }
  }
  return j;
}

//! Target indices for the accuracy check; the run seed drives the sample.
inline std::vector<std::size_t> check_targets(const BenchSpec& s) {
  std::vector<std::size_t> all(s.n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  if (s.check.kind == Check::Kind::full || s.check.samples >= s.n) return all;
  std::vector<std::size_t> picked;
  std::mt19937_64 rng(s.seed ^ 0x9e3779b97f4a7c15ull);
  std::sample(all.begin(), all.end(), std::back_inserter(picked), s.check.samples, rng);
  return picked;
}

inline bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

inline bool bitwise_equal(const FmmResult& a, const FmmResult& b) {
  return bitwise_equal(a.potential, b.potential) && bitwise_equal(a.fx, b.fx) && bitwise_equal(a.fy, b.fy) &&
         bitwise_equal(a.fz, b.fz);
}

//! Executes one benchmark point. Throws usage_error / config_error on bad input.
inline BenchRecord run_once(const BenchSpec& spec) {
  spec.validate();
  const Bodies bodies = generate(spec.dist, spec.n, spec.seed);
  BenchRecord rec;
  rec.spec = spec;
  FmmResult result;
  if (spec.sim_ranks > 1) {
    DistributedResult d = distributed_evaluate(bodies, spec.config(), spec.sim_ranks);
    result = std::move(d.result);
    rec.rank_timing = std::move(d.rank_timing);
    rec.comm = std::move(d.comm);
    rec.bytes_p2p = rec.comm.bytes_p2p;
    rec.bytes_m2l = rec.comm.bytes_m2l;
    for (const auto& t : rec.rank_timing)
      rec.rank_kernel_max = std::max(rec.rank_kernel_max, t[Phase::p2p] + t[Phase::m2l]);
    if (spec.verify_serial) rec.serial_equivalent = bitwise_equal(result, fmm_evaluate(bodies, spec.config()));
  } else {
    result = fmm_evaluate(bodies, spec.config());
    rec.rank_kernel_max = result.timing[Phase::p2p] + result.timing[Phase::m2l];
  }
  rec.timing = result.timing;
  rec.diagnostics = result.diagnostics;
  if (spec.check.kind != Check::Kind::off) {
    const auto targets = check_targets(spec);
    const DirectResult ref = direct_sum(bodies, std::span<const std::size_t>(targets));
    std::vector<double> got(targets.size());
    for (std::size_t k = 0; k < targets.size(); ++k) got[k] = result.potential[targets[k]];
    rec.err_l2 = relative_l2_error(got, ref.potential);
    rec.err_targets = targets.size();
  }
  return rec;
}

//! Appends CSV rows (header only when the file is new or empty) or writes a JSON document.
inline void write_records(const std::vector<BenchRecord>& records, const std::string& path,
                          const std::string& format) {
  if (path.empty()) return;
  if (format == "json") {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw io_error("cannot open '" + path + "' for writing");
    nlohmann::json doc;
    if (records.size() == 1) {
      doc = to_json(records.front());
    } else {
      doc = nlohmann::json::array();
      for (const auto& r : records) doc.push_back(to_json(r));
    }
    os << doc.dump(2) << '\n';
    if (!os) throw io_error("write failed for '" + path + "'");
    return;
  }
  std::error_code ec;
  const bool fresh = !std::filesystem::exists(path, ec) || std::filesystem::file_size(path, ec) == 0;
  std::ofstream os(path, std::ios::app);
  if (!os) throw io_error("cannot open '" + path + "' for writing");
  if (fresh) os << csv_header() << '\n';
  for (const auto& r : records) os << csv_row(r) << '\n';
  if (!os) throw io_error("write failed for '" + path + "'");
}

inline void write_rank_table(const BenchRecord& r, const std::string& path) {
  if (path.empty()) return;
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw io_error("cannot open '" + path + "' for writing");
  os << r.comm.to_csv();
}

enum class Axis { workers, ranks, n, p };

inline Axis parse_axis(const std::string& s) {
  if (s == "workers") return Axis::workers;
  if (s == "ranks" || s == "sim_ranks") return Axis::ranks;
  if (s == "n") return Axis::n;
  if (s == "p") return Axis::p;
  throw usage_error("unknown sweep axis '" + s + "' (workers|ranks|n|p)");
}

//! One BenchSpec per sweep value; `weak` scales n by the rank count on the ranks axis.
inline std::vector<BenchSpec> sweep_specs(const BenchSpec& base, Axis axis, const std::vector<long long>& values,
                                          bool weak = false) {
  if (values.empty()) throw usage_error("sweep: no values");
  std::vector<BenchSpec> specs;
  for (long long v : values) {
    if (v < 1) throw usage_error("sweep: values must be >= 1");
    BenchSpec s = base;
    switch (axis) {
      case Axis::workers: s.workers = static_cast<int>(v); break;
      case Axis::ranks:
        s.sim_ranks = static_cast<int>(v);
        if (weak) s.n = base.n * static_cast<std::size_t>(v);
        break;
      case Axis::n: s.n = static_cast<std::size_t>(v); break;
      case Axis::p: s.p = static_cast<int>(v); break;
    }
    s.validate();
    specs.push_back(s);
  }
  return specs;
}

//! Strong-scaling efficiency t_ref / (k t_k) with k the value relative to the first point.
inline double efficiency(double t_ref, double k_ref, double t_k, double k) {
  return t_ref / ((k / k_ref) * t_k);
}

inline std::vector<BenchRecord> sweep(const BenchSpec& base, Axis axis, const std::vector<long long>& values,
                                      bool weak = false) {
  std::vector<BenchRecord> out;
  for (const auto& s : sweep_specs(base, axis, values, weak)) out.push_back(run_once(s));
  return out;
}

//! Human-readable table of a sweep (stdout), including efficiency and time x workers.
inline void print_summary(std::ostream& os, const std::vector<BenchRecord>& recs, Axis axis) {
  os << std::left << std::setw(10) << "value" << std::setw(14) << "t_total" << std::setw(14) << "t_kernel"
     << std::setw(16) << "t_x_workers" << std::setw(12) << "efficiency" << std::setw(16) << "rank_P2P+M2L"
     << std::setw(12) << "err_l2" << "serial_eq\n";
  for (const auto& r : recs) {
    double k = 1, k0 = 1;
    switch (axis) {
      case Axis::workers: k = r.spec.workers; k0 = recs.front().spec.workers; break;
      case Axis::ranks: k = r.spec.sim_ranks; k0 = recs.front().spec.sim_ranks; break;
      case Axis::n: k = static_cast<double>(r.spec.n); k0 = static_cast<double>(recs.front().spec.n); break;
      case Axis::p: k = r.spec.p; k0 = recs.front().spec.p; break;
    }
    const double eff = (axis == Axis::workers)
                           ? efficiency(recs.front().timing.total(), k0, r.timing.total(), k)
                           : std::nan("");
    os << std::left << std::setw(10) << k << std::setw(14) << r.timing.total() << std::setw(14)
       << r.timing.kernel_total() << std::setw(16) << r.timing.total() * r.spec.workers << std::setw(12) << eff
       << std::setw(16) << r.rank_kernel_max << std::setw(12)
       << (r.err_l2 ? fmt_double(*r.err_l2) : std::string("-"))
       << (r.serial_equivalent ? (*r.serial_equivalent ? "true" : "false") : "-") << '\n';
  }
}

}  // namespace fmm::bench
