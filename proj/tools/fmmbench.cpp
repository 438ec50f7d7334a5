// fmmbench: accuracy runs, thread/rank sweeps and per-phase timing export.
#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fmm/bench.hpp"

namespace {

using namespace fmm;
using namespace fmm::bench;

struct RawOptions {
  std::size_t n = 10000;
  std::string dist = "cube";
  std::uint64_t seed = 42;
  int p = 3;
  int ncrit = 0;
  int level = -1;
  int workers = 0;
  int sim_ranks = 1;
  std::string precision = "double";
  std::string check = "off";
  bool allow_full = false;
  bool no_verify = false;
  double assert_below = -1;
  std::string out;
  std::string format = "csv";
  std::string rank_csv;
};

void add_common(CLI::App* app, RawOptions& o) {
  app->add_option("--n", o.n, "Number of bodies");
  app->add_option("--dist", o.dist, "cube|sphere|lattice");
  app->add_option("--seed", o.seed, "RNG seed (positions, charges, check sample)");
  app->add_option("--p", o.p, "Expansion order (degrees 0..p-1)");
  auto* nc = app->add_option("--ncrit", o.ncrit, "Target bodies per leaf");
  auto* lv = app->add_option("--level", o.level, "Explicit uniform tree depth");
  nc->excludes(lv);
  app->add_option("--workers", o.workers, "Worker threads (default: FMMBENCH_WORKERS or 1)");
  app->add_option("--sim-ranks", o.sim_ranks, "Simulated ranks");
  app->add_option("--precision", o.precision, "double|single (single = batched float near field)");
  app->add_option("--check", o.check, "off|sampled:<k>|full");
  app->add_flag("--allow-full-check", o.allow_full, "Permit --check full above n = 100000");
  app->add_flag("--no-verify-serial", o.no_verify, "Skip the serial equivalence run when sim-ranks > 1");
  app->add_option("--assert-error-below", o.assert_below, "Exit 3 unless err_l2 is below this value");
  app->add_option("--out", o.out, "Output file (CSV appends, JSON overwrites)");
  app->add_option("--format", o.format, "csv|json");
  app->add_option("--rank-csv", o.rank_csv, "Per-rank communication table (CSV)");
}

int env_workers() {
  if (const char* v = std::getenv("FMMBENCH_WORKERS")) {
    try {
      const int w = std::stoi(v);
      if (w >= 1) return w;
    } catch (const std::exception&) {
    }
    throw usage_error(std::string("FMMBENCH_WORKERS is not a positive integer: ") + v);
  }
  return 1;
}

BenchSpec to_spec(const RawOptions& o) {
  BenchSpec s;
  s.n = o.n;
  s.dist = parse_distribution(o.dist);
  s.seed = o.seed;
  s.p = o.p;
  if (o.ncrit > 0) s.ncrit = o.ncrit;
  else if (o.ncrit < 0) throw usage_error("--ncrit must be >= 1");
  if (o.level >= 0) s.level = o.level;
  s.workers = o.workers > 0 ? o.workers : env_workers();
  s.sim_ranks = o.sim_ranks;
  if (o.precision == "double") s.precision = Precision::double_scalar;
  else if (o.precision == "single") s.precision = Precision::single_near_field;
  else throw usage_error("--precision must be double or single");
  s.check = Check::parse(o.check);
  s.allow_full_check = o.allow_full;
  s.verify_serial = !o.no_verify;
  if (o.assert_below >= 0) s.assert_error_below = o.assert_below;
  s.out = o.out;
  s.format = o.format;
  s.rank_csv = o.rank_csv;
  s.validate();
  return s;
}

int assert_errors(const std::vector<BenchRecord>& recs, const BenchSpec& spec) {
  if (!spec.assert_error_below) return exit_code::ok;
  for (const auto& r : recs) {
    if (!r.err_l2) {
      std::cerr << "fmmbench: --assert-error-below needs --check sampled:<k> or full\n";
      return exit_code::assertion;
    }
    if (!(*r.err_l2 < *spec.assert_error_below)) {
      std::cerr << "fmmbench: err_l2 " << *r.err_l2 << " not below " << *spec.assert_error_below << '\n';
      return exit_code::assertion;
    }
  }
  return exit_code::ok;
}

std::vector<long long> parse_values(const std::string& csv) {
  std::vector<long long> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t pos = 0;
      out.push_back(std::stoll(item, &pos));
      if (pos != item.size()) throw usage_error("");
    } catch (const std::exception&) {
      throw usage_error("bad --values entry '" + item + "'");
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fast multipole method benchmark harness"};
  app.require_subcommand(1);
  RawOptions run_opts, sweep_opts;
  auto* run_cmd = app.add_subcommand("run", "Evaluate one configuration and write one record");
  add_common(run_cmd, run_opts);
  auto* sweep_cmd = app.add_subcommand("sweep", "Run a sequential sweep along one axis");
  add_common(sweep_cmd, sweep_opts);
  std::string axis_name, values;
  bool weak = false;
  sweep_cmd->add_option("--axis", axis_name, "workers|ranks|n|p")->required();
  sweep_cmd->add_option("--values", values, "Comma-separated axis values")->required();
  sweep_cmd->add_flag("--weak", weak, "With --axis ranks: --n is bodies per rank");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? exit_code::ok : exit_code::usage;
  }

  try {
    if (*run_cmd) {
      const BenchSpec spec = to_spec(run_opts);
      const BenchRecord rec = run_once(spec);
      write_records({rec}, spec.out, spec.format);
      write_rank_table(rec, spec.rank_csv);
      std::cout << csv_header() << '\n' << csv_row(rec) << '\n';
      if (rec.serial_equivalent) std::cout << "serial_equivalent=" << (*rec.serial_equivalent ? "true" : "false") << '\n';
      return assert_errors({rec}, spec);
    }
    const BenchSpec base = to_spec(sweep_opts);
    const Axis axis = parse_axis(axis_name);
    const auto recs = sweep(base, axis, parse_values(values), weak);
    write_records(recs, base.out, base.format);
    print_summary(std::cout, recs, axis);
    return assert_errors(recs, base);
  } catch (const usage_error& e) {
    std::cerr << "fmmbench: " << e.what() << '\n';
    return exit_code::usage;
  } catch (const config_error& e) {
    std::cerr << "fmmbench: " << e.what() << '\n';
    return exit_code::usage;
  } catch (const io_error& e) {
    std::cerr << "fmmbench: " << e.what() << '\n';
    return exit_code::io;
  } catch (const std::exception& e) {
    std::cerr << "fmmbench: " << e.what() << '\n';
    return exit_code::usage;
  }
}
