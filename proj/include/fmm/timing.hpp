#pragma once

#include <array>
#include <chrono>
#include <cstddef>
#include <string_view>

namespace fmm {

enum class Phase : int {
  sort,
  build_tree,
  p2p,
  p2m,
  m2m,
  m2l,
  l2l,
  l2p,
  sim_send_p2p,
  sim_send_m2l,
};

inline constexpr std::size_t phase_count = 10;

inline constexpr std::array<std::string_view, phase_count> phase_names = {
    "sort", "buildTree", "P2P", "P2M", "M2M", "M2L", "L2L", "L2P", "simSendP2P", "simSendM2L"};

inline constexpr std::string_view phase_name(Phase p) { return phase_names[static_cast<int>(p)]; }

//! Wall seconds per phase. A phase that never ran reads 0.
struct TimingBreakdown {
  std::array<double, phase_count> seconds{};
  std::size_t n = 0;
  int p = 0;
  int workers = 1;
  int max_level = 0;

  double& operator[](Phase ph) { return seconds[static_cast<int>(ph)]; }
  double operator[](Phase ph) const { return seconds[static_cast<int>(ph)]; }

  double total() const {
    double t = 0;
    for (double s : seconds) t += s;
    return t;
  }

  //! Kernel phases only (no tree construction, no communication).
  double kernel_total() const {
    double t = 0;
    for (Phase ph : {Phase::p2p, Phase::p2m, Phase::m2m, Phase::m2l, Phase::l2l, Phase::l2p})
      t += (*this)[ph];
    return t;
  }
};

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

//! Adds the lifetime of the guard to one phase slot (no-op when `timing` is null).
class PhaseTimer {
 public:
  PhaseTimer(TimingBreakdown* timing, Phase phase)
      : timing_(timing), phase_(phase), start_(Clock::now()) {}
  ~PhaseTimer() {
    if (timing_) (*timing_)[phase_] += seconds_since(start_);
  }
  PhaseTimer(const PhaseTimer&) = delete;
  PhaseTimer& operator=(const PhaseTimer&) = delete;

 private:
  TimingBreakdown* timing_;
  Phase phase_;
  Clock::time_point start_;
};

}  // namespace fmm
