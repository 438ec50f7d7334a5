#pragma once

#include <optional>

#include "types.hpp"

namespace fmm {

inline constexpr int default_ncrit_double = 64;
inline constexpr int default_ncrit_single = 256;

struct FmmConfig {
  //! Truncation order: degrees 0..p-1 are kept.
  int p = 3;
  //! Target bodies per leaf; depth = ceil(log8(N / ncrit)).
  std::optional<int> ncrit;
  //! Explicit uniform depth; mutually exclusive with ncrit.
  std::optional<int> level;
  Precision precision = Precision::double_scalar;
  int workers = 1;

  void validate() const {
    if (p < 1) throw config_error("FmmConfig: p must be >= 1");
    if (workers < 1) throw config_error("FmmConfig: workers must be >= 1");
    if (ncrit && level) throw config_error("FmmConfig: set either ncrit or level, not both");
    if (ncrit && *ncrit < 1) throw config_error("FmmConfig: ncrit must be >= 1");
    if (level && *level < 0) throw config_error("FmmConfig: level must be >= 0");
  }

  int effective_ncrit() const {
    if (ncrit) return *ncrit;
    return precision == Precision::double_scalar ? default_ncrit_double : default_ncrit_single;
  }

  int coefficient_count() const { return p * (p + 1) / 2; }
};

}  // namespace fmm
