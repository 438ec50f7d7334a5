#pragma once

#include <algorithm>
#include <limits>
#include <numeric>
#include <vector>

#include "types.hpp"

namespace fmm {

//! Structure-of-arrays particle set.
//! `field` holds -grad(phi), so two positive charges push each other apart.
struct Bodies {
  std::vector<double> x, y, z, q;
  std::vector<double> potential, fx, fy, fz;
  std::vector<std::size_t> index;  //!< identity before the Morton sort

  Bodies() = default;
  explicit Bodies(std::size_t n) { resize(n); }

  std::size_t size() const { return x.size(); }
  bool empty() const { return x.empty(); }

  void resize(std::size_t n) {
    for (auto* v : {&x, &y, &z, &q, &potential, &fx, &fy, &fz}) v->resize(n, 0.0);
    std::size_t old = index.size();
    index.resize(n);
    std::iota(index.begin() + static_cast<std::ptrdiff_t>(old), index.end(), old);
  }

  void set(std::size_t i, const Vec3& p, double charge) {
    x[i] = p.x;
    y[i] = p.y;
    z[i] = p.z;
    q[i] = charge;
  }

  Vec3 position(std::size_t i) const { return {x[i], y[i], z[i]}; }

  void clear_outputs() {
    for (auto* v : {&potential, &fx, &fy, &fz}) std::fill(v->begin(), v->end(), 0.0);
  }

  //! Gathers body `perm[k]` into slot k.
  Bodies permuted(const std::vector<std::size_t>& perm) const {
    Bodies out;
    const std::size_t n = perm.size();
    for (auto* v : {&out.x, &out.y, &out.z, &out.q, &out.potential, &out.fx, &out.fy, &out.fz})
      v->resize(n);
    out.index.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
      std::size_t i = perm[k];
      out.x[k] = x[i];
      out.y[k] = y[i];
      out.z[k] = z[i];
      out.q[k] = q[i];
      out.potential[k] = potential[i];
      out.fx[k] = fx[i];
      out.fy[k] = fy[i];
      out.fz[k] = fz[i];
      out.index[k] = index[i];
    }
    return out;
  }
};

//! Tight bounding cube expanded by a relative margin so the max face stays inside.
inline Domain bounding_domain(const Bodies& b, double margin = 1e-6) {
  if (b.empty()) throw domain_error("bounding_domain: no bodies");
  Vec3 lo{std::numeric_limits<double>::max(), std::numeric_limits<double>::max(),
          std::numeric_limits<double>::max()};
  Vec3 hi{-lo.x, -lo.y, -lo.z};
  for (std::size_t i = 0; i < b.size(); ++i) {
    lo = {std::min(lo.x, b.x[i]), std::min(lo.y, b.y[i]), std::min(lo.z, b.z[i])};
    hi = {std::max(hi.x, b.x[i]), std::max(hi.y, b.y[i]), std::max(hi.z, b.z[i])};
  }
  double width = std::max({hi.x - lo.x, hi.y - lo.y, hi.z - lo.z});
  if (width <= 0) width = 1;
  double pad = width * margin;
  Vec3 mid = (lo + hi) * 0.5;
  width += 2 * pad;
  return {mid - Vec3{1, 1, 1} * (width / 2), width};
}

}  // namespace fmm
