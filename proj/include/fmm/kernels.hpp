#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <optional>
#include <span>
#include <vector>

#include "bodies.hpp"
#include "harmonics.hpp"

namespace fmm {

// Laplace kernel phi(x) = sum_j q_j / |x - x_j|. Field accumulators receive -grad(phi).

/// Scalar double-precision near-field gather: targets [t_begin, t_begin + t_count)
/// of `targets` accumulate the influence of sources [s_begin, s_begin + s_count).
/// Pairs at zero distance are skipped; the return value counts them.
inline std::size_t p2p(Bodies& targets, std::size_t t_begin, std::size_t t_count,
                       const Bodies& sources, std::size_t s_begin, std::size_t s_count) {
  std::size_t zero_pairs = 0;
  const double* sx = sources.x.data() + s_begin;
  const double* sy = sources.y.data() + s_begin;
  const double* sz = sources.z.data() + s_begin;
  const double* sq = sources.q.data() + s_begin;
  for (std::size_t i = t_begin; i < t_begin + t_count; ++i) {
    const double xi = targets.x[i], yi = targets.y[i], zi = targets.z[i];
    double pot = targets.potential[i], ax = targets.fx[i], ay = targets.fy[i], az = targets.fz[i];
    for (std::size_t j = 0; j < s_count; ++j) {
      const double dx = xi - sx[j], dy = yi - sy[j], dz = zi - sz[j];
      const double r2 = dx * dx + dy * dy + dz * dz;
      if (r2 == 0) {
        ++zero_pairs;
        continue;
      }
      const double inv_r = 1.0 / std::sqrt(r2);
      const double q_inv_r = sq[j] * inv_r;
      const double q_inv_r3 = q_inv_r * inv_r * inv_r;
      pot += q_inv_r;
      ax += dx * q_inv_r3;
      ay += dy * q_inv_r3;
      az += dz * q_inv_r3;
    }
    targets.potential[i] = pot;
    targets.fx[i] = ax;
    targets.fy[i] = ay;
    targets.fz[i] = az;
  }
  return zero_pairs;
}

struct DirectResult {
  std::vector<double> potential, fx, fy, fz;
};

//! O(N * |targets|) reference in double precision. Sources are summed in
//! ascending index order; zero-distance pairs are skipped.
inline DirectResult direct_sum(const Bodies& bodies,
                               std::optional<std::span<const std::size_t>> targets = std::nullopt) {
  const std::size_t n = bodies.size();
  const std::size_t m = targets ? targets->size() : n;
  DirectResult out;
  out.potential.assign(m, 0.0);
  out.fx.assign(m, 0.0);
  out.fy.assign(m, 0.0);
  out.fz.assign(m, 0.0);
  for (std::size_t k = 0; k < m; ++k) {
    const std::size_t i = targets ? (*targets)[k] : k;
    double pot = 0, ax = 0, ay = 0, az = 0;
    for (std::size_t j = 0; j < n; ++j) {
      const double dx = bodies.x[i] - bodies.x[j];
      const double dy = bodies.y[i] - bodies.y[j];
      const double dz = bodies.z[i] - bodies.z[j];
      const double r2 = dx * dx + dy * dy + dz * dz;
      if (r2 == 0) continue;
      const double inv_r = 1.0 / std::sqrt(r2);
      const double q_inv_r = bodies.q[j] * inv_r;
      const double q_inv_r3 = q_inv_r * inv_r * inv_r;
      pot += q_inv_r;
      ax += dx * q_inv_r3;
      ay += dy * q_inv_r3;
      az += dz * q_inv_r3;
    }
    out.potential[k] = pot;
    out.fx[k] = ax;
    out.fy[k] = ay;
    out.fz[k] = az;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Expansion operators on raw coefficient spans (length p(p+1)/2, m >= 0).
// Multipole:  phi(x) = sum_{n<p, |m|<=n} M_n^m I_n^m(x - c)
// Local:      phi(x) = sum_{n<p, |m|<=n} L_n^m R_n^m(x - c)

inline void p2m(const Bodies& bodies, std::size_t begin, std::size_t count, const Vec3& center,
                int p, std::span<complex> multipole) {
  std::array<complex, harmonic_count(max_order)> R;
  const std::size_t nc = harmonic_count(p);
  for (std::size_t i = begin; i < begin + count; ++i) {
    regular_harmonics(bodies.position(i) - center, p, R.data());
    const double q = bodies.q[i];
    for (std::size_t k = 0; k < nc; ++k) multipole[k] += q * std::conj(R[k]);
  }
}

//! Shifts a child multipole to the parent center and accumulates. Exact for degrees < p.
inline void m2m(std::span<const complex> child, const Vec3& child_center, const Vec3& parent_center,
                int p, std::span<complex> parent) {
  std::array<complex, harmonic_count(max_order)> R;
  regular_harmonics(child_center - parent_center, p, R.data());
  for (int n = 0; n < p; ++n)
    for (int m = 0; m <= n; ++m) {
      complex sum = 0;
      for (int k = 0; k <= n; ++k)
        for (int l = std::max(-k, m - (n - k)); l <= std::min(k, m + (n - k)); ++l)
          sum += cmul(harmonic_at(child.data(), k, l), std::conj(harmonic_at(R.data(), n - k, m - l)));
      parent[harmonic_index(n, m)] += sum;
    }
}

//! Converts a multipole about `source_center` into a local expansion about `target_center`.
inline void m2l(std::span<const complex> multipole, const Vec3& source_center,
                const Vec3& target_center, int p, std::span<complex> local) {
  const Vec3 d = target_center - source_center;
  if (norm2(d) == 0) throw domain_error("m2l: coincident expansion centers");
  std::array<complex, irregular_scratch> I;
  irregular_harmonics(d, 2 * p - 1, I.data());
  for (int k = 0; k < p; ++k)
    for (int l = 0; l <= k; ++l) {
      complex sum = 0;
      for (int n = 0; n < p; ++n)
        for (int m = -n; m <= n; ++m)
          sum += cmul(harmonic_at(multipole.data(), n, m), harmonic_at(I.data(), n + k, m + l));
      local[harmonic_index(k, l)] += (k & 1) ? -std::conj(sum) : std::conj(sum);
    }
}

//! Re-centers a parent local expansion at `child_center` and accumulates. Exact for degrees < p.
inline void l2l(std::span<const complex> parent, const Vec3& parent_center, const Vec3& child_center,
                int p, std::span<complex> child) {
  std::array<complex, harmonic_count(max_order)> R;
  regular_harmonics(child_center - parent_center, p, R.data());
  for (int k = 0; k < p; ++k)
    for (int l = 0; l <= k; ++l) {
      complex sum = 0;
      for (int n = k; n < p; ++n)
        for (int m = std::max(-n, l - (n - k)); m <= std::min(n, l + (n - k)); ++m)
          sum += cmul(harmonic_at(parent.data(), n, m), harmonic_at(R.data(), n - k, m - l));
      child[harmonic_index(k, l)] += sum;
    }
}

struct PotentialGradient {
  double potential = 0;
  Vec3 gradient;
};

//! Value and gradient of a local expansion at `point`.
inline PotentialGradient evaluate_local(std::span<const complex> local, const Vec3& center, int p,
                                        const Vec3& point) {
  std::array<complex, harmonic_count(max_order)> R;
  regular_harmonics(point - center, p, R.data());
  PotentialGradient out;
  for (int n = 0; n < p; ++n) {
    complex phi = 0, gx = 0, gy = 0, gz = 0;
    for (int m = -n; m <= n; ++m) {
      const complex L = harmonic_at(local.data(), n, m);
      phi += cmul(L, harmonic_at(R.data(), n, m));
      if (n == 0) continue;
      // dR_n^m/dx = (R_{n-1}^{m+1} - R_{n-1}^{m-1}) / 2
      // dR_n^m/dy = -i (R_{n-1}^{m+1} + R_{n-1}^{m-1}) / 2
      // dR_n^m/dz = R_{n-1}^m
      const complex up = (m + 1 <= n - 1) ? harmonic_at(R.data(), n - 1, m + 1) : complex{};
      const complex dn = (m - 1 >= -(n - 1)) ? harmonic_at(R.data(), n - 1, m - 1) : complex{};
      const complex mid = (std::abs(m) <= n - 1) ? harmonic_at(R.data(), n - 1, m) : complex{};
      gx += cmul(L, 0.5 * (up - dn));
      gy += cmul(L, complex(0, -0.5) * (up + dn));
      gz += cmul(L, mid);
    }
    out.potential += phi.real();
    out.gradient = out.gradient + Vec3{gx.real(), gy.real(), gz.real()};
  }
  return out;
}

//! Adds the local expansion's potential and field (-grad) to bodies [begin, begin + count).
inline void l2p(std::span<const complex> local, const Vec3& center, int p, Bodies& bodies,
                std::size_t begin, std::size_t count) {
  for (std::size_t i = begin; i < begin + count; ++i) {
    auto v = evaluate_local(local, center, p, bodies.position(i));
    bodies.potential[i] += v.potential;
    bodies.fx[i] -= v.gradient.x;
    bodies.fy[i] -= v.gradient.y;
    bodies.fz[i] -= v.gradient.z;
  }
}

//! Truncated multipole series at `point` (testing helper).
inline double evaluate_multipole(std::span<const complex> multipole, const Vec3& center, int p,
                                 const Vec3& point) {
  const Vec3 d = point - center;
  if (norm2(d) == 0) throw domain_error("evaluate_multipole: point at expansion center");
  std::array<complex, harmonic_count(max_order)> I;
  irregular_harmonics(d, p, I.data());
  double phi = 0;
  for (int n = 0; n < p; ++n) {
    phi += cmul(multipole[harmonic_index(n, 0)], I[harmonic_index(n, 0)]).real();
    for (int m = 1; m <= n; ++m)
      phi += 2 * cmul(multipole[harmonic_index(n, m)], I[harmonic_index(n, m)]).real();
  }
  return phi;
}

// ---------------------------------------------------------------------------
// Owning expansion types for standalone use of the operators.

template <class Tag>
struct Expansion {
  int p = 1;
  Vec3 center;
  std::vector<complex> coeffs;

  Expansion() = default;
  Expansion(int order, const Vec3& c) : p(order), center(c), coeffs(harmonic_count(order)) {
    if (order < 1 || order > max_order) throw config_error("Expansion: order out of range");
  }

  complex& operator()(int n, int m) { return coeffs[harmonic_index(n, m)]; }
  complex operator()(int n, int m) const { return coeffs[harmonic_index(n, m)]; }
  Expansion& operator*=(double s) {
    for (auto& c : coeffs) c *= s;
    return *this;
  }
};

using MultipoleCoeffs = Expansion<struct MultipoleTag>;
using LocalCoeffs = Expansion<struct LocalTag>;

inline MultipoleCoeffs p2m(const Bodies& bodies, std::size_t begin, std::size_t count,
                           const Vec3& center, int p) {
  MultipoleCoeffs M(p, center);
  p2m(bodies, begin, count, center, p, M.coeffs);
  return M;
}

inline MultipoleCoeffs m2m(const MultipoleCoeffs& child, const Vec3& parent_center) {
  MultipoleCoeffs M(child.p, parent_center);
  m2m(child.coeffs, child.center, parent_center, child.p, M.coeffs);
  return M;
}

inline LocalCoeffs m2l(const MultipoleCoeffs& source, const Vec3& target_center) {
  LocalCoeffs L(source.p, target_center);
  m2l(source.coeffs, source.center, target_center, source.p, L.coeffs);
  return L;
}

inline LocalCoeffs l2l(const LocalCoeffs& parent, const Vec3& child_center) {
  LocalCoeffs L(parent.p, child_center);
  l2l(parent.coeffs, parent.center, child_center, parent.p, L.coeffs);
  return L;
}

inline void l2p(const LocalCoeffs& local, Bodies& bodies, std::size_t begin, std::size_t count) {
  l2p(local.coeffs, local.center, local.p, bodies, begin, count);
}

inline PotentialGradient evaluate_local(const LocalCoeffs& local, const Vec3& point) {
  return evaluate_local(local.coeffs, local.center, local.p, point);
}

inline double evaluate_multipole(const MultipoleCoeffs& me, const Vec3& point) {
  return evaluate_multipole(me.coeffs, me.center, me.p, point);
}

}  // namespace fmm
