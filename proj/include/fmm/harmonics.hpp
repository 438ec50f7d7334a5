#pragma once

#include <complex>
#include <cstddef>

#include "types.hpp"

namespace fmm {

using complex = std::complex<double>;

//! Largest supported truncation order; M2L needs irregular harmonics up to degree 2p-2.
inline constexpr int max_order = 20;

//! Slot of (n, m), m >= 0, in a triangular coefficient vector.
constexpr std::size_t harmonic_index(int n, int m) {
  return static_cast<std::size_t>(n * (n + 1) / 2 + m);
}

constexpr std::size_t harmonic_count(int order) { return static_cast<std::size_t>(order * (order + 1) / 2); }

inline constexpr std::size_t irregular_scratch = harmonic_count(2 * max_order);

// Solid harmonics, Condon-Shortley phase included:
//   R_n^m(x) = r^n     P_n^m(cos t) e^{i m phi} / (n+m)!
//   I_n^m(x) = (n-m)!  P_n^m(cos t) e^{i m phi} / r^{n+1}
// For negative orders X_n^{-m} = (-1)^m conj(X_n^m). With this scaling the
// translation theorems carry no extra factors:
//   1/|x - y|   = sum conj(R_n^m(y)) I_n^m(x)             |y| < |x|
//   R_n^m(x+y)  = sum R_k^l(x) R_{n-k}^{m-l}(y)
//   I_n^m(x-y)  = sum conj(R_k^l(y)) I_{n+k}^{m+l}(x)     |y| < |x|

//! R_n^m(d) for n < order, 0 <= m <= n.
inline void regular_harmonics(const Vec3& d, int order, complex* out) {
  if (order <= 0) return;
  const double r2 = norm2(d);
  const complex xy(d.x, d.y);
  out[0] = 1.0;
  complex diag = 1.0;
  for (int m = 0; m < order; ++m) {
    if (m > 0) {
      diag *= -xy / (2.0 * m);
      out[harmonic_index(m, m)] = diag;
    }
    if (m + 1 < order) out[harmonic_index(m + 1, m)] = d.z * diag;
    for (int n = m + 2; n < order; ++n) {
      out[harmonic_index(n, m)] =
          ((2.0 * n - 1) * d.z * out[harmonic_index(n - 1, m)] - r2 * out[harmonic_index(n - 2, m)]) /
          static_cast<double>((n + m) * (n - m));
    }
  }
}

//! I_n^m(d) for n < order, 0 <= m <= n. d must be nonzero.
inline void irregular_harmonics(const Vec3& d, int order, complex* out) {
  if (order <= 0) return;
  const double inv_r2 = 1.0 / norm2(d);
  const complex xy(d.x, d.y);
  complex diag = std::sqrt(inv_r2);
  out[0] = diag;
  for (int m = 0; m < order; ++m) {
    if (m > 0) {
      diag *= -(2.0 * m - 1) * xy * inv_r2;
      out[harmonic_index(m, m)] = diag;
    }
    if (m + 1 < order) out[harmonic_index(m + 1, m)] = (2.0 * m + 1) * d.z * inv_r2 * diag;
    for (int n = m + 2; n < order; ++n) {
      out[harmonic_index(n, m)] = ((2.0 * n - 1) * d.z * out[harmonic_index(n - 1, m)] -
                                   static_cast<double>((n + m - 1) * (n - m - 1)) *
                                       out[harmonic_index(n - 2, m)]) *
                                  inv_r2;
    }
  }
}

//! Value at (n, m) for any |m| <= n from the m >= 0 storage.
inline complex harmonic_at(const complex* h, int n, int m) {
  if (m >= 0) return h[harmonic_index(n, m)];
  complex c = std::conj(h[harmonic_index(n, -m)]);
  return (m & 1) ? -c : c;
}

//! Product without the NaN/Inf recovery path of operator*.
inline complex cmul(const complex& a, const complex& b) {
  return {a.real() * b.real() - a.imag() * b.imag(), a.real() * b.imag() + a.imag() * b.real()};
}

}  // namespace fmm
