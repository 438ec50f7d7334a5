#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#if defined(__AVX512F__) || defined(__AVX2__)
#include <immintrin.h>
#endif

#include "types.hpp"

namespace fmm {

#if defined(__AVX512F__)
inline constexpr std::size_t batch_width = 16;
#elif defined(__AVX2__) && defined(__FMA__)
inline constexpr std::size_t batch_width = 8;
#else
inline constexpr std::size_t batch_width = 1;
#endif

//! Single-precision SoA near-field workload. Targets sit in vector lanes,
//! sources are streamed. Padding sources carry zero charge; padding targets
//! and sources sit at opposite far corners so no padded pair has zero distance.
struct InteractionBatch {
  std::vector<float> tx, ty, tz;
  std::vector<float> potential, fx, fy, fz;
  std::vector<float> sx, sy, sz, sq;
  std::size_t targets = 0;  //!< logical (unpadded) counts
  std::size_t sources = 0;

  static constexpr float padding_coordinate = 1e18f;

  void clear() {
    for (auto* v : {&tx, &ty, &tz, &potential, &fx, &fy, &fz, &sx, &sy, &sz, &sq}) v->clear();
    targets = sources = 0;
  }

  void add_target(float x, float y, float z) {
    tx.push_back(x);
    ty.push_back(y);
    tz.push_back(z);
    for (auto* v : {&potential, &fx, &fy, &fz}) v->push_back(0.0f);
    ++targets;
  }

  void add_source(float x, float y, float z, float q) {
    sx.push_back(x);
    sy.push_back(y);
    sz.push_back(z);
    sq.push_back(q);
    ++sources;
  }

  //! Extends both sides to a multiple of the vector width.
  void pad() {
    while (tx.size() % batch_width) {
      tx.push_back(-padding_coordinate);
      ty.push_back(-padding_coordinate);
      tz.push_back(-padding_coordinate);
      for (auto* v : {&potential, &fx, &fy, &fz}) v->push_back(0.0f);
    }
    while (sx.size() % batch_width) {
      sx.push_back(padding_coordinate);
      sy.push_back(padding_coordinate);
      sz.push_back(padding_coordinate);
      sq.push_back(0.0f);
    }
  }
};

namespace detail {

inline void check_batch(const InteractionBatch& b) {
  const std::size_t nt = b.tx.size(), ns = b.sx.size();
  if (b.ty.size() != nt || b.tz.size() != nt || b.potential.size() != nt || b.fx.size() != nt ||
      b.fy.size() != nt || b.fz.size() != nt)
    throw domain_error("p2p_batched: target stream lengths differ");
  if (b.sy.size() != ns || b.sz.size() != ns || b.sq.size() != ns)
    throw domain_error("p2p_batched: source stream lengths differ");
  if (nt % batch_width || ns % batch_width)
    throw domain_error("p2p_batched: streams not padded to the vector width");
}

}  // namespace detail

/// Accumulates potential and field for every target of the batch.
/// Returns the number of zero-distance (skipped) pairs among real lanes.
inline std::size_t p2p_batched(InteractionBatch& b) {
  detail::check_batch(b);
  const std::size_t nt = b.tx.size(), ns = b.sx.size();
  std::size_t zero_pairs = 0;
#if defined(__AVX512F__)
  const __m512 half = _mm512_set1_ps(0.5f), three_halves = _mm512_set1_ps(1.5f);
  const __m512 zero = _mm512_setzero_ps();
  for (std::size_t i = 0; i < nt; i += 16) {
    const __m512 xi = _mm512_loadu_ps(&b.tx[i]), yi = _mm512_loadu_ps(&b.ty[i]),
                 zi = _mm512_loadu_ps(&b.tz[i]);
    __m512 pot = zero, ax = zero, ay = zero, az = zero;
    for (std::size_t j = 0; j < ns; ++j) {
      const __m512 dx = _mm512_sub_ps(xi, _mm512_set1_ps(b.sx[j]));
      const __m512 dy = _mm512_sub_ps(yi, _mm512_set1_ps(b.sy[j]));
      const __m512 dz = _mm512_sub_ps(zi, _mm512_set1_ps(b.sz[j]));
      const __m512 r2 = _mm512_fmadd_ps(dz, dz, _mm512_fmadd_ps(dy, dy, _mm512_mul_ps(dx, dx)));
      const __mmask16 live = _mm512_cmp_ps_mask(r2, zero, _CMP_GT_OQ);
      zero_pairs += static_cast<std::size_t>(__builtin_popcount(static_cast<unsigned>(~live) & 0xffffu));
      __m512 inv_r = _mm512_maskz_rsqrt14_ps(live, r2);
      // one Newton step: y (3/2 - r2 y^2 / 2)
      inv_r = _mm512_mul_ps(inv_r, _mm512_fnmadd_ps(_mm512_mul_ps(half, r2),
                                                    _mm512_mul_ps(inv_r, inv_r), three_halves));
      const __m512 q_inv_r = _mm512_mul_ps(_mm512_set1_ps(b.sq[j]), inv_r);
      const __m512 q_inv_r3 = _mm512_mul_ps(q_inv_r, _mm512_mul_ps(inv_r, inv_r));
      pot = _mm512_add_ps(pot, q_inv_r);
      ax = _mm512_fmadd_ps(dx, q_inv_r3, ax);
      ay = _mm512_fmadd_ps(dy, q_inv_r3, ay);
      az = _mm512_fmadd_ps(dz, q_inv_r3, az);
    }
    _mm512_storeu_ps(&b.potential[i], _mm512_add_ps(_mm512_loadu_ps(&b.potential[i]), pot));
    _mm512_storeu_ps(&b.fx[i], _mm512_add_ps(_mm512_loadu_ps(&b.fx[i]), ax));
    _mm512_storeu_ps(&b.fy[i], _mm512_add_ps(_mm512_loadu_ps(&b.fy[i]), ay));
    _mm512_storeu_ps(&b.fz[i], _mm512_add_ps(_mm512_loadu_ps(&b.fz[i]), az));
  }
#elif defined(__AVX2__) && defined(__FMA__)
  const __m256 half = _mm256_set1_ps(0.5f), three_halves = _mm256_set1_ps(1.5f);
  const __m256 zero = _mm256_setzero_ps();
  for (std::size_t i = 0; i < nt; i += 8) {
    const __m256 xi = _mm256_loadu_ps(&b.tx[i]), yi = _mm256_loadu_ps(&b.ty[i]),
                 zi = _mm256_loadu_ps(&b.tz[i]);
    __m256 pot = zero, ax = zero, ay = zero, az = zero;
    for (std::size_t j = 0; j < ns; ++j) {
      const __m256 dx = _mm256_sub_ps(xi, _mm256_set1_ps(b.sx[j]));
      const __m256 dy = _mm256_sub_ps(yi, _mm256_set1_ps(b.sy[j]));
      const __m256 dz = _mm256_sub_ps(zi, _mm256_set1_ps(b.sz[j]));
      const __m256 r2 = _mm256_fmadd_ps(dz, dz, _mm256_fmadd_ps(dy, dy, _mm256_mul_ps(dx, dx)));
      const __m256 live = _mm256_cmp_ps(r2, zero, _CMP_GT_OQ);
      zero_pairs += static_cast<std::size_t>(8 - __builtin_popcount(static_cast<unsigned>(_mm256_movemask_ps(live))));
      __m256 inv_r = _mm256_and_ps(live, _mm256_rsqrt_ps(r2));
      inv_r = _mm256_mul_ps(inv_r, _mm256_fnmadd_ps(_mm256_mul_ps(half, r2),
                                                    _mm256_mul_ps(inv_r, inv_r), three_halves));
      const __m256 q_inv_r = _mm256_mul_ps(_mm256_set1_ps(b.sq[j]), inv_r);
      const __m256 q_inv_r3 = _mm256_mul_ps(q_inv_r, _mm256_mul_ps(inv_r, inv_r));
      pot = _mm256_add_ps(pot, q_inv_r);
      ax = _mm256_fmadd_ps(dx, q_inv_r3, ax);
      ay = _mm256_fmadd_ps(dy, q_inv_r3, ay);
      az = _mm256_fmadd_ps(dz, q_inv_r3, az);
    }
    _mm256_storeu_ps(&b.potential[i], _mm256_add_ps(_mm256_loadu_ps(&b.potential[i]), pot));
    _mm256_storeu_ps(&b.fx[i], _mm256_add_ps(_mm256_loadu_ps(&b.fx[i]), ax));
    _mm256_storeu_ps(&b.fy[i], _mm256_add_ps(_mm256_loadu_ps(&b.fy[i]), ay));
    _mm256_storeu_ps(&b.fz[i], _mm256_add_ps(_mm256_loadu_ps(&b.fz[i]), az));
  }
#else
  for (std::size_t i = 0; i < nt; ++i) {
    float pot = 0, ax = 0, ay = 0, az = 0;
    for (std::size_t j = 0; j < ns; ++j) {
      const float dx = b.tx[i] - b.sx[j], dy = b.ty[i] - b.sy[j], dz = b.tz[i] - b.sz[j];
      const float r2 = dx * dx + dy * dy + dz * dz;
      if (!(r2 > 0)) {
        ++zero_pairs;
        continue;
      }
      const float inv_r = 1.0f / std::sqrt(r2);
      const float q_inv_r = b.sq[j] * inv_r;
      const float q_inv_r3 = q_inv_r * inv_r * inv_r;
      pot += q_inv_r;
      ax += dx * q_inv_r3;
      ay += dy * q_inv_r3;
      az += dz * q_inv_r3;
    }
    b.potential[i] += pot;
    b.fx[i] += ax;
    b.fy[i] += ay;
    b.fz[i] += az;
  }
#endif
  return zero_pairs;
}

}  // namespace fmm
