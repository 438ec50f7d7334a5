#include <gtest/gtest.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <random>

#include "fmm/batched.hpp"
#include "fmm/kernels.hpp"
#include "test_util.hpp"

using namespace fmm;

namespace {

double direct_potential(const Bodies& b, const Vec3& x) {
  double phi = 0;
  for (std::size_t j = 0; j < b.size(); ++j) phi += b.q[j] / norm(x - b.position(j));
  return phi;
}

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

Bodies two_unit_charges(double distance) {
  Bodies b(2);
  b.set(0, {0, 0, 0}, 1.0);
  b.set(1, {distance, 0, 0}, 1.0);
  return b;
}

InteractionBatch batch_from(const Bodies& t, const Bodies& s) {
  InteractionBatch batch;
  for (std::size_t i = 0; i < t.size(); ++i)
    batch.add_target(static_cast<float>(t.x[i]), static_cast<float>(t.y[i]), static_cast<float>(t.z[i]));
  for (std::size_t j = 0; j < s.size(); ++j)
    batch.add_source(static_cast<float>(s.x[j]), static_cast<float>(s.y[j]), static_cast<float>(s.z[j]),
                     static_cast<float>(s.q[j]));
  batch.pad();
  return batch;
}

// Rotation about an arbitrary axis (Rodrigues).
Vec3 rotate(const Vec3& v, const Vec3& axis_in, double angle) {
  const Vec3 k = axis_in * (1.0 / norm(axis_in));
  const double c = std::cos(angle), s = std::sin(angle);
  const Vec3 kxv{k.y * v.z - k.z * v.y, k.z * v.x - k.x * v.z, k.x * v.y - k.y * v.x};
  const double kv = k.x * v.x + k.y * v.y + k.z * v.z;
  return v * c + kxv * s + k * (kv * (1 - c));
}

}  // namespace

// ---------------------------------------------------------------- P2P

TEST(P2P, TwoUnitChargesAtUnitDistance) {
  Bodies b = two_unit_charges(1.0);
  EXPECT_EQ(p2p(b, 0, 2, b, 0, 2), 2u);  // the two self pairs
  EXPECT_DOUBLE_EQ(b.potential[0], 1.0);
  EXPECT_DOUBLE_EQ(b.potential[1], 1.0);
  EXPECT_DOUBLE_EQ(b.fx[0], -1.0);  // pushed away from the other charge
  EXPECT_DOUBLE_EQ(b.fx[1], 1.0);
  EXPECT_EQ(b.fy[0], 0.0);
}

TEST(P2P, SingleBodyAlone) {
  Bodies b(1);
  b.set(0, {0.2, 0.3, 0.4}, 5.0);
  p2p(b, 0, 1, b, 0, 1);
  EXPECT_EQ(b.potential[0], 0.0);
  EXPECT_EQ(b.fx[0], 0.0);
}

TEST(P2P, MatchesDirectSum) {
  Bodies b = test::random_bodies(100, 1, {0, 0, 0}, 1.0, -1.0, 1.0);
  p2p(b, 0, 100, b, 0, 100);
  auto ref = direct_sum(b);
  for (std::size_t i = 0; i < 100; ++i) {
    EXPECT_LE(rel(b.potential[i], ref.potential[i]), 1e-12);
    EXPECT_LE(rel(b.fx[i], ref.fx[i]), 1e-12);
  }
}

TEST(P2P, CoincidentBodiesAreSkippedAndCounted) {
  Bodies b(3);
  b.set(0, {0, 0, 0}, 1.0);
  b.set(1, {0, 0, 0}, 1.0);
  b.set(2, {2, 0, 0}, 1.0);
  EXPECT_EQ(p2p(b, 0, 3, b, 0, 3), 5u);  // 3 self + 2 coincident
  EXPECT_DOUBLE_EQ(b.potential[0], 0.5);
}

TEST(P2P, LinearInCharges) {
  Bodies a = test::random_bodies(50, 2), b = a;
  for (auto& q : b.q) q *= -2.5;
  p2p(a, 0, 50, a, 0, 50);
  p2p(b, 0, 50, b, 0, 50);
  for (std::size_t i = 0; i < 50; ++i) EXPECT_NEAR(b.potential[i], -2.5 * a.potential[i], 1e-12 * std::abs(a.potential[i]));
}

// ---------------------------------------------------------------- batched P2P

TEST(P2PBatched, TwoUnitCharges) {
  Bodies b = two_unit_charges(1.0);
  auto batch = batch_from(b, b);
  EXPECT_EQ(p2p_batched(batch), 2u);
  EXPECT_NEAR(batch.potential[0], 1.0f, 4 * std::numeric_limits<float>::epsilon());
  EXPECT_NEAR(batch.potential[1], 1.0f, 4 * std::numeric_limits<float>::epsilon());
  EXPECT_NEAR(batch.fx[0], -1.0f, 4 * std::numeric_limits<float>::epsilon());
}

TEST(P2PBatched, PaddingIsNeutral) {
  Bodies t = test::random_bodies(2 * batch_width, 3), s = test::random_bodies(4 * batch_width, 4);
  auto plain = batch_from(t, s);
  ASSERT_EQ(plain.sx.size(), s.size());  // already a width multiple
  auto padded = plain;
  for (std::size_t k = 0; k < batch_width; ++k)
    padded.add_source(InteractionBatch::padding_coordinate, InteractionBatch::padding_coordinate,
                      InteractionBatch::padding_coordinate, 0.0f);
  padded.pad();
  p2p_batched(plain);
  p2p_batched(padded);
  for (std::size_t i = 0; i < t.size(); ++i) {
    EXPECT_EQ(plain.potential[i], padded.potential[i]);
    EXPECT_EQ(plain.fz[i], padded.fz[i]);
  }
}

TEST(P2PBatched, MismatchedStreamsRejected) {
  Bodies b = two_unit_charges(1.0);
  auto batch = batch_from(b, b);
  batch.sq.pop_back();
  EXPECT_THROW(p2p_batched(batch), domain_error);
  auto batch2 = batch_from(b, b);
  batch2.ty.push_back(0.0f);
  EXPECT_THROW(p2p_batched(batch2), domain_error);
}

TEST(P2PBatched, TenThousandSquaredMatchesDouble) {
  const std::size_t n = 10000;
  Bodies t = test::random_bodies(n, 5), s = test::random_bodies(n, 6);
  for (auto& q : s.q) q /= static_cast<double>(n);
  auto batch = batch_from(t, s);
  p2p_batched(batch);
  p2p(t, 0, n, s, 0, n);
  double worst = 0;
  for (std::size_t i = 0; i < n; ++i) worst = std::max(worst, rel(batch.potential[i], t.potential[i]));
  EXPECT_LE(worst, 1e-4);
}

// ---------------------------------------------------------------- P2M / M2M

TEST(P2M, ChargeAtCenterIsPureMonopole) {
  Bodies b(1);
  b.set(0, {0.5, 0.5, 0.5}, 1.0);
  auto M = p2m(b, 0, 1, {0.5, 0.5, 0.5}, 6);
  EXPECT_EQ(M(0, 0), complex(1.0, 0.0));
  for (std::size_t k = 1; k < M.coeffs.size(); ++k) EXPECT_EQ(M.coeffs[k], complex{});
  EXPECT_EQ(M.coeffs.size(), 21u);
}

TEST(P2M, MonopoleIsTotalCharge) {
  Bodies b = test::random_bodies(37, 7, {0, 0, 0}, 1.0, -1.0, 1.0);
  auto M = p2m(b, 0, b.size(), {0.4, 0.6, 0.5}, 4);
  double total = 0;
  for (double q : b.q) total += q;
  EXPECT_NEAR(M(0, 0).real(), total, 1e-14);
  EXPECT_EQ(M(0, 0).imag(), 0.0);
}

TEST(P2M, FarFieldMatchesDirectWithinTruncationBound) {
  Bodies b = test::random_bodies(50, 8, {-0.5, -0.5, -0.5}, 1.0);
  const Vec3 x{10, 0, 0};
  const double ref = direct_potential(b, x);
  for (int p = 1; p <= 12; ++p) {
    auto M = p2m(b, 0, b.size(), {0, 0, 0}, p);
    EXPECT_LT(rel(evaluate_multipole(M, x), ref), std::pow(std::sqrt(3.0) / 20.0, p)) << "p=" << p;
  }
}

TEST(M2M, ZeroShiftIsIdentity) {
  Bodies b = test::random_bodies(20, 9);
  auto M = p2m(b, 0, b.size(), {0.5, 0.5, 0.5}, 7);
  auto S = m2m(M, M.center);
  for (std::size_t k = 0; k < M.coeffs.size(); ++k) EXPECT_EQ(S.coeffs[k], M.coeffs[k]);
}

TEST(M2M, MonopolePreserved) {
  Bodies b = test::random_bodies(20, 10);
  auto M = p2m(b, 0, b.size(), {0.5, 0.5, 0.5}, 5);
  auto S = m2m(M, {-3.0, 2.0, 7.5});
  EXPECT_NEAR(S(0, 0).real(), M(0, 0).real(), 1e-14);
}

TEST(M2M, ChildrenAggregateEqualsDirectParent) {
  // Parent cell [0,1)^3, eight children; compare far-field values of both constructions.
  Bodies b = test::random_bodies(400, 11, {0, 0, 0}, 1.0, -1.0, 1.0);
  const int p = 8;
  const Vec3 parent_center{0.5, 0.5, 0.5};
  MultipoleCoeffs aggregated(p, parent_center);
  for (int oct = 0; oct < 8; ++oct) {
    const Vec3 cc{0.25 + 0.5 * (oct & 1), 0.25 + 0.5 * (oct >> 1 & 1), 0.25 + 0.5 * (oct >> 2 & 1)};
    Bodies sub;
    for (std::size_t i = 0; i < b.size(); ++i) {
      const Vec3 x = b.position(i);
      if ((x.x >= 0.5) == bool(oct & 1) && (x.y >= 0.5) == bool(oct >> 1 & 1) && (x.z >= 0.5) == bool(oct >> 2 & 1)) {
        sub.resize(sub.size() + 1);
        sub.set(sub.size() - 1, x, b.q[i]);
      }
    }
    auto child = p2m(sub, 0, sub.size(), cc, p);
    m2m(child.coeffs, cc, parent_center, p, aggregated.coeffs);
  }
  auto direct = p2m(b, 0, b.size(), parent_center, p);
  std::mt19937_64 rng(12);
  for (int t = 0; t < 20; ++t) {
    const Vec3 dir = Vec3{std::normal_distribution<>()(rng), std::normal_distribution<>()(rng),
                          std::normal_distribution<>()(rng)};
    const Vec3 x = parent_center + dir * (5.0 / norm(dir));  // 10x the parent half-width
    EXPECT_LE(rel(evaluate_multipole(aggregated, x), evaluate_multipole(direct, x)), 1e-10);
  }
}

// ---------------------------------------------------------------- M2L / L2L / L2P

TEST(M2L, MonopoleGivesCenterToCenterPotential) {
  const double h = 0.125;
  MultipoleCoeffs M(5, {0, 0, 0});
  M(0, 0) = 1.0;
  auto L = m2l(M, {4 * h, 0, 0});
  EXPECT_NEAR(L(0, 0).real(), 1.0 / (4 * h), 1e-15);
  EXPECT_NEAR(L(0, 0).imag(), 0.0, 1e-15);
}

TEST(M2L, Linear) {
  Bodies b = test::random_bodies(30, 13);
  auto M = p2m(b, 0, b.size(), {0.5, 0.5, 0.5}, 6);
  auto M3 = M;
  M3 *= -3.0;
  auto L = m2l(M, {3.5, 0.5, 2.5}), L3 = m2l(M3, {3.5, 0.5, 2.5});
  for (std::size_t k = 0; k < L.coeffs.size(); ++k) EXPECT_LE(std::abs(L3.coeffs[k] + 3.0 * L.coeffs[k]), 1e-13 * (1 + std::abs(L.coeffs[k])));
}

TEST(M2L, CoincidentCentersRejected) {
  MultipoleCoeffs M(3, {1, 1, 1});
  EXPECT_THROW(m2l(M, {1, 1, 1}), domain_error);
}

TEST(M2L, InteractionListSeparationMatchesDirect) {
  // Every interaction-list offset of a leaf pair, p=10. Beyond the nearest face and edge shells the
  // error must reach 1e-6; the nearest shells converge as (sqrt(3)/2)^p and get a frozen bound.
  const double h = 0.5;
  std::mt19937_64 rng(15);
  std::uniform_real_distribution<double> u(-h, h);
  int seed = 200;
  for (int dx = -3; dx <= 3; ++dx)
    for (int dy = -3; dy <= 3; ++dy)
      for (int dz = -3; dz <= 3; ++dz) {
        if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) < 2) continue;
        Bodies b = test::random_bodies(60, static_cast<std::uint64_t>(seed++), {-h, -h, -h}, 2 * h);
        const Vec3 target_center{2 * h * dx, 2 * h * dy, 2 * h * dz};
        auto L = m2l(p2m(b, 0, b.size(), {0, 0, 0}, 10), target_center);
        const double tol = dx * dx + dy * dy + dz * dz >= 8 ? 1e-6 : 5e-5;
        for (int t = 0; t < 20; ++t) {
          const Vec3 x = target_center + Vec3{u(rng), u(rng), u(rng)};
          ASSERT_LE(rel(evaluate_local(L, x).potential, direct_potential(b, x)), tol) << dx << ' ' << dy << ' ' << dz;
        }
      }
}

TEST(L2L, ZeroShiftIsIdentity) {
  Bodies b = test::random_bodies(10, 16);
  auto L = m2l(p2m(b, 0, b.size(), {0.5, 0.5, 0.5}, 6), {4, 1, 0});
  auto S = l2l(L, L.center);
  for (std::size_t k = 0; k < L.coeffs.size(); ++k) EXPECT_EQ(S.coeffs[k], L.coeffs[k]);
}

TEST(L2L, ValueAtChildCenterPreserved) {
  Bodies b = test::random_bodies(10, 17);
  auto L = m2l(p2m(b, 0, b.size(), {0.5, 0.5, 0.5}, 6), {4, 1, 0});
  const Vec3 child{4.25, 0.75, 0.25};
  auto C = l2l(L, child);
  EXPECT_NEAR(C(0, 0).real(), evaluate_local(L, child).potential, 1e-14 * std::abs(C(0, 0).real()));
}

TEST(L2L, RecenteringIsExact) {
  std::mt19937_64 rng(18);
  std::uniform_real_distribution<double> u(-1, 1);
  const int p = 8;
  LocalCoeffs L(p, {0, 0, 0});
  for (int n = 0; n < p; ++n)
    for (int m = 0; m <= n; ++m) L(n, m) = complex(u(rng), m ? u(rng) : 0.0);
  const double h = 0.5;
  const Vec3 child{h / 2, -h / 2, h / 2};
  auto C = l2l(L, child);
  for (int t = 0; t < 10; ++t) {
    const Vec3 x = child + Vec3{u(rng), u(rng), u(rng)} * (h / 2);
    const double a = evaluate_local(L, x).potential, b = evaluate_local(C, x).potential;
    EXPECT_LE(std::abs(a - b), 1e-12 * std::abs(a));
  }
}

TEST(L2P, ConstantTermOnly) {
  LocalCoeffs L(4, {0.5, 0.5, 0.5});
  L(0, 0) = 2.5;
  Bodies b = test::random_bodies(10, 19);
  l2p(L, b, 0, b.size());
  for (std::size_t i = 0; i < b.size(); ++i) {
    EXPECT_EQ(b.potential[i], 2.5);
    EXPECT_EQ(b.fx[i], 0.0);
    EXPECT_EQ(b.fy[i], 0.0);
    EXPECT_EQ(b.fz[i], 0.0);
  }
}

TEST(L2P, GradientMatchesFiniteDifferences) {
  const double h = 0.25;
  Bodies src = test::random_bodies(40, 20, {-h, -h, -h}, 2 * h);
  const Vec3 center{4 * h, 0, 2 * h};
  auto L = m2l(p2m(src, 0, src.size(), {0, 0, 0}, 8), center);
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(-h, h);
  const double step = 1e-5 * h;
  for (int t = 0; t < 20; ++t) {
    const Vec3 x = center + Vec3{u(rng), u(rng), u(rng)};
    Bodies one(1);
    one.set(0, x, 1.0);
    l2p(L, one, 0, 1);
    const Vec3 field{one.fx[0], one.fy[0], one.fz[0]};
    for (int axis = 0; axis < 3; ++axis) {
      Vec3 e{axis == 0 ? step : 0, axis == 1 ? step : 0, axis == 2 ? step : 0};
      const double fd = -(evaluate_local(L, x + e).potential - evaluate_local(L, x - e).potential) / (2 * step);
      EXPECT_LE(std::abs(fd - field[axis]), 1e-5 * norm(field)) << "axis " << axis;
    }
  }
}

TEST(L2P, TwoSeparatedLeavesPipeline) {
  const double h = 0.5;
  Bodies src = test::random_bodies(50, 22, {-h, -h, -h}, 2 * h);
  Bodies dst = test::random_bodies(20, 23, {5 * h, h, -h}, 2 * h);
  auto L = m2l(p2m(src, 0, src.size(), {0, 0, 0}, 10), {6 * h, 2 * h, 0});
  l2p(L, dst, 0, dst.size());
  for (std::size_t i = 0; i < dst.size(); ++i)
    EXPECT_LE(rel(dst.potential[i], direct_potential(src, dst.position(i))), 1e-6);
}

// ---------------------------------------------------------------- evaluate_multipole

TEST(EvaluateMultipole, PureMonopole) {
  MultipoleCoeffs M(3, {1, 2, 3});
  M(0, 0) = 4.0;
  EXPECT_DOUBLE_EQ(evaluate_multipole(M, {1, 2, 5}), 2.0);
  EXPECT_THROW(evaluate_multipole(M, {1, 2, 3}), domain_error);
}

TEST(EvaluateMultipole, ErrorDecaysWithOrder) {
  // Sources in a cube of half-width 0.5; evaluation at distance/radius = 4.
  Bodies b = test::random_bodies(40, 24, {-0.5, -0.5, -0.5}, 1.0);
  const Vec3 x = Vec3{1, 1, 1} * (4 * std::sqrt(3.0) * 0.5 / std::sqrt(3.0));
  const double ref = direct_potential(b, x);
  double prev = 1e300;
  int non_monotone = 0;
  for (int p = 2; p <= 10; ++p) {
    const double err = rel(evaluate_multipole(p2m(b, 0, b.size(), {0, 0, 0}, p), x), ref);
    if (err >= prev) ++non_monotone;
    prev = err;
  }
  EXPECT_LE(non_monotone, 1);
}

TEST(EvaluateMultipole, RotationConsistent) {
  Bodies b = test::random_bodies(30, 25, {-0.5, -0.5, -0.5}, 1.0);
  const Vec3 x{3, -1, 2}, axis{0.3, -0.7, 0.2};
  const double angle = 1.1;
  Bodies r = b;
  for (std::size_t i = 0; i < b.size(); ++i) r.set(i, rotate(b.position(i), axis, angle), b.q[i]);
  const int p = 9;
  const double a = evaluate_multipole(p2m(b, 0, b.size(), {0, 0, 0}, p), x);
  const double c = evaluate_multipole(p2m(r, 0, r.size(), {0, 0, 0}, p), rotate(x, axis, angle));
  EXPECT_LE(std::abs(a - c), 1e-12 * std::abs(a));
}

// ---------------------------------------------------------------- direct sum

TEST(DirectSum, TwoChargesAtDistanceTwo) {
  auto r = direct_sum(two_unit_charges(2.0));
  EXPECT_DOUBLE_EQ(r.potential[0], 0.5);
  EXPECT_DOUBLE_EQ(r.potential[1], 0.5);
}

TEST(DirectSum, CubeCornersSymmetric) {
  Bodies b(8);
  for (int k = 0; k < 8; ++k) b.set(static_cast<std::size_t>(k), {double(k & 1), double(k >> 1 & 1), double(k >> 2 & 1)}, 1.0);
  auto r = direct_sum(b);
  for (int k = 1; k < 8; ++k) EXPECT_NEAR(r.potential[static_cast<std::size_t>(k)], r.potential[0], 1e-15);
}

TEST(DirectSum, EnergyMatchesPairLoop) {
  Bodies b = test::random_bodies(1000, 26, {0, 0, 0}, 1.0, -1.0, 1.0);
  auto r = direct_sum(b);
  double energy = 0, pairs = 0;
  for (std::size_t i = 0; i < b.size(); ++i) energy += b.q[i] * r.potential[i];
  for (std::size_t i = 0; i < b.size(); ++i)
    for (std::size_t j = i + 1; j < b.size(); ++j) pairs += b.q[i] * b.q[j] / norm(b.position(i) - b.position(j));
  EXPECT_NEAR(energy, 2 * pairs, 1e-10 * std::abs(pairs));
}

TEST(DirectSum, TargetSubset) {
  Bodies b = test::random_bodies(200, 27);
  auto all = direct_sum(b);
  std::vector<std::size_t> subset = {5, 100, 17};
  auto some = direct_sum(b, std::span<const std::size_t>(subset));
  for (std::size_t k = 0; k < subset.size(); ++k) EXPECT_EQ(some.potential[k], all.potential[subset[k]]);
}
