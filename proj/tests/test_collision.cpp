#include <gtest/gtest.h>

#include <cmath>

#include "avstress/collision.hpp"
#include "avstress/rng.hpp"
#include "support/oracles.hpp"

using namespace avstress;
using namespace avstress::testing;

TEST(Collision, IdenticalPoseOverlaps) {
  const OrientedRect r{{3, 4}, 0.7, 5, 2};
  EXPECT_TRUE(overlaps(r, r));
}

TEST(Collision, FarApartNeverOverlaps) {
  const OrientedRect a{{0, 0}, 0.0, 5, 2};
  const OrientedRect b{{a.half_diagonal() * 2 + 1e-6, 0}, 1.0, 5, 2};
  EXPECT_FALSE(overlaps(a, b));
}

TEST(Collision, TouchingIsNotOverlap) {
  const OrientedRect a{{0, 0}, 0.0, 5, 2};
  const OrientedRect b{{5, 0}, 0.0, 5, 2};
  EXPECT_FALSE(overlaps(a, b));
  const OrientedRect c{{4.999, 0}, 0.0, 5, 2};
  EXPECT_TRUE(overlaps(a, c));
}

TEST(Collision, RotatedCornerCase) {
  // Diamond whose tip approaches a box edge.
  const OrientedRect box{{0, 0}, 0.0, 4, 4};
  const double tip = std::sqrt(2.0);
  const OrientedRect diamond_out{{2.0 + tip + 0.01, 0}, kPi / 4, 2, 2};
  const OrientedRect diamond_in{{2.0 + tip - 0.01, 0}, kPi / 4, 2, 2};
  EXPECT_FALSE(overlaps(box, diamond_out));
  EXPECT_TRUE(overlaps(box, diamond_in));
}

TEST(Collision, MatchesPointSamplingOracle) {
  Rng rng(2024);
  int compared = 0;
  int positives = 0;
  while (compared < 500) {
    const OrientedRect a = random_rect(rng, {0, 0}, 0.0);
    const OrientedRect b = random_rect(rng, {0, 0}, 6.0);
    // Skip pairs within the sampling resolution of touching: the oracle is
    // only trusted where shrunk and grown copies agree.
    const bool shrunk = sampled_overlap(grown(a, -0.05), grown(b, -0.05), 0.05);
    const bool expanded = sampled_overlap(grown(a, 0.05), grown(b, 0.05), 0.05);
    if (shrunk != expanded) continue;
    EXPECT_EQ(overlaps(a, b), shrunk);
    positives += shrunk ? 1 : 0;
    ++compared;
  }
  EXPECT_GT(positives, 50);
  EXPECT_LT(positives, 450);
}

TEST(Collision, SymmetricAndRigidInvariant) {
  Rng rng(5);
  for (int i = 0; i < 2000; ++i) {
    const OrientedRect a = random_rect(rng, {0, 0}, 0.0);
    const OrientedRect b = random_rect(rng, {0, 0}, 6.0);
    const bool ab = overlaps(a, b);
    ASSERT_EQ(ab, overlaps(b, a));

    const double rot = rng.uniform(-kPi, kPi);
    const Vec2 shift{rng.uniform(-100, 100), rng.uniform(-100, 100)};
    // Exclude near-touching pairs where rounding in the transform can flip
    // the answer.
    if (overlaps(grown(a, 1e-7), grown(b, 1e-7)) != overlaps(grown(a, -1e-7), grown(b, -1e-7))) {
      continue;
    }
    const OrientedRect ta = rigid_transform(a, rot, shift), tb = rigid_transform(b, rot, shift);
    ASSERT_EQ(ab, overlaps(ta, tb));
  }
}
