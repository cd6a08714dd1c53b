#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <set>
#include <utility>
#include <vector>

#include <gtest/gtest.h>

#include "qshift/errors.hpp"
#include "qshift/gallery.hpp"
#include "qshift/random.hpp"

namespace qshift {
namespace {

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected an error";
  return ErrorKind::BadInput;
}

Gallery random_gallery(std::size_t n, std::size_t d, std::uint64_t seed) {
  Xoshiro256 rng(seed);
  Matrix m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = rng.normal();
    m.row(i).normalize();
  }
  return Gallery(EmbeddingBatch(m));
}

Vector random_unit(std::size_t d, Xoshiro256& rng) {
  Vector v(static_cast<Eigen::Index>(d));
  for (auto& x : v) x = rng.normal();
  return v.normalized();
}

// Energy of the best spherical 2-means over every 2-partition of the rows.
double brute_force_two_means(const Matrix& rows) {
  const auto n = static_cast<std::size_t>(rows.rows());
  double best = std::numeric_limits<double>::infinity();
  for (std::uint32_t mask = 1; mask + 1 < (1u << n); ++mask) {
    Vector sums[2] = {Vector::Zero(rows.cols()), Vector::Zero(rows.cols())};
    for (std::size_t i = 0; i < n; ++i) sums[(mask >> i) & 1u] += rows.row(static_cast<Eigen::Index>(i)).transpose();
    if (sums[0].norm() < 1e-12 || sums[1].norm() < 1e-12) continue;
    const Vector c[2] = {sums[0].normalized(), sums[1].normalized()};
    double e = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const Vector r = rows.row(static_cast<Eigen::Index>(i)).transpose();
      e += std::min((r - c[0]).squaredNorm(), (r - c[1]).squaredNorm());
    }
    best = std::min(best, e);
  }
  return best;
}

TEST(Gallery, RejectsUnnormalizedRows) {
  Matrix m(2, 2);
  m << 1, 0, 1, 1;
  EXPECT_EQ(kind_of([&] { Gallery g{EmbeddingBatch(m)}; }), ErrorKind::NotNormalized);
}

TEST(BuildCentroids, TwoClusterOptimum) {
  Matrix m(10, 2);
  for (int i = 0; i < 5; ++i) m.row(i) << 1, 0;
  for (int i = 5; i < 10; ++i) m.row(i) << 0, 1;
  const Gallery g{EmbeddingBatch(m)};
  const CentroidSet c = build_centroids(g, 2, 0);
  ASSERT_EQ(c.size(), 2u);

  EXPECT_NEAR(c.energy, brute_force_two_means(m), 1e-12);
  EXPECT_NEAR(c.energy, 0.0, 1e-12);
  std::set<std::pair<double, double>> found;
  for (std::size_t i = 0; i < 2; ++i) {
    found.emplace(std::round(c.centroids.row(i)[0] * 1e9) / 1e9, std::round(c.centroids.row(i)[1] * 1e9) / 1e9);
  }
  EXPECT_EQ(found, (std::set<std::pair<double, double>>{{1.0, 0.0}, {0.0, 1.0}}));
}

TEST(BuildCentroids, NeverBeatsBruteForceOptimum) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const Gallery g = random_gallery(9, 3, 100 + s);
    const CentroidSet c = build_centroids(g, 2, s);
    EXPECT_GE(c.energy, brute_force_two_means(g.items().matrix()) - 1e-9);
  }
}

TEST(BuildCentroids, KEqualsNGivesZeroEnergy) {
  const Gallery g = random_gallery(12, 4, 5);
  const CentroidSet c = build_centroids(g, 12, 1);
  EXPECT_NEAR(c.energy, 0.0, 1e-12);
  for (std::size_t i = 0; i < 12; ++i) {
    double best = 0.0;
    for (std::size_t j = 0; j < 12; ++j) best = std::max(best, c.centroids.row(j).dot(g.row(static_cast<GalleryId>(i))));
    EXPECT_NEAR(best, 1.0, 1e-12);
  }
}

TEST(BuildCentroids, SingleClusterIsNormalizedMean) {
  const Gallery g = random_gallery(20, 5, 9);
  const CentroidSet c = build_centroids(g, 1, 3);
  const Vector expected = g.items().matrix().colwise().sum().transpose().normalized();
  EXPECT_LE((c.centroids.row(0) - expected).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(BuildCentroids, EnergyNonIncreasingAndUnitCentroids) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Gallery g = random_gallery(200, 8, 40 + s);
    const CentroidSet c = build_centroids(g, 10, s);
    ASSERT_FALSE(c.energy_trace.empty());
    for (std::size_t i = 1; i < c.energy_trace.size(); ++i) {
      EXPECT_LE(c.energy_trace[i], c.energy_trace[i - 1] + 1e-12);
    }
    EXPECT_DOUBLE_EQ(c.energy, c.energy_trace.back());
    for (std::size_t i = 0; i < c.size(); ++i) EXPECT_NEAR(c.centroids.row(i).norm(), 1.0, 1e-12);
  }
}

TEST(BuildCentroids, BitReproducible) {
  const Gallery g = random_gallery(150, 6, 77);
  const CentroidSet a = build_centroids(g, 7, 42);
  const CentroidSet b = build_centroids(g, 7, 42);
  EXPECT_EQ(a.centroids.matrix(), b.centroids.matrix());
  EXPECT_EQ(a.energy_trace, b.energy_trace);
  EXPECT_EQ(a.assignment, b.assignment);
}

TEST(BuildCentroids, InvalidK) {
  const Gallery g = random_gallery(5, 3, 1);
  EXPECT_EQ(kind_of([&] { build_centroids(g, 0, 0); }), ErrorKind::InvalidK);
  EXPECT_EQ(kind_of([&] { build_centroids(g, 6, 0); }), ErrorKind::InvalidK);
}

TEST(Knn, Examples) {
  Matrix m(2, 2);
  m << 1, 0, 0, 1;
  const Gallery g{EmbeddingBatch(m)};
  Vector q(2);
  q << 1, 0;
  EXPECT_EQ(knn_ids(g, q, 1), std::vector<GalleryId>{0});

  Matrix t(2, 2);
  t << 0, 1, 0, -1;
  const Gallery tied{EmbeddingBatch(t)};
  EXPECT_EQ(knn_ids(tied, q, 2), (std::vector<GalleryId>{0, 1}));
}

TEST(Knn, Errors) {
  const Gallery g = random_gallery(4, 3, 1);
  Vector q = Vector::Zero(3);
  q[0] = 1;
  EXPECT_EQ(kind_of([&] { knn(g, q, 0); }), ErrorKind::InvalidK);
  EXPECT_EQ(kind_of([&] { knn(g, q, 5); }), ErrorKind::InvalidK);
  Vector wrong = Vector::Zero(2);
  wrong[0] = 1;
  EXPECT_EQ(kind_of([&] { knn(g, wrong, 1); }), ErrorKind::DimMismatch);
}

TEST(Knn, MatchesLinearScanOracle) {
  Xoshiro256 rng(2024);
  const Gallery g = random_gallery(256, 8, 31);
  for (int t = 0; t < 50; ++t) {
    const Vector q = random_unit(8, rng);
    std::vector<std::pair<double, GalleryId>> scan;
    for (GalleryId id = 0; id < g.size(); ++id) scan.emplace_back(-q.dot(g.row(id)), id);
    std::sort(scan.begin(), scan.end());
    const NeighborList got = knn(g, q, 10);
    ASSERT_EQ(got.size(), 10u);
    for (std::size_t i = 0; i < 10; ++i) {
      EXPECT_EQ(got[i].id, scan[i].second);
      EXPECT_DOUBLE_EQ(got[i].similarity, -scan[i].first);
    }
  }
}

TEST(Knn, FullDepthIsSortedPermutation) {
  Xoshiro256 rng(8);
  const Gallery g = random_gallery(64, 5, 12);
  const Vector q = random_unit(5, rng);
  const NeighborList all = knn(g, q, g.size());
  std::vector<GalleryId> ids;
  for (std::size_t i = 0; i < all.size(); ++i) {
    ids.push_back(all[i].id);
    if (i > 0) EXPECT_GE(all[i - 1].similarity, all[i].similarity);
  }
  std::sort(ids.begin(), ids.end());
  std::vector<GalleryId> expected(g.size());
  std::iota(expected.begin(), expected.end(), 0u);
  EXPECT_EQ(ids, expected);
}

}  // namespace
}  // namespace qshift
