#include "qshift/gallery.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "qshift/errors.hpp"
#include "qshift/random.hpp"

namespace qshift {

Gallery::Gallery(EmbeddingBatch items) : items_(std::move(items)) {
  if (items_.empty()) throw Error(ErrorKind::EmptyBatch, "gallery has no items");
  if (!items_.is_normalized()) throw Error(ErrorKind::NotNormalized, "gallery rows must be unit norm");
  if (items_.size() > std::numeric_limits<GalleryId>::max()) {
    throw Error(ErrorKind::InvalidSpec, "gallery too large for 32-bit ids");
  }
}

namespace {

struct Assignment {
  std::vector<std::size_t> owner;
  std::vector<double> dist2;
  double energy = 0.0;
};

Assignment assign(const Matrix& points, const Matrix& centroids) {
  const auto n = static_cast<std::size_t>(points.rows());
  Assignment a;
  a.owner.resize(n);
  a.dist2.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t arg = 0;
    for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
      const double d = (points.row(static_cast<Eigen::Index>(i)) - centroids.row(c)).squaredNorm();
      if (d < best) {
        best = d;
        arg = static_cast<std::size_t>(c);
      }
    }
    a.owner[i] = arg;
    a.dist2[i] = best;
    a.energy += best;
  }
  return a;
}

Matrix seed_plus_plus(const Matrix& points, std::size_t k, std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(points.rows());
  Xoshiro256 rng(seed);
  std::vector<std::size_t> chosen;
  std::vector<bool> taken(n, false);
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());

  std::size_t next = static_cast<std::size_t>(rng.below(n));
  while (chosen.size() < k) {
    chosen.push_back(next);
    taken[next] = true;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], (points.row(static_cast<Eigen::Index>(i)) -
                               points.row(static_cast<Eigen::Index>(next)))
                                  .squaredNorm());
    }
    if (chosen.size() == k) break;

    const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
    if (total > 0.0) {
      const double r = rng.uniform() * total;
      double acc = 0.0;
      next = n;
      for (std::size_t i = 0; i < n; ++i) {
        if (taken[i] || d2[i] <= 0.0) continue;
        acc += d2[i];
        next = i;
        if (acc > r) break;
      }
    } else {
      next = n;
    }
    if (next == n) {
      // Every remaining point duplicates a chosen one.
      next = static_cast<std::size_t>(std::find(taken.begin(), taken.end(), false) - taken.begin());
    }
  }

  Matrix centroids(static_cast<Eigen::Index>(k), points.cols());
  for (std::size_t c = 0; c < k; ++c) {
    centroids.row(static_cast<Eigen::Index>(c)) = points.row(static_cast<Eigen::Index>(chosen[c]));
  }
  return centroids;
}

}  // namespace

CentroidSet build_centroids(const Gallery& gallery, std::size_t k, std::uint64_t seed,
                            std::size_t max_iterations, double min_improvement) {
  if (k < 1 || k > gallery.size()) {
    throw Error(ErrorKind::InvalidK, "k=" + std::to_string(k) + " for gallery of " +
                                         std::to_string(gallery.size()));
  }
  const Matrix& points = gallery.items().matrix();
  const auto n = static_cast<std::size_t>(points.rows());

  Matrix centroids = seed_plus_plus(points, k, seed);
  Assignment a = assign(points, centroids);
  std::vector<double> trace{a.energy};

  for (std::size_t it = 0; it < max_iterations; ++it) {
    Matrix sums = Matrix::Zero(centroids.rows(), centroids.cols());
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      sums.row(static_cast<Eigen::Index>(a.owner[i])) += points.row(static_cast<Eigen::Index>(i));
      ++counts[a.owner[i]];
    }

    Matrix updated = centroids;
    for (std::size_t c = 0; c < k; ++c) {
      const auto row = static_cast<Eigen::Index>(c);
      const double norm = sums.row(row).norm();
      // A cluster whose members cancel out keeps its centroid: every unit
      // vector gives it the same energy.
      if (counts[c] > 0 && norm > kZeroNorm) updated.row(row) = sums.row(row) / norm;
    }

    // Empty clusters are re-seeded with the point farthest from its centroid.
    std::vector<bool> used(n, false);
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] > 0) continue;
      double far = -1.0;
      std::size_t arg = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (used[i]) continue;
        const double d = (points.row(static_cast<Eigen::Index>(i)) -
                          updated.row(static_cast<Eigen::Index>(a.owner[i])))
                             .squaredNorm();
        if (d > far) {
          far = d;
          arg = i;
        }
      }
      used[arg] = true;
      updated.row(static_cast<Eigen::Index>(c)) = points.row(static_cast<Eigen::Index>(arg));
    }

    const bool unchanged = (updated.array() == centroids.array()).all();
    centroids = std::move(updated);
    const double previous = a.energy;
    a = assign(points, centroids);
    trace.push_back(a.energy);
    if (unchanged || previous - a.energy < min_improvement) break;
  }

  CentroidSet out;
  out.centroids = EmbeddingBatch(std::move(centroids));
  out.energy = a.energy;
  out.energy_trace = std::move(trace);
  out.assignment = std::move(a.owner);
  return out;
}

NeighborList knn(const Gallery& gallery, const VectorRef& query, std::size_t k) {
  if (static_cast<std::size_t>(query.size()) != gallery.dim()) {
    throw Error(ErrorKind::DimMismatch, "query dim " + std::to_string(query.size()) +
                                            " vs gallery dim " + std::to_string(gallery.dim()));
  }
  if (k < 1 || k > gallery.size()) {
    throw Error(ErrorKind::InvalidK, "k=" + std::to_string(k));
  }
  const Vector sims = gallery.items().matrix() * query;
  NeighborList all(gallery.size());
  for (std::size_t i = 0; i < all.size(); ++i) {
    all[i] = {static_cast<GalleryId>(i), std::clamp(sims[static_cast<Eigen::Index>(i)], -1.0, 1.0)};
  }
  const auto before = [](const Neighbor& a, const Neighbor& b) {
    return a.similarity > b.similarity || (a.similarity == b.similarity && a.id < b.id);
  };
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(), before);
  all.resize(k);
  return all;
}

std::vector<GalleryId> knn_ids(const Gallery& gallery, const VectorRef& query, std::size_t k) {
  const NeighborList nl = knn(gallery, query, k);
  std::vector<GalleryId> ids(nl.size());
  std::transform(nl.begin(), nl.end(), ids.begin(), [](const Neighbor& n) { return n.id; });
  return ids;
}

}  // namespace qshift
