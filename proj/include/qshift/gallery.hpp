#pragma once

// Immutable gallery with exact nearest-neighbour search and spherical
// k-means centroids.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "qshift/embedding.hpp"

namespace qshift {

using GalleryId = std::uint32_t;

class Gallery {
 public:
  /// Rows must be unit norm; ids are the row positions.
  explicit Gallery(EmbeddingBatch items);

  std::size_t size() const { return items_.size(); }
  std::size_t dim() const { return items_.dim(); }
  const EmbeddingBatch& items() const { return items_; }
  auto row(GalleryId id) const { return items_.row(id); }

 private:
  EmbeddingBatch items_;
};

struct CentroidSet {
  EmbeddingBatch centroids;
  /// Sum over gallery rows of the squared distance to the nearest centroid.
  double energy = 0.0;
  /// Energy after each assignment step, first entry is the seeding energy.
  std::vector<double> energy_trace;
  std::vector<std::size_t> assignment;

  std::size_t size() const { return centroids.size(); }
};

struct Neighbor {
  GalleryId id;
  double similarity;
};

/// Ordered by similarity descending, ties by ascending id.
using NeighborList = std::vector<Neighbor>;

/// Lloyd's algorithm with k-means++ seeding. Centroids are projected back
/// onto the unit sphere after every update. Deterministic for a given seed.
CentroidSet build_centroids(const Gallery& gallery, std::size_t k, std::uint64_t seed,
                            std::size_t max_iterations = 100, double min_improvement = 1e-6);

/// Exact top-k by cosine similarity.
NeighborList knn(const Gallery& gallery, const VectorRef& query, std::size_t k);

/// Just the ids of knn().
std::vector<GalleryId> knn_ids(const Gallery& gallery, const VectorRef& query, std::size_t k);

}  // namespace qshift
