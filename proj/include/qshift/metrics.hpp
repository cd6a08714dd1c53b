#pragma once

#include <cstddef>
#include <vector>

#include "qshift/embedding.hpp"
#include "qshift/gallery.hpp"

namespace qshift {

/// Relevant gallery ids for every query.
struct GroundTruth {
  std::vector<std::vector<GalleryId>> relevant;

  std::size_t size() const { return relevant.size(); }
  /// Every query has at least one relevant id below `gallery_size`.
  void validate(std::size_t gallery_size) const;
};

/// Mean distance of the rows to their mean.
double metric_uniformity(const EmbeddingBatch& z);

/// Distance between the two batch means.
double metric_gap(const EmbeddingBatch& z_q, const EmbeddingBatch& z_g);

/// Mean cosine over every (query, relevant item) pair.
double metric_consistency(const EmbeddingBatch& z_q, const EmbeddingBatch& z_g, const GroundTruth& gt);

/// Fraction of queries with a relevant id among their first k ranked ids.
double recall_at_k(const std::vector<std::vector<GalleryId>>& rankings, const GroundTruth& gt,
                   std::size_t k);

/// Distance between the query mean and the mean of each query's 1-NN item.
double query_positive_gap(const EmbeddingBatch& z_q, const Gallery& gallery);

struct MetricsReport {
  double recall_1 = 0.0;
  double recall_5 = 0.0;
  double recall_10 = 0.0;
  double uniformity = 0.0;
  double gap = 0.0;
  double consistency = 0.0;
  double delta_t = 0.0;
};

MetricsReport compute_metrics(const EmbeddingBatch& z_q, const Gallery& gallery,
                              const std::vector<std::vector<GalleryId>>& rankings, const GroundTruth& gt);

}  // namespace qshift
