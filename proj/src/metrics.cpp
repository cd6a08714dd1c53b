#include "qshift/metrics.hpp"

#include <algorithm>
#include <string>

#include "qshift/errors.hpp"

namespace qshift {

void GroundTruth::validate(std::size_t gallery_size) const {
  for (std::size_t q = 0; q < relevant.size(); ++q) {
    if (relevant[q].empty()) {
      throw Error(ErrorKind::BadInput, "query " + std::to_string(q) + " has no relevant item");
    }
    for (GalleryId id : relevant[q]) {
      if (id >= gallery_size) {
        throw Error(ErrorKind::IndexOutOfRange, "gallery id " + std::to_string(id));
      }
    }
  }
}

double metric_uniformity(const EmbeddingBatch& z) {
  const Vector center = batch_mean(z);
  double acc = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) acc += (z.row(i) - center).norm();
  return acc / static_cast<double>(z.size());
}

double metric_gap(const EmbeddingBatch& z_q, const EmbeddingBatch& z_g) {
  if (z_q.dim() != z_g.dim()) throw Error(ErrorKind::DimMismatch, "gap operands");
  return (batch_mean(z_q) - batch_mean(z_g)).norm();
}

double metric_consistency(const EmbeddingBatch& z_q, const EmbeddingBatch& z_g, const GroundTruth& gt) {
  if (z_q.dim() != z_g.dim()) throw Error(ErrorKind::DimMismatch, "consistency operands");
  if (gt.size() > z_q.size()) throw Error(ErrorKind::MissingQuery, "ground truth covers unseen queries");
  double acc = 0.0;
  std::size_t pairs = 0;
  for (std::size_t q = 0; q < gt.size(); ++q) {
    for (GalleryId id : gt.relevant[q]) {
      if (id >= z_g.size()) throw Error(ErrorKind::IndexOutOfRange, "gallery id " + std::to_string(id));
      acc += cosine_sim(z_q.row(q), z_g.row(id));
      ++pairs;
    }
  }
  if (pairs == 0) throw Error(ErrorKind::EmptyGroundTruth, "no relevance pairs");
  return acc / static_cast<double>(pairs);
}

double recall_at_k(const std::vector<std::vector<GalleryId>>& rankings, const GroundTruth& gt,
                   std::size_t k) {
  if (gt.size() == 0) throw Error(ErrorKind::EmptyGroundTruth, "no queries to score");
  if (rankings.size() < gt.size()) {
    throw Error(ErrorKind::MissingQuery, std::to_string(rankings.size()) + " rankings for " +
                                             std::to_string(gt.size()) + " queries");
  }
  std::size_t hits = 0;
  for (std::size_t q = 0; q < gt.size(); ++q) {
    const auto& r = rankings[q];
    const auto end = r.begin() + static_cast<std::ptrdiff_t>(std::min(k, r.size()));
    const auto& rel = gt.relevant[q];
    if (std::any_of(r.begin(), end, [&](GalleryId id) {
          return std::find(rel.begin(), rel.end(), id) != rel.end();
        })) {
      ++hits;
    }
  }
  return static_cast<double>(hits) / static_cast<double>(gt.size());
}

double query_positive_gap(const EmbeddingBatch& z_q, const Gallery& gallery) {
  std::vector<std::size_t> nearest;
  for (std::size_t i = 0; i < z_q.size(); ++i) nearest.push_back(knn(gallery, z_q.row(i), 1).front().id);
  return metric_gap(z_q, gallery.items().select(nearest));
}

MetricsReport compute_metrics(const EmbeddingBatch& z_q, const Gallery& gallery,
                              const std::vector<std::vector<GalleryId>>& rankings, const GroundTruth& gt) {
  MetricsReport m;
  m.recall_1 = recall_at_k(rankings, gt, 1);
  m.recall_5 = recall_at_k(rankings, gt, 5);
  m.recall_10 = recall_at_k(rankings, gt, 10);
  m.uniformity = metric_uniformity(z_q);
  m.gap = metric_gap(z_q, gallery.items());
  m.consistency = metric_consistency(z_q, gallery.items(), gt);
  m.delta_t = query_positive_gap(z_q, gallery);
  return m;
}

}  // namespace qshift
