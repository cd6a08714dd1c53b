#include "qshift/refinement.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_set>

#include "qshift/errors.hpp"

namespace qshift {

namespace {

// Centroids closer than this to the positive count as the positive itself.
constexpr double kCollisionDist2 = 1e-12;

CandidateSet assemble(std::size_t i, const std::vector<std::vector<GalleryId>>& neighbours,
                      const Gallery& gallery, const CentroidSet& centroids) {
  CandidateSet cs;
  cs.query_index = i;
  cs.positive_id = neighbours[i].front();
  cs.refs.push_back({CandidateRef::Source::gallery, cs.positive_id});

  std::unordered_set<GalleryId> seen{cs.positive_id};
  for (std::size_t j = 0; j < neighbours.size(); ++j) {
    if (j == i) continue;
    for (GalleryId id : neighbours[j]) {
      if (seen.insert(id).second) cs.refs.push_back({CandidateRef::Source::gallery, id});
    }
  }

  const Vector positive = gallery.row(cs.positive_id);
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    if ((centroids.centroids.row(c) - positive).squaredNorm() <= kCollisionDist2) continue;
    cs.refs.push_back({CandidateRef::Source::centroid, static_cast<std::uint32_t>(c)});
  }

  Matrix rows(static_cast<Eigen::Index>(cs.refs.size()), static_cast<Eigen::Index>(gallery.dim()));
  for (std::size_t s = 0; s < cs.refs.size(); ++s) {
    const auto& ref = cs.refs[s];
    rows.row(static_cast<Eigen::Index>(s)) =
        ref.source == CandidateRef::Source::gallery
            ? gallery.items().matrix().row(ref.index)
            : centroids.centroids.matrix().row(ref.index);
  }
  cs.embeddings = EmbeddingBatch(std::move(rows));
  return cs;
}

void check_queries(const EmbeddingBatch& queries, const Gallery& gallery, std::size_t k) {
  if (queries.empty()) throw Error(ErrorKind::EmptyBatch, "no queries");
  if (queries.dim() != gallery.dim()) throw Error(ErrorKind::DimMismatch, "queries vs gallery");
  if (k < 1 || k > gallery.size()) throw Error(ErrorKind::InvalidK, "k=" + std::to_string(k));
}

}  // namespace

CandidateSet build_candidate_set(const EmbeddingBatch& queries, const Gallery& gallery,
                                 const CentroidSet& centroids, std::size_t k, std::size_t i) {
  check_queries(queries, gallery, k);
  if (i >= queries.size()) {
    throw Error(ErrorKind::IndexOutOfRange,
                "query " + std::to_string(i) + " of " + std::to_string(queries.size()));
  }
  std::vector<std::vector<GalleryId>> neighbours(queries.size());
  for (std::size_t j = 0; j < queries.size(); ++j) {
    neighbours[j] = knn_ids(gallery, queries.row(j), j == i ? 1 : k);
  }
  return assemble(i, neighbours, gallery, centroids);
}

std::vector<CandidateSet> build_candidate_sets(const EmbeddingBatch& queries, const Gallery& gallery,
                                               const CentroidSet& centroids, std::size_t k) {
  check_queries(queries, gallery, k);
  std::vector<std::vector<GalleryId>> neighbours(queries.size());
  for (std::size_t j = 0; j < queries.size(); ++j) neighbours[j] = knn_ids(gallery, queries.row(j), k);
  std::vector<CandidateSet> out;
  out.reserve(queries.size());
  for (std::size_t i = 0; i < queries.size(); ++i) out.push_back(assemble(i, neighbours, gallery, centroids));
  return out;
}

RefinedPrediction refined_prediction(const VectorRef& query, const CandidateSet& candidates,
                                     double tau) {
  if (static_cast<std::size_t>(query.size()) != candidates.embeddings.dim()) {
    throw Error(ErrorKind::DimMismatch, "query vs candidates");
  }
  const Vector scores = (candidates.embeddings.matrix() * query).cwiseMax(-1.0).cwiseMin(1.0);
  Distribution dist = softmax_temp(scores, tau);
  const double h = shannon_entropy(dist);
  const double p0 = dist[0];
  return {std::move(dist), log_softmax_temp(scores, tau), h, p0};
}

double source_likeness(const VectorRef& query, const VectorRef& positive, const VectorRef& query_mean,
                       const VectorRef& positive_mean) {
  const auto d = query.size();
  if (positive.size() != d || query_mean.size() != d || positive_mean.size() != d) {
    throw Error(ErrorKind::DimMismatch, "source_likeness operands");
  }
  return 2.0 * (query - positive).norm() -
         ((query - query_mean).norm() + (positive - positive_mean).norm());
}

double SourceLikeQueue::max_score() const {
  if (entries_.empty()) throw Error(ErrorKind::EmptyQueue, "max_score of empty queue");
  return entries_.back().score_s;
}

SourceLikeQueue update_queue(const SourceLikeQueue& queue, std::vector<QueueEntry> incoming,
                             std::size_t capacity) {
  SourceLikeQueue out;
  out.next_sequence_ = queue.next_sequence_;
  out.entries_ = queue.entries_;
  for (auto& e : incoming) {
    if (!std::isfinite(e.score_s)) throw Error(ErrorKind::NonFinite, "queue score");
    e.sequence = out.next_sequence_++;
    out.entries_.push_back(std::move(e));
  }
  std::stable_sort(out.entries_.begin(), out.entries_.end(), [](const QueueEntry& a, const QueueEntry& b) {
    return a.score_s < b.score_s || (a.score_s == b.score_s && a.sequence < b.sequence);
  });
  if (out.entries_.size() > capacity) out.entries_.resize(capacity);
  return out;
}

ConstraintEstimates estimate_constraints(const SourceLikeQueue& queue) {
  if (queue.empty()) throw Error(ErrorKind::EmptyQueue, "no source-like pairs yet");
  const auto& entries = queue.entries();
  const auto d = entries.front().query_emb.size();
  Vector q_sum = Vector::Zero(d);
  Vector g_sum = Vector::Zero(d);
  double threshold = 0.0;
  for (const auto& e : entries) {
    q_sum += e.query_emb;
    g_sum += e.positive_emb;
    threshold = std::max(threshold, e.entropy_at_enqueue);
  }
  const double n = static_cast<double>(entries.size());
  return {((q_sum - g_sum) / n).norm(), threshold};
}

}  // namespace qshift
