#pragma once

// Per-query candidate refinement, the source-domain-like queue and the
// constraints (source gap and entropy threshold) estimated from it.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "qshift/embedding.hpp"
#include "qshift/gallery.hpp"

namespace qshift {

struct CandidateRef {
  enum class Source : std::uint8_t { gallery, centroid };
  Source source;
  std::uint32_t index;

  friend bool operator==(const CandidateRef&, const CandidateRef&) = default;
};

/// Candidates for one query. Slot 0 is always the query's 1-NN gallery item
/// (the estimated positive); the remaining slots are negatives.
struct CandidateSet {
  std::size_t query_index = 0;
  GalleryId positive_id = 0;
  std::vector<CandidateRef> refs;
  EmbeddingBatch embeddings;

  std::size_t size() const { return refs.size(); }
};

struct RefinedPrediction {
  Distribution dist;
  /// log(dist) computed directly from the scores.
  Vector log_probs;
  double entropy;
  double positive_prob;
};

/// Candidates of query `i`: its 1-NN, then the top-k neighbours of every
/// other query in batch order, then the centroids. Duplicates keep their
/// first occurrence; the positive never reappears as a negative.
CandidateSet build_candidate_set(const EmbeddingBatch& queries, const Gallery& gallery,
                                 const CentroidSet& centroids, std::size_t k, std::size_t i);

/// build_candidate_set for every query, sharing the neighbour searches.
std::vector<CandidateSet> build_candidate_sets(const EmbeddingBatch& queries, const Gallery& gallery,
                                               const CentroidSet& centroids, std::size_t k);

RefinedPrediction refined_prediction(const VectorRef& query, const CandidateSet& candidates,
                                     double tau);

/// 2||q - pos|| - (||q - q_mean|| + ||pos - pos_mean||). Lower means more
/// source-like.
double source_likeness(const VectorRef& query, const VectorRef& positive, const VectorRef& query_mean,
                       const VectorRef& positive_mean);

struct QueueEntry {
  Vector query_emb;
  Vector positive_emb;
  double score_s = 0.0;
  double entropy_at_enqueue = 0.0;
  /// Insertion order, assigned by update_queue; breaks ties on score_s.
  std::uint64_t sequence = 0;
};

/// The best-scoring (smallest score_s) pairs seen so far, sorted ascending.
class SourceLikeQueue {
 public:
  const std::vector<QueueEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  double max_score() const;

 private:
  friend SourceLikeQueue update_queue(const SourceLikeQueue&, std::vector<QueueEntry>, std::size_t);
  std::vector<QueueEntry> entries_;
  std::uint64_t next_sequence_ = 0;
};

/// Merges new entries and keeps the `capacity` smallest scores. Earlier
/// insertions win ties.
SourceLikeQueue update_queue(const SourceLikeQueue& queue, std::vector<QueueEntry> incoming,
                             std::size_t capacity);

struct ConstraintEstimates {
  double gap_source = 0.0;
  double entropy_threshold = 0.0;
};

ConstraintEstimates estimate_constraints(const SourceLikeQueue& queue);

}  // namespace qshift
