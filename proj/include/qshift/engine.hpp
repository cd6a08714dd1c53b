#pragma once

// An online adaptation session: owns the adapter parameters and the
// source-like queue, and processes a query stream one batch at a time.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string_view>
#include <vector>

#include "qshift/adapter.hpp"
#include "qshift/gallery.hpp"
#include "qshift/objectives.hpp"
#include "qshift/refinement.hpp"

namespace qshift {

enum class Method { rest, tent, pl, none };

Method parse_method(std::string_view name);
std::string_view to_string(Method method);

struct SessionConfig {
  double tau = 0.02;
  std::size_t k = 10;
  std::size_t batch = 64;
  double lr = 1e-3;
  bool decouple = false;
  std::uint64_t seed = 0;
  /// Length of the ranking returned for every query.
  std::size_t ranking_depth = 10;

  void validate() const;
};

struct Diagnostics {
  std::size_t step = 0;
  double objective = 0.0;
  double d_kl = 0.0;
  /// Update weight actually applied (1 when decoupling is off).
  double w_d = 1.0;
  double angle_deg = 90.0;
  bool conflicting = false;
  std::size_t active_count = 0;
  double gap_source = 0.0;
  double entropy_threshold = 0.0;
  double grad_norm = 0.0;
};

struct BatchOutcome {
  std::vector<std::vector<GalleryId>> rankings;
  /// Query embeddings under the post-step parameters (the ones ranked).
  EmbeddingBatch embeddings;
  LossBreakdown loss;
  Diagnostics diagnostics;
};

class Session {
 public:
  Session(std::shared_ptr<const Gallery> gallery, std::shared_ptr<const CentroidSet> centroids,
          SessionConfig config);

  /// Full pipeline: refine, update constraints, compute the robust loss,
  /// decouple, step, rank. Parameters and queue change only on success.
  BatchOutcome adapt_batch(const EmbeddingBatch& raw);

  /// tent: entropy over refined predictions; pl: cross-entropy against the
  /// source model's argmax; none: rank only.
  BatchOutcome run_baseline(const EmbeddingBatch& raw, Method kind);

  BatchOutcome process(const EmbeddingBatch& raw, Method method);

  /// Ranks without touching any state.
  std::vector<std::vector<GalleryId>> rank(const EmbeddingBatch& raw) const;

  const AdapterParams& params() const { return params_; }
  void set_params(AdapterParams params);
  const SourceLikeQueue& queue() const { return queue_; }
  void set_queue(SourceLikeQueue queue) { queue_ = std::move(queue); }
  const SessionConfig& config() const { return config_; }
  const Gallery& gallery() const { return *gallery_; }
  const CentroidSet& centroids() const { return *centroids_; }
  std::size_t steps() const { return steps_; }

 private:
  std::vector<std::vector<GalleryId>> rank_embeddings(const EmbeddingBatch& z) const;
  BatchOutcome finish(const EmbeddingBatch& raw, AdapterParams next, LossBreakdown loss,
                      Diagnostics diag);

  std::shared_ptr<const Gallery> gallery_;
  std::shared_ptr<const CentroidSet> centroids_;
  SessionConfig config_;
  AdapterParams params_;
  SourceLikeQueue queue_;
  std::size_t steps_ = 0;
};

}  // namespace qshift
