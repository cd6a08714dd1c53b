#pragma once

// Query-shift-robust objective: uniformity, gap and consistency terms, the
// plain entropy and pseudo-label baselines, and their analytic gradients
// with respect to the adapter parameters.

#include <cstddef>
#include <functional>
#include <vector>

#include "qshift/adapter.hpp"
#include "qshift/embedding.hpp"
#include "qshift/refinement.hpp"

namespace qshift {

struct LossBreakdown {
  double l_u = 0.0;
  double l_g = 0.0;
  double l_rem = 0.0;
  double l_rhm = 0.0;
  double l_total = 0.0;
  std::size_t active_count = 0;
};

struct ConsistencyPair {
  double c_pos;
  double c_hardneg;
  std::size_t hardneg_slot;
};

/// Maps a cosine onto [kLogFloor, 1] via (1 + cos) / 2.
double consistency(double cosine);

/// Mean of exp(-||z_i - z_mean||).
double loss_uniformity(const EmbeddingBatch& z);

/// (||mean(z_q) - mean(z_pos)|| - delta_s)^2.
double loss_gap(const EmbeddingBatch& z_q, const EmbeddingBatch& z_pos, double delta_s);

/// W_i = max(1 - E_i / e_b, 0). Throws NonPositiveThreshold for e_b <= 0.
std::vector<double> robust_weights(const std::vector<double>& entropies, double e_b);

struct RobustLoss {
  double value = 0.0;
  std::vector<double> weights;
  std::size_t active_count = 0;
};

/// Weighted entropy over the queries with nonzero weight; zero when every
/// query is filtered out.
RobustLoss loss_rem(const std::vector<RefinedPrediction>& preds, double e_b);

/// Same weighting as loss_rem applied to -log c_pos + log c_hardneg.
double loss_rhm(const std::vector<RefinedPrediction>& preds, const std::vector<ConsistencyPair>& pairs,
                double e_b);

ConsistencyPair consistency_pair(const VectorRef& query, const CandidateSet& candidates);

/// Mean entropy across the batch.
double loss_em(const std::vector<RefinedPrediction>& preds);

/// Everything a REST loss evaluation needs besides the parameters. The
/// discrete structure (candidates, filter weights, hard negatives, source
/// gap) is frozen at construction and receives no gradient.
struct RestProblem {
  EmbeddingBatch raw;
  std::vector<CandidateSet> candidates;
  double tau = 0.02;
  double gap_source = 0.0;
  std::vector<double> weights;
  std::size_t active_count = 0;
  std::vector<std::size_t> hardneg_slots;
  /// Slot-0 embedding of every query.
  EmbeddingBatch positives;
};

/// Freezes the discrete structure at `params`. A non-positive entropy
/// threshold filters out every query.
RestProblem freeze_rest_problem(const AdapterParams& params, const EmbeddingBatch& raw,
                                std::vector<CandidateSet> candidates, double tau,
                                const ConstraintEstimates& constraints);

struct RestEvaluation {
  LossBreakdown loss;
  ParamGradient grad_u;
  ParamGradient grad_g;
  ParamGradient grad_rem;
  ParamGradient grad_rhm;
  ParamGradient grad_total;
};

RestEvaluation evaluate_rest(const AdapterParams& params, const RestProblem& problem);

/// Candidates plus inputs for the prediction-only objectives.
struct PredictionProblem {
  EmbeddingBatch raw;
  std::vector<CandidateSet> candidates;
  double tau = 0.02;
};

struct ObjectiveValue {
  double value = 0.0;
  ParamGradient grad;
};

/// Entropy minimization over refined predictions.
ObjectiveValue evaluate_em(const AdapterParams& params, const PredictionProblem& problem);

/// Cross-entropy against fixed pseudo-labels (candidate slots).
ObjectiveValue evaluate_pl(const AdapterParams& params, const PredictionProblem& problem,
                           const std::vector<std::size_t>& labels);

/// KL(source || current) averaged over the batch, source predictions fixed.
ObjectiveValue evaluate_kl(const AdapterParams& params, const PredictionProblem& problem,
                           const std::vector<RefinedPrediction>& source);

/// Predictions of every query in `problem` under `params`.
std::vector<RefinedPrediction> predict(const AdapterParams& params, const PredictionProblem& problem);

/// Central differences (f(x + h e_k) - f(x - h e_k)) / 2h per coordinate.
Vector finite_diff_grad(const std::function<double(const Vector&)>& f, const VectorRef& theta,
                        double h = 1e-5);

/// ||a - b|| / max(||a||, ||b||, floor).
double relative_error(const VectorRef& analytic, const VectorRef& numeric, double floor = 1e-8);

}  // namespace qshift
