#pragma once

// General (KL-to-source) direction and the gradient decoupling rule that
// keeps updates from opposing it.

#include <vector>

#include "qshift/adapter.hpp"
#include "qshift/embedding.hpp"
#include "qshift/objectives.hpp"
#include "qshift/refinement.hpp"

namespace qshift {

struct GeneralDirection {
  Vector grad;
  double kl_value = 0.0;
};

/// Mean KL(source || current) over the batch, in nats.
double kl_divergence(const std::vector<RefinedPrediction>& source,
                     const std::vector<RefinedPrediction>& current);

/// KL value and its gradient over the flattened (gamma, beta) vector. The
/// source predictions must be over the same candidate sets as `problem`.
GeneralDirection kl_general(const std::vector<RefinedPrediction>& source,
                            const std::vector<RefinedPrediction>& current,
                            const PredictionProblem& problem, const AdapterParams& params);

struct DecoupledGradient {
  Vector g_parallel;
  Vector g_perp;
  Vector g_hat;
  double w_d = 1.0;
  /// True when g_d . g_r < 0 and the parallel part was dropped.
  bool conflicting = false;
};

/// Splits g_d into components parallel and orthogonal to g_r, drops the
/// parallel part when it opposes g_r and scales by exp(-kl).
DecoupledGradient decouple(const VectorRef& g_d, const VectorRef& g_r, double kl);

/// Angle between two vectors in degrees; 90 when either is zero.
double angle_degrees(const VectorRef& a, const VectorRef& b);

}  // namespace qshift
