#pragma once

// Per-dimension affine head applied to raw query vectors before
// normalization: z = normalize(gamma * x + beta). This is the learnable
// surface of an adaptation session.

#include <cstddef>

#include "qshift/embedding.hpp"

namespace qshift {

struct AdapterParams {
  Vector gamma;
  Vector beta;

  static AdapterParams identity(std::size_t dim);

  std::size_t dim() const { return static_cast<std::size_t>(gamma.size()); }
  bool is_identity() const;

  /// [gamma_0 .. gamma_{D-1}, beta_0 .. beta_{D-1}]
  Vector flatten() const;
  static AdapterParams unflatten(const VectorRef& theta);
};

struct ParamGradient {
  Vector d_gamma;
  Vector d_beta;

  static ParamGradient zero(std::size_t dim);

  Vector flatten() const;
  static ParamGradient unflatten(const VectorRef& g);
  ParamGradient& operator+=(const ParamGradient& other);
};

/// Output of the head together with the pre-normalization norms needed by
/// the backward pass.
struct AdapterForward {
  EmbeddingBatch z;
  Vector norms;
};

AdapterForward forward_adapter_with_norms(const AdapterParams& params, const EmbeddingBatch& raw);
EmbeddingBatch forward_adapter(const AdapterParams& params, const EmbeddingBatch& raw);

/// Pulls a gradient with respect to the normalized outputs back to
/// (gamma, beta) through the exact Jacobian (I - z z^T) / ||u||.
ParamGradient adapter_backward(const EmbeddingBatch& raw, const AdapterForward& fwd, const Matrix& dz);

/// theta <- theta - lr * g over the flattened parameter vector.
AdapterParams sgd_step(const AdapterParams& params, const VectorRef& g, double lr);

}  // namespace qshift
