#include "qshift/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "qshift/errors.hpp"

namespace qshift {

EmbeddingBatch::EmbeddingBatch(Matrix rows) : rows_(std::move(rows)) {
  if (!rows_.allFinite()) {
    throw Error(ErrorKind::NonFinite, "embedding batch contains NaN or Inf");
  }
}

EmbeddingBatch::EmbeddingBatch(std::size_t count, std::size_t dim)
    : rows_(Matrix::Zero(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(dim))) {}

bool EmbeddingBatch::is_normalized(double tol) const {
  for (Eigen::Index i = 0; i < rows_.rows(); ++i) {
    if (std::abs(rows_.row(i).norm() - 1.0) > tol) return false;
  }
  return true;
}

EmbeddingBatch EmbeddingBatch::select(const std::vector<std::size_t>& idx) const {
  Matrix out(static_cast<Eigen::Index>(idx.size()), rows_.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= size()) {
      throw Error(ErrorKind::IndexOutOfRange, "row " + std::to_string(idx[r]));
    }
    out.row(static_cast<Eigen::Index>(r)) = rows_.row(static_cast<Eigen::Index>(idx[r]));
  }
  return EmbeddingBatch(std::move(out));
}

EmbeddingBatch EmbeddingBatch::slice(std::size_t begin, std::size_t end) const {
  if (begin > end || end > size()) {
    throw Error(ErrorKind::IndexOutOfRange, "slice out of range");
  }
  return EmbeddingBatch(Matrix(rows_.middleRows(static_cast<Eigen::Index>(begin),
                                                static_cast<Eigen::Index>(end - begin))));
}

Distribution::Distribution(Vector probs) : probs_(std::move(probs)) {
  if (probs_.size() == 0 || !probs_.allFinite()) {
    throw Error(ErrorKind::NonFinite, "distribution must be finite and non-empty");
  }
  if (probs_.minCoeff() < 0.0 || probs_.maxCoeff() > 1.0 + 1e-12 ||
      std::abs(probs_.sum() - 1.0) > 1e-6) {
    throw Error(ErrorKind::NonFinite, "probabilities must lie in [0,1] and sum to 1");
  }
}

Vector l2_normalize(const VectorRef& v) {
  const double n = v.norm();
  if (!(n > kZeroNorm)) {
    throw Error(ErrorKind::ZeroVector, "cannot normalize a vector with norm " + std::to_string(n));
  }
  return v / n;
}

EmbeddingBatch l2_normalize_rows(const EmbeddingBatch& batch) {
  Matrix out(batch.matrix().rows(), batch.matrix().cols());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = l2_normalize(batch.row(i)).transpose();
  }
  return EmbeddingBatch(std::move(out));
}

double cosine_sim(const VectorRef& a, const VectorRef& b) {
  if (a.size() != b.size()) {
    throw Error(ErrorKind::DimMismatch,
                std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  }
  return std::clamp(a.dot(b), -1.0, 1.0);
}

Vector batch_mean(const EmbeddingBatch& batch) {
  if (batch.empty()) throw Error(ErrorKind::EmptyBatch, "mean of an empty batch");
  return batch.matrix().colwise().mean().transpose();
}

Vector log_softmax_temp(const VectorRef& scores, double tau) {
  if (!(tau > 0.0)) throw Error(ErrorKind::NonPositiveTemperature, std::to_string(tau));
  if (scores.size() == 0) throw Error(ErrorKind::EmptyBatch, "softmax over no scores");
  if (!scores.allFinite()) throw Error(ErrorKind::NonFinite, "softmax scores");
  const Vector logits = scores / tau;
  const double top = logits.maxCoeff();
  const double lse = top + std::log((logits.array() - top).exp().sum());
  return (logits.array() - lse).matrix();
}

Distribution softmax_temp(const VectorRef& scores, double tau) {
  if (!(tau > 0.0)) throw Error(ErrorKind::NonPositiveTemperature, std::to_string(tau));
  if (scores.size() == 0) throw Error(ErrorKind::EmptyBatch, "softmax over no scores");
  if (!scores.allFinite()) throw Error(ErrorKind::NonFinite, "softmax scores");
  const Vector logits = scores / tau;
  Vector e = (logits.array() - logits.maxCoeff()).exp().matrix();
  e /= e.sum();
  return Distribution(std::move(e));
}

double shannon_entropy(const Distribution& p) {
  double h = 0.0;
  for (Eigen::Index i = 0; i < p.probs().size(); ++i) {
    const double pi = p.probs()[i];
    if (pi > 0.0) h -= pi * std::log(std::max(pi, kLogFloor));
  }
  return h;
}

}  // namespace qshift
