#pragma once

// Dense-vector primitives shared by every other module.

#include <Eigen/Dense>

#include <cstddef>
#include <vector>

namespace qshift {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using VectorRef = Eigen::Ref<const Vector>;

inline constexpr double kNormTolerance = 1e-6;
inline constexpr double kZeroNorm = 1e-12;
// Probabilities are floored here before any logarithm.
inline constexpr double kLogFloor = 1e-12;

/// An ordered set of D-dimensional rows (queries or candidates).
///
/// Entries are always finite. Rows are not required to be unit norm;
/// operations that need normalized input check it themselves.
class EmbeddingBatch {
 public:
  EmbeddingBatch() = default;
  explicit EmbeddingBatch(Matrix rows);
  EmbeddingBatch(std::size_t count, std::size_t dim);

  std::size_t size() const { return static_cast<std::size_t>(rows_.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(rows_.cols()); }
  bool empty() const { return rows_.rows() == 0; }

  auto row(std::size_t i) const { return rows_.row(static_cast<Eigen::Index>(i)).transpose(); }
  const Matrix& matrix() const { return rows_; }

  bool is_normalized(double tol = kNormTolerance) const;

  /// Rows at the given positions, in order.
  EmbeddingBatch select(const std::vector<std::size_t>& idx) const;
  /// Rows [begin, end).
  EmbeddingBatch slice(std::size_t begin, std::size_t end) const;

 private:
  Matrix rows_;
};

/// A probability vector over M candidates.
class Distribution {
 public:
  explicit Distribution(Vector probs);

  const Vector& probs() const { return probs_; }
  std::size_t size() const { return static_cast<std::size_t>(probs_.size()); }
  double operator[](std::size_t i) const { return probs_[static_cast<Eigen::Index>(i)]; }

 private:
  Vector probs_;
};

Vector l2_normalize(const VectorRef& v);
EmbeddingBatch l2_normalize_rows(const EmbeddingBatch& batch);

/// Dot product of two unit vectors, clamped to [-1, 1].
double cosine_sim(const VectorRef& a, const VectorRef& b);

/// Arithmetic mean of the rows. Not re-projected onto the sphere.
Vector batch_mean(const EmbeddingBatch& batch);

/// Softmax of scores / tau with max subtraction.
Distribution softmax_temp(const VectorRef& scores, double tau);

/// Log-probabilities of softmax(scores / tau), computed without exp/log round trip.
Vector log_softmax_temp(const VectorRef& scores, double tau);

/// Natural-log entropy with 0 log 0 := 0 and probabilities floored at kLogFloor.
double shannon_entropy(const Distribution& p);

}  // namespace qshift
