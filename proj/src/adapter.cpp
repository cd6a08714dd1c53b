#include "qshift/adapter.hpp"

#include <string>

#include "qshift/errors.hpp"

namespace qshift {

AdapterParams AdapterParams::identity(std::size_t dim) {
  const auto d = static_cast<Eigen::Index>(dim);
  return {Vector::Ones(d), Vector::Zero(d)};
}

bool AdapterParams::is_identity() const {
  return (gamma.array() == 1.0).all() && (beta.array() == 0.0).all();
}

Vector AdapterParams::flatten() const {
  Vector theta(gamma.size() + beta.size());
  theta << gamma, beta;
  return theta;
}

AdapterParams AdapterParams::unflatten(const VectorRef& theta) {
  if (theta.size() % 2 != 0) throw Error(ErrorKind::LengthMismatch, "odd parameter vector");
  const auto d = theta.size() / 2;
  return {theta.head(d), theta.tail(d)};
}

ParamGradient ParamGradient::zero(std::size_t dim) {
  const auto d = static_cast<Eigen::Index>(dim);
  return {Vector::Zero(d), Vector::Zero(d)};
}

Vector ParamGradient::flatten() const {
  Vector g(d_gamma.size() + d_beta.size());
  g << d_gamma, d_beta;
  return g;
}

ParamGradient ParamGradient::unflatten(const VectorRef& g) {
  if (g.size() % 2 != 0) throw Error(ErrorKind::LengthMismatch, "odd gradient vector");
  const auto d = g.size() / 2;
  return {g.head(d), g.tail(d)};
}

ParamGradient& ParamGradient::operator+=(const ParamGradient& other) {
  d_gamma += other.d_gamma;
  d_beta += other.d_beta;
  return *this;
}

AdapterForward forward_adapter_with_norms(const AdapterParams& params, const EmbeddingBatch& raw) {
  if (params.gamma.size() != params.beta.size() || params.dim() != raw.dim()) {
    throw Error(ErrorKind::DimMismatch, "adapter dim " + std::to_string(params.dim()) +
                                            " vs input dim " + std::to_string(raw.dim()));
  }
  const auto b = static_cast<Eigen::Index>(raw.size());
  Matrix z(b, raw.matrix().cols());
  Vector norms(b);
  for (Eigen::Index i = 0; i < b; ++i) {
    const Vector u = params.gamma.cwiseProduct(raw.matrix().row(i).transpose()) + params.beta;
    const double n = u.norm();
    if (!(n > kZeroNorm)) {
      throw Error(ErrorKind::ZeroVector, "adapted query " + std::to_string(i) + " vanishes");
    }
    norms[i] = n;
    z.row(i) = (u / n).transpose();
  }
  return {EmbeddingBatch(std::move(z)), std::move(norms)};
}

EmbeddingBatch forward_adapter(const AdapterParams& params, const EmbeddingBatch& raw) {
  return forward_adapter_with_norms(params, raw).z;
}

ParamGradient adapter_backward(const EmbeddingBatch& raw, const AdapterForward& fwd, const Matrix& dz) {
  const Matrix& z = fwd.z.matrix();
  ParamGradient g = ParamGradient::zero(raw.dim());
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const Vector zi = z.row(i).transpose();
    const Vector gi = dz.row(i).transpose();
    const Vector du = (gi - zi * zi.dot(gi)) / fwd.norms[i];
    g.d_gamma += du.cwiseProduct(raw.matrix().row(i).transpose());
    g.d_beta += du;
  }
  return g;
}

AdapterParams sgd_step(const AdapterParams& params, const VectorRef& g, double lr) {
  if (static_cast<std::size_t>(g.size()) != 2 * params.dim()) {
    throw Error(ErrorKind::LengthMismatch, "gradient length " + std::to_string(g.size()));
  }
  return AdapterParams::unflatten(params.flatten() - lr * g);
}

}  // namespace qshift
