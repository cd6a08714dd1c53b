#include "qshift/decouple.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "qshift/errors.hpp"

namespace qshift {

namespace {
constexpr double kDegenerateNorm2 = 1e-24;
}

double kl_divergence(const std::vector<RefinedPrediction>& source,
                     const std::vector<RefinedPrediction>& current) {
  if (source.size() != current.size()) throw Error(ErrorKind::SupportMismatch, "batch sizes differ");
  if (source.empty()) throw Error(ErrorKind::EmptyBatch, "KL over no predictions");
  double acc = 0.0;
  for (std::size_t i = 0; i < source.size(); ++i) {
    const auto& s = source[i];
    const auto& c = current[i];
    if (s.dist.size() != c.dist.size()) {
      throw Error(ErrorKind::SupportMismatch, "query " + std::to_string(i) + " candidate sets differ");
    }
    for (Eigen::Index j = 0; j < s.log_probs.size(); ++j) {
      const double ps = s.dist.probs()[j];
      if (ps > 0.0) acc += ps * (s.log_probs[j] - c.log_probs[j]);
    }
  }
  return acc / static_cast<double>(source.size());
}

GeneralDirection kl_general(const std::vector<RefinedPrediction>& source,
                            const std::vector<RefinedPrediction>& current,
                            const PredictionProblem& problem, const AdapterParams& params) {
  const double value = kl_divergence(source, current);
  ObjectiveValue kl = evaluate_kl(params, problem, source);
  return {kl.grad.flatten(), value};
}

DecoupledGradient decouple(const VectorRef& g_d, const VectorRef& g_r, double kl) {
  if (g_d.size() != g_r.size()) {
    throw Error(ErrorKind::LengthMismatch,
                std::to_string(g_d.size()) + " vs " + std::to_string(g_r.size()));
  }
  DecoupledGradient out;
  out.w_d = std::exp(-std::max(kl, 0.0));
  const double rr = g_r.squaredNorm();
  if (rr < kDegenerateNorm2) {
    // No general direction to protect.
    out.g_parallel = Vector::Zero(g_d.size());
    out.g_perp = g_d;
    out.g_hat = out.w_d * g_d;
    return out;
  }
  const double dot = g_d.dot(g_r);
  out.g_parallel = (dot / rr) * g_r;
  out.g_perp = g_d - out.g_parallel;
  out.conflicting = dot < 0.0;
  out.g_hat = out.conflicting ? Vector(out.w_d * out.g_perp)
                              : Vector(out.w_d * out.g_perp + out.w_d * out.g_parallel);
  return out;
}

double angle_degrees(const VectorRef& a, const VectorRef& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (!(na > 0.0) || !(nb > 0.0)) return 90.0;
  return std::acos(std::clamp(a.dot(b) / (na * nb), -1.0, 1.0)) * 180.0 / std::numbers::pi;
}

}  // namespace qshift
