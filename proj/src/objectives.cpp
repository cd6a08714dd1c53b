#include "qshift/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "qshift/errors.hpp"

namespace qshift {

namespace {

// Distances below this are treated as zero; the exp(-||d||) cusp and the
// ||a - b|| kink get a zero subgradient there.
constexpr double kTinyNorm = 1e-15;

Vector candidate_scores(const VectorRef& z, const CandidateSet& cs) {
  return cs.embeddings.matrix() * z;
}

// dH/ds for H = -sum p_j log(max(p_j, floor)), p = softmax(s / tau).
Vector entropy_score_grad(const Vector& p, double tau) {
  double h = 0.0;
  double mass_above = 0.0;
  Vector logs(p.size());
  for (Eigen::Index j = 0; j < p.size(); ++j) {
    logs[j] = std::log(std::max(p[j], kLogFloor));
    if (p[j] > 0.0) h -= p[j] * logs[j];
    if (p[j] > kLogFloor) mass_above += p[j];
  }
  Vector g(p.size());
  for (Eigen::Index k = 0; k < p.size(); ++k) {
    const double above = p[k] > kLogFloor ? 1.0 : 0.0;
    g[k] = (-p[k] * (logs[k] + h) - p[k] * (above - mass_above)) / tau;
  }
  return g;
}

Vector softmax_probs(const Vector& scores, double tau) { return softmax_temp(scores, tau).probs(); }

void check_problem(const EmbeddingBatch& raw, const std::vector<CandidateSet>& candidates) {
  if (raw.empty()) throw Error(ErrorKind::EmptyBatch, "no queries");
  if (candidates.size() != raw.size()) {
    throw Error(ErrorKind::SizeMismatch, std::to_string(candidates.size()) + " candidate sets for " +
                                             std::to_string(raw.size()) + " queries");
  }
}

std::size_t count_active(const std::vector<double>& w) {
  return static_cast<std::size_t>(std::count_if(w.begin(), w.end(), [](double x) { return x != 0.0; }));
}

struct TermGrad {
  double value = 0.0;
  Matrix dz;
};

TermGrad uniformity_term(const Matrix& z) {
  const auto b = z.rows();
  const Eigen::RowVectorXd center = z.colwise().mean();
  Matrix a = Matrix::Zero(b, z.cols());
  double value = 0.0;
  for (Eigen::Index i = 0; i < b; ++i) {
    const Eigen::RowVectorXd d = z.row(i) - center;
    const double r = d.norm();
    const double e = std::exp(-r);
    value += e;
    if (r > kTinyNorm) a.row(i) = -e / (static_cast<double>(b) * r) * d;
  }
  const Eigen::RowVectorXd mean_a = a.colwise().mean();
  a.rowwise() -= mean_a;
  return {value / static_cast<double>(b), std::move(a)};
}

TermGrad gap_term(const Matrix& z, const Matrix& positives, double delta_s) {
  const auto b = z.rows();
  const Eigen::RowVectorXd diff = z.colwise().mean() - positives.colwise().mean();
  const double delta_t = diff.norm();
  Matrix dz = Matrix::Zero(b, z.cols());
  if (delta_t > kTinyNorm) {
    const Eigen::RowVectorXd g = 2.0 * (delta_t - delta_s) / (delta_t * static_cast<double>(b)) * diff;
    dz.rowwise() = g;
  }
  return {(delta_t - delta_s) * (delta_t - delta_s), std::move(dz)};
}

}  // namespace

double consistency(double cosine) { return std::clamp((1.0 + cosine) / 2.0, kLogFloor, 1.0); }

double loss_uniformity(const EmbeddingBatch& z) {
  if (z.empty()) throw Error(ErrorKind::EmptyBatch, "uniformity of an empty batch");
  return uniformity_term(z.matrix()).value;
}

double loss_gap(const EmbeddingBatch& z_q, const EmbeddingBatch& z_pos, double delta_s) {
  if (z_q.size() != z_pos.size()) {
    throw Error(ErrorKind::SizeMismatch, std::to_string(z_q.size()) + " queries vs " +
                                             std::to_string(z_pos.size()) + " positives");
  }
  if (z_q.empty()) throw Error(ErrorKind::EmptyBatch, "gap of an empty batch");
  if (z_q.dim() != z_pos.dim()) throw Error(ErrorKind::DimMismatch, "gap operands");
  const double delta_t = (batch_mean(z_q) - batch_mean(z_pos)).norm();
  return (delta_t - delta_s) * (delta_t - delta_s);
}

std::vector<double> robust_weights(const std::vector<double>& entropies, double e_b) {
  if (!(e_b > 0.0)) throw Error(ErrorKind::NonPositiveThreshold, std::to_string(e_b));
  std::vector<double> w(entropies.size());
  std::transform(entropies.begin(), entropies.end(), w.begin(),
                 [e_b](double e) { return std::max(1.0 - e / e_b, 0.0); });
  return w;
}

RobustLoss loss_rem(const std::vector<RefinedPrediction>& preds, double e_b) {
  std::vector<double> entropies;
  for (const auto& p : preds) entropies.push_back(p.entropy);
  RobustLoss out;
  out.weights = robust_weights(entropies, e_b);
  out.active_count = count_active(out.weights);
  if (out.active_count == 0) return out;
  double acc = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) acc += out.weights[i] * entropies[i];
  out.value = acc / static_cast<double>(out.active_count);
  return out;
}

double loss_rhm(const std::vector<RefinedPrediction>& preds, const std::vector<ConsistencyPair>& pairs,
                double e_b) {
  if (preds.size() != pairs.size()) throw Error(ErrorKind::SizeMismatch, "predictions vs pairs");
  std::vector<double> entropies;
  for (const auto& p : preds) entropies.push_back(p.entropy);
  const auto w = robust_weights(entropies, e_b);
  const auto active = count_active(w);
  if (active == 0) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    acc += w[i] * (-std::log(pairs[i].c_pos) + std::log(pairs[i].c_hardneg));
  }
  return acc / static_cast<double>(active);
}

ConsistencyPair consistency_pair(const VectorRef& query, const CandidateSet& candidates) {
  if (candidates.size() < 2) {
    throw Error(ErrorKind::TooFewCandidates, std::to_string(candidates.size()) + " candidates");
  }
  if (static_cast<std::size_t>(query.size()) != candidates.embeddings.dim()) {
    throw Error(ErrorKind::DimMismatch, "query vs candidates");
  }
  ConsistencyPair out{consistency(cosine_sim(query, candidates.embeddings.row(0))), 0.0, 0};
  double best = -1.0;
  for (std::size_t s = 1; s < candidates.size(); ++s) {
    const double c = consistency(cosine_sim(query, candidates.embeddings.row(s)));
    if (c > best) {
      best = c;
      out.hardneg_slot = s;
    }
  }
  out.c_hardneg = best;
  return out;
}

double loss_em(const std::vector<RefinedPrediction>& preds) {
  if (preds.empty()) throw Error(ErrorKind::EmptyBatch, "entropy of no predictions");
  double acc = 0.0;
  for (const auto& p : preds) acc += p.entropy;
  return acc / static_cast<double>(preds.size());
}

RestProblem freeze_rest_problem(const AdapterParams& params, const EmbeddingBatch& raw,
                                std::vector<CandidateSet> candidates, double tau,
                                const ConstraintEstimates& constraints) {
  check_problem(raw, candidates);
  const EmbeddingBatch z = forward_adapter(params, raw);

  RestProblem p;
  p.raw = raw;
  p.tau = tau;
  p.gap_source = constraints.gap_source;

  std::vector<double> entropies;
  Matrix positives(static_cast<Eigen::Index>(raw.size()), static_cast<Eigen::Index>(raw.dim()));
  for (std::size_t i = 0; i < raw.size(); ++i) {
    entropies.push_back(refined_prediction(z.row(i), candidates[i], tau).entropy);
    p.hardneg_slots.push_back(consistency_pair(z.row(i), candidates[i]).hardneg_slot);
    positives.row(static_cast<Eigen::Index>(i)) = candidates[i].embeddings.matrix().row(0);
  }
  p.weights = constraints.entropy_threshold > 0.0
                  ? robust_weights(entropies, constraints.entropy_threshold)
                  : std::vector<double>(raw.size(), 0.0);
  p.active_count = count_active(p.weights);
  p.positives = EmbeddingBatch(std::move(positives));
  p.candidates = std::move(candidates);
  return p;
}

RestEvaluation evaluate_rest(const AdapterParams& params, const RestProblem& problem) {
  check_problem(problem.raw, problem.candidates);
  const AdapterForward fwd = forward_adapter_with_norms(params, problem.raw);
  const Matrix& z = fwd.z.matrix();
  const auto b = z.rows();

  RestEvaluation out;
  out.loss.active_count = problem.active_count;

  TermGrad uni = uniformity_term(z);
  out.loss.l_u = uni.value;
  out.grad_u = adapter_backward(problem.raw, fwd, uni.dz);

  TermGrad gap = gap_term(z, problem.positives.matrix(), problem.gap_source);
  out.loss.l_g = gap.value;
  out.grad_g = adapter_backward(problem.raw, fwd, gap.dz);

  Matrix dz_rem = Matrix::Zero(b, z.cols());
  Matrix dz_rhm = Matrix::Zero(b, z.cols());
  if (problem.active_count > 0) {
    const double norm = 1.0 / static_cast<double>(problem.active_count);
    for (Eigen::Index i = 0; i < b; ++i) {
      const double w = problem.weights[static_cast<std::size_t>(i)];
      if (w == 0.0) continue;
      const CandidateSet& cs = problem.candidates[static_cast<std::size_t>(i)];
      const Matrix& e = cs.embeddings.matrix();
      const Vector zi = z.row(i).transpose();

      const Vector scores = candidate_scores(zi, cs);
      const Vector p = softmax_probs(scores, problem.tau);
      out.loss.l_rem += w * norm * shannon_entropy(Distribution(p));
      dz_rem.row(i) = (w * norm * (e.transpose() * entropy_score_grad(p, problem.tau))).transpose();

      // H = -log c_pos + log c_hard with c = clamp((1 + cos) / 2).
      const auto hard = static_cast<Eigen::Index>(problem.hardneg_slots[static_cast<std::size_t>(i)]);
      const double cos_pos = scores[0];
      const double cos_hard = scores[hard];
      const double c_pos = consistency(cos_pos);
      const double c_hard = consistency(cos_hard);
      out.loss.l_rhm += w * norm * (-std::log(c_pos) + std::log(c_hard));
      const auto slope = [](double cosine) {
        const double raw_c = (1.0 + cosine) / 2.0;
        return raw_c > kLogFloor && raw_c <= 1.0 ? 0.5 / raw_c : 0.0;
      };
      dz_rhm.row(i) = w * norm * (-slope(cos_pos) * e.row(0) + slope(cos_hard) * e.row(hard));
    }
  }
  out.grad_rem = adapter_backward(problem.raw, fwd, dz_rem);
  out.grad_rhm = adapter_backward(problem.raw, fwd, dz_rhm);

  out.loss.l_total = out.loss.l_u + out.loss.l_g + out.loss.l_rem + out.loss.l_rhm;
  out.grad_total = out.grad_u;
  out.grad_total += out.grad_g;
  out.grad_total += out.grad_rem;
  out.grad_total += out.grad_rhm;
  return out;
}

std::vector<RefinedPrediction> predict(const AdapterParams& params, const PredictionProblem& problem) {
  check_problem(problem.raw, problem.candidates);
  const EmbeddingBatch z = forward_adapter(params, problem.raw);
  std::vector<RefinedPrediction> out;
  out.reserve(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    out.push_back(refined_prediction(z.row(i), problem.candidates[i], problem.tau));
  }
  return out;
}

ObjectiveValue evaluate_em(const AdapterParams& params, const PredictionProblem& problem) {
  check_problem(problem.raw, problem.candidates);
  const AdapterForward fwd = forward_adapter_with_norms(params, problem.raw);
  const Matrix& z = fwd.z.matrix();
  const double inv_b = 1.0 / static_cast<double>(z.rows());
  Matrix dz(z.rows(), z.cols());
  double value = 0.0;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const auto& cs = problem.candidates[static_cast<std::size_t>(i)];
    const Vector p = softmax_probs(candidate_scores(z.row(i).transpose(), cs), problem.tau);
    value += inv_b * shannon_entropy(Distribution(p));
    dz.row(i) = inv_b * (cs.embeddings.matrix().transpose() * entropy_score_grad(p, problem.tau)).transpose();
  }
  return {value, adapter_backward(problem.raw, fwd, dz)};
}

ObjectiveValue evaluate_pl(const AdapterParams& params, const PredictionProblem& problem,
                           const std::vector<std::size_t>& labels) {
  check_problem(problem.raw, problem.candidates);
  if (labels.size() != problem.raw.size()) throw Error(ErrorKind::SizeMismatch, "pseudo-labels");
  const AdapterForward fwd = forward_adapter_with_norms(params, problem.raw);
  const Matrix& z = fwd.z.matrix();
  const double inv_b = 1.0 / static_cast<double>(z.rows());
  Matrix dz(z.rows(), z.cols());
  double value = 0.0;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const auto& cs = problem.candidates[static_cast<std::size_t>(i)];
    const auto y = labels[static_cast<std::size_t>(i)];
    if (y >= cs.size()) throw Error(ErrorKind::IndexOutOfRange, "pseudo-label slot");
    const Vector scores = candidate_scores(z.row(i).transpose(), cs);
    const Vector logp = log_softmax_temp(scores, problem.tau);
    value -= inv_b * logp[static_cast<Eigen::Index>(y)];
    Vector gs = logp.array().exp().matrix();
    gs[static_cast<Eigen::Index>(y)] -= 1.0;
    dz.row(i) = (inv_b / problem.tau) * (cs.embeddings.matrix().transpose() * gs).transpose();
  }
  return {value, adapter_backward(problem.raw, fwd, dz)};
}

ObjectiveValue evaluate_kl(const AdapterParams& params, const PredictionProblem& problem,
                           const std::vector<RefinedPrediction>& source) {
  check_problem(problem.raw, problem.candidates);
  if (source.size() != problem.raw.size()) throw Error(ErrorKind::SupportMismatch, "source batch size");
  const AdapterForward fwd = forward_adapter_with_norms(params, problem.raw);
  const Matrix& z = fwd.z.matrix();
  const double inv_b = 1.0 / static_cast<double>(z.rows());
  Matrix dz(z.rows(), z.cols());
  double value = 0.0;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const auto& cs = problem.candidates[static_cast<std::size_t>(i)];
    const auto& src = source[static_cast<std::size_t>(i)];
    if (src.dist.size() != cs.size()) throw Error(ErrorKind::SupportMismatch, "candidate sets differ");
    const Vector logp = log_softmax_temp(candidate_scores(z.row(i).transpose(), cs), problem.tau);
    for (Eigen::Index j = 0; j < logp.size(); ++j) {
      const double ps = src.dist.probs()[j];
      if (ps > 0.0) value += inv_b * ps * (src.log_probs[j] - logp[j]);
    }
    const Vector gs = logp.array().exp().matrix() - src.dist.probs();
    dz.row(i) = (inv_b / problem.tau) * (cs.embeddings.matrix().transpose() * gs).transpose();
  }
  return {value, adapter_backward(problem.raw, fwd, dz)};
}

Vector finite_diff_grad(const std::function<double(const Vector&)>& f, const VectorRef& theta, double h) {
  Vector x = theta;
  Vector g(theta.size());
  for (Eigen::Index k = 0; k < theta.size(); ++k) {
    const double saved = x[k];
    x[k] = saved + h;
    const double up = f(x);
    x[k] = saved - h;
    const double down = f(x);
    x[k] = saved;
    g[k] = (up - down) / (2.0 * h);
  }
  return g;
}

double relative_error(const VectorRef& analytic, const VectorRef& numeric, double floor) {
  if (analytic.size() != numeric.size()) throw Error(ErrorKind::LengthMismatch, "gradient lengths");
  const double scale = std::max({analytic.norm(), numeric.norm(), floor});
  return (analytic - numeric).norm() / scale;
}

}  // namespace qshift
