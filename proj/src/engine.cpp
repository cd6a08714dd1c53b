#include "qshift/engine.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "qshift/decouple.hpp"
#include "qshift/errors.hpp"

namespace qshift {

Method parse_method(std::string_view name) {
  if (name == "rest") return Method::rest;
  if (name == "tent") return Method::tent;
  if (name == "pl") return Method::pl;
  if (name == "none") return Method::none;
  throw Error(ErrorKind::UnknownBaseline, std::string(name));
}

std::string_view to_string(Method method) {
  switch (method) {
    case Method::rest: return "rest";
    case Method::tent: return "tent";
    case Method::pl: return "pl";
    case Method::none: return "none";
  }
  return "unknown";
}

void SessionConfig::validate() const {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw Error(ErrorKind::NonPositiveTemperature, std::to_string(tau));
  if (k < 1) throw Error(ErrorKind::InvalidK, "k must be at least 1");
  if (batch < 1) throw Error(ErrorKind::InvalidSpec, "batch must be at least 1");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw Error(ErrorKind::InvalidSpec, "learning rate must be positive and finite");
  if (ranking_depth < 1) throw Error(ErrorKind::InvalidSpec, "ranking depth must be at least 1");
}

Session::Session(std::shared_ptr<const Gallery> gallery, std::shared_ptr<const CentroidSet> centroids,
                 SessionConfig config)
    : gallery_(std::move(gallery)),
      centroids_(std::move(centroids)),
      config_(config),
      params_(AdapterParams::identity(gallery_->dim())) {
  config_.validate();
  if (gallery_->size() < config_.k + 1) {
    throw Error(ErrorKind::InvalidK, "gallery of " + std::to_string(gallery_->size()) +
                                         " items cannot serve k=" + std::to_string(config_.k));
  }
  if (centroids_->centroids.dim() != gallery_->dim()) {
    throw Error(ErrorKind::DimMismatch, "centroids vs gallery");
  }
  config_.ranking_depth = std::min(config_.ranking_depth, gallery_->size());
}

void Session::set_params(AdapterParams params) {
  if (params.dim() != gallery_->dim() || params.beta.size() != params.gamma.size()) {
    throw Error(ErrorKind::DimMismatch, "adapter parameters");
  }
  if (!params.gamma.allFinite() || !params.beta.allFinite()) {
    throw Error(ErrorKind::NonFinite, "adapter parameters");
  }
  params_ = std::move(params);
}

std::vector<std::vector<GalleryId>> Session::rank_embeddings(const EmbeddingBatch& z) const {
  std::vector<std::vector<GalleryId>> out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = knn_ids(*gallery_, z.row(i), config_.ranking_depth);
  return out;
}

std::vector<std::vector<GalleryId>> Session::rank(const EmbeddingBatch& raw) const {
  return rank_embeddings(forward_adapter(params_, raw));
}

BatchOutcome Session::finish(const EmbeddingBatch& raw, AdapterParams next, LossBreakdown loss,
                             Diagnostics diag) {
  if (!next.gamma.allFinite() || !next.beta.allFinite()) {
    throw Error(ErrorKind::NonFinite, "update produced non-finite parameters");
  }
  BatchOutcome out;
  out.embeddings = forward_adapter(next, raw);
  out.rankings = rank_embeddings(out.embeddings);
  out.loss = loss;
  diag.step = steps_;
  out.diagnostics = diag;
  params_ = std::move(next);
  ++steps_;
  return out;
}

BatchOutcome Session::adapt_batch(const EmbeddingBatch& raw) {
  if (raw.empty()) throw Error(ErrorKind::EmptyBatch, "empty query batch");
  const EmbeddingBatch z = forward_adapter(params_, raw);
  std::vector<CandidateSet> candidates = build_candidate_sets(z, *gallery_, *centroids_, config_.k);

  const PredictionProblem prediction{raw, candidates, config_.tau};
  const auto current = predict(params_, prediction);
  const auto source = predict(AdapterParams::identity(raw.dim()), prediction);

  Matrix positives(static_cast<Eigen::Index>(raw.size()), static_cast<Eigen::Index>(raw.dim()));
  for (std::size_t i = 0; i < raw.size(); ++i) {
    positives.row(static_cast<Eigen::Index>(i)) = candidates[i].embeddings.matrix().row(0);
  }
  const Vector query_mean = batch_mean(z);
  const Vector positive_mean = positives.colwise().mean().transpose();
  std::vector<QueueEntry> entries;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const Vector q = z.row(i);
    const Vector pos = positives.row(static_cast<Eigen::Index>(i)).transpose();
    entries.push_back({q, pos, source_likeness(q, pos, query_mean, positive_mean), current[i].entropy, 0});
  }
  SourceLikeQueue next_queue = update_queue(queue_, std::move(entries), config_.batch);
  const ConstraintEstimates constraints = estimate_constraints(next_queue);

  const RestProblem problem = freeze_rest_problem(params_, raw, std::move(candidates), config_.tau, constraints);
  const RestEvaluation eval = evaluate_rest(params_, problem);
  const Vector g_d = eval.grad_total.flatten();

  const GeneralDirection general = kl_general(source, current, prediction, params_);
  Diagnostics diag;
  diag.objective = eval.loss.l_total;
  diag.d_kl = general.kl_value;
  diag.angle_deg = angle_degrees(g_d, general.grad);
  diag.active_count = eval.loss.active_count;
  diag.gap_source = constraints.gap_source;
  diag.entropy_threshold = constraints.entropy_threshold;

  Vector update = g_d;
  if (config_.decouple) {
    const DecoupledGradient dec = decouple(g_d, general.grad, general.kl_value);
    update = dec.g_hat;
    diag.w_d = dec.w_d;
    diag.conflicting = dec.conflicting;
  }
  diag.grad_norm = update.norm();

  BatchOutcome out = finish(raw, sgd_step(params_, update, config_.lr), eval.loss, diag);
  queue_ = std::move(next_queue);
  return out;
}

BatchOutcome Session::run_baseline(const EmbeddingBatch& raw, Method kind) {
  if (raw.empty()) throw Error(ErrorKind::EmptyBatch, "empty query batch");
  if (kind == Method::rest) throw Error(ErrorKind::UnknownBaseline, "rest is not a baseline");
  if (kind == Method::none) {
    // Validates the batch and leaves the parameters bitwise untouched.
    return finish(raw, params_, {}, {});
  }

  const EmbeddingBatch z = forward_adapter(params_, raw);
  const PredictionProblem prediction{raw, build_candidate_sets(z, *gallery_, *centroids_, config_.k),
                                     config_.tau};
  const auto current = predict(params_, prediction);
  const auto source = predict(AdapterParams::identity(raw.dim()), prediction);

  ObjectiveValue objective;
  if (kind == Method::tent) {
    objective = evaluate_em(params_, prediction);
  } else {
    std::vector<std::size_t> labels;
    for (const auto& s : source) {
      Eigen::Index arg = 0;
      s.dist.probs().maxCoeff(&arg);
      labels.push_back(static_cast<std::size_t>(arg));
    }
    objective = evaluate_pl(params_, prediction, labels);
  }
  const Vector g = objective.grad.flatten();
  const GeneralDirection general = kl_general(source, current, prediction, params_);

  Diagnostics diag;
  diag.objective = objective.value;
  diag.d_kl = general.kl_value;
  diag.angle_deg = angle_degrees(g, general.grad);
  diag.grad_norm = g.norm();
  return finish(raw, sgd_step(params_, g, config_.lr), {}, diag);
}

BatchOutcome Session::process(const EmbeddingBatch& raw, Method method) {
  return method == Method::rest ? adapt_batch(raw) : run_baseline(raw, method);
}

}  // namespace qshift
