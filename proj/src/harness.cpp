#include "qshift/harness.hpp"

#include <algorithm>
#include <chrono>

#include "qshift/decouple.hpp"
#include "qshift/engine.hpp"
#include "qshift/errors.hpp"
#include "qshift/io.hpp"
#include "qshift/objectives.hpp"
#include "qshift/random.hpp"
#include "qshift/refinement.hpp"
#include "qshift/shift_lab.hpp"

namespace qshift {

using nlohmann::json;

namespace {

constexpr std::uint64_t kCorruptionLabel = 0xC0;
constexpr double kGradcheckFloor = 1e-6;

json metrics_json(const MetricsReport& m) {
  return {{"recall_1", m.recall_1},     {"recall_5", m.recall_5}, {"recall_10", m.recall_10},
          {"uniformity", m.uniformity}, {"gap", m.gap},           {"consistency", m.consistency},
          {"delta_t", m.delta_t}};
}

json vector_json(const Vector& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

GroundTruth slice_truth(const GroundTruth& gt, std::size_t begin, std::size_t end) {
  return {{gt.relevant.begin() + static_cast<std::ptrdiff_t>(begin),
           gt.relevant.begin() + static_cast<std::ptrdiff_t>(end)}};
}

std::vector<std::vector<GalleryId>> rank_all(const Gallery& gallery, const EmbeddingBatch& z,
                                             std::size_t depth) {
  std::vector<std::vector<GalleryId>> out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = knn_ids(gallery, z.row(i), std::min(depth, gallery.size()));
  return out;
}

MetricsReport evaluate_head(const Gallery& gallery, const EmbeddingBatch& z, const GroundTruth& gt) {
  return compute_metrics(z, gallery, rank_all(gallery, z, 10), gt);
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

Dataset load_dataset(const RunConfig& config) {
  if (config.paths && config.synth) throw Error(ErrorKind::BadConfig, "give either 'paths' or 'synth', not both");
  Dataset d;
  if (config.paths) {
    // Rows are stored as float32; re-project them onto the sphere in double.
    d.gallery = std::make_shared<Gallery>(l2_normalize_rows(read_embeddings(config.paths->gallery)));
    d.queries = read_embeddings(config.paths->queries);
    if (d.queries.dim() != d.gallery->dim()) {
      throw Error(ErrorKind::BadInput, "query dim " + std::to_string(d.queries.dim()) + " vs gallery dim " +
                                           std::to_string(d.gallery->dim()));
    }
    d.truth = read_ground_truth(config.paths->ground_truth, d.queries.size(), d.gallery->size());
    return d;
  }
  if (!config.synth) throw Error(ErrorKind::BadConfig, "config needs 'paths' or 'synth'");

  const SynthBlock& s = *config.synth;
  Benchmark bench = generate_benchmark(s.spec);
  d.gallery = std::make_shared<Gallery>(std::move(bench.gallery));
  d.truth = std::move(bench.truth);
  d.clean_queries = bench.queries;
  const std::uint64_t cseed = derive_seed(s.spec.seed, kCorruptionLabel);
  if (s.corruptions.empty()) {
    d.queries = bench.queries;
  } else if (s.mode == ShiftMode::dqs) {
    d.queries = apply_diverse_corruption(bench.queries, s.corruptions, cseed).queries;
  } else if (s.corruptions.size() == 1) {
    d.queries = apply_corruption(bench.queries, s.corruptions.front(), cseed);
  } else {
    d.queries = apply_corruption(bench.queries, CorruptionSpec::compose(s.corruptions), cseed);
  }
  return d;
}

AdaptRun run_adapt(const RunConfig& config, const Dataset& data) {
  const auto start = std::chrono::steady_clock::now();
  const SessionConfig sc = config.session_config();
  auto centroids = std::make_shared<const CentroidSet>(build_centroids(*data.gallery, sc.k, sc.seed));
  Session session(data.gallery, centroids, sc);

  const std::size_t n = data.queries.size();
  std::vector<std::vector<GalleryId>> rankings;
  Matrix online(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(data.queries.dim()));
  json series = json::array();
  AdaptRun run;

  for (std::size_t begin = 0; begin < n; begin += sc.batch) {
    const std::size_t end = std::min(n, begin + sc.batch);
    const EmbeddingBatch raw = data.queries.slice(begin, end);
    BatchOutcome out = session.process(raw, config.method);
    online.middleRows(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(end - begin)) =
        out.embeddings.matrix();
    rankings.insert(rankings.end(), out.rankings.begin(), out.rankings.end());

    const GroundTruth batch_truth = slice_truth(data.truth, begin, end);
    const MetricsReport bm = compute_metrics(out.embeddings, *data.gallery, out.rankings, batch_truth);
    const Diagnostics& dg = out.diagnostics;
    json entry = {{"step", dg.step},
                  {"queries", end - begin},
                  {"objective", dg.objective},
                  {"l_u", out.loss.l_u},
                  {"l_g", out.loss.l_g},
                  {"l_rem", out.loss.l_rem},
                  {"l_rhm", out.loss.l_rhm},
                  {"l_total", out.loss.l_total},
                  {"active_count", dg.active_count},
                  {"d_kl", dg.d_kl},
                  {"w_d", dg.w_d},
                  {"angle_deg", dg.angle_deg},
                  {"conflicting", dg.conflicting},
                  {"grad_norm", dg.grad_norm},
                  {"recall_1", bm.recall_1},
                  {"uniformity", bm.uniformity},
                  {"gap", bm.gap},
                  {"consistency", bm.consistency},
                  {"delta_t", bm.delta_t}};
    if (config.method == Method::rest) {
      entry["delta_s"] = dg.gap_source;
      entry["entropy_threshold"] = dg.entropy_threshold;
      run.delta_s = dg.gap_source;
    }
    series.push_back(std::move(entry));
  }

  const EmbeddingBatch online_z(std::move(online));
  run.online = compute_metrics(online_z, *data.gallery, rankings, data.truth);
  run.source = evaluate_head(*data.gallery, forward_adapter(AdapterParams::identity(data.queries.dim()), data.queries),
                             data.truth);
  run.final_state = evaluate_head(*data.gallery, forward_adapter(session.params(), data.queries), data.truth);
  run.params = session.params();

  json& r = run.report;
  r["schema"] = kReportSchema;
  r["command"] = "adapt";
  r["config"] = config.to_json();
  r["recall"] = {{"r1", run.online.recall_1}, {"r5", run.online.recall_5}, {"r10", run.online.recall_10}};
  r["metrics"] = metrics_json(run.online);
  r["source_metrics"] = metrics_json(run.source);
  r["final_metrics"] = metrics_json(run.final_state);
  if (run.delta_s) r["delta_s"] = *run.delta_s;
  r["series"] = std::move(series);
  r["adapter"] = {{"gamma", vector_json(run.params.gamma)}, {"beta", vector_json(run.params.beta)}};
  r["wall_clock_seconds"] = seconds_since(start);
  return run;
}

json cmd_synth(const RunConfig& config, const std::filesystem::path& out_dir) {
  if (!config.synth) throw Error(ErrorKind::BadConfig, "synth needs a 'synth' block");
  RunConfig synth_only = config;
  synth_only.paths.reset();
  const Dataset d = load_dataset(synth_only);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorKind::IoError, "cannot create " + out_dir.string() + ": " + ec.message());

  const auto gallery = out_dir / "gallery.emb";
  const auto clean = out_dir / "queries_clean.emb";
  const auto queries = out_dir / "queries.emb";
  const auto truth = out_dir / "ground_truth.tsv";
  write_embeddings(gallery, d.gallery->items());
  write_embeddings(clean, *d.clean_queries);
  write_embeddings(queries, d.queries);
  write_ground_truth(truth, d.truth);
  return {{"schema", kReportSchema},
          {"command", "synth"},
          {"config", config.to_json()},
          {"files",
           {{"gallery", gallery.string()},
            {"queries_clean", clean.string()},
            {"queries", queries.string()},
            {"ground_truth", truth.string()}}},
          {"gallery_size", d.gallery->size()},
          {"stream_length", d.queries.size()},
          {"dim", d.queries.dim()}};
}

json cmd_adapt(const RunConfig& config) { return run_adapt(config, load_dataset(config)).report; }

json run_probe(const RunConfig& config, const Dataset& data) {
  const auto start = std::chrono::steady_clock::now();
  const EmbeddingBatch z = forward_adapter(AdapterParams::identity(data.queries.dim()), data.queries);
  const Vector gallery_mean = batch_mean(data.gallery->items());

  json scale = json::array();
  for (double lambda : config.probe.scale) {
    json m = metrics_json(evaluate_head(*data.gallery, scale_queries(z, lambda), data.truth));
    m["lambda"] = lambda;
    scale.push_back(std::move(m));
  }
  json offset = json::array();
  for (double lambda : config.probe.offset) {
    json m = metrics_json(evaluate_head(*data.gallery, offset_queries(z, gallery_mean, lambda), data.truth));
    m["lambda"] = lambda;
    offset.push_back(std::move(m));
  }
  json cfg = config.to_json();
  cfg["probe"] = {{"scale", config.probe.scale}, {"offset", config.probe.offset}};
  return {{"schema", kReportSchema},
          {"command", "probe"},
          {"config", cfg},
          {"baseline", metrics_json(evaluate_head(*data.gallery, z, data.truth))},
          {"scale", scale},
          {"offset", offset},
          {"wall_clock_seconds", seconds_since(start)}};
}

json cmd_probe(const RunConfig& config) { return run_probe(config, load_dataset(config)); }

json cmd_metrics(const RunConfig& config) {
  const Dataset d = load_dataset(config);
  const EmbeddingBatch z = forward_adapter(AdapterParams::identity(d.queries.dim()), d.queries);
  return {{"schema", kReportSchema},
          {"command", "metrics"},
          {"config", config.to_json()},
          {"metrics", metrics_json(evaluate_head(*d.gallery, z, d.truth))}};
}

json GradcheckResult::to_json(const GradcheckOptions& options) const {
  return {{"schema", kReportSchema},
          {"command", "gradcheck"},
          {"dim", options.dim},
          {"batch", options.batch},
          {"k", options.k},
          {"instances", options.instances},
          {"h", options.h},
          {"tolerance", options.tolerance},
          {"max_relative_error", max_relative_error},
          {"worst", worst},
          {"passed", passed}};
}

GradcheckResult run_gradcheck(const GradcheckOptions& o, std::uint64_t seed) {
  GradcheckResult result;
  const auto record = [&](const std::string& name, Vector analytic, const std::function<double(const Vector&)>& f,
                          const Vector& theta) {
    if (o.perturb) analytic[0] += 1e-3 * std::max(1.0, analytic.norm());
    const double err = relative_error(analytic, finite_diff_grad(f, theta, o.h), kGradcheckFloor);
    auto& slot = result.max_relative_error[name];
    slot = std::max(slot, err);
  };

  for (std::size_t inst = 0; inst < o.instances; ++inst) {
    Xoshiro256 rng(derive_seed(seed, inst));
    const auto gauss = [&](std::size_t rows, std::size_t cols, double scale) {
      Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
      return m;
    };
    const Gallery gallery(l2_normalize_rows(EmbeddingBatch(gauss(o.gallery_size, o.dim, 1.0))));
    const CentroidSet centroids = build_centroids(gallery, o.k, derive_seed(seed, 1000 + inst));
    const EmbeddingBatch raw(gauss(o.batch, o.dim, 1.0));
    AdapterParams params = AdapterParams::identity(o.dim);
    params.gamma += gauss(o.dim, 1, 0.2);
    params.beta += gauss(o.dim, 1, 0.1);

    const EmbeddingBatch z = forward_adapter(params, raw);
    auto candidates = build_candidate_sets(z, gallery, centroids, o.k);
    const PredictionProblem prediction{raw, candidates, o.tau};
    const auto current = predict(params, prediction);
    const auto source = predict(AdapterParams::identity(o.dim), prediction);

    // Half-size queue so the source gap differs from the batch gap.
    const Vector q_mean = batch_mean(z);
    Vector p_mean = Vector::Zero(static_cast<Eigen::Index>(o.dim));
    for (const auto& cs : candidates) p_mean += cs.embeddings.row(0);
    p_mean /= static_cast<double>(candidates.size());
    std::vector<QueueEntry> entries;
    for (std::size_t i = 0; i < z.size(); ++i) {
      const Vector q = z.row(i);
      const Vector pos = candidates[i].embeddings.row(0);
      entries.push_back({q, pos, source_likeness(q, pos, q_mean, p_mean), current[i].entropy, 0});
    }
    const auto queue = update_queue({}, std::move(entries), std::max<std::size_t>(1, o.batch / 2));
    const RestProblem problem = freeze_rest_problem(params, raw, candidates, o.tau, estimate_constraints(queue));

    const Vector theta = params.flatten();
    const RestEvaluation eval = evaluate_rest(params, problem);
    const auto rest_term = [&](double LossBreakdown::*field) {
      return [&problem, field](const Vector& t) {
        return evaluate_rest(AdapterParams::unflatten(t), problem).loss.*field;
      };
    };
    record("uniformity", eval.grad_u.flatten(), rest_term(&LossBreakdown::l_u), theta);
    record("gap", eval.grad_g.flatten(), rest_term(&LossBreakdown::l_g), theta);
    record("rem", eval.grad_rem.flatten(), rest_term(&LossBreakdown::l_rem), theta);
    record("rhm", eval.grad_rhm.flatten(), rest_term(&LossBreakdown::l_rhm), theta);
    record("total", eval.grad_total.flatten(), rest_term(&LossBreakdown::l_total), theta);

    record("em", evaluate_em(params, prediction).grad.flatten(),
           [&](const Vector& t) { return evaluate_em(AdapterParams::unflatten(t), prediction).value; }, theta);

    std::vector<std::size_t> labels;
    for (const auto& s : source) {
      Eigen::Index arg = 0;
      s.dist.probs().maxCoeff(&arg);
      labels.push_back(static_cast<std::size_t>(arg));
    }
    record("pl", evaluate_pl(params, prediction, labels).grad.flatten(),
           [&](const Vector& t) { return evaluate_pl(AdapterParams::unflatten(t), prediction, labels).value; },
           theta);

    const GeneralDirection general = kl_general(source, current, prediction, params);
    record("kl", general.grad,
           [&](const Vector& t) { return evaluate_kl(AdapterParams::unflatten(t), prediction, source).value; },
           theta);
  }

  for (const auto& [_, err] : result.max_relative_error) result.worst = std::max(result.worst, err);
  result.passed = result.worst < o.tolerance;
  return result;
}

}  // namespace qshift
