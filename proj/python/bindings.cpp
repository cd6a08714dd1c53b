#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <memory>

#include "qshift/config.hpp"
#include "qshift/decouple.hpp"
#include "qshift/engine.hpp"
#include "qshift/errors.hpp"
#include "qshift/harness.hpp"
#include "qshift/io.hpp"
#include "qshift/metrics.hpp"
#include "qshift/shift_lab.hpp"

namespace py = pybind11;
using namespace qshift;
using nlohmann::json;

namespace {

json parse(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::BadConfig, e.what());
  }
}

std::shared_ptr<const Gallery> make_gallery(const Matrix& rows) {
  return std::make_shared<const Gallery>(EmbeddingBatch(rows));
}

py::dict loss_dict(const LossBreakdown& l) {
  py::dict d;
  d["l_u"] = l.l_u;
  d["l_g"] = l.l_g;
  d["l_rem"] = l.l_rem;
  d["l_rhm"] = l.l_rhm;
  d["l_total"] = l.l_total;
  d["active_count"] = l.active_count;
  return d;
}

py::dict diagnostics_dict(const Diagnostics& g) {
  py::dict d;
  d["step"] = g.step;
  d["objective"] = g.objective;
  d["d_kl"] = g.d_kl;
  d["w_d"] = g.w_d;
  d["angle_deg"] = g.angle_deg;
  d["conflicting"] = g.conflicting;
  d["active_count"] = g.active_count;
  d["gap_source"] = g.gap_source;
  d["entropy_threshold"] = g.entropy_threshold;
  d["grad_norm"] = g.grad_norm;
  return d;
}

py::dict outcome_dict(const BatchOutcome& o) {
  py::dict d;
  d["rankings"] = o.rankings;
  d["embeddings"] = o.embeddings.matrix();
  d["loss"] = loss_dict(o.loss);
  d["diagnostics"] = diagnostics_dict(o.diagnostics);
  return d;
}

py::dict metrics_dict(const MetricsReport& m) {
  py::dict d;
  d["recall_1"] = m.recall_1;
  d["recall_5"] = m.recall_5;
  d["recall_10"] = m.recall_10;
  d["uniformity"] = m.uniformity;
  d["gap"] = m.gap;
  d["consistency"] = m.consistency;
  d["delta_t"] = m.delta_t;
  return d;
}

// Python-facing session owning its gallery and centroids. A centroid count
// of 0 uses k, as the command-line tool does.
class PySession {
 public:
  PySession(const Matrix& gallery, std::size_t centroids, double tau, std::size_t k, std::size_t batch,
            double lr, bool decouple, std::uint64_t seed) {
    SessionConfig c;
    c.tau = tau;
    c.k = k;
    c.batch = batch;
    c.lr = lr;
    c.decouple = decouple;
    c.seed = seed;
    auto g = make_gallery(gallery);
    auto cs = std::make_shared<const CentroidSet>(build_centroids(*g, centroids ? centroids : k, seed));
    session_ = std::make_unique<Session>(g, cs, c);
  }

  py::dict adapt_batch(const Matrix& raw) { return outcome_dict(session_->adapt_batch(EmbeddingBatch(raw))); }
  py::dict process(const Matrix& raw, const std::string& method) {
    return outcome_dict(session_->process(EmbeddingBatch(raw), parse_method(method)));
  }
  std::vector<std::vector<GalleryId>> rank(const Matrix& raw) const { return session_->rank(EmbeddingBatch(raw)); }
  Vector gamma() const { return session_->params().gamma; }
  Vector beta() const { return session_->params().beta; }
  std::size_t steps() const { return session_->steps(); }
  std::size_t queue_size() const { return session_->queue().size(); }
  Matrix centroids() const { return session_->centroids().centroids.matrix(); }

 private:
  std::unique_ptr<Session> session_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Test-time adaptation of query embeddings for retrieval";

  // Leaked on purpose so the type outlives module teardown.
  static PyObject* error = PyErr_NewException("qshift._core.QShiftError", PyExc_ValueError, nullptr);
  m.attr("QShiftError") = py::handle(error);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = py::handle(error)(e.what());
      exc.attr("kind") = std::string(to_string(e.kind()));
      PyErr_SetObject(error, exc.ptr());
    }
  });

  m.def("l2_normalize", [](const Vector& v) { return l2_normalize(v); }, py::arg("v"));
  m.def("l2_normalize_rows", [](const Matrix& rows) { return l2_normalize_rows(EmbeddingBatch(rows)).matrix(); },
        py::arg("rows"));
  m.def("cosine_sim", [](const Vector& a, const Vector& b) { return cosine_sim(a, b); }, py::arg("a"), py::arg("b"));
  m.def("softmax_temp", [](const Vector& s, double tau) { return softmax_temp(s, tau).probs(); }, py::arg("scores"),
        py::arg("tau"));
  m.def("shannon_entropy", [](const Vector& p) { return shannon_entropy(Distribution(p)); }, py::arg("p"));

  m.def(
      "knn",
      [](const Matrix& gallery, const Vector& query, std::size_t k) {
        std::vector<GalleryId> ids;
        std::vector<double> sims;
        for (const auto& n : knn(Gallery(EmbeddingBatch(gallery)), query, k)) {
          ids.push_back(n.id);
          sims.push_back(n.similarity);
        }
        return py::make_tuple(ids, sims);
      },
      py::arg("gallery"), py::arg("query"), py::arg("k"));
  m.def(
      "build_centroids",
      [](const Matrix& gallery, std::size_t k, std::uint64_t seed) {
        const CentroidSet c = build_centroids(Gallery(EmbeddingBatch(gallery)), k, seed);
        return py::make_tuple(c.centroids.matrix(), c.energy_trace, c.assignment);
      },
      py::arg("gallery"), py::arg("k"), py::arg("seed") = 0);

  m.def(
      "decouple",
      [](const Vector& g_d, const Vector& g_r, double kl) {
        const DecoupledGradient d = decouple(g_d, g_r, kl);
        py::dict out;
        out["g_parallel"] = d.g_parallel;
        out["g_perp"] = d.g_perp;
        out["g_hat"] = d.g_hat;
        out["w_d"] = d.w_d;
        out["conflicting"] = d.conflicting;
        return out;
      },
      py::arg("g_d"), py::arg("g_r"), py::arg("kl"));

  m.def(
      "generate_benchmark",
      [](std::size_t classes, std::size_t dim, std::size_t gallery_size, std::size_t stream_length,
         double query_noise, double gallery_noise, std::uint64_t seed) {
        SyntheticSpec s;
        s.classes = classes;
        s.dim = dim;
        s.gallery_size = gallery_size;
        s.stream_length = stream_length;
        s.query_noise = query_noise;
        s.gallery_noise = gallery_noise;
        s.seed = seed;
        const Benchmark b = generate_benchmark(s);
        return py::make_tuple(b.gallery.items().matrix(), b.queries.matrix(), b.truth.relevant, b.query_class);
      },
      py::arg("classes") = 64, py::arg("dim") = 32, py::arg("gallery_size") = 512, py::arg("stream_length") = 512,
      py::arg("query_noise") = 0.1, py::arg("gallery_noise") = 0.1, py::arg("seed") = 0);
  m.def(
      "apply_corruption",
      [](const Matrix& stream, const std::string& spec, std::uint64_t seed) {
        return apply_corruption(EmbeddingBatch(stream), corruption_from_json(parse(spec)), seed).matrix();
      },
      py::arg("stream"), py::arg("spec"), py::arg("seed") = 0);

  m.def(
      "compute_metrics",
      [](const Matrix& queries, const Matrix& gallery, const std::vector<std::vector<GalleryId>>& rankings,
         const std::vector<std::vector<GalleryId>>& relevant) {
        const Gallery g{EmbeddingBatch(gallery)};
        GroundTruth gt{relevant};
        gt.validate(g.size());
        return metrics_dict(compute_metrics(EmbeddingBatch(queries), g, rankings, gt));
      },
      py::arg("queries"), py::arg("gallery"), py::arg("rankings"), py::arg("relevant"));

  m.def("write_embeddings", [](const std::filesystem::path& p, const Matrix& rows) {
    write_embeddings(p, EmbeddingBatch(rows));
  });
  m.def("read_embeddings", [](const std::filesystem::path& p) { return read_embeddings(p).matrix(); });

  m.def("cmd_adapt", [](const std::string& cfg) { return cmd_adapt(RunConfig::from_json(parse(cfg))).dump(); });
  m.def("cmd_probe", [](const std::string& cfg) { return cmd_probe(RunConfig::from_json(parse(cfg))).dump(); });
  m.def("cmd_metrics", [](const std::string& cfg) { return cmd_metrics(RunConfig::from_json(parse(cfg))).dump(); });
  m.def("cmd_synth", [](const std::string& cfg, const std::filesystem::path& out) {
    return cmd_synth(RunConfig::from_json(parse(cfg)), out).dump();
  });
  m.def("cmd_gradcheck", [](const std::string& cfg) {
    const RunConfig c = RunConfig::from_json(parse(cfg));
    return run_gradcheck(c.gradcheck, c.session.seed).to_json(c.gradcheck).dump();
  });

  py::class_<PySession>(m, "Session")
      .def(py::init<const Matrix&, std::size_t, double, std::size_t, std::size_t, double, bool, std::uint64_t>(),
           py::arg("gallery"), py::arg("centroids") = 0, py::arg("tau") = 0.02, py::arg("k") = 10,
           py::arg("batch") = 64, py::arg("lr") = 1e-3, py::arg("decouple") = false, py::arg("seed") = 0)
      .def("adapt_batch", &PySession::adapt_batch, py::arg("raw"))
      .def("process", &PySession::process, py::arg("raw"), py::arg("method"))
      .def("rank", &PySession::rank, py::arg("raw"))
      .def_property_readonly("gamma", &PySession::gamma)
      .def_property_readonly("beta", &PySession::beta)
      .def_property_readonly("steps", &PySession::steps)
      .def_property_readonly("queue_size", &PySession::queue_size)
      .def_property_readonly("centroids", &PySession::centroids);
}
