#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "qshift/errors.hpp"
#include "qshift/gallery.hpp"
#include "qshift/metrics.hpp"
#include "qshift/random.hpp"
#include "qshift/shift_lab.hpp"

namespace qshift {
namespace {

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected an error";
  return ErrorKind::BadInput;
}

std::vector<std::vector<GalleryId>> source_rankings(const Benchmark& b, std::size_t depth = 10) {
  const EmbeddingBatch z = l2_normalize_rows(b.queries);
  std::vector<std::vector<GalleryId>> out;
  for (std::size_t i = 0; i < z.size(); ++i) out.push_back(knn_ids(b.gallery, z.row(i), depth));
  return out;
}

// Relevant ids of each query's 1-NN, used as matched positives.
EmbeddingBatch nearest_items(const EmbeddingBatch& z, const Gallery& g) {
  std::vector<std::size_t> ids;
  for (std::size_t i = 0; i < z.size(); ++i) ids.push_back(knn_ids(g, z.row(i), 1)[0]);
  return g.items().select(ids);
}

SyntheticSpec default_spec(std::uint64_t seed) {
  SyntheticSpec s;
  s.seed = seed;
  return s;
}

TEST(Benchmark, NoiselessIsPerfect) {
  SyntheticSpec s = default_spec(1);
  s.query_noise = 0.0;
  s.gallery_noise = 0.0;
  const Benchmark b = generate_benchmark(s);
  EXPECT_EQ(recall_at_k(source_rankings(b), b.truth, 1), 1.0);
}

TEST(Benchmark, Deterministic) {
  const Benchmark a = generate_benchmark(default_spec(9));
  const Benchmark b = generate_benchmark(default_spec(9));
  EXPECT_EQ(a.gallery.items().matrix(), b.gallery.items().matrix());
  EXPECT_EQ(a.queries.matrix(), b.queries.matrix());
  EXPECT_EQ(a.truth.relevant, b.truth.relevant);
  const Benchmark c = generate_benchmark(default_spec(10));
  EXPECT_NE(a.queries.matrix(), c.queries.matrix());
}

TEST(Benchmark, ZeroAdaptRecallPinned) {
  const Benchmark b = generate_benchmark(default_spec(0));
  const double r1 = recall_at_k(source_rankings(b), b.truth, 1);
  EXPECT_GE(r1, 0.95);
  // Observed once with the no-adapt oracle; changes here mean the generator changed.
  EXPECT_EQ(r1, 1.0);
}

TEST(Benchmark, StructureAndValidation) {
  const SyntheticSpec s = default_spec(3);
  const Benchmark b = generate_benchmark(s);
  EXPECT_EQ(b.gallery.size(), s.gallery_size);
  EXPECT_EQ(b.queries.size(), s.stream_length);
  b.truth.validate(b.gallery.size());
  for (std::size_t q = 0; q < b.truth.size(); ++q) {
    EXPECT_EQ(b.truth.relevant[q].size(), s.gallery_size / s.classes);
    for (GalleryId id : b.truth.relevant[q]) EXPECT_EQ(id % s.classes, b.query_class[q]);
  }
  SyntheticSpec bad = s;
  bad.classes = 1;
  EXPECT_EQ(kind_of([&] { generate_benchmark(bad); }), ErrorKind::InvalidSpec);
  bad = s;
  bad.gallery_size = 10;
  EXPECT_EQ(kind_of([&] { generate_benchmark(bad); }), ErrorKind::InvalidSpec);
  bad = s;
  bad.query_noise = -0.1;
  EXPECT_EQ(kind_of([&] { generate_benchmark(bad); }), ErrorKind::InvalidSpec);
}

TEST(Corruption, IdentitiesLeaveStreamUnchanged) {
  const Benchmark b = generate_benchmark(default_spec(4));
  for (const auto& spec : {CorruptionSpec::gaussian_noise(0.0), CorruptionSpec::mean_shift(2, 0.0),
                           CorruptionSpec::uniformity_collapse(0.0),
                           CorruptionSpec::compose({CorruptionSpec::mean_shift(0, 0.0),
                                                    CorruptionSpec::gaussian_noise(0.0)})}) {
    EXPECT_TRUE(spec.is_identity());
    EXPECT_EQ(apply_corruption(b.queries, spec, 5).matrix(), b.queries.matrix());
  }
}

TEST(Corruption, MeanShiftWidensTheGap) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Benchmark b = generate_benchmark(default_spec(seed));
    const EmbeddingBatch clean = l2_normalize_rows(b.queries);
    const EmbeddingBatch shifted =
        l2_normalize_rows(apply_corruption(b.queries, CorruptionSpec::mean_shift(0, 0.5), seed));
    EXPECT_GT(metric_gap(shifted, nearest_items(shifted, b.gallery)),
              metric_gap(clean, nearest_items(clean, b.gallery)));
    EXPECT_GT(query_positive_gap(shifted, b.gallery), query_positive_gap(clean, b.gallery));
  }
}

TEST(Corruption, MeanShiftAddsTheSameVectorToEveryRow) {
  const Benchmark b = generate_benchmark(default_spec(2));
  const EmbeddingBatch shifted = apply_corruption(b.queries, CorruptionSpec::mean_shift(3, 0.7), 11);
  const Vector v = shift_direction(b.queries.dim(), 3, 11);
  EXPECT_NEAR(v.norm(), 1.0, 1e-12);
  const Matrix diff = shifted.matrix() - b.queries.matrix();
  for (Eigen::Index i = 0; i < diff.rows(); ++i) {
    EXPECT_LE((diff.row(i).transpose() - 0.7 * v).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Corruption, CollapseLowersUniformity) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Benchmark b = generate_benchmark(default_spec(seed));
    const EmbeddingBatch collapsed = apply_corruption(b.queries, CorruptionSpec::uniformity_collapse(0.8), seed);
    EXPECT_LT(metric_uniformity(l2_normalize_rows(collapsed)), metric_uniformity(l2_normalize_rows(b.queries)));
  }
  EXPECT_EQ(kind_of([] { CorruptionSpec::uniformity_collapse(1.0).validate(); }), ErrorKind::InvalidSpec);
  EXPECT_EQ(kind_of([] { CorruptionSpec::gaussian_noise(-1.0).validate(); }), ErrorKind::InvalidSpec);
  EXPECT_EQ(kind_of([] { CorruptionSpec::compose({}).validate(); }), ErrorKind::InvalidSpec);
}

TEST(Corruption, DiverseStreamPicksRowsFromDomains) {
  const Benchmark b = generate_benchmark(default_spec(6));
  const std::vector<CorruptionSpec> domains{CorruptionSpec::mean_shift(0, 0.5),
                                            CorruptionSpec::uniformity_collapse(0.8),
                                            CorruptionSpec::gaussian_noise(0.2)};
  const DiverseStream d = apply_diverse_corruption(b.queries, domains, 6);
  ASSERT_EQ(d.domain.size(), b.queries.size());
  std::vector<std::size_t> counts(domains.size(), 0);
  for (std::size_t i = 0; i < d.domain.size(); ++i) {
    ++counts[d.domain[i]];
    const EmbeddingBatch version = apply_corruption(b.queries, domains[d.domain[i]], derive_seed(6, d.domain[i]));
    EXPECT_EQ(d.queries.matrix().row(static_cast<Eigen::Index>(i)), version.matrix().row(static_cast<Eigen::Index>(i)));
  }
  for (auto c : counts) EXPECT_GT(c, 100u);
  const DiverseStream again = apply_diverse_corruption(b.queries, domains, 6);
  EXPECT_EQ(again.queries.matrix(), d.queries.matrix());
}

TEST(Probes, ScaleExamples) {
  const Benchmark b = generate_benchmark(default_spec(7));
  const EmbeddingBatch z = l2_normalize_rows(b.queries);
  EXPECT_EQ(scale_queries(z, 1.0).matrix(), z.matrix());

  const EmbeddingBatch collapsed = scale_queries(z, 0.0);
  const Vector center = l2_normalize(batch_mean(z));
  for (std::size_t i = 0; i < z.size(); ++i) EXPECT_LE((collapsed.row(i) - center).cwiseAbs().maxCoeff(), 1e-12);

  EXPECT_GT(metric_uniformity(scale_queries(z, 2.0)), metric_uniformity(z));
  EXPECT_EQ(kind_of([&] { scale_queries(z, -1.0); }), ErrorKind::InvalidSpec);
}

TEST(Probes, OffsetExamples) {
  const Benchmark b = generate_benchmark(default_spec(8));
  const EmbeddingBatch z = l2_normalize_rows(b.queries);
  const Vector g_mean = batch_mean(b.gallery.items());
  EXPECT_EQ(offset_queries(z, g_mean, 0.0).matrix(), z.matrix());

  // Zero gap: the query mean is the gallery mean.
  const Vector q_mean = batch_mean(z);
  const EmbeddingBatch same = offset_queries(z, q_mean, 1.0);
  EXPECT_LE((same.matrix() - z.matrix()).cwiseAbs().maxCoeff(), 1e-12);

  const EmbeddingBatch shifted =
      l2_normalize_rows(apply_corruption(b.queries, CorruptionSpec::mean_shift(0, 0.5), 8));
  EXPECT_LT(metric_gap(offset_queries(shifted, g_mean, 1.0), b.gallery.items()),
            metric_gap(shifted, b.gallery.items()));
}

TEST(Probes, CollapseRecallNonDecreasingInScale) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    SyntheticSpec s = default_spec(seed);
    s.query_noise = 0.3;
    const Benchmark b = generate_benchmark(s);
    const EmbeddingBatch z =
        l2_normalize_rows(apply_corruption(b.queries, CorruptionSpec::uniformity_collapse(0.8), seed));
    double prev = -1.0;
    for (double lambda : {1.0, 1.5, 2.0}) {
      const EmbeddingBatch scaled = scale_queries(z, lambda);
      std::vector<std::vector<GalleryId>> r;
      for (std::size_t i = 0; i < scaled.size(); ++i) r.push_back(knn_ids(b.gallery, scaled.row(i), 1));
      const double r1 = recall_at_k(r, b.truth, 1);
      EXPECT_GE(r1, prev);
      prev = r1;
    }
  }
}

TEST(Metrics, UniformityExamples) {
  Matrix one(1, 2);
  one << 0.6, 0.8;
  EXPECT_EQ(metric_uniformity(EmbeddingBatch(one)), 0.0);
  Matrix anti(2, 2);
  anti << 0, 1, 0, -1;
  EXPECT_EQ(metric_uniformity(EmbeddingBatch(anti)), 1.0);
  EXPECT_EQ(kind_of([] { metric_uniformity(EmbeddingBatch(0, 2)); }), ErrorKind::EmptyBatch);
}

TEST(Metrics, GapExamples) {
  Matrix a(1, 2), b(1, 2);
  a << 1, 0;
  b << 0, 1;
  EXPECT_EQ(metric_gap(EmbeddingBatch(a), EmbeddingBatch(a)), 0.0);
  EXPECT_NEAR(metric_gap(EmbeddingBatch(a), EmbeddingBatch(b)), std::sqrt(2.0), 1e-15);
  EXPECT_EQ(metric_gap(EmbeddingBatch(a), EmbeddingBatch(b)), metric_gap(EmbeddingBatch(b), EmbeddingBatch(a)));
  EXPECT_EQ(kind_of([&] { metric_gap(EmbeddingBatch(a), EmbeddingBatch(Matrix::Ones(1, 3))); }),
            ErrorKind::DimMismatch);
}

TEST(Metrics, ConsistencyExamples) {
  Matrix g(2, 2);
  g << 1, 0, 0, 1;
  const EmbeddingBatch gallery(g);
  GroundTruth gt{{{0}, {1}}};
  EXPECT_EQ(metric_consistency(gallery, gallery, gt), 1.0);
  Matrix q(2, 2);
  q << 0, 1, 1, 0;
  EXPECT_EQ(metric_consistency(EmbeddingBatch(q), gallery, gt), 0.0);
  Matrix mixed(2, 2);
  mixed << 1, 0, 1, 0;
  EXPECT_EQ(metric_consistency(EmbeddingBatch(mixed), gallery, gt), 0.5);
  EXPECT_EQ(kind_of([&] { metric_consistency(gallery, gallery, GroundTruth{}); }), ErrorKind::EmptyGroundTruth);
}

TEST(Metrics, RecallExamples) {
  const GroundTruth gt{{{1}, {2}, {3}, {4}}};
  EXPECT_EQ(recall_at_k({{1}, {2}, {3}, {4}}, gt, 1), 1.0);
  EXPECT_EQ(recall_at_k({{0}, {0}, {0}, {0}}, gt, 1), 0.0);
  EXPECT_EQ(recall_at_k({{1}, {2}, {3}, {0}}, gt, 1), 0.75);
  EXPECT_EQ(recall_at_k({{0, 1}, {0, 2}, {0, 3}, {0, 4}}, gt, 1), 0.0);
  EXPECT_EQ(recall_at_k({{0, 1}, {0, 2}, {0, 3}, {0, 4}}, gt, 2), 1.0);
  EXPECT_EQ(kind_of([&] { recall_at_k({{1}}, gt, 1); }), ErrorKind::MissingQuery);
}

TEST(Metrics, PermutationInvariant) {
  const Benchmark b = generate_benchmark(default_spec(12));
  const EmbeddingBatch z = l2_normalize_rows(b.queries);
  const auto ranks = source_rankings(b);
  const MetricsReport base = compute_metrics(z, b.gallery, ranks, b.truth);

  std::vector<std::size_t> order(z.size());
  std::iota(order.begin(), order.end(), 0u);
  std::mt19937 rng(5);
  std::shuffle(order.begin(), order.end(), rng);
  GroundTruth gt;
  std::vector<std::vector<GalleryId>> r;
  for (auto i : order) {
    gt.relevant.push_back(b.truth.relevant[i]);
    r.push_back(ranks[i]);
  }
  const MetricsReport perm = compute_metrics(z.select(order), b.gallery, r, gt);
  EXPECT_EQ(perm.recall_1, base.recall_1);
  EXPECT_EQ(perm.recall_10, base.recall_10);
  EXPECT_NEAR(perm.uniformity, base.uniformity, 1e-12);
  EXPECT_NEAR(perm.gap, base.gap, 1e-12);
  EXPECT_NEAR(perm.consistency, base.consistency, 1e-12);
  EXPECT_NEAR(perm.delta_t, base.delta_t, 1e-12);
  EXPECT_GE(base.consistency, -1.0);
  EXPECT_LE(base.consistency, 1.0);
}

}  // namespace
}  // namespace qshift
