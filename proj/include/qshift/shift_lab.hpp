#pragma once

// Synthetic retrieval benchmarks, embedding-space corruptions and the
// scale/offset probes.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "qshift/embedding.hpp"
#include "qshift/gallery.hpp"
#include "qshift/metrics.hpp"

namespace qshift {

struct SyntheticSpec {
  std::size_t classes = 64;
  std::size_t dim = 32;
  std::size_t gallery_size = 512;
  std::size_t stream_length = 512;
  double query_noise = 0.1;
  double gallery_noise = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Gallery item g belongs to class g % classes; queries draw their class
/// uniformly. Query rows are raw (not normalized).
struct Benchmark {
  Gallery gallery;
  EmbeddingBatch queries;
  GroundTruth truth;
  std::vector<std::size_t> query_class;
};

Benchmark generate_benchmark(const SyntheticSpec& spec);

struct CorruptionSpec {
  enum class Kind { gaussian_noise, mean_shift, uniformity_collapse, compose };

  Kind kind = Kind::gaussian_noise;
  double sigma = 0.0;
  std::uint32_t direction = 0;
  double delta = 0.0;
  double rho = 0.0;
  std::vector<CorruptionSpec> steps;

  static CorruptionSpec gaussian_noise(double sigma);
  static CorruptionSpec mean_shift(std::uint32_t direction, double delta);
  static CorruptionSpec uniformity_collapse(double rho);
  static CorruptionSpec compose(std::vector<CorruptionSpec> steps);

  void validate() const;
  bool is_identity() const;
};

/// Unit direction used by mean_shift for a given direction id.
Vector shift_direction(std::size_t dim, std::uint32_t direction, std::uint64_t seed);

/// Corrupts every row of a raw query stream.
EmbeddingBatch apply_corruption(const EmbeddingBatch& stream, const CorruptionSpec& spec,
                                std::uint64_t seed);

struct DiverseStream {
  EmbeddingBatch queries;
  std::vector<std::size_t> domain;
};

/// Each query independently draws one domain uniformly at random and gets
/// exactly the row that domain's corruption would give it.
DiverseStream apply_diverse_corruption(const EmbeddingBatch& stream,
                                       const std::vector<CorruptionSpec>& domains, std::uint64_t seed);

/// center + lambda (z_i - center), re-normalized. lambda == 1 is the identity.
EmbeddingBatch scale_queries(const EmbeddingBatch& z, double lambda);

/// z_i - lambda (query_mean - gallery_mean), re-normalized. lambda == 0 is the identity.
EmbeddingBatch offset_queries(const EmbeddingBatch& z, const VectorRef& gallery_mean, double lambda);

}  // namespace qshift
