#include "qshift/shift_lab.hpp"

#include <string>

#include "qshift/errors.hpp"
#include "qshift/random.hpp"

namespace qshift {

namespace {

enum SeedLabel : std::uint64_t {
  kPrototypes = 1,
  kGalleryNoise = 2,
  kQueryNoise = 3,
  kQueryClasses = 4,
  kCorruptionNoise = 5,
  kDomainChoice = 6,
  kDirectionBase = 1000,
  kComposeBase = 2000,
};

Vector gaussian(Xoshiro256& rng, std::size_t dim) {
  Vector v(static_cast<Eigen::Index>(dim));
  for (Eigen::Index d = 0; d < v.size(); ++d) v[d] = rng.normal();
  return v;
}

EmbeddingBatch apply_impl(const EmbeddingBatch& stream, const CorruptionSpec& spec,
                          std::uint64_t direction_seed, std::uint64_t noise_seed) {
  Matrix rows = stream.matrix();
  switch (spec.kind) {
    case CorruptionSpec::Kind::gaussian_noise: {
      Xoshiro256 rng(derive_seed(noise_seed, kCorruptionNoise));
      for (Eigen::Index i = 0; i < rows.rows(); ++i) {
        rows.row(i) += spec.sigma * gaussian(rng, stream.dim()).transpose();
      }
      break;
    }
    case CorruptionSpec::Kind::mean_shift: {
      const Vector v = shift_direction(stream.dim(), spec.direction, direction_seed);
      rows.rowwise() += spec.delta * v.transpose();
      break;
    }
    case CorruptionSpec::Kind::uniformity_collapse: {
      const Eigen::RowVectorXd mean = rows.colwise().mean();
      for (Eigen::Index i = 0; i < rows.rows(); ++i) rows.row(i) += spec.rho * (mean - rows.row(i));
      break;
    }
    case CorruptionSpec::Kind::compose: {
      EmbeddingBatch current = stream;
      for (std::size_t s = 0; s < spec.steps.size(); ++s) {
        current = apply_impl(current, spec.steps[s], direction_seed, derive_seed(noise_seed, kComposeBase + s));
      }
      return current;
    }
  }
  return EmbeddingBatch(std::move(rows));
}

}  // namespace

void SyntheticSpec::validate() const {
  if (classes < 2) throw Error(ErrorKind::InvalidSpec, "need at least 2 classes");
  if (dim < 2) throw Error(ErrorKind::InvalidSpec, "need dim >= 2");
  if (gallery_size < classes) throw Error(ErrorKind::InvalidSpec, "gallery smaller than class count");
  if (stream_length < 1) throw Error(ErrorKind::InvalidSpec, "empty stream");
  if (!(query_noise >= 0.0) || !(gallery_noise >= 0.0)) {
    throw Error(ErrorKind::InvalidSpec, "noise levels must be non-negative");
  }
}

Benchmark generate_benchmark(const SyntheticSpec& spec) {
  spec.validate();
  Xoshiro256 proto_rng(derive_seed(spec.seed, kPrototypes));
  Matrix prototypes(static_cast<Eigen::Index>(spec.classes), static_cast<Eigen::Index>(spec.dim));
  for (std::size_t c = 0; c < spec.classes; ++c) {
    prototypes.row(static_cast<Eigen::Index>(c)) = l2_normalize(gaussian(proto_rng, spec.dim)).transpose();
  }

  Xoshiro256 gallery_rng(derive_seed(spec.seed, kGalleryNoise));
  Matrix gallery(static_cast<Eigen::Index>(spec.gallery_size), static_cast<Eigen::Index>(spec.dim));
  std::vector<std::vector<GalleryId>> members(spec.classes);
  for (std::size_t g = 0; g < spec.gallery_size; ++g) {
    const std::size_t c = g % spec.classes;
    const Vector noisy = prototypes.row(static_cast<Eigen::Index>(c)).transpose() +
                         spec.gallery_noise * gaussian(gallery_rng, spec.dim);
    gallery.row(static_cast<Eigen::Index>(g)) = l2_normalize(noisy).transpose();
    members[c].push_back(static_cast<GalleryId>(g));
  }

  Xoshiro256 class_rng(derive_seed(spec.seed, kQueryClasses));
  Xoshiro256 query_rng(derive_seed(spec.seed, kQueryNoise));
  Matrix queries(static_cast<Eigen::Index>(spec.stream_length), static_cast<Eigen::Index>(spec.dim));
  Benchmark out{Gallery(EmbeddingBatch(std::move(gallery))), {}, {}, {}};
  for (std::size_t t = 0; t < spec.stream_length; ++t) {
    const auto c = static_cast<std::size_t>(class_rng.below(spec.classes));
    queries.row(static_cast<Eigen::Index>(t)) =
        prototypes.row(static_cast<Eigen::Index>(c)) + spec.query_noise * gaussian(query_rng, spec.dim).transpose();
    out.query_class.push_back(c);
    out.truth.relevant.push_back(members[c]);
  }
  out.queries = EmbeddingBatch(std::move(queries));
  return out;
}

CorruptionSpec CorruptionSpec::gaussian_noise(double sigma) {
  CorruptionSpec s;
  s.kind = Kind::gaussian_noise;
  s.sigma = sigma;
  return s;
}

CorruptionSpec CorruptionSpec::mean_shift(std::uint32_t direction, double delta) {
  CorruptionSpec s;
  s.kind = Kind::mean_shift;
  s.direction = direction;
  s.delta = delta;
  return s;
}

CorruptionSpec CorruptionSpec::uniformity_collapse(double rho) {
  CorruptionSpec s;
  s.kind = Kind::uniformity_collapse;
  s.rho = rho;
  return s;
}

CorruptionSpec CorruptionSpec::compose(std::vector<CorruptionSpec> steps) {
  CorruptionSpec s;
  s.kind = Kind::compose;
  s.steps = std::move(steps);
  return s;
}

void CorruptionSpec::validate() const {
  switch (kind) {
    case Kind::gaussian_noise:
      if (!(sigma >= 0.0)) throw Error(ErrorKind::InvalidSpec, "gaussian_noise sigma must be >= 0");
      break;
    case Kind::mean_shift:
      if (!std::isfinite(delta)) throw Error(ErrorKind::InvalidSpec, "mean_shift delta must be finite");
      break;
    case Kind::uniformity_collapse:
      if (!(rho >= 0.0 && rho < 1.0)) throw Error(ErrorKind::InvalidSpec, "uniformity_collapse rho must lie in [0,1)");
      break;
    case Kind::compose:
      if (steps.empty()) throw Error(ErrorKind::InvalidSpec, "compose needs at least one step");
      for (const auto& s : steps) s.validate();
      break;
  }
}

bool CorruptionSpec::is_identity() const {
  switch (kind) {
    case Kind::gaussian_noise: return sigma == 0.0;
    case Kind::mean_shift: return delta == 0.0;
    case Kind::uniformity_collapse: return rho == 0.0;
    case Kind::compose:
      for (const auto& s : steps) {
        if (!s.is_identity()) return false;
      }
      return true;
  }
  return false;
}

Vector shift_direction(std::size_t dim, std::uint32_t direction, std::uint64_t seed) {
  Xoshiro256 rng(derive_seed(seed, kDirectionBase + direction));
  return l2_normalize(gaussian(rng, dim));
}

EmbeddingBatch apply_corruption(const EmbeddingBatch& stream, const CorruptionSpec& spec,
                                std::uint64_t seed) {
  spec.validate();
  if (spec.is_identity()) return stream;
  return apply_impl(stream, spec, seed, seed);
}

DiverseStream apply_diverse_corruption(const EmbeddingBatch& stream,
                                       const std::vector<CorruptionSpec>& domains, std::uint64_t seed) {
  if (domains.empty()) throw Error(ErrorKind::InvalidSpec, "no corruption domains");
  std::vector<EmbeddingBatch> versions;
  for (std::size_t d = 0; d < domains.size(); ++d) {
    versions.push_back(apply_corruption(stream, domains[d], derive_seed(seed, d)));
  }
  Xoshiro256 rng(derive_seed(seed, kDomainChoice));
  DiverseStream out;
  Matrix rows(stream.matrix().rows(), stream.matrix().cols());
  for (std::size_t i = 0; i < stream.size(); ++i) {
    const auto d = static_cast<std::size_t>(rng.below(domains.size()));
    out.domain.push_back(d);
    rows.row(static_cast<Eigen::Index>(i)) = versions[d].matrix().row(static_cast<Eigen::Index>(i));
  }
  out.queries = EmbeddingBatch(std::move(rows));
  return out;
}

EmbeddingBatch scale_queries(const EmbeddingBatch& z, double lambda) {
  if (!(lambda >= 0.0)) throw Error(ErrorKind::InvalidSpec, "scale factor must be non-negative");
  if (lambda == 1.0) return z;
  const Vector center = batch_mean(z);
  Matrix rows(z.matrix().rows(), z.matrix().cols());
  for (std::size_t i = 0; i < z.size(); ++i) {
    rows.row(static_cast<Eigen::Index>(i)) = l2_normalize(center + lambda * (z.row(i) - center)).transpose();
  }
  return EmbeddingBatch(std::move(rows));
}

EmbeddingBatch offset_queries(const EmbeddingBatch& z, const VectorRef& gallery_mean, double lambda) {
  if (static_cast<std::size_t>(gallery_mean.size()) != z.dim()) {
    throw Error(ErrorKind::DimMismatch, "gallery mean");
  }
  if (lambda == 0.0) return z;
  const Vector shift = lambda * (batch_mean(z) - gallery_mean);
  Matrix rows(z.matrix().rows(), z.matrix().cols());
  for (std::size_t i = 0; i < z.size(); ++i) {
    rows.row(static_cast<Eigen::Index>(i)) = l2_normalize(z.row(i) - shift).transpose();
  }
  return EmbeddingBatch(std::move(rows));
}

}  // namespace qshift
