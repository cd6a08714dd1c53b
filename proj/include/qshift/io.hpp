#pragma once

// On-disk formats.
//
// EMB1: "EMB1", u32 LE row count N, u32 LE dim D, then N*D float32 LE,
// row-major. Nothing else, so the file is exactly 12 + 4*N*D bytes.
//
// Ground truth: UTF-8 text, one "<query_index>\t<gallery_index>\n" line per
// relevant pair. A query may appear on several lines.

#include <filesystem>

#include "qshift/embedding.hpp"
#include "qshift/metrics.hpp"

namespace qshift {

void write_embeddings(const std::filesystem::path& path, const EmbeddingBatch& batch);
EmbeddingBatch read_embeddings(const std::filesystem::path& path);

void write_ground_truth(const std::filesystem::path& path, const GroundTruth& gt);
/// Validates indices against the stream and gallery sizes; every query in
/// [0, query_count) must have at least one line.
GroundTruth read_ground_truth(const std::filesystem::path& path, std::size_t query_count,
                              std::size_t gallery_size);

}  // namespace qshift
