#pragma once

// Experiment orchestration behind the command-line subcommands. Every
// command returns its report as JSON; file output is left to the caller
// except for cmd_synth, whose product is files.

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include <json.hpp>

#include "qshift/adapter.hpp"
#include "qshift/config.hpp"
#include "qshift/gallery.hpp"
#include "qshift/metrics.hpp"

namespace qshift {

inline constexpr int kReportSchema = 1;

struct Dataset {
  std::shared_ptr<const Gallery> gallery;
  /// Raw stream fed to the session (corrupted when a corruption is set).
  EmbeddingBatch queries;
  /// Synthetic runs only: the stream before corruption.
  std::optional<EmbeddingBatch> clean_queries;
  GroundTruth truth;
};

/// Builds the dataset from `paths` (EMB1 + ground truth) or `synth`.
Dataset load_dataset(const RunConfig& config);

struct AdaptRun {
  nlohmann::json report;
  /// Online metrics: each batch embedded with the parameters right after its update.
  MetricsReport online;
  /// Whole stream under the identity (source) head.
  MetricsReport source;
  /// Whole stream under the final parameters.
  MetricsReport final_state;
  /// Last source-gap estimate (rest only).
  std::optional<double> delta_s;
  AdapterParams params;
};

AdaptRun run_adapt(const RunConfig& config, const Dataset& data);

nlohmann::json cmd_synth(const RunConfig& config, const std::filesystem::path& out_dir);
nlohmann::json cmd_adapt(const RunConfig& config);
nlohmann::json cmd_probe(const RunConfig& config);
nlohmann::json cmd_metrics(const RunConfig& config);

/// Probe study on an already loaded dataset.
nlohmann::json run_probe(const RunConfig& config, const Dataset& data);

struct GradcheckResult {
  /// Largest relative error per objective over all instances.
  std::map<std::string, double> max_relative_error;
  double worst = 0.0;
  bool passed = false;
  nlohmann::json to_json(const GradcheckOptions& options) const;
};

GradcheckResult run_gradcheck(const GradcheckOptions& options, std::uint64_t seed);

}  // namespace qshift
