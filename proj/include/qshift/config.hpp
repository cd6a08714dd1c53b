#pragma once

// Run configuration (JSON). Unknown keys are rejected at every level.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "qshift/engine.hpp"
#include "qshift/shift_lab.hpp"

namespace qshift {

enum class ShiftMode { oqs, dqs };

struct SynthBlock {
  SyntheticSpec spec;
  bool explicit_seed = false;
  /// oqs: corruptions applied in order to every query. dqs: each query
  /// draws one corruption from the list.
  ShiftMode mode = ShiftMode::oqs;
  std::vector<CorruptionSpec> corruptions;
};

struct DataPaths {
  std::filesystem::path gallery;
  std::filesystem::path queries;
  std::filesystem::path ground_truth;
};

struct ProbeOptions {
  std::vector<double> scale{1.0, 1.5, 2.0};
  std::vector<double> offset{0.0, 0.5, 1.0};
};

struct GradcheckOptions {
  std::size_t dim = 16;
  std::size_t batch = 8;
  std::size_t k = 4;
  std::size_t gallery_size = 64;
  std::size_t instances = 20;
  double tau = 0.02;
  double h = 1e-5;
  double tolerance = 1e-4;
  /// Test hook: corrupts the analytic gradients so the check must fail.
  bool perturb = false;
};

struct RunConfig {
  Method method = Method::rest;
  SessionConfig session;
  /// Unset means: on for dqs streams, off otherwise.
  std::optional<bool> decouple;
  std::optional<DataPaths> paths;
  std::optional<SynthBlock> synth;
  ProbeOptions probe;
  GradcheckOptions gradcheck;

  static RunConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;

  void override_seed(std::uint64_t seed);
  bool decouple_enabled() const;
  /// Session settings with the resolved decoupling flag.
  SessionConfig session_config() const;
};

RunConfig load_config(const std::filesystem::path& path);

CorruptionSpec corruption_from_json(const nlohmann::json& j);
nlohmann::json corruption_to_json(const CorruptionSpec& spec);

}  // namespace qshift
