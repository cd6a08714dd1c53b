// qshift: synthetic query-shift benchmarks, online adaptation runs, probe
// studies and gradient checks from the command line.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "qshift/config.hpp"
#include "qshift/errors.hpp"
#include "qshift/harness.hpp"

namespace {

enum ExitCode : int { kOk = 0, kFailure = 1, kBadConfig = 2, kBadInput = 3, kCheckFailed = 4 };

int exit_code_for(qshift::ErrorKind kind) {
  using qshift::ErrorKind;
  switch (kind) {
    case ErrorKind::BadConfig:
    case ErrorKind::InvalidSpec:
    case ErrorKind::UnknownBaseline:
    case ErrorKind::NonPositiveTemperature:
    case ErrorKind::InvalidK:
      return kBadConfig;
    case ErrorKind::IoError:
    case ErrorKind::BadInput:
    case ErrorKind::NonFinite:
    case ErrorKind::NotNormalized:
    case ErrorKind::IndexOutOfRange:
    case ErrorKind::DimMismatch:
    case ErrorKind::EmptyBatch:
      return kBadInput;
    default:
      return kFailure;
  }
}

void emit(const nlohmann::json& report, const std::string& out) {
  const std::string text = report.dump(2) + "\n";
  if (out.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream f(out, std::ios::binary | std::ios::trunc);
  if (!f) throw qshift::Error(qshift::ErrorKind::IoError, "cannot write " + out);
  f << text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Test-time adaptation for cross-modal retrieval under query shift"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_path;
  std::optional<std::uint64_t> seed;
  std::vector<double> scales;
  std::vector<double> offsets;

  const auto common = [&](CLI::App* sub, bool config_required) {
    auto* opt = sub->add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
    if (config_required) opt->required();
    sub->add_option("--out", out_path, "output path (report file, or directory for synth)");
    sub->add_option("--seed", seed, "overrides the config seed");
  };

  auto* synth = app.add_subcommand("synth", "write a synthetic gallery, query streams and ground truth");
  common(synth, true);
  synth->get_option("--out")->required();
  auto* adapt = app.add_subcommand("adapt", "stream queries through the configured method");
  common(adapt, true);
  auto* probe = app.add_subcommand("probe", "scale/offset probe study on the source head");
  common(probe, true);
  probe->add_option("--scale", scales, "scale factors")->delimiter(',');
  probe->add_option("--offset", offsets, "offset factors")->delimiter(',');
  auto* gradcheck = app.add_subcommand("gradcheck", "analytic vs finite-difference gradients");
  common(gradcheck, false);
  auto* metrics = app.add_subcommand("metrics", "retrieval metrics of the unadapted head");
  common(metrics, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kBadConfig;
  }

  try {
    qshift::RunConfig config = config_path.empty() ? qshift::RunConfig{} : qshift::load_config(config_path);
    if (seed) config.override_seed(*seed);

    if (synth->parsed()) {
      emit(qshift::cmd_synth(config, out_path), "");
    } else if (adapt->parsed()) {
      emit(qshift::cmd_adapt(config), out_path);
    } else if (probe->parsed()) {
      if (!scales.empty()) config.probe.scale = scales;
      if (!offsets.empty()) config.probe.offset = offsets;
      emit(qshift::cmd_probe(config), out_path);
    } else if (metrics->parsed()) {
      emit(qshift::cmd_metrics(config), out_path);
    } else if (gradcheck->parsed()) {
      const auto result = qshift::run_gradcheck(config.gradcheck, config.session.seed);
      emit(result.to_json(config.gradcheck), out_path);
      std::cerr << "gradcheck: max relative error " << result.worst << " (tolerance "
                << config.gradcheck.tolerance << ") " << (result.passed ? "PASS" : "FAIL") << "\n";
      return result.passed ? kOk : kCheckFailed;
    }
  } catch (const qshift::Error& e) {
    std::cerr << "qshift: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "qshift: " << e.what() << "\n";
    return kFailure;
  }
  return kOk;
}
