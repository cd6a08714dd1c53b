#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <string>

#include <gtest/gtest.h>
#include <sys/wait.h>

#include "qshift/config.hpp"
#include "qshift/errors.hpp"
#include "qshift/harness.hpp"
#include "qshift/io.hpp"

namespace qshift {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected an error";
  return ErrorKind::BadInput;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

json small_synth(json corruptions = json::array()) {
  return {{"classes", 8}, {"dim", 8},  {"gallery_size", 64}, {"stream_length", 128},
          {"seed", 3},    {"corruptions", corruptions}};
}

class HarnessTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("qshift_harness_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  fs::path dir_;
};

TEST(Config, DefaultsAndUnknownKeys) {
  const RunConfig c = RunConfig::from_json(json::object());
  EXPECT_EQ(c.method, Method::rest);
  EXPECT_EQ(c.session.tau, 0.02);
  EXPECT_EQ(c.session.k, 10u);
  EXPECT_EQ(c.session.batch, 64u);
  EXPECT_EQ(c.session.lr, 1e-3);
  EXPECT_FALSE(c.decouple_enabled());

  EXPECT_EQ(kind_of([] { RunConfig::from_json({{"learning_rate", 0.1}}); }), ErrorKind::BadConfig);
  EXPECT_EQ(kind_of([] { RunConfig::from_json({{"synth", {{"clases", 2}}}}); }), ErrorKind::BadConfig);
  EXPECT_EQ(kind_of([] { RunConfig::from_json({{"synth", {{"corruptions", {{{"kind", "blur"}}}}}}}); }),
            ErrorKind::BadConfig);
  EXPECT_EQ(kind_of([] { RunConfig::from_json({{"method", "eata"}}); }), ErrorKind::BadConfig);
  EXPECT_EQ(kind_of([] { RunConfig::from_json({{"tau", "hot"}}); }), ErrorKind::BadConfig);
}

TEST(Config, DecouplingDefaultsFollowShiftMode) {
  const json domains = {{{"kind", "gaussian_noise"}, {"sigma", 0.1}}, {{"kind", "uniformity_collapse"}, {"rho", 0.5}}};
  EXPECT_TRUE(RunConfig::from_json({{"synth", {{"mode", "dqs"}, {"corruptions", domains}}}}).decouple_enabled());
  EXPECT_FALSE(RunConfig::from_json({{"synth", {{"mode", "oqs"}, {"corruptions", domains}}}}).decouple_enabled());
  EXPECT_FALSE(RunConfig::from_json({{"decouple", false}, {"synth", {{"mode", "dqs"}, {"corruptions", domains}}}})
                   .decouple_enabled());
  EXPECT_EQ(kind_of([] { RunConfig::from_json({{"synth", {{"mode", "dqs"}}}}); }), ErrorKind::BadConfig);
  EXPECT_TRUE(RunConfig::from_json({{"decouple", true}}).session_config().decouple);
}

TEST(Config, JsonRoundTripAndSeedOverride) {
  const json j = {{"method", "tent"},
                  {"lr", 0.01},
                  {"synth", small_synth({{{"kind", "compose"},
                                          {"steps", {{{"kind", "mean_shift"}, {"direction", 1}, {"delta", 0.5}},
                                                     {{"kind", "gaussian_noise"}, {"sigma", 0.1}}}}}})}};
  const RunConfig c = RunConfig::from_json(j);
  EXPECT_EQ(RunConfig::from_json(c.to_json()).to_json(), c.to_json());

  RunConfig over = RunConfig::from_json({{"synth", {{"classes", 4}}}});
  over.override_seed(99);
  EXPECT_EQ(over.session.seed, 99u);
  EXPECT_EQ(over.synth->spec.seed, 99u);
}

TEST_F(HarnessTest, SynthWritesLoadableFiles) {
  const RunConfig c = RunConfig::from_json(
      {{"synth", {{"classes", 2}, {"dim", 4}, {"gallery_size", 4}, {"stream_length", 6}, {"seed", 1}}}});
  cmd_synth(c, dir_);
  for (const char* f : {"gallery.emb", "queries_clean.emb", "queries.emb", "ground_truth.tsv"}) {
    EXPECT_TRUE(fs::exists(dir_ / f)) << f;
  }
  const Dataset d = load_dataset(c);
  const auto as_float = [](const Matrix& m) { return Matrix(m.cast<float>().cast<double>()); };
  EXPECT_EQ(read_embeddings(dir_ / "gallery.emb").matrix(), as_float(d.gallery->items().matrix()));
  EXPECT_EQ(read_embeddings(dir_ / "queries.emb").matrix(), as_float(d.queries.matrix()));
  EXPECT_EQ(read_ground_truth(dir_ / "ground_truth.tsv", 6, 4).relevant, d.truth.relevant);
}

TEST_F(HarnessTest, SynthIsByteIdenticalAcrossRuns) {
  const RunConfig c = RunConfig::from_json(
      {{"synth", small_synth({{{"kind", "gaussian_noise"}, {"sigma", 0.2}}})}});
  cmd_synth(c, dir_ / "a");
  cmd_synth(c, dir_ / "b");
  for (const char* f : {"gallery.emb", "queries_clean.emb", "queries.emb", "ground_truth.tsv"}) {
    EXPECT_EQ(slurp(dir_ / "a" / f), slurp(dir_ / "b" / f)) << f;
  }
}

TEST_F(HarnessTest, CorruptedStreamDiffersIffCorruptionActs) {
  const auto differs = [&](const json& corruptions, const std::string& name) {
    cmd_synth(RunConfig::from_json({{"synth", small_synth(corruptions)}}), dir_ / name);
    return slurp(dir_ / name / "queries.emb") != slurp(dir_ / name / "queries_clean.emb");
  };
  EXPECT_FALSE(differs(json::array(), "none"));
  EXPECT_FALSE(differs({{{"kind", "mean_shift"}, {"direction", 0}, {"delta", 0.0}}}, "zero_shift"));
  EXPECT_FALSE(differs({{{"kind", "uniformity_collapse"}, {"rho", 0.0}}}, "zero_collapse"));
  EXPECT_TRUE(differs({{{"kind", "mean_shift"}, {"direction", 0}, {"delta", 0.5}}}, "shift"));
  EXPECT_TRUE(differs({{{"kind", "uniformity_collapse"}, {"rho", 0.8}}}, "collapse"));
  EXPECT_TRUE(differs({{{"kind", "gaussian_noise"}, {"sigma", 0.1}}}, "noise"));
}

TEST_F(HarnessTest, PathsConfigMatchesSynthConfig) {
  const RunConfig synth = RunConfig::from_json({{"method", "none"}, {"batch", 32}, {"synth", small_synth()}});
  cmd_synth(synth, dir_);
  const RunConfig paths = RunConfig::from_json(
      {{"method", "none"},
       {"batch", 32},
       {"paths",
        {{"gallery", (dir_ / "gallery.emb").string()},
         {"queries", (dir_ / "queries.emb").string()},
         {"ground_truth", (dir_ / "ground_truth.tsv").string()}}}});
  const json a = cmd_adapt(synth);
  const json b = cmd_adapt(paths);
  EXPECT_NEAR(a["recall"]["r1"].get<double>(), b["recall"]["r1"].get<double>(), 1e-12);
}

TEST(Adapt, NoneMatchesZeroShotOracle) {
  const RunConfig c = RunConfig::from_json({{"method", "none"}, {"batch", 32}, {"synth", small_synth()}});
  const Dataset d = load_dataset(c);
  const AdaptRun run = run_adapt(c, d);
  std::vector<std::vector<GalleryId>> oracle;
  const EmbeddingBatch z = l2_normalize_rows(d.queries);
  for (std::size_t i = 0; i < z.size(); ++i) oracle.push_back(knn_ids(*d.gallery, z.row(i), 10));
  EXPECT_EQ(run.report["recall"]["r1"].get<double>(), recall_at_k(oracle, d.truth, 1));
  EXPECT_EQ(run.report["recall"]["r10"].get<double>(), recall_at_k(oracle, d.truth, 10));
  EXPECT_TRUE(run.params.is_identity());
  EXPECT_EQ(run.online.recall_1, run.source.recall_1);
}

TEST(Adapt, FirstStepCoincidesWithSource) {
  const RunConfig c = RunConfig::from_json(
      {{"method", "rest"}, {"decouple", true}, {"batch", 32},
       {"synth", small_synth({{{"kind", "mean_shift"}, {"direction", 0}, {"delta", 0.5}}})}});
  const json r = cmd_adapt(c);
  EXPECT_EQ(r["schema"], 1);
  const json& step0 = r["series"][0];
  EXPECT_EQ(step0["step"], 0);
  EXPECT_EQ(step0["d_kl"].get<double>(), 0.0);
  EXPECT_EQ(step0["w_d"].get<double>(), 1.0);
  EXPECT_EQ(r["series"].size(), 4u);
  EXPECT_TRUE(r.contains("wall_clock_seconds"));
  EXPECT_TRUE(r.contains("delta_s"));
}

TEST(Adapt, RestClosesTheGapWhereNoneDoesNot) {
  const json shift = {{{"kind", "mean_shift"}, {"direction", 0}, {"delta", 0.5}}};
  // Criterion scale: 64 classes, 32 dims, 512 gallery items and queries.
  const json spec = {{"seed", 3}, {"corruptions", shift}};
  const RunConfig rest = RunConfig::from_json({{"method", "rest"}, {"synth", spec}});
  const RunConfig none = RunConfig::from_json({{"method", "none"}, {"synth", spec}});
  const Dataset d = load_dataset(rest);
  const AdaptRun r = run_adapt(rest, d);
  const AdaptRun n = run_adapt(none, d);
  ASSERT_TRUE(r.delta_s.has_value());
  EXPECT_LT(std::abs(r.final_state.delta_t - *r.delta_s), std::abs(n.final_state.delta_t - *r.delta_s));
}

TEST(Adapt, ReportsAreDeterministic) {
  const RunConfig c = RunConfig::from_json(
      {{"method", "rest"}, {"batch", 32}, {"synth", small_synth({{{"kind", "uniformity_collapse"}, {"rho", 0.8}}})}});
  json a = cmd_adapt(c);
  json b = cmd_adapt(c);
  a.erase("wall_clock_seconds");
  b.erase("wall_clock_seconds");
  EXPECT_EQ(a.dump(), b.dump());
}

TEST(Probe, IdentityFactorsReproduceNone) {
  RunConfig c = RunConfig::from_json({{"method", "none"}, {"batch", 32},
                                      {"synth", small_synth({{{"kind", "uniformity_collapse"}, {"rho", 0.8}}})}});
  c.probe.scale = {1.0};
  c.probe.offset = {0.0};
  const Dataset d = load_dataset(c);
  const json probe = run_probe(c, d);
  const json none = run_adapt(c, d).report["metrics"];
  for (const auto& key : {"recall_1", "recall_5", "recall_10", "uniformity", "gap", "consistency", "delta_t"}) {
    EXPECT_EQ(probe["scale"][0][key], none[key]) << key;
    EXPECT_EQ(probe["offset"][0][key], none[key]) << key;
    EXPECT_EQ(probe["baseline"][key], none[key]) << key;
  }
}

TEST(Gradcheck, DefaultPasses) {
  const GradcheckResult r = run_gradcheck(GradcheckOptions{}, 0);
  EXPECT_TRUE(r.passed) << r.worst;
  for (const char* term : {"uniformity", "gap", "rem", "rhm", "total", "em", "pl", "kl"}) {
    ASSERT_TRUE(r.max_relative_error.count(term)) << term;
    EXPECT_LT(r.max_relative_error.at(term), 1e-4) << term;
  }
}

TEST(Gradcheck, PerturbedGradientFails) {
  GradcheckOptions o;
  o.instances = 3;
  o.perturb = true;
  EXPECT_FALSE(run_gradcheck(o, 0).passed);
}

TEST(Gradcheck, SingleDimensionPasses) {
  GradcheckOptions o;
  o.dim = 1;
  o.gallery_size = 16;
  o.k = 2;
  const GradcheckResult r = run_gradcheck(o, 0);
  EXPECT_TRUE(r.passed) << r.worst;
  EXPECT_TRUE(std::isfinite(r.worst));
}

#ifdef QSHIFT_CLI_PATH
int run_cli(const std::string& args) {
  const std::string cmd = std::string(QSHIFT_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST_F(HarnessTest, CliExitCodes) {
  const auto write = [&](const std::string& name, const json& j) {
    std::ofstream(dir_ / name) << j.dump();
    return (dir_ / name).string();
  };
  const std::string good = write("good.json", {{"method", "none"}, {"batch", 32}, {"synth", small_synth()}});
  EXPECT_EQ(run_cli("adapt --config " + good + " --out " + (dir_ / "r.json").string()), 0);
  EXPECT_TRUE(json::parse(slurp(dir_ / "r.json")).contains("recall"));
  EXPECT_EQ(run_cli("synth --config " + good + " --out " + (dir_ / "data").string()), 0);
  EXPECT_EQ(run_cli("probe --config " + good + " --scale 1,2 --offset 0"), 0);
  EXPECT_EQ(run_cli("metrics --config " + good), 0);
  EXPECT_EQ(run_cli("gradcheck --seed 1"), 0);

  EXPECT_EQ(run_cli("adapt --config " + write("bad.json", {{"bogus", 1}})), 2);
  std::ofstream(dir_ / "broken.json") << "{ not json";
  EXPECT_EQ(run_cli("adapt --config " + (dir_ / "broken.json").string()), 2);
  EXPECT_EQ(run_cli("adapt --config " + write("tau.json", {{"tau", 0.0}, {"synth", small_synth()}})), 2);
  EXPECT_EQ(run_cli("frobnicate"), 2);

  std::ofstream(dir_ / "junk.emb") << "not an embedding file";
  const std::string missing = write(
      "paths.json", {{"paths",
                      {{"gallery", (dir_ / "junk.emb").string()},
                       {"queries", (dir_ / "junk.emb").string()},
                       {"ground_truth", (dir_ / "nothing.tsv").string()}}}});
  EXPECT_EQ(run_cli("adapt --config " + missing), 3);

  const std::string perturbed = write("perturb.json", {{"gradcheck", {{"perturb", true}, {"instances", 2}}}});
  EXPECT_EQ(run_cli("gradcheck --config " + perturbed), 4);
}
#endif

}  // namespace
}  // namespace qshift
