#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doorrl/checkpoint.h"
#include "doorrl/harness.h"
#include "gtest/gtest.h"

namespace doorrl {
namespace {

namespace fs = std::filesystem;

std::string ReadFile(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path TempDir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("doorrl_harness_" + name);
  fs::remove_all(p);
  return p;
}

ExperimentConfig TinyTeacher(const std::vector<std::string>& extra = {}) {
  std::map<std::string, std::string> v = ParseConfigText(
      "phase=teacher\n"
      "categories=push_lever,push_bar\n"
      "num_envs=4\n"
      "num_steps=8\n"
      "iterations=4\n"
      "hidden=16\n"
      "eval_interval=2\n"
      "eval_episodes=2\n"
      "checkpoint_interval=2\n"
      "buffer_size=5\n"
      "physics.timeout=1\n");
  for (const std::string& s : extra) ApplyOverride(v, s);
  return BuildExperimentConfig(v);
}

TEST(Config, ParsesCommentsAndBlankLines) {
  const auto v = ParseConfigText("# comment\n\n num_envs = 8 # trailing\niterations=3\n");
  EXPECT_EQ(v.at("num_envs"), "8");
  EXPECT_EQ(v.at("iterations"), "3");
  const ExperimentConfig cfg = BuildExperimentConfig(v);
  EXPECT_EQ(cfg.num_envs, 8);
  EXPECT_EQ(cfg.iterations, 3);
  EXPECT_EQ(cfg.buffer_size, 100);  // defaults fill the rest
}

TEST(Config, RejectsMalformedInput) {
  try {
    ParseConfigText("num_envs=8\nthis line has no equals\n");
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("2"), std::string::npos);
  }
  EXPECT_THROW(ValidateConfig({{"no_such_key", "1"}}), std::invalid_argument);
  EXPECT_THROW(ValidateConfig({{"num_envs", "eight"}}), std::invalid_argument);
  EXPECT_THROW(ValidateConfig({{"num_envs", "8.5"}}), std::invalid_argument);
  EXPECT_THROW(ValidateConfig({{"staged_reset", "maybe"}}), std::invalid_argument);
  EXPECT_THROW(ValidateConfig({{"categories", "revolving"}}), std::invalid_argument);
  std::map<std::string, std::string> v;
  EXPECT_THROW(ApplyOverride(v, "no_such_key=1"), std::invalid_argument);
  EXPECT_THROW(ApplyOverride(v, "missing_equals"), std::invalid_argument);
  EXPECT_THROW(BuildExperimentConfig({{"phase", "sleep"}}), std::invalid_argument);
  EXPECT_THROW(LoadConfigFile("/nonexistent/x.cfg"), std::runtime_error);
}

TEST(Config, SchemaDefaultsAreValid) {
  std::map<std::string, std::string> v;
  for (const ConfigKey& k : ConfigSchema()) v[k.name] = k.default_value;
  EXPECT_NO_THROW(ValidateConfig(v));
  const ExperimentConfig a = BuildExperimentConfig(v);
  const ExperimentConfig b = BuildExperimentConfig({});
  EXPECT_EQ(CanonicalConfigText(a), CanonicalConfigText(b));
}

TEST(Config, HashIgnoresOnlyLocationKeys) {
  const ExperimentConfig base = TinyTeacher();
  EXPECT_EQ(ConfigHash(base), ConfigHash(TinyTeacher({"out_dir=/elsewhere"})));
  EXPECT_EQ(ConfigHash(base), ConfigHash(TinyTeacher({"resume=/some/ckpt.bin"})));
  EXPECT_NE(ConfigHash(base), ConfigHash(TinyTeacher({"iterations=5"})));
  EXPECT_NE(ConfigHash(base), ConfigHash(TinyTeacher({"reward.not_standing_still=-1.5"})));
}

TEST(Config, ReachedStageUsesFraction) {
  CategoryReport r;
  r.episodes = 10;
  r.furthest_stage = {2, 2, 1, 0, 0, 5};
  EXPECT_EQ(ReachedStage(r, 0.5), 5);
  EXPECT_EQ(ReachedStage(r, 0.6), 2);
  EXPECT_EQ(ReachedStage(r, 1.0), 0);
}

TEST(Teacher, ZeroBudgetWritesOnlyInitialState) {
  const fs::path dir = TempDir("zero");
  const ExperimentConfig cfg = TinyTeacher({"iterations=0"});
  const TeacherRun run = RunTrainTeacher(cfg, 1, dir.string());
  EXPECT_EQ(run.iterations_done, 0);
  EXPECT_TRUE(fs::exists(dir / "ckpt_000000.bin"));
  EXPECT_TRUE(fs::exists(dir / "teacher.ckpt"));
  EXPECT_TRUE(fs::exists(dir / "manifest.txt"));
  int ckpts = 0;
  for (const auto& e : fs::directory_iterator(dir)) {
    ckpts += e.path().filename().string().rfind("ckpt_", 0) == 0 &&
             e.path().extension() == ".bin";
  }
  EXPECT_EQ(ckpts, 1);
  const std::string csv = ReadFile(dir / "metrics.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1);  // header only
}

TEST(Teacher, MetricsAreByteDeterministicAndResumable) {
  const ExperimentConfig cfg = TinyTeacher();
  const fs::path a = TempDir("a"), b = TempDir("b"), c = TempDir("c");
  const TeacherRun ra = RunTrainTeacher(cfg, 3, a.string());
  RunTrainTeacher(cfg, 3, b.string());
  const std::string csv = ReadFile(a / "metrics.csv");
  EXPECT_EQ(csv, ReadFile(b / "metrics.csv"));
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
  EXPECT_TRUE(fs::exists(a / "ckpt_000002.bin"));
  EXPECT_TRUE(fs::exists(a / "ckpt_000004.bin"));

  // Stop after two iterations, then resume in place to four.
  RunTrainTeacher(TinyTeacher({"iterations=2"}), 3, c.string());
  const ExperimentConfig resumed =
      TinyTeacher({"resume=" + (c / "ckpt_000002.bin").string()});
  const TeacherRun rc = RunTrainTeacher(resumed, 3, c.string());
  EXPECT_EQ(rc.iterations_done, 4);
  EXPECT_EQ(ReadFile(c / "metrics.csv"), csv);
  EXPECT_EQ(rc.policy.Flatten(), ra.policy.Flatten());
  EXPECT_EQ(rc.first_seen, ra.first_seen);

  // Different seeds give different runs.
  const fs::path d = TempDir("d");
  RunTrainTeacher(cfg, 4, d.string());
  EXPECT_NE(ReadFile(d / "metrics.csv"), csv);
}

TEST(Teacher, ManifestRecordsProvenance) {
  const fs::path dir = TempDir("manifest");
  const ExperimentConfig cfg = TinyTeacher({"iterations=1"});
  RunTrainTeacher(cfg, 7, dir.string());
  const std::string m = ReadFile(dir / "manifest.txt");
  char hash[32];
  std::snprintf(hash, sizeof(hash), "%016llx",
                static_cast<unsigned long long>(ConfigHash(cfg)));
  EXPECT_NE(m.find("phase=teacher\n"), std::string::npos);
  EXPECT_NE(m.find(std::string("config_hash=") + hash), std::string::npos);
  EXPECT_NE(m.find("seeds=7\n"), std::string::npos);
  EXPECT_NE(m.find("code_version="), std::string::npos);
  EXPECT_NE(m.find("num_envs=4"), std::string::npos);
  const PolicyParams p = ExtractPolicy(LoadCheckpoint((dir / "teacher.ckpt").string()));
  EXPECT_EQ(p.actor.mean.hidden(), std::vector<int>{16});
}

ExperimentConfig EvalConfigFor(const std::string& policy) {
  std::map<std::string, std::string> v = ParseConfigText(
      "phase=eval\n"
      "categories=push_lever,pull_lever,push_bar\n"
      "episodes_per_category=6\n"
      "eval_seeds=101,102\n");
  ApplyOverride(v, "policy=" + policy);
  if (policy == "stand_still") ApplyOverride(v, "physics.timeout=2");
  return BuildExperimentConfig(v);
}

TEST(Eval, BaselinesAndHeldOutSeeds) {
  const fs::path still_dir = TempDir("still"), oracle_dir = TempDir("oracle");
  const std::vector<EvalReport> still = RunEval(EvalConfigFor("stand_still"), still_dir.string());
  const std::vector<EvalReport> oracle = RunEval(EvalConfigFor("oracle"), oracle_dir.string());
  ASSERT_EQ(still.size(), 2u);
  for (const EvalReport& r : still) {
    for (const CategoryReport& c : r.categories) EXPECT_EQ(c.successes, 0);
  }
  for (const EvalReport& r : oracle) {
    ASSERT_EQ(r.categories.size(), 3u);
    // Recount the aggregate from the per-episode flags.
    int flagged = 0;
    for (const EpisodeInfo& e : r.episodes) flagged += e.success;
    int counted = 0;
    for (const CategoryReport& c : r.categories) {
      counted += c.successes;
      EXPECT_EQ(c.episodes, 6);
      EXPECT_DOUBLE_EQ(c.success_rate, static_cast<double>(c.successes) / c.episodes);
    }
    EXPECT_EQ(flagged, counted);
    EXPECT_EQ(counted, 18);
    for (uint64_t s : r.door_seeds) EXPECT_TRUE(IsEvalDoorSeed(s));
  }
  // Same seeds give the same doors regardless of the policy.
  EXPECT_EQ(still[0].door_seeds, oracle[0].door_seeds);
  EXPECT_NE(oracle[0].door_seeds, oracle[1].door_seeds);
  const std::string m = ReadFile(oracle_dir / "manifest.txt");
  EXPECT_NE(m.find("eval_door_seeds="), std::string::npos);
  EXPECT_NE(m.find("seeds=101,102\n"), std::string::npos);
  EXPECT_TRUE(fs::exists(oracle_dir / "eval_report.txt"));
}

}  // namespace
}  // namespace doorrl
