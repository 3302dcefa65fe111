#ifndef DOORRL_HARNESS_H_
#define DOORRL_HARNESS_H_

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "doorrl/algos.h"

namespace doorrl {

// --- Configuration ----------------------------------------------------------

enum class Phase { kTeacher, kDistill, kFinetune, kEval, kAblateBuffer, kAblateGrpo };

std::string_view PhaseName(Phase phase);
Phase ParsePhase(std::string_view name);

enum class KeyType { kInt, kDouble, kBool, kString, kIntList, kDoubleList, kCategoryList };

struct ConfigKey {
  std::string name;
  KeyType type;
  std::string default_value;
  std::string help;
};

// Every accepted key. Keys outside this table are rejected.
const std::vector<ConfigKey>& ConfigSchema();

// Flat key=value text. '#' starts a comment; blank lines are ignored.
// Throws std::invalid_argument with the line number on malformed input.
std::map<std::string, std::string> ParseConfigText(const std::string& text);
std::map<std::string, std::string> LoadConfigFile(const std::string& path);

// Checks every key against the schema and every value against its type.
void ValidateConfig(const std::map<std::string, std::string>& values);

// "key=value"; the key must be in the schema.
void ApplyOverride(std::map<std::string, std::string>& values,
                   const std::string& assignment);

struct ExperimentConfig {
  Phase phase = Phase::kTeacher;
  std::vector<uint64_t> seeds{1};
  std::vector<DoorCategory> categories{DoorCategory::kPushLever};
  int num_envs = 64;
  int num_workers = 1;
  int iterations = 300;
  std::string out_dir = "runs/out";

  // Teacher.
  std::vector<int> hidden{64, 64};
  double init_log_std = -0.5;
  int buffer_size = 100;
  std::vector<int> buffer_sizes{0, 10, 100};  // ablation grid
  double initial_fraction = 0.7;
  std::optional<ResetLaw> reset_law;
  CollectConfig collect;
  PpoConfig ppo;
  int checkpoint_interval = 100;
  int eval_interval = 25;
  int eval_episodes = 16;
  double reach_fraction = 0.5;
  std::string resume;

  // Distillation and fine-tuning.
  std::string teacher;  // checkpoint path or "oracle"
  std::string student;  // checkpoint path
  std::vector<int> student_hidden{128, 128};
  double student_init_log_std = -2.0;
  int history_length = 10;
  int dagger_iterations = 8;
  DaggerConfig dagger;
  double student_lr = 1e-3;
  int grpo_iterations = 50;
  GrpoConfig grpo;

  // Evaluation.
  std::vector<uint64_t> eval_seeds{101, 102, 103};
  int episodes_per_category = 100;
  std::string policy;  // checkpoint path, "oracle" or "stand_still"
  std::string obs;     // "privileged" or "student"; empty picks from policy

  PhysicsConfig physics;
  RewardConfig reward;

  // Canonical key=value text over the full schema, sorted by key.
  std::map<std::string, std::string> values;
};

ExperimentConfig BuildExperimentConfig(
    const std::map<std::string, std::string>& values);

// FNV-1a over the canonical text of every schema value except out_dir and
// resume.
uint64_t ConfigHash(const ExperimentConfig& cfg);
std::string CanonicalConfigText(const ExperimentConfig& cfg);

// --- Runs -------------------------------------------------------------------

// Stage k counts as reached at an evaluation when at least reach_fraction of
// the deterministic held-out episodes got to stage >= k.
int ReachedStage(const CategoryReport& report, double reach_fraction);

struct TeacherRun {
  PolicyParams policy;
  std::array<int, kNumStages> first_reach{};     // -1 when never reached
  std::array<int, kNumStages> first_seen{};      // any rollout env, or -1
  int iterations_done = 0;
  double final_success = 0.0;
  bool aborted = false;
};

// PPO teacher with staged reset. Writes metrics.csv, checkpoints,
// teacher.ckpt and manifest.txt into out_dir.
TeacherRun RunTrainTeacher(const ExperimentConfig& cfg, uint64_t seed,
                           const std::string& out_dir);

struct DistillRun {
  ActorParams student;
  std::vector<DaggerMetrics> iterations;
  double held_out_mse = 0.0;
};
DistillRun RunDistill(const ExperimentConfig& cfg, uint64_t seed,
                      const std::string& out_dir);

struct FinetuneRun {
  ActorParams student;
  std::vector<GrpoMetrics> iterations;
};
FinetuneRun RunFinetune(const ExperimentConfig& cfg, uint64_t seed,
                        const std::string& out_dir,
                        const ActorParams* start = nullptr);

// Aggregates one EvalReport per eval seed.
std::vector<EvalReport> RunEval(const ExperimentConfig& cfg,
                                const std::string& out_dir);

struct BufferAblationRow {
  int buffer_size = 0;
  uint64_t seed = 0;
  std::array<int, kNumStages> first_reach{};
  std::array<int, kNumStages> first_seen{};
  double final_success = 0.0;
};
struct BufferAblation {
  std::vector<BufferAblationRow> rows;
  std::string table;
};
BufferAblation RunAblationBuffer(const ExperimentConfig& cfg,
                                 const std::string& out_dir);

struct GrpoAblation {
  std::vector<double> before;   // per eval seed
  std::vector<double> after;
  std::vector<double> teacher;
  std::string table;
};
GrpoAblation RunAblationGrpo(const ExperimentConfig& cfg,
                             const std::string& out_dir);

// Dispatches on cfg.phase with seeds[0] where a single seed applies.
void RunPhase(const ExperimentConfig& cfg);

// Policy loaders shared by the CLI.
BatchActFn LoadActFn(const ExperimentConfig& cfg, ObsKind* kind);

void WriteManifest(const ExperimentConfig& cfg, const std::string& out_dir,
                   const std::vector<uint64_t>& seeds,
                   const std::vector<uint64_t>& door_seeds = {});

}  // namespace doorrl

#endif  // DOORRL_HARNESS_H_
