#ifndef DOORRL_ALGOS_H_
#define DOORRL_ALGOS_H_

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "doorrl/door_gen.h"
#include "doorrl/env.h"
#include "doorrl/nn.h"
#include "doorrl/reward_machine.h"
#include "doorrl/staged_reset.h"

namespace doorrl {

// Affine map between the policy's unsquashed output and simulator commands.
struct ActionMap {
  std::array<double, kActionDim> scale{0.5, 0.5, 0.75, 0.3, 0.3, 0.5};
  std::array<double, kActionDim> offset{0.0, 0.0, 0.0, 0.0, 0.0, 0.5};

  Action ToEnv(const double* raw) const;
  Vector FromEnv(const Action& action) const;
};

// Door-spec seeds: training seeds have the top bit clear, held-out seeds
// have it set, so the two sets can never intersect.
uint64_t TrainDoorSeed(uint64_t raw);
uint64_t EvalDoorSeed(uint64_t raw);
bool IsEvalDoorSeed(uint64_t seed);

enum class SeedDomain { kTrain, kEval };
enum class ObsKind { kPrivileged, kStudent };

int ObsDim(ObsKind kind, int history_length = 10);

// Runs fn(i) for i in [0, n); with workers > 1 on a static partition.
void ParallelFor(int n, int workers, const std::function<void(int)>& fn);

struct PoolConfig {
  int num_envs = 64;
  std::vector<DoorCategory> categories{DoorCategory::kPushLever};
  uint64_t seed = 0;
  SeedDomain domain = SeedDomain::kTrain;
  PhysicsConfig physics;
  RewardConfig reward;
  ActionMap action_map;
  bool track_history = false;  // maintain student frame stacks
  int history_length = 10;
  int num_workers = 1;
};

struct EnvSlot {
  DoorSpec spec;
  WorldState world;
  Action prev_action;  // command applied on the previous control step
  StudentHistory history;
  Rng rng;  // resets, door draws and action noise for this env

  double episode_return = 0.0;
  int start_stage = 0;
  int max_stage = 0;
  bool from_snapshot = false;
};

struct EpisodeInfo {
  int env = 0;
  DoorCategory category = DoorCategory::kPushLever;
  uint64_t door_seed = 0;
  TerminationReason reason = TerminationReason::kNone;
  bool success = false;
  double episode_return = 0.0;
  double duration = 0.0;  // s
  int start_stage = 0;
  int final_stage = 0;
  bool from_snapshot = false;
};

// Outcome of one control step of one env.
struct EnvStepInfo {
  double reward = 0.0;  // unscaled stage reward
  bool terminated = false;
  bool timeout = false;
  int stage_before = 0;
  int stage_after = 0;
  RewardBreakdown breakdown;  // empty unless rewards were computed
};

// Vector of independent environments. Each initial reset draws a fresh door.
class EnvPool {
 public:
  explicit EnvPool(const PoolConfig& config);

  int size() const { return static_cast<int>(envs_.size()); }
  const PoolConfig& config() const { return config_; }
  EnvSlot& env(int i) { return envs_.at(i); }
  const EnvSlot& env(int i) const { return envs_.at(i); }

  // Initial reset with a newly sampled door, or a staged reset when a buffer
  // is given. law == nullptr uses DefaultResetLaw(buffer, initial_fraction).
  void Reset(int i, const StageResetBuffer* buffer = nullptr,
             const ResetLaw* law = nullptr, double initial_fraction = 0.7);
  // Starts env i from a fixed state on a fixed door.
  void ResetTo(int i, const WorldState& world, const DoorSpec& spec);

  Matrix Observe(ObsKind kind) const;
  Vector ObserveOne(int i, ObsKind kind) const;

  // Steps every env (or only `subset`) with the simulator actions, in
  // parallel over workers. Stage-entry snapshots go into `buffer` in env
  // order. Does not reset.
  std::vector<EnvStepInfo> StepAll(const std::vector<Action>& actions,
                                   StageResetBuffer* buffer = nullptr,
                                   bool compute_reward = true,
                                   const std::vector<int>* subset = nullptr);

  EpisodeInfo Finish(int i) const;

 private:
  void PushFrame(int i);
  PoolConfig config_;
  std::vector<EnvSlot> envs_;
};

// --- Rollouts and advantages ------------------------------------------------

struct RolloutBatch {
  int num_envs = 0;
  int num_steps = 0;
  Matrix obs;      // obs_dim x (T*N), column t*N + e
  Matrix actions;  // raw policy outputs
  Matrix means;    // behaviour means
  Vector log_probs;
  Vector rewards;  // dt-scaled when configured
  Vector values;
  std::vector<uint8_t> dones;     // episode ended at this step
  std::vector<uint8_t> timeouts;  // ended by time limit
  std::vector<int> stages;        // stage after the step
  Vector last_values;             // V(s_T) per env
  std::vector<EpisodeInfo> episodes;
  int max_stage = 0;              // highest stage seen in any env this batch
  std::array<double, kNumStages> stage_fraction{};
  std::vector<double> term_means;  // per reward term, per step
};

struct CollectConfig {
  int num_steps = 24;
  bool scale_reward_by_dt = true;
  bool deterministic = false;
  bool staged_reset = true;
  double initial_fraction = 0.7;
  std::optional<ResetLaw> fixed_law;
};

// Vectorized on-policy collection from privileged observations. Episodes
// that end are reset through the staged-reset buffer (when given).
RolloutBatch CollectRollouts(const PolicyParams& policy, EnvPool& pool,
                             StageResetBuffer* buffer,
                             const CollectConfig& config);

// GAE over a T x N batch laid out as t*N + e.
struct GaeResult {
  Vector advantages;
  Vector returns;
};
GaeResult ComputeGae(const Vector& rewards, const Vector& values,
                     const std::vector<uint8_t>& dones,
                     const Vector& last_values, int num_envs, int num_steps,
                     double gamma, double lambda);

// (x - mean) / std, or zeros when std < 1e-8.
Vector NormalizeAdvantages(const Vector& adv);

struct PpoConfig {
  double gamma = 0.99;
  double lambda = 0.95;
  double clip = 0.2;
  int epochs = 5;
  int minibatches = 4;
  double lr = 3e-4;
  double entropy_coef = 1e-3;
  double value_coef = 1.0;
  double max_grad_norm = 1.0;
  bool adaptive_lr = true;
  double desired_kl = 0.01;
  double lr_min = 1e-5;
  double lr_max = 1e-2;
};

struct PpoMetrics {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
  double first_epoch_max_ratio_dev = 0.0;
  double lr = 0.0;
  bool aborted = false;
};

// Adds gamma * V(s_t) to the reward of steps that ended by time limit.
void BootstrapTimeouts(RolloutBatch& batch, double gamma);

// Clipped-surrogate PPO with value and entropy terms. On a non-finite loss
// the parameters and optimizer state are restored and aborted is set.
PpoMetrics PpoUpdate(PolicyParams& policy, AdamState& opt,
                     const RolloutBatch& batch, const GaeResult& gae,
                     const PpoConfig& config, Rng& rng);

// --- DAgger -----------------------------------------------------------------

// Teacher action label in raw policy space.
using TeacherFn = std::function<Vector(const WorldState&, const DoorSpec&)>;
TeacherFn MakeNetTeacher(const PolicyParams& teacher);
TeacherFn MakeOracleTeacher(const PhysicsConfig& physics,
                            const ActionMap& map);

// Append-only aggregate of (student observation, teacher label).
class DaggerDataset {
 public:
  DaggerDataset(int obs_dim, int act_dim);
  void Append(const Vector& obs, const Vector& label, bool held_out);
  int size() const { return size_; }
  int obs_dim() const { return obs_dim_; }
  int act_dim() const { return act_dim_; }
  const std::vector<int>& train_indices() const { return train_; }
  const std::vector<int>& held_out_indices() const { return held_out_; }
  Matrix Obs(const std::vector<int>& idx, size_t begin, size_t end) const;
  Matrix Labels(const std::vector<int>& idx, size_t begin, size_t end) const;

 private:
  int obs_dim_;
  int act_dim_;
  int size_ = 0;
  std::vector<double> obs_;
  std::vector<double> labels_;
  std::vector<int> train_;
  std::vector<int> held_out_;
};

struct DaggerConfig {
  int steps_per_iter = 200;  // per env
  int epochs = 4;
  int minibatch = 512;
  double holdout_fraction = 0.1;
  double max_grad_norm = 1.0;
};

struct DaggerMetrics {
  double beta = 0.0;
  int dataset_size = 0;
  double train_mse = 0.0;
  double held_out_mse = 0.0;
  int episodes = 0;
  double success_rate = 0.0;  // of the mixture policy
};

// beta_k = 0.5^k.
double DaggerBeta(int iteration);

DaggerMetrics DaggerIteration(const TeacherFn& teacher, ActorParams& student,
                              AdamState& opt, EnvPool& pool, double beta,
                              DaggerDataset& dataset,
                              const DaggerConfig& config, Rng& rng);

// Mean squared error of student means against labels.
double ImitationMse(const ActorParams& student, const DaggerDataset& data,
                    const std::vector<int>& idx);

// --- GRPO -------------------------------------------------------------------

// (R - mean) / population std; zeros when std < 1e-8. Throws for G < 2.
Vector GrpoAdvantages(const Vector& returns);

struct GrpoConfig {
  int group_size = 8;
  int groups_per_iter = 16;
  double clip = 0.2;
  int epochs = 4;
  int minibatches = 4;
  double lr = 1e-4;
  double success_bonus = 1.0;
  double w_velocity = -1.0e-3;
  double w_acceleration = -1.0e-5;
  double w_action_rate = -0.01;
  bool scale_shaping_by_dt = true;
  double max_grad_norm = 1.0;
  int num_workers = 1;
};

// One shared context: a door and an initial state.
struct GroupContext {
  DoorSpec spec;
  WorldState start;
};

struct GroupBatch {
  int group_size = 0;
  Matrix obs;  // student observations, all steps of all trajectories
  Matrix actions;
  Vector log_probs;
  std::vector<int> traj_of_step;   // trajectory index per column
  std::vector<int> traj_length;
  Vector returns;                  // per trajectory
  std::vector<uint8_t> success;    // per trajectory
  std::vector<int> context_id;     // group index per trajectory
  std::vector<EpisodeInfo> episodes;
};

// Rolls G trajectories per context with the stochastic student.
GroupBatch CollectGroups(const ActorParams& student,
                         const std::vector<GroupContext>& contexts,
                         const PoolConfig& pool_config,
                         const GrpoConfig& config, uint64_t seed);

struct GrpoMetrics {
  double policy_loss = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
  double first_epoch_max_ratio_dev = 0.0;
  double mean_return = 0.0;
  double success_rate = 0.0;
  int degenerate_groups = 0;
  bool aborted = false;
};

// Advantage per trajectory of a group batch. Groups whose members all
// succeeded or all failed get zero advantages.
Vector GroupAdvantages(const GroupBatch& batch);

// Clipped surrogate with trajectory-constant advantages. Takes only actor
// parameters: there is no value function in this update.
GrpoMetrics GrpoUpdate(ActorParams& student, AdamState& opt,
                       const GroupBatch& batch, const GrpoConfig& config,
                       Rng& rng);

// Per-sample clipped surrogate term min(r A, clip(r, 1-eps, 1+eps) A).
double ClippedSurrogate(double ratio, double advantage, double clip);

// --- Evaluation -------------------------------------------------------------

// Chooses simulator commands for the listed envs of a pool.
using BatchActFn = std::function<void(EnvPool& pool,
                                      const std::vector<int>& active,
                                      std::vector<Action>& out)>;
BatchActFn MakeActorAct(const ActorParams& actor, ObsKind kind,
                        const ActionMap& map);
BatchActFn MakeOracleAct(const PhysicsConfig& physics);
BatchActFn MakeStandStillAct();

struct CategoryReport {
  DoorCategory category = DoorCategory::kPushLever;
  int episodes = 0;
  int successes = 0;
  double success_rate = 0.0;
  double mean_completion_time = 0.0;  // over successes
  std::array<int, kNumStages> furthest_stage{};
};

struct EvalReport {
  std::vector<CategoryReport> categories;
  std::vector<EpisodeInfo> episodes;
  std::vector<uint64_t> door_seeds;
};

struct EvalConfig {
  std::vector<DoorCategory> categories{DoorCategory::kPushLever};
  int episodes_per_category = 100;
  uint64_t seed = 1;
  int batch = 32;
  PhysicsConfig physics;
  bool track_history = true;
  int history_length = 10;
};

// Fresh held-out doors; deterministic in (config, policy).
EvalReport Evaluate(const BatchActFn& act, const EvalConfig& config);

std::string FormatEvalReport(const EvalReport& report);

}  // namespace doorrl

#endif  // DOORRL_ALGOS_H_
