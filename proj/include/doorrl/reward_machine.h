#ifndef DOORRL_REWARD_MACHINE_H_
#define DOORRL_REWARD_MACHINE_H_

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "doorrl/door_gen.h"
#include "doorrl/env.h"

namespace doorrl {

enum class StageId {
  kWalkToDoor = 0,
  kPreGrasp = 1,
  kGrasp = 2,
  kOpen = 3,
  kSwing = 4,
  kPassThrough = 5,
};

std::string_view StageName(int stage);

// Gaussian tracking kernel exp(-(x - mu)^2 / (2 sigma^2)). Throws for
// sigma <= 0.
double Track(double x, double mu, double sigma);

struct StageThresholds {
  double approach_radius = 0.6;            // base to grip point, m
  double swing_angle = DegToRad(20.0);     // hinge angle for stage 4
};

// Advances the stage as far as the current state allows, never backward.
int DetectStage(const WorldState& world, const DoorSpec& spec, int prev_stage,
                const PhysicsConfig& cfg = {},
                const StageThresholds& thresholds = {});

// One weight per implemented term. Defaults are the door-opening table
// weights; adapted terms keep the weight of the term they stand in for.
struct RewardWeights {
  double termination = -1000.0;
  double action_rate = -0.01;
  double dof_velocity = -1.0e-3;
  double dof_acceleration = -1.0e-5;
  double dof_overspeed = -0.1;
  double undesired_contact = -0.2;
  double walk_to_door = 5.0;
  double arm_deviation = -1.0;
  double face_door = -1.0;
  double pregrasp_gripper = 1.5;
  double pregrasp_distance = 6.0;
  double not_standing_still = -15.0;
  double gripper_closure = 3.0;
  double grasp_distance = 3.0;
  double push_handle = 6.0;
  double push_hinge = 6.0;
  double release_handle = 3.0;
  double target_root = 12.0;
  double standing_still = -1.0;
  double stage_progress = 1.0;
  double task_completion = 4.0;
  double success_save_time = 0.5;

  RewardWeights Scaled(double c) const;
};

struct RewardParams {
  double v_target = 0.5;           // m/s
  double pregrasp_offset = 0.03;   // m off the grip point, robot side
  double closed_aperture = 0.0;
  double pregrasp_aperture = 0.4;  // half-closed hand ready to grasp
  Vec2 arm_rest{0.35, 0.0};
  double overspeed_limit = 2.0;
  double contact_threshold = 1.0;  // N
  // The Gaussian widths come from the table and are not configurable.
};

struct RewardConfig {
  RewardWeights weights;
  RewardParams params;
};

struct RewardTerm {
  std::string_view name;
  double raw = 0.0;
  double weighted = 0.0;
};

struct RewardBreakdown {
  double total = 0.0;
  std::vector<RewardTerm> terms;  // only terms active at this stage
  int active_stage = 0;
};

// world is the state after applying action to world_prev; action_prev is the
// action applied one control step earlier.
RewardBreakdown ComputeReward(const WorldState& world_prev,
                              const WorldState& world,
                              const Action& action_prev, const Action& action,
                              const DoorSpec& spec, const RewardConfig& config,
                              const PhysicsConfig& physics = {});

// Names of every implemented term in breakdown order (stable CSV columns).
std::span<const std::string_view> RewardTermNames();

// --- Coverage registry of the door-opening reward table ---------------------

enum class TermStatus { kImplemented, kAdapted, kDropped };

struct TableTerm {
  std::string_view table_name;
  double table_weight;
  std::string_view stages;
  TermStatus status;
  // Implemented term name ("" when dropped).
  std::string_view term;
  std::string_view note;
};

std::span<const TableTerm> RewardTableRegistry();

// Weight of an implemented term in `weights`, looked up by term name.
double WeightOf(const RewardWeights& weights, std::string_view term);

}  // namespace doorrl

#endif  // DOORRL_REWARD_MACHINE_H_
