#include "doorrl/reward_machine.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace doorrl {
namespace {

constexpr double kPi = std::numbers::pi;

// Unit vector, or zero for a (near) zero input.
Vec2 Direction(const Vec2& v) {
  const double n = Norm(v);
  return n > 1e-9 ? v * (1.0 / n) : Vec2{};
}

// Velocity-like generalized coordinates of the planar robot: base twist and
// end-effector velocity.
std::array<double, 5> JointRates(const RobotState& r) {
  return {r.base_velocity.vx, r.base_velocity.vy, r.base_velocity.wz,
          r.ee_velocity.x, r.ee_velocity.y};
}

constexpr std::array<std::string_view, 22> kTermNames = {
    "termination",       "action_rate",       "dof_velocity",
    "dof_acceleration",  "dof_overspeed",     "undesired_contact",
    "walk_to_door",      "arm_deviation",     "face_door",
    "pregrasp_gripper",  "pregrasp_distance", "not_standing_still",
    "gripper_closure",   "grasp_distance",    "push_handle",
    "push_hinge",        "release_handle",    "target_root",
    "standing_still",    "stage_progress",    "task_completion",
    "success_save_time",
};

constexpr std::array<TableTerm, 33> kRegistry = {{
    {"Termination", -1000.0, "0-5", TermStatus::kImplemented, "termination",
     "failure terminations only (workspace exit, excessive grasp force)"},
    {"Delta action rate", -0.01, "0-5", TermStatus::kImplemented,
     "action_rate", "squared change of the clamped 6-D action"},
    {"DoF velocity", -1.0e-3, "0-5", TermStatus::kAdapted, "dof_velocity",
     "base twist and end-effector velocity stand in for upper-body joints"},
    {"DoF acceleration", -1.0e-5, "0-5", TermStatus::kAdapted,
     "dof_acceleration", "finite difference of the same rates over dt"},
    {"DoF position limits", -5.0, "0-5", TermStatus::kDropped, "",
     "no joint-level kinematics; reach is clamped by the simulator"},
    {"Finger primitive limits", -1.0, "0-5", TermStatus::kDropped, "",
     "single gripper scalar, clamped to [0, 1] before use"},
    {"Humanly DoF limit", -1.0, "0-5", TermStatus::kDropped, "",
     "no humanoid joint ranges in the planar robot"},
    {"DoF overspeed", -0.1, "0-5", TermStatus::kAdapted, "dof_overspeed",
     "applied to the same rate vector with a 2.0 limit"},
    {"Undesired contact", -0.2, "0-5", TermStatus::kAdapted,
     "undesired_contact", "body contact with wall or panel above 1 N"},
    {"Door frame contact", -0.1, "0-5", TermStatus::kDropped, "",
     "contact forces are not penalised; body contact is projected"},
    {"Door panel contact", -0.1, "0-5", TermStatus::kDropped, "",
     "contact forces are not penalised; body contact is projected"},
    {"Upright penalty", -1.0, "0-5", TermStatus::kDropped, "",
     "no torso orientation; balance is abstracted away"},
    {"HOMIE action limit", -1.0, "0-5", TermStatus::kDropped, "",
     "base command is clamped by the simulator"},
    {"Walk to door", 5.0, "0", TermStatus::kImplemented, "walk_to_door",
     "direction from base to grip point"},
    {"Upper body deviation", -1.0, "0,5", TermStatus::kAdapted,
     "arm_deviation", "L1 distance of ee offset from its resting offset"},
    {"Face door", -1.0, "0-2,5", TermStatus::kImplemented, "face_door",
     "absolute wrapped yaw error to the door normal"},
    {"Hand-handle orientation", 3.0, "1-4", TermStatus::kDropped, "",
     "end effector is a point without orientation"},
    {"Pregrasp finger pose", 1.5, "0-1,5", TermStatus::kAdapted,
     "pregrasp_gripper", "gripper aperture tracks a half-closed pregrasp opening"},
    {"Unused arm deviation", -1.0, "1-4", TermStatus::kDropped, "",
     "single arm"},
    {"Pre-grasp target distance", 6.0, "1", TermStatus::kImplemented,
     "pregrasp_distance", "pre-grasp point 0.03 m off the panel"},
    {"Penalty not standing still", -15.0, "1-3", TermStatus::kImplemented,
     "not_standing_still", "norm of the base command"},
    {"Grasp finger DoF pose", 3.0, "2-4", TermStatus::kAdapted,
     "gripper_closure", "gripper aperture tracks closed"},
    {"Grasp target distance", 3.0, "2-4", TermStatus::kImplemented,
     "grasp_distance", "ee to grip point"},
    {"Grasp force", 0.2, "1-4", TermStatus::kDropped, "",
     "no palm frame or contact-force rewards"},
    {"Push door handle", 6.0, "3", TermStatus::kImplemented, "push_handle",
     "handle rate plus clipped handle angle"},
    {"Push door hinge", 6.0, "3-4", TermStatus::kImplemented, "push_hinge",
     "hinge rate plus clipped hinge angle"},
    {"Push door force", 0.3, "3", TermStatus::kDropped, "",
     "no contact-force rewards"},
    {"Don't push door handle", 3.0, "4-5", TermStatus::kImplemented,
     "release_handle", "negated handle rate plus remaining handle travel"},
    {"Target root distance", 12.0, "4-5", TermStatus::kImplemented,
     "target_root", "target 1 m past the doorway on its centreline"},
    {"Penalty standing still", -1.0, "4", TermStatus::kImplemented,
     "standing_still", "Gaussian of the base command norm"},
    {"Stage progress", 1.0, "0-5", TermStatus::kImplemented,
     "stage_progress", "current stage index"},
    {"Task completion", 4.0, "0-5", TermStatus::kImplemented,
     "task_completion", "success flag"},
    {"Success save time", 0.5, "0-5", TermStatus::kImplemented,
     "success_save_time", "1 - t / timeout on success"},
}};

}  // namespace

std::string_view StageName(int stage) {
  static constexpr std::array<std::string_view, kNumStages> kNames = {
      "walk_to_door", "pre_grasp", "grasp", "open", "swing", "pass_through"};
  if (stage < 0 || stage >= kNumStages) return "invalid";
  return kNames[stage];
}

double Track(double x, double mu, double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("Track: sigma must be > 0");
  const double d = x - mu;
  return std::exp(-d * d / (2.0 * sigma * sigma));
}

int DetectStage(const WorldState& world, const DoorSpec& spec, int prev_stage,
                const PhysicsConfig& cfg, const StageThresholds& thresholds) {
  if (prev_stage < 0 || prev_stage >= kNumStages) {
    throw std::invalid_argument("DetectStage: invalid stage");
  }
  const Vec2 base = world.robot.base_pose.translation();
  int stage = prev_stage;
  while (stage < kNumStages - 1) {
    bool advance = false;
    switch (stage) {
      case 0:
        advance = Norm(base - GripPoint(spec, world.door.hinge_angle)) <=
                  thresholds.approach_radius;
        break;
      case 1:
        advance = world.robot.attached;
        break;
      case 2:
        advance = !world.door.latched ||
                  world.door.handle_angle >= cfg.ReleaseAngle(spec);
        break;
      case 3:
        advance = world.door.hinge_angle >= thresholds.swing_angle;
        break;
      case 4:
        advance = base.y > 0.0;
        break;
    }
    if (!advance) break;
    ++stage;
  }
  return stage;
}

RewardWeights RewardWeights::Scaled(double c) const {
  RewardWeights w = *this;
  for (double* p :
       {&w.termination, &w.action_rate, &w.dof_velocity, &w.dof_acceleration,
        &w.dof_overspeed, &w.undesired_contact, &w.walk_to_door,
        &w.arm_deviation, &w.face_door, &w.pregrasp_gripper,
        &w.pregrasp_distance, &w.not_standing_still, &w.gripper_closure,
        &w.grasp_distance, &w.push_handle, &w.push_hinge, &w.release_handle,
        &w.target_root, &w.standing_still, &w.stage_progress,
        &w.task_completion, &w.success_save_time}) {
    *p *= c;
  }
  return w;
}

double WeightOf(const RewardWeights& w, std::string_view term) {
  if (term == "termination") return w.termination;
  if (term == "action_rate") return w.action_rate;
  if (term == "dof_velocity") return w.dof_velocity;
  if (term == "dof_acceleration") return w.dof_acceleration;
  if (term == "dof_overspeed") return w.dof_overspeed;
  if (term == "undesired_contact") return w.undesired_contact;
  if (term == "walk_to_door") return w.walk_to_door;
  if (term == "arm_deviation") return w.arm_deviation;
  if (term == "face_door") return w.face_door;
  if (term == "pregrasp_gripper") return w.pregrasp_gripper;
  if (term == "pregrasp_distance") return w.pregrasp_distance;
  if (term == "not_standing_still") return w.not_standing_still;
  if (term == "gripper_closure") return w.gripper_closure;
  if (term == "grasp_distance") return w.grasp_distance;
  if (term == "push_handle") return w.push_handle;
  if (term == "push_hinge") return w.push_hinge;
  if (term == "release_handle") return w.release_handle;
  if (term == "target_root") return w.target_root;
  if (term == "standing_still") return w.standing_still;
  if (term == "stage_progress") return w.stage_progress;
  if (term == "task_completion") return w.task_completion;
  if (term == "success_save_time") return w.success_save_time;
  throw std::invalid_argument("unknown reward term: " + std::string(term));
}

std::span<const std::string_view> RewardTermNames() { return kTermNames; }

std::span<const TableTerm> RewardTableRegistry() { return kRegistry; }

RewardBreakdown ComputeReward(const WorldState& world_prev,
                              const WorldState& world,
                              const Action& action_prev, const Action& action,
                              const DoorSpec& spec, const RewardConfig& config,
                              const PhysicsConfig& physics) {
  const int stage = world.stage;
  if (stage < 0 || stage >= kNumStages) {
    throw std::invalid_argument("ComputeReward: unknown stage " +
                                std::to_string(stage));
  }
  const RewardWeights& w = config.weights;
  const RewardParams& p = config.params;
  const RobotState& robot = world.robot;
  const Action a = ClampAction(action, physics);
  const Action a_prev = ClampAction(action_prev, physics);

  RewardBreakdown out;
  out.active_stage = stage;
  auto add = [&out](std::string_view name, double weight, double raw) {
    const double weighted = weight * raw;
    out.terms.push_back({name, raw, weighted});
    out.total += weighted;
  };
  auto in = [stage](std::initializer_list<int> stages) {
    return std::find(stages.begin(), stages.end(), stage) != stages.end();
  };

  // Always-on terms.
  add("termination", w.termination, world.termination.failure() ? 1.0 : 0.0);
  {
    const auto cur = a.ToArray();
    const auto prev = a_prev.ToArray();
    double s = 0.0;
    for (int i = 0; i < kActionDim; ++i) s += (cur[i] - prev[i]) * (cur[i] - prev[i]);
    add("action_rate", w.action_rate, s);
  }
  {
    const auto q = JointRates(robot);
    const auto q_prev = JointRates(world_prev.robot);
    double vel = 0.0, acc = 0.0, over = 0.0;
    for (size_t i = 0; i < q.size(); ++i) {
      vel += q[i] * q[i];
      const double dq = (q[i] - q_prev[i]) / physics.dt_control;
      acc += dq * dq;
      const double excess = std::max(0.0, std::abs(q[i]) - p.overspeed_limit);
      over += excess * excess;
    }
    add("dof_velocity", w.dof_velocity, vel);
    add("dof_acceleration", w.dof_acceleration, acc);
    add("dof_overspeed", w.dof_overspeed, over);
  }
  add("undesired_contact", w.undesired_contact,
      world.contact_force > p.contact_threshold ? 1.0 : 0.0);

  const Vec2 base = robot.base_pose.translation();
  const Vec2 grip = GripPoint(spec, world.door.hinge_angle);
  const Vec2 ee = EeWorld(robot);
  const Vec2 base_vel = BaseWorldVelocity(robot);
  const Vec2 target_root{0.0, physics.success_distance};
  const double base_cmd_norm =
      std::sqrt(a.base_cmd.vx * a.base_cmd.vx + a.base_cmd.vy * a.base_cmd.vy +
                a.base_cmd.wz * a.base_cmd.wz);

  if (in({0})) {
    const Vec2 d = Direction(grip - base);
    add("walk_to_door", w.walk_to_door,
        Track(Norm(base_vel - d * p.v_target), 0.0, 0.15));
  }
  if (in({0, 5})) {
    const Vec2 dev = robot.ee_offset - p.arm_rest;
    add("arm_deviation", w.arm_deviation, std::abs(dev.x) + std::abs(dev.y));
  }
  if (in({0, 1, 2, 5})) {
    add("face_door", w.face_door,
        std::abs(WrapAngle(robot.base_pose.yaw - 0.5 * kPi)));
  }
  if (in({0, 1, 5})) {
    add("pregrasp_gripper", w.pregrasp_gripper,
        Track(robot.gripper_aperture, p.pregrasp_aperture, 0.3));
  }
  if (in({1})) {
    const Vec2 pregrasp =
        grip + ApproachNormal(spec, world.door.hinge_angle) * p.pregrasp_offset;
    const Vec2 d = Direction(grip - ee);
    add("pregrasp_distance", w.pregrasp_distance,
        Track(Norm(ee - pregrasp), 0.0, 0.2) +
            Track(Norm(EeWorldVelocity(robot) - d * p.v_target), 0.0, 0.15));
  }
  if (in({1, 2, 3})) {
    add("not_standing_still", w.not_standing_still, base_cmd_norm);
  }
  if (in({2, 3, 4})) {
    add("gripper_closure", w.gripper_closure,
        Track(robot.gripper_aperture, p.closed_aperture, 0.3));
    const double d = Norm(ee - grip);
    add("grasp_distance", w.grasp_distance, std::exp(-d * d / (2.0 * 0.1 * 0.1)));
  }
  const double deg45 = DegToRad(45.0);
  const double deg90 = DegToRad(90.0);
  if (in({3})) {
    add("push_handle", w.push_handle,
        world.door.handle_rate +
            std::clamp(world.door.handle_angle, 0.0, deg45) / deg45);
  }
  if (in({3, 4})) {
    add("push_hinge", w.push_hinge,
        10.0 * world.door.hinge_rate +
            std::clamp(world.door.hinge_angle, 0.0, deg90) / deg90);
  }
  if (in({4, 5})) {
    add("release_handle", w.release_handle,
        -world.door.handle_rate + (deg45 - world.door.handle_angle) / deg45);
    const Vec2 d = Direction(target_root - base);
    add("target_root", w.target_root,
        Track(Dot(base_vel, d), p.v_target, 0.2) +
            Track(Norm(base - target_root), 0.0, 0.2));
  }
  if (in({4})) {
    add("standing_still", w.standing_still, Track(base_cmd_norm, 0.0, 0.05));
  }

  const bool success = world.termination.reason == TerminationReason::kSuccess;
  add("stage_progress", w.stage_progress, static_cast<double>(stage));
  add("task_completion", w.task_completion, success ? 1.0 : 0.0);
  add("success_save_time", w.success_save_time,
      success ? std::max(0.0, 1.0 - world.episode_time / physics.timeout)
              : 0.0);
  return out;
}

}  // namespace doorrl
