#ifndef DOORRL_ENV_H_
#define DOORRL_ENV_H_

#include <array>
#include <cstdint>
#include <deque>
#include <string>
#include <vector>

#include "doorrl/door_gen.h"
#include "doorrl/rng.h"
#include "doorrl/se2.h"

namespace doorrl {

inline constexpr int kNumStages = 6;
inline constexpr int kActionDim = 6;

// Per-channel standard deviations of the student's door-block noise.
struct ObsNoise {
  double position = 0.01;  // m
  double angle = 0.01;     // rad
  double joint = 0.01;     // rad, handle and hinge readings
};

struct PhysicsConfig {
  double dt_control = 0.02;  // 50 Hz policy rate
  int substeps_per_control = 4;

  double grasp_radius = 0.05;
  double grasp_spring_k = 2000.0;
  double grasp_spring_c = 40.0;
  double close_threshold = 0.3;  // aperture below which the gripper holds
  double excessive_grasp_force = 150.0;  // N, terminates the episode

  double base_velocity_lag_tau = 0.1;
  double ee_velocity_lag_tau = 0.05;
  double ee_reach_max = 0.7;
  double base_radius = 0.25;
  double base_linear_max = 1.0;
  double base_yaw_rate_max = 1.5;
  double ee_speed_max = 0.6;
  double gripper_rate = 5.0;  // aperture units per second

  double fov_half_angle = DegToRad(45.0);
  double obs_range_max = 3.0;
  ObsNoise obs_noise_sigma;

  double handle_lever_arm = 0.1;
  double handle_inertia = 0.4;
  double handle_target = DegToRad(-5.0);
  double handle_lower_stop = DegToRad(-5.0);
  double handle_upper_stop = DegToRad(90.0);
  double latch_release_angle = DegToRad(30.0);
  double push_bar_release_fraction = 0.2;
  double hinge_max_angle = DegToRad(100.0);
  double hinge_free_epsilon = 1e-9;
  double contact_stiffness = 5000.0;  // N/m, body against door panel

  double start_distance = 1.0;
  double yaw_perturbation = 0.3;
  double success_distance = 1.0;
  double timeout = 30.0;
  double workspace_half_width = 4.0;
  double workspace_min_y = -4.0;
  double workspace_max_y = 3.0;

  // Handle angle at which the latch lets go for this door.
  double ReleaseAngle(const DoorSpec& spec) const;
};

// Throws std::invalid_argument on the first violated invariant.
void ValidatePhysicsConfig(const PhysicsConfig& cfg);

struct Twist {
  double vx = 0.0;  // m/s, body frame
  double vy = 0.0;
  double wz = 0.0;  // rad/s
  friend bool operator==(const Twist&, const Twist&) = default;
};

struct RobotState {
  Pose2 base_pose;
  Twist base_velocity;
  Vec2 ee_offset{0.35, 0.0};  // base frame
  Vec2 ee_velocity;           // base frame, relative to the base
  double gripper_aperture = 1.0;
  bool attached = false;
  friend bool operator==(const RobotState&, const RobotState&) = default;
};

struct DoorState {
  double hinge_angle = 0.0;
  double hinge_rate = 0.0;
  double handle_angle = DegToRad(-5.0);
  double handle_rate = 0.0;
  bool latched = true;
  friend bool operator==(const DoorState&, const DoorState&) = default;
};

struct Action {
  Twist base_cmd;
  Vec2 ee_cmd;
  double gripper_cmd = 1.0;

  std::array<double, kActionDim> ToArray() const;
  static Action FromArray(const std::array<double, kActionDim>& a);
  static Action FromSpan(const double* a);
  friend bool operator==(const Action&, const Action&) = default;
};

enum class TerminationReason {
  kNone = 0,
  kFellOverProxy = 1,
  kTimeout = 2,
  kSuccess = 3,
  kExcessiveContact = 4,
};

struct TerminationInfo {
  bool terminated = false;
  TerminationReason reason = TerminationReason::kNone;
  // Failure terminations are the ones the termination penalty applies to.
  bool failure() const {
    return reason == TerminationReason::kFellOverProxy ||
           reason == TerminationReason::kExcessiveContact;
  }
  friend bool operator==(const TerminationInfo&,
                         const TerminationInfo&) = default;
};

std::string_view TerminationName(TerminationReason reason);

struct DoorId {
  DoorCategory category = DoorCategory::kPushLever;
  uint64_t seed = 0;
  friend bool operator==(const DoorId&, const DoorId&) = default;
};

struct WorldState {
  RobotState robot;
  DoorState door;
  int stage = 0;
  int64_t step_count = 0;
  double episode_time = 0.0;
  Rng rng;  // per-env stream for observation noise

  DoorId door_id;
  Action last_action;
  // Interaction quantities from the last control step, kept in the state so
  // observations and rewards are pure functions of it.
  Vec2 grasp_force;             // force on the end effector, world frame
  double handle_torque = 0.0;   // requested by the grasp
  double hinge_torque = 0.0;    // requested by grasp and body contact
  double contact_force = 0.0;   // peak body-door/wall contact force
  TerminationInfo termination;

  friend bool operator==(const WorldState&, const WorldState&) = default;
};

struct DoorWrench {
  double handle = 0.0;  // N m
  double hinge = 0.0;   // N m, positive opens
};

struct GraspResult {
  DoorWrench wrench_on_door;
  Vec2 force_on_ee;
  bool attached = false;
};

struct StepResult {
  WorldState world;
  TerminationInfo termination;
};

DoorId IdOf(const DoorSpec& spec);

Vec2 EeWorld(const RobotState& robot);
Vec2 EeWorldVelocity(const RobotState& robot);
Vec2 BaseWorldVelocity(const RobotState& robot);

WorldState ResetInitial(const DoorSpec& spec, Rng& rng,
                        const PhysicsConfig& cfg);

// Clamps each component to its door's max force.
DoorWrench ClampDoorWrench(const DoorWrench& wrench, const DoorSpec& spec);

DoorState IntegrateDoor(const DoorState& door, const DoorWrench& applied,
                        const DoorSpec& spec, const PhysicsConfig& cfg,
                        double dt);

GraspResult GraspCoupling(const RobotState& robot, const DoorState& door,
                          const DoorSpec& spec, const PhysicsConfig& cfg);

Action ClampAction(const Action& action, const PhysicsConfig& cfg);

StepResult Step(const WorldState& world, const Action& action,
                const DoorSpec& spec, const PhysicsConfig& cfg);

bool CheckSuccess(const WorldState& world, const DoorSpec& spec,
                  const PhysicsConfig& cfg = {});

// --- Snapshots -------------------------------------------------------------

inline constexpr uint32_t kSnapshotVersion = 1;

// Fixed-layout little-endian serialization of a door spec plus world state.
// Layout is documented in docs/snapshot_format.md.
struct Snapshot {
  std::vector<uint8_t> bytes;
  friend bool operator==(const Snapshot&, const Snapshot&) = default;
};

struct RestoredWorld {
  WorldState world;
  DoorSpec spec;
};

Snapshot TakeSnapshot(const WorldState& world, const DoorSpec& spec);
RestoredWorld RestoreSnapshot(const Snapshot& snapshot);
// Stage stored in the snapshot, without a full decode.
int SnapshotStage(const Snapshot& snapshot);

std::string DumpWorldState(const WorldState& world);

// --- Observations ----------------------------------------------------------

struct PrivilegedObservation {
  Pose2 root_to_door;     // door frame expressed in the base frame
  Vec2 ee_to_grip;        // grip point minus end effector, base frame
  double handle_frame_angle = 0.0;  // panel direction relative to heading
  Vec2 grasp_force;       // force on the end effector, base frame
  double grasp_torque = 0.0;  // handle torque requested by the grasp
  double hinge_angle = 0.0;
  double hinge_rate = 0.0;
  double handle_angle = 0.0;
  double handle_rate = 0.0;
  bool latched = true;
  Twist base_velocity;
  Vec2 ee_offset;
  Vec2 ee_velocity;
  double gripper_aperture = 0.0;
  bool attached = false;
  Action last_action;
  double open_direction = 0.0;  // +1 in, -1 out
  double handedness = 0.0;      // +1 left hinge, -1 right hinge
  DoorCategory category = DoorCategory::kPushLever;
  int stage = 0;

  static constexpr int kDim = 42;
  std::vector<double> ToVector() const;
};

PrivilegedObservation ObservePrivileged(const WorldState& world,
                                        const DoorSpec& spec,
                                        const PhysicsConfig& cfg = {});

// One frame of the student's partial observation.
struct StudentFrame {
  Vec2 ee_offset;
  double gripper_aperture = 0.0;
  bool attached = false;
  Action last_action;
  double yaw_rate = 0.0;
  // Door block; every field is exactly 0 when not visible.
  Pose2 root_to_door;
  Vec2 ee_to_grip;
  double handle_frame_angle = 0.0;
  double handle_angle = 0.0;
  double hinge_angle = 0.0;
  bool visible = false;

  static constexpr int kDim = 25;
  std::vector<double> ToVector() const;
  friend bool operator==(const StudentFrame&, const StudentFrame&) = default;
};

bool GripVisible(const WorldState& world, const DoorSpec& spec,
                 const PhysicsConfig& cfg);

StudentFrame ObserveStudent(const WorldState& world, const DoorSpec& spec,
                            Rng& rng, const PhysicsConfig& cfg);

// Stack of the last H student frames, oldest first.
class StudentHistory {
 public:
  explicit StudentHistory(int length = 10);
  // Starts a new episode: every slot holds the first frame.
  void Reset(const StudentFrame& first);
  void Push(const StudentFrame& frame);
  int length() const { return length_; }
  const std::deque<StudentFrame>& frames() const { return frames_; }
  std::vector<double> Flatten() const;
  int FlatDim() const { return length_ * StudentFrame::kDim; }

 private:
  int length_;
  std::deque<StudentFrame> frames_;
};

}  // namespace doorrl

#endif  // DOORRL_ENV_H_
