#include "doorrl/env.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "doorrl/reward_machine.h"

namespace doorrl {
namespace {

constexpr double kPi = std::numbers::pi;

bool AllFinite(const Action& a) {
  for (double v : a.ToArray()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

// Closest point on segment [a, b] to p.
Vec2 ClosestOnSegment(const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 ab = b - a;
  const double len2 = SquaredNorm(ab);
  double t = len2 > 0.0 ? Dot(p - a, ab) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return a + ab * t;
}

// Trapezoidal (implicit midpoint) update of I x'' = tau - k (x - target) - c x'.
// Exactly dissipative for the linear spring-damper part.
void SpringDamperStep(double& angle, double& rate, double tau, double k,
                      double c, double inertia, double target, double h) {
  const double x = angle - target;
  const double sum = (2.0 * rate + (h / inertia) * (tau - k * x)) /
                     (1.0 + h * (0.25 * k * h + 0.5 * c) / inertia);
  rate = sum - rate;
  angle = target + x + 0.5 * h * sum;
}

// Inelastic joint stops.
void ApplyStops(double& angle, double& rate, double lower, double upper) {
  if (angle <= lower) {
    angle = lower;
    rate = std::max(rate, 0.0);
  } else if (angle >= upper) {
    angle = upper;
    rate = std::min(rate, 0.0);
  }
}

struct Segment {
  Vec2 a;
  Vec2 b;
};

}  // namespace

double PhysicsConfig::ReleaseAngle(const DoorSpec& spec) const {
  if (spec.is_push_bar()) {
    return handle_lower_stop +
           push_bar_release_fraction * (handle_upper_stop - handle_lower_stop);
  }
  return latch_release_angle;
}

void ValidatePhysicsConfig(const PhysicsConfig& cfg) {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("physics config: ") + what);
  };
  require(cfg.dt_control > 0.0, "dt_control must be > 0");
  require(cfg.substeps_per_control >= 1, "substeps_per_control must be >= 1");
  require(cfg.grasp_spring_k >= 0.0 && cfg.grasp_spring_c >= 0.0 &&
              cfg.contact_stiffness >= 0.0,
          "stiffness and damping must be >= 0");
  require(cfg.fov_half_angle > 0.0 && cfg.fov_half_angle < kPi,
          "fov_half_angle must be in (0, pi)");
  require(cfg.obs_range_max > 0.0, "obs_range_max must be > 0");
  require(cfg.grasp_radius > 0.0, "grasp_radius must be > 0");
  require(cfg.base_velocity_lag_tau > 0.0 && cfg.ee_velocity_lag_tau > 0.0,
          "lag time constants must be > 0");
  require(cfg.ee_reach_max > 0.0, "ee_reach_max must be > 0");
  require(cfg.handle_inertia > 0.0, "handle_inertia must be > 0");
  require(cfg.handle_lower_stop < cfg.handle_upper_stop,
          "handle stops out of order");
  require(cfg.obs_noise_sigma.position >= 0.0 &&
              cfg.obs_noise_sigma.angle >= 0.0 &&
              cfg.obs_noise_sigma.joint >= 0.0,
          "noise sigmas must be >= 0");
  require(cfg.timeout > 0.0, "timeout must be > 0");
}

std::array<double, kActionDim> Action::ToArray() const {
  return {base_cmd.vx, base_cmd.vy, base_cmd.wz, ee_cmd.x, ee_cmd.y,
          gripper_cmd};
}

Action Action::FromArray(const std::array<double, kActionDim>& a) {
  return FromSpan(a.data());
}

Action Action::FromSpan(const double* a) {
  Action out;
  out.base_cmd = {a[0], a[1], a[2]};
  out.ee_cmd = {a[3], a[4]};
  out.gripper_cmd = a[5];
  return out;
}

std::string_view TerminationName(TerminationReason reason) {
  switch (reason) {
    case TerminationReason::kNone:
      return "none";
    case TerminationReason::kFellOverProxy:
      return "fell_over_proxy";
    case TerminationReason::kTimeout:
      return "timeout";
    case TerminationReason::kSuccess:
      return "success";
    case TerminationReason::kExcessiveContact:
      return "excessive_contact";
  }
  return "unknown";
}

DoorId IdOf(const DoorSpec& spec) { return {spec.category, spec.seed}; }

Vec2 EeWorld(const RobotState& robot) {
  return TransformPoint(robot.base_pose, robot.ee_offset);
}

Vec2 BaseWorldVelocity(const RobotState& robot) {
  return Rotate({robot.base_velocity.vx, robot.base_velocity.vy},
                robot.base_pose.yaw);
}

Vec2 EeWorldVelocity(const RobotState& robot) {
  const double w = robot.base_velocity.wz;
  const Vec2 spin{-w * robot.ee_offset.y, w * robot.ee_offset.x};
  return BaseWorldVelocity(robot) +
         Rotate(robot.ee_velocity + spin, robot.base_pose.yaw);
}

WorldState ResetInitial(const DoorSpec& spec, Rng& rng,
                        const PhysicsConfig& cfg) {
  WorldState world;
  const double perturbation =
      rng.Uniform(-cfg.yaw_perturbation, cfg.yaw_perturbation);
  world.robot.base_pose = {0.0, -cfg.start_distance,
                           0.5 * kPi + perturbation};
  world.door.handle_angle = cfg.handle_target;
  world.door.latched = true;
  world.rng = rng.Fork(0x0B5E);
  world.door_id = IdOf(spec);
  world.last_action.gripper_cmd = world.robot.gripper_aperture;
  return world;
}

DoorWrench ClampDoorWrench(const DoorWrench& wrench, const DoorSpec& spec) {
  return {std::clamp(wrench.handle, -spec.handle_max_force,
                     spec.handle_max_force),
          std::clamp(wrench.hinge, -spec.hinge_max_force,
                     spec.hinge_max_force)};
}

DoorState IntegrateDoor(const DoorState& door, const DoorWrench& applied,
                        const DoorSpec& spec, const PhysicsConfig& cfg,
                        double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("IntegrateDoor: dt must be > 0");
  if (!std::isfinite(applied.handle) || !std::isfinite(applied.hinge)) {
    throw std::invalid_argument("IntegrateDoor: non-finite wrench");
  }
  const DoorWrench tau = ClampDoorWrench(applied, spec);
  DoorState next = door;

  SpringDamperStep(next.handle_angle, next.handle_rate, tau.handle,
                   spec.HandleStiffness(), spec.HandleDamping(),
                   cfg.handle_inertia, cfg.handle_target, dt);
  ApplyStops(next.handle_angle, next.handle_rate, cfg.handle_lower_stop,
             cfg.handle_upper_stop);
  if (next.latched && next.handle_angle >= cfg.ReleaseAngle(spec)) {
    next.latched = false;
  }

  if (next.latched) {
    next.hinge_angle = 0.0;
    next.hinge_rate = 0.0;
  } else {
    SpringDamperStep(next.hinge_angle, next.hinge_rate, tau.hinge,
                     spec.HingeStiffness(), spec.HingeDamping(), spec.inertia,
                     0.0, dt);
    ApplyStops(next.hinge_angle, next.hinge_rate, 0.0, cfg.hinge_max_angle);
  }
  return next;
}

GraspResult GraspCoupling(const RobotState& robot, const DoorState& door,
                          const DoorSpec& spec, const PhysicsConfig& cfg) {
  GraspResult result;
  const bool closed = robot.gripper_aperture < cfg.close_threshold;
  const Vec2 grip = GripPoint(spec, door.hinge_angle);
  const Vec2 stretch = EeWorld(robot) - grip;
  const double distance = Norm(stretch);

  bool attached = robot.attached && closed;
  if (!attached && closed && distance <= cfg.grasp_radius) attached = true;
  if (attached && distance > 2.0 * cfg.grasp_radius) attached = false;
  result.attached = attached;
  if (!attached) return result;

  const Vec2 grip_velocity =
      OpeningTangent(spec, door.hinge_angle) *
      (GripRadius(spec) * door.hinge_rate);
  const Vec2 on_door = stretch * cfg.grasp_spring_k +
                       (EeWorldVelocity(robot) - grip_velocity) *
                           cfg.grasp_spring_c;
  result.force_on_ee = -on_door;

  // Levers turn with force along the panel toward the hinge; push bars with
  // force into the panel.
  const Vec2 lever_dir = spec.is_push_bar()
                             ? -ApproachNormal(spec, door.hinge_angle)
                             : -PanelDirection(spec, door.hinge_angle);
  result.wrench_on_door.handle = cfg.handle_lever_arm * Dot(on_door, lever_dir);
  result.wrench_on_door.hinge =
      OpeningSign(spec) * Cross(grip - HingePosition(spec), on_door);
  return result;
}

Action ClampAction(const Action& action, const PhysicsConfig& cfg) {
  Action out;
  out.base_cmd.vx =
      std::clamp(action.base_cmd.vx, -cfg.base_linear_max, cfg.base_linear_max);
  out.base_cmd.vy =
      std::clamp(action.base_cmd.vy, -cfg.base_linear_max, cfg.base_linear_max);
  out.base_cmd.wz = std::clamp(action.base_cmd.wz, -cfg.base_yaw_rate_max,
                               cfg.base_yaw_rate_max);
  out.ee_cmd.x = std::clamp(action.ee_cmd.x, -cfg.ee_speed_max, cfg.ee_speed_max);
  out.ee_cmd.y = std::clamp(action.ee_cmd.y, -cfg.ee_speed_max, cfg.ee_speed_max);
  out.gripper_cmd = std::clamp(action.gripper_cmd, 0.0, 1.0);
  return out;
}

StepResult Step(const WorldState& world, const Action& action,
                const DoorSpec& spec, const PhysicsConfig& cfg) {
  if (!AllFinite(action)) throw std::invalid_argument("Step: non-finite action");
  if (!(world.door_id == IdOf(spec))) {
    throw std::invalid_argument("Step: door spec does not match world state");
  }
  const Action cmd = ClampAction(action, cfg);
  const double h = cfg.dt_control / cfg.substeps_per_control;
  const double base_decay = std::exp(-h / cfg.base_velocity_lag_tau);
  const double base_gain = cfg.base_velocity_lag_tau * (1.0 - base_decay);
  const double ee_decay = std::exp(-h / cfg.ee_velocity_lag_tau);
  const double ee_gain = cfg.ee_velocity_lag_tau * (1.0 - ee_decay);
  const double half_w = 0.5 * spec.panel_width;
  const double far = cfg.workspace_half_width + 1.0;
  const std::array<Segment, 2> walls = {
      Segment{{-far, 0.0}, {-half_w, 0.0}}, Segment{{half_w, 0.0}, {far, 0.0}}};
  const Vec2 hinge = HingePosition(spec);

  WorldState next = world;
  RobotState& robot = next.robot;
  DoorState& door = next.door;
  next.contact_force = 0.0;
  bool excessive = false;

  for (int sub = 0; sub < cfg.substeps_per_control; ++sub) {
    // First-order twist tracking, integrated exactly for a held command.
    Twist& v = robot.base_velocity;
    const double dx = cmd.base_cmd.vx * h + (v.vx - cmd.base_cmd.vx) * base_gain;
    const double dy = cmd.base_cmd.vy * h + (v.vy - cmd.base_cmd.vy) * base_gain;
    const double dyaw =
        cmd.base_cmd.wz * h + (v.wz - cmd.base_cmd.wz) * base_gain;
    v.vx = cmd.base_cmd.vx + (v.vx - cmd.base_cmd.vx) * base_decay;
    v.vy = cmd.base_cmd.vy + (v.vy - cmd.base_cmd.vy) * base_decay;
    v.wz = cmd.base_cmd.wz + (v.wz - cmd.base_cmd.wz) * base_decay;
    const Vec2 step =
        Rotate({dx, dy}, robot.base_pose.yaw + 0.5 * dyaw);
    robot.base_pose.x += step.x;
    robot.base_pose.y += step.y;
    robot.base_pose.yaw = WrapAngle(robot.base_pose.yaw + dyaw);

    Vec2& ev = robot.ee_velocity;
    robot.ee_offset += cmd.ee_cmd * h + (ev - cmd.ee_cmd) * ee_gain;
    ev = cmd.ee_cmd + (ev - cmd.ee_cmd) * ee_decay;
    const double reach = Norm(robot.ee_offset);
    if (reach > cfg.ee_reach_max) {
      const Vec2 radial = robot.ee_offset * (1.0 / reach);
      robot.ee_offset = radial * cfg.ee_reach_max;
      const double outward = Dot(ev, radial);
      if (outward > 0.0) ev = ev - radial * outward;
    }

    const double max_delta = cfg.gripper_rate * h;
    robot.gripper_aperture +=
        std::clamp(cmd.gripper_cmd - robot.gripper_aperture, -max_delta,
                   max_delta);

    // Body collisions: the base is projected out of walls and the panel; the
    // panel additionally receives a penalty-force torque.
    double contact_hinge_torque = 0.0;
    auto resolve = [&](const Segment& seg, bool is_panel) {
      const Vec2 center = robot.base_pose.translation();
      const Vec2 closest = ClosestOnSegment(center, seg.a, seg.b);
      Vec2 offset = center - closest;
      double dist = Norm(offset);
      if (dist >= cfg.base_radius) return;
      Vec2 normal;
      if (dist > 1e-12) {
        normal = offset * (1.0 / dist);
      } else {
        // Centre on the segment: push back toward the side it came from.
        const Vec2 prev = world.robot.base_pose.translation() - closest;
        const Vec2 seg_dir = seg.b - seg.a;
        Vec2 perp{-seg_dir.y, seg_dir.x};
        perp = perp * (1.0 / std::max(Norm(perp), 1e-12));
        normal = Dot(prev, perp) >= 0.0 ? perp : -perp;
        dist = 0.0;
      }
      const double depth = cfg.base_radius - dist;
      const double force = cfg.contact_stiffness * depth;
      next.contact_force = std::max(next.contact_force, force);
      if (is_panel) {
        const Vec2 on_door = -normal * force;
        contact_hinge_torque +=
            OpeningSign(spec) * Cross(closest - hinge, on_door);
      }
      robot.base_pose.x += normal.x * depth;
      robot.base_pose.y += normal.y * depth;
      Vec2 vw = BaseWorldVelocity(robot);
      const double vn = Dot(vw, normal);
      if (vn < 0.0) {
        vw = vw - normal * vn;
        const Vec2 body = Rotate(vw, -robot.base_pose.yaw);
        v.vx = body.x;
        v.vy = body.y;
      }
    };
    for (const Segment& wall : walls) resolve(wall, false);
    resolve(Segment{hinge, FreeEdge(spec, door.hinge_angle)}, true);

    const GraspResult grasp = GraspCoupling(robot, door, spec, cfg);
    robot.attached = grasp.attached;
    next.grasp_force = grasp.force_on_ee;
    next.handle_torque = grasp.wrench_on_door.handle;
    next.hinge_torque = grasp.wrench_on_door.hinge + contact_hinge_torque;
    if (Norm(grasp.force_on_ee) > cfg.excessive_grasp_force) excessive = true;

    door = IntegrateDoor(door, {next.handle_torque, next.hinge_torque}, spec,
                         cfg, h);
  }

  next.step_count = world.step_count + 1;
  next.episode_time = static_cast<double>(next.step_count) * cfg.dt_control;
  next.last_action = cmd;
  next.stage = DetectStage(next, spec, world.stage, cfg);

  TerminationInfo term;
  const Vec2 p = robot.base_pose.translation();
  if (CheckSuccess(next, spec, cfg)) {
    term = {true, TerminationReason::kSuccess};
  } else if (excessive) {
    term = {true, TerminationReason::kExcessiveContact};
  } else if (std::abs(p.x) > cfg.workspace_half_width ||
             p.y < cfg.workspace_min_y || p.y > cfg.workspace_max_y) {
    term = {true, TerminationReason::kFellOverProxy};
  } else if (next.episode_time >= cfg.timeout - 1e-9) {
    term = {true, TerminationReason::kTimeout};
  }
  next.termination = term;
  return {next, term};
}

bool CheckSuccess(const WorldState& world, const DoorSpec& /*spec*/,
                  const PhysicsConfig& cfg) {
  // Doorway plane is y = 0; the far side is +y.
  return world.robot.base_pose.y >= cfg.success_distance;
}

// --- Observations ----------------------------------------------------------

namespace {

Pose2 DoorFramePose() { return {0.0, 0.0, 0.5 * kPi}; }

}  // namespace

PrivilegedObservation ObservePrivileged(const WorldState& world,
                                        const DoorSpec& spec,
                                        const PhysicsConfig& /*cfg*/) {
  PrivilegedObservation obs;
  const RobotState& robot = world.robot;
  const Pose2& base = robot.base_pose;
  obs.root_to_door = Compose(Inverse(base), DoorFramePose());
  const Vec2 grip = GripPoint(spec, world.door.hinge_angle);
  obs.ee_to_grip = Rotate(grip - EeWorld(robot), -base.yaw);
  const Vec2 panel = PanelDirection(spec, world.door.hinge_angle);
  obs.handle_frame_angle = WrapAngle(std::atan2(panel.y, panel.x) - base.yaw);
  if (robot.attached) {
    obs.grasp_force = Rotate(world.grasp_force, -base.yaw);
    obs.grasp_torque = world.handle_torque;
  }
  obs.hinge_angle = world.door.hinge_angle;
  obs.hinge_rate = world.door.hinge_rate;
  obs.handle_angle = world.door.handle_angle;
  obs.handle_rate = world.door.handle_rate;
  obs.latched = world.door.latched;
  obs.base_velocity = robot.base_velocity;
  obs.ee_offset = robot.ee_offset;
  obs.ee_velocity = robot.ee_velocity;
  obs.gripper_aperture = robot.gripper_aperture;
  obs.attached = robot.attached;
  obs.last_action = world.last_action;
  obs.open_direction = spec.open_direction == OpenDirection::kIn ? 1.0 : -1.0;
  obs.handedness = spec.handedness == Handedness::kLeft ? 1.0 : -1.0;
  obs.category = spec.category;
  obs.stage = world.stage;
  return obs;
}

std::vector<double> PrivilegedObservation::ToVector() const {
  std::vector<double> v;
  v.reserve(kDim);
  v.insert(v.end(), {root_to_door.x, root_to_door.y, std::cos(root_to_door.yaw),
                     std::sin(root_to_door.yaw)});
  v.insert(v.end(), {ee_to_grip.x, ee_to_grip.y, std::cos(handle_frame_angle),
                     std::sin(handle_frame_angle)});
  v.insert(v.end(),
           {grasp_force.x * 0.01, grasp_force.y * 0.01, grasp_torque * 0.3});
  v.insert(v.end(), {hinge_angle, hinge_rate, handle_angle, handle_rate,
                     latched ? 1.0 : 0.0});
  v.insert(v.end(), {base_velocity.vx, base_velocity.vy, base_velocity.wz});
  v.insert(v.end(), {ee_offset.x, ee_offset.y, ee_velocity.x, ee_velocity.y,
                     gripper_aperture, attached ? 1.0 : 0.0});
  for (double a : last_action.ToArray()) v.push_back(a);
  v.insert(v.end(), {open_direction, handedness});
  for (int c = 0; c < 3; ++c) {
    v.push_back(static_cast<int>(category) == c ? 1.0 : 0.0);
  }
  for (int s = 0; s < kNumStages; ++s) v.push_back(stage == s ? 1.0 : 0.0);
  return v;
}

bool GripVisible(const WorldState& world, const DoorSpec& spec,
                 const PhysicsConfig& cfg) {
  const Vec2 grip = GripPoint(spec, world.door.hinge_angle);
  const Vec2 local = InverseTransformPoint(world.robot.base_pose, grip);
  const double range = Norm(local);
  const double bearing = std::atan2(local.y, local.x);
  return range <= cfg.obs_range_max && std::abs(bearing) <= cfg.fov_half_angle;
}

StudentFrame ObserveStudent(const WorldState& world, const DoorSpec& spec,
                            Rng& rng, const PhysicsConfig& cfg) {
  StudentFrame frame;
  frame.ee_offset = world.robot.ee_offset;
  frame.gripper_aperture = world.robot.gripper_aperture;
  frame.attached = world.robot.attached;
  frame.last_action = world.last_action;
  frame.yaw_rate = world.robot.base_velocity.wz;
  frame.visible = GripVisible(world, spec, cfg);
  if (!frame.visible) {
    frame.root_to_door = {0.0, 0.0, 0.0};
    return frame;
  }
  const PrivilegedObservation priv = ObservePrivileged(world, spec, cfg);
  const ObsNoise& sigma = cfg.obs_noise_sigma;
  auto noisy = [&rng](double value, double s) {
    return s > 0.0 ? value + s * rng.Normal() : value;
  };
  frame.root_to_door = {noisy(priv.root_to_door.x, sigma.position),
                        noisy(priv.root_to_door.y, sigma.position),
                        noisy(priv.root_to_door.yaw, sigma.angle)};
  frame.ee_to_grip = {noisy(priv.ee_to_grip.x, sigma.position),
                      noisy(priv.ee_to_grip.y, sigma.position)};
  frame.handle_frame_angle = noisy(priv.handle_frame_angle, sigma.angle);
  frame.handle_angle = noisy(priv.handle_angle, sigma.joint);
  frame.hinge_angle = noisy(priv.hinge_angle, sigma.joint);
  return frame;
}

std::vector<double> StudentFrame::ToVector() const {
  std::vector<double> v;
  v.reserve(kDim);
  v.insert(v.end(), {ee_offset.x, ee_offset.y, gripper_aperture,
                     attached ? 1.0 : 0.0});
  for (double a : last_action.ToArray()) v.push_back(a);
  v.push_back(yaw_rate);
  if (visible) {
    v.insert(v.end(),
             {root_to_door.x, root_to_door.y, std::cos(root_to_door.yaw),
              std::sin(root_to_door.yaw), ee_to_grip.x, ee_to_grip.y,
              std::cos(handle_frame_angle), std::sin(handle_frame_angle),
              handle_angle, hinge_angle});
  } else {
    v.insert(v.end(), 10, 0.0);
  }
  const double bit = visible ? 1.0 : 0.0;
  v.insert(v.end(), {bit, bit, bit, bit});
  return v;
}

StudentHistory::StudentHistory(int length) : length_(length) {
  if (length < 1) throw std::invalid_argument("history length must be >= 1");
}

void StudentHistory::Reset(const StudentFrame& first) {
  frames_.assign(length_, first);
}

void StudentHistory::Push(const StudentFrame& frame) {
  if (frames_.empty()) {
    Reset(frame);
    return;
  }
  frames_.pop_front();
  frames_.push_back(frame);
}

std::vector<double> StudentHistory::Flatten() const {
  std::vector<double> out;
  out.reserve(FlatDim());
  for (const StudentFrame& f : frames_) {
    const std::vector<double> v = f.ToVector();
    out.insert(out.end(), v.begin(), v.end());
  }
  return out;
}

std::string DumpWorldState(const WorldState& w) {
  std::ostringstream out;
  out.precision(17);
  const RobotState& r = w.robot;
  out << "stage " << w.stage << " (" << StageName(w.stage) << ")\n"
      << "step " << w.step_count << " t " << w.episode_time << "\n"
      << "door " << CategoryName(w.door_id.category) << " seed "
      << w.door_id.seed << "\n"
      << "base " << r.base_pose.x << " " << r.base_pose.y << " "
      << r.base_pose.yaw << "\n"
      << "base_vel " << r.base_velocity.vx << " " << r.base_velocity.vy << " "
      << r.base_velocity.wz << "\n"
      << "ee " << r.ee_offset.x << " " << r.ee_offset.y << " vel "
      << r.ee_velocity.x << " " << r.ee_velocity.y << "\n"
      << "gripper " << r.gripper_aperture << " attached " << r.attached << "\n"
      << "hinge " << w.door.hinge_angle << " rate " << w.door.hinge_rate
      << "\n"
      << "handle " << w.door.handle_angle << " rate " << w.door.handle_rate
      << " latched " << w.door.latched << "\n"
      << "grasp_force " << w.grasp_force.x << " " << w.grasp_force.y
      << " handle_torque " << w.handle_torque << " hinge_torque "
      << w.hinge_torque << " contact " << w.contact_force << "\n"
      << "termination " << TerminationName(w.termination.reason) << "\n"
      << "rng " << w.rng.key() << " " << w.rng.counter() << "\n";
  return out.str();
}

}  // namespace doorrl
