#include "doorrl/oracle.h"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace doorrl {
namespace {

constexpr double kPi = std::numbers::pi;

Vec2 ClampNorm(const Vec2& v, double max_norm) {
  const double n = Norm(v);
  return n > max_norm ? v * (max_norm / n) : v;
}

double Heading(const Vec2& v) { return std::atan2(v.y, v.x); }

// Base position from which the end effector reaches the grip point while
// the door swings. Push doors: stay on the doorway centreline so the body
// passes through with the panel. Pull doors: back away along the panel
// normal on the robot's side.
Vec2 GraspBaseTarget(const DoorSpec& spec, double hinge_angle,
                     const OracleParams& p) {
  const Vec2 grip = GripPoint(spec, hinge_angle);
  if (spec.open_direction == OpenDirection::kOut) {
    return grip + ApproachNormal(spec, hinge_angle) * p.reach;
  }
  const double side = HingePosition(spec).x > 0.0 ? 1.0 : -1.0;
  const double x = -side * p.corridor_offset;
  const double dx = grip.x - x;
  const double dy = std::sqrt(std::max(p.reach * p.reach - dx * dx, 0.01));
  return {x, grip.y - dy};
}

// Waypoint toward the far side once the door is open and released.
Vec2 PassWaypoint(const WorldState& world, const DoorSpec& spec,
                  const PhysicsConfig& cfg, const OracleParams& p) {
  const Vec2 base = world.robot.base_pose.translation();
  const Vec2 hinge = HingePosition(spec);
  const double side = hinge.x > 0.0 ? 1.0 : -1.0;
  const double corridor_x = -side * p.corridor_offset;
  const Vec2 goal{corridor_x, cfg.success_distance + 0.3};
  if (spec.open_direction == OpenDirection::kIn) {
    if (base.y < -0.2 && std::abs(base.x - corridor_x) > 0.1) {
      return {corridor_x, std::min(base.y, -0.5)};
    }
    return goal;
  }
  // Pull doors leave the robot behind the open panel: go around its free
  // edge, then along the corridor.
  const Vec2 edge = FreeEdge(spec, world.door.hinge_angle);
  const double clear_y = edge.y - cfg.base_radius - 0.3;
  const bool behind_panel = side * (base.x - hinge.x) > -0.05;
  if (behind_panel && base.y > clear_y + 0.05) return {base.x, clear_y};
  if (base.y < -0.2 && std::abs(base.x - corridor_x) > 0.1) {
    return {corridor_x, std::min(base.y, clear_y)};
  }
  return goal;
}

}  // namespace

Action OracleAction(const WorldState& world, const DoorSpec& spec,
                    const PhysicsConfig& cfg, const OracleParams& p) {
  const RobotState& robot = world.robot;
  const Pose2& base = robot.base_pose;
  const DoorState& door = world.door;
  const Vec2 grip = GripPoint(spec, door.hinge_angle);
  const Vec2 ee = EeWorld(robot);

  Vec2 base_target = base.translation();
  double yaw_target = base.yaw;
  Vec2 ee_target = grip;
  bool ee_in_world = true;
  double gripper = 1.0;

  if (robot.attached) {
    base_target = GraspBaseTarget(spec, door.hinge_angle, p);
    yaw_target = Heading(grip - base.translation());
    gripper = 0.0;
    if (door.latched) {
      const Vec2 lever_dir = spec.is_push_bar()
                                 ? -ApproachNormal(spec, door.hinge_angle)
                                 : -PanelDirection(spec, door.hinge_angle);
      ee_target = grip + lever_dir * p.handle_press;
    } else if (door.hinge_angle < p.open_angle) {
      const double drive =
          std::clamp(2.0 * (p.swing_rate - door.hinge_rate) / p.swing_rate,
                     -0.25, 1.0);
      ee_target =
          grip + OpeningTangent(spec, door.hinge_angle) * (p.swing_press * drive);
    } else {
      gripper = 1.0;
    }
  } else if (!door.latched && door.hinge_angle >= p.release_angle) {
    base_target = PassWaypoint(world, spec, cfg, p);
    yaw_target = 0.5 * kPi;
    ee_target = {0.35, 0.0};
    ee_in_world = false;
  } else {
    base_target = GraspBaseTarget(spec, door.hinge_angle, p);
    yaw_target = Heading(grip - base.translation());
    if (Norm(ee - grip) < p.grasp_tolerance) gripper = 0.0;
  }

  Action action;
  const Vec2 v_world =
      ClampNorm((base_target - base.translation()) * p.base_gain, 0.8);
  const Vec2 v_body = Rotate(v_world, -base.yaw);
  action.base_cmd = {v_body.x, v_body.y,
                     p.yaw_gain * WrapAngle(yaw_target - base.yaw)};

  Vec2 offset_target = ee_in_world ? InverseTransformPoint(base, ee_target)
                                   : ee_target;
  offset_target = ClampNorm(offset_target, 0.98 * cfg.ee_reach_max);
  Vec2 command = (offset_target - robot.ee_offset) * p.ee_gain;
  if (ee_in_world) {
    // Cancel the apparent motion of a world-fixed target due to base motion.
    const Twist& v = robot.base_velocity;
    command += Vec2{-v.vx + v.wz * robot.ee_offset.y,
                    -v.vy - v.wz * robot.ee_offset.x};
  }
  action.ee_cmd = command;
  action.gripper_cmd = gripper;
  return action;
}

}  // namespace doorrl
