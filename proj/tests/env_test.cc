#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <vector>

#include "doorrl/env.h"
#include "doorrl/oracle.h"
#include "doorrl/reward_machine.h"
#include "gtest/gtest.h"
#include "test_util.h"

namespace doorrl {
namespace {

constexpr double kPi = std::numbers::pi;

DoorSpec Door(uint64_t seed, DoorCategory c = DoorCategory::kPushLever) {
  return SampleDoorSpec(seed, c);
}

// Reference integrator for I x'' = tau - k (x - target) - c x': semi-implicit
// Euler at a much finer step.
void FineSpringDamper(double& angle, double& rate, double tau, double k,
                      double c, double inertia, double target, double h,
                      int substeps) {
  const double dh = h / substeps;
  for (int i = 0; i < substeps; ++i) {
    rate += dh * (tau - k * (angle - target) - c * rate) / inertia;
    angle += dh * rate;
  }
}

Eigen::Matrix3d Homogeneous(const Pose2& p) {
  Eigen::Matrix3d m;
  m << std::cos(p.yaw), -std::sin(p.yaw), p.x, std::sin(p.yaw), std::cos(p.yaw),
      p.y, 0, 0, 1;
  return m;
}

// --- Reset ------------------------------------------------------------------

TEST(ResetInitial, StartsOneMetreBeforeClosedDoor) {
  const PhysicsConfig cfg;
  Rng rng(1);
  for (int i = 0; i < 10000; ++i) {
    const DoorSpec spec = Door(i, static_cast<DoorCategory>(i % 3));
    const WorldState w = ResetInitial(spec, rng, cfg);
    ASSERT_EQ(w.robot.base_pose.x, 0.0);
    ASSERT_EQ(w.robot.base_pose.y, -1.0);
    ASSERT_LE(std::abs(w.robot.base_pose.yaw - 0.5 * kPi), 0.3 + 1e-15);
    ASSERT_EQ(w.door.hinge_angle, 0.0);
    ASSERT_EQ(w.door.handle_angle, cfg.handle_target);
    ASSERT_TRUE(w.door.latched);
    ASSERT_EQ(w.stage, 0);
    ASSERT_EQ(w.step_count, 0);
    ASSERT_FALSE(w.robot.attached);
    ASSERT_FALSE(CheckSuccess(w, spec, cfg));
  }
}

TEST(ResetInitial, ZeroPerturbationFacesDoor) {
  PhysicsConfig cfg;
  cfg.yaw_perturbation = 0.0;
  Rng rng(2);
  const WorldState w = ResetInitial(Door(3), rng, cfg);
  EXPECT_DOUBLE_EQ(w.robot.base_pose.yaw, 0.5 * kPi);
}

// --- Door dynamics ----------------------------------------------------------

TEST(IntegrateDoor, EquilibriumIsFixedPoint) {
  const PhysicsConfig cfg;
  const DoorSpec spec = Door(4);
  DoorState d;
  d.handle_angle = cfg.handle_target;
  for (int i = 0; i < 1000; ++i) d = IntegrateDoor(d, {}, spec, cfg, 0.005);
  EXPECT_EQ(d.handle_angle, cfg.handle_target);
  EXPECT_EQ(d.handle_rate, 0.0);
  EXPECT_EQ(d.hinge_angle, 0.0);
  EXPECT_TRUE(d.latched);

  DoorState open;
  open.latched = false;
  open.handle_angle = cfg.handle_target;
  for (int i = 0; i < 1000; ++i) open = IntegrateDoor(open, {}, spec, cfg, 0.005);
  EXPECT_EQ(open.hinge_angle, 0.0);
  EXPECT_EQ(open.hinge_rate, 0.0);
}

TEST(IntegrateDoor, HandleMatchesFineStepOracle) {
  const PhysicsConfig cfg;
  const double h = cfg.dt_control / cfg.substeps_per_control;
  const int steps = static_cast<int>(std::lround(1.0 / h));
  for (uint64_t seed = 0; seed < 20; ++seed) {
    const DoorSpec spec = Door(seed);
    DoorState d;
    d.handle_angle = DegToRad(45.0);
    d.handle_rate = seed % 2 ? 0.2 : 0.0;
    double angle = d.handle_angle;
    double rate = d.handle_rate;
    double max_err = 0.0;
    double max_dev = 0.0;
    for (int i = 0; i < steps; ++i) {
      d = IntegrateDoor(d, {}, spec, cfg, h);
      FineSpringDamper(angle, rate, 0.0, spec.HandleStiffness(),
                       spec.HandleDamping(), cfg.handle_inertia,
                       cfg.handle_target, h, 1000);
      ASSERT_GT(angle, cfg.handle_lower_stop);  // stops inactive
      max_err = std::max(max_err, std::abs(d.handle_angle - angle));
      max_dev = std::max(max_dev, std::abs(angle - cfg.handle_target));
    }
    EXPECT_LT(max_err / max_dev, 1e-3) << "seed " << seed;
  }
}

TEST(IntegrateDoor, HingeMatchesFineStepOracleUnderTorque) {
  const PhysicsConfig cfg;
  const double h = 0.005;
  for (uint64_t seed = 0; seed < 10; ++seed) {
    const DoorSpec spec = Door(seed, DoorCategory::kPullLever);
    DoorState d;
    d.latched = false;
    d.hinge_angle = DegToRad(30.0);
    d.hinge_rate = 0.1;
    double angle = d.hinge_angle;
    double rate = d.hinge_rate;
    const double tau = 0.5 * spec.hinge_max_force;
    double max_err = 0.0;
    double max_dev = 0.0;
    for (int i = 0; i < 200; ++i) {
      d = IntegrateDoor(d, {0.0, tau}, spec, cfg, h);
      FineSpringDamper(angle, rate, tau, spec.HingeStiffness(),
                       spec.HingeDamping(), spec.inertia, 0.0, h, 1000);
      max_err = std::max(max_err, std::abs(d.hinge_angle - angle));
      max_dev = std::max(max_dev, std::abs(angle));
    }
    EXPECT_LT(max_err / max_dev, 1e-3);
  }
}

TEST(IntegrateDoor, TorquesClampedToDoorMaxima) {
  const PhysicsConfig cfg;
  DoorSpec spec = Door(5);
  spec.handle_max_force = 3.0;
  const DoorWrench clamped = ClampDoorWrench({10.0, -1000.0}, spec);
  EXPECT_EQ(clamped.handle, 3.0);
  EXPECT_EQ(clamped.hinge, -spec.hinge_max_force);

  DoorState a, b;
  a.latched = b.latched = false;
  a.handle_angle = b.handle_angle = cfg.handle_target;
  for (int i = 0; i < 100; ++i) {
    a = IntegrateDoor(a, {10.0, 500.0}, spec, cfg, 0.005);
    b = IntegrateDoor(b, {3.0, spec.hinge_max_force}, spec, cfg, 0.005);
  }
  EXPECT_EQ(a, b);
}

TEST(IntegrateDoor, LatchedHingeDoesNotMove) {
  const PhysicsConfig cfg;
  const DoorSpec spec = Door(6);
  DoorState d;
  d.handle_angle = cfg.handle_target;
  for (int i = 0; i < 500; ++i) {
    d = IntegrateDoor(d, {0.0, spec.hinge_max_force}, spec, cfg, 0.005);
  }
  EXPECT_TRUE(d.latched);
  EXPECT_EQ(d.hinge_angle, 0.0);
  EXPECT_EQ(d.hinge_rate, 0.0);
}

TEST(IntegrateDoor, HandlePastReleaseUnlatches) {
  const PhysicsConfig cfg;
  for (DoorCategory c : {DoorCategory::kPushLever, DoorCategory::kPushBar}) {
    const DoorSpec spec = Door(7, c);
    DoorState d;
    d.handle_angle = cfg.handle_target;
    int steps = 0;
    while (d.latched && steps < 20000) {
      d = IntegrateDoor(d, {spec.handle_max_force, 0.0}, spec, cfg, 0.005);
      ++steps;
    }
    ASSERT_FALSE(d.latched) << CategoryName(c);
    EXPECT_GE(d.handle_angle, cfg.ReleaseAngle(spec));
    for (int i = 0; i < 200; ++i) {
      d = IntegrateDoor(d, {0.0, spec.hinge_max_force}, spec, cfg, 0.005);
    }
    EXPECT_GT(d.hinge_angle, 0.0);
  }
}

TEST(IntegrateDoor, RejectsBadInput) {
  const PhysicsConfig cfg;
  const DoorSpec spec = Door(8);
  EXPECT_THROW(IntegrateDoor({}, {}, spec, cfg, 0.0), std::invalid_argument);
  EXPECT_THROW(IntegrateDoor({}, {NAN, 0.0}, spec, cfg, 0.01),
               std::invalid_argument);
}

using testing::HandleEnergy;
using testing::HingeEnergy;

TEST(IntegrateDoor, UnforcedEnergyNonIncreasing) {
  const PhysicsConfig cfg;
  Rng rng(9);
  for (uint64_t seed = 0; seed < 50; ++seed) {
    const DoorSpec spec = Door(seed, static_cast<DoorCategory>(seed % 3));
    DoorState d;
    d.latched = false;
    d.handle_angle = rng.Uniform(cfg.handle_lower_stop, cfg.handle_upper_stop);
    d.handle_rate = rng.Uniform(-3.0, 3.0);
    d.hinge_angle = rng.Uniform(0.0, cfg.hinge_max_angle);
    d.hinge_rate = rng.Uniform(-2.0, 2.0);
    for (int i = 0; i < 2000; ++i) {
      const double eh = HandleEnergy(d, spec, cfg);
      const double eg = HingeEnergy(d, spec);
      d = IntegrateDoor(d, {}, spec, cfg, 0.005);
      ASSERT_LE(HandleEnergy(d, spec, cfg), eh * (1.0 + 1e-9) + 1e-300);
      ASSERT_LE(HingeEnergy(d, spec), eg * (1.0 + 1e-9) + 1e-300);
    }
  }
}

// --- Grasp ------------------------------------------------------------------

// Robot at a fixed pose with the end effector at `ee` (world).
RobotState HoldingAt(const Vec2& ee, bool attached, double aperture) {
  RobotState r;
  r.base_pose = {ee.x, ee.y - 0.4, 0.5 * kPi};
  r.ee_offset = InverseTransformPoint(r.base_pose, ee);
  r.attached = attached;
  r.gripper_aperture = aperture;
  return r;
}

TEST(GraspCoupling, TangentialDisplacementGivesDesignedTorque) {
  const PhysicsConfig cfg;
  for (uint64_t seed = 0; seed < 20; ++seed) {
    const DoorSpec spec = Door(seed, seed % 2 ? DoorCategory::kPushLever
                                              : DoorCategory::kPullLever);
    const DoorState door;
    const Vec2 grip = GripPoint(spec, 0.0);
    // Along the lever toward the hinge, 1 cm.
    const Vec2 lever = -PanelDirection(spec, 0.0);
    const GraspResult g =
        GraspCoupling(HoldingAt(grip + lever * 0.01, true, 0.0), door, spec, cfg);
    ASSERT_TRUE(g.attached);
    EXPECT_NEAR(g.wrench_on_door.handle, 2.0, 1e-12);
    EXPECT_NEAR(g.force_on_ee.x, -lever.x * 20.0, 1e-12);
    EXPECT_NEAR(g.force_on_ee.y, -lever.y * 20.0, 1e-12);
    // Displacement normal to the lever turns no handle.
    const GraspResult n = GraspCoupling(
        HoldingAt(grip + ApproachNormal(spec, 0.0) * 0.01, true, 0.0), door,
        spec, cfg);
    EXPECT_NEAR(n.wrench_on_door.handle, 0.0, 1e-12);
  }
}

TEST(GraspCoupling, PushBarTurnsWithInwardPush) {
  const PhysicsConfig cfg;
  const DoorSpec spec = Door(3, DoorCategory::kPushBar);
  const Vec2 grip = GripPoint(spec, 0.0);
  const GraspResult g = GraspCoupling(
      HoldingAt(grip - ApproachNormal(spec, 0.0) * 0.01, true, 0.0), {}, spec, cfg);
  EXPECT_NEAR(g.wrench_on_door.handle, 2.0, 1e-12);
}

TEST(GraspCoupling, HingeTorqueIsLeverArmTimesTangentialForce) {
  const PhysicsConfig cfg;
  Rng rng(10);
  for (uint64_t seed = 0; seed < 40; ++seed) {
    const DoorSpec spec = Door(seed, static_cast<DoorCategory>(seed % 3));
    DoorState door;
    door.latched = false;
    door.hinge_angle = rng.Uniform(0.0, 1.2);
    const Vec2 grip = GripPoint(spec, door.hinge_angle);
    const Vec2 t = OpeningTangent(spec, door.hinge_angle);
    const GraspResult g =
        GraspCoupling(HoldingAt(grip + t * 0.02, true, 0.0), door, spec, cfg);
    // Opening force of 40 N at the grip radius.
    EXPECT_NEAR(g.wrench_on_door.hinge, 40.0 * GripRadius(spec), 1e-9);
  }
}

TEST(GraspCoupling, OpenGripperOrDistantHandDoesNotHold) {
  const PhysicsConfig cfg;
  const DoorSpec spec = Door(11);
  const Vec2 grip = GripPoint(spec, 0.0);
  EXPECT_FALSE(GraspCoupling(HoldingAt(grip, false, 1.0), {}, spec, cfg).attached);
  EXPECT_FALSE(GraspCoupling(HoldingAt(grip, true, 0.5), {}, spec, cfg).attached);
  EXPECT_FALSE(GraspCoupling(HoldingAt(grip + Vec2{0.0, -0.06}, false, 0.0), {},
                             spec, cfg)
                   .attached);
  const GraspResult caught =
      GraspCoupling(HoldingAt(grip + Vec2{0.0, -0.04}, false, 0.0), {}, spec, cfg);
  EXPECT_TRUE(caught.attached);
  // Held grasp is lost beyond twice the capture radius.
  EXPECT_TRUE(GraspCoupling(HoldingAt(grip + Vec2{0.0, -0.09}, true, 0.0), {},
                            spec, cfg)
                  .attached);
  EXPECT_FALSE(GraspCoupling(HoldingAt(grip + Vec2{0.0, -0.11}, true, 0.0), {},
                             spec, cfg)
                   .attached);
  const GraspResult at_rest = GraspCoupling(HoldingAt(grip, true, 0.0), {}, spec, cfg);
  EXPECT_EQ(at_rest.wrench_on_door.handle, 0.0);
  EXPECT_EQ(at_rest.wrench_on_door.hinge, 0.0);
}

// --- Robot motion -----------------------------------------------------------

TEST(Step, BaseLagMatchesClosedForm) {
  PhysicsConfig cfg;
  cfg.start_distance = 2.5;
  cfg.yaw_perturbation = 0.0;
  const DoorSpec spec = Door(12);
  Rng rng(13);
  WorldState w = ResetInitial(spec, rng, cfg);
  Action a;
  a.base_cmd.vx = 0.5;
  a.gripper_cmd = 1.0;
  for (int i = 0; i < 100; ++i) w = Step(w, a, spec, cfg).world;
  const double t = 2.0;
  const double tau = cfg.base_velocity_lag_tau;
  const double travelled = 0.5 * (t - tau * (1.0 - std::exp(-t / tau)));
  EXPECT_NEAR(w.robot.base_pose.y - (-2.5), travelled, 1e-9);
  EXPECT_NEAR(w.robot.base_pose.x, 0.0, 1e-12);
  EXPECT_NEAR(w.robot.base_velocity.vx, 0.5 * (1.0 - std::exp(-t / tau)), 1e-12);
  // Lag deficit relative to an instantaneous response.
  EXPECT_NEAR(0.5 * t - travelled, 0.5 * tau, 1e-9);
}

TEST(Step, EndEffectorLagMatchesClosedForm) {
  const PhysicsConfig cfg;
  const DoorSpec spec = Door(14);
  Rng rng(15);
  WorldState w = ResetInitial(spec, rng, cfg);
  Action a;
  a.ee_cmd = {0.1, 0.0};
  a.gripper_cmd = 1.0;
  for (int i = 0; i < 10; ++i) w = Step(w, a, spec, cfg).world;
  const double t = 0.2;
  const double tau = cfg.ee_velocity_lag_tau;
  EXPECT_NEAR(w.robot.ee_offset.x - 0.35, 0.1 * (t - tau * (1.0 - std::exp(-t / tau))),
              1e-12);
}

TEST(Step, ClampsKeepStateInBounds) {
  const PhysicsConfig cfg;
  Rng rng(16);
  for (uint64_t seed = 0; seed < 20; ++seed) {
    const DoorSpec spec = Door(seed, static_cast<DoorCategory>(seed % 3));
    WorldState w = ResetInitial(spec, rng, cfg);
    for (int t = 0; t < 300; ++t) {
      const Action a = seed % 2 ? testing::RandomAction(rng)
                                : testing::NoisyOracle(w, spec, rng, 0.3, cfg);
      const StepResult r = Step(w, a, spec, cfg);
      w = r.world;
      ASSERT_LE(Norm(w.robot.ee_offset), cfg.ee_reach_max + 1e-12);
      ASSERT_GE(w.robot.gripper_aperture, 0.0);
      ASSERT_LE(w.robot.gripper_aperture, 1.0);
      ASSERT_GE(w.door.handle_angle, cfg.handle_lower_stop);
      ASSERT_LE(w.door.handle_angle, cfg.handle_upper_stop);
      ASSERT_GE(w.door.hinge_angle, 0.0);
      ASSERT_LE(w.door.hinge_angle, cfg.hinge_max_angle);
      const DoorWrench applied =
          ClampDoorWrench({w.handle_torque, w.hinge_torque}, spec);
      ASSERT_LE(std::abs(applied.handle), spec.handle_max_force);
      ASSERT_LE(std::abs(applied.hinge), spec.hinge_max_force);
      const Action c = w.last_action;
      ASSERT_LE(std::abs(c.base_cmd.vx), cfg.base_linear_max);
      ASSERT_LE(std::abs(c.base_cmd.wz), cfg.base_yaw_rate_max);
      ASSERT_LE(std::abs(c.ee_cmd.y), cfg.ee_speed_max);
      if (r.termination.terminated) w = ResetInitial(spec, rng, cfg);
    }
  }
}

TEST(Step, LatchCausalityAlongTrajectories) {
  const PhysicsConfig cfg;
  for (uint64_t seed = 0; seed < 30; ++seed) {
    const DoorSpec spec = Door(seed, static_cast<DoorCategory>(seed % 3));
    const std::vector<WorldState> traj = testing::Rollout(spec, seed, 1500, 0.2, cfg);
    bool released = false;
    for (size_t t = 0; t < traj.size(); ++t) {
      const DoorState& d = traj[t].door;
      if (d.latched) {
        ASSERT_FALSE(released) << "latch re-engaged";
        ASSERT_EQ(d.hinge_angle, 0.0);
        ASSERT_EQ(d.hinge_rate, 0.0);
      } else if (!released) {
        released = true;
        // The handle reached the release angle at some substep of this step.
        ASSERT_GT(t, 0u);
        ASSERT_TRUE(traj[t - 1].door.latched);
      }
      if (d.hinge_angle != 0.0) ASSERT_TRUE(released);
    }
  }
}

TEST(Step, DeterministicAndRejectsBadInput) {
  const PhysicsConfig cfg;
  const DoorSpec spec = Door(17);
  const std::vector<WorldState> a = testing::Rollout(spec, 5, 400, 0.2, cfg);
  const std::vector<WorldState> b = testing::Rollout(spec, 5, 400, 0.2, cfg);
  ASSERT_EQ(a.size(), b.size());
  for (size_t i = 0; i < a.size(); ++i) ASSERT_EQ(a[i], b[i]);

  Action bad;
  bad.base_cmd.vx = NAN;
  EXPECT_THROW(Step(a[0], bad, spec, cfg), std::invalid_argument);
  EXPECT_THROW(Step(a[0], Action{}, Door(18), cfg), std::invalid_argument);
}

TEST(ClampAction, ClampsEachChannel) {
  const PhysicsConfig cfg;
  Action a;
  a.base_cmd = {3.0, -3.0, 9.0};
  a.ee_cmd = {-2.0, 2.0};
  a.gripper_cmd = 1.5;
  const Action c = ClampAction(a, cfg);
  EXPECT_EQ(c.base_cmd.vx, cfg.base_linear_max);
  EXPECT_EQ(c.base_cmd.vy, -cfg.base_linear_max);
  EXPECT_EQ(c.base_cmd.wz, cfg.base_yaw_rate_max);
  EXPECT_EQ(c.ee_cmd.x, -cfg.ee_speed_max);
  EXPECT_EQ(c.ee_cmd.y, cfg.ee_speed_max);
  EXPECT_EQ(c.gripper_cmd, 1.0);
  Action in_range;
  in_range.base_cmd = {0.1, -0.2, 0.3};
  in_range.ee_cmd = {0.05, -0.05};
  in_range.gripper_cmd = 0.4;
  EXPECT_EQ(ClampAction(in_range, cfg), in_range);
}

TEST(Step, TerminationReasons) {
  const PhysicsConfig cfg;
  const DoorSpec spec = Door(19);
  Rng rng(20);
  const WorldState start = ResetInitial(spec, rng, cfg);

  // Standing still times out at the configured horizon.
  WorldState w = start;
  Action still;
  still.gripper_cmd = 1.0;
  StepResult r;
  int steps = 0;
  do {
    r = Step(w, still, spec, cfg);
    w = r.world;
    ++steps;
  } while (!r.termination.terminated);
  EXPECT_EQ(r.termination.reason, TerminationReason::kTimeout);
  EXPECT_EQ(steps, static_cast<int>(std::lround(cfg.timeout / cfg.dt_control)));

  // Backing out of the workspace.
  w = start;
  Action back;
  back.base_cmd.vx = -1.0;
  back.base_cmd.wz = 0.0;
  do {
    r = Step(w, back, spec, cfg);
    w = r.world;
  } while (!r.termination.terminated);
  EXPECT_EQ(r.termination.reason, TerminationReason::kFellOverProxy);
  EXPECT_TRUE(r.termination.failure());

  // A held grasp stretched past the force limit.
  w = start;
  const Vec2 grip = GripPoint(spec, 0.0);
  w.robot = HoldingAt(grip + Vec2{0.0, -0.09}, true, 0.0);
  r = Step(w, Action{{}, {}, 0.0}, spec, cfg);
  EXPECT_EQ(r.termination.reason, TerminationReason::kExcessiveContact);
}

TEST(CheckSuccess, PlaneCriterionOnly) {
  const PhysicsConfig cfg;
  const DoorSpec spec = Door(21);
  WorldState w;
  w.robot.base_pose = {0.0, 1.0, 0.5 * kPi};
  EXPECT_TRUE(CheckSuccess(w, spec, cfg));
  w.robot.base_pose.y = std::nextafter(1.0, 0.0);
  EXPECT_FALSE(CheckSuccess(w, spec, cfg));
  w.robot.base_pose = {3.0, 1.0, 0.0};  // outside the doorway corridor
  EXPECT_TRUE(CheckSuccess(w, spec, cfg));
}

TEST(Step, BodyContactIsProjectedOutOfPanel) {
  PhysicsConfig cfg;
  cfg.yaw_perturbation = 0.0;
  const DoorSpec spec = Door(22, DoorCategory::kPushLever);
  Rng rng(23);
  WorldState w = ResetInitial(spec, rng, cfg);
  w.door.latched = false;
  w.door.handle_angle = DegToRad(40.0);
  Action fwd;
  fwd.base_cmd.vx = 0.5;
  fwd.gripper_cmd = 1.0;
  double peak = 0.0;
  for (int i = 0; i < 150; ++i) {
    w = Step(w, fwd, spec, cfg).world;
    peak = std::max(peak, w.contact_force);
  }
  // The body is projected out of the panel and only nudges it open.
  EXPECT_GT(peak, 0.0);
  EXPECT_GT(w.door.hinge_angle, 0.0);
  EXPECT_LE(w.robot.base_pose.y,
            -cfg.base_radius + spec.panel_width * std::sin(w.door.hinge_angle) + 1e-6);

  // A latched door stops the body at the wall plane.
  WorldState l = ResetInitial(spec, rng, cfg);
  for (int i = 0; i < 150; ++i) l = Step(l, fwd, spec, cfg).world;
  EXPECT_LE(l.robot.base_pose.y, -cfg.base_radius + 1e-9);
  EXPECT_EQ(l.door.hinge_angle, 0.0);
}

// --- Snapshots --------------------------------------------------------------

void ExpectRoundTrip(const WorldState& w, const DoorSpec& spec) {
  const Snapshot snap = TakeSnapshot(w, spec);
  const RestoredWorld r = RestoreSnapshot(snap);
  EXPECT_EQ(r.world, w);
  EXPECT_EQ(r.spec, spec);
  EXPECT_EQ(TakeSnapshot(r.world, r.spec), snap);
  EXPECT_EQ(SnapshotStage(snap), w.stage);
}

TEST(Snapshot, FixedLayout) {
  const PhysicsConfig cfg;
  const DoorSpec spec = Door(3, DoorCategory::kPullLever);
  Rng rng(5, 1);
  WorldState w = ResetInitial(spec, rng, cfg);
  w.stage = 4;
  w.step_count = 0x0102030405060708;
  const Snapshot snap = TakeSnapshot(w, spec);
  ASSERT_EQ(snap.bytes.size(), 364u);
  EXPECT_EQ(std::string(snap.bytes.begin(), snap.bytes.begin() + 4), "DRS1");
  EXPECT_EQ(snap.bytes[8], 1);  // category, first byte of the spec block
  EXPECT_EQ(snap.bytes[99], 4);  // stage, little-endian u32
  EXPECT_EQ(snap.bytes[100], 0);
  EXPECT_EQ(snap.bytes[103], 0x08);  // step count low byte first
  EXPECT_EQ(snap.bytes[110], 0x01);
}

TEST(Snapshot, RoundTripFreshAndMidEpisode) {
  const PhysicsConfig cfg;
  for (uint64_t seed = 0; seed < 12; ++seed) {
    const DoorSpec spec = Door(seed, static_cast<DoorCategory>(seed % 3));
    const std::vector<WorldState> traj = testing::Rollout(spec, seed, 1500, 0.1, cfg);
    ExpectRoundTrip(traj.front(), spec);
    bool saw_attached = false;
    for (size_t t = 0; t < traj.size(); t += 7) {
      ExpectRoundTrip(traj[t], spec);
      saw_attached |= traj[t].robot.attached && !traj[t].door.latched;
    }
    EXPECT_TRUE(saw_attached) << "seed " << seed;
  }
}

TEST(Snapshot, RestoredStateReplaysTrajectory) {
  const PhysicsConfig cfg;
  const DoorSpec spec = Door(24);
  std::vector<WorldState> traj = testing::Rollout(spec, 24, 60, 0.1, cfg);
  Rng rng(25);
  std::vector<Action> actions;
  for (int i = 0; i < 100; ++i) actions.push_back(testing::RandomAction(rng));
  WorldState a = traj.back();
  RestoredWorld b = RestoreSnapshot(TakeSnapshot(a, spec));
  for (const Action& act : actions) {
    a = Step(a, act, spec, cfg).world;
    b.world = Step(b.world, act, b.spec, cfg).world;
    ASSERT_EQ(a, b.world);
  }
  // Noise streams are part of the state.
  Rng ra = a.rng, rb = b.world.rng;
  EXPECT_EQ(ObserveStudent(a, spec, ra, cfg), ObserveStudent(b.world, b.spec, rb, cfg));
}

TEST(Snapshot, CorruptionIsDetected) {
  const PhysicsConfig cfg;
  const DoorSpec spec = Door(26);
  Rng rng(27);
  const Snapshot good = TakeSnapshot(ResetInitial(spec, rng, cfg), spec);
  auto expect_error = [](const Snapshot& s, const std::string& what) {
    try {
      RestoreSnapshot(s);
      ADD_FAILURE() << "no error for " << what;
    } catch (const std::runtime_error& e) {
      EXPECT_NE(std::string(e.what()).find(what), std::string::npos) << e.what();
    }
  };
  Snapshot version = good;
  version.bytes[4] = static_cast<uint8_t>(kSnapshotVersion + 1);
  expect_error(version, "version");
  Snapshot magic = good;
  magic.bytes[0] = 'X';
  expect_error(magic, "magic");
  Snapshot flipped = good;
  flipped.bytes[good.bytes.size() / 2] ^= 0x10;
  expect_error(flipped, "checksum");
  Snapshot truncated = good;
  truncated.bytes.resize(good.bytes.size() - 3);
  EXPECT_THROW(RestoreSnapshot(truncated), std::runtime_error);
  EXPECT_THROW(RestoreSnapshot(Snapshot{}), std::runtime_error);
}

// --- Observations -----------------------------------------------------------

TEST(ObservePrivileged, FacingDoorFromItsAxis) {
  const DoorSpec spec = Door(28);
  WorldState w;
  w.door_id = IdOf(spec);
  for (double d : {0.5, 1.0, 2.0}) {
    w.robot.base_pose = {0.0, -d, 0.5 * kPi};
    const PrivilegedObservation o = ObservePrivileged(w, spec);
    EXPECT_NEAR(o.root_to_door.x, d, 1e-15);
    EXPECT_NEAR(o.root_to_door.y, 0.0, 1e-15);
    EXPECT_NEAR(o.root_to_door.yaw, 0.0, 1e-15);
  }
}

TEST(ObservePrivileged, MatchesHomogeneousTransforms) {
  Rng rng(29);
  for (int i = 0; i < 500; ++i) {
    const DoorSpec spec = Door(i, static_cast<DoorCategory>(i % 3));
    WorldState w;
    w.robot.base_pose = {rng.Uniform(-2, 2), rng.Uniform(-3, 2),
                         rng.Uniform(-kPi, kPi)};
    w.robot.ee_offset = {rng.Uniform(-0.5, 0.5), rng.Uniform(-0.5, 0.5)};
    w.door.hinge_angle = rng.Uniform(0.0, 1.5);
    const PrivilegedObservation o = ObservePrivileged(w, spec);

    const Eigen::Matrix3d base = Homogeneous(w.robot.base_pose);
    const Eigen::Matrix3d rel = base.inverse() * Homogeneous({0.0, 0.0, 0.5 * kPi});
    EXPECT_NEAR(o.root_to_door.x, rel(0, 2), 1e-12);
    EXPECT_NEAR(o.root_to_door.y, rel(1, 2), 1e-12);
    EXPECT_NEAR(std::cos(o.root_to_door.yaw), rel(0, 0), 1e-12);
    EXPECT_NEAR(std::sin(o.root_to_door.yaw), rel(1, 0), 1e-12);

    const Vec2 grip = GripPoint(spec, w.door.hinge_angle);
    const Eigen::Vector3d ee =
        base * Eigen::Vector3d(w.robot.ee_offset.x, w.robot.ee_offset.y, 1.0);
    const Eigen::Vector2d diff =
        base.topLeftCorner<2, 2>().transpose() *
        Eigen::Vector2d(grip.x - ee(0), grip.y - ee(1));
    EXPECT_NEAR(o.ee_to_grip.x, diff(0), 1e-12);
    EXPECT_NEAR(o.ee_to_grip.y, diff(1), 1e-12);
    ASSERT_EQ(static_cast<int>(o.ToVector().size()), PrivilegedObservation::kDim);
  }
}

TEST(ObservePrivileged, GraspWrenchZeroWhenNotHolding) {
  const DoorSpec spec = Door(30);
  WorldState w;
  w.grasp_force = {5.0, -3.0};
  w.handle_torque = 1.5;
  w.robot.attached = false;
  PrivilegedObservation o = ObservePrivileged(w, spec);
  EXPECT_EQ(o.grasp_force, (Vec2{0.0, 0.0}));
  EXPECT_EQ(o.grasp_torque, 0.0);
  w.robot.attached = true;
  o = ObservePrivileged(w, spec);
  EXPECT_NEAR(Norm(o.grasp_force), Norm(w.grasp_force), 1e-12);
  EXPECT_EQ(o.grasp_torque, 1.5);
}

TEST(ObserveStudent, VisibilityConeAndRange) {
  PhysicsConfig cfg;
  const DoorSpec spec = Door(31);
  const Vec2 grip = GripPoint(spec, 0.0);
  WorldState w;
  Rng rng(32);
  // Grip 1 m straight ahead.
  w.robot.base_pose = {grip.x, grip.y - 1.0, 0.5 * kPi};
  EXPECT_TRUE(GripVisible(w, spec, cfg));
  w.robot.base_pose.yaw = -0.5 * kPi;  // facing away
  EXPECT_FALSE(GripVisible(w, spec, cfg));
  const StudentFrame hidden = ObserveStudent(w, spec, rng, cfg);
  EXPECT_FALSE(hidden.visible);
  EXPECT_EQ(hidden.root_to_door, (Pose2{0, 0, 0}));
  EXPECT_EQ(hidden.ee_to_grip, (Vec2{0, 0}));
  EXPECT_EQ(hidden.handle_angle, 0.0);
  EXPECT_EQ(hidden.hinge_angle, 0.0);
  EXPECT_EQ(hidden.handle_frame_angle, 0.0);

  // Either side of the cone edge and of the range limit.
  const double edge = cfg.fov_half_angle;
  w.robot.base_pose.yaw = 0.5 * kPi + edge - 1e-6;
  EXPECT_TRUE(GripVisible(w, spec, cfg));
  w.robot.base_pose.yaw = 0.5 * kPi + edge + 1e-6;
  EXPECT_FALSE(GripVisible(w, spec, cfg));
  w.robot.base_pose = {grip.x, grip.y - cfg.obs_range_max + 1e-6, 0.5 * kPi};
  EXPECT_TRUE(GripVisible(w, spec, cfg));
  w.robot.base_pose.y = grip.y - cfg.obs_range_max - 1e-6;
  EXPECT_FALSE(GripVisible(w, spec, cfg));
}

TEST(ObserveStudent, NoiselessDoorBlockEqualsPrivileged) {
  PhysicsConfig cfg;
  cfg.obs_noise_sigma = {0.0, 0.0, 0.0};
  const DoorSpec spec = Door(33);
  const std::vector<WorldState> traj = testing::Rollout(spec, 33, 400, 0.1, cfg);
  Rng rng(34);
  int visible = 0;
  for (const WorldState& w : traj) {
    const StudentFrame f = ObserveStudent(w, spec, rng, cfg);
    if (!f.visible) continue;
    ++visible;
    const PrivilegedObservation p = ObservePrivileged(w, spec, cfg);
    EXPECT_EQ(f.root_to_door, p.root_to_door);
    EXPECT_EQ(f.ee_to_grip, p.ee_to_grip);
    EXPECT_EQ(f.handle_frame_angle, p.handle_frame_angle);
    EXPECT_EQ(f.handle_angle, p.handle_angle);
    EXPECT_EQ(f.hinge_angle, p.hinge_angle);
    EXPECT_EQ(f.ee_offset, p.ee_offset);
    EXPECT_EQ(f.attached, p.attached);
  }
  EXPECT_GT(visible, 50);
}

TEST(ObserveStudent, NoiseHasConfiguredSpread) {
  const PhysicsConfig cfg;
  const DoorSpec spec = Door(35);
  Rng reset(36);
  const WorldState w = ResetInitial(spec, reset, cfg);
  const PrivilegedObservation p = ObservePrivileged(w, spec, cfg);
  Rng rng(37);
  const int n = 20000;
  double sum = 0.0, sum_sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double e = ObserveStudent(w, spec, rng, cfg).root_to_door.x - p.root_to_door.x;
    sum += e;
    sum_sq += e * e;
  }
  const double mean = sum / n;
  const double sd = std::sqrt(sum_sq / n - mean * mean);
  EXPECT_NEAR(mean, 0.0, 5.0 * cfg.obs_noise_sigma.position / std::sqrt(n));
  EXPECT_NEAR(sd, cfg.obs_noise_sigma.position, 0.03 * cfg.obs_noise_sigma.position);
}

TEST(StudentHistory, ResetFillsAndPushShifts) {
  StudentHistory h(4);
  StudentFrame a;
  a.yaw_rate = 1.0;
  h.Reset(a);
  ASSERT_EQ(h.frames().size(), 4u);
  for (const StudentFrame& f : h.frames()) EXPECT_EQ(f, a);
  StudentFrame b;
  b.yaw_rate = 2.0;
  h.Push(b);
  EXPECT_EQ(h.frames().back(), b);
  EXPECT_EQ(h.frames().front(), a);
  EXPECT_EQ(h.frames().size(), 4u);
  const std::vector<double> flat = h.Flatten();
  ASSERT_EQ(static_cast<int>(flat.size()), h.FlatDim());
  EXPECT_EQ(std::vector<double>(flat.end() - StudentFrame::kDim, flat.end()),
            b.ToVector());
}

TEST(PhysicsConfig, ValidationAndReleaseAngles) {
  PhysicsConfig cfg;
  EXPECT_NO_THROW(ValidatePhysicsConfig(cfg));
  cfg.dt_control = 0.0;
  EXPECT_THROW(ValidatePhysicsConfig(cfg), std::invalid_argument);
  cfg = {};
  cfg.fov_half_angle = 4.0;
  EXPECT_THROW(ValidatePhysicsConfig(cfg), std::invalid_argument);
  cfg = {};
  EXPECT_EQ(cfg.ReleaseAngle(Door(1, DoorCategory::kPushLever)),
            cfg.latch_release_angle);
  EXPECT_NEAR(cfg.ReleaseAngle(Door(1, DoorCategory::kPushBar)),
              cfg.handle_lower_stop +
                  0.2 * (cfg.handle_upper_stop - cfg.handle_lower_stop),
              1e-15);
}

}  // namespace
}  // namespace doorrl
