#ifndef DOORRL_DOOR_GEN_H_
#define DOORRL_DOOR_GEN_H_

#include <cstdint>
#include <numbers>
#include <string>
#include <string_view>

#include "doorrl/rng.h"
#include "doorrl/se2.h"

namespace doorrl {

enum class DoorCategory { kPushLever = 0, kPullLever = 1, kPushBar = 2 };
enum class Handedness { kLeft = 0, kRight = 1 };
enum class OpenDirection { kIn = 0, kOut = 1 };

std::string_view CategoryName(DoorCategory category);
DoorCategory ParseCategory(std::string_view name);

// Sampling ranges of the physical door properties. Drive gains (stiffness,
// damping) are quoted per degree.
struct DoorRanges {
  static constexpr double kPanelWidth[2] = {0.8, 1.1};
  static constexpr double kHandleToEdge[2] = {0.04, 0.1};
  static constexpr double kMass[2] = {80.0, 120.0};
  static constexpr double kHingeMaxForce[2] = {20.0, 30.0};
  static constexpr double kHingeDamping[2] = {5.0, 10.0};
  static constexpr double kHingeStiffness[2] = {10.0, 20.0};
  static constexpr double kHandleMaxForce[2] = {1.0, 3.0};
  static constexpr double kHandleDamping[2] = {0.1, 0.6};
  static constexpr double kHandleStiffness[2] = {30.0, 50.0};
};

// Multiplier applied to the per-degree drive gains before integration.
// The literal unit conversion (x 180/pi) gives handle springs that no
// admissible handle torque (1-3 N m) can rotate to the latch release angle,
// so the gains are scaled by pi/180 instead. See DoorSpec::HandleStiffness.
inline constexpr double kDriveGainScale = std::numbers::pi / 180.0;

struct DoorSpec {
  DoorCategory category = DoorCategory::kPushLever;
  double panel_width = 0.9;     // m
  double handle_to_edge = 0.07; // m
  double mass = 100.0;          // kg
  double hinge_max_force = 25.0;   // N m
  double hinge_damping = 7.5;      // per degree
  double hinge_stiffness = 15.0;   // per degree
  double handle_max_force = 2.0;   // N m
  double handle_damping = 0.35;    // per degree
  double handle_stiffness = 40.0;  // per degree
  Handedness handedness = Handedness::kLeft;
  OpenDirection open_direction = OpenDirection::kIn;
  double inertia = 100.0 * 0.9 * 0.9 / 3.0;  // kg m^2, slab about hinge
  uint64_t seed = 0;

  // Gains used by the integrator.
  double HingeStiffness() const { return hinge_stiffness * kDriveGainScale; }
  double HingeDamping() const { return hinge_damping * kDriveGainScale; }
  double HandleStiffness() const { return handle_stiffness * kDriveGainScale; }
  double HandleDamping() const { return handle_damping * kDriveGainScale; }

  bool is_push_bar() const { return category == DoorCategory::kPushBar; }

  friend bool operator==(const DoorSpec&, const DoorSpec&) = default;
};

// Throws std::invalid_argument naming the first violated invariant.
void ValidateDoorSpec(const DoorSpec& spec);

// Deterministic in (seed, category): every range is drawn uniformly from a
// stream keyed on the seed alone.
DoorSpec SampleDoorSpec(uint64_t seed, DoorCategory category);
DoorSpec SampleDoorSpec(Rng& rng, DoorCategory category);

// Key-value text export, one "key=value" per line, doubles printed with 17
// significant digits so import reproduces the spec exactly.
std::string ExportDoorSpec(const DoorSpec& spec);
DoorSpec ImportDoorSpec(std::string_view text);

// Door geometry. The wall is the world line y = 0 with the doorway centred on
// x = 0; the robot starts on the y < 0 side and passes toward +y.
Vec2 HingePosition(const DoorSpec& spec);
// +1 if a positive hinge angle rotates the panel counter-clockwise.
double OpeningSign(const DoorSpec& spec);
// Unit vector from the hinge toward the free edge.
Vec2 PanelDirection(const DoorSpec& spec, double hinge_angle);
// Unit panel normal on the robot's starting side (-y when closed).
Vec2 ApproachNormal(const DoorSpec& spec, double hinge_angle);
// Unit direction the grip point moves as the hinge angle increases.
Vec2 OpeningTangent(const DoorSpec& spec, double hinge_angle);
double GripRadius(const DoorSpec& spec);
Vec2 GripPoint(const DoorSpec& spec, double hinge_angle);
Vec2 FreeEdge(const DoorSpec& spec, double hinge_angle);

}  // namespace doorrl

#endif  // DOORRL_DOOR_GEN_H_
