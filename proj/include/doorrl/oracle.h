#ifndef DOORRL_ORACLE_H_
#define DOORRL_ORACLE_H_

#include "doorrl/door_gen.h"
#include "doorrl/env.h"

namespace doorrl {

struct OracleParams {
  double reach = 0.5;              // preferred base to grip distance, m
  double corridor_offset = 0.1;    // doorway centreline shift away from hinge
  double grasp_tolerance = 0.02;   // ee error at which the gripper closes
  double handle_press = 0.012;     // spring stretch while turning the handle
  double swing_press = 0.02;       // max spring stretch while swinging
  double swing_rate = 0.6;         // target hinge rate, rad/s
  double open_angle = DegToRad(80.0);
  double release_angle = DegToRad(60.0);  // below this a detached door is regrasped
  double base_gain = 2.0;
  double yaw_gain = 3.0;
  double ee_gain = 12.0;
};

// Hand-coded controller with full state access. Stateless: the phase is
// inferred from the world state, so it can label arbitrary visited states.
Action OracleAction(const WorldState& world, const DoorSpec& spec,
                    const PhysicsConfig& cfg = {},
                    const OracleParams& params = {});

}  // namespace doorrl

#endif  // DOORRL_ORACLE_H_
