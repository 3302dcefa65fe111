#ifndef DOORRL_STAGED_RESET_H_
#define DOORRL_STAGED_RESET_H_

#include <array>
#include <cstdint>
#include <deque>
#include <functional>
#include <mutex>
#include <vector>

#include "doorrl/door_gen.h"
#include "doorrl/env.h"
#include "doorrl/rng.h"

namespace doorrl {

// Fraction of episodes initialized from each stage. Index 0 is the initial
// distribution of the environment itself.
struct ResetLaw {
  std::array<double, kNumStages> alpha{1.0, 0.0, 0.0, 0.0, 0.0, 0.0};

  // Validates; throws std::invalid_argument.
  static ResetLaw FromAlpha(const std::array<double, kNumStages>& alpha);
  friend bool operator==(const ResetLaw&, const ResetLaw&) = default;
};

// Throws unless alpha >= 0 and sums to 1 within 1e-12.
void ValidateResetLaw(const ResetLaw& law);

struct BufferEntry {
  uint64_t sequence = 0;  // 1-based insertion index within its ring
  int env_id = -1;
  Snapshot snapshot;
};

// Global per-stage rings of snapshots taken when an environment entered the
// stage. Thread-safe; sampling never observes a partially written entry.
class StageResetBuffer {
 public:
  explicit StageResetBuffer(int capacity);

  int capacity() const { return capacity_; }
  // Appends to ring `new_stage`, evicting the oldest entry when full.
  // Stage 0 and capacity 0 are no-ops. Throws for stages outside [0, 5].
  void Record(int env_id, int new_stage, Snapshot snapshot);

  size_t Size(int stage) const;
  uint64_t Inserted(int stage) const;
  // Oldest first.
  std::vector<BufferEntry> Entries(int stage) const;
  // Copy of the entry at `index` (0 = oldest).
  Snapshot At(int stage, size_t index) const;
  // Replaces ring `stage` wholesale, for resuming from a checkpoint.
  void RestoreRing(int stage, std::vector<BufferEntry> entries,
                   uint64_t inserted);

 private:
  int capacity_;
  mutable std::mutex mu_;
  std::array<std::deque<BufferEntry>, kNumStages> rings_;
  std::array<uint64_t, kNumStages> inserted_{};
};

// alpha_0 = initial_fraction; the rest is split evenly over stages
// 1..max_stage whose rings are non-empty. All mass goes to stage 0 when none
// are.
ResetLaw DefaultResetLaw(const StageResetBuffer& buffer,
                         double initial_fraction = 0.7, int max_stage = 4);

struct ResetSource {
  bool initial = true;
  int drawn_stage = 0;  // stage index drawn from the law
  Snapshot snapshot;    // set when !initial
};

// Draws a stage from the law; falls back to Initial for stage 0 or an empty
// ring, otherwise returns a uniformly drawn snapshot from that ring.
ResetSource SampleReset(const StageResetBuffer& buffer, const ResetLaw& law,
                        Rng& rng);

// Starts an episode from a snapshot: restores the state and the door it was
// taken on, restarts the episode clock and gives the episode a fresh noise
// stream so it does not replay the recorded one.
RestoredWorld BeginFromSnapshot(const Snapshot& snapshot, Rng& rng);

// Policy for occupancy estimation: maps a state to an action, drawing any
// randomness from the supplied stream.
using StatePolicy =
    std::function<Action(const WorldState&, const DoorSpec&, Rng&)>;

struct OccupancyEstimate {
  std::array<double, kNumStages> mean{};
  std::array<double, kNumStages> std_error{};
  int rollouts = 0;
};

struct OccupancyOptions {
  double gamma = 0.95;
  int n_rollouts = 200;
  int horizon = 0;  // 0: until gamma^t < 1e-6
  PhysicsConfig physics;
};

// Monte-Carlo estimate of (1 - gamma) sum_t gamma^t Pr(stage_t = y) under the
// reset law. Initial resets use doors drawn round-robin from `doors`.
// Terminal states are absorbing: remaining discount mass stays on the stage
// the episode ended in.
OccupancyEstimate EstimateOccupancyShift(const StatePolicy& policy,
                                         const std::vector<DoorSpec>& doors,
                                         const StageResetBuffer& buffer,
                                         const ResetLaw& law,
                                         const OccupancyOptions& options,
                                         uint64_t seed);

}  // namespace doorrl

#endif  // DOORRL_STAGED_RESET_H_
