#include "doorrl/staged_reset.h"

#include <cmath>
#include <iterator>
#include <stdexcept>
#include <string>

namespace doorrl {
namespace {

void CheckStage(int stage) {
  if (stage < 0 || stage >= kNumStages) {
    throw std::invalid_argument("stage out of range: " + std::to_string(stage));
  }
}

}  // namespace

void ValidateResetLaw(const ResetLaw& law) {
  double sum = 0.0;
  for (double a : law.alpha) {
    if (!(a >= 0.0) || !std::isfinite(a)) {
      throw std::invalid_argument("reset law: alpha must be finite and >= 0");
    }
    sum += a;
  }
  if (std::abs(sum - 1.0) > 1e-12) {
    throw std::invalid_argument("reset law: alpha must sum to 1");
  }
}

ResetLaw ResetLaw::FromAlpha(const std::array<double, kNumStages>& alpha) {
  ResetLaw law{alpha};
  ValidateResetLaw(law);
  return law;
}

StageResetBuffer::StageResetBuffer(int capacity) : capacity_(capacity) {
  if (capacity < 0) throw std::invalid_argument("buffer capacity must be >= 0");
}

void StageResetBuffer::Record(int env_id, int new_stage, Snapshot snapshot) {
  CheckStage(new_stage);
  if (new_stage == 0 || capacity_ == 0) return;
  std::lock_guard<std::mutex> lock(mu_);
  auto& ring = rings_[new_stage];
  const uint64_t seq = ++inserted_[new_stage];
  ring.push_back({seq, env_id, std::move(snapshot)});
  while (ring.size() > static_cast<size_t>(capacity_)) ring.pop_front();
}

void StageResetBuffer::RestoreRing(int stage, std::vector<BufferEntry> entries,
                                   uint64_t inserted) {
  CheckStage(stage);
  if (entries.size() > static_cast<size_t>(capacity_) ||
      (stage == 0 && !entries.empty()) || inserted < entries.size()) {
    throw std::invalid_argument("RestoreRing: inconsistent ring contents");
  }
  std::lock_guard<std::mutex> lock(mu_);
  rings_[stage].assign(std::make_move_iterator(entries.begin()),
                       std::make_move_iterator(entries.end()));
  inserted_[stage] = inserted;
}

size_t StageResetBuffer::Size(int stage) const {
  CheckStage(stage);
  std::lock_guard<std::mutex> lock(mu_);
  return rings_[stage].size();
}

uint64_t StageResetBuffer::Inserted(int stage) const {
  CheckStage(stage);
  std::lock_guard<std::mutex> lock(mu_);
  return inserted_[stage];
}

std::vector<BufferEntry> StageResetBuffer::Entries(int stage) const {
  CheckStage(stage);
  std::lock_guard<std::mutex> lock(mu_);
  return {rings_[stage].begin(), rings_[stage].end()};
}

Snapshot StageResetBuffer::At(int stage, size_t index) const {
  CheckStage(stage);
  std::lock_guard<std::mutex> lock(mu_);
  return rings_[stage].at(index).snapshot;
}

ResetLaw DefaultResetLaw(const StageResetBuffer& buffer,
                         double initial_fraction, int max_stage) {
  if (!(initial_fraction >= 0.0 && initial_fraction <= 1.0)) {
    throw std::invalid_argument("initial_fraction must be in [0, 1]");
  }
  max_stage = std::min(max_stage, kNumStages - 1);
  std::vector<int> live;
  for (int s = 1; s <= max_stage; ++s) {
    if (buffer.Size(s) > 0) live.push_back(s);
  }
  ResetLaw law;
  law.alpha.fill(0.0);
  if (live.empty()) {
    law.alpha[0] = 1.0;
    return law;
  }
  law.alpha[0] = initial_fraction;
  const double share = (1.0 - initial_fraction) / live.size();
  for (int s : live) law.alpha[s] = share;
  return law;
}

ResetSource SampleReset(const StageResetBuffer& buffer, const ResetLaw& law,
                        Rng& rng) {
  const double u = rng.Uniform01();
  int stage = kNumStages - 1;
  double acc = 0.0;
  for (int s = 0; s < kNumStages; ++s) {
    acc += law.alpha[s];
    if (u < acc) {
      stage = s;
      break;
    }
  }
  // Guard against rounding leaving u above the last cumulative value.
  while (stage > 0 && law.alpha[stage] == 0.0) --stage;

  ResetSource source;
  source.drawn_stage = stage;
  if (stage == 0) return source;
  // Size and copy under one lock so concurrent writers cannot interleave.
  const std::vector<BufferEntry> entries = buffer.Entries(stage);
  if (entries.empty()) return source;
  source.initial = false;
  source.snapshot = entries[rng.UniformInt(entries.size())].snapshot;
  return source;
}

RestoredWorld BeginFromSnapshot(const Snapshot& snapshot, Rng& rng) {
  RestoredWorld restored = RestoreSnapshot(snapshot);
  WorldState& w = restored.world;
  w.step_count = 0;
  w.episode_time = 0.0;
  w.termination = {};
  w.rng = Rng(rng.NextU64(), 0x0B5E);
  return restored;
}

OccupancyEstimate EstimateOccupancyShift(const StatePolicy& policy,
                                         const std::vector<DoorSpec>& doors,
                                         const StageResetBuffer& buffer,
                                         const ResetLaw& law,
                                         const OccupancyOptions& options,
                                         uint64_t seed) {
  ValidateResetLaw(law);
  if (!(options.gamma >= 0.0 && options.gamma < 1.0)) {
    throw std::invalid_argument("occupancy: gamma must be in [0, 1)");
  }
  if (doors.empty() || options.n_rollouts < 1) {
    throw std::invalid_argument("occupancy: need doors and rollouts");
  }
  int horizon = options.horizon;
  if (horizon <= 0) {
    horizon = options.gamma == 0.0
                  ? 1
                  : static_cast<int>(std::ceil(std::log(1e-6) /
                                               std::log(options.gamma)));
  }

  Rng rng(seed, 0x0CC);
  OccupancyEstimate est;
  est.rollouts = options.n_rollouts;
  std::array<double, kNumStages> sum{}, sum_sq{};
  for (int i = 0; i < options.n_rollouts; ++i) {
    Rng episode_rng = rng.Fork(static_cast<uint64_t>(i));
    const ResetSource source = SampleReset(buffer, law, episode_rng);
    WorldState world;
    DoorSpec spec;
    if (source.initial) {
      spec = doors[i % doors.size()];
      world = ResetInitial(spec, episode_rng, options.physics);
    } else {
      RestoredWorld r = BeginFromSnapshot(source.snapshot, episode_rng);
      world = r.world;
      spec = r.spec;
    }
    std::array<double, kNumStages> occ{};
    double discount = 1.0;
    bool done = false;
    for (int t = 0; t < horizon && !done; ++t) {
      occ[world.stage] += (1.0 - options.gamma) * discount;
      discount *= options.gamma;
      const StepResult step =
          Step(world, policy(world, spec, episode_rng), spec, options.physics);
      world = step.world;
      done = step.termination.terminated;
    }
    // Absorbing end state, or truncation remainder.
    occ[world.stage] += discount;
    for (int s = 0; s < kNumStages; ++s) {
      sum[s] += occ[s];
      sum_sq[s] += occ[s] * occ[s];
    }
  }
  const double n = options.n_rollouts;
  for (int s = 0; s < kNumStages; ++s) {
    est.mean[s] = sum[s] / n;
    const double var =
        n > 1 ? std::max(0.0, (sum_sq[s] - n * est.mean[s] * est.mean[s]) /
                                  (n - 1))
              : 0.0;
    est.std_error[s] = std::sqrt(var / n);
  }
  return est;
}

}  // namespace doorrl
