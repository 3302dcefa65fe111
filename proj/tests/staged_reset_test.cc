#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <thread>
#include <vector>

#include "doorrl/algos.h"
#include "doorrl/staged_reset.h"
#include "gtest/gtest.h"
#include "test_util.h"

namespace doorrl {
namespace {

Snapshot MakeSnapshot(int stage, uint64_t seed) {
  const DoorSpec spec = SampleDoorSpec(seed, DoorCategory::kPushLever);
  Rng rng(seed);
  WorldState w = ResetInitial(spec, rng, PhysicsConfig{});
  w.stage = stage;
  return TakeSnapshot(w, spec);
}

// Fills rings by driving noisy oracle episodes through a pool.
void FillFromRollouts(StageResetBuffer& buffer, int episodes_per_env, uint64_t seed,
                      const PhysicsConfig& physics = {}) {
  PoolConfig pc;
  pc.num_envs = 8;
  pc.seed = seed;
  pc.physics = physics;
  pc.categories = {DoorCategory::kPushLever, DoorCategory::kPullLever,
                   DoorCategory::kPushBar};
  EnvPool pool(pc);
  Rng rng(seed, 0xF111);
  std::vector<int> done(pc.num_envs, 0);
  std::vector<Action> actions(pc.num_envs);
  while (*std::min_element(done.begin(), done.end()) < episodes_per_env) {
    for (int e = 0; e < pool.size(); ++e) {
      actions[e] = testing::NoisyOracle(pool.env(e).world, pool.env(e).spec, rng, 0.2);
    }
    const std::vector<EnvStepInfo> infos = pool.StepAll(actions, &buffer, false);
    for (int e = 0; e < pool.size(); ++e) {
      if (!infos[e].terminated) continue;
      ++done[e];
      pool.Reset(e);
    }
  }
}

TEST(StageResetBuffer, FifoEvictionKeepsNewest) {
  StageResetBuffer buffer(10);
  for (int i = 1; i <= 15; ++i) buffer.Record(i, 2, MakeSnapshot(2, i));
  ASSERT_EQ(buffer.Size(2), 10u);
  EXPECT_EQ(buffer.Inserted(2), 15u);
  const std::vector<BufferEntry> entries = buffer.Entries(2);
  for (int k = 0; k < 10; ++k) {
    EXPECT_EQ(entries[k].sequence, static_cast<uint64_t>(6 + k));
    EXPECT_EQ(entries[k].env_id, 6 + k);
    EXPECT_EQ(entries[k].snapshot, MakeSnapshot(2, 6 + k));
  }
  EXPECT_EQ(buffer.At(2, 0), MakeSnapshot(2, 6));
  EXPECT_EQ(buffer.Size(1), 0u);
  EXPECT_EQ(buffer.Size(3), 0u);
}

TEST(StageResetBuffer, StageZeroAndZeroCapacityAreNoOps) {
  StageResetBuffer buffer(5);
  buffer.Record(0, 0, MakeSnapshot(0, 1));
  EXPECT_EQ(buffer.Size(0), 0u);
  StageResetBuffer empty(0);
  for (int s = 1; s < kNumStages; ++s) empty.Record(0, s, MakeSnapshot(s, s));
  for (int s = 0; s < kNumStages; ++s) EXPECT_EQ(empty.Size(s), 0u);
  EXPECT_THROW(buffer.Record(0, 6, MakeSnapshot(1, 1)), std::invalid_argument);
  EXPECT_THROW(StageResetBuffer(-1), std::invalid_argument);
}

TEST(StageResetBuffer, RingsHoldOnlyTheirStage) {
  StageResetBuffer buffer(100);
  FillFromRollouts(buffer, 2, 3);
  int filled = 0;
  for (int s = 1; s < kNumStages; ++s) {
    filled += buffer.Size(s) > 0;
    for (const BufferEntry& e : buffer.Entries(s)) {
      ASSERT_EQ(SnapshotStage(e.snapshot), s);
      ASSERT_EQ(RestoreSnapshot(e.snapshot).world.stage, s);
    }
  }
  EXPECT_EQ(filled, kNumStages - 1);
}

TEST(StageResetBuffer, RestoreRingValidates) {
  StageResetBuffer buffer(2);
  std::vector<BufferEntry> three(3);
  EXPECT_THROW(buffer.RestoreRing(1, three, 3), std::invalid_argument);
  std::vector<BufferEntry> one{{7, 0, MakeSnapshot(1, 1)}};
  EXPECT_THROW(buffer.RestoreRing(1, one, 0), std::invalid_argument);
  buffer.RestoreRing(1, one, 7);
  EXPECT_EQ(buffer.Inserted(1), 7u);
  buffer.Record(0, 1, MakeSnapshot(1, 2));
  EXPECT_EQ(buffer.Entries(1).back().sequence, 8u);
}

TEST(ResetLaw, Validation) {
  EXPECT_NO_THROW(ResetLaw::FromAlpha({0.5, 0.5, 0, 0, 0, 0}));
  EXPECT_THROW(ResetLaw::FromAlpha({0.5, 0.4, 0, 0, 0, 0}), std::invalid_argument);
  EXPECT_THROW(ResetLaw::FromAlpha({1.5, -0.5, 0, 0, 0, 0}), std::invalid_argument);
  EXPECT_THROW(ResetLaw::FromAlpha({NAN, 1, 0, 0, 0, 0}), std::invalid_argument);
}

TEST(DefaultResetLaw, SplitsOverNonEmptyRings) {
  StageResetBuffer buffer(4);
  ResetLaw law = DefaultResetLaw(buffer, 0.7);
  EXPECT_EQ(law.alpha[0], 1.0);
  buffer.Record(0, 1, MakeSnapshot(1, 1));
  buffer.Record(0, 3, MakeSnapshot(3, 3));
  buffer.Record(0, 5, MakeSnapshot(5, 5));  // above max_stage
  law = DefaultResetLaw(buffer, 0.7, 4);
  EXPECT_EQ(law.alpha[0], 0.7);
  EXPECT_NEAR(law.alpha[1], 0.15, 1e-15);
  EXPECT_EQ(law.alpha[2], 0.0);
  EXPECT_NEAR(law.alpha[3], 0.15, 1e-15);
  EXPECT_EQ(law.alpha[5], 0.0);
  EXPECT_NO_THROW(ValidateResetLaw(law));
  EXPECT_THROW(DefaultResetLaw(buffer, 1.5), std::invalid_argument);
}

TEST(SampleReset, InitialFrequencyMatchesAlpha) {
  StageResetBuffer buffer(10);
  for (int i = 0; i < 10; ++i) buffer.Record(i, 1, MakeSnapshot(1, i));
  const ResetLaw law = ResetLaw::FromAlpha({0.5, 0.5, 0, 0, 0, 0});
  Rng rng(11);
  constexpr int kDraws = 100000;
  int initial = 0;
  std::vector<double> picks(10, 0.0);
  for (int i = 0; i < kDraws; ++i) {
    const ResetSource s = SampleReset(buffer, law, rng);
    if (s.initial) {
      ++initial;
      EXPECT_EQ(s.drawn_stage, 0);
      continue;
    }
    ASSERT_EQ(s.drawn_stage, 1);
    for (int k = 0; k < 10; ++k) {
      if (s.snapshot == buffer.At(1, k)) picks[k] += 1.0;
    }
  }
  EXPECT_NEAR(static_cast<double>(initial) / kDraws, 0.5, 0.01);
  // Snapshots are drawn uniformly from the ring.
  const double n = kDraws - initial;
  double chi2 = 0.0;
  for (double p : picks) chi2 += (p - n / 10) * (p - n / 10) / (n / 10);
  EXPECT_GT(boost::math::cdf(boost::math::complement(boost::math::chi_squared(9), chi2)),
            1e-3);
}

TEST(SampleReset, EmptyRingFallsBackToInitial) {
  StageResetBuffer buffer(10);
  const ResetLaw law = ResetLaw::FromAlpha({0, 0, 1, 0, 0, 0});
  Rng rng(12);
  for (int i = 0; i < 100; ++i) {
    const ResetSource s = SampleReset(buffer, law, rng);
    EXPECT_TRUE(s.initial);
    EXPECT_EQ(s.drawn_stage, 2);
  }
}

TEST(EnvPool, ZeroCapacityBufferReproducesInitialResets) {
  PoolConfig pc;
  pc.num_envs = 4;
  pc.seed = 13;
  EnvPool plain(pc), staged(pc);
  StageResetBuffer none(0);
  Rng rng(14);
  for (int round = 0; round < 50; ++round) {
    for (int e = 0; e < pc.num_envs; ++e) {
      plain.Reset(e);
      staged.Reset(e, &none, nullptr, 0.3);
      ASSERT_EQ(plain.env(e).world, staged.env(e).world);
      ASSERT_EQ(plain.env(e).spec, staged.env(e).spec);
      ASSERT_EQ(plain.env(e).rng, staged.env(e).rng);
      ASSERT_FALSE(staged.env(e).from_snapshot);
    }
  }
}

TEST(BeginFromSnapshot, RestartsClockWithFreshNoise) {
  const DoorSpec spec = SampleDoorSpec(15, DoorCategory::kPushLever);
  const std::vector<WorldState> traj = testing::Rollout(spec, 15, 200, 0.1);
  const WorldState& w = traj.back();
  ASSERT_GT(w.step_count, 0);
  Rng rng(16);
  const RestoredWorld r = BeginFromSnapshot(TakeSnapshot(w, spec), rng);
  EXPECT_EQ(r.spec, spec);
  EXPECT_EQ(r.world.step_count, 0);
  EXPECT_EQ(r.world.episode_time, 0.0);
  EXPECT_EQ(r.world.stage, w.stage);
  EXPECT_EQ(r.world.robot, w.robot);
  EXPECT_EQ(r.world.door, w.door);
  EXPECT_FALSE(r.world.rng == w.rng);
  EXPECT_FALSE(r.world.termination.terminated);
}

TEST(StageResetBuffer, ConcurrentRecordAndSample) {
  StageResetBuffer buffer(16);
  buffer.Record(0, 1, MakeSnapshot(1, 0));
  const Snapshot proto = MakeSnapshot(1, 1);
  const ResetLaw law = ResetLaw::FromAlpha({0, 1, 0, 0, 0, 0});
  std::vector<std::thread> threads;
  for (int t = 0; t < 4; ++t) {
    threads.emplace_back([&, t] {
      Rng rng(t);
      for (int i = 0; i < 2000; ++i) {
        if (t % 2) {
          buffer.Record(t, 1, proto);
        } else {
          const ResetSource s = SampleReset(buffer, law, rng);
          ASSERT_FALSE(s.initial);
          ASSERT_EQ(SnapshotStage(s.snapshot), 1);
        }
      }
    });
  }
  for (auto& th : threads) th.join();
  EXPECT_EQ(buffer.Inserted(1), 4001u);
  EXPECT_EQ(buffer.Size(1), 16u);
}

TEST(EstimateOccupancyShift, MassOnStageRisesWithAlpha) {
  StageResetBuffer buffer(50);
  FillFromRollouts(buffer, 1, 17);
  ASSERT_GT(buffer.Size(3), 0u);
  std::vector<DoorSpec> doors;
  for (uint64_t s = 0; s < 8; ++s) doors.push_back(SampleDoorSpec(s, DoorCategory::kPushLever));
  const StatePolicy random = [](const WorldState&, const DoorSpec&, Rng& rng) {
    return testing::RandomAction(rng);
  };
  OccupancyOptions opts;
  opts.n_rollouts = 100;
  const OccupancyEstimate low =
      EstimateOccupancyShift(random, doors, buffer, ResetLaw{}, opts, 18);
  const OccupancyEstimate high = EstimateOccupancyShift(
      random, doors, buffer, ResetLaw::FromAlpha({0.5, 0, 0, 0.5, 0, 0}), opts, 18);
  double total = 0.0;
  for (double m : low.mean) total += m;
  EXPECT_NEAR(total, 1.0, 1e-9);
  EXPECT_EQ(low.mean[3], 0.0);  // random walking never opens a latch
  EXPECT_GT(high.mean[3], low.mean[3] + 2.0 * high.std_error[3]);
  EXPECT_THROW(EstimateOccupancyShift(random, {}, buffer, ResetLaw{}, opts, 1),
               std::invalid_argument);
}

}  // namespace
}  // namespace doorrl
