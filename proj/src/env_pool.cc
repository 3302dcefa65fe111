#include <algorithm>
#include <cstdio>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "doorrl/algos.h"
#include "doorrl/oracle.h"

namespace doorrl {
namespace {

constexpr uint64_t kEvalBit = 1ULL << 63;

}  // namespace

Action ActionMap::ToEnv(const double* raw) const {
  std::array<double, kActionDim> a;
  for (int i = 0; i < kActionDim; ++i) a[i] = offset[i] + scale[i] * raw[i];
  return Action::FromArray(a);
}

Vector ActionMap::FromEnv(const Action& action) const {
  const auto a = action.ToArray();
  Vector raw(kActionDim);
  for (int i = 0; i < kActionDim; ++i) raw(i) = (a[i] - offset[i]) / scale[i];
  return raw;
}

uint64_t TrainDoorSeed(uint64_t raw) { return raw & ~kEvalBit; }
uint64_t EvalDoorSeed(uint64_t raw) { return raw | kEvalBit; }
bool IsEvalDoorSeed(uint64_t seed) { return (seed & kEvalBit) != 0; }

int ObsDim(ObsKind kind, int history_length) {
  return kind == ObsKind::kPrivileged ? PrivilegedObservation::kDim
                                      : history_length * StudentFrame::kDim;
}

void ParallelFor(int n, int workers, const std::function<void(int)>& fn) {
  if (workers <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  workers = std::min(workers, n);
  std::vector<std::thread> threads;
  std::vector<std::exception_ptr> errors(workers);
  for (int w = 0; w < workers; ++w) {
    threads.emplace_back([&, w] {
      try {
        for (int i = w * n / workers; i < (w + 1) * n / workers; ++i) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

EnvPool::EnvPool(const PoolConfig& config) : config_(config) {
  if (config.num_envs < 1) throw std::invalid_argument("pool needs >= 1 env");
  if (config.categories.empty()) {
    throw std::invalid_argument("pool needs at least one door category");
  }
  ValidatePhysicsConfig(config.physics);
  envs_.resize(config.num_envs);
  for (int i = 0; i < config.num_envs; ++i) {
    envs_[i].rng = Rng(config.seed, 0xE0000ULL + i);
    envs_[i].history = StudentHistory(config.history_length);
    Reset(i);
  }
}

void EnvPool::Reset(int i, const StageResetBuffer* buffer, const ResetLaw* law,
                    double initial_fraction) {
  EnvSlot& e = envs_.at(i);
  bool initial = true;
  // A zero-capacity buffer never holds snapshots and draws nothing, so B = 0
  // reproduces plain initial resets exactly.
  if (buffer && buffer->capacity() > 0) {
    const ResetLaw l = law ? *law : DefaultResetLaw(*buffer, initial_fraction);
    ResetSource src = SampleReset(*buffer, l, e.rng);
    if (!src.initial) {
      RestoredWorld r = BeginFromSnapshot(src.snapshot, e.rng);
      e.spec = r.spec;
      e.world = r.world;
      initial = false;
    }
  }
  if (initial) {
    const DoorCategory category =
        config_.categories[e.rng.UniformInt(config_.categories.size())];
    const uint64_t raw = e.rng.NextU64();
    const uint64_t seed = config_.domain == SeedDomain::kTrain
                              ? TrainDoorSeed(raw)
                              : EvalDoorSeed(raw);
    e.spec = SampleDoorSpec(seed, category);
    e.world = ResetInitial(e.spec, e.rng, config_.physics);
  }
  e.prev_action = e.world.last_action;
  e.episode_return = 0.0;
  e.start_stage = e.max_stage = e.world.stage;
  e.from_snapshot = !initial;
  if (config_.track_history) {
    e.history.Reset(
        ObserveStudent(e.world, e.spec, e.world.rng, config_.physics));
  }
}

void EnvPool::ResetTo(int i, const WorldState& world, const DoorSpec& spec) {
  EnvSlot& e = envs_.at(i);
  e.spec = spec;
  e.world = world;
  e.prev_action = world.last_action;
  e.episode_return = 0.0;
  e.start_stage = e.max_stage = world.stage;
  e.from_snapshot = false;
  if (config_.track_history) {
    e.history.Reset(
        ObserveStudent(e.world, e.spec, e.world.rng, config_.physics));
  }
}

Vector EnvPool::ObserveOne(int i, ObsKind kind) const {
  const EnvSlot& e = envs_.at(i);
  std::vector<double> v;
  if (kind == ObsKind::kPrivileged) {
    v = ObservePrivileged(e.world, e.spec, config_.physics).ToVector();
  } else {
    if (!config_.track_history) {
      throw std::logic_error("student observations need track_history");
    }
    v = e.history.Flatten();
  }
  return Eigen::Map<const Vector>(v.data(), v.size());
}

Matrix EnvPool::Observe(ObsKind kind) const {
  Matrix obs(ObsDim(kind, config_.history_length), size());
  for (int i = 0; i < size(); ++i) obs.col(i) = ObserveOne(i, kind);
  return obs;
}

void EnvPool::PushFrame(int i) {
  EnvSlot& e = envs_[i];
  e.history.Push(ObserveStudent(e.world, e.spec, e.world.rng, config_.physics));
}

std::vector<EnvStepInfo> EnvPool::StepAll(const std::vector<Action>& actions,
                                          StageResetBuffer* buffer,
                                          bool compute_reward,
                                          const std::vector<int>* subset) {
  if (actions.size() != envs_.size()) {
    throw std::invalid_argument("StepAll: one action per env required");
  }
  std::vector<int> all;
  if (!subset) {
    all.resize(envs_.size());
    for (int i = 0; i < size(); ++i) all[i] = i;
    subset = &all;
  }
  std::vector<EnvStepInfo> infos(envs_.size());
  ParallelFor(static_cast<int>(subset->size()), config_.num_workers,
              [&](int k) {
                const int i = (*subset)[k];
                EnvSlot& e = envs_[i];
                EnvStepInfo& info = infos[i];
                info.stage_before = e.world.stage;
                StepResult r;
                try {
                  r = Step(e.world, actions[i], e.spec, config_.physics);
                } catch (const std::exception& ex) {
                  throw std::runtime_error("env " + std::to_string(i) + ": " +
                                           ex.what());
                }
                if (compute_reward) {
                  info.breakdown =
                      ComputeReward(e.world, r.world, e.prev_action,
                                    actions[i], e.spec, config_.reward,
                                    config_.physics);
                  info.reward = info.breakdown.total;
                }
                e.world = r.world;
                e.prev_action = actions[i];
                info.terminated = r.termination.terminated;
                info.timeout =
                    r.termination.reason == TerminationReason::kTimeout;
                info.stage_after = e.world.stage;
                if (config_.track_history) PushFrame(i);
              });
  for (int i : *subset) {
    EnvSlot& e = envs_[i];
    const EnvStepInfo& info = infos[i];
    e.episode_return += info.reward;
    e.max_stage = std::max(e.max_stage, info.stage_after);
    if (buffer && info.stage_after > info.stage_before && !info.terminated) {
      buffer->Record(i, info.stage_after, TakeSnapshot(e.world, e.spec));
    }
  }
  return infos;
}

EpisodeInfo EnvPool::Finish(int i) const {
  const EnvSlot& e = envs_.at(i);
  EpisodeInfo info;
  info.env = i;
  info.category = e.spec.category;
  info.door_seed = e.spec.seed;
  info.reason = e.world.termination.reason;
  info.success = info.reason == TerminationReason::kSuccess;
  info.episode_return = e.episode_return;
  info.duration = e.world.episode_time;
  info.start_stage = e.start_stage;
  info.final_stage = e.world.stage;
  info.from_snapshot = e.from_snapshot;
  return info;
}

// --- Evaluation -------------------------------------------------------------

BatchActFn MakeActorAct(const ActorParams& actor, ObsKind kind,
                        const ActionMap& map) {
  return [actor, kind, map](EnvPool& pool, const std::vector<int>& active,
                            std::vector<Action>& out) {
    if (active.empty()) return;
    Matrix obs(actor.obs_dim(), active.size());
    for (size_t k = 0; k < active.size(); ++k) {
      obs.col(k) = pool.ObserveOne(active[k], kind);
    }
    const Matrix mean = actor.mean.Forward(obs);
    for (size_t k = 0; k < active.size(); ++k) {
      out[active[k]] = map.ToEnv(mean.col(k).data());
    }
  };
}

BatchActFn MakeOracleAct(const PhysicsConfig& physics) {
  return [physics](EnvPool& pool, const std::vector<int>& active,
                   std::vector<Action>& out) {
    for (int i : active) {
      out[i] = OracleAction(pool.env(i).world, pool.env(i).spec, physics);
    }
  };
}

BatchActFn MakeStandStillAct() {
  return [](EnvPool& pool, const std::vector<int>& active,
            std::vector<Action>& out) {
    for (int i : active) {
      Action a;
      a.gripper_cmd = pool.env(i).world.robot.gripper_aperture;
      out[i] = a;
    }
  };
}

EvalReport Evaluate(const BatchActFn& act, const EvalConfig& config) {
  if (config.episodes_per_category < 1 || config.batch < 1) {
    throw std::invalid_argument("Evaluate: episodes and batch must be >= 1");
  }
  EvalReport report;
  PoolConfig pc;
  pc.num_envs = std::min(config.batch, config.episodes_per_category);
  pc.physics = config.physics;
  pc.domain = SeedDomain::kEval;
  pc.track_history = config.track_history;
  pc.history_length = config.history_length;
  pc.seed = config.seed;
  EnvPool pool(pc);

  for (size_t c = 0; c < config.categories.size(); ++c) {
    const DoorCategory category = config.categories[c];
    CategoryReport cat;
    cat.category = category;
    const Rng base(config.seed, 0xE7A10000ULL + static_cast<uint64_t>(category));
    double time_sum = 0.0;
    for (int first = 0; first < config.episodes_per_category;
         first += pool.size()) {
      const int count =
          std::min(pool.size(), config.episodes_per_category - first);
      std::vector<int> active;
      for (int k = 0; k < count; ++k) {
        Rng rng = base.Fork(static_cast<uint64_t>(first + k));
        const DoorSpec spec =
            SampleDoorSpec(EvalDoorSeed(rng.NextU64()), category);
        if (!IsEvalDoorSeed(spec.seed)) {
          throw std::logic_error("evaluation door drawn from training seeds");
        }
        pool.ResetTo(k, ResetInitial(spec, rng, config.physics), spec);
        report.door_seeds.push_back(spec.seed);
        active.push_back(k);
      }
      std::vector<Action> actions(pool.size());
      while (!active.empty()) {
        act(pool, active, actions);
        const std::vector<EnvStepInfo> infos =
            pool.StepAll(actions, nullptr, false, &active);
        std::vector<int> still;
        for (int i : active) {
          if (!infos[i].terminated) {
            still.push_back(i);
            continue;
          }
          EpisodeInfo ep = pool.Finish(i);
          ++cat.episodes;
          ++cat.furthest_stage[ep.final_stage];
          if (ep.success) {
            ++cat.successes;
            time_sum += ep.duration;
          }
          report.episodes.push_back(ep);
        }
        active = std::move(still);
      }
    }
    cat.success_rate = static_cast<double>(cat.successes) / cat.episodes;
    cat.mean_completion_time = cat.successes ? time_sum / cat.successes : 0.0;
    report.categories.push_back(cat);
  }
  return report;
}

std::string FormatEvalReport(const EvalReport& report) {
  std::ostringstream out;
  out << "# evaluation report\n";
  out << "category episodes successes success_rate mean_time_s "
         "furthest_stage_histogram\n";
  char buf[256];
  for (const CategoryReport& c : report.categories) {
    std::snprintf(buf, sizeof(buf), "%s %d %d %.4f %.3f",
                  std::string(CategoryName(c.category)).c_str(), c.episodes,
                  c.successes, c.success_rate, c.mean_completion_time);
    out << buf;
    for (int s = 0; s < kNumStages; ++s) out << (s ? "," : " ") << c.furthest_stage[s];
    out << "\n";
  }
  out << "door_seeds";
  for (uint64_t s : report.door_seeds) out << " " << s;
  out << "\n";
  return out.str();
}

}  // namespace doorrl
