#include "doorrl/harness.h"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "doorrl/checkpoint.h"
#include "doorrl/oracle.h"

#ifndef DOORRL_VERSION
#define DOORRL_VERSION "unknown"
#endif

namespace doorrl {
namespace fs = std::filesystem;
namespace {

std::string Hex(const std::vector<uint8_t>& bytes) {
  static const char* kDigits = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (uint8_t b : bytes) {
    out.push_back(kDigits[b >> 4]);
    out.push_back(kDigits[b & 15]);
  }
  return out;
}

std::vector<uint8_t> Unhex(const std::string& s) {
  if (s.size() % 2) throw std::runtime_error("checkpoint: odd hex length");
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    throw std::runtime_error("checkpoint: bad hex digit");
  };
  std::vector<uint8_t> out(s.size() / 2);
  for (size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<uint8_t>(nibble(s[2 * i]) << 4 | nibble(s[2 * i + 1]));
  }
  return out;
}

const std::string& Meta(const Checkpoint& c, const std::string& key) {
  auto it = c.meta.find(key);
  if (it == c.meta.end()) throw std::runtime_error("checkpoint: missing " + key);
  return it->second;
}

uint64_t MetaU64(const Checkpoint& c, const std::string& key) {
  return std::stoull(Meta(c, key));
}

std::string Fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

PoolConfig MakePoolConfig(const ExperimentConfig& cfg, uint64_t seed,
                          bool track_history) {
  PoolConfig pc;
  pc.num_envs = cfg.num_envs;
  pc.categories = cfg.categories;
  pc.seed = Mix64(seed ^ 0x9001);
  pc.domain = SeedDomain::kTrain;
  pc.physics = cfg.physics;
  pc.reward = cfg.reward;
  pc.track_history = track_history;
  pc.history_length = cfg.history_length;
  pc.num_workers = cfg.num_workers;
  return pc;
}

CategoryReport Combined(const EvalReport& r) {
  CategoryReport all;
  double time_sum = 0.0;
  for (const CategoryReport& c : r.categories) {
    all.episodes += c.episodes;
    all.successes += c.successes;
    time_sum += c.mean_completion_time * c.successes;
    for (int s = 0; s < kNumStages; ++s) all.furthest_stage[s] += c.furthest_stage[s];
  }
  all.success_rate = all.episodes ? static_cast<double>(all.successes) / all.episodes : 0.0;
  all.mean_completion_time = all.successes ? time_sum / all.successes : 0.0;
  return all;
}

void CheckEvalSeeds(const EvalReport& report) {
  for (uint64_t s : report.door_seeds) {
    if (!IsEvalDoorSeed(s)) {
      throw std::logic_error("evaluation used a training door seed");
    }
  }
}

// Full teacher training state: policy, optimizer, rng, envs and buffer.
struct TrainState {
  int iteration = 0;
  std::array<int, kNumStages> first_reach{};
  std::array<int, kNumStages> first_seen{};
};

Checkpoint SaveTrainState(const PolicyParams& policy, const AdamState& opt,
                          const Rng& rng, const EnvPool& pool,
                          const StageResetBuffer& buffer, const TrainState& st,
                          const ExperimentConfig& cfg) {
  Checkpoint c;
  AppendPolicy(policy, c);
  c.meta["kind"] = "teacher";
  c.meta["config_hash"] = std::to_string(ConfigHash(cfg));
  c.meta["iteration"] = std::to_string(st.iteration);
  for (int s = 0; s < kNumStages; ++s) {
    c.meta["first_reach." + std::to_string(s)] = std::to_string(st.first_reach[s]);
    c.meta["first_seen." + std::to_string(s)] = std::to_string(st.first_seen[s]);
  }
  c.tensors.push_back({"adam.m", Matrix(opt.m)});
  c.tensors.push_back({"adam.v", Matrix(opt.v)});
  c.meta["adam.step"] = std::to_string(opt.step);
  Matrix lr(1, 1);
  lr(0, 0) = opt.config.lr;
  c.tensors.push_back({"adam.lr", lr});
  c.meta["rng.key"] = std::to_string(rng.key());
  c.meta["rng.counter"] = std::to_string(rng.counter());
  c.meta["pool.size"] = std::to_string(pool.size());
  Matrix prev(kActionDim, pool.size());
  Matrix scalars(4, pool.size());
  for (int i = 0; i < pool.size(); ++i) {
    const EnvSlot& e = pool.env(i);
    const std::string p = "env." + std::to_string(i) + ".";
    c.meta[p + "snapshot"] = Hex(TakeSnapshot(e.world, e.spec).bytes);
    c.meta[p + "rng.key"] = std::to_string(e.rng.key());
    c.meta[p + "rng.counter"] = std::to_string(e.rng.counter());
    const auto a = e.prev_action.ToArray();
    for (int k = 0; k < kActionDim; ++k) prev(k, i) = a[k];
    scalars(0, i) = e.episode_return;
    scalars(1, i) = e.start_stage;
    scalars(2, i) = e.max_stage;
    scalars(3, i) = e.from_snapshot;
  }
  c.tensors.push_back({"pool.prev_action", prev});
  c.tensors.push_back({"pool.scalars", scalars});
  for (int s = 1; s < kNumStages; ++s) {
    const std::string p = "buffer." + std::to_string(s) + ".";
    const std::vector<BufferEntry> entries = buffer.Entries(s);
    c.meta[p + "inserted"] = std::to_string(buffer.Inserted(s));
    c.meta[p + "count"] = std::to_string(entries.size());
    for (size_t j = 0; j < entries.size(); ++j) {
      const std::string q = p + std::to_string(j) + ".";
      c.meta[q + "sequence"] = std::to_string(entries[j].sequence);
      c.meta[q + "env"] = std::to_string(entries[j].env_id);
      c.meta[q + "snapshot"] = Hex(entries[j].snapshot.bytes);
    }
  }
  return c;
}

void LoadTrainState(const Checkpoint& c, PolicyParams& policy, AdamState& opt,
                    Rng& rng, EnvPool& pool, StageResetBuffer& buffer,
                    TrainState& st) {
  policy = ExtractPolicy(c);
  st.iteration = std::stoi(Meta(c, "iteration"));
  for (int s = 0; s < kNumStages; ++s) {
    st.first_reach[s] = std::stoi(Meta(c, "first_reach." + std::to_string(s)));
    st.first_seen[s] = std::stoi(Meta(c, "first_seen." + std::to_string(s)));
  }
  opt = AdamState::Create(policy.NumParams(), opt.config);
  opt.m = c.Get("adam.m").col(0);
  opt.v = c.Get("adam.v").col(0);
  opt.step = std::stoll(Meta(c, "adam.step"));
  opt.config.lr = c.Get("adam.lr")(0, 0);
  if (opt.m.size() != policy.NumParams()) {
    throw std::runtime_error("checkpoint: optimizer does not match policy");
  }
  rng = Rng::FromState(MetaU64(c, "rng.key"), MetaU64(c, "rng.counter"));
  if (std::stoi(Meta(c, "pool.size")) != pool.size()) {
    throw std::runtime_error("checkpoint: env count differs from config");
  }
  const Matrix& prev = c.Get("pool.prev_action");
  const Matrix& scalars = c.Get("pool.scalars");
  for (int i = 0; i < pool.size(); ++i) {
    const std::string p = "env." + std::to_string(i) + ".";
    const RestoredWorld r = RestoreSnapshot({Unhex(Meta(c, p + "snapshot"))});
    pool.ResetTo(i, r.world, r.spec);
    EnvSlot& e = pool.env(i);
    e.rng = Rng::FromState(MetaU64(c, p + "rng.key"), MetaU64(c, p + "rng.counter"));
    e.prev_action = Action::FromSpan(prev.col(i).data());
    e.episode_return = scalars(0, i);
    e.start_stage = static_cast<int>(scalars(1, i));
    e.max_stage = static_cast<int>(scalars(2, i));
    e.from_snapshot = scalars(3, i) != 0.0;
  }
  for (int s = 1; s < kNumStages; ++s) {
    const std::string p = "buffer." + std::to_string(s) + ".";
    const size_t n = std::stoul(Meta(c, p + "count"));
    std::vector<BufferEntry> entries(n);
    for (size_t j = 0; j < n; ++j) {
      const std::string q = p + std::to_string(j) + ".";
      entries[j].sequence = MetaU64(c, q + "sequence");
      entries[j].env_id = std::stoi(Meta(c, q + "env"));
      entries[j].snapshot.bytes = Unhex(Meta(c, q + "snapshot"));
    }
    buffer.RestoreRing(s, std::move(entries), MetaU64(c, p + "inserted"));
  }
}

ActorParams LoadActor(const std::string& path) {
  return ExtractPolicy(LoadCheckpoint(path)).actor;
}

ObsKind KindForDim(int obs_dim, int* history_length) {
  if (obs_dim == PrivilegedObservation::kDim) return ObsKind::kPrivileged;
  if (obs_dim % StudentFrame::kDim != 0) {
    throw std::runtime_error("checkpoint observation size " + std::to_string(obs_dim) +
                             " matches neither observation kind");
  }
  *history_length = obs_dim / StudentFrame::kDim;
  return ObsKind::kStudent;
}

void SaveActor(const ActorParams& actor, const std::string& path,
               const std::string& kind, const ExperimentConfig& cfg) {
  PolicyParams p;
  p.actor = actor;
  Checkpoint c;
  AppendPolicy(p, c);
  c.meta["kind"] = kind;
  c.meta["config_hash"] = std::to_string(ConfigHash(cfg));
  SaveCheckpoint(path, c);
}

EvalConfig MakeEvalConfig(const ExperimentConfig& cfg, uint64_t seed, int episodes,
                          ObsKind kind) {
  EvalConfig ec;
  ec.categories = cfg.categories;
  ec.episodes_per_category = episodes;
  ec.seed = seed;
  ec.batch = std::min(32, episodes);
  ec.physics = cfg.physics;
  ec.track_history = kind == ObsKind::kStudent;
  ec.history_length = cfg.history_length;
  return ec;
}

std::string StageList(const std::array<int, kNumStages>& a) {
  std::string out;
  for (int s = 1; s < kNumStages; ++s) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%6d", a[s]);
    out += buf;
  }
  return out;
}

}  // namespace

int ReachedStage(const CategoryReport& report, double reach_fraction) {
  if (report.episodes == 0) return 0;
  int reached = 0;
  int at_or_above = 0;
  for (int s = kNumStages - 1; s >= 0; --s) {
    at_or_above += report.furthest_stage[s];
    if (at_or_above >= reach_fraction * report.episodes) {
      reached = s;
      break;
    }
  }
  return reached;
}

void WriteManifest(const ExperimentConfig& cfg, const std::string& out_dir,
                   const std::vector<uint64_t>& seeds,
                   const std::vector<uint64_t>& door_seeds) {
  fs::create_directories(out_dir);
  std::ofstream out(fs::path(out_dir) / "manifest.txt");
  out << "phase=" << PhaseName(cfg.phase) << "\n";
  out << "code_version=" << DOORRL_VERSION << "\n";
  char hash[32];
  std::snprintf(hash, sizeof(hash), "%016llx",
                static_cast<unsigned long long>(ConfigHash(cfg)));
  out << "config_hash=" << hash << "\n";
  out << "seeds=";
  for (size_t i = 0; i < seeds.size(); ++i) out << (i ? "," : "") << seeds[i];
  out << "\n";
  if (!door_seeds.empty()) {
    out << "eval_door_seeds=";
    for (size_t i = 0; i < door_seeds.size(); ++i) out << (i ? "," : "") << door_seeds[i];
    out << "\n";
  }
  out << "# config\n" << CanonicalConfigText(cfg);
}

TeacherRun RunTrainTeacher(const ExperimentConfig& cfg, uint64_t seed,
                           const std::string& out_dir) {
  fs::create_directories(out_dir);
  EnvPool pool(MakePoolConfig(cfg, seed, false));
  StageResetBuffer buffer(cfg.buffer_size);
  Rng rng(seed, 0x7EAC);
  PolicyParams policy = PolicyParams::Create(
      ObsDim(ObsKind::kPrivileged), cfg.hidden, kActionDim, rng, true,
      cfg.init_log_std, cfg.hidden);
  AdamState opt = AdamState::Create(policy.NumParams(), {cfg.ppo.lr});
  TrainState st;
  st.first_reach.fill(-1);
  st.first_seen.fill(-1);
  if (!cfg.resume.empty()) {
    LoadTrainState(LoadCheckpoint(cfg.resume), policy, opt, rng, pool, buffer, st);
  }

  const fs::path csv_path = fs::path(out_dir) / "metrics.csv";
  std::ofstream csv;
  if (st.iteration == 0) {
    csv.open(csv_path, std::ios::trunc);
    csv << "iteration,env_steps,mean_step_reward,episodes,episode_success,"
           "mean_episode_return,max_stage,stage_frac_0,stage_frac_1,"
           "stage_frac_2,stage_frac_3,stage_frac_4,stage_frac_5,buffer_1,"
           "buffer_2,buffer_3,buffer_4,buffer_5,policy_loss,value_loss,"
           "entropy,approx_kl,clip_fraction,lr,first_epoch_max_ratio_dev,"
           "eval_success,eval_stage\n";
    SaveCheckpoint((fs::path(out_dir) / "ckpt_000000.bin").string(),
                   SaveTrainState(policy, opt, rng, pool, buffer, st, cfg));
  } else {
    csv.open(csv_path, std::ios::app);
  }

  TeacherRun run;
  const uint64_t eval_seed = Mix64(seed ^ 0xE7A1);
  double last_eval = -1.0;
  for (int it = st.iteration; it < cfg.iterations; ++it) {
    RolloutBatch batch = CollectRollouts(policy, pool, &buffer, cfg.collect);
    BootstrapTimeouts(batch, cfg.ppo.gamma);
    const GaeResult gae =
        ComputeGae(batch.rewards, batch.values, batch.dones, batch.last_values,
                   batch.num_envs, batch.num_steps, cfg.ppo.gamma, cfg.ppo.lambda);
    const PpoMetrics m = PpoUpdate(policy, opt, batch, gae, cfg.ppo, rng);
    st.iteration = it + 1;
    for (int s = 0; s <= batch.max_stage; ++s) {
      if (st.first_seen[s] < 0) st.first_seen[s] = it;
    }

    double eval_success = -1.0;
    int eval_stage = -1;
    if ((it + 1) % cfg.eval_interval == 0 || it + 1 == cfg.iterations) {
      const EvalReport r = Evaluate(
          MakeActorAct(policy.actor, ObsKind::kPrivileged, ActionMap{}),
          MakeEvalConfig(cfg, eval_seed, cfg.eval_episodes, ObsKind::kPrivileged));
      const CategoryReport all = Combined(r);
      eval_success = last_eval = all.success_rate;
      eval_stage = ReachedStage(all, cfg.reach_fraction);
      for (int s = 0; s <= eval_stage; ++s) {
        if (st.first_reach[s] < 0) st.first_reach[s] = it;
      }
    }

    int successes = 0;
    double ret = 0.0;
    for (const EpisodeInfo& e : batch.episodes) {
      successes += e.success;
      ret += e.episode_return;
    }
    const size_t n_eps = batch.episodes.size();
    csv << it << "," << static_cast<long long>(st.iteration) * batch.num_envs * batch.num_steps
        << "," << Fmt(batch.rewards.mean()) << "," << n_eps << ","
        << Fmt(n_eps ? static_cast<double>(successes) / n_eps : 0.0) << ","
        << Fmt(n_eps ? ret / n_eps : 0.0) << "," << batch.max_stage;
    for (double f : batch.stage_fraction) csv << "," << Fmt(f);
    for (int s = 1; s < kNumStages; ++s) csv << "," << buffer.Size(s);
    csv << "," << Fmt(m.policy_loss) << "," << Fmt(m.value_loss) << ","
        << Fmt(m.entropy) << "," << Fmt(m.approx_kl) << "," << Fmt(m.clip_fraction)
        << "," << Fmt(m.lr) << "," << Fmt(m.first_epoch_max_ratio_dev) << ","
        << Fmt(eval_success) << "," << eval_stage << "\n";
    csv.flush();

    if (m.aborted) {
      run.aborted = true;
      SaveCheckpoint((fs::path(out_dir) / "aborted.bin").string(),
                     SaveTrainState(policy, opt, rng, pool, buffer, st, cfg));
      break;
    }
    if (st.iteration % cfg.checkpoint_interval == 0) {
      char name[32];
      std::snprintf(name, sizeof(name), "ckpt_%06d.bin", st.iteration);
      SaveCheckpoint((fs::path(out_dir) / name).string(),
                     SaveTrainState(policy, opt, rng, pool, buffer, st, cfg));
    }
  }
  SaveCheckpoint((fs::path(out_dir) / "teacher.ckpt").string(),
                 SaveTrainState(policy, opt, rng, pool, buffer, st, cfg));
  WriteManifest(cfg, out_dir, {seed});
  run.policy = policy;
  run.first_reach = st.first_reach;
  run.first_seen = st.first_seen;
  run.iterations_done = st.iteration;
  run.final_success = last_eval;
  return run;
}

DistillRun RunDistill(const ExperimentConfig& cfg, uint64_t seed,
                      const std::string& out_dir) {
  fs::create_directories(out_dir);
  const ActionMap map;
  TeacherFn teacher;
  if (cfg.teacher == "oracle") {
    teacher = MakeOracleTeacher(cfg.physics, map);
  } else {
    teacher = MakeNetTeacher(ExtractPolicy(LoadCheckpoint(cfg.teacher)));
  }
  EnvPool pool(MakePoolConfig(cfg, seed, true));
  Rng rng(seed, 0xDA66);
  const int obs_dim = ObsDim(ObsKind::kStudent, cfg.history_length);
  DistillRun run;
  run.student = ActorParams::Create(obs_dim, cfg.student_hidden, kActionDim, rng,
                                    cfg.student_init_log_std);
  AdamState opt = AdamState::Create(run.student.NumParams(), {cfg.student_lr});
  DaggerDataset data(obs_dim, kActionDim);
  std::ofstream csv(fs::path(out_dir) / "metrics.csv");
  csv << "iteration,beta,dataset_size,train_mse,held_out_mse,episodes,"
         "mixture_success\n";
  for (int k = 0; k < cfg.dagger_iterations; ++k) {
    const DaggerMetrics m = DaggerIteration(teacher, run.student, opt, pool,
                                            DaggerBeta(k), data, cfg.dagger, rng);
    csv << k << "," << Fmt(m.beta) << "," << m.dataset_size << ","
        << Fmt(m.train_mse) << "," << Fmt(m.held_out_mse) << "," << m.episodes
        << "," << Fmt(m.success_rate) << "\n";
    csv.flush();
    run.iterations.push_back(m);
    run.held_out_mse = m.held_out_mse;
  }
  SaveActor(run.student, (fs::path(out_dir) / "student.ckpt").string(), "student", cfg);
  WriteManifest(cfg, out_dir, {seed});
  return run;
}

FinetuneRun RunFinetune(const ExperimentConfig& cfg, uint64_t seed,
                        const std::string& out_dir, const ActorParams* start) {
  fs::create_directories(out_dir);
  FinetuneRun run;
  if (start) {
    run.student = *start;
  } else {
    if (cfg.student.empty()) throw std::invalid_argument("finetune needs student=PATH");
    run.student = LoadActor(cfg.student);
  }
  int history = cfg.history_length;
  if (KindForDim(run.student.obs_dim(), &history) != ObsKind::kStudent) {
    throw std::invalid_argument("finetune expects a student checkpoint");
  }
  ExperimentConfig c = cfg;
  c.history_length = history;
  const PoolConfig pc = MakePoolConfig(c, seed, true);
  AdamState opt = AdamState::Create(run.student.NumParams(), {cfg.grpo.lr});
  Rng rng(seed, 0x6790);
  const uint64_t eval_seed = Mix64(seed ^ 0xE7A2);
  std::ofstream csv(fs::path(out_dir) / "metrics.csv");
  csv << "iteration,trajectories,rollout_success,mean_return,degenerate_groups,"
         "policy_loss,approx_kl,clip_fraction,first_epoch_max_ratio_dev,"
         "eval_success\n";
  for (int it = 0; it < cfg.grpo_iterations; ++it) {
    std::vector<GroupContext> contexts(cfg.grpo.groups_per_iter);
    for (GroupContext& ctx : contexts) {
      const DoorCategory cat = c.categories[rng.UniformInt(c.categories.size())];
      ctx.spec = SampleDoorSpec(TrainDoorSeed(rng.NextU64()), cat);
      Rng start_rng = rng.Fork(rng.NextU64());
      ctx.start = ResetInitial(ctx.spec, start_rng, c.physics);
    }
    const GroupBatch batch = CollectGroups(run.student, contexts, pc, cfg.grpo, rng.NextU64());
    const GrpoMetrics m = GrpoUpdate(run.student, opt, batch, cfg.grpo, rng);
    double eval_success = -1.0;
    if ((it + 1) % cfg.eval_interval == 0 || it + 1 == cfg.grpo_iterations) {
      eval_success = Combined(Evaluate(
          MakeActorAct(run.student, ObsKind::kStudent, pc.action_map),
          MakeEvalConfig(c, eval_seed, cfg.eval_episodes, ObsKind::kStudent)))
          .success_rate;
    }
    csv << it << "," << batch.returns.size() << "," << Fmt(m.success_rate) << ","
        << Fmt(m.mean_return) << "," << m.degenerate_groups << ","
        << Fmt(m.policy_loss) << "," << Fmt(m.approx_kl) << ","
        << Fmt(m.clip_fraction) << "," << Fmt(m.first_epoch_max_ratio_dev) << ","
        << Fmt(eval_success) << "\n";
    csv.flush();
    run.iterations.push_back(m);
  }
  SaveActor(run.student, (fs::path(out_dir) / "student_grpo.ckpt").string(),
            "student", cfg);
  WriteManifest(cfg, out_dir, {seed});
  return run;
}

BatchActFn LoadActFn(const ExperimentConfig& cfg, ObsKind* kind) {
  if (cfg.policy == "oracle") {
    *kind = ObsKind::kPrivileged;
    return MakeOracleAct(cfg.physics);
  }
  if (cfg.policy == "stand_still") {
    *kind = ObsKind::kPrivileged;
    return MakeStandStillAct();
  }
  if (cfg.policy.empty()) throw std::invalid_argument("eval needs policy=PATH");
  const ActorParams actor = LoadActor(cfg.policy);
  int history = cfg.history_length;
  *kind = KindForDim(actor.obs_dim(), &history);
  if (!cfg.obs.empty() &&
      (cfg.obs == "student") != (*kind == ObsKind::kStudent)) {
    throw std::invalid_argument("checkpoint does not take " + cfg.obs + " observations");
  }
  if (*kind == ObsKind::kStudent && history != cfg.history_length) {
    throw std::invalid_argument("checkpoint history length differs from config");
  }
  return MakeActorAct(actor, *kind, ActionMap{});
}

std::vector<EvalReport> RunEval(const ExperimentConfig& cfg,
                                const std::string& out_dir) {
  fs::create_directories(out_dir);
  ObsKind kind;
  const BatchActFn act = LoadActFn(cfg, &kind);
  std::vector<EvalReport> reports;
  std::ofstream out(fs::path(out_dir) / "eval_report.txt");
  std::vector<uint64_t> door_seeds;
  for (uint64_t seed : cfg.eval_seeds) {
    EvalReport r = Evaluate(act, MakeEvalConfig(cfg, seed, cfg.episodes_per_category, kind));
    CheckEvalSeeds(r);
    out << "eval_seed " << seed << "\n" << FormatEvalReport(r) << "\n";
    door_seeds.insert(door_seeds.end(), r.door_seeds.begin(), r.door_seeds.end());
    reports.push_back(std::move(r));
  }
  WriteManifest(cfg, out_dir, cfg.eval_seeds, door_seeds);
  return reports;
}

BufferAblation RunAblationBuffer(const ExperimentConfig& cfg,
                                 const std::string& out_dir) {
  BufferAblation out;
  std::ostringstream t;
  t << "# iteration at which each stage was first reached (-1: never)\n";
  t << "# reach: deterministic held-out evaluation; seen: any rollout env\n";
  t << "buffer  seed  reach_1 reach_2 reach_3 reach_4 reach_5 | seen_1 seen_2 "
       "seen_3 seen_4 seen_5 | final_success\n";
  for (int b : cfg.buffer_sizes) {
    for (uint64_t seed : cfg.seeds) {
      ExperimentConfig c = cfg;
      c.buffer_size = b;
      c.values["buffer_size"] = std::to_string(b);
      c.resume.clear();
      c.values["resume"] = "";
      const std::string dir =
          (fs::path(out_dir) / ("B" + std::to_string(b) + "_seed" + std::to_string(seed))).string();
      const TeacherRun r = RunTrainTeacher(c, seed, dir);
      BufferAblationRow row{b, seed, r.first_reach, r.first_seen, r.final_success};
      out.rows.push_back(row);
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%6d %5llu ", b, static_cast<unsigned long long>(seed));
      t << buf << StageList(row.first_reach) << " |" << StageList(row.first_seen)
        << " | " << Fmt(row.final_success) << "\n";
    }
  }
  out.table = t.str();
  fs::create_directories(out_dir);
  std::ofstream(fs::path(out_dir) / "ablation_buffer.txt") << out.table;
  WriteManifest(cfg, out_dir, cfg.seeds);
  return out;
}

GrpoAblation RunAblationGrpo(const ExperimentConfig& cfg,
                             const std::string& out_dir) {
  const uint64_t seed = cfg.seeds.front();
  GrpoAblation out;
  const DistillRun distill = RunDistill(cfg, seed, (fs::path(out_dir) / "distill").string());
  const FinetuneRun tuned =
      RunFinetune(cfg, seed, (fs::path(out_dir) / "finetune").string(), &distill.student);

  BatchActFn teacher_act;
  if (cfg.teacher == "oracle") {
    teacher_act = MakeOracleAct(cfg.physics);
  } else {
    teacher_act = MakeActorAct(LoadActor(cfg.teacher), ObsKind::kPrivileged, ActionMap{});
  }
  std::ostringstream t;
  t << "# held-out success rate per eval seed\n";
  t << "eval_seed  dagger  dagger+grpo  teacher  gain  gap_to_teacher\n";
  for (uint64_t s : cfg.eval_seeds) {
    const EvalReport before = Evaluate(
        MakeActorAct(distill.student, ObsKind::kStudent, ActionMap{}),
        MakeEvalConfig(cfg, s, cfg.episodes_per_category, ObsKind::kStudent));
    const EvalReport after = Evaluate(
        MakeActorAct(tuned.student, ObsKind::kStudent, ActionMap{}),
        MakeEvalConfig(cfg, s, cfg.episodes_per_category, ObsKind::kStudent));
    const EvalReport teach = Evaluate(
        teacher_act,
        MakeEvalConfig(cfg, s, cfg.episodes_per_category, ObsKind::kPrivileged));
    for (const EvalReport* r : {&before, &after, &teach}) CheckEvalSeeds(*r);
    out.before.push_back(Combined(before).success_rate);
    out.after.push_back(Combined(after).success_rate);
    out.teacher.push_back(Combined(teach).success_rate);
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%9llu  %6.3f  %11.3f  %7.3f  %+5.3f  %+6.3f\n",
                  static_cast<unsigned long long>(s), out.before.back(), out.after.back(),
                  out.teacher.back(), out.after.back() - out.before.back(),
                  out.teacher.back() - out.after.back());
    t << buf;
  }
  out.table = t.str();
  std::ofstream(fs::path(out_dir) / "ablation_grpo.txt") << out.table;
  WriteManifest(cfg, out_dir, cfg.seeds);
  return out;
}

void RunPhase(const ExperimentConfig& cfg) {
  const uint64_t seed = cfg.seeds.front();
  switch (cfg.phase) {
    case Phase::kTeacher:
      RunTrainTeacher(cfg, seed, cfg.out_dir);
      break;
    case Phase::kDistill:
      RunDistill(cfg, seed, cfg.out_dir);
      break;
    case Phase::kFinetune:
      RunFinetune(cfg, seed, cfg.out_dir);
      break;
    case Phase::kEval:
      RunEval(cfg, cfg.out_dir);
      break;
    case Phase::kAblateBuffer:
      RunAblationBuffer(cfg, cfg.out_dir);
      break;
    case Phase::kAblateGrpo:
      RunAblationGrpo(cfg, cfg.out_dir);
      break;
  }
}

}  // namespace doorrl
