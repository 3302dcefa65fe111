#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "doorrl/harness.h"

namespace doorrl {
namespace {

// Shortest text that parses back to the same double.
std::string Num(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

std::string Trim(const std::string& s) {
  const size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> SplitList(const std::string& s) {
  std::vector<std::string> out;
  if (Trim(s).empty()) return out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(Trim(item));
  return out;
}

long long ParseInt(const std::string& key, const std::string& v) {
  size_t used = 0;
  long long x = 0;
  try {
    x = std::stoll(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) {
    throw std::invalid_argument("config: " + key + " expects an integer, got '" + v + "'");
  }
  return x;
}

double ParseDouble(const std::string& key, const std::string& v) {
  size_t used = 0;
  double x = 0;
  try {
    x = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) {
    throw std::invalid_argument("config: " + key + " expects a number, got '" + v + "'");
  }
  return x;
}

bool ParseBool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("config: " + key + " expects true/false, got '" + v + "'");
}

struct WeightField {
  const char* name;
  double RewardWeights::*field;
};

constexpr WeightField kWeightFields[] = {
    {"termination", &RewardWeights::termination},
    {"action_rate", &RewardWeights::action_rate},
    {"dof_velocity", &RewardWeights::dof_velocity},
    {"dof_acceleration", &RewardWeights::dof_acceleration},
    {"dof_overspeed", &RewardWeights::dof_overspeed},
    {"undesired_contact", &RewardWeights::undesired_contact},
    {"walk_to_door", &RewardWeights::walk_to_door},
    {"arm_deviation", &RewardWeights::arm_deviation},
    {"face_door", &RewardWeights::face_door},
    {"pregrasp_gripper", &RewardWeights::pregrasp_gripper},
    {"pregrasp_distance", &RewardWeights::pregrasp_distance},
    {"not_standing_still", &RewardWeights::not_standing_still},
    {"gripper_closure", &RewardWeights::gripper_closure},
    {"grasp_distance", &RewardWeights::grasp_distance},
    {"push_handle", &RewardWeights::push_handle},
    {"push_hinge", &RewardWeights::push_hinge},
    {"release_handle", &RewardWeights::release_handle},
    {"target_root", &RewardWeights::target_root},
    {"standing_still", &RewardWeights::standing_still},
    {"stage_progress", &RewardWeights::stage_progress},
    {"task_completion", &RewardWeights::task_completion},
    {"success_save_time", &RewardWeights::success_save_time},
};

std::vector<ConfigKey> BuildSchema() {
  const ExperimentConfig d;
  const PhysicsConfig phys;
  const RewardWeights w;
  using K = KeyType;
  std::vector<ConfigKey> s = {
      {"phase", K::kString, "teacher", "teacher|distill|finetune|eval|ablate_buffer|ablate_grpo"},
      {"seeds", K::kIntList, "1", "training seeds"},
      {"categories", K::kCategoryList, "push_lever", "door categories"},
      {"num_envs", K::kInt, "64", "parallel environments"},
      {"num_workers", K::kInt, "1", "threads stepping environments"},
      {"iterations", K::kInt, "300", "teacher PPO iterations"},
      {"out_dir", K::kString, d.out_dir, "output directory"},
      {"hidden", K::kIntList, "64,64", "teacher hidden sizes (actor and critic)"},
      {"init_log_std", K::kDouble, Num(d.init_log_std), "teacher initial log std"},
      {"buffer_size", K::kInt, "100", "snapshots kept per stage"},
      {"buffer_sizes", K::kIntList, "0,10,100", "buffer sizes of the ablation grid"},
      {"initial_fraction", K::kDouble, Num(d.initial_fraction), "reset mass on the initial distribution"},
      {"reset_law", K::kDoubleList, "", "fixed reset law over stages 0..5 (empty: default law)"},
      {"staged_reset", K::kBool, "true", "reset through the snapshot buffer"},
      {"num_steps", K::kInt, std::to_string(d.collect.num_steps), "rollout length per iteration"},
      {"scale_reward_by_dt", K::kBool, "true", "multiply stage rewards by the control period"},
      {"ppo.gamma", K::kDouble, Num(d.ppo.gamma), ""},
      {"ppo.lambda", K::kDouble, Num(d.ppo.lambda), ""},
      {"ppo.clip", K::kDouble, Num(d.ppo.clip), ""},
      {"ppo.epochs", K::kInt, std::to_string(d.ppo.epochs), ""},
      {"ppo.minibatches", K::kInt, std::to_string(d.ppo.minibatches), ""},
      {"ppo.lr", K::kDouble, Num(d.ppo.lr), ""},
      {"ppo.entropy_coef", K::kDouble, Num(d.ppo.entropy_coef), ""},
      {"ppo.value_coef", K::kDouble, Num(d.ppo.value_coef), ""},
      {"ppo.max_grad_norm", K::kDouble, Num(d.ppo.max_grad_norm), ""},
      {"ppo.adaptive_lr", K::kBool, "true", "KL-adaptive learning rate"},
      {"ppo.desired_kl", K::kDouble, Num(d.ppo.desired_kl), ""},
      {"checkpoint_interval", K::kInt, std::to_string(d.checkpoint_interval), "iterations between checkpoints"},
      {"eval_interval", K::kInt, std::to_string(d.eval_interval), "iterations between progress evaluations"},
      {"eval_episodes", K::kInt, std::to_string(d.eval_episodes), "episodes per progress evaluation"},
      {"reach_fraction", K::kDouble, Num(d.reach_fraction), "episode fraction that counts a stage as reached"},
      {"resume", K::kString, "", "training checkpoint to resume from"},
      {"teacher", K::kString, "oracle", "teacher checkpoint path or 'oracle'"},
      {"student", K::kString, "", "student checkpoint path"},
      {"student_hidden", K::kIntList, "128,128", "student hidden sizes"},
      {"student_init_log_std", K::kDouble, Num(d.student_init_log_std), ""},
      {"history_length", K::kInt, std::to_string(d.history_length), "student frame stack"},
      {"student_lr", K::kDouble, Num(d.student_lr), "DAgger learning rate"},
      {"dagger.iterations", K::kInt, std::to_string(d.dagger_iterations), ""},
      {"dagger.steps_per_iter", K::kInt, std::to_string(d.dagger.steps_per_iter), "control steps per env"},
      {"dagger.epochs", K::kInt, std::to_string(d.dagger.epochs), ""},
      {"dagger.minibatch", K::kInt, std::to_string(d.dagger.minibatch), ""},
      {"dagger.holdout_fraction", K::kDouble, Num(d.dagger.holdout_fraction), ""},
      {"grpo.iterations", K::kInt, std::to_string(d.grpo_iterations), ""},
      {"grpo.group_size", K::kInt, std::to_string(d.grpo.group_size), ""},
      {"grpo.groups_per_iter", K::kInt, std::to_string(d.grpo.groups_per_iter), ""},
      {"grpo.clip", K::kDouble, Num(d.grpo.clip), ""},
      {"grpo.epochs", K::kInt, std::to_string(d.grpo.epochs), ""},
      {"grpo.minibatches", K::kInt, std::to_string(d.grpo.minibatches), ""},
      {"grpo.lr", K::kDouble, Num(d.grpo.lr), ""},
      {"grpo.success_bonus", K::kDouble, Num(d.grpo.success_bonus), ""},
      {"grpo.w_velocity", K::kDouble, Num(d.grpo.w_velocity), ""},
      {"grpo.w_acceleration", K::kDouble, Num(d.grpo.w_acceleration), ""},
      {"grpo.w_action_rate", K::kDouble, Num(d.grpo.w_action_rate), ""},
      {"grpo.scale_shaping_by_dt", K::kBool, "true", ""},
      {"eval_seeds", K::kIntList, "101,102,103", "evaluation seeds"},
      {"episodes_per_category", K::kInt, std::to_string(d.episodes_per_category), ""},
      {"policy", K::kString, "", "policy to evaluate: checkpoint, 'oracle' or 'stand_still'"},
      {"obs", K::kString, "", "privileged|student; empty infers it from the checkpoint"},
      {"physics.timeout", K::kDouble, Num(phys.timeout), "episode time limit, s"},
      {"physics.fov_half_angle_deg", K::kDouble, Num(45.0), "student camera half angle"},
      {"physics.obs_range_max", K::kDouble, Num(phys.obs_range_max), "student camera range, m"},
      {"physics.latch_release_angle_deg", K::kDouble, Num(30.0), ""},
      {"physics.push_bar_release_fraction", K::kDouble, Num(phys.push_bar_release_fraction), ""},
      {"physics.excessive_grasp_force", K::kDouble, Num(phys.excessive_grasp_force), "N"},
  };
  for (const WeightField& f : kWeightFields) {
    s.push_back({std::string("reward.") + f.name, K::kDouble, Num(w.*f.field), "stage reward weight"});
  }
  return s;
}

const ConfigKey* FindKey(const std::string& name) {
  for (const ConfigKey& k : ConfigSchema()) {
    if (k.name == name) return &k;
  }
  return nullptr;
}

void CheckValue(const ConfigKey& key, const std::string& v) {
  switch (key.type) {
    case KeyType::kInt:
      ParseInt(key.name, v);
      break;
    case KeyType::kDouble:
      ParseDouble(key.name, v);
      break;
    case KeyType::kBool:
      ParseBool(key.name, v);
      break;
    case KeyType::kString:
      break;
    case KeyType::kIntList:
      for (const std::string& x : SplitList(v)) ParseInt(key.name, x);
      break;
    case KeyType::kDoubleList:
      for (const std::string& x : SplitList(v)) ParseDouble(key.name, x);
      break;
    case KeyType::kCategoryList:
      if (SplitList(v).empty()) {
        throw std::invalid_argument("config: " + key.name + " must not be empty");
      }
      for (const std::string& x : SplitList(v)) ParseCategory(x);
      break;
  }
}

}  // namespace

std::string_view PhaseName(Phase phase) {
  switch (phase) {
    case Phase::kTeacher: return "teacher";
    case Phase::kDistill: return "distill";
    case Phase::kFinetune: return "finetune";
    case Phase::kEval: return "eval";
    case Phase::kAblateBuffer: return "ablate_buffer";
    case Phase::kAblateGrpo: return "ablate_grpo";
  }
  return "unknown";
}

Phase ParsePhase(std::string_view name) {
  for (Phase p : {Phase::kTeacher, Phase::kDistill, Phase::kFinetune, Phase::kEval,
                  Phase::kAblateBuffer, Phase::kAblateGrpo}) {
    if (PhaseName(p) == name) return p;
  }
  throw std::invalid_argument("config: unknown phase '" + std::string(name) + "'");
}

const std::vector<ConfigKey>& ConfigSchema() {
  static const std::vector<ConfigKey> schema = BuildSchema();
  return schema;
}

std::map<std::string, std::string> ParseConfigText(const std::string& text) {
  std::map<std::string, std::string> out;
  std::stringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = Trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(line_no) +
                                  ": expected key = value");
    }
    const std::string key = Trim(line.substr(0, eq));
    if (key.empty()) {
      throw std::invalid_argument("config line " + std::to_string(line_no) + ": empty key");
    }
    if (out.count(key)) {
      throw std::invalid_argument("config line " + std::to_string(line_no) +
                                  ": duplicate key " + key);
    }
    out[key] = Trim(line.substr(eq + 1));
  }
  return out;
}

std::map<std::string, std::string> LoadConfigFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ParseConfigText(ss.str());
}

void ValidateConfig(const std::map<std::string, std::string>& values) {
  for (const auto& [k, v] : values) {
    const ConfigKey* key = FindKey(k);
    if (!key) throw std::invalid_argument("config: unknown key '" + k + "'");
    CheckValue(*key, v);
  }
  if (auto it = values.find("phase"); it != values.end()) ParsePhase(it->second);
}

void ApplyOverride(std::map<std::string, std::string>& values,
                   const std::string& assignment) {
  const size_t eq = assignment.find('=');
  if (eq == std::string::npos) {
    throw std::invalid_argument("override must be key=value: " + assignment);
  }
  const std::string key = Trim(assignment.substr(0, eq));
  const std::string value = Trim(assignment.substr(eq + 1));
  const ConfigKey* k = FindKey(key);
  if (!k) throw std::invalid_argument("config: unknown key '" + key + "'");
  CheckValue(*k, value);
  values[key] = value;
}

ExperimentConfig BuildExperimentConfig(
    const std::map<std::string, std::string>& raw) {
  ValidateConfig(raw);
  std::map<std::string, std::string> v;
  for (const ConfigKey& k : ConfigSchema()) v[k.name] = k.default_value;
  for (const auto& [k, x] : raw) v[k] = x;

  auto str = [&](const char* k) { return v.at(k); };
  auto i = [&](const char* k) { return static_cast<int>(ParseInt(k, v.at(k))); };
  auto dbl = [&](const char* k) { return ParseDouble(k, v.at(k)); };
  auto b = [&](const char* k) { return ParseBool(k, v.at(k)); };
  auto ints = [&](const char* k) {
    std::vector<int> out;
    for (const std::string& x : SplitList(v.at(k))) out.push_back(static_cast<int>(ParseInt(k, x)));
    return out;
  };
  auto seeds = [&](const char* k) {
    std::vector<uint64_t> out;
    for (const std::string& x : SplitList(v.at(k))) {
      const long long s = ParseInt(k, x);
      if (s < 0) throw std::invalid_argument(std::string("config: ") + k + " must be >= 0");
      out.push_back(static_cast<uint64_t>(s));
    }
    return out;
  };
  auto positive = [](const char* k, double x) {
    if (!(x > 0)) throw std::invalid_argument(std::string("config: ") + k + " must be > 0");
  };

  ExperimentConfig c;
  c.values = v;
  c.phase = ParsePhase(str("phase"));
  c.seeds = seeds("seeds");
  if (c.seeds.empty()) throw std::invalid_argument("config: seeds must not be empty");
  c.categories.clear();
  for (const std::string& x : SplitList(str("categories"))) c.categories.push_back(ParseCategory(x));
  c.num_envs = i("num_envs");
  positive("num_envs", c.num_envs);
  c.num_workers = i("num_workers");
  positive("num_workers", c.num_workers);
  c.iterations = i("iterations");
  if (c.iterations < 0) throw std::invalid_argument("config: iterations must be >= 0");
  c.out_dir = str("out_dir");
  c.hidden = ints("hidden");
  c.init_log_std = dbl("init_log_std");
  c.buffer_size = i("buffer_size");
  if (c.buffer_size < 0) throw std::invalid_argument("config: buffer_size must be >= 0");
  c.buffer_sizes = ints("buffer_sizes");
  c.initial_fraction = dbl("initial_fraction");
  if (c.initial_fraction < 0 || c.initial_fraction > 1) {
    throw std::invalid_argument("config: initial_fraction must be in [0, 1]");
  }
  const std::vector<std::string> law = SplitList(str("reset_law"));
  if (!law.empty()) {
    if (law.size() != kNumStages) {
      throw std::invalid_argument("config: reset_law needs 6 entries");
    }
    std::array<double, kNumStages> a{};
    for (int s = 0; s < kNumStages; ++s) a[s] = ParseDouble("reset_law", law[s]);
    c.reset_law = ResetLaw::FromAlpha(a);
  }
  c.collect.num_steps = i("num_steps");
  positive("num_steps", c.collect.num_steps);
  c.collect.scale_reward_by_dt = b("scale_reward_by_dt");
  c.collect.staged_reset = b("staged_reset");
  c.collect.initial_fraction = c.initial_fraction;
  c.collect.fixed_law = c.reset_law;
  c.ppo.gamma = dbl("ppo.gamma");
  c.ppo.lambda = dbl("ppo.lambda");
  c.ppo.clip = dbl("ppo.clip");
  c.ppo.epochs = i("ppo.epochs");
  c.ppo.minibatches = i("ppo.minibatches");
  c.ppo.lr = dbl("ppo.lr");
  c.ppo.entropy_coef = dbl("ppo.entropy_coef");
  c.ppo.value_coef = dbl("ppo.value_coef");
  c.ppo.max_grad_norm = dbl("ppo.max_grad_norm");
  c.ppo.adaptive_lr = b("ppo.adaptive_lr");
  c.ppo.desired_kl = dbl("ppo.desired_kl");
  c.checkpoint_interval = i("checkpoint_interval");
  positive("checkpoint_interval", c.checkpoint_interval);
  c.eval_interval = i("eval_interval");
  positive("eval_interval", c.eval_interval);
  c.eval_episodes = i("eval_episodes");
  positive("eval_episodes", c.eval_episodes);
  c.reach_fraction = dbl("reach_fraction");
  c.resume = str("resume");
  c.teacher = str("teacher");
  c.student = str("student");
  c.student_hidden = ints("student_hidden");
  c.student_init_log_std = dbl("student_init_log_std");
  c.history_length = i("history_length");
  positive("history_length", c.history_length);
  c.student_lr = dbl("student_lr");
  c.dagger_iterations = i("dagger.iterations");
  c.dagger.steps_per_iter = i("dagger.steps_per_iter");
  c.dagger.epochs = i("dagger.epochs");
  c.dagger.minibatch = i("dagger.minibatch");
  positive("dagger.minibatch", c.dagger.minibatch);
  c.dagger.holdout_fraction = dbl("dagger.holdout_fraction");
  c.grpo_iterations = i("grpo.iterations");
  c.grpo.group_size = i("grpo.group_size");
  if (c.grpo.group_size < 2) throw std::invalid_argument("config: grpo.group_size must be >= 2");
  c.grpo.groups_per_iter = i("grpo.groups_per_iter");
  positive("grpo.groups_per_iter", c.grpo.groups_per_iter);
  c.grpo.clip = dbl("grpo.clip");
  c.grpo.epochs = i("grpo.epochs");
  c.grpo.minibatches = i("grpo.minibatches");
  c.grpo.lr = dbl("grpo.lr");
  c.grpo.success_bonus = dbl("grpo.success_bonus");
  c.grpo.w_velocity = dbl("grpo.w_velocity");
  c.grpo.w_acceleration = dbl("grpo.w_acceleration");
  c.grpo.w_action_rate = dbl("grpo.w_action_rate");
  c.grpo.scale_shaping_by_dt = b("grpo.scale_shaping_by_dt");
  c.grpo.num_workers = c.num_workers;
  c.eval_seeds = seeds("eval_seeds");
  c.episodes_per_category = i("episodes_per_category");
  positive("episodes_per_category", c.episodes_per_category);
  c.policy = str("policy");
  c.obs = str("obs");
  if (!c.obs.empty() && c.obs != "privileged" && c.obs != "student") {
    throw std::invalid_argument("config: obs must be privileged or student");
  }
  c.physics.timeout = dbl("physics.timeout");
  c.physics.fov_half_angle = DegToRad(dbl("physics.fov_half_angle_deg"));
  c.physics.obs_range_max = dbl("physics.obs_range_max");
  c.physics.latch_release_angle = DegToRad(dbl("physics.latch_release_angle_deg"));
  c.physics.push_bar_release_fraction = dbl("physics.push_bar_release_fraction");
  c.physics.excessive_grasp_force = dbl("physics.excessive_grasp_force");
  ValidatePhysicsConfig(c.physics);
  for (const WeightField& f : kWeightFields) {
    c.reward.weights.*f.field = dbl((std::string("reward.") + f.name).c_str());
  }
  return c;
}

std::string CanonicalConfigText(const ExperimentConfig& cfg) {
  std::string out;
  for (const auto& [k, v] : cfg.values) out += k + "=" + v + "\n";
  return out;
}

uint64_t ConfigHash(const ExperimentConfig& cfg) {
  // Output location and resume point do not change what a run computes.
  std::string text;
  for (const auto& [k, v] : cfg.values) {
    if (k != "out_dir" && k != "resume") text += k + "=" + v + "\n";
  }
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace doorrl
