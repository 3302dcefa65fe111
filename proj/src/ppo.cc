#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "doorrl/algos.h"

namespace doorrl {
namespace {

Matrix GatherCols(const Matrix& m, const std::vector<int>& idx, size_t begin,
                  size_t end) {
  Matrix out(m.rows(), end - begin);
  for (size_t k = begin; k < end; ++k) out.col(k - begin) = m.col(idx[k]);
  return out;
}

Vector GatherRows(const Vector& v, const std::vector<int>& idx, size_t begin,
                  size_t end) {
  Vector out(end - begin);
  for (size_t k = begin; k < end; ++k) out(k - begin) = v(idx[k]);
  return out;
}

void Shuffle(std::vector<int>& idx, Rng& rng) {
  for (size_t i = idx.size(); i > 1; --i) {
    std::swap(idx[i - 1], idx[rng.UniformInt(i)]);
  }
}

// Mean KL(old || new) between diagonal Gaussians over the columns.
double MeanGaussianKl(const Matrix& old_mean, const Vector& old_log_std,
                      const Matrix& new_mean, const Vector& new_log_std) {
  const Vector old_var = (2.0 * old_log_std.array()).exp();
  const Vector new_var = (2.0 * new_log_std.array()).exp();
  double total = 0.0;
  for (Eigen::Index c = 0; c < old_mean.cols(); ++c) {
    for (Eigen::Index d = 0; d < old_mean.rows(); ++d) {
      const double dm = old_mean(d, c) - new_mean(d, c);
      total += new_log_std(d) - old_log_std(d) +
               (old_var(d) + dm * dm) / (2.0 * new_var(d)) - 0.5;
    }
  }
  return total / std::max<Eigen::Index>(1, old_mean.cols());
}

}  // namespace

RolloutBatch CollectRollouts(const PolicyParams& policy, EnvPool& pool,
                             StageResetBuffer* buffer,
                             const CollectConfig& config) {
  const int n = pool.size();
  const int t_max = config.num_steps;
  if (t_max < 1) throw std::invalid_argument("num_steps must be >= 1");
  const int obs_dim = ObsDim(ObsKind::kPrivileged);
  if (policy.actor.obs_dim() != obs_dim) {
    throw std::invalid_argument("policy does not take privileged observations");
  }
  const int act_dim = policy.actor.act_dim();
  const double dt = pool.config().physics.dt_control;
  const ActionMap& map = pool.config().action_map;
  StageResetBuffer* reset_buffer = config.staged_reset ? buffer : nullptr;
  const ResetLaw* law = config.fixed_law ? &*config.fixed_law : nullptr;

  RolloutBatch b;
  b.num_envs = n;
  b.num_steps = t_max;
  const int total = n * t_max;
  b.obs.resize(obs_dim, total);
  b.actions.resize(act_dim, total);
  b.means.resize(act_dim, total);
  b.log_probs.resize(total);
  b.rewards.resize(total);
  b.values.resize(total);
  b.dones.assign(total, 0);
  b.timeouts.assign(total, 0);
  b.stages.assign(total, 0);
  std::vector<std::string_view> term_names;
  for (std::string_view name : RewardTermNames()) term_names.push_back(name);
  b.term_means.assign(term_names.size(), 0.0);

  std::vector<Action> env_actions(n);
  for (int t = 0; t < t_max; ++t) {
    const Matrix obs = pool.Observe(ObsKind::kPrivileged);
    const Matrix mean = policy.actor.mean.Forward(obs);
    Matrix act = mean;
    if (!config.deterministic) {
      for (int e = 0; e < n; ++e) {
        act.col(e) = SampleAction(mean.col(e), policy.actor.log_std,
                                  pool.env(e).rng);
      }
    }
    const Vector logp = GaussianLogProb(mean, policy.actor.log_std, act);
    Vector values = Vector::Zero(n);
    if (policy.critic) values = policy.critic->Forward(obs).row(0).transpose();
    for (int e = 0; e < n; ++e) env_actions[e] = map.ToEnv(act.col(e).data());

    const std::vector<EnvStepInfo> infos =
        pool.StepAll(env_actions, reset_buffer, true);
    const int base = t * n;
    b.obs.middleCols(base, n) = obs;
    b.actions.middleCols(base, n) = act;
    b.means.middleCols(base, n) = mean;
    b.log_probs.segment(base, n) = logp;
    b.values.segment(base, n) = values;
    for (int e = 0; e < n; ++e) {
      const EnvStepInfo& info = infos[e];
      const int idx = base + e;
      b.rewards(idx) = config.scale_reward_by_dt ? info.reward * dt : info.reward;
      b.dones[idx] = info.terminated;
      b.timeouts[idx] = info.timeout;
      b.stages[idx] = info.stage_after;
      b.max_stage = std::max(b.max_stage, info.stage_after);
      b.stage_fraction[info.stage_after] += 1.0 / total;
      for (const RewardTerm& term : info.breakdown.terms) {
        for (size_t k = 0; k < term_names.size(); ++k) {
          if (term_names[k] == term.name) {
            b.term_means[k] += term.weighted / total;
            break;
          }
        }
      }
      if (info.terminated) {
        b.episodes.push_back(pool.Finish(e));
        pool.Reset(e, reset_buffer, law, config.initial_fraction);
      }
    }
  }
  b.last_values = Vector::Zero(n);
  if (policy.critic) {
    b.last_values = policy.critic->Forward(pool.Observe(ObsKind::kPrivileged))
                        .row(0)
                        .transpose();
  }
  return b;
}

GaeResult ComputeGae(const Vector& rewards, const Vector& values,
                     const std::vector<uint8_t>& dones,
                     const Vector& last_values, int num_envs, int num_steps,
                     double gamma, double lambda) {
  const int total = num_envs * num_steps;
  if (rewards.size() != total || values.size() != total ||
      static_cast<int>(dones.size()) != total ||
      last_values.size() != num_envs) {
    throw std::invalid_argument("ComputeGae: inconsistent sizes");
  }
  GaeResult out;
  out.advantages.resize(total);
  Vector running = Vector::Zero(num_envs);
  for (int t = num_steps - 1; t >= 0; --t) {
    for (int e = 0; e < num_envs; ++e) {
      const int idx = t * num_envs + e;
      const double next_value =
          t == num_steps - 1 ? last_values(e) : values(idx + num_envs);
      const double live = dones[idx] ? 0.0 : 1.0;
      const double delta = rewards(idx) + gamma * next_value * live - values(idx);
      running(e) = delta + gamma * lambda * live * running(e);
      out.advantages(idx) = running(e);
    }
  }
  out.returns = out.advantages + values;
  return out;
}

Vector NormalizeAdvantages(const Vector& adv) {
  if (adv.size() == 0) return adv;
  const double mean = adv.mean();
  const double var = (adv.array() - mean).square().mean();
  const double std = std::sqrt(var);
  if (std < 1e-8) return Vector::Zero(adv.size());
  return (adv.array() - mean) / std;
}

void BootstrapTimeouts(RolloutBatch& batch, double gamma) {
  for (Eigen::Index i = 0; i < batch.rewards.size(); ++i) {
    if (batch.timeouts[i]) batch.rewards(i) += gamma * batch.values(i);
  }
}

double ClippedSurrogate(double ratio, double advantage, double clip) {
  const double clipped = std::clamp(ratio, 1.0 - clip, 1.0 + clip);
  return std::min(ratio * advantage, clipped * advantage);
}

PpoMetrics PpoUpdate(PolicyParams& policy, AdamState& opt,
                     const RolloutBatch& batch, const GaeResult& gae,
                     const PpoConfig& config, Rng& rng) {
  if (!policy.critic) throw std::invalid_argument("PPO needs a critic");
  const int total = static_cast<int>(batch.log_probs.size());
  if (gae.advantages.size() != total) {
    throw std::invalid_argument("PpoUpdate: advantages do not match batch");
  }
  PpoMetrics m;
  const Vector saved_params = policy.Flatten();
  const AdamState saved_opt = opt;
  const Vector adv = NormalizeAdvantages(gae.advantages);
  const Vector behaviour_log_std = policy.actor.log_std;

  // Ratios of the first epoch, measured before any parameter change.
  {
    const Matrix mean = policy.actor.mean.Forward(batch.obs);
    const Vector logp =
        GaussianLogProb(mean, policy.actor.log_std, batch.actions);
    m.first_epoch_max_ratio_dev =
        ((logp - batch.log_probs).array().exp() - 1.0).abs().maxCoeff();
  }

  const int mb_count = std::max(1, std::min(config.minibatches, total));
  std::vector<int> order(total);
  std::iota(order.begin(), order.end(), 0);
  int updates = 0;
  double clip_hits = 0.0;
  double clip_count = 0.0;
  try {
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
      Shuffle(order, rng);
      for (int mb = 0; mb < mb_count; ++mb) {
        const size_t begin = static_cast<size_t>(mb) * total / mb_count;
        const size_t end = static_cast<size_t>(mb + 1) * total / mb_count;
        const int count = static_cast<int>(end - begin);
        const Matrix obs = GatherCols(batch.obs, order, begin, end);
        const Matrix act = GatherCols(batch.actions, order, begin, end);
        const Matrix old_mean = GatherCols(batch.means, order, begin, end);
        const Vector old_logp = GatherRows(batch.log_probs, order, begin, end);
        const Vector a = GatherRows(adv, order, begin, end);
        const Vector ret = GatherRows(gae.returns, order, begin, end);

        double entropy = 0.0;
        const GradResult actor_grad = ActorGradient(
            policy.actor, obs, [&](const Matrix& mean, const Vector& log_std) {
              ActorLoss out;
              const Vector inv_var = (-2.0 * log_std.array()).exp();
              const Vector logp = GaussianLogProb(mean, log_std, act);
              const Matrix diff = act - mean;
              Vector dlogp(count);
              double surrogate = 0.0;
              for (int i = 0; i < count; ++i) {
                const double ratio = std::exp(logp(i) - old_logp(i));
                const double clipped =
                    std::clamp(ratio, 1.0 - config.clip, 1.0 + config.clip);
                const double s1 = ratio * a(i);
                const double s2 = clipped * a(i);
                surrogate += std::min(s1, s2);
                dlogp(i) = s1 <= s2 ? -ratio * a(i) / count : 0.0;
                clip_hits += std::abs(ratio - 1.0) > config.clip;
                clip_count += 1.0;
              }
              entropy = GaussianEntropy(log_std);
              out.loss = -surrogate / count - config.entropy_coef * entropy;
              out.d_mean = diff.array().colwise() * inv_var.array();
              out.d_mean = out.d_mean.array().rowwise() *
                           dlogp.transpose().array();
              out.d_log_std =
                  ((diff.array().square().colwise() * inv_var.array() - 1.0)
                       .rowwise() *
                   dlogp.transpose().array())
                      .rowwise()
                      .sum()
                      .matrix();
              out.d_log_std.array() -= config.entropy_coef;
              m.policy_loss = -surrogate / count;
              return out;
            });
        const GradResult critic_grad = MlpGradient(
            *policy.critic, obs, [&](const Matrix& v) {
              OutputLoss out;
              const Matrix err = v - ret.transpose();
              out.loss = config.value_coef * err.array().square().mean();
              out.d_output = 2.0 * config.value_coef * err / count;
              m.value_loss = err.array().square().mean();
              return out;
            });
        Vector grad(policy.NumParams());
        grad << actor_grad.grad, critic_grad.grad;
        if (!grad.allFinite()) throw std::runtime_error("non-finite gradient");
        ClipGradNorm(grad, config.max_grad_norm);
        Vector params = policy.Flatten();
        AdamUpdate(params, grad, opt);
        policy.Unflatten(params);
        policy.actor.ClampLogStd();
        m.entropy = entropy;
        ++updates;

        const Matrix new_mean = policy.actor.mean.Forward(obs);
        const double kl = MeanGaussianKl(old_mean, behaviour_log_std, new_mean,
                                         policy.actor.log_std);
        m.approx_kl = kl;
        if (config.adaptive_lr) {
          if (kl > 2.0 * config.desired_kl) {
            opt.config.lr = std::max(config.lr_min, opt.config.lr / 1.5);
          } else if (kl < 0.5 * config.desired_kl) {
            opt.config.lr = std::min(config.lr_max, opt.config.lr * 1.5);
          }
        }
      }
    }
    if (!policy.Flatten().allFinite()) {
      throw std::runtime_error("non-finite parameters");
    }
  } catch (const std::runtime_error&) {
    policy.Unflatten(saved_params);
    opt = saved_opt;
    m.aborted = true;
  }
  m.clip_fraction = clip_count > 0 ? clip_hits / clip_count : 0.0;
  m.lr = opt.config.lr;
  return m;
}

}  // namespace doorrl
