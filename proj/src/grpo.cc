#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "doorrl/algos.h"

namespace doorrl {
namespace {

double RawTerm(const RewardBreakdown& b, std::string_view name) {
  for (const RewardTerm& t : b.terms) {
    if (t.name == name) return t.raw;
  }
  return 0.0;
}

}  // namespace

Vector GrpoAdvantages(const Vector& returns) {
  if (returns.size() < 2) throw std::invalid_argument("GRPO needs G >= 2");
  const double mean = returns.mean();
  const double std = std::sqrt((returns.array() - mean).square().mean());
  if (std < 1e-8) return Vector::Zero(returns.size());
  return (returns.array() - mean) / std;
}

GroupBatch CollectGroups(const ActorParams& student,
                         const std::vector<GroupContext>& contexts,
                         const PoolConfig& pool_config,
                         const GrpoConfig& config, uint64_t seed) {
  const int g = config.group_size;
  if (g < 2) throw std::invalid_argument("GRPO needs G >= 2");
  if (contexts.empty()) throw std::invalid_argument("no group contexts");
  const int k_total = static_cast<int>(contexts.size()) * g;
  PoolConfig pc = pool_config;
  pc.num_envs = k_total;
  pc.track_history = true;
  pc.num_workers = config.num_workers;
  if (student.obs_dim() != ObsDim(ObsKind::kStudent, pc.history_length)) {
    throw std::invalid_argument("student observation size mismatch");
  }
  EnvPool pool(pc);
  const Rng base(seed, 0x6A0);
  for (int k = 0; k < k_total; ++k) {
    const GroupContext& ctx = contexts[k / g];
    WorldState start = ctx.start;
    start.rng = base.Fork(2 * k);
    pool.ResetTo(k, start, ctx.spec);
    pool.env(k).rng = base.Fork(2 * k + 1);
  }
  const double dt = pc.physics.dt_control;
  const double shaping_scale = config.scale_shaping_by_dt ? dt : 1.0;

  GroupBatch b;
  b.group_size = g;
  b.returns = Vector::Zero(k_total);
  b.success.assign(k_total, 0);
  b.traj_length.assign(k_total, 0);
  b.context_id.resize(k_total);
  for (int k = 0; k < k_total; ++k) b.context_id[k] = k / g;
  b.episodes.resize(k_total);

  std::vector<Matrix> obs_chunks;
  std::vector<Matrix> act_chunks;
  std::vector<Vector> logp_chunks;
  std::vector<int> active(k_total);
  std::iota(active.begin(), active.end(), 0);
  std::vector<Action> actions(k_total);
  const ActionMap& map = pc.action_map;
  while (!active.empty()) {
    const int n = static_cast<int>(active.size());
    Matrix obs(student.obs_dim(), n);
    for (int j = 0; j < n; ++j) obs.col(j) = pool.ObserveOne(active[j], ObsKind::kStudent);
    const Matrix mean = student.mean.Forward(obs);
    Matrix act(mean.rows(), n);
    for (int j = 0; j < n; ++j) {
      act.col(j) = SampleAction(mean.col(j), student.log_std, pool.env(active[j]).rng);
      actions[active[j]] = map.ToEnv(act.col(j).data());
    }
    logp_chunks.push_back(GaussianLogProb(mean, student.log_std, act));
    obs_chunks.push_back(std::move(obs));
    act_chunks.push_back(std::move(act));
    for (int k : active) b.traj_of_step.push_back(k);

    const std::vector<EnvStepInfo> infos =
        pool.StepAll(actions, nullptr, true, &active);
    std::vector<int> still;
    for (int k : active) {
      const EnvStepInfo& info = infos[k];
      ++b.traj_length[k];
      b.returns(k) += shaping_scale *
                      (config.w_velocity * RawTerm(info.breakdown, "dof_velocity") +
                       config.w_acceleration *
                           RawTerm(info.breakdown, "dof_acceleration") +
                       config.w_action_rate *
                           RawTerm(info.breakdown, "action_rate"));
      if (!info.terminated) {
        still.push_back(k);
        continue;
      }
      b.episodes[k] = pool.Finish(k);
      b.success[k] = b.episodes[k].success;
      if (b.success[k]) b.returns(k) += config.success_bonus;
    }
    active = std::move(still);
  }

  Eigen::Index cols = 0;
  for (const Matrix& m : obs_chunks) cols += m.cols();
  b.obs.resize(student.obs_dim(), cols);
  b.actions.resize(student.act_dim(), cols);
  b.log_probs.resize(cols);
  Eigen::Index at = 0;
  for (size_t c = 0; c < obs_chunks.size(); ++c) {
    const Eigen::Index w = obs_chunks[c].cols();
    b.obs.middleCols(at, w) = obs_chunks[c];
    b.actions.middleCols(at, w) = act_chunks[c];
    b.log_probs.segment(at, w) = logp_chunks[c];
    at += w;
  }
  return b;
}

Vector GroupAdvantages(const GroupBatch& batch) {
  const int g = batch.group_size;
  const int k_total = static_cast<int>(batch.returns.size());
  if (g < 2 || k_total % g != 0) {
    throw std::invalid_argument("group batch is not a whole number of groups");
  }
  Vector adv(k_total);
  for (int first = 0; first < k_total; first += g) {
    for (int k = first; k < first + g; ++k) {
      if (batch.context_id[k] != batch.context_id[first]) {
        throw std::invalid_argument("group members must share a context");
      }
    }
    // All-success and all-failure groups carry no success contrast; only
    // shaping noise would separate them, so they are skipped.
    bool mixed = false;
    for (int k = first + 1; k < first + g; ++k) {
      mixed |= batch.success[k] != batch.success[first];
    }
    adv.segment(first, g) = mixed ? GrpoAdvantages(batch.returns.segment(first, g))
                                  : Vector::Zero(g);
  }
  return adv;
}

GrpoMetrics GrpoUpdate(ActorParams& student, AdamState& opt,
                       const GroupBatch& batch, const GrpoConfig& config,
                       Rng& rng) {
  if (opt.m.size() != student.NumParams()) {
    throw std::invalid_argument("optimizer does not match actor parameters");
  }
  GrpoMetrics m;
  const int k_total = static_cast<int>(batch.returns.size());
  const Vector traj_adv = GroupAdvantages(batch);
  m.mean_return = batch.returns.mean();
  int successes = 0;
  for (uint8_t s : batch.success) successes += s;
  m.success_rate = static_cast<double>(successes) / k_total;
  for (int first = 0; first < k_total; first += batch.group_size) {
    if (traj_adv.segment(first, batch.group_size).isZero(0.0)) {
      ++m.degenerate_groups;
    }
  }

  // Steps of degenerate groups carry no signal and are skipped.
  std::vector<int> cols;
  for (size_t c = 0; c < batch.traj_of_step.size(); ++c) {
    if (traj_adv(batch.traj_of_step[c]) != 0.0) cols.push_back(static_cast<int>(c));
  }
  {
    const Matrix mean = student.mean.Forward(batch.obs);
    const Vector logp = GaussianLogProb(mean, student.log_std, batch.actions);
    if (logp.size() > 0) {
      m.first_epoch_max_ratio_dev =
          ((logp - batch.log_probs).array().exp() - 1.0).abs().maxCoeff();
    }
  }
  if (cols.empty()) return m;

  const Vector saved_params = student.Flatten();
  const AdamState saved_opt = opt;
  const int total = static_cast<int>(cols.size());
  const int mb_count = std::max(1, std::min(config.minibatches, total));
  double clip_hits = 0.0;
  double clip_count = 0.0;
  double kl_sum = 0.0;
  int kl_n = 0;
  try {
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
      for (size_t i = cols.size(); i > 1; --i) {
        std::swap(cols[i - 1], cols[rng.UniformInt(i)]);
      }
      for (int mb = 0; mb < mb_count; ++mb) {
        const size_t begin = static_cast<size_t>(mb) * total / mb_count;
        const size_t end = static_cast<size_t>(mb + 1) * total / mb_count;
        const int count = static_cast<int>(end - begin);
        Matrix obs(batch.obs.rows(), count);
        Matrix act(batch.actions.rows(), count);
        Vector old_logp(count);
        Vector a(count);
        for (int j = 0; j < count; ++j) {
          const int c = cols[begin + j];
          obs.col(j) = batch.obs.col(c);
          act.col(j) = batch.actions.col(c);
          old_logp(j) = batch.log_probs(c);
          a(j) = traj_adv(batch.traj_of_step[c]);
        }
        GradResult g = ActorGradient(
            student, obs, [&](const Matrix& mean, const Vector& log_std) {
              ActorLoss out;
              const Vector inv_var = (-2.0 * log_std.array()).exp();
              const Vector logp = GaussianLogProb(mean, log_std, act);
              const Matrix diff = act - mean;
              Vector dlogp(count);
              double surrogate = 0.0;
              for (int i = 0; i < count; ++i) {
                const double log_ratio = logp(i) - old_logp(i);
                const double ratio = std::exp(log_ratio);
                surrogate += ClippedSurrogate(ratio, a(i), config.clip);
                const double clipped =
                    std::clamp(ratio, 1.0 - config.clip, 1.0 + config.clip);
                dlogp(i) = ratio * a(i) <= clipped * a(i)
                               ? -ratio * a(i) / count
                               : 0.0;
                clip_hits += std::abs(ratio - 1.0) > config.clip;
                clip_count += 1.0;
                kl_sum += (ratio - 1.0) - log_ratio;
                ++kl_n;
              }
              out.loss = -surrogate / count;
              out.d_mean = diff.array().colwise() * inv_var.array();
              out.d_mean =
                  out.d_mean.array().rowwise() * dlogp.transpose().array();
              out.d_log_std =
                  ((diff.array().square().colwise() * inv_var.array() - 1.0)
                       .rowwise() *
                   dlogp.transpose().array())
                      .rowwise()
                      .sum()
                      .matrix();
              m.policy_loss = out.loss;
              return out;
            });
        if (!g.grad.allFinite()) throw std::runtime_error("non-finite gradient");
        ClipGradNorm(g.grad, config.max_grad_norm);
        Vector params = student.Flatten();
        AdamUpdate(params, g.grad, opt);
        student.Unflatten(params);
      }
    }
  } catch (const std::runtime_error&) {
    student.Unflatten(saved_params);
    opt = saved_opt;
    m.aborted = true;
  }
  m.clip_fraction = clip_count > 0 ? clip_hits / clip_count : 0.0;
  m.approx_kl = kl_n ? kl_sum / kl_n : 0.0;
  return m;
}

}  // namespace doorrl
