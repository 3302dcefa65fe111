#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "doorrl/algos.h"
#include "doorrl/oracle.h"

namespace doorrl {

TeacherFn MakeNetTeacher(const PolicyParams& teacher) {
  if (teacher.actor.obs_dim() != ObsDim(ObsKind::kPrivileged)) {
    throw std::invalid_argument("teacher must take privileged observations");
  }
  return [actor = teacher.actor](const WorldState& world,
                                 const DoorSpec& spec) {
    const std::vector<double> obs = ObservePrivileged(world, spec).ToVector();
    const Matrix x = Eigen::Map<const Vector>(obs.data(), obs.size());
    return Vector(actor.mean.Forward(x).col(0));
  };
}

TeacherFn MakeOracleTeacher(const PhysicsConfig& physics,
                            const ActionMap& map) {
  return [physics, map](const WorldState& world, const DoorSpec& spec) {
    return map.FromEnv(
        ClampAction(OracleAction(world, spec, physics), physics));
  };
}

DaggerDataset::DaggerDataset(int obs_dim, int act_dim)
    : obs_dim_(obs_dim), act_dim_(act_dim) {
  if (obs_dim < 1 || act_dim < 1) {
    throw std::invalid_argument("dataset dimensions must be positive");
  }
}

void DaggerDataset::Append(const Vector& obs, const Vector& label,
                           bool held_out) {
  if (obs.size() != obs_dim_ || label.size() != act_dim_) {
    throw std::invalid_argument("dataset sample has the wrong shape");
  }
  obs_.insert(obs_.end(), obs.data(), obs.data() + obs_dim_);
  labels_.insert(labels_.end(), label.data(), label.data() + act_dim_);
  (held_out ? held_out_ : train_).push_back(size_++);
}

Matrix DaggerDataset::Obs(const std::vector<int>& idx, size_t begin,
                          size_t end) const {
  Matrix out(obs_dim_, end - begin);
  for (size_t k = begin; k < end; ++k) {
    out.col(k - begin) =
        Eigen::Map<const Vector>(obs_.data() + static_cast<size_t>(idx[k]) * obs_dim_, obs_dim_);
  }
  return out;
}

Matrix DaggerDataset::Labels(const std::vector<int>& idx, size_t begin,
                             size_t end) const {
  Matrix out(act_dim_, end - begin);
  for (size_t k = begin; k < end; ++k) {
    out.col(k - begin) = Eigen::Map<const Vector>(
        labels_.data() + static_cast<size_t>(idx[k]) * act_dim_, act_dim_);
  }
  return out;
}

double DaggerBeta(int iteration) {
  if (iteration < 0) throw std::invalid_argument("iteration must be >= 0");
  return std::pow(0.5, iteration);
}

double ImitationMse(const ActorParams& student, const DaggerDataset& data,
                    const std::vector<int>& idx) {
  if (idx.empty()) return 0.0;
  double total = 0.0;
  constexpr size_t kChunk = 4096;
  for (size_t begin = 0; begin < idx.size(); begin += kChunk) {
    const size_t end = std::min(idx.size(), begin + kChunk);
    const Matrix err =
        student.mean.Forward(data.Obs(idx, begin, end)) - data.Labels(idx, begin, end);
    total += err.squaredNorm();
  }
  return total / (static_cast<double>(idx.size()) * data.act_dim());
}

DaggerMetrics DaggerIteration(const TeacherFn& teacher, ActorParams& student,
                              AdamState& opt, EnvPool& pool, double beta,
                              DaggerDataset& dataset,
                              const DaggerConfig& config, Rng& rng) {
  if (beta < 0.0 || beta > 1.0) throw std::invalid_argument("beta in [0, 1]");
  if (!pool.config().track_history) {
    throw std::invalid_argument("DAgger pool must track student histories");
  }
  if (student.obs_dim() != dataset.obs_dim()) {
    throw std::invalid_argument("student and dataset disagree on obs_dim");
  }
  const int n = pool.size();
  const ActionMap& map = pool.config().action_map;
  DaggerMetrics m;
  m.beta = beta;
  int successes = 0;
  std::vector<Action> actions(n);
  for (int t = 0; t < config.steps_per_iter; ++t) {
    const Matrix obs = pool.Observe(ObsKind::kStudent);
    const Matrix student_mean = student.mean.Forward(obs);
    for (int e = 0; e < n; ++e) {
      const EnvSlot& slot = pool.env(e);
      const Vector label = teacher(slot.world, slot.spec);
      dataset.Append(obs.col(e), label,
                     rng.Uniform01() < config.holdout_fraction);
      const bool use_teacher = rng.Uniform01() < beta;
      const Vector raw = use_teacher ? label : Vector(student_mean.col(e));
      actions[e] = map.ToEnv(raw.data());
    }
    const std::vector<EnvStepInfo> infos = pool.StepAll(actions, nullptr, false);
    for (int e = 0; e < n; ++e) {
      if (!infos[e].terminated) continue;
      ++m.episodes;
      successes += pool.Finish(e).success;
      pool.Reset(e);
    }
  }

  std::vector<int> order = dataset.train_indices();
  const double denom = static_cast<double>(dataset.act_dim());
  for (int epoch = 0; epoch < config.epochs && !order.empty(); ++epoch) {
    for (size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[rng.UniformInt(i)]);
    }
    for (size_t begin = 0; begin < order.size(); begin += config.minibatch) {
      const size_t end = std::min(order.size(), begin + config.minibatch);
      const Matrix x = dataset.Obs(order, begin, end);
      const Matrix y = dataset.Labels(order, begin, end);
      const double count = static_cast<double>(end - begin);
      GradResult g = ActorGradient(
          student, x, [&](const Matrix& mean, const Vector& log_std) {
            ActorLoss out;
            const Matrix err = mean - y;
            out.loss = err.squaredNorm() / (count * denom);
            out.d_mean = 2.0 * err / (count * denom);
            out.d_log_std = Vector::Zero(log_std.size());
            return out;
          });
      ClipGradNorm(g.grad, config.max_grad_norm);
      Vector params = student.Flatten();
      AdamUpdate(params, g.grad, opt);
      student.Unflatten(params);
    }
  }
  m.dataset_size = dataset.size();
  m.train_mse = ImitationMse(student, dataset, dataset.train_indices());
  m.held_out_mse = ImitationMse(student, dataset, dataset.held_out_indices());
  m.success_rate = m.episodes ? static_cast<double>(successes) / m.episodes : 0.0;
  return m;
}

}  // namespace doorrl
