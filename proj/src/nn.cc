#include "doorrl/nn.h"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace doorrl {
namespace {

constexpr double kLog2Pi = 1.8378770664093453;  // log(2 pi)

Matrix RandomOrthogonal(int rows, int cols, Rng& rng) {
  const int n = std::max(rows, cols);
  Matrix a(n, n);
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) a(i, j) = rng.Normal();
  }
  Eigen::HouseholderQR<Matrix> qr(a);
  Matrix q = qr.householderQ();
  // Sign fix so the distribution is uniform over orthogonal matrices.
  const Matrix r = qr.matrixQR();
  for (int j = 0; j < n; ++j) {
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  }
  return q.topLeftCorner(rows, cols);
}

}  // namespace

Mlp::Mlp(int in_dim, const std::vector<int>& hidden, int out_dim) {
  if (in_dim < 1 || out_dim < 1) {
    throw std::invalid_argument("Mlp: dimensions must be positive");
  }
  int prev = in_dim;
  std::vector<int> sizes = hidden;
  sizes.push_back(out_dim);
  for (int size : sizes) {
    if (size < 1) throw std::invalid_argument("Mlp: layer size must be >= 1");
    layers_.push_back({Matrix::Zero(size, prev), Vector::Zero(size)});
    prev = size;
  }
}

Mlp Mlp::Orthogonal(int in_dim, const std::vector<int>& hidden, int out_dim,
                    Rng& rng, double output_gain) {
  Mlp net(in_dim, hidden, out_dim);
  for (size_t l = 0; l < net.layers_.size(); ++l) {
    DenseLayer& layer = net.layers_[l];
    layer.w = RandomOrthogonal(layer.w.rows(), layer.w.cols(), rng);
    if (l + 1 == net.layers_.size()) layer.w *= output_gain;
  }
  return net;
}

int Mlp::in_dim() const {
  return layers_.empty() ? 0 : static_cast<int>(layers_.front().w.cols());
}

int Mlp::out_dim() const {
  return layers_.empty() ? 0 : static_cast<int>(layers_.back().w.rows());
}

std::vector<int> Mlp::hidden() const {
  std::vector<int> h;
  for (size_t l = 0; l + 1 < layers_.size(); ++l) {
    h.push_back(static_cast<int>(layers_[l].w.rows()));
  }
  return h;
}

int Mlp::NumParams() const {
  int n = 0;
  for (const DenseLayer& l : layers_) n += l.w.size() + l.b.size();
  return n;
}

Matrix Mlp::Forward(const Matrix& x, Tape* tape) const {
  if (layers_.empty()) throw std::invalid_argument("Mlp: empty network");
  if (x.rows() != in_dim()) {
    throw std::invalid_argument("Mlp: input has " + std::to_string(x.rows()) +
                                " rows, expected " + std::to_string(in_dim()));
  }
  if (tape) {
    tape->activations.clear();
    tape->activations.push_back(x);
  }
  Matrix h = x;
  for (size_t l = 0; l < layers_.size(); ++l) {
    Matrix z = layers_[l].w * h;
    z.colwise() += layers_[l].b;
    if (l + 1 < layers_.size()) z = z.array().tanh().matrix();
    h = std::move(z);
    if (tape) tape->activations.push_back(h);
  }
  return h;
}

Matrix Mlp::Backward(const Tape& tape, const Matrix& d_output,
                     Vector& grad) const {
  if (grad.size() != NumParams()) {
    throw std::invalid_argument("Mlp::Backward: grad has wrong size");
  }
  if (tape.activations.size() != layers_.size() + 1) {
    throw std::invalid_argument("Mlp::Backward: tape does not match network");
  }
  std::vector<int> offsets(layers_.size());
  int offset = 0;
  for (size_t l = 0; l < layers_.size(); ++l) {
    offsets[l] = offset;
    offset += layers_[l].w.size() + layers_[l].b.size();
  }
  Matrix delta = d_output;  // dL/dz of the current layer
  for (int l = static_cast<int>(layers_.size()) - 1; l >= 0; --l) {
    const DenseLayer& layer = layers_[l];
    const Matrix& input = tape.activations[l];
    const int nw = layer.w.size();
    Eigen::Map<Matrix> gw(grad.data() + offsets[l], layer.w.rows(),
                          layer.w.cols());
    gw.noalias() += delta * input.transpose();
    grad.segment(offsets[l] + nw, layer.b.size()) += delta.rowwise().sum();
    Matrix d_input = layer.w.transpose() * delta;
    if (l > 0) {
      // Input of layer l is tanh output of layer l-1.
      d_input.array() *= 1.0 - input.array().square();
    }
    delta = std::move(d_input);
  }
  return delta;
}

Vector Mlp::Flatten() const {
  Vector flat(NumParams());
  int k = 0;
  for (const DenseLayer& l : layers_) {
    flat.segment(k, l.w.size()) = Eigen::Map<const Vector>(l.w.data(), l.w.size());
    k += l.w.size();
    flat.segment(k, l.b.size()) = l.b;
    k += l.b.size();
  }
  return flat;
}

void Mlp::Unflatten(const Eigen::Ref<const Vector>& flat) {
  if (flat.size() != NumParams()) {
    throw std::invalid_argument("Mlp::Unflatten: wrong size");
  }
  int k = 0;
  for (DenseLayer& l : layers_) {
    Eigen::Map<Vector>(l.w.data(), l.w.size()) = flat.segment(k, l.w.size());
    k += l.w.size();
    l.b = flat.segment(k, l.b.size());
    k += l.b.size();
  }
}

ActorParams ActorParams::Create(int obs_dim, const std::vector<int>& hidden,
                                int act_dim, Rng& rng, double init_log_std) {
  ActorParams a;
  a.mean = Mlp::Orthogonal(obs_dim, hidden, act_dim, rng, 0.01);
  a.log_std = Vector::Constant(act_dim, init_log_std);
  a.ClampLogStd();
  return a;
}

Vector ActorParams::Flatten() const {
  Vector flat(NumParams());
  const int n = mean.NumParams();
  flat.head(n) = mean.Flatten();
  flat.tail(log_std.size()) = log_std;
  return flat;
}

void ActorParams::Unflatten(const Eigen::Ref<const Vector>& flat) {
  if (flat.size() != NumParams()) {
    throw std::invalid_argument("ActorParams::Unflatten: wrong size");
  }
  const int n = mean.NumParams();
  mean.Unflatten(flat.head(n));
  log_std = flat.tail(log_std.size());
  ClampLogStd();
}

void ActorParams::ClampLogStd() {
  log_std = log_std.cwiseMax(kLogStdMin).cwiseMin(kLogStdMax);
}

PolicyParams PolicyParams::Create(int obs_dim, const std::vector<int>& hidden,
                                  int act_dim, Rng& rng, bool with_critic,
                                  double init_log_std,
                                  const std::vector<int>& critic_hidden) {
  PolicyParams p;
  p.actor = ActorParams::Create(obs_dim, hidden, act_dim, rng, init_log_std);
  if (with_critic) {
    p.critic = Mlp::Orthogonal(
        obs_dim, critic_hidden.empty() ? hidden : critic_hidden, 1, rng, 1.0);
  }
  return p;
}

int PolicyParams::NumParams() const {
  return actor.NumParams() + (critic ? critic->NumParams() : 0);
}

Vector PolicyParams::Flatten() const {
  Vector flat(NumParams());
  const int na = actor.NumParams();
  flat.head(na) = actor.Flatten();
  if (critic) flat.tail(critic->NumParams()) = critic->Flatten();
  return flat;
}

void PolicyParams::Unflatten(const Eigen::Ref<const Vector>& flat) {
  if (flat.size() != NumParams()) {
    throw std::invalid_argument("PolicyParams::Unflatten: wrong size");
  }
  const int na = actor.NumParams();
  actor.Unflatten(flat.head(na));
  if (critic) critic->Unflatten(flat.tail(critic->NumParams()));
}

Vector GaussianLogProb(const Matrix& mean, const Vector& log_std,
                       const Matrix& action) {
  if (mean.rows() != log_std.size() || action.rows() != mean.rows() ||
      action.cols() != mean.cols()) {
    throw std::invalid_argument("GaussianLogProb: shape mismatch");
  }
  const Vector ls = log_std.cwiseMax(kLogStdMin).cwiseMin(kLogStdMax);
  const Vector inv_std = (-ls).array().exp();
  const Matrix z = (action - mean).array().colwise() * inv_std.array();
  const double norm = -ls.sum() - 0.5 * kLog2Pi * ls.size();
  return (-0.5 * z.array().square().colwise().sum()).matrix().transpose().array() +
         norm;
}

double GaussianLogProb(const Vector& mean, const Vector& log_std,
                       const Vector& action) {
  return GaussianLogProb(Matrix(mean), log_std, Matrix(action))(0);
}

double GaussianEntropy(const Vector& log_std) {
  const Vector ls = log_std.cwiseMax(kLogStdMin).cwiseMin(kLogStdMax);
  return ls.sum() + 0.5 * (1.0 + kLog2Pi) * ls.size();
}

Vector SampleAction(const Vector& mean, const Vector& log_std, Rng& rng) {
  if (mean.size() != log_std.size()) {
    throw std::invalid_argument("SampleAction: shape mismatch");
  }
  Vector a(mean.size());
  for (int i = 0; i < mean.size(); ++i) {
    const double ls = std::clamp(log_std(i), kLogStdMin, kLogStdMax);
    a(i) = mean(i) + std::exp(ls) * rng.Normal();
  }
  return a;
}

GradResult MlpGradient(const Mlp& net, const Matrix& x,
                       const OutputLossFn& loss_fn, double l2) {
  Mlp::Tape tape;
  const Matrix out = net.Forward(x, &tape);
  OutputLoss ol = loss_fn(out);
  GradResult r;
  r.grad = Vector::Zero(net.NumParams());
  const Vector flat = net.Flatten();
  r.loss = ol.loss + 0.5 * l2 * flat.squaredNorm();
  if (!std::isfinite(r.loss)) throw std::runtime_error("non-finite loss");
  if (ol.d_output.rows() != out.rows() || ol.d_output.cols() != out.cols()) {
    throw std::invalid_argument("MlpGradient: d_output shape mismatch");
  }
  net.Backward(tape, ol.d_output, r.grad);
  if (l2 != 0.0) r.grad += l2 * flat;
  return r;
}

GradResult ActorGradient(const ActorParams& actor, const Matrix& obs,
                         const ActorLossFn& loss_fn) {
  Mlp::Tape tape;
  const Matrix mean = actor.mean.Forward(obs, &tape);
  ActorLoss al = loss_fn(mean, actor.log_std);
  if (!std::isfinite(al.loss)) throw std::runtime_error("non-finite loss");
  if (al.d_mean.rows() != mean.rows() || al.d_mean.cols() != mean.cols() ||
      al.d_log_std.size() != actor.log_std.size()) {
    throw std::invalid_argument("ActorGradient: gradient shape mismatch");
  }
  GradResult r;
  r.loss = al.loss;
  r.grad = Vector::Zero(actor.NumParams());
  Vector net_grad = Vector::Zero(actor.mean.NumParams());
  actor.mean.Backward(tape, al.d_mean, net_grad);
  r.grad.head(net_grad.size()) = net_grad;
  r.grad.tail(al.d_log_std.size()) = al.d_log_std;
  return r;
}

AdamState AdamState::Create(int num_params, const AdamConfig& config) {
  AdamState s;
  s.m = Vector::Zero(num_params);
  s.v = Vector::Zero(num_params);
  s.config = config;
  return s;
}

void AdamUpdate(Vector& params, const Vector& grad, AdamState& state) {
  if (params.size() != grad.size() || state.m.size() != params.size() ||
      state.v.size() != params.size()) {
    throw std::invalid_argument("AdamUpdate: shape mismatch");
  }
  if (!grad.allFinite()) throw std::runtime_error("AdamUpdate: non-finite grad");
  const AdamConfig& c = state.config;
  ++state.step;
  state.m = c.beta1 * state.m + (1.0 - c.beta1) * grad;
  state.v = c.beta2 * state.v + (1.0 - c.beta2) * grad.cwiseProduct(grad);
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  params.array() -= c.lr * (state.m.array() / bc1) /
                    ((state.v.array() / bc2).sqrt() + c.eps);
}

double ClipGradNorm(Vector& grad, double max_norm) {
  const double norm = grad.norm();
  if (max_norm > 0.0 && norm > max_norm) grad *= max_norm / norm;
  return norm;
}

}  // namespace doorrl
