#ifndef DOORRL_NN_H_
#define DOORRL_NN_H_

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <vector>

#include "doorrl/rng.h"

namespace doorrl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 2.0;

struct DenseLayer {
  Matrix w;  // out x in
  Vector b;  // out
};

// Feedforward net with tanh hidden layers and a linear output. Inputs and
// outputs are column batches: x is in_dim x N.
class Mlp {
 public:
  Mlp() = default;
  Mlp(int in_dim, const std::vector<int>& hidden, int out_dim);

  // Orthogonal initialization (gain 1) with zero biases; the output layer is
  // scaled by output_gain.
  static Mlp Orthogonal(int in_dim, const std::vector<int>& hidden,
                        int out_dim, Rng& rng, double output_gain = 0.01);

  int in_dim() const;
  int out_dim() const;
  std::vector<int> hidden() const;
  int NumParams() const;
  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& mutable_layers() { return layers_; }

  // Activations of every layer, input first; filled by Forward when given.
  struct Tape {
    std::vector<Matrix> activations;
  };

  // Throws std::invalid_argument on dimension mismatch.
  Matrix Forward(const Matrix& x, Tape* tape = nullptr) const;

  // Reverse pass: given dL/d(output), adds dL/d(params) into grad (flat, in
  // Flatten order). Returns dL/d(input).
  Matrix Backward(const Tape& tape, const Matrix& d_output,
                  Vector& grad) const;

  // Layer-major: w (column-major) then b, for each layer.
  Vector Flatten() const;
  void Unflatten(const Eigen::Ref<const Vector>& flat);

 private:
  std::vector<DenseLayer> layers_;
};

// Gaussian policy: the net outputs the action mean, log_std is a
// state-independent vector kept inside [kLogStdMin, kLogStdMax].
struct ActorParams {
  Mlp mean;
  Vector log_std;

  static ActorParams Create(int obs_dim, const std::vector<int>& hidden,
                            int act_dim, Rng& rng, double init_log_std = -0.5);
  int obs_dim() const { return mean.in_dim(); }
  int act_dim() const { return mean.out_dim(); }
  int NumParams() const { return mean.NumParams() + log_std.size(); }
  // Mean net parameters followed by log_std.
  Vector Flatten() const;
  void Unflatten(const Eigen::Ref<const Vector>& flat);
  void ClampLogStd();
};

// Teacher parameters: actor plus an optional separate value net.
struct PolicyParams {
  ActorParams actor;
  std::optional<Mlp> critic;

  static PolicyParams Create(int obs_dim, const std::vector<int>& hidden,
                             int act_dim, Rng& rng, bool with_critic,
                             double init_log_std = -0.5,
                             const std::vector<int>& critic_hidden = {});
  int NumParams() const;
  // Actor block then critic block.
  Vector Flatten() const;
  void Unflatten(const Eigen::Ref<const Vector>& flat);
};

// Per-sample log density of a diagonal Gaussian; mean and action are
// act_dim x N.
Vector GaussianLogProb(const Matrix& mean, const Vector& log_std,
                       const Matrix& action);
double GaussianLogProb(const Vector& mean, const Vector& log_std,
                       const Vector& action);
double GaussianEntropy(const Vector& log_std);
// mean + exp(log_std) * standard normal, with log_std clamped first.
Vector SampleAction(const Vector& mean, const Vector& log_std, Rng& rng);

// Result of a loss evaluated on net outputs.
struct OutputLoss {
  double loss = 0.0;
  Matrix d_output;  // dL/d(output), same shape as the output
};
using OutputLossFn = std::function<OutputLoss(const Matrix& output)>;

struct GradResult {
  double loss = 0.0;
  Vector grad;  // Flatten order
};

// Exact reverse-mode gradient of loss_fn(net(x)) + 0.5 * l2 * |params|^2.
// Throws std::runtime_error for a non-finite loss.
GradResult MlpGradient(const Mlp& net, const Matrix& x,
                       const OutputLossFn& loss_fn, double l2 = 0.0);

// Loss of an actor's outputs, with gradients for the mean batch and log_std.
struct ActorLoss {
  double loss = 0.0;
  Matrix d_mean;
  Vector d_log_std;
};
using ActorLossFn =
    std::function<ActorLoss(const Matrix& mean, const Vector& log_std)>;

// Gradient in ActorParams::Flatten order.
GradResult ActorGradient(const ActorParams& actor, const Matrix& obs,
                         const ActorLossFn& loss_fn);

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  Vector m;
  Vector v;
  int64_t step = 0;
  AdamConfig config;

  static AdamState Create(int num_params, const AdamConfig& config = {});
};

// One bias-corrected Adam step in place. Throws std::invalid_argument for a
// shape mismatch and std::runtime_error for non-finite gradients, leaving
// params and state untouched.
void AdamUpdate(Vector& params, const Vector& grad, AdamState& state);

// Scales grad so its norm is at most max_norm; returns the original norm.
double ClipGradNorm(Vector& grad, double max_norm);

}  // namespace doorrl

#endif  // DOORRL_NN_H_
