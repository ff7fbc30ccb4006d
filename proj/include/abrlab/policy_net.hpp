#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace abrlab {

enum class Activation { ReLU, Identity };

struct LayerSpec {
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  Activation activation = Activation::ReLU;

  bool operator==(const LayerSpec&) const = default;
};

/// Weight matrix (out_dim x in_dim, row-major) and bias vector of one layer.
struct LayerBlock {
  std::vector<double> weight;
  std::vector<double> bias;

  bool operator==(const LayerBlock&) const = default;
};

/// Hidden layers followed by two heads on the last hidden layer: policy
/// logits (one per ladder rung) then the scalar value. `specs` and `blocks`
/// are index-aligned.
struct ModelParams {
  std::vector<LayerSpec> specs;
  std::vector<LayerBlock> blocks;

  std::size_t layer_count() const { return specs.size(); }
  std::size_t hidden_count() const { return specs.size() - 2; }
  std::size_t policy_head() const { return specs.size() - 2; }
  std::size_t value_head() const { return specs.size() - 1; }
  std::size_t input_dim() const { return specs.front().in_dim; }
  std::size_t action_count() const { return specs[policy_head()].out_dim; }
  std::size_t parameter_count() const;

  bool operator==(const ModelParams&) const = default;
};

/// Same block layout as ModelParams. A block left empty stands for an
/// all-zero gradient (used for frozen layers in federation payloads).
struct Gradients {
  std::vector<LayerBlock> blocks;

  bool operator==(const Gradients&) const = default;
};

/// Per-layer trainability, heads included (same indexing as ModelParams).
struct FreezeMask {
  std::vector<bool> trainable;

  static FreezeMask all_trainable(std::size_t layers) { return {std::vector<bool>(layers, true)}; }
  bool operator==(const FreezeMask&) const = default;
};

struct Transition {
  std::vector<double> state;
  std::size_t action = 0;
  double reward = 0.0;
};

struct Trajectory {
  std::vector<Transition> steps;
  double bootstrap_value = 0.0;  // V(s_T), 0 at episode end
};

struct TrainHyper {
  double discount = 0.99;
  double entropy_coef = 0.01;
  double value_coef = 0.5;
  double learning_rate = 1e-3;
  std::size_t rollout_len = 16;
  double clip_norm = 40.0;  // <= 0 disables clipping

  void validate() const;
};

struct PolicyOutput {
  std::vector<double> probs;
  double value = 0.0;
};

struct LossAndGradients {
  Gradients grads;
  double loss = 0.0;
};

/// Raised when a loss or gradient turns non-finite; the caller should lower
/// the learning rate.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// input -> 64 ReLU -> 32 ReLU.
std::vector<LayerSpec> default_arch(std::size_t input_dim);

ModelParams init_params(const std::vector<LayerSpec>& hidden, std::size_t ladder_size,
                        std::uint64_t seed);
ModelParams zero_like(const ModelParams& params);
Gradients zero_gradients(const ModelParams& params);
void check_finite(const ModelParams& params);

PolicyOutput forward(const ModelParams& params, std::span<const double> state);

/// Uniform double in [0, 1) from the top 53 bits of one draw.
double unit_uniform(std::mt19937_64& rng);
/// Inverse-CDF draw from a categorical distribution.
std::size_t sample_action(std::span<const double> probs, std::mt19937_64& rng);
std::size_t greedy_action(std::span<const double> probs);

/// R_t = r_t + discount * R_{t+1}, seeded with the bootstrap value.
std::vector<double> discounted_returns(const Trajectory& traj, double discount);

/// Mean over the trajectory of
///   -A_t log pi(a_t|s_t) + c_v (R_t - V(s_t))^2 - beta H(pi(.|s_t)),
/// with A_t = R_t - V(s_t) held constant. Gradients are exact (analytic
/// backprop) and unclipped.
LossAndGradients a3c_gradients(const ModelParams& params, const Trajectory& traj,
                               const TrainHyper& hyper);

double global_norm(const Gradients& grads);
Gradients clip_by_global_norm(Gradients grads, double max_norm);

/// w <- w - lr * g on trainable layers; frozen layers are copied untouched.
ModelParams apply_update(const ModelParams& params, const Gradients& grads, double lr,
                         const FreezeMask& mask);

/// Text checkpoint; numbers use shortest round-trip form so save/load is exact.
std::string serialize_checkpoint(const ModelParams& params);
ModelParams parse_checkpoint(std::string_view text);
void save_checkpoint(const std::string& path, const ModelParams& params);
ModelParams load_checkpoint(const std::string& path);

/// FNV-1a over the raw bytes of every weight and bias.
std::uint64_t params_digest(const ModelParams& params);
std::uint64_t layer_digest(const LayerBlock& block);
std::string hex_digest(std::uint64_t digest);

}  // namespace abrlab
