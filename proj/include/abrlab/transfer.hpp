#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "abrlab/policy_net.hpp"
#include "abrlab/stream_env.hpp"
#include "abrlab/trace.hpp"

namespace abrlab {

struct PretrainConfig {
  std::size_t epochs = 200;
  std::size_t episodes_per_epoch = 4;
  TrainHyper hyper;
  std::vector<LayerSpec> arch;  // hidden layers; empty selects default_arch
  std::uint64_t seed = 1;
};

struct TransferConfig {
  std::size_t frozen_layers = 1;
  TrainHyper hyper;
};

struct PretrainResult {
  ModelParams params;
  std::vector<double> epoch_rewards;  // mean per-step reward of each epoch
};

struct Rollout {
  Trajectory trajectory;
  std::vector<StepOutcome> outcomes;
};

/// Runs up to `max_steps` environment steps with actions sampled from the
/// policy, advancing `state` in place. The bootstrap value is V(next state),
/// or 0 once the episode is over.
Rollout collect_rollout(const ModelParams& params, StreamEnv& env, std::vector<double>& state,
                        std::size_t max_steps, std::mt19937_64& rng);

/// Greedy policy over one episode from `start`.
std::vector<StepOutcome> evaluate_episode(const ModelParams& params, const Trace& trace,
                                          const EnvConfig& env_config, double start = 0.0);

/// Integer-second episode start drawn uniformly from the admissible range.
double random_episode_start(const Trace& trace, const EnvConfig& env_config, std::mt19937_64& rng);

/// Lowest `frozen_layers` hidden layers frozen; both heads stay trainable.
FreezeMask make_freeze_mask(std::size_t hidden_layers, std::size_t frozen_layers);

/// a3c_gradients, global-norm clipping, then a masked SGD step.
ModelParams fine_tune_step(const ModelParams& params, const Trajectory& rollout,
                           const FreezeMask& mask, const TrainHyper& hyper);

/// Single-agent training from init_params(arch, ladder, seed): episodes cycle
/// round-robin through `traces`, every rollout updates all layers.
PretrainResult offline_train(const std::vector<Trace>& traces, const EnvConfig& env_config,
                             const PretrainConfig& config);

}  // namespace abrlab
