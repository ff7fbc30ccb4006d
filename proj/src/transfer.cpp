#include "abrlab/transfer.hpp"

#include <cmath>
#include <stdexcept>

namespace abrlab {

Rollout collect_rollout(const ModelParams& params, StreamEnv& env, std::vector<double>& state,
                        std::size_t max_steps, std::mt19937_64& rng) {
  Rollout r;
  r.trajectory.steps.reserve(max_steps);
  while (r.trajectory.steps.size() < max_steps && !env.done()) {
    const auto out = forward(params, state);
    const auto action = sample_action(out.probs, rng);
    auto step = env.step(action);
    r.trajectory.steps.push_back({std::move(state), action, step.reward});
    r.outcomes.push_back(step.outcome);
    state = std::move(step.state);
  }
  r.trajectory.bootstrap_value = env.done() ? 0.0 : forward(params, state).value;
  return r;
}

std::vector<StepOutcome> evaluate_episode(const ModelParams& params, const Trace& trace,
                                          const EnvConfig& env_config, double start) {
  StreamEnv env(env_config);
  auto state = env.reset(trace, start);
  std::vector<StepOutcome> outcomes;
  outcomes.reserve(env_config.episode_len);
  while (!env.done()) {
    auto step = env.step(greedy_action(forward(params, state).probs));
    outcomes.push_back(step.outcome);
    state = std::move(step.state);
  }
  return outcomes;
}

double random_episode_start(const Trace& trace, const EnvConfig& env_config, std::mt19937_64& rng) {
  const double first = trace.samples.front().t;
  const double slack = trace.duration() - static_cast<double>(env_config.episode_len) * env_config.step;
  if (slack < 0.0) throw std::out_of_range("trace '" + trace.id + "' shorter than one episode");
  const auto choices = static_cast<std::uint64_t>(std::floor(slack)) + 1;
  return first + static_cast<double>(rng() % choices);
}

FreezeMask make_freeze_mask(std::size_t hidden_layers, std::size_t frozen_layers) {
  if (frozen_layers > hidden_layers) {
    throw std::invalid_argument("cannot freeze " + std::to_string(frozen_layers) + " layers of a net with " +
                                std::to_string(hidden_layers) + " hidden layers");
  }
  FreezeMask mask = FreezeMask::all_trainable(hidden_layers + 2);
  for (std::size_t l = 0; l < frozen_layers; ++l) mask.trainable[l] = false;
  return mask;
}

ModelParams fine_tune_step(const ModelParams& params, const Trajectory& rollout,
                           const FreezeMask& mask, const TrainHyper& hyper) {
  if (mask.trainable.size() != params.layer_count()) {
    throw std::invalid_argument("freeze mask does not match model layers");
  }
  auto grads = clip_by_global_norm(a3c_gradients(params, rollout, hyper).grads, hyper.clip_norm);
  auto next = apply_update(params, grads, hyper.learning_rate, mask);
  check_finite(next);
  return next;
}

PretrainResult offline_train(const std::vector<Trace>& traces, const EnvConfig& env_config,
                             const PretrainConfig& config) {
  if (traces.empty()) throw std::invalid_argument("offline_train: no pretraining traces");
  if (config.episodes_per_epoch == 0) throw std::invalid_argument("episodes_per_epoch must be positive");
  config.hyper.validate();

  const auto arch = config.arch.empty() ? default_arch(env_config.state_dim()) : config.arch;
  PretrainResult result{init_params(arch, env_config.ladder.size(), config.seed), {}};
  const auto mask = FreezeMask::all_trainable(result.params.layer_count());

  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  StreamEnv env(env_config);
  std::size_t episode = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    double reward_sum = 0.0;
    std::size_t steps = 0;
    try {
      for (std::size_t e = 0; e < config.episodes_per_epoch; ++e, ++episode) {
        const auto& trace = traces[episode % traces.size()];
        auto state = env.reset(trace, random_episode_start(trace, env_config, rng));
        while (!env.done()) {
          auto rollout = collect_rollout(result.params, env, state, config.hyper.rollout_len, rng);
          for (const auto& st : rollout.trajectory.steps) reward_sum += st.reward;
          steps += rollout.trajectory.steps.size();
          result.params = fine_tune_step(result.params, rollout.trajectory, mask, config.hyper);
        }
      }
    } catch (const DivergenceError& err) {
      throw DivergenceError("pretraining diverged in epoch " + std::to_string(epoch + 1) + ": " +
                            err.what());
    }
    result.epoch_rewards.push_back(reward_sum / static_cast<double>(steps));
  }
  return result;
}

}  // namespace abrlab
