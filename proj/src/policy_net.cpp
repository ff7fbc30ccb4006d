#include "abrlab/policy_net.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "abrlab/text.hpp"

namespace abrlab {

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& b : blocks) n += b.weight.size() + b.bias.size();
  return n;
}

void TrainHyper::validate() const {
  if (!(discount > 0.0 && discount <= 1.0)) throw std::invalid_argument("discount must be in (0, 1]");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (entropy_coef < 0.0 || value_coef < 0.0) {
    throw std::invalid_argument("loss coefficients must be non-negative");
  }
  if (rollout_len == 0) throw std::invalid_argument("rollout length must be positive");
}

std::vector<LayerSpec> default_arch(std::size_t input_dim) {
  return {{input_dim, 64, Activation::ReLU}, {64, 32, Activation::ReLU}};
}

ModelParams init_params(const std::vector<LayerSpec>& hidden, std::size_t ladder_size,
                        std::uint64_t seed) {
  if (hidden.empty()) throw std::invalid_argument("architecture needs at least one hidden layer");
  if (ladder_size < 2) throw std::invalid_argument("policy head needs at least 2 actions");
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    if (hidden[i].in_dim == 0 || hidden[i].out_dim == 0) {
      throw std::invalid_argument("layer dimensions must be >= 1");
    }
    if (i > 0 && hidden[i].in_dim != hidden[i - 1].out_dim) {
      throw std::invalid_argument("incompatible dimensions between layers " + std::to_string(i - 1) +
                                  " and " + std::to_string(i));
    }
  }

  ModelParams p;
  p.specs = hidden;
  const auto top = hidden.back().out_dim;
  p.specs.push_back({top, ladder_size, Activation::Identity});
  p.specs.push_back({top, 1, Activation::Identity});

  std::mt19937_64 rng(seed);
  for (const auto& s : p.specs) {
    const double limit = std::sqrt(6.0 / static_cast<double>(s.in_dim + s.out_dim));
    LayerBlock b;
    b.weight.resize(s.in_dim * s.out_dim);
    for (auto& w : b.weight) w = (2.0 * unit_uniform(rng) - 1.0) * limit;
    b.bias.assign(s.out_dim, 0.0);
    p.blocks.push_back(std::move(b));
  }
  return p;
}

ModelParams zero_like(const ModelParams& params) {
  ModelParams z = params;
  for (auto& b : z.blocks) {
    std::fill(b.weight.begin(), b.weight.end(), 0.0);
    std::fill(b.bias.begin(), b.bias.end(), 0.0);
  }
  return z;
}

Gradients zero_gradients(const ModelParams& params) { return {zero_like(params).blocks}; }

void check_finite(const ModelParams& params) {
  for (const auto& b : params.blocks) {
    for (double v : b.weight) {
      if (!std::isfinite(v)) throw DivergenceError("non-finite weight");
    }
    for (double v : b.bias) {
      if (!std::isfinite(v)) throw DivergenceError("non-finite bias");
    }
  }
}

namespace {

void dense(const LayerSpec& spec, const LayerBlock& block, std::span<const double> in,
           std::vector<double>& pre) {
  pre.resize(spec.out_dim);
  for (std::size_t o = 0; o < spec.out_dim; ++o) {
    const double* row = block.weight.data() + o * spec.in_dim;
    double acc = block.bias[o];
    for (std::size_t i = 0; i < spec.in_dim; ++i) acc += row[i] * in[i];
    pre[o] = acc;
  }
}

void activate(Activation act, const std::vector<double>& pre, std::vector<double>& out) {
  out.resize(pre.size());
  for (std::size_t i = 0; i < pre.size(); ++i) {
    out[i] = act == Activation::ReLU ? std::max(0.0, pre[i]) : pre[i];
  }
}

// Activations kept for the backward pass: acts[0] is the input, acts[l + 1]
// the output of hidden layer l.
struct ForwardCache {
  std::vector<std::vector<double>> pre;
  std::vector<std::vector<double>> acts;
  std::vector<double> logits;
  std::vector<double> log_probs;
  std::vector<double> probs;
  double value = 0.0;
};

void check_input(const ModelParams& params, std::span<const double> state) {
  if (state.size() != params.input_dim()) {
    throw std::invalid_argument("state length " + std::to_string(state.size()) +
                                " does not match network input " +
                                std::to_string(params.input_dim()));
  }
  for (double v : state) {
    if (!std::isfinite(v)) throw std::invalid_argument("non-finite network input");
  }
}

void run_forward(const ModelParams& params, std::span<const double> state, ForwardCache& c) {
  const auto hidden = params.hidden_count();
  c.pre.resize(hidden);
  c.acts.resize(hidden + 1);
  c.acts[0].assign(state.begin(), state.end());
  for (std::size_t l = 0; l < hidden; ++l) {
    dense(params.specs[l], params.blocks[l], c.acts[l], c.pre[l]);
    activate(params.specs[l].activation, c.pre[l], c.acts[l + 1]);
  }
  const auto& top = c.acts[hidden];
  dense(params.specs[params.policy_head()], params.blocks[params.policy_head()], top, c.logits);
  std::vector<double> v;
  dense(params.specs[params.value_head()], params.blocks[params.value_head()], top, v);
  c.value = v[0];

  const double zmax = *std::max_element(c.logits.begin(), c.logits.end());
  double sum = 0.0;
  for (double z : c.logits) sum += std::exp(z - zmax);
  const double log_norm = zmax + std::log(sum);
  c.log_probs.resize(c.logits.size());
  c.probs.resize(c.logits.size());
  for (std::size_t i = 0; i < c.logits.size(); ++i) {
    c.log_probs[i] = c.logits[i] - log_norm;
    c.probs[i] = std::exp(c.log_probs[i]);
  }
}

void add_outer(LayerBlock& g, std::span<const double> dout, std::span<const double> in) {
  const auto in_dim = in.size();
  for (std::size_t o = 0; o < dout.size(); ++o) {
    const double d = dout[o];
    g.bias[o] += d;
    if (d == 0.0) continue;
    double* row = g.weight.data() + o * in_dim;
    for (std::size_t i = 0; i < in_dim; ++i) row[i] += d * in[i];
  }
}

void add_transposed(const LayerSpec& spec, const LayerBlock& block, std::span<const double> dout,
                    std::vector<double>& din) {
  for (std::size_t o = 0; o < spec.out_dim; ++o) {
    const double d = dout[o];
    if (d == 0.0) continue;
    const double* row = block.weight.data() + o * spec.in_dim;
    for (std::size_t i = 0; i < spec.in_dim; ++i) din[i] += row[i] * d;
  }
}

}  // namespace

PolicyOutput forward(const ModelParams& params, std::span<const double> state) {
  check_input(params, state);
  ForwardCache c;
  run_forward(params, state, c);
  return {std::move(c.probs), c.value};
}

double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

std::size_t sample_action(std::span<const double> probs, std::mt19937_64& rng) {
  const double u = unit_uniform(rng);
  double cdf = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    cdf += probs[i];
    if (u < cdf) return i;
  }
  // u landed in the rounding gap above the accumulated CDF
  for (std::size_t i = probs.size(); i-- > 0;) {
    if (probs[i] > 0.0) return i;
  }
  return probs.size() - 1;
}

std::size_t greedy_action(std::span<const double> probs) {
  return static_cast<std::size_t>(std::max_element(probs.begin(), probs.end()) - probs.begin());
}

std::vector<double> discounted_returns(const Trajectory& traj, double discount) {
  std::vector<double> returns(traj.steps.size());
  double running = traj.bootstrap_value;
  for (std::size_t i = traj.steps.size(); i-- > 0;) {
    running = traj.steps[i].reward + discount * running;
    returns[i] = running;
  }
  return returns;
}

LossAndGradients a3c_gradients(const ModelParams& params, const Trajectory& traj,
                               const TrainHyper& hyper) {
  if (traj.steps.empty()) throw std::invalid_argument("empty trajectory");
  if (!std::isfinite(traj.bootstrap_value)) throw std::invalid_argument("non-finite bootstrap value");
  for (const auto& st : traj.steps) {
    if (!std::isfinite(st.reward)) throw std::invalid_argument("non-finite reward");
    if (st.action >= params.action_count()) throw std::out_of_range("action outside policy head");
  }

  const auto returns = discounted_returns(traj, hyper.discount);
  const double scale = 1.0 / static_cast<double>(traj.steps.size());
  const auto hidden = params.hidden_count();
  const auto ph = params.policy_head();
  const auto vh = params.value_head();

  LossAndGradients out{zero_gradients(params), 0.0};
  ForwardCache c;
  std::vector<double> dlogits;
  std::vector<double> dtop;
  std::vector<double> dz;
  std::vector<double> dprev;

  for (std::size_t t = 0; t < traj.steps.size(); ++t) {
    const auto& st = traj.steps[t];
    check_input(params, st.state);
    run_forward(params, st.state, c);

    const double advantage = returns[t] - c.value;
    double entropy = 0.0;
    for (std::size_t j = 0; j < c.probs.size(); ++j) entropy -= c.probs[j] * c.log_probs[j];
    out.loss += scale * (-advantage * c.log_probs[st.action] +
                         hyper.value_coef * advantage * advantage -
                         hyper.entropy_coef * entropy);

    // d/dz of -A log p_a is A (p - onehot_a); d/dz of -beta H is beta p (log p + H).
    dlogits.resize(c.probs.size());
    for (std::size_t j = 0; j < c.probs.size(); ++j) {
      const double onehot = j == st.action ? 1.0 : 0.0;
      dlogits[j] = scale * (advantage * (c.probs[j] - onehot) +
                            hyper.entropy_coef * c.probs[j] * (c.log_probs[j] + entropy));
    }
    const double dvalue = scale * 2.0 * hyper.value_coef * (c.value - returns[t]);

    const auto& top = c.acts[hidden];
    add_outer(out.grads.blocks[ph], dlogits, top);
    const double dv[1] = {dvalue};
    add_outer(out.grads.blocks[vh], dv, top);

    dtop.assign(top.size(), 0.0);
    add_transposed(params.specs[ph], params.blocks[ph], dlogits, dtop);
    add_transposed(params.specs[vh], params.blocks[vh], dv, dtop);

    for (std::size_t l = hidden; l-- > 0;) {
      const auto& spec = params.specs[l];
      dz.resize(spec.out_dim);
      for (std::size_t o = 0; o < spec.out_dim; ++o) {
        dz[o] = (spec.activation == Activation::ReLU && !(c.pre[l][o] > 0.0)) ? 0.0 : dtop[o];
      }
      add_outer(out.grads.blocks[l], dz, c.acts[l]);
      if (l > 0) {
        dprev.assign(spec.in_dim, 0.0);
        add_transposed(spec, params.blocks[l], dz, dprev);
        dtop.swap(dprev);
      }
    }
  }

  if (!std::isfinite(out.loss)) throw DivergenceError("non-finite loss");
  for (const auto& b : out.grads.blocks) {
    for (double v : b.weight) {
      if (!std::isfinite(v)) throw DivergenceError("non-finite gradient");
    }
    for (double v : b.bias) {
      if (!std::isfinite(v)) throw DivergenceError("non-finite gradient");
    }
  }
  return out;
}

double global_norm(const Gradients& grads) {
  double sq = 0.0;
  for (const auto& b : grads.blocks) {
    for (double v : b.weight) sq += v * v;
    for (double v : b.bias) sq += v * v;
  }
  return std::sqrt(sq);
}

Gradients clip_by_global_norm(Gradients grads, double max_norm) {
  if (!(max_norm > 0.0)) return grads;
  const double norm = global_norm(grads);
  if (!std::isfinite(norm)) throw DivergenceError("non-finite gradient norm");
  if (norm <= max_norm) return grads;
  const double s = max_norm / norm;
  for (auto& b : grads.blocks) {
    for (auto& v : b.weight) v *= s;
    for (auto& v : b.bias) v *= s;
  }
  return grads;
}

ModelParams apply_update(const ModelParams& params, const Gradients& grads, double lr,
                         const FreezeMask& mask) {
  const auto n = params.layer_count();
  if (grads.blocks.size() != n || mask.trainable.size() != n) {
    throw std::invalid_argument("apply_update: layer count mismatch");
  }
  ModelParams out = params;
  for (std::size_t l = 0; l < n; ++l) {
    if (!mask.trainable[l]) continue;
    const auto& g = grads.blocks[l];
    auto& p = out.blocks[l];
    if (g.weight.empty() && g.bias.empty()) continue;
    if (g.weight.size() != p.weight.size() || g.bias.size() != p.bias.size()) {
      throw std::invalid_argument("apply_update: shape mismatch in layer " + std::to_string(l));
    }
    for (std::size_t i = 0; i < p.weight.size(); ++i) p.weight[i] -= lr * g.weight[i];
    for (std::size_t i = 0; i < p.bias.size(); ++i) p.bias[i] -= lr * g.bias[i];
  }
  return out;
}

namespace {

constexpr std::string_view kCheckpointMagic = "abrlab-checkpoint";
constexpr int kCheckpointVersion = 1;

void append_row(std::string& out, char tag, const std::vector<double>& values) {
  out += tag;
  for (double v : values) {
    out += ' ';
    out += format_double(v);
  }
  out += '\n';
}

std::vector<double> read_row(std::istream& in, char tag, std::size_t expected) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("checkpoint truncated");
  std::istringstream ss(line);
  std::string head;
  ss >> head;
  if (head.size() != 1 || head[0] != tag) {
    throw std::runtime_error(std::string("checkpoint: expected row '") + tag + "'");
  }
  std::vector<double> values;
  values.reserve(expected);
  std::string tok;
  while (ss >> tok) {
    const auto v = parse_double(tok);
    if (!v) throw std::runtime_error("checkpoint: malformed number '" + tok + "'");
    values.push_back(*v);
  }
  if (values.size() != expected) throw std::runtime_error("checkpoint: row length mismatch");
  return values;
}

}  // namespace

std::string serialize_checkpoint(const ModelParams& params) {
  std::string out;
  out += std::string(kCheckpointMagic) + ' ' + std::to_string(kCheckpointVersion) + '\n';
  out += "layers " + std::to_string(params.layer_count()) + '\n';
  for (std::size_t l = 0; l < params.layer_count(); ++l) {
    const auto& s = params.specs[l];
    out += "layer " + std::to_string(s.in_dim) + ' ' + std::to_string(s.out_dim) + ' ' +
           (s.activation == Activation::ReLU ? "relu" : "identity") + '\n';
    append_row(out, 'w', params.blocks[l].weight);
    append_row(out, 'b', params.blocks[l].bias);
  }
  return out;
}

ModelParams parse_checkpoint(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string magic;
  int version = 0;
  in >> magic >> version;
  if (magic != kCheckpointMagic) throw std::runtime_error("not an abrlab checkpoint");
  if (version != kCheckpointVersion) {
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  }
  std::string kw;
  std::size_t layers = 0;
  in >> kw >> layers;
  if (kw != "layers" || layers < 3) throw std::runtime_error("checkpoint: bad layer count");

  ModelParams p;
  for (std::size_t l = 0; l < layers; ++l) {
    LayerSpec s;
    std::string act;
    in >> kw >> s.in_dim >> s.out_dim >> act;
    if (kw != "layer" || !in) throw std::runtime_error("checkpoint: bad layer header");
    if (act == "relu") {
      s.activation = Activation::ReLU;
    } else if (act == "identity") {
      s.activation = Activation::Identity;
    } else {
      throw std::runtime_error("checkpoint: unknown activation " + act);
    }
    in >> std::ws;
    LayerBlock b;
    b.weight = read_row(in, 'w', s.in_dim * s.out_dim);
    b.bias = read_row(in, 'b', s.out_dim);
    p.specs.push_back(s);
    p.blocks.push_back(std::move(b));
  }
  const auto top = p.specs[p.hidden_count() - 1].out_dim;
  for (std::size_t l = 1; l < p.hidden_count(); ++l) {
    if (p.specs[l].in_dim != p.specs[l - 1].out_dim) {
      throw std::runtime_error("checkpoint: incompatible layer dimensions");
    }
  }
  if (p.specs[p.policy_head()].in_dim != top || p.specs[p.value_head()].in_dim != top ||
      p.specs[p.value_head()].out_dim != 1) {
    throw std::runtime_error("checkpoint: malformed heads");
  }
  return p;
}

void save_checkpoint(const std::string& path, const ModelParams& params) {
  write_file(path, serialize_checkpoint(params));
}

ModelParams load_checkpoint(const std::string& path) { return parse_checkpoint(read_file(path)); }

namespace {

void fnv_mix(std::uint64_t& h, const std::vector<double>& values) {
  for (double v : values) {
    unsigned char bytes[sizeof(double)];
    std::memcpy(bytes, &v, sizeof(double));
    for (unsigned char b : bytes) {
      h ^= b;
      h *= 0x100000001b3ULL;
    }
  }
}

}  // namespace

std::uint64_t layer_digest(const LayerBlock& block) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  fnv_mix(h, block.weight);
  fnv_mix(h, block.bias);
  return h;
}

std::uint64_t params_digest(const ModelParams& params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& b : params.blocks) {
    fnv_mix(h, b.weight);
    fnv_mix(h, b.bias);
  }
  return h;
}

std::string hex_digest(std::uint64_t digest) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = kHex[digest & 0xf];
    digest >>= 4;
  }
  return s;
}

}  // namespace abrlab
