#include "abrlab/config.hpp"

#include <algorithm>
#include <cstdio>
#include <stdexcept>

#include "abrlab/text.hpp"

namespace abrlab {

using nlohmann::json;

namespace {

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key) && !j.at(key).is_null()) out = j.at(key).get<T>();
}

void read_hyper(const json& j, TrainHyper& h) {
  read(j, "discount", h.discount);
  read(j, "entropy_coef", h.entropy_coef);
  read(j, "value_coef", h.value_coef);
  read(j, "learning_rate", h.learning_rate);
  read(j, "rollout_len", h.rollout_len);
  read(j, "clip_norm", h.clip_norm);
}

void read_env(const json& j, EnvConfig& env) {
  read(j, "step_s", env.step);
  read(j, "base_rtt_ms", env.base_rtt);
  read(j, "deadline_ms", env.deadline);
  read(j, "history_len", env.history_len);
  read(j, "episode_len", env.episode_len);
  read(j, "max_queue_ms", env.max_queue_ms);
  if (j.contains("ladder_kbps")) env.ladder = BitrateLadder(j.at("ladder_kbps").get<std::vector<double>>());
  if (j.contains("weights")) {
    const auto& w = j.at("weights");
    read(w, "bitrate", env.weights.bitrate);
    read(w, "stall", env.weights.stall);
    read(w, "delay", env.weights.delay);
    read(w, "smoothness", env.weights.smoothness);
  }
}

WaveShape parse_shape(const std::string& s) {
  if (s == "sine") return WaveShape::Sine;
  if (s == "square") return WaveShape::Square;
  throw std::invalid_argument("unknown wave shape '" + s + "'");
}

TraceLabels read_labels(const json& j) {
  TraceLabels l;
  if (j.contains("network_type")) l.network_type = parse_network_type(j.at("network_type").get<std::string>());
  if (j.contains("transport_mode")) {
    l.transport_mode = parse_transport_mode(j.at("transport_mode").get<std::string>());
  }
  return l;
}

CorpusSource read_corpus(const json& j, const std::filesystem::path& base_dir) {
  CorpusSource src;
  if (j.contains("manifest")) {
    std::filesystem::path p = j.at("manifest").get<std::string>();
    src.manifest = p.is_relative() ? base_dir / p : p;
  }
  read(j, "split_seed", src.split_seed);
  if (j.contains("synthetic")) {
    for (const auto& f : j.at("synthetic")) {
      SynthFamily fam;
      fam.name = f.at("name").get<std::string>();
      fam.labels = read_labels(f);
      read(f, "count", fam.count);
      read(f, "seed", fam.seed);
      read(f, "mean_kbps", fam.params.mean);
      read(f, "amplitude_kbps", fam.params.amplitude);
      read(f, "period_s", fam.params.period);
      read(f, "noise_std_kbps", fam.params.noise_std);
      read(f, "duration_s", fam.params.duration);
      if (f.contains("shape")) fam.params.shape = parse_shape(f.at("shape").get<std::string>());
      src.synthetic.push_back(std::move(fam));
    }
  }
  if (!src.manifest && src.synthetic.empty()) {
    throw std::invalid_argument("corpus needs a manifest or synthetic families");
  }
  return src;
}

ClientSpec read_client(const json& j) {
  ClientSpec c;
  c.id = j.at("id").get<std::string>();
  read(j, "trace", c.trace);
  if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("condition_schedule")) {
    for (const auto& e : j.at("condition_schedule")) {
      ScheduleEntry s;
      s.time = e.at("time_s").get<double>();
      s.labels = read_labels(e);
      s.trace = e.at("trace").get<std::string>();
      c.schedule.push_back(std::move(s));
    }
    if (c.trace.empty() && !c.schedule.empty()) c.trace = c.schedule.front().trace;
  }
  if (c.trace.empty()) throw std::invalid_argument("client '" + c.id + "' has no trace");
  return c;
}

}  // namespace

ExperimentConfig parse_config(const json& doc, const std::filesystem::path& base_dir) {
  ExperimentConfig cfg;
  if (doc.contains("env")) read_env(doc.at("env"), cfg.env);
  read(doc, "hidden_widths", cfg.hidden_widths);
  if (doc.contains("hyper")) read_hyper(doc.at("hyper"), cfg.hyper);
  read(doc, "epochs", cfg.epochs);
  read(doc, "seed", cfg.seed);
  read(doc, "num_clients", cfg.num_clients);

  cfg.pretrain.hyper = cfg.hyper;
  cfg.pretrain.seed = cfg.seed;
  if (doc.contains("pretrain")) {
    const auto& p = doc.at("pretrain");
    read(p, "epochs", cfg.pretrain.epochs);
    read(p, "episodes_per_epoch", cfg.pretrain.episodes_per_epoch);
    read(p, "seed", cfg.pretrain.seed);
    read_hyper(p, cfg.pretrain.hyper);
  }
  cfg.transfer.hyper = cfg.hyper;
  if (doc.contains("transfer")) {
    const auto& t = doc.at("transfer");
    read(t, "frozen_layers", cfg.transfer.frozen_layers);
    read_hyper(t, cfg.transfer.hyper);
  }
  if (doc.contains("federation")) {
    const auto& f = doc.at("federation");
    if (f.contains("mode")) {
      const auto mode = f.at("mode").get<std::string>();
      if (mode == "gradient") {
        cfg.federation.mode = AggregationMode::GradientMean;
      } else if (mode == "parameter") {
        cfg.federation.mode = AggregationMode::ParameterMean;
      } else {
        throw std::invalid_argument("federation.mode must be 'gradient' or 'parameter'");
      }
    }
    if (f.contains("server_lr") && !f.at("server_lr").is_null()) cfg.federation.server_lr = f.at("server_lr").get<double>();
    read(f, "server_lr_per_member", cfg.federation.server_lr_per_member);
    read(f, "mix_lambda", cfg.federation.mix_lambda);
    read(f, "local_rollouts", cfg.federation.local_rollouts);
    read(f, "poll_period_s", cfg.federation.poll_period);
    read(f, "transcript", cfg.federation.transcript);
    read(f, "transcript_payloads", cfg.federation.transcript_payloads);
    if (f.contains("assignment")) {
      const auto a = f.at("assignment").get<std::string>();
      if (a == "by-label") {
        cfg.federation.assignment = GroupAssignment::ByLabel;
      } else if (a == "pooled") {
        cfg.federation.assignment = GroupAssignment::Pooled;
      } else {
        throw std::invalid_argument("federation.assignment must be 'by-label' or 'pooled'");
      }
    }
  }
  if (doc.contains("convergence")) {
    const auto& c = doc.at("convergence");
    read(c, "window", cfg.convergence.window);
    read(c, "fraction", cfg.convergence.fraction);
    read(c, "sustain", cfg.convergence.sustain);
  }
  if (!doc.contains("corpus")) throw std::invalid_argument("config has no corpus section");
  cfg.corpus = read_corpus(doc.at("corpus"), base_dir);
  if (doc.contains("pretrain_corpus")) cfg.pretrain_corpus = read_corpus(doc.at("pretrain_corpus"), base_dir);
  if (doc.contains("clients")) {
    for (const auto& c : doc.at("clients")) cfg.clients.push_back(read_client(c));
  }

  cfg.env.validate();
  cfg.hyper.validate();
  cfg.pretrain.hyper.validate();
  cfg.transfer.hyper.validate();
  cfg.convergence.validate();
  PersonalizationMix{cfg.federation.mix_lambda};
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& file) {
  return parse_config(json::parse(read_file(file.string())), file.parent_path());
}

std::vector<Trace> synthesize_family(const SynthFamily& family) {
  std::vector<Trace> out;
  std::mt19937_64 phase_rng(family.seed);
  for (std::size_t i = 0; i < family.count; ++i) {
    SynthParams p = family.params;
    p.phase = unit_uniform(phase_rng) * p.period;
    char suffix[16];
    std::snprintf(suffix, sizeof(suffix), "-%03zu", i);
    out.push_back(synthesize_trace(p, family.labels, family.seed * 7919ULL + i + 1, family.name + suffix));
  }
  return out;
}

std::vector<Trace> build_corpus(const CorpusSource& source) {
  std::vector<Trace> corpus;
  if (source.manifest) corpus = load_corpus(*source.manifest);
  for (const auto& f : source.synthetic) {
    auto traces = synthesize_family(f);
    corpus.insert(corpus.end(), std::make_move_iterator(traces.begin()), std::make_move_iterator(traces.end()));
  }
  return corpus;
}

std::vector<LayerSpec> hidden_arch(const ExperimentConfig& config) {
  if (config.hidden_widths.empty()) throw std::invalid_argument("hidden_widths must not be empty");
  std::vector<LayerSpec> arch;
  std::size_t in = config.env.state_dim();
  for (auto w : config.hidden_widths) {
    arch.push_back({in, w, Activation::ReLU});
    in = w;
  }
  return arch;
}

PreparedCorpus prepare_corpus(const ExperimentConfig& config) {
  PreparedCorpus pc;
  auto corpus = build_corpus(config.corpus);
  pc.split = split_corpus(corpus, config.corpus.split_seed);
  for (auto& t : corpus) {
    validate_trace(t);
    pc.library.emplace(t.id, std::move(t));
  }
  for (const auto& [id, t] : pc.library) {
    if (pc.split.finetune.contains(id)) pc.finetune.push_back(t);
    if (pc.split.test.contains(id)) pc.test.push_back(t);
    if (!config.pretrain_corpus && pc.split.pretrain.contains(id)) pc.pretrain.push_back(t);
  }
  if (config.pretrain_corpus) {
    auto sim = build_corpus(*config.pretrain_corpus);
    const auto sim_split = split_corpus(sim, config.pretrain_corpus->split_seed);
    std::sort(sim.begin(), sim.end(), [](const Trace& a, const Trace& b) { return a.id < b.id; });
    for (auto& t : sim) {
      if (sim_split.pretrain.contains(t.id)) pc.pretrain.push_back(std::move(t));
    }
  }
  return pc;
}

PretrainConfig pretrain_config(const ExperimentConfig& config) {
  PretrainConfig p = config.pretrain;
  p.arch = hidden_arch(config);
  return p;
}

SchemeConfig scheme_config(const ExperimentConfig& config, const PreparedCorpus& corpus, Scheme scheme) {
  SchemeConfig s;
  s.scheme = scheme;
  s.env = config.env;
  s.arch = hidden_arch(config);
  s.transfer = config.transfer;
  s.federation = config.federation;
  s.convergence = config.convergence;
  s.epochs = config.epochs;
  s.seed = config.seed;
  s.clients = config.clients;
  if (s.clients.empty()) {
    const auto n = std::min(config.num_clients, corpus.finetune.size());
    if (n == 0) throw std::invalid_argument("finetune partition is empty");
    for (std::size_t i = 0; i < n; ++i) {
      s.clients.push_back({"c" + std::to_string(i), corpus.finetune[i].id, std::nullopt, {}});
    }
  }
  return s;
}

json split_to_json(const CorpusSplit& split) {
  return json{{"pretrain", split.pretrain}, {"finetune", split.finetune}, {"test", split.test}};
}

CorpusSplit split_from_json(const json& doc) {
  CorpusSplit s;
  s.pretrain = doc.at("pretrain").get<std::set<std::string>>();
  s.finetune = doc.at("finetune").get<std::set<std::string>>();
  s.test = doc.at("test").get<std::set<std::string>>();
  return s;
}

}  // namespace abrlab
