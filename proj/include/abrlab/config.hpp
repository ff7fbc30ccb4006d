#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "abrlab/harness.hpp"
#include "abrlab/transfer.hpp"
#include "json.hpp"

namespace abrlab {

/// A named family of synthetic traces sharing generator parameters. Trace i
/// gets id "<name>-<i>", its own noise seed and a random wave phase.
struct SynthFamily {
  std::string name;
  TraceLabels labels;
  SynthParams params;
  std::size_t count = 10;
  std::uint64_t seed = 1;
};

struct CorpusSource {
  std::optional<std::filesystem::path> manifest;
  std::vector<SynthFamily> synthetic;
  std::uint64_t split_seed = 1;
};

struct ExperimentConfig {
  EnvConfig env;
  std::vector<std::size_t> hidden_widths{64, 32};
  TrainHyper hyper;
  PretrainConfig pretrain;
  TransferConfig transfer;
  FederationSettings federation;
  ConvergenceRule convergence;
  CorpusSource corpus;
  // Traces for offline pretraining; defaults to `corpus`. A different source
  // stands in for the simulator side of the simulation-to-reality gap.
  std::optional<CorpusSource> pretrain_corpus;
  std::size_t epochs = 200;
  std::uint64_t seed = 1;
  std::size_t num_clients = 4;      // used when `clients` is empty
  std::vector<ClientSpec> clients;  // explicit client/trace assignment
};

/// Every key is optional; missing keys keep their defaults. Relative manifest
/// paths resolve against `base_dir`.
ExperimentConfig parse_config(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& file);

std::vector<Trace> synthesize_family(const SynthFamily& family);
std::vector<Trace> build_corpus(const CorpusSource& source);

std::vector<LayerSpec> hidden_arch(const ExperimentConfig& config);

/// Corpus split resolved into trace sets.
struct PreparedCorpus {
  TraceLibrary library;          // every online-corpus trace by id
  CorpusSplit split;
  std::vector<Trace> pretrain;   // pretraining set (from pretrain_corpus when given)
  std::vector<Trace> finetune;
  std::vector<Trace> test;
};

PreparedCorpus prepare_corpus(const ExperimentConfig& config);

PretrainConfig pretrain_config(const ExperimentConfig& config);

/// Scheme config for one run. Without explicit clients, the first
/// `num_clients` finetune traces (by id) become clients c0, c1, ...
SchemeConfig scheme_config(const ExperimentConfig& config, const PreparedCorpus& corpus, Scheme scheme);

nlohmann::json split_to_json(const CorpusSplit& split);
CorpusSplit split_from_json(const nlohmann::json& doc);

}  // namespace abrlab
