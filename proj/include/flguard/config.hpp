#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "flguard/aggregate.hpp"
#include "flguard/attack.hpp"
#include "flguard/model.hpp"

namespace flguard {

// Where the task data comes from: an IDX file quadruple or the synthetic
// generator.
struct DatasetConfig {
  std::string kind = "synth";  // "idx" | "synth"

  // idx
  std::string train_images, train_labels, test_images, test_labels;

  // synth
  std::size_t n_train = 4000;
  std::size_t n_test = 1000;
  std::size_t dim = 20;
  int num_classes = 10;
  double cluster_spread = 0.13;
};

struct TaskConfig {
  DatasetConfig dataset;
  ModelKind model_kind = ModelKind::LR;
  std::size_t hidden_dim = 0;  // MLP only
  double lr = 0.05;
  std::size_t local_epochs = 1;
  std::size_t batch_size = 32;
  std::size_t rounds = 100;
};

struct PopulationConfig {
  std::size_t num_shards = 200;
  std::size_t shards_per_client = 2;
  // When > 0, only this many clients participate per round (sampled without
  // replacement from a round-derived stream); 0 means everyone.
  std::size_t participants_per_round = 0;
  double malicious_fraction = 0.0;
  AttackConfig attack;
};

struct DefenseConfig {
  AggregationRule rule = AggregationRule::FedAvg;
  std::size_t krum_f = 0;  // 0: use the configured malicious count
  double geomed_tol = 1e-8;
  std::size_t geomed_max_iter = 200;
  std::string detector_path;  // spectral only
};

struct OutputConfig {
  std::string run_dir;
  std::size_t checkpoint_interval = 10;
  bool emit_latents = true;
};

// Detector-training section (consumed by the train-detector command).
struct DetectorTrainConfig {
  std::size_t trace_steps = 3000;
  std::size_t trace_batch_size = 32;
  double trace_lr = 0.05;
  std::size_t surrogate_dim = 1000;
  std::size_t hidden = 500;
  std::size_t latent = 100;
  double beta = 1e-3;
  std::size_t epochs = 50;
  std::size_t batch_size = 64;
  double lr = 0.01;
  std::string score_mode = "raw";  // "raw" | "delta"
  std::size_t delta_window = 10;
  std::string out_path;
};

struct ExperimentConfig {
  TaskConfig task;
  PopulationConfig population;
  DefenseConfig defense;
  DetectorTrainConfig detector;
  std::uint64_t master_seed = 1;
  OutputConfig output;

  // Derived: number of clients implied by the sharding.
  std::size_t num_clients() const {
    return population.num_shards / population.shards_per_client;
  }
};

// Parses and validates a config file; unknown keys are rejected, defaults are
// filled in. Throws ConfigError with a descriptive message.
ExperimentConfig load_config(const std::string& path);
ExperimentConfig config_from_json_text(const std::string& text);

// Fully-resolved config as JSON text (every default made explicit); this is
// what goes into the run manifest.
std::string resolved_config_json(const ExperimentConfig& cfg);

}  // namespace flguard
