#include "flguard/config.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "flguard/errors.hpp"
#include "json.hpp"

namespace flguard {

namespace {

using nlohmann::json;

void reject_unknown(const json& j, const std::string& where,
                    const std::set<std::string>& known) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.contains(it.key())) {
      throw ConfigError("config: unknown key \"" + it.key() + "\" in " + where);
    }
  }
}

template <typename T>
void get_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) {
    try {
      out = j.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(std::string("config: bad value for \"") + key + "\"");
    }
  }
}

DatasetConfig parse_dataset(const json& j) {
  DatasetConfig d;
  reject_unknown(j, "task.dataset",
                 {"kind", "train_images", "train_labels", "test_images",
                  "test_labels", "n_train", "n_test", "dim", "num_classes",
                  "cluster_spread"});
  get_if(j, "kind", d.kind);
  if (d.kind != "idx" && d.kind != "synth") {
    throw ConfigError("config: dataset.kind must be \"idx\" or \"synth\"");
  }
  get_if(j, "train_images", d.train_images);
  get_if(j, "train_labels", d.train_labels);
  get_if(j, "test_images", d.test_images);
  get_if(j, "test_labels", d.test_labels);
  get_if(j, "n_train", d.n_train);
  get_if(j, "n_test", d.n_test);
  get_if(j, "dim", d.dim);
  get_if(j, "num_classes", d.num_classes);
  get_if(j, "cluster_spread", d.cluster_spread);
  if (d.kind == "idx") {
    for (const auto* p : {&d.train_images, &d.train_labels, &d.test_images,
                          &d.test_labels}) {
      if (p->empty()) {
        throw ConfigError("config: idx dataset needs all four file paths");
      }
      if (!std::filesystem::exists(*p)) {
        throw ConfigError("config: dataset file not found: " + *p);
      }
    }
  } else {
    if (d.num_classes < 2) throw ConfigError("config: num_classes must be >= 2");
    if (d.cluster_spread < 0) {
      throw ConfigError("config: cluster_spread must be >= 0");
    }
  }
  return d;
}

TaskConfig parse_task(const json& j) {
  TaskConfig t;
  reject_unknown(j, "task",
                 {"dataset", "model", "lr", "local_epochs", "batch_size",
                  "rounds"});
  if (j.contains("dataset")) t.dataset = parse_dataset(j.at("dataset"));
  if (j.contains("model")) {
    const auto& m = j.at("model");
    reject_unknown(m, "task.model", {"kind", "hidden_dim"});
    std::string kind = "lr";
    get_if(m, "kind", kind);
    t.model_kind = model_kind_from_string(kind);
    get_if(m, "hidden_dim", t.hidden_dim);
    if (t.model_kind == ModelKind::MLP && t.hidden_dim == 0) {
      throw ConfigError("config: mlp model needs hidden_dim >= 1");
    }
  }
  get_if(j, "lr", t.lr);
  get_if(j, "local_epochs", t.local_epochs);
  get_if(j, "batch_size", t.batch_size);
  get_if(j, "rounds", t.rounds);
  if (t.lr < 0) throw ConfigError("config: lr must be >= 0");
  if (t.batch_size == 0) throw ConfigError("config: batch_size must be >= 1");
  return t;
}

PopulationConfig parse_population(const json& j) {
  PopulationConfig p;
  reject_unknown(j, "population",
                 {"num_shards", "shards_per_client", "participants_per_round",
                  "malicious_fraction", "attack"});
  get_if(j, "num_shards", p.num_shards);
  get_if(j, "shards_per_client", p.shards_per_client);
  get_if(j, "participants_per_round", p.participants_per_round);
  get_if(j, "malicious_fraction", p.malicious_fraction);
  if (p.malicious_fraction < 0.0 || p.malicious_fraction >= 1.0) {
    throw ConfigError("config: malicious_fraction must be in [0,1)");
  }
  if (p.shards_per_client == 0 ||
      p.num_shards % p.shards_per_client != 0) {
    throw ConfigError(
        "config: num_shards must be a positive multiple of shards_per_client");
  }
  if (j.contains("attack")) {
    const auto& a = j.at("attack");
    reject_unknown(a, "population.attack",
                   {"kind", "noise_std", "source_class", "target_class",
                    "boost_cap"});
    std::string kind = "none";
    get_if(a, "kind", kind);
    p.attack.kind = attack_kind_from_string(kind);
    get_if(a, "noise_std", p.attack.noise_std);
    get_if(a, "source_class", p.attack.source_class);
    get_if(a, "target_class", p.attack.target_class);
    get_if(a, "boost_cap", p.attack.boost_cap);
    p.attack.validate();
  }
  return p;
}

DefenseConfig parse_defense(const json& j) {
  DefenseConfig d;
  reject_unknown(j, "defense",
                 {"rule", "krum_f", "geomed_tol", "geomed_max_iter",
                  "detector_path"});
  std::string rule = "fedavg";
  get_if(j, "rule", rule);
  d.rule = rule_from_string(rule);
  get_if(j, "krum_f", d.krum_f);
  get_if(j, "geomed_tol", d.geomed_tol);
  get_if(j, "geomed_max_iter", d.geomed_max_iter);
  get_if(j, "detector_path", d.detector_path);
  if (d.geomed_tol <= 0) throw ConfigError("config: geomed_tol must be > 0");
  return d;
}

DetectorTrainConfig parse_detector(const json& j) {
  DetectorTrainConfig d;
  reject_unknown(j, "detector",
                 {"trace_steps", "trace_batch_size", "trace_lr",
                  "surrogate_dim", "hidden", "latent", "beta", "epochs",
                  "batch_size", "lr", "score_mode", "delta_window",
                  "out_path"});
  get_if(j, "trace_steps", d.trace_steps);
  get_if(j, "trace_batch_size", d.trace_batch_size);
  get_if(j, "trace_lr", d.trace_lr);
  get_if(j, "surrogate_dim", d.surrogate_dim);
  get_if(j, "hidden", d.hidden);
  get_if(j, "latent", d.latent);
  get_if(j, "beta", d.beta);
  get_if(j, "epochs", d.epochs);
  get_if(j, "batch_size", d.batch_size);
  get_if(j, "lr", d.lr);
  get_if(j, "score_mode", d.score_mode);
  get_if(j, "delta_window", d.delta_window);
  get_if(j, "out_path", d.out_path);
  if (d.score_mode != "raw" && d.score_mode != "delta") {
    throw ConfigError("config: detector.score_mode must be \"raw\" or \"delta\"");
  }
  return d;
}

}  // namespace

ExperimentConfig config_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("config: JSON parse error: " + std::string(e.what()));
  }
  reject_unknown(j, "top level",
                 {"task", "population", "defense", "detector", "seeds",
                  "output"});
  ExperimentConfig cfg;
  if (j.contains("task")) cfg.task = parse_task(j.at("task"));
  if (j.contains("population")) cfg.population = parse_population(j.at("population"));
  if (j.contains("defense")) cfg.defense = parse_defense(j.at("defense"));
  if (j.contains("detector")) cfg.detector = parse_detector(j.at("detector"));
  if (j.contains("seeds")) {
    const auto& s = j.at("seeds");
    reject_unknown(s, "seeds", {"master_seed"});
    get_if(s, "master_seed", cfg.master_seed);
  }
  if (j.contains("output")) {
    const auto& o = j.at("output");
    reject_unknown(o, "output", {"run_dir", "checkpoint_interval", "emit_latents"});
    get_if(o, "run_dir", cfg.output.run_dir);
    get_if(o, "checkpoint_interval", cfg.output.checkpoint_interval);
    get_if(o, "emit_latents", cfg.output.emit_latents);
  }
  if (cfg.defense.rule == AggregationRule::Spectral &&
      cfg.defense.detector_path.empty()) {
    throw ConfigError("config: rule \"spectral\" needs defense.detector_path");
  }
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("config: cannot open " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return config_from_json_text(ss.str());
}

std::string resolved_config_json(const ExperimentConfig& cfg) {
  json ds{{"kind", cfg.task.dataset.kind}};
  if (cfg.task.dataset.kind == "idx") {
    ds["train_images"] = cfg.task.dataset.train_images;
    ds["train_labels"] = cfg.task.dataset.train_labels;
    ds["test_images"] = cfg.task.dataset.test_images;
    ds["test_labels"] = cfg.task.dataset.test_labels;
  } else {
    ds["n_train"] = cfg.task.dataset.n_train;
    ds["n_test"] = cfg.task.dataset.n_test;
    ds["dim"] = cfg.task.dataset.dim;
    ds["num_classes"] = cfg.task.dataset.num_classes;
    ds["cluster_spread"] = cfg.task.dataset.cluster_spread;
  }
  json j{
      {"task",
       {{"dataset", ds},
        {"model",
         {{"kind", to_string(cfg.task.model_kind)},
          {"hidden_dim", cfg.task.hidden_dim}}},
        {"lr", cfg.task.lr},
        {"local_epochs", cfg.task.local_epochs},
        {"batch_size", cfg.task.batch_size},
        {"rounds", cfg.task.rounds}}},
      {"population",
       {{"num_shards", cfg.population.num_shards},
        {"shards_per_client", cfg.population.shards_per_client},
        {"participants_per_round", cfg.population.participants_per_round},
        {"malicious_fraction", cfg.population.malicious_fraction},
        {"attack",
         {{"kind", to_string(cfg.population.attack.kind)},
          {"noise_std", cfg.population.attack.noise_std},
          {"source_class", cfg.population.attack.source_class},
          {"target_class", cfg.population.attack.target_class},
          {"boost_cap", cfg.population.attack.boost_cap}}}}},
      {"defense",
       {{"rule", to_string(cfg.defense.rule)},
        {"krum_f", cfg.defense.krum_f},
        {"geomed_tol", cfg.defense.geomed_tol},
        {"geomed_max_iter", cfg.defense.geomed_max_iter},
        {"detector_path", cfg.defense.detector_path}}},
      {"detector",
       {{"trace_steps", cfg.detector.trace_steps},
        {"trace_batch_size", cfg.detector.trace_batch_size},
        {"trace_lr", cfg.detector.trace_lr},
        {"surrogate_dim", cfg.detector.surrogate_dim},
        {"hidden", cfg.detector.hidden},
        {"latent", cfg.detector.latent},
        {"beta", cfg.detector.beta},
        {"epochs", cfg.detector.epochs},
        {"batch_size", cfg.detector.batch_size},
        {"lr", cfg.detector.lr},
        {"score_mode", cfg.detector.score_mode},
        {"delta_window", cfg.detector.delta_window},
        {"out_path", cfg.detector.out_path}}},
      {"seeds", {{"master_seed", cfg.master_seed}}},
      {"output",
       {{"run_dir", cfg.output.run_dir},
        {"checkpoint_interval", cfg.output.checkpoint_interval},
        {"emit_latents", cfg.output.emit_latents}}}};
  return j.dump(2);
}

}  // namespace flguard
