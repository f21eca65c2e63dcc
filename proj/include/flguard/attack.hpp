#pragma once

#include <string>

#include "flguard/dataset.hpp"
#include "flguard/model.hpp"
#include "flguard/rng.hpp"

namespace flguard {

enum class AttackKind { None, SignFlip, AdditiveNoise, Backdoor };

struct AttackConfig {
  AttackKind kind = AttackKind::None;
  double noise_std = 0.5;   // AdditiveNoise
  int source_class = 7;     // Backdoor
  int target_class = 5;     // Backdoor
  double boost_cap = 20.0;  // Backdoor model replacement

  void validate() const;
};

// Negates the local delta around the global model:
// global - (local - global). Throws on spec mismatch.
ParamVector sign_flip(const ParamVector& global, const ParamVector& local);

// local + eps, eps ~ N(0, noise_std^2 I).
ParamVector additive_noise(const ParamVector& local, double noise_std,
                           RngStream& stream);

// Relabels every source_class example as target_class; features untouched.
LabeledDataset poison_backdoor(const LabeledDataset& ds_slice, int source_class,
                               int target_class);

// global + gamma * (local_poisoned - global) with
// gamma = min(total_weight / attacker_weight, boost_cap).
ParamVector model_replacement(const ParamVector& global,
                              const ParamVector& local_poisoned,
                              double total_weight, double attacker_weight,
                              double boost_cap);

AttackKind attack_kind_from_string(const std::string& s);
std::string to_string(AttackKind kind);

}  // namespace flguard
