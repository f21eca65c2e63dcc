#include "flguard/attack.hpp"

#include <stdexcept>

#include "flguard/errors.hpp"

namespace flguard {

void AttackConfig::validate() const {
  if (noise_std < 0.0) throw ConfigError("attack: noise_std must be >= 0");
  if (kind == AttackKind::Backdoor) {
    if (source_class == target_class) {
      throw ConfigError("attack: source_class must differ from target_class");
    }
    if (boost_cap < 1.0) throw ConfigError("attack: boost_cap must be >= 1");
  }
}

ParamVector sign_flip(const ParamVector& global, const ParamVector& local) {
  if (global.spec != local.spec) {
    throw std::invalid_argument("sign_flip: model spec mismatch");
  }
  ParamVector out = global;
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    out.values[i] = 2.0 * global.values[i] - local.values[i];
  }
  return out;
}

ParamVector additive_noise(const ParamVector& local, double noise_std,
                           RngStream& stream) {
  if (noise_std < 0.0) throw ConfigError("additive_noise: noise_std must be >= 0");
  ParamVector out = local;
  for (double& v : out.values) v += noise_std * stream.next_gaussian();
  return out;
}

LabeledDataset poison_backdoor(const LabeledDataset& ds_slice, int source_class,
                               int target_class) {
  LabeledDataset out = ds_slice;
  for (int& label : out.labels) {
    if (label == source_class) label = target_class;
  }
  return out;
}

ParamVector model_replacement(const ParamVector& global,
                              const ParamVector& local_poisoned,
                              double total_weight, double attacker_weight,
                              double boost_cap) {
  if (global.spec != local_poisoned.spec) {
    throw std::invalid_argument("model_replacement: model spec mismatch");
  }
  if (attacker_weight <= 0.0 || attacker_weight > total_weight) {
    throw std::invalid_argument(
        "model_replacement: need 0 < attacker_weight <= total_weight");
  }
  const double gamma = std::min(total_weight / attacker_weight, boost_cap);
  ParamVector out = global;
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    out.values[i] += gamma * (local_poisoned.values[i] - global.values[i]);
  }
  return out;
}

AttackKind attack_kind_from_string(const std::string& s) {
  if (s == "none") return AttackKind::None;
  if (s == "sign_flip") return AttackKind::SignFlip;
  if (s == "additive_noise") return AttackKind::AdditiveNoise;
  if (s == "backdoor") return AttackKind::Backdoor;
  throw ConfigError("unknown attack kind: " + s);
}

std::string to_string(AttackKind kind) {
  switch (kind) {
    case AttackKind::None: return "none";
    case AttackKind::SignFlip: return "sign_flip";
    case AttackKind::AdditiveNoise: return "additive_noise";
    case AttackKind::Backdoor: return "backdoor";
  }
  return "none";
}

}  // namespace flguard
