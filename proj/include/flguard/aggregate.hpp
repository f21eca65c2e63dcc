#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flguard/detector.hpp"
#include "flguard/model.hpp"

namespace flguard {

struct ClientUpdate {
  std::uint32_t client_id = 0;
  ParamVector params;
  std::size_t sample_count = 1;
  // Evaluation-only ground truth; aggregation rules must not read it.
  bool truth_malicious = false;
};

struct AggregationOutcome {
  ParamVector new_global;
  std::vector<std::uint32_t> accepted_ids;
  std::vector<std::uint32_t> rejected_ids;
  // Rule-specific per-client score in input order (reconstruction error,
  // Krum score); empty for fedavg/geomed.
  std::vector<double> scores;
  double threshold = 0.0;  // spectral only
};

// Weighted average by sample_count; everyone accepted.
AggregationOutcome fedavg(const std::vector<ClientUpdate>& updates);

// score(i) = sum of squared distances to the n-f-2 nearest other updates;
// the minimal-score update wins (ties -> lowest client_id) and is the only
// accepted one. Requires n >= f + 3.
AggregationOutcome krum(const std::vector<ClientUpdate>& updates,
                        std::size_t f);

// Weighted geometric median by Weiszfeld iteration, started from the
// weighted mean, stopped when the step norm drops below tol or after
// max_iter rounds. Weights are sample counts; everyone accepted.
AggregationOutcome geomed(const std::vector<ClientUpdate>& updates,
                          double tol = 1e-8, std::size_t max_iter = 200);

// Reconstruction-error scoring with the mean as threshold; strictly-above
// clients are rejected and fedavg runs over the rest. The accepted set is
// never empty. `reference_global` is only consulted in delta score mode.
AggregationOutcome spectral_aggregate(const std::vector<ClientUpdate>& updates,
                                      const DetectorModel& detector,
                                      const ParamVector* reference_global = nullptr,
                                      std::size_t threads = 1);

enum class AggregationRule { FedAvg, Krum, GeoMed, Spectral };

AggregationRule rule_from_string(const std::string& s);
std::string to_string(AggregationRule rule);

}  // namespace flguard
