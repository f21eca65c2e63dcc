#include "flguard/aggregate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <thread>

#include "flguard/errors.hpp"

namespace flguard {

namespace {

void require_uniform_spec(const std::vector<ClientUpdate>& updates) {
  if (updates.empty()) {
    throw std::invalid_argument("aggregation: empty update list");
  }
  for (const auto& u : updates) {
    if (u.params.spec != updates.front().params.spec) {
      throw std::invalid_argument("aggregation: mixed model specs");
    }
    if (u.sample_count < 1) {
      throw std::invalid_argument("aggregation: sample_count must be >= 1");
    }
  }
}

// Weighted average over a subset; weights are sample counts. Summation runs
// in ascending client_id order for determinism.
ParamVector weighted_average(const std::vector<ClientUpdate>& updates,
                             const std::vector<bool>& include) {
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < updates.size(); ++i) {
    if (include[i]) order.push_back(i);
  }
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return updates[a].client_id < updates[b].client_id;
  });
  double total = 0.0;
  for (std::size_t i : order) {
    total += static_cast<double>(updates[i].sample_count);
  }
  ParamVector avg;
  avg.spec = updates.front().params.spec;
  avg.values.assign(updates.front().params.values.size(), 0.0);
  for (std::size_t i : order) {
    axpy(static_cast<double>(updates[i].sample_count) / total,
         updates[i].params.values, avg.values);
  }
  return avg;
}

}  // namespace

AggregationOutcome fedavg(const std::vector<ClientUpdate>& updates) {
  require_uniform_spec(updates);
  AggregationOutcome out;
  out.new_global =
      weighted_average(updates, std::vector<bool>(updates.size(), true));
  for (const auto& u : updates) out.accepted_ids.push_back(u.client_id);
  return out;
}

AggregationOutcome krum(const std::vector<ClientUpdate>& updates,
                        std::size_t f) {
  require_uniform_spec(updates);
  const std::size_t n = updates.size();
  if (n < f + 3) {
    throw ConfigError("krum: need at least f + 3 updates");
  }
  const std::size_t neighbors = n - f - 2;

  std::vector<double> scores(n, 0.0);
  std::vector<std::vector<double>> d2(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      d2[i][j] = d2[j][i] =
          dist2(updates[i].params.values, updates[j].params.values);
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> row;
    row.reserve(n - 1);
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) row.push_back(d2[i][j]);
    }
    std::nth_element(row.begin(), row.begin() + neighbors - 1, row.end());
    scores[i] = std::accumulate(row.begin(), row.begin() + neighbors, 0.0);
  }

  std::size_t winner = 0;
  for (std::size_t i = 1; i < n; ++i) {
    if (scores[i] < scores[winner] ||
        (scores[i] == scores[winner] &&
         updates[i].client_id < updates[winner].client_id)) {
      winner = i;
    }
  }

  AggregationOutcome out;
  out.new_global = updates[winner].params;
  out.scores = std::move(scores);
  out.accepted_ids.push_back(updates[winner].client_id);
  for (std::size_t i = 0; i < n; ++i) {
    if (i != winner) out.rejected_ids.push_back(updates[i].client_id);
  }
  return out;
}

AggregationOutcome geomed(const std::vector<ClientUpdate>& updates, double tol,
                          std::size_t max_iter) {
  require_uniform_spec(updates);
  const std::size_t n = updates.size();
  const std::size_t dim = updates.front().params.values.size();

  std::vector<double> x =
      weighted_average(updates, std::vector<bool>(n, true)).values;

  std::vector<double> next(dim);
  for (std::size_t iter = 0; iter < max_iter; ++iter) {
    // Anchor-coincidence handling: nudge off the anchor and continue.
    for (const auto& u : updates) {
      if (std::sqrt(dist2(x, u.params.values)) < 1e-12) {
        x[0] += 1e-8;
      }
    }
    std::fill(next.begin(), next.end(), 0.0);
    double denom = 0.0;
    for (const auto& u : updates) {
      const double d = std::sqrt(dist2(x, u.params.values));
      const double w = static_cast<double>(u.sample_count) / d;
      denom += w;
      axpy(w, u.params.values, next);
    }
    for (double& v : next) v /= denom;
    const double step = std::sqrt(dist2(next, x));
    x = next;
    if (step < tol) break;
  }

  AggregationOutcome out;
  out.new_global.spec = updates.front().params.spec;
  out.new_global.values = std::move(x);
  for (const auto& u : updates) out.accepted_ids.push_back(u.client_id);
  return out;
}

AggregationOutcome spectral_aggregate(const std::vector<ClientUpdate>& updates,
                                      const DetectorModel& detector,
                                      const ParamVector* reference_global,
                                      std::size_t threads) {
  require_uniform_spec(updates);
  const std::size_t n = updates.size();

  std::vector<double> errors(n, 0.0);
  auto score_range = [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      errors[i] =
          reconstruction_error(detector, updates[i].params, reference_global);
    }
  };
  if (threads <= 1 || n < 2) {
    score_range(0, n);
  } else {
    const std::size_t nt = std::min(threads, n);
    std::vector<std::thread> pool;
    const std::size_t chunk = (n + nt - 1) / nt;
    for (std::size_t t = 0; t < nt; ++t) {
      const std::size_t lo = t * chunk;
      const std::size_t hi = std::min(n, lo + chunk);
      if (lo < hi) pool.emplace_back(score_range, lo, hi);
    }
    for (auto& th : pool) th.join();
  }

  auto [threshold, flags] = dynamic_threshold(errors);

  std::vector<bool> include(n);
  for (std::size_t i = 0; i < n; ++i) include[i] = !flags[i];

  AggregationOutcome out;
  out.new_global = weighted_average(updates, include);
  out.scores = std::move(errors);
  out.threshold = threshold;
  for (std::size_t i = 0; i < n; ++i) {
    (flags[i] ? out.rejected_ids : out.accepted_ids)
        .push_back(updates[i].client_id);
  }
  return out;
}

AggregationRule rule_from_string(const std::string& s) {
  if (s == "fedavg") return AggregationRule::FedAvg;
  if (s == "krum") return AggregationRule::Krum;
  if (s == "geomed") return AggregationRule::GeoMed;
  if (s == "spectral") return AggregationRule::Spectral;
  throw ConfigError("unknown aggregation rule: " + s);
}

std::string to_string(AggregationRule rule) {
  switch (rule) {
    case AggregationRule::FedAvg: return "fedavg";
    case AggregationRule::Krum: return "krum";
    case AggregationRule::GeoMed: return "geomed";
    case AggregationRule::Spectral: return "spectral";
  }
  return "fedavg";
}

}  // namespace flguard
