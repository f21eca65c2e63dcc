#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "flguard/dataset.hpp"
#include "flguard/linalg.hpp"
#include "flguard/model.hpp"
#include "flguard/rng.hpp"

namespace flguard {

// Fixed random coordinate subsample used as the detector's low-dimensional
// input. The same index set must be used at training and inference.
struct SurrogateProjector {
  std::size_t source_dim = 0;
  std::size_t surrogate_dim = 0;
  std::vector<std::size_t> index_set;  // sorted, distinct, < source_dim
  std::uint64_t sampling_seed = 0;

  std::vector<double> project(std::span<const double> v) const;
};

// Indices drawn without replacement from a stream derived from `seed`,
// returned sorted ascending.
SurrogateProjector build_projector(std::size_t source_dim,
                                   std::size_t surrogate_dim,
                                   std::uint64_t seed);

struct VaeHyper {
  std::size_t hidden = 500;
  std::size_t latent = 100;
  double beta = 1e-3;
};

// One dense layer, weights row-major (out x in).
struct DenseLayer {
  std::size_t in = 0, out = 0;
  std::vector<double> w, b;
};

// Encoder: in -> hidden -> hidden -> {mu, logvar}; decoder: latent -> hidden
// -> hidden -> in (linear output). Hidden activations are ReLU.
struct VaeWeights {
  DenseLayer enc1, enc2, mu_head, logvar_head, dec1, dec2, out;
};

// Whether updates are scored as raw parameter vectors or as deltas from the
// current global model (sensitivity-study option).
enum class ScoreMode { Raw, Delta };

struct DetectorModel {
  int format_version = 1;
  ModelSpec model_spec;  // task model this detector scores
  SurrogateProjector projector;
  VaeWeights weights;
  std::vector<double> norm_mean, norm_std;  // per-surrogate-coordinate
  VaeHyper hyper;
  ScoreMode score_mode = ScoreMode::Raw;
  std::size_t delta_window = 10;  // Delta mode: trace differencing span
  bool trained = false;           // false when trained with epochs == 0
  std::size_t trace_rows = 0;
  double final_train_loss = 0.0;
};

// Centralized mini-batch SGD on `public_ds` for `steps` steps (reshuffled per
// epoch); after each step the parameter vector is projected through
// `projector`. Returns the stacked projections (steps x surrogate_dim),
// unnormalized.
DenseMatrix collect_traces(const LabeledDataset& public_ds,
                           const ModelSpec& spec, std::size_t steps,
                           std::size_t batch_size, double lr,
                           const SurrogateProjector& projector,
                           RngStream& stream);

struct VaeForwardResult {
  std::vector<double> mu, logvar, z, x_hat;
};

// Forward pass on a normalized surrogate vector. z = z_override when given;
// otherwise z = mu + exp(logvar/2) .* eps with eps drawn from `stream`
// (stream required in that case).
VaeForwardResult vae_forward(const DetectorModel& detector,
                             std::span<const double> x_norm,
                             const std::vector<double>* z_override = nullptr,
                             RngStream* stream = nullptr);

// loss = MSE(x_norm, x_hat) + beta * KL, with KL averaged over latent dims:
// KL = -1/2 * sum_j(1 + logvar_j - mu_j^2 - exp(logvar_j)) / latent_dim.
double vae_loss(std::span<const double> x_norm, std::span<const double> x_hat,
                std::span<const double> mu, std::span<const double> logvar,
                double beta);

struct VaeTrainOptions {
  std::size_t epochs = 50;
  std::size_t batch_size = 64;
  double lr = 0.01;  // halved every 25% of epochs
  ScoreMode score_mode = ScoreMode::Raw;
  std::size_t delta_window = 10;
};

// Normalizes traces per coordinate (std floored at 1e-8), then trains by
// reparameterized SGD with per-epoch shuffling. Throws ConfigError when every
// trace coordinate has exactly zero variance. epochs == 0 returns the
// initialized model with trained=false.
DetectorModel vae_train(const DenseMatrix& traces, const VaeHyper& hyper,
                        const VaeTrainOptions& opts,
                        const SurrogateProjector& projector,
                        const ModelSpec& model_spec, RngStream& stream);

// Deterministic score: project -> normalize -> forward with z = mu -> MSE in
// normalized space. In Delta mode the reference global model is required.
double reconstruction_error(const DetectorModel& detector,
                            const ParamVector& params,
                            const ParamVector* reference_global = nullptr);

// Posterior mean of the update's surrogate (the latent embedding used for
// inspection CSVs).
std::vector<double> latent_mean(const DetectorModel& detector,
                                const ParamVector& params,
                                const ParamVector* reference_global = nullptr);

// threshold = mean(errors); flag strictly-greater-than entries.
std::pair<double, std::vector<bool>> dynamic_threshold(
    const std::vector<double>& errors);

// Detector artifact I/O (versioned JSON; numbers round-trip exactly).
void save_detector(const DetectorModel& detector, const std::string& path);
DetectorModel load_detector(const std::string& path);

}  // namespace flguard
