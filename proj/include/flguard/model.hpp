#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "flguard/dataset.hpp"
#include "flguard/linalg.hpp"
#include "flguard/rng.hpp"

namespace flguard {

enum class ModelKind { LR, MLP };

struct ModelSpec {
  ModelKind kind = ModelKind::LR;
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;  // 0 for LR
  std::size_t num_classes = 0;

  std::size_t param_count() const;
  bool operator==(const ModelSpec&) const = default;
};

// Flat view of all model parameters. Layout:
//   LR : W (classes x input, row-major), b (classes)
//   MLP: W1 (hidden x input), b1 (hidden), W2 (classes x hidden), b2 (classes)
struct ParamVector {
  ModelSpec spec;
  std::vector<double> values;
};

// LR weights start at zero; MLP weights are uniform in +-1/sqrt(fan_in),
// biases zero.
ParamVector init_params(const ModelSpec& spec, RngStream& stream);

// Mean loss and exact gradient of the mean loss over the batch given by
// `indices` into `ds`. Throws on dimension mismatch or empty batch.
std::pair<double, ParamVector> loss_and_grad(const ParamVector& params,
                                             const LabeledDataset& ds,
                                             std::span<const std::size_t> indices);

// Convenience overload over an explicit feature matrix.
std::pair<double, ParamVector> loss_and_grad(const ParamVector& params,
                                             const DenseMatrix& batch_features,
                                             std::span<const int> batch_labels);

// Mini-batch SGD over the slice: `epochs` passes, reshuffled per epoch from
// `stream`, trailing partial batch included. Returns the updated parameters.
ParamVector sgd_steps(const ParamVector& params, const LabeledDataset& ds,
                      std::span<const std::size_t> slice, std::size_t epochs,
                      std::size_t batch_size, double lr, RngStream& stream);

// Fraction of argmax-correct predictions; argmax ties break to the lowest
// class index.
double evaluate(const ParamVector& params, const LabeledDataset& ds);
double evaluate(const ParamVector& params, const LabeledDataset& ds,
                std::span<const std::size_t> indices);

// Class scores for one example (LR logits / MLP forward).
std::vector<double> predict_logits(const ParamVector& params,
                                   std::span<const double> x);

ModelKind model_kind_from_string(const std::string& s);
std::string to_string(ModelKind kind);

}  // namespace flguard
