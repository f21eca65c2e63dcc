#include "flguard/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "flguard/errors.hpp"

namespace flguard {

std::size_t ModelSpec::param_count() const {
  if (kind == ModelKind::LR) {
    return input_dim * num_classes + num_classes;
  }
  return input_dim * hidden_dim + hidden_dim + hidden_dim * num_classes +
         num_classes;
}

ModelKind model_kind_from_string(const std::string& s) {
  if (s == "lr") return ModelKind::LR;
  if (s == "mlp") return ModelKind::MLP;
  throw ConfigError("unknown model kind: " + s);
}

std::string to_string(ModelKind kind) {
  return kind == ModelKind::LR ? "lr" : "mlp";
}

namespace {

void validate_spec(const ModelSpec& spec) {
  if (spec.input_dim < 1 || spec.num_classes < 2) {
    throw ConfigError("model spec: need input_dim >= 1 and num_classes >= 2");
  }
  if (spec.kind == ModelKind::MLP && spec.hidden_dim < 1) {
    throw ConfigError("model spec: MLP needs hidden_dim >= 1");
  }
}

// Parameter block offsets for the MLP layout.
struct MlpView {
  const double *w1, *b1, *w2, *b2;
  static MlpView of(const ParamVector& p) {
    const auto& s = p.spec;
    const double* base = p.values.data();
    return {base, base + s.input_dim * s.hidden_dim,
            base + s.input_dim * s.hidden_dim + s.hidden_dim,
            base + s.input_dim * s.hidden_dim + s.hidden_dim +
                s.hidden_dim * s.num_classes};
  }
};

struct MlpMutView {
  double *w1, *b1, *w2, *b2;
  static MlpMutView of(ParamVector& p) {
    const auto& s = p.spec;
    double* base = p.values.data();
    return {base, base + s.input_dim * s.hidden_dim,
            base + s.input_dim * s.hidden_dim + s.hidden_dim,
            base + s.input_dim * s.hidden_dim + s.hidden_dim +
                s.hidden_dim * s.num_classes};
  }
};

}  // namespace

ParamVector init_params(const ModelSpec& spec, RngStream& stream) {
  validate_spec(spec);
  ParamVector p;
  p.spec = spec;
  p.values.assign(spec.param_count(), 0.0);
  if (spec.kind == ModelKind::MLP) {
    MlpMutView v = MlpMutView::of(p);
    const double s1 = 1.0 / std::sqrt(static_cast<double>(spec.input_dim));
    for (std::size_t i = 0; i < spec.input_dim * spec.hidden_dim; ++i) {
      v.w1[i] = s1 * (2.0 * stream.next_double() - 1.0);
    }
    const double s2 = 1.0 / std::sqrt(static_cast<double>(spec.hidden_dim));
    for (std::size_t i = 0; i < spec.hidden_dim * spec.num_classes; ++i) {
      v.w2[i] = s2 * (2.0 * stream.next_double() - 1.0);
    }
  }
  return p;
}

std::vector<double> predict_logits(const ParamVector& params,
                                   std::span<const double> x) {
  const auto& s = params.spec;
  if (x.size() != s.input_dim) {
    throw std::invalid_argument("predict_logits: feature dimension mismatch");
  }
  if (s.kind == ModelKind::LR) {
    const double* w = params.values.data();
    const double* b = w + s.input_dim * s.num_classes;
    std::vector<double> logits(s.num_classes);
    for (std::size_t c = 0; c < s.num_classes; ++c) {
      logits[c] = b[c] + dot({w + c * s.input_dim, s.input_dim}, x);
    }
    return logits;
  }
  MlpView v = MlpView::of(params);
  std::vector<double> h(s.hidden_dim);
  for (std::size_t j = 0; j < s.hidden_dim; ++j) {
    h[j] = std::max(0.0, v.b1[j] + dot({v.w1 + j * s.input_dim, s.input_dim}, x));
  }
  std::vector<double> logits(s.num_classes);
  for (std::size_t c = 0; c < s.num_classes; ++c) {
    logits[c] = v.b2[c] + dot({v.w2 + c * s.hidden_dim, s.hidden_dim},
                              std::span<const double>(h));
  }
  return logits;
}

std::pair<double, ParamVector> loss_and_grad(
    const ParamVector& params, const LabeledDataset& ds,
    std::span<const std::size_t> indices) {
  const auto& s = params.spec;
  if (indices.empty()) throw std::invalid_argument("loss_and_grad: empty batch");
  if (ds.dim() != s.input_dim) {
    throw std::invalid_argument("loss_and_grad: feature dimension mismatch");
  }

  ParamVector grad;
  grad.spec = s;
  grad.values.assign(params.values.size(), 0.0);
  double loss = 0.0;
  const double inv_n = 1.0 / static_cast<double>(indices.size());

  if (s.kind == ModelKind::LR) {
    const double* w = params.values.data();
    const double* b = w + s.input_dim * s.num_classes;
    double* gw = grad.values.data();
    double* gb = gw + s.input_dim * s.num_classes;
    std::vector<double> logits(s.num_classes);
    for (std::size_t idx : indices) {
      std::span<const double> x = ds.features.row(idx);
      for (std::size_t c = 0; c < s.num_classes; ++c) {
        logits[c] = b[c] + dot({w + c * s.input_dim, s.input_dim}, x);
      }
      auto [l, dlogits] = softmax_xent_grad(logits, ds.labels[idx]);
      loss += l * inv_n;
      for (std::size_t c = 0; c < s.num_classes; ++c) {
        const double coef = dlogits[c] * inv_n;
        axpy(coef, x, {gw + c * s.input_dim, s.input_dim});
        gb[c] += coef;
      }
    }
  } else {
    MlpView v = MlpView::of(params);
    MlpMutView g = MlpMutView::of(grad);
    std::vector<double> h(s.hidden_dim), dh(s.hidden_dim),
        logits(s.num_classes);
    for (std::size_t idx : indices) {
      std::span<const double> x = ds.features.row(idx);
      for (std::size_t j = 0; j < s.hidden_dim; ++j) {
        h[j] = std::max(0.0,
                        v.b1[j] + dot({v.w1 + j * s.input_dim, s.input_dim}, x));
      }
      for (std::size_t c = 0; c < s.num_classes; ++c) {
        logits[c] = v.b2[c] + dot({v.w2 + c * s.hidden_dim, s.hidden_dim},
                                  std::span<const double>(h));
      }
      auto [l, dlogits] = softmax_xent_grad(logits, ds.labels[idx]);
      loss += l * inv_n;
      std::fill(dh.begin(), dh.end(), 0.0);
      for (std::size_t c = 0; c < s.num_classes; ++c) {
        const double coef = dlogits[c] * inv_n;
        axpy(coef, std::span<const double>(h), {g.w2 + c * s.hidden_dim, s.hidden_dim});
        g.b2[c] += coef;
        axpy(dlogits[c], {v.w2 + c * s.hidden_dim, s.hidden_dim},
             std::span<double>(dh));
      }
      for (std::size_t j = 0; j < s.hidden_dim; ++j) {
        if (h[j] <= 0.0) continue;  // ReLU gate
        const double coef = dh[j] * inv_n;
        axpy(coef, x, {g.w1 + j * s.input_dim, s.input_dim});
        g.b1[j] += coef;
      }
    }
  }
  return {loss, std::move(grad)};
}

std::pair<double, ParamVector> loss_and_grad(const ParamVector& params,
                                             const DenseMatrix& batch_features,
                                             std::span<const int> batch_labels) {
  LabeledDataset tmp;
  tmp.features = batch_features;
  tmp.labels.assign(batch_labels.begin(), batch_labels.end());
  tmp.num_classes = static_cast<int>(params.spec.num_classes);
  std::vector<std::size_t> idx(batch_labels.size());
  std::iota(idx.begin(), idx.end(), 0);
  return loss_and_grad(params, tmp, idx);
}

ParamVector sgd_steps(const ParamVector& params, const LabeledDataset& ds,
                      std::span<const std::size_t> slice, std::size_t epochs,
                      std::size_t batch_size, double lr, RngStream& stream) {
  if (slice.empty()) throw std::invalid_argument("sgd_steps: empty slice");
  if (batch_size == 0) throw ConfigError("sgd_steps: batch_size must be >= 1");
  ParamVector p = params;
  std::vector<std::size_t> order(slice.begin(), slice.end());
  for (std::size_t e = 0; e < epochs; ++e) {
    shuffle(stream, order);
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
      const std::size_t len = std::min(batch_size, order.size() - start);
      auto [loss, grad] =
          loss_and_grad(p, ds, {order.data() + start, len});
      (void)loss;
      axpy(-lr, grad.values, p.values);
    }
  }
  return p;
}

double evaluate(const ParamVector& params, const LabeledDataset& ds,
                std::span<const std::size_t> indices) {
  if (indices.empty()) throw std::invalid_argument("evaluate: empty dataset");
  std::size_t correct = 0;
  for (std::size_t idx : indices) {
    auto logits = predict_logits(params, ds.features.row(idx));
    if (argmax_lowest(logits) == static_cast<std::size_t>(ds.labels[idx])) {
      ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(indices.size());
}

double evaluate(const ParamVector& params, const LabeledDataset& ds) {
  std::vector<std::size_t> idx(ds.size());
  std::iota(idx.begin(), idx.end(), 0);
  return evaluate(params, ds, idx);
}

}  // namespace flguard
