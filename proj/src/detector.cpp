#include "flguard/detector.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "flguard/errors.hpp"
#include "json.hpp"

namespace flguard {

namespace {

using nlohmann::json;

void relu_inplace(std::vector<double>& v) {
  for (double& x : v) x = std::max(0.0, x);
}

std::vector<double> layer_forward(const DenseLayer& l,
                                  std::span<const double> x) {
  std::vector<double> y(l.out);
  for (std::size_t o = 0; o < l.out; ++o) {
    y[o] = l.b[o] + dot({l.w.data() + o * l.in, l.in}, x);
  }
  return y;
}

// Accumulates one sample's contribution: gw += d (x) xin, gb += d; returns
// the downstream gradient W^T d.
std::vector<double> layer_backward(const DenseLayer& l, DenseLayer& grad,
                                   std::span<const double> xin,
                                   std::span<const double> d) {
  std::vector<double> dx(l.in, 0.0);
  for (std::size_t o = 0; o < l.out; ++o) {
    axpy(d[o], xin, {grad.w.data() + o * l.in, l.in});
    grad.b[o] += d[o];
    axpy(d[o], {l.w.data() + o * l.in, l.in}, dx);
  }
  return dx;
}

DenseLayer make_layer(std::size_t in, std::size_t out, RngStream* stream) {
  DenseLayer l;
  l.in = in;
  l.out = out;
  l.w.assign(in * out, 0.0);
  l.b.assign(out, 0.0);
  if (stream) {
    const double s = 1.0 / std::sqrt(static_cast<double>(in));
    for (double& w : l.w) w = s * (2.0 * stream->next_double() - 1.0);
  }
  return l;
}

VaeWeights make_weights(std::size_t surrogate_dim, const VaeHyper& h,
                        RngStream* stream) {
  VaeWeights w;
  w.enc1 = make_layer(surrogate_dim, h.hidden, stream);
  w.enc2 = make_layer(h.hidden, h.hidden, stream);
  w.mu_head = make_layer(h.hidden, h.latent, stream);
  w.logvar_head = make_layer(h.hidden, h.latent, stream);
  w.dec1 = make_layer(h.latent, h.hidden, stream);
  w.dec2 = make_layer(h.hidden, h.hidden, stream);
  w.out = make_layer(h.hidden, surrogate_dim, stream);
  return w;
}

std::array<DenseLayer*, 7> layer_list(VaeWeights& w) {
  return {&w.enc1, &w.enc2, &w.mu_head, &w.logvar_head,
          &w.dec1, &w.dec2, &w.out};
}

// Full set of activations kept for backprop.
struct Activations {
  std::vector<double> h1, h2, mu, logvar, eps, z, g1, g2, xhat;
};

void forward_sample(const VaeWeights& w, std::span<const double> x,
                    Activations& a, bool sample_z, RngStream* stream) {
  a.h1 = layer_forward(w.enc1, x);
  relu_inplace(a.h1);
  a.h2 = layer_forward(w.enc2, a.h1);
  relu_inplace(a.h2);
  a.mu = layer_forward(w.mu_head, a.h2);
  a.logvar = layer_forward(w.logvar_head, a.h2);
  a.z = a.mu;
  if (sample_z) {
    a.eps.resize(a.mu.size());
    for (std::size_t j = 0; j < a.z.size(); ++j) {
      a.eps[j] = stream->next_gaussian();
      a.z[j] += std::exp(0.5 * a.logvar[j]) * a.eps[j];
    }
  }
  a.g1 = layer_forward(w.dec1, a.z);
  relu_inplace(a.g1);
  a.g2 = layer_forward(w.dec2, a.g1);
  relu_inplace(a.g2);
  a.xhat = layer_forward(w.out, a.g2);
}

// Gradient of vae_loss for one sample; z was sampled with a.eps.
void backward_sample(const VaeWeights& w, VaeWeights& grad,
                     std::span<const double> x, const Activations& a,
                     double beta) {
  const std::size_t S = x.size();
  const std::size_t L = a.mu.size();

  std::vector<double> dxhat(S);
  for (std::size_t i = 0; i < S; ++i) {
    dxhat[i] = 2.0 * (a.xhat[i] - x[i]) / static_cast<double>(S);
  }
  auto dg2 = layer_backward(w.out, grad.out, a.g2, dxhat);
  for (std::size_t i = 0; i < dg2.size(); ++i) {
    if (a.g2[i] <= 0.0) dg2[i] = 0.0;
  }
  auto dg1 = layer_backward(w.dec2, grad.dec2, a.g1, dg2);
  for (std::size_t i = 0; i < dg1.size(); ++i) {
    if (a.g1[i] <= 0.0) dg1[i] = 0.0;
  }
  auto dz = layer_backward(w.dec1, grad.dec1, a.z, dg1);

  std::vector<double> dmu(L), dlogvar(L);
  for (std::size_t j = 0; j < L; ++j) {
    dmu[j] = dz[j] + beta * a.mu[j] / static_cast<double>(L);
    dlogvar[j] = 0.5 * dz[j] * a.eps[j] * std::exp(0.5 * a.logvar[j]) +
                 beta * (std::exp(a.logvar[j]) - 1.0) /
                     (2.0 * static_cast<double>(L));
  }
  auto dh2_mu = layer_backward(w.mu_head, grad.mu_head, a.h2, dmu);
  auto dh2_lv = layer_backward(w.logvar_head, grad.logvar_head, a.h2, dlogvar);
  std::vector<double> dh2(dh2_mu.size());
  for (std::size_t i = 0; i < dh2.size(); ++i) {
    dh2[i] = a.h2[i] > 0.0 ? dh2_mu[i] + dh2_lv[i] : 0.0;
  }
  auto dh1 = layer_backward(w.enc2, grad.enc2, a.h1, dh2);
  for (std::size_t i = 0; i < dh1.size(); ++i) {
    if (a.h1[i] <= 0.0) dh1[i] = 0.0;
  }
  layer_backward(w.enc1, grad.enc1, x, dh1);
}

std::vector<double> normalize(const DetectorModel& det,
                              std::span<const double> surrogate) {
  std::vector<double> x(surrogate.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = (surrogate[i] - det.norm_mean[i]) / det.norm_std[i];
  }
  return x;
}

std::vector<double> surrogate_of(const DetectorModel& det,
                                 const ParamVector& params,
                                 const ParamVector* reference_global) {
  if (params.spec != det.model_spec ||
      params.values.size() != det.projector.source_dim) {
    throw std::invalid_argument(
        "detector: update spec does not match detector spec");
  }
  if (det.score_mode == ScoreMode::Delta) {
    if (reference_global == nullptr) {
      throw std::invalid_argument(
          "detector: delta score mode needs the global model");
    }
    std::vector<double> delta(params.values.size());
    for (std::size_t i = 0; i < delta.size(); ++i) {
      delta[i] = params.values[i] - reference_global->values[i];
    }
    return det.projector.project(delta);
  }
  return det.projector.project(params.values);
}

json layer_to_json(const DenseLayer& l) {
  json rows = json::array();
  for (std::size_t o = 0; o < l.out; ++o) {
    rows.push_back(json(std::vector<double>(l.w.begin() + o * l.in,
                                            l.w.begin() + (o + 1) * l.in)));
  }
  return json{{"in", l.in}, {"out", l.out}, {"w", std::move(rows)}, {"b", l.b}};
}

DenseLayer layer_from_json(const json& j) {
  DenseLayer l;
  l.in = j.at("in").get<std::size_t>();
  l.out = j.at("out").get<std::size_t>();
  l.b = j.at("b").get<std::vector<double>>();
  const auto& rows = j.at("w");
  if (rows.size() != l.out || l.b.size() != l.out) {
    throw LoadError("detector artifact: layer shape mismatch");
  }
  l.w.reserve(l.in * l.out);
  for (const auto& row : rows) {
    auto r = row.get<std::vector<double>>();
    if (r.size() != l.in) throw LoadError("detector artifact: row length mismatch");
    l.w.insert(l.w.end(), r.begin(), r.end());
  }
  return l;
}

}  // namespace

std::vector<double> SurrogateProjector::project(
    std::span<const double> v) const {
  if (v.size() != source_dim) {
    throw std::invalid_argument("projector: source dimension mismatch");
  }
  std::vector<double> out(index_set.size());
  for (std::size_t i = 0; i < index_set.size(); ++i) out[i] = v[index_set[i]];
  return out;
}

SurrogateProjector build_projector(std::size_t source_dim,
                                   std::size_t surrogate_dim,
                                   std::uint64_t seed) {
  if (surrogate_dim > source_dim) {
    throw ConfigError("build_projector: surrogate_dim > source_dim");
  }
  RngStream stream = RngStream::derive(seed, {0x70726f6aULL});  // "proj"
  SurrogateProjector p;
  p.source_dim = source_dim;
  p.surrogate_dim = surrogate_dim;
  p.sampling_seed = seed;
  p.index_set = sample_without_replacement(stream, source_dim, surrogate_dim);
  std::sort(p.index_set.begin(), p.index_set.end());
  return p;
}

DenseMatrix collect_traces(const LabeledDataset& public_ds,
                           const ModelSpec& spec, std::size_t steps,
                           std::size_t batch_size, double lr,
                           const SurrogateProjector& projector,
                           RngStream& stream) {
  if (steps < 1) throw ConfigError("collect_traces: steps must be >= 1");
  if (public_ds.size() < batch_size) {
    throw ConfigError("collect_traces: dataset smaller than batch size");
  }
  RngStream init_stream = stream.child(0);
  ParamVector params = init_params(spec, init_stream);
  if (params.values.size() != projector.source_dim) {
    throw ConfigError("collect_traces: projector does not match model spec");
  }

  std::vector<std::size_t> order(public_ds.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();  // trigger shuffle on first step

  DenseMatrix traces(steps, projector.surrogate_dim);
  for (std::size_t s = 0; s < steps; ++s) {
    if (cursor + batch_size > order.size()) {
      shuffle(stream, order);
      cursor = 0;
    }
    auto [loss, grad] =
        loss_and_grad(params, public_ds, {order.data() + cursor, batch_size});
    (void)loss;
    cursor += batch_size;
    axpy(-lr, grad.values, params.values);
    auto proj = projector.project(params.values);
    std::copy(proj.begin(), proj.end(), traces.row(s).begin());
  }
  return traces;
}

VaeForwardResult vae_forward(const DetectorModel& detector,
                             std::span<const double> x_norm,
                             const std::vector<double>* z_override,
                             RngStream* stream) {
  if (x_norm.size() != detector.projector.surrogate_dim) {
    throw std::invalid_argument("vae_forward: input dimension mismatch");
  }
  Activations a;
  if (z_override) {
    forward_sample(detector.weights, x_norm, a, false, nullptr);
    a.z = *z_override;
    a.g1 = layer_forward(detector.weights.dec1, a.z);
    relu_inplace(a.g1);
    a.g2 = layer_forward(detector.weights.dec2, a.g1);
    relu_inplace(a.g2);
    a.xhat = layer_forward(detector.weights.out, a.g2);
  } else if (stream) {
    forward_sample(detector.weights, x_norm, a, true, stream);
  } else {
    // Deterministic posterior-mean inference.
    forward_sample(detector.weights, x_norm, a, false, nullptr);
  }
  return {std::move(a.mu), std::move(a.logvar), std::move(a.z),
          std::move(a.xhat)};
}

double vae_loss(std::span<const double> x_norm, std::span<const double> x_hat,
                std::span<const double> mu, std::span<const double> logvar,
                double beta) {
  double mse = 0.0;
  for (std::size_t i = 0; i < x_norm.size(); ++i) {
    const double d = x_norm[i] - x_hat[i];
    mse += d * d;
  }
  mse /= static_cast<double>(x_norm.size());
  double kl = 0.0;
  for (std::size_t j = 0; j < mu.size(); ++j) {
    kl += 1.0 + logvar[j] - mu[j] * mu[j] - std::exp(logvar[j]);
  }
  kl *= -0.5 / static_cast<double>(mu.size());
  return mse + beta * kl;
}

DetectorModel vae_train(const DenseMatrix& traces_in, const VaeHyper& hyper,
                        const VaeTrainOptions& opts,
                        const SurrogateProjector& projector,
                        const ModelSpec& model_spec, RngStream& stream) {
  DenseMatrix deltas;
  const DenseMatrix* traces = &traces_in;
  if (opts.score_mode == ScoreMode::Delta) {
    if (traces_in.rows <= opts.delta_window) {
      throw ConfigError("vae_train: not enough trace rows for delta window");
    }
    deltas = DenseMatrix(traces_in.rows - opts.delta_window, traces_in.cols);
    for (std::size_t r = 0; r < deltas.rows; ++r) {
      for (std::size_t c = 0; c < deltas.cols; ++c) {
        deltas.at(r, c) =
            traces_in.at(r + opts.delta_window, c) - traces_in.at(r, c);
      }
    }
    traces = &deltas;
  }
  if (traces->rows == 0) throw ConfigError("vae_train: empty trace matrix");
  const std::size_t n = traces->rows;
  const std::size_t S = traces->cols;

  DetectorModel det;
  det.model_spec = model_spec;
  det.projector = projector;
  det.hyper = hyper;
  det.score_mode = opts.score_mode;
  det.delta_window = opts.delta_window;
  det.trace_rows = n;

  det.norm_mean.assign(S, 0.0);
  det.norm_std.assign(S, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < S; ++c) det.norm_mean[c] += traces->at(r, c);
  }
  for (double& m : det.norm_mean) m /= static_cast<double>(n);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < S; ++c) {
      const double d = traces->at(r, c) - det.norm_mean[c];
      det.norm_std[c] += d * d;
    }
  }
  bool any_variance = false;
  for (double& s : det.norm_std) {
    s = std::sqrt(s / static_cast<double>(n));
    if (s > 0.0) any_variance = true;
    s = std::max(s, 1e-8);
  }
  if (!any_variance) {
    throw ConfigError("vae_train: traces have zero variance everywhere");
  }

  RngStream init_stream = stream.child(0);
  det.weights = make_weights(S, hyper, &init_stream);
  if (opts.epochs == 0) {
    det.trained = false;
    return det;
  }

  // Pre-normalized training matrix.
  DenseMatrix T(n, S);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < S; ++c) {
      T.at(r, c) = (traces->at(r, c) - det.norm_mean[c]) / det.norm_std[c];
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  VaeWeights grads = make_weights(S, hyper, nullptr);
  Activations acts;
  double first_epoch_loss = 0.0, epoch_loss = 0.0;

  for (std::size_t e = 0; e < opts.epochs; ++e) {
    const double lr_e =
        opts.lr * std::pow(0.5, static_cast<double>(4 * e / opts.epochs));
    shuffle(stream, order);
    epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += opts.batch_size) {
      const std::size_t len = std::min(opts.batch_size, n - start);
      for (DenseLayer* l : layer_list(grads)) {
        std::fill(l->w.begin(), l->w.end(), 0.0);
        std::fill(l->b.begin(), l->b.end(), 0.0);
      }
      for (std::size_t k = 0; k < len; ++k) {
        std::span<const double> x = T.row(order[start + k]);
        forward_sample(det.weights, x, acts, true, &stream);
        epoch_loss += vae_loss(x, acts.xhat, acts.mu, acts.logvar, hyper.beta);
        backward_sample(det.weights, grads, x, acts, hyper.beta);
      }
      const double scale = -lr_e / static_cast<double>(len);
      auto wl = layer_list(det.weights);
      auto gl = layer_list(grads);
      for (std::size_t i = 0; i < wl.size(); ++i) {
        axpy(scale, gl[i]->w, wl[i]->w);
        axpy(scale, gl[i]->b, wl[i]->b);
      }
    }
    epoch_loss /= static_cast<double>(n);
    if (e == 0) first_epoch_loss = epoch_loss;
  }
  if (epoch_loss > first_epoch_loss) {
    throw std::runtime_error(
        "vae_train: final-epoch loss exceeds first-epoch loss");
  }
  det.trained = true;
  det.final_train_loss = epoch_loss;
  return det;
}

double reconstruction_error(const DetectorModel& detector,
                            const ParamVector& params,
                            const ParamVector* reference_global) {
  auto x = normalize(detector, surrogate_of(detector, params, reference_global));
  auto fwd = vae_forward(detector, x, nullptr, nullptr);
  double mse = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - fwd.x_hat[i];
    mse += d * d;
  }
  return mse / static_cast<double>(x.size());
}

std::vector<double> latent_mean(const DetectorModel& detector,
                                const ParamVector& params,
                                const ParamVector* reference_global) {
  auto x = normalize(detector, surrogate_of(detector, params, reference_global));
  return vae_forward(detector, x, nullptr, nullptr).mu;
}

std::pair<double, std::vector<bool>> dynamic_threshold(
    const std::vector<double>& errors) {
  if (errors.empty()) {
    throw std::invalid_argument("dynamic_threshold: empty error list");
  }
  double mean = std::accumulate(errors.begin(), errors.end(), 0.0) /
                static_cast<double>(errors.size());
  std::vector<bool> flags(errors.size());
  for (std::size_t i = 0; i < errors.size(); ++i) flags[i] = errors[i] > mean;
  return {mean, std::move(flags)};
}

void save_detector(const DetectorModel& det, const std::string& path) {
  json j;
  j["format_version"] = det.format_version;
  j["kind"] = "vae_update_detector";
  j["model_spec"] = {{"kind", to_string(det.model_spec.kind)},
                     {"input_dim", det.model_spec.input_dim},
                     {"hidden_dim", det.model_spec.hidden_dim},
                     {"num_classes", det.model_spec.num_classes}};
  j["projector"] = {{"source_dim", det.projector.source_dim},
                    {"surrogate_dim", det.projector.surrogate_dim},
                    {"sampling_seed", det.projector.sampling_seed},
                    {"indices", det.projector.index_set}};
  j["hyper"] = {{"hidden", det.hyper.hidden},
                {"latent", det.hyper.latent},
                {"beta", det.hyper.beta}};
  j["score_mode"] = det.score_mode == ScoreMode::Raw ? "raw" : "delta";
  j["delta_window"] = det.delta_window;
  j["trained"] = det.trained;
  j["trace_rows"] = det.trace_rows;
  j["final_train_loss"] = det.final_train_loss;
  j["norm_mean"] = det.norm_mean;
  j["norm_std"] = det.norm_std;
  j["weights"] = {{"enc1", layer_to_json(det.weights.enc1)},
                  {"enc2", layer_to_json(det.weights.enc2)},
                  {"mu_head", layer_to_json(det.weights.mu_head)},
                  {"logvar_head", layer_to_json(det.weights.logvar_head)},
                  {"dec1", layer_to_json(det.weights.dec1)},
                  {"dec2", layer_to_json(det.weights.dec2)},
                  {"out", layer_to_json(det.weights.out)}};
  std::ofstream os(path, std::ios::binary);
  if (!os) throw LoadError("cannot write detector artifact " + path);
  os << j.dump();
  os << '\n';
}

DetectorModel load_detector(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw LoadError("cannot open detector artifact " + path);
  json j;
  try {
    is >> j;
  } catch (const json::parse_error& e) {
    throw LoadError("detector artifact parse error: " + std::string(e.what()));
  }
  DetectorModel det;
  det.format_version = j.at("format_version").get<int>();
  if (det.format_version != 1) {
    throw LoadError("unsupported detector artifact version");
  }
  const auto& ms = j.at("model_spec");
  det.model_spec.kind = model_kind_from_string(ms.at("kind").get<std::string>());
  det.model_spec.input_dim = ms.at("input_dim").get<std::size_t>();
  det.model_spec.hidden_dim = ms.at("hidden_dim").get<std::size_t>();
  det.model_spec.num_classes = ms.at("num_classes").get<std::size_t>();
  const auto& pj = j.at("projector");
  det.projector.source_dim = pj.at("source_dim").get<std::size_t>();
  det.projector.surrogate_dim = pj.at("surrogate_dim").get<std::size_t>();
  det.projector.sampling_seed = pj.at("sampling_seed").get<std::uint64_t>();
  det.projector.index_set = pj.at("indices").get<std::vector<std::size_t>>();
  const auto& hy = j.at("hyper");
  det.hyper.hidden = hy.at("hidden").get<std::size_t>();
  det.hyper.latent = hy.at("latent").get<std::size_t>();
  det.hyper.beta = hy.at("beta").get<double>();
  det.score_mode = j.at("score_mode").get<std::string>() == "delta"
                       ? ScoreMode::Delta
                       : ScoreMode::Raw;
  det.delta_window = j.at("delta_window").get<std::size_t>();
  det.trained = j.at("trained").get<bool>();
  det.trace_rows = j.at("trace_rows").get<std::size_t>();
  det.final_train_loss = j.at("final_train_loss").get<double>();
  det.norm_mean = j.at("norm_mean").get<std::vector<double>>();
  det.norm_std = j.at("norm_std").get<std::vector<double>>();
  const auto& w = j.at("weights");
  det.weights.enc1 = layer_from_json(w.at("enc1"));
  det.weights.enc2 = layer_from_json(w.at("enc2"));
  det.weights.mu_head = layer_from_json(w.at("mu_head"));
  det.weights.logvar_head = layer_from_json(w.at("logvar_head"));
  det.weights.dec1 = layer_from_json(w.at("dec1"));
  det.weights.dec2 = layer_from_json(w.at("dec2"));
  det.weights.out = layer_from_json(w.at("out"));
  if (det.norm_mean.size() != det.projector.surrogate_dim ||
      det.norm_std.size() != det.projector.surrogate_dim) {
    throw LoadError("detector artifact: normalization size mismatch");
  }
  return det;
}

}  // namespace flguard
