#include "flguard/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace flguard {

std::vector<double> matvec(const DenseMatrix& m, std::span<const double> v) {
  if (v.size() != m.cols) {
    throw std::invalid_argument("matvec: dimension mismatch");
  }
  std::vector<double> out(m.rows, 0.0);
  for (std::size_t r = 0; r < m.rows; ++r) {
    const double* row = m.data.data() + r * m.cols;
    double acc = 0.0;
    for (std::size_t c = 0; c < m.cols; ++c) acc += row[c] * v[c];
    out[r] = acc;
  }
  return out;
}

std::vector<double> softmax(std::span<const double> logits) {
  double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    sum += p[i];
  }
  for (double& x : p) x /= sum;
  return p;
}

std::pair<double, std::vector<double>> softmax_xent_grad(
    std::span<const double> logits, std::size_t label) {
  if (label >= logits.size()) {
    throw std::invalid_argument("softmax_xent_grad: label out of range");
  }
  double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> grad(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    grad[i] = std::exp(logits[i] - mx);
    sum += grad[i];
  }
  // loss = -(logits[label] - mx - log(sum))
  double loss = std::log(sum) - (logits[label] - mx);
  for (double& g : grad) g /= sum;
  grad[label] -= 1.0;
  return {loss, std::move(grad)};
}

double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double dist2(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

std::size_t argmax_lowest(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

}  // namespace flguard
