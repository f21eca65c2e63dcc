#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

namespace flguard {

// Row-major dense matrix of doubles.
struct DenseMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  DenseMatrix() = default;
  DenseMatrix(std::size_t r, std::size_t c)
      : rows(r), cols(c), data(r * c, 0.0) {}

  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<const double> row(std::size_t r) const {
    return {data.data() + r * cols, cols};
  }
  std::span<double> row(std::size_t r) {
    return {data.data() + r * cols, cols};
  }

  static DenseMatrix identity(std::size_t n) {
    DenseMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m.at(i, i) = 1.0;
    return m;
  }
};

// y = m * v. Throws if v.size() != m.cols.
std::vector<double> matvec(const DenseMatrix& m, std::span<const double> v);

// Softmax cross-entropy loss and gradient w.r.t. logits, stabilized by
// max-subtraction. grad = softmax(logits) - one_hot(label).
std::pair<double, std::vector<double>> softmax_xent_grad(
    std::span<const double> logits, std::size_t label);

// Softmax probabilities (max-subtraction stabilized).
std::vector<double> softmax(std::span<const double> logits);

// Small vector helpers shared across modules.
double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);           // Euclidean norm
double dist2(std::span<const double> a, std::span<const double> b);
void axpy(double alpha, std::span<const double> x, std::span<double> y);
std::size_t argmax_lowest(std::span<const double> v);  // ties -> lowest index

}  // namespace flguard
