#include "flguard/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace flguard {

namespace {

constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

// SplitMix64 finalizer; bijective 64-bit mix.
std::uint64_t mix64(std::uint64_t z) {
  z += kGolden;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

RngStream RngStream::derive(std::uint64_t master_seed,
                            std::span<const std::uint64_t> path) {
  // Sequential absorption: order-sensitive, so [1,2] and [2,1] land on
  // different keys.
  std::uint64_t key = mix64(master_seed);
  for (std::uint64_t label : path) {
    key = mix64(key ^ mix64(label));
  }
  RngStream s;
  s.key_ = key;
  s.counter_ = 0;
  return s;
}

RngStream RngStream::derive(std::uint64_t master_seed,
                            std::initializer_list<std::uint64_t> path) {
  return derive(master_seed,
                std::span<const std::uint64_t>(path.begin(), path.size()));
}

RngStream RngStream::child(std::uint64_t label) const {
  RngStream s;
  s.key_ = mix64(key_ ^ mix64(label));
  s.counter_ = 0;
  return s;
}

std::uint64_t RngStream::next_u64() {
  return mix64(key_ ^ (counter_++ * kGolden));
}

double RngStream::next_double() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t RngStream::next_below(std::uint64_t bound) {
  if (bound == 0) throw std::invalid_argument("next_below: bound must be > 0");
  // Rejection sampling over the largest multiple of bound.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  std::uint64_t v;
  do {
    v = next_u64();
  } while (v >= limit);
  return v % bound;
}

double RngStream::next_gaussian() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // Box-Muller. u1 in (0,1] so the log is finite.
  double u1 = 1.0 - next_double();
  double u2 = next_double();
  double r = std::sqrt(-2.0 * std::log(u1));
  double theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

std::vector<double> gaussian_vector(RngStream& stream, std::size_t dim,
                                    double mean, double std) {
  if (std < 0.0) {
    throw std::invalid_argument("gaussian_vector: std must be >= 0");
  }
  std::vector<double> v(dim);
  for (double& x : v) x = mean + std * stream.next_gaussian();
  return v;
}

std::vector<std::size_t> sample_without_replacement(RngStream& stream,
                                                    std::size_t n,
                                                    std::size_t k) {
  if (k > n) {
    throw std::invalid_argument("sample_without_replacement: k > n");
  }
  std::vector<std::size_t> pool(n);
  for (std::size_t i = 0; i < n; ++i) pool[i] = i;
  // Partial Fisher-Yates; first k entries are the sample.
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t j = i + static_cast<std::size_t>(stream.next_below(n - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  return pool;
}

}  // namespace flguard
