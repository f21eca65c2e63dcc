#pragma once

#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

namespace flguard {

// Counter-based pseudo-random stream. A stream is identified by a key derived
// from (master_seed, path); draws are a pure function of (key, counter), so
// streams can be created in any order, on any thread, and still produce the
// same sequences.
class RngStream {
 public:
  RngStream() : key_(0), counter_(0) {}

  static RngStream derive(std::uint64_t master_seed,
                          std::span<const std::uint64_t> path);
  static RngStream derive(std::uint64_t master_seed,
                          std::initializer_list<std::uint64_t> path);

  // Child stream; equivalent to re-deriving with the label appended to the path.
  RngStream child(std::uint64_t label) const;

  std::uint64_t next_u64();

  // Uniform in [0,1) with 53 random bits.
  double next_double();

  // Unbiased integer in [0, bound). bound must be > 0.
  std::uint64_t next_below(std::uint64_t bound);

  // Standard normal draw (Box-Muller; the spare half of each pair is cached).
  double next_gaussian();

  std::uint64_t key() const { return key_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Vector of i.i.d. N(mean, std^2) draws. std must be >= 0; std == 0 yields a
// constant vector.
std::vector<double> gaussian_vector(RngStream& stream, std::size_t dim,
                                    double mean, double std);

// In-place Fisher-Yates shuffle.
template <typename T>
void shuffle(RngStream& stream, std::vector<T>& items) {
  for (std::size_t i = items.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(stream.next_below(i));
    std::swap(items[i - 1], items[j]);
  }
}

// k distinct values from [0, n), in draw order.
std::vector<std::size_t> sample_without_replacement(RngStream& stream,
                                                    std::size_t n,
                                                    std::size_t k);

}  // namespace flguard
