#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace moralprobe {

/// Counter-based generator: every draw is a pure function of
/// (key, counter), so substreams derived with split() are independent of
/// the order in which they are consumed.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed) : key_(mix(seed ^ 0x6a09e667f3bcc909ULL)) {}

  /// Child stream identified by `index`. Pure: does not advance this stream.
  CounterRng split(std::uint64_t index) const {
    CounterRng child(0);
    child.key_ = mix(key_ ^ mix(index + 0x9e3779b97f4a7c15ULL));
    return child;
  }
  /// Child stream identified by a label such as "shuffle".
  CounterRng split(std::string_view label) const;

  std::uint64_t next() { return mix(key_ + 0x9e3779b97f4a7c15ULL * ++counter_); }

  /// Uniform integer in [0, bound); bound > 0. Rejection sampling, no modulo bias.
  std::uint64_t below(std::uint64_t bound);

  /// Uniform real in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Standard normal deviate (Box-Muller, one value per call).
  double normal();

  template <class T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = below(i);
      std::swap(items[i - 1], items[j]);
    }
  }

  /// `k` distinct indices from [0, n), in draw order.
  std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k);

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace moralprobe
