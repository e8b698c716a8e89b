#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

namespace rewardkit {

// SplitMix64 with unbiased bounded draws. Output is fully specified here so a
// seed reproduces the same selection on every platform and standard library.
class SampleRng {
 public:
  static constexpr std::string_view kName = "splitmix64-v1";

  explicit SampleRng(std::uint64_t seed) : state_(seed) {}

  // Seed derived from a caller seed and a name (e.g. the dataset name).
  static SampleRng for_name(std::uint64_t seed, std::string_view name);

  std::uint64_t next();
  // Uniform integer in [0, bound). bound must be > 0.
  std::uint64_t below(std::uint64_t bound);

 private:
  std::uint64_t state_;
};

// k distinct indices drawn uniformly from [0, n), returned ascending.
// Returns all n indices when k >= n.
std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k, SampleRng& rng);

}  // namespace rewardkit
