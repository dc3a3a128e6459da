// include/scriptine/rng.h
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace scriptine {

// A seeded random stream. Streams are passed by value or reference and never
// shared between workers; independent streams are derived with fork().
//
// Uniform and normal draws are computed from raw 64-bit output so results do
// not depend on the standard library's distribution implementations.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed = 0);

  // Stream keyed by (global_seed, run_id).
  static RngStream keyed(std::uint64_t global_seed, std::uint64_t run_id);

  // Child stream that depends only on this stream's seed and `key`, not on
  // how many values have been drawn.
  RngStream fork(std::uint64_t key) const;

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() { return engine_(); }
  // [0, 1)
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  // Unbiased integer in [0, n).
  std::size_t index(std::size_t n);

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[index(i)]);
    }
  }

  std::vector<std::size_t> permutation(std::size_t n);

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace scriptine
