// Copyright 2026 The CPL Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace cpl {

// Seeded random stream with deterministic, named sub-streams.
//
// Every piece of randomness in the project flows from a root seed through
// forks like rng.fork("labels") or rng.fork("example", id).  Forks derive a
// fresh seed from the parent's *seed* (not its consumed state), so the set of
// streams a component receives does not depend on the order in which sibling
// components drew numbers.  Distribution transforms are written out by hand
// (Box-Muller, rejection sampling) because the std::*_distribution classes
// are not bit-portable across standard libraries.
class Rng {
 public:
  explicit Rng(uint64_t seed) : seed_(seed), eng_(seed) {}

  uint64_t seed() const { return seed_; }

  Rng fork(std::string_view name) const { return Rng(derive(seed_, name, 0)); }
  Rng fork(std::string_view name, uint64_t index) const {
    return Rng(derive(seed_, name, index + 1));
  }

  uint64_t next_u64() { return eng_(); }

  // Uniform on [0, 1) with 53 random bits, the full precision of a double.
  double uniform() {
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Inclusive on both ends.  Rejection sampling keeps the draw unbiased.
  int64_t uniform_int(int64_t lo, int64_t hi) {
    uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    if (span == 0) return static_cast<int64_t>(eng_());  // full 64-bit range
    uint64_t limit = UINT64_MAX - UINT64_MAX % span;
    uint64_t draw;
    do {
      draw = eng_();
    } while (draw >= limit);
    return lo + static_cast<int64_t>(draw % span);
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Standard normal via Box-Muller; the second variate of each pair is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1, u2;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    u2 = uniform();
    double radius = std::sqrt(-2.0 * std::log(u1));
    double angle = 2.0 * M_PI * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(uniform_int(0, static_cast<int64_t>(i) - 1));
      std::swap(v[i - 1], v[j]);
    }
  }

  // Deterministic seed derivation: FNV-1a over the name, mixed with the
  // parent seed and index through the SplitMix64 finalizer.
  static uint64_t derive(uint64_t seed, std::string_view name, uint64_t index);

 private:
  uint64_t seed_;
  std::mt19937_64 eng_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace cpl
