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
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "cpl/models.hpp"
#include "cpl/worlds.hpp"

namespace cpl {

// ---------------------------------------------------------------------------
// Average marginal component effect over binary latent factors.  For a reward
// r on latent vectors z in {0,1}^n and a component index k, the effect is
//
//   AMCE_k = sum over z in {0,1}^(n-1) of sigmoid(r(z, k=1) - r(z, k=0)) m(z)
//
// where m is an analyst-chosen density over the remaining components: both
// compared responses share the off-component cell z and differ only in k.
// The sigmoid converts the reward gap to the probability that the k=1
// response wins a BTL comparison; for worlds with deterministic label rules
// this is an approximation of the label-scale effect (see amce_metadata).

// Scalar reward over a full binary latent vector.
using LatentReward = std::function<double(const Vec&)>;

enum class MarginalChoice { kUniform, kEmpirical };

// Density over the off-component cells Z^{-k}.  A cell is keyed by the bits
// of the remaining components in original order (bit j = component j when
// j < k, component j+1 otherwise).
using CellWeights = std::map<uint32_t, double>;

struct AmceConfig {
  int n_components = 0;  // total binary latent dimension
  int component = 0;     // k, the component whose effect is measured
  MarginalChoice marginal = MarginalChoice::kUniform;
  CellWeights empirical_weights;  // required iff marginal == kEmpirical
  LatentReward reward;
  // Rejects out-of-range k, a missing reward handle, and empirical weights
  // that are negative, out of cell range, or do not normalize to 1.
  void validate() const;
};

// The empirical off-component density of a dataset: ground-truth latent
// vectors of both responses are pooled, component k is dropped, and cells are
// counted.  Rejects datasets without ground-truth latents, latent entries
// other than 0 and 1, and dimension mismatches.
CellWeights empirical_marginal(const Dataset& data, int n_components,
                               int component);

// The effect under cfg.  Uniform m enumerates every off-component cell;
// empirical m sums over the observed cells only, so its cost scales with the
// dataset's support rather than 2^(n-1).
double amce_estimate(const AmceConfig& cfg);

// Independent reference for the same estimand: always walks all 2^(n-1)
// cells, looking each one up in m.  Rejects latent dimensions above 16
// (enumeration budget).
double amce_bruteforce(const AmceConfig& cfg);

// Adapts a trained reward model to a latent reward for AMCE probes.  Each
// latent cell is synthesized into an embedding with output noise off and one
// replayed nuisance draw shared by every cell, so cells differ only through
// their latent coordinates.  Requires the map to have sigma_e = 0.
LatentReward model_latent_reward(const RewardModel& model,
                                 const EmbeddingMap& map, int t, int c,
                                 uint64_t nuisance_seed = 0);

// One table row per (component, density) pair, pairing the production path
// with its brute-force oracle.
struct AmceRow {
  int component = 0;
  std::string m_choice;  // "uniform" or "empirical"
  double amce = 0.0;
  double oracle = 0.0;
  double gap = 0.0;  // |amce - oracle|
};

// CSV with header k,m_choice,amce,oracle_amce,abs_gap.
std::string amce_csv(const std::vector<AmceRow>& rows);

// Metadata attached to AMCE outputs: records that the sigmoid-based formula
// is exact for BTL-sampled labels and an approximation for deterministic
// label rules.
Json amce_metadata();

}  // namespace cpl
