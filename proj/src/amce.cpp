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

#include "cpl/amce.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "cpl/autodiff.hpp"  // sigmoid_stable

namespace cpl {

namespace {

constexpr int kBruteforceMaxDim = 16;
// Uniform-density estimates also have to walk every cell; past this many
// components the walk stops being interactive and the caller should supply
// an empirical density instead.
constexpr int kEstimateMaxDim = 26;

std::string fmt(double x) { return Json(x).dump(); }

// Expands an off-component cell mask into a full latent vector with
// component k set to `k_value`.
Vec expand_cell(uint32_t mask, int n_components, int component, double k_value) {
  Vec z(n_components);
  int bit = 0;
  for (int j = 0; j < n_components; ++j) {
    if (j == component) {
      z(j) = k_value;
    } else {
      z(j) = (mask >> bit) & 1u ? 1.0 : 0.0;
      ++bit;
    }
  }
  return z;
}

}  // namespace

void AmceConfig::validate() const {
  if (n_components < 1) {
    throw std::invalid_argument("amce: need at least one latent component");
  }
  if (component < 0 || component >= n_components) {
    std::ostringstream msg;
    msg << "amce: component " << component << " outside [0, " << n_components
        << ")";
    throw std::invalid_argument(msg.str());
  }
  if (!reward) {
    throw std::invalid_argument("amce: no reward handle set");
  }
  const int off_bits = n_components - 1;
  if (marginal == MarginalChoice::kEmpirical) {
    if (empirical_weights.empty()) {
      throw std::invalid_argument("amce: empirical density has no cells");
    }
    double total = 0.0;
    for (const auto& [mask, w] : empirical_weights) {
      if (off_bits < 32 && mask >= (1u << off_bits)) {
        std::ostringstream msg;
        msg << "amce: cell mask " << mask << " outside the " << off_bits
            << "-bit cell space";
        throw std::invalid_argument(msg.str());
      }
      if (!(w >= 0.0) || !std::isfinite(w)) {
        throw std::invalid_argument("amce: cell weights must be finite and >= 0");
      }
      total += w;
    }
    if (std::abs(total - 1.0) > 1e-9) {
      std::ostringstream msg;
      msg << "amce: density sums to " << total << ", not 1";
      throw std::invalid_argument(msg.str());
    }
  } else if (!empirical_weights.empty()) {
    throw std::invalid_argument(
        "amce: uniform density does not take explicit cell weights");
  }
}

CellWeights empirical_marginal(const Dataset& data, int n_components,
                               int component) {
  if (n_components < 1 || component < 0 || component >= n_components) {
    throw std::invalid_argument("empirical_marginal: bad component index");
  }
  if (n_components - 1 >= 32) {
    throw std::invalid_argument("empirical_marginal: latent dimension too large");
  }
  if (!data.has_ground_truth()) {
    throw std::invalid_argument(
        "empirical_marginal: dataset carries no ground-truth latents");
  }
  std::map<uint32_t, size_t> counts;
  size_t total = 0;
  auto tally = [&](const Vec& z, size_t example_id) {
    if (z.size() != n_components) {
      std::ostringstream msg;
      msg << "empirical_marginal: example " << example_id << " has "
          << z.size() << " latent components, expected " << n_components;
      throw std::invalid_argument(msg.str());
    }
    uint32_t mask = 0;
    int bit = 0;
    for (int j = 0; j < n_components; ++j) {
      const double v = z(j);
      if (v != 0.0 && v != 1.0) {
        std::ostringstream msg;
        msg << "empirical_marginal: non-binary latent value " << v
            << " in example " << example_id;
        throw std::invalid_argument(msg.str());
      }
      if (j == component) continue;
      if (v == 1.0) mask |= 1u << bit;
      ++bit;
    }
    ++counts[mask];
    ++total;
  };
  for (size_t i = 0; i < data.examples.size(); ++i) {
    // Both responses contribute: the density describes the off-component
    // cells the comparisons actually visited, regardless of side.
    tally(data.examples[i].z, i);
    tally(data.examples[i].z_prime, i);
  }
  CellWeights weights;
  for (const auto& [mask, c] : counts) {
    weights[mask] = static_cast<double>(c) / static_cast<double>(total);
  }
  return weights;
}

double amce_estimate(const AmceConfig& cfg) {
  cfg.validate();
  const int off_bits = cfg.n_components - 1;
  auto cell_effect = [&](uint32_t mask) {
    const Vec z1 = expand_cell(mask, cfg.n_components, cfg.component, 1.0);
    const Vec z0 = expand_cell(mask, cfg.n_components, cfg.component, 0.0);
    return sigmoid_stable(cfg.reward(z1) - cfg.reward(z0));
  };
  double total = 0.0;
  if (cfg.marginal == MarginalChoice::kUniform) {
    if (cfg.n_components > kEstimateMaxDim) {
      std::ostringstream msg;
      msg << "amce_estimate: " << cfg.n_components
          << " components exceed the uniform enumeration budget ("
          << kEstimateMaxDim << ")";
      throw std::invalid_argument(msg.str());
    }
    const uint64_t cells = uint64_t{1} << off_bits;
    const double weight = 1.0 / static_cast<double>(cells);
    for (uint64_t mask = 0; mask < cells; ++mask) {
      total += weight * cell_effect(static_cast<uint32_t>(mask));
    }
  } else {
    for (const auto& [mask, weight] : cfg.empirical_weights) {
      total += weight * cell_effect(mask);
    }
  }
  return total;
}

double amce_bruteforce(const AmceConfig& cfg) {
  cfg.validate();
  if (cfg.n_components > kBruteforceMaxDim) {
    std::ostringstream msg;
    msg << "amce_bruteforce: " << cfg.n_components
        << " components exceed the enumeration budget (" << kBruteforceMaxDim
        << ")";
    throw std::invalid_argument(msg.str());
  }
  // Deliberately plain: walk every off-component cell, look its weight up,
  // and accumulate the sigmoid of the reward gap.  This is the reference the
  // production path is compared against, so it shares no summation logic
  // with it.
  const uint64_t cells = uint64_t{1} << (cfg.n_components - 1);
  double total = 0.0;
  for (uint64_t mask = 0; mask < cells; ++mask) {
    double weight;
    if (cfg.marginal == MarginalChoice::kUniform) {
      weight = 1.0 / static_cast<double>(cells);
    } else {
      auto it = cfg.empirical_weights.find(static_cast<uint32_t>(mask));
      weight = it == cfg.empirical_weights.end() ? 0.0 : it->second;
    }
    Vec z1(cfg.n_components);
    Vec z0(cfg.n_components);
    int bit = 0;
    for (int j = 0; j < cfg.n_components; ++j) {
      if (j == cfg.component) {
        z1(j) = 1.0;
        z0(j) = 0.0;
      } else {
        const double v = (mask >> bit) & 1u ? 1.0 : 0.0;
        z1(j) = v;
        z0(j) = v;
        ++bit;
      }
    }
    total += weight * sigmoid_stable(cfg.reward(z1) - cfg.reward(z0));
  }
  return total;
}

LatentReward model_latent_reward(const RewardModel& model,
                                 const EmbeddingMap& map, int t, int c,
                                 uint64_t nuisance_seed) {
  if (map.knobs().sigma_e != 0.0) {
    throw std::invalid_argument(
        "model_latent_reward: embedding map must have sigma_e = 0 so cells "
        "differ only through their latents");
  }
  if (t < 0 || t >= map.n_types()) {
    throw std::invalid_argument("model_latent_reward: prompt type out of range");
  }
  return [&model, map, t, c, nuisance_seed](const Vec& z) {
    // Replaying the same stream for every cell pins the nuisance inputs.
    return model.reward(map(z, t, Rng(nuisance_seed)), c);
  };
}

std::string amce_csv(const std::vector<AmceRow>& rows) {
  std::ostringstream out;
  out << "k,m_choice,amce,oracle_amce,abs_gap\n";
  for (const auto& r : rows) {
    out << r.component << ',' << r.m_choice << ',' << fmt(r.amce) << ','
        << fmt(r.oracle) << ',' << fmt(r.gap) << '\n';
  }
  return out.str();
}

Json amce_metadata() {
  return Json{
      {"estimand_note",
       "sigmoid-based effect: exact when labels are BTL draws, an "
       "approximation for deterministic label rules"},
  };
}

}  // namespace cpl
