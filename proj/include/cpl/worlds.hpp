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
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cpl/linalg.hpp"
#include "cpl/rng.hpp"

namespace cpl {

using Json = nlohmann::ordered_json;

// One pairwise comparison: two response embeddings for the same prompt, the
// annotator's objective, the prompt type, and which response won.  Generated
// data also carries the ground-truth latents each response was built from;
// imported data may not.
struct PreferenceExample {
  int64_t id = 0;
  Vec e, e_prime;   // what models see
  int c = 0;        // annotator objective
  int t = 0;        // prompt type
  int label = 0;    // 0: first response preferred, 1: second
  Vec z, z_prime;   // ground-truth latents; empty when unavailable
};

struct Dataset {
  std::vector<PreferenceExample> examples;
  Json meta;  // world configuration, seed, and generation diagnostics

  size_t size() const { return examples.size(); }
  int embed_dim() const {
    return examples.empty() ? 0 : static_cast<int>(examples.front().e.size());
  }
  bool has_ground_truth() const;
};

// How true rewards become labels.  The deterministic rule makes the Bayes
// accuracy of a world computable; the BTL rule draws ell ~ Bernoulli of the
// losing probability, giving likelihood-consistent label noise.
enum class LabelRule { kDeterministicTieBreak, kBtlSample };

// Deterministic rule: higher reward wins, exact ties fall to a fair coin
// from the caller's stream.
int assign_label(double r, double r_prime, Rng& tie_stream);
// BTL rule: P(label = 0) = sigmoid(r - r').
int assign_label_btl(double r, double r_prime, Rng& stream);

// Knobs shared by every world that synthesizes embeddings.
struct EmbeddingKnobs {
  int embed_dim = 64;
  int noise_dims = 8;          // nuisance inputs mixed into every embedding
  double type_gain = 2.0;      // weight on the prompt-type one-hot
  double sigma_e = 0.1;        // additive output noise
  double mixing_scale = 0.25;  // scale of the random mixing matrix
};

// Fixed random map from (latents, prompt type, nuisance noise) to an
// observation-space embedding:
//
//   e = tanh(A [z; onehot(t) * gain; eta]) + eps,  eta ~ N(0,1), eps ~ N(0, sigma_e^2)
//
// A is drawn once per world.  Coordinates are quantized to a 1e-6 grid so
// serialized datasets stay compact and round-trip bit-exactly.
class EmbeddingMap {
 public:
  EmbeddingMap() = default;
  static EmbeddingMap create(int z_dim, int n_types, const EmbeddingKnobs& knobs,
                             Rng stream);

  Vec operator()(const Vec& z, int t, Rng example_stream) const;

  int embed_dim() const { return static_cast<int>(a_.rows()); }
  int z_dim() const { return z_dim_; }
  int n_types() const { return n_types_; }
  const Mat& mixing() const { return a_; }
  const EmbeddingKnobs& knobs() const { return knobs_; }

 private:
  Mat a_;
  int z_dim_ = 0;
  int n_types_ = 0;
  EmbeddingKnobs knobs_;
};

// Free-function spelling of the embedding synthesis, for callers that hold a
// map and want the example stream derivation in one place.
Vec synth_embedding(const EmbeddingMap& map, const Vec& z, int t,
                    Rng example_stream);

// ---------------------------------------------------------------------------
// UltraFeedback-style world: each response carries scores on two quality
// axes, clipped to the [0,5] rating scale, and the annotator's reward is a
// fixed mixture alpha*z1 + (1-alpha)*z2.  The generator controls the
// correlation between the two axes' score differences (delta_k = z_k - z'_k)
// via a Gaussian copula whose parameter is solved by bisection so the
// post-clipping empirical correlation lands on target.  Shifting the target
// between train and test produces the ID vs OOD structure of the robustness
// study.

struct UltrafeedbackConfig {
  int n = 10000;
  double rho = 0.0;     // target corr(delta_1, delta_2), within [-0.95, 0.95]
  double alpha = 0.25;  // reward mixing weight on the first axis
  double score_mean = 2.5;
  double score_std = 1.25;
  double score_min = 0.0;
  double score_max = 5.0;
  LabelRule labels = LabelRule::kDeterministicTieBreak;
  EmbeddingKnobs emb;
  uint64_t seed = 0;
  // Seed for the latent-to-embedding map only.  Datasets whose configs share
  // map_seed (and emb) live in the same observation space even when their
  // example seeds differ -- required whenever one model sees several
  // datasets (train vs shifted test, probe sets).  Unset: derived from seed,
  // so each dataset gets its own private map.
  std::optional<uint64_t> map_seed;
};

// Annotator reward for a 2-axis score vector.
double ultrafeedback_reward(const Vec& z, double alpha);

// The exact embedding map sample_ultrafeedback_world(cfg) applies, exposed
// so callers can embed probe latents into a dataset's observation space.
EmbeddingMap ultrafeedback_embedding_map(const UltrafeedbackConfig& cfg);

Dataset sample_ultrafeedback_world(const UltrafeedbackConfig& cfg);

// Solves for the pre-clipping Gaussian correlation whose post-clipping score
// differences attain cfg.rho empirically.  Exposed for tests; throws with a
// diagnostic when the target is unattainable under the clipping bounds.
double solve_ultrafeedback_copula(const UltrafeedbackConfig& cfg, Rng probe_stream);

// ---------------------------------------------------------------------------
// Confounded world: two prompt types, two annotator objectives.  The prompt
// type equals the annotator's objective with probability rho_conf, so at
// rho_conf = 1 the type reveals the objective exactly and at 0.5 they are
// independent.  Each response's latent quality has one axis per objective;
// the axis matching the prompt type varies on a larger scale than the other,
// and the two axes are negatively correlated (a response that serves one
// objective tends to serve the other less well).  The annotator's reward is
// the axis named by their objective: r_0 = z[0], r_1 = z[1].

struct ConfoundedConfig {
  int n = 10000;
  double rho_conf = 0.5;       // P(type == objective), within [0.5, 1.0]
  double latent_corr = -0.5;   // corr between the two quality axes
  double scale_aligned = 1.0;  // std of the axis matching the prompt type
  double scale_off = 0.2;      // std of the other axis
  // Gain on the objective-indexed view of the latents inside the
  // observation; the type-aligned view always enters at full strength.
  double content_gain = 0.5;
  LabelRule labels = LabelRule::kDeterministicTieBreak;
  EmbeddingKnobs emb;
  uint64_t seed = 0;
  std::optional<uint64_t> map_seed;  // see UltrafeedbackConfig::map_seed
};

double confounded_reward(const Vec& z, int c);  // z[c]

EmbeddingMap confounded_embedding_map(const ConfoundedConfig& cfg);

Dataset sample_confounded_world(const ConfoundedConfig& cfg);

// ---------------------------------------------------------------------------
// Non-additive world: a binary prompt feature picks which concave parabola
// scores the response's scalar latent, so reward differences depend on the
// prompt feature in a way no additive model can express.  Embeddings are the
// raw latents [z_x, z_t], making this world a direct probe of whether a
// model exploits prompt-conditional reward structure.

struct NonadditiveConfig {
  int n = 10000;
  double beta0 = -1.0;
  double beta1 = -1.0;
  double gamma0 = 0.8;  // must exceed gamma1
  double gamma1 = 0.3;
  LabelRule labels = LabelRule::kDeterministicTieBreak;
  uint64_t seed = 0;
};

// z = [prompt feature, response latent]
double nonadditive_reward(const Vec& z, const NonadditiveConfig& cfg);

Dataset nonadditive_world(const NonadditiveConfig& cfg);

// ---------------------------------------------------------------------------

struct SplitFractions {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

struct Splits {
  Dataset train, val, test;
};

// Disjoint, exhaustive, seeded shuffle-then-slice split.  Fractions must be
// non-negative and sum to 1.
Splits make_splits(const Dataset& d, SplitFractions fractions, uint64_t seed);

}  // namespace cpl
