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

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cpl/linalg.hpp"

namespace cpl {

using Json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// A fully enumerable preference world: finite prompts X, responses Y, and
// annotator objectives C.  Each objective carries a reward table r_c(x, y);
// an assignment policy pi(x, y, y' | c) distributes comparisons (ordered
// pairs of *distinct* responses) per objective; labels are drawn as
// L ~ Bernoulli(sigmoid(r_c(x,y) - r_c(x,y'))), so here L = 1 means the first
// response wins.  Because everything is finite, the expected label of every
// comparison has a closed form and sampling-based estimators can be checked
// against exact truth.

// One real number per ordered triple (x, y, y').
struct TripleTable {
  int n_x = 0, n_y = 0;
  std::vector<double> v;

  TripleTable() = default;
  TripleTable(int nx, int ny)
      : n_x(nx), n_y(ny),
        v(static_cast<size_t>(nx) * ny * ny, 0.0) {}

  double& at(int x, int y, int yp) {
    return v[(static_cast<size_t>(x) * n_y + y) * n_y + yp];
  }
  double at(int x, int y, int yp) const {
    return v[(static_cast<size_t>(x) * n_y + y) * n_y + yp];
  }
  bool operator==(const TripleTable&) const = default;
};

// Coarsening of prompt-response pairs: a prompt-only part zx = g_x(x) and a
// treatment part zt = g_t(x, y).  Distinct raw pairs may share a latent
// image, which is what lets latent-conditioned estimates generalize to raw
// triples never assigned by pi.
struct LatentMap {
  int n_zx = 0, n_zt = 0;
  std::vector<int> zx_of_x;               // size n_x
  std::vector<std::vector<int>> zt_of_xy;  // [x][y]

  bool operator==(const LatentMap&) const = default;
};

struct FiniteWorld {
  int n_x = 0, n_y = 0, n_c = 0;
  Vec p_c;                      // P(C = c)
  std::vector<Mat> reward;      // reward[c] is n_x x n_y
  std::vector<TripleTable> pi;  // pi[c](x, y, y'); zero on y == y'

  // When set, records that pi was built from independent response draws:
  // pi(x, y, y' | c) = p_x(x) q(y|x) q(y'|x) / (1 - sum_y q(y|x)^2) for
  // y != y', identically across c.  validate() recomputes and compares.
  struct IndependentResponses {
    Vec p_x;  // prompt marginal
    Mat q;    // q(y | x), n_x x n_y
  };
  std::optional<IndependentResponses> independent_responses;

  std::optional<LatentMap> latent;

  void validate() const;  // throws invalid_argument naming the bad table
  Json to_json() const;
  static FiniteWorld from_json(const Json& j);
};

// pi built from the declared independent-response construction.
TripleTable pair_independent_pi(const Vec& p_x, const Mat& q);

void save_finite_world(const FiniteWorld& w, const std::filesystem::path& path);
FiniteWorld load_finite_world(const std::filesystem::path& path);

// Ready-made worlds -----------------------------------------------------------

// One prompt, two responses {a, b}, two objectives with opposed rewards
// r_0 = (a:1, b:0), r_1 = (a:0, b:1), P(C) uniform.  Unconfounded assignment
// shows both orderings to both objectives; confounded assignment shows (a,b)
// only to objective 0 and (b,a) only to objective 1, which biases the naive
// pooled estimate of E[L | a vs b] from 0.5 up to sigmoid(1).
FiniteWorld two_response_micro_world(bool confounded_assignment);

// 3 prompts x 3 responses x 2 objectives with seed-randomized assignment:
// prompt and response weights jitter around uniform, responses are drawn
// independently given the prompt, and the policy ignores C.  Rewards are
// well-separated level permutations per prompt (objective 1 rescales
// objective 0), so every comparison's expected label sits away from 1/2.
FiniteWorld randomized_assignment_world(uint64_t seed);

// Single-objective world where the latent map is non-injective: two prompts
// share zx, and two of x0's responses share a treatment latent.  pi holds
// out the raw triple (x1, y0, y1) — its latent cell is still covered through
// x0 — and assigns zero mass to every comparison involving x1's y2, leaving
// all latent cells that touch zt = 2 with zero propensity.
FiniteWorld shared_latent_world();

// ---------------------------------------------------------------------------

struct OutcomeTable {
  int n_c = 0;
  TripleTable marginal;                  // E[L(x; y, y')] = sum_c P(c) sigmoid(dr_c)
  std::vector<TripleTable> conditional;  // E[L(x; y, y') | C = c] = sigmoid(dr_c)
  TripleTable propensity;                // P(X=x, Y=y, Y'=y') marginal over C
  std::vector<TripleTable> propensity_c;  // pi(x, y, y' | c)

  std::string to_csv() const;
};

// Exact, closed-form tables; no sampling.
OutcomeTable enumerate_potential_outcomes(const FiniteWorld& w);

// Triples (x, y, y') whose conditional expected label differs across
// objectives — the enumerable footprint of reward heterogeneity.
std::vector<std::array<int, 3>> heterogeneous_triples(const FiniteWorld& w,
                                                      const OutcomeTable& t);

// ---------------------------------------------------------------------------

struct CausalSample {
  int x = 0, y = 0, yp = 0, c = 0;
  int label = 0;  // 1: first response preferred
};

// n draws of (c, triple, label); deterministic per seed.
std::vector<CausalSample> simulate_preferences(const FiniteWorld& w, size_t n,
                                               uint64_t seed);

// What the plug-in estimator conditions on: the raw triple or its latent
// image, each either marginally or additionally given the objective.
enum class Conditioning {
  kRawMarginal,
  kRawGivenC,
  kLatentMarginal,
  kLatentGivenC,
};

struct PluginCell {
  double mean = 0.0;  // meaningful only when count > 0
  size_t count = 0;
};

// Empirical conditional means over every cell of the conditioning domain.
// Cells the samples never hit keep count = 0 and are listed by
// zero_support(); estimate() refuses to read them — no imputation.
struct PluginTable {
  Conditioning conditioning = Conditioning::kRawMarginal;
  // Key: {x, y, y', c} for raw, {zx, zt, zt', c} for latent; c = -1 in the
  // marginal variants.
  std::map<std::array<int, 4>, PluginCell> cells;

  const PluginCell& cell(int a, int b, int d, int c = -1) const;
  double estimate(int a, int b, int d, int c = -1) const;
  std::vector<std::array<int, 4>> zero_support() const;
  std::string to_csv() const;
};

PluginTable plugin_estimator(const FiniteWorld& w,
                             const std::vector<CausalSample>& samples,
                             Conditioning cond);

// ---------------------------------------------------------------------------
// Identification checks: do empirical conditional means recover the
// enumerated potential outcomes?  Assumption prechecks run first and are
// reported separately from estimation quality, so a world that violates its
// assumptions is never confused with an estimator that missed its tolerance.

struct CellCheck {
  std::string cell;
  double truth = 0.0;
  double estimate = 0.0;
  double tolerance = 0.0;
  size_t count = 0;
  bool ok = false;
  bool withheld = false;  // zero-propensity cell: no estimate to check
};

struct IdentificationReport {
  bool assumptions_ok = false;
  std::vector<std::string> assumption_failures;
  bool pass = false;  // all checked cells within tolerance (assumptions_ok only)
  double worst_abs_error = 0.0;
  std::string worst_cell;
  std::vector<CellCheck> checks;
  std::vector<std::string> flagged_cells;  // zero-propensity latent cells
  size_t n = 0;
  uint64_t seed = 0;

  Json to_json() const;
  std::string to_csv() const;
};

// Raw-triple identification under randomized assignment: prechecks that pi
// has full support over distinct pairs (non-deterministic assignment) and
// does not depend on C, then compares Ê[L | x, y, y'] against the enumerated
// marginal for every triple.  `tolerance` defaults to 3 binomial standard
// errors at each cell's observed count.
IdentificationReport verify_raw_identification(
    const FiniteWorld& w, size_t n, uint64_t seed,
    std::optional<double> tolerance = std::nullopt);

// Latent-cell identification: prechecks that rewards factor through the
// latent map (cells mixing different rewards are named) and that pi ignores
// C, flags zero-propensity latent cells, then compares Ê[L | zx, zt, zt']
// against the enumerated marginal of *every* raw triple mapping into the
// cell — including triples pi never assigns.
IdentificationReport verify_latent_identification(
    const FiniteWorld& w, size_t n, uint64_t seed,
    std::optional<double> tolerance = std::nullopt);

// Max |Ê - E| over supported raw-marginal cells (distinct pairs only).
double max_raw_error(const FiniteWorld& w, const OutcomeTable& truth,
                     const PluginTable& raw_marginal);

// Logit of the empirical mean for one triple: recovers r(x,y) - r(x,y') in a
// single-objective world.  Rejects multi-objective worlds, unsupported
// triples, and empirical means of exactly 0 or 1 (logit undefined).
double recover_reward_difference(const FiniteWorld& w,
                                 const std::vector<CausalSample>& samples,
                                 int x, int y, int yp);

}  // namespace cpl
