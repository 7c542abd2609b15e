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
#include <string>
#include <vector>

#include "cpl/linalg.hpp"
#include "cpl/rng.hpp"

namespace cpl {

// ---------------------------------------------------------------------------
// A tractable two-objective preference model.  Each comparison carries a pair
// of latent score differences (d1, d2) drawn from a bivariate standard normal
// with correlation rho; d1 and d2 are the margins the two objectives assign
// to "first response minus second response".  An annotator labels the pair by
// the sign of the weighted margin alpha * d1 + (1 - alpha) * d2, so label 0
// means the first response wins.  Because the joint law is Gaussian, the
// probability that the two objectives disagree about the winner has a closed
// form, which anchors every Monte Carlo estimate in this module.

struct DeltaModel {
  double rho = 0.0;     // correlation between the two score differences
  double alpha = 0.25;  // labeling weight on the first objective
  // Rejects |rho| >= 1 and alpha outside [0, 1].  Variances are fixed at 1.
  void validate() const;
};

// P(sign(d1) != sign(d2)) under the correlated Gaussian pair:
// 1/2 - asin(rho) / pi.  Rejects |rho| >= 1.  Exactly 0.5 at rho = 0.
double opposite_sign_probability(double rho);

// n independent draws of (d1, d2), one per row, generated from the Cholesky
// factor [[1, 0], [rho, sqrt(1 - rho^2)]] applied to unit normals.  n must be
// positive and |rho| < 1.
Mat simulate_delta(double rho, size_t n, uint64_t seed);

// Label for one draw: 0 when alpha * d1 + (1 - alpha) * d2 > 0, 1 when it is
// negative, and a fair coin from `rng` exactly on the boundary.  The decision
// boundary is the line through the origin with slope -alpha / (1 - alpha).
int label_delta(double d1, double d2, double alpha, Rng& rng);

// Applies label_delta to every row of an n x 2 draw matrix.
std::vector<int> label_deltas(const Mat& delta, double alpha, Rng& rng);

// Negative log-likelihood of the labels under the one-parameter margin
// a * d1_i + (1 - a) * d2_i, standardized to unit scale by the sample second
// moment of the draws.  Standardizing makes the likelihood compare decision
// boundaries rather than margin magnitudes — unstandardized, the likelihood
// of deterministic labels grows with the weight vector's length and drags the
// fit onto an endpoint no matter where the labels came from.  Rejects samples
// whose draws span less than two dimensions.
double alpha_nll(const Mat& delta, const std::vector<int>& labels, double a);

// Maximum-likelihood labeling weight: the a in [0, 1] minimizing alpha_nll,
// located by golden-section search down to an interval of width `tol` (the
// objective has a single valley; every generated sample is re-checked for
// this by a grid scan in the test battery).  Rejects empty or degenerate
// batches, mismatched sizes, labels outside {0, 1}, and batches whose labels
// are all identical (the optimum then sits on a boundary with no interior
// evidence).
double fit_alpha(const Mat& delta, const std::vector<int>& labels,
                 double tol = 1e-6);

// Outcome of scoring a fitted weight on fresh draws from a (possibly shifted)
// correlation.  Errors are split by whether the two objectives agreed on the
// draw: when they agree, every weight in [0, 1] picks the same winner, so all
// disagreement between alpha_hat and alpha is confined to the mixed-sign
// wedge.
struct ShiftEval {
  double accuracy = 0.0;
  size_t n = 0;
  size_t errors_same_sign = 0;   // d1 and d2 share a sign: should stay 0
  size_t errors_mixed_sign = 0;  // d1 and d2 disagree
};

// Draws n pairs at rho_test, labels them with the true weight alpha, predicts
// with alpha_hat, and tallies agreement.
ShiftEval accuracy_under_shift(double alpha_hat, double alpha, double rho_test,
                               size_t n, uint64_t seed);

// ---------------------------------------------------------------------------
// Study driver: one row per correlation value, comparing the closed form
// against Monte Carlo and summarizing the spread of refitted weights.

struct GaussianStudyConfig {
  std::vector<double> rhos;  // grid of correlations, each in (-1, 1)
  double alpha = 0.25;       // true labeling weight
  size_t n_mc = 1000000;     // draws per opposite-sign Monte Carlo estimate
  size_t n_fit = 5000;       // draws per weight refit
  int fit_reps = 50;         // refit replications per row (>= 2 for variance)
  uint64_t seed = 0;
  int jobs = 1;
  void validate() const;
};

struct GaussianStudyRow {
  double rho = 0.0;
  double closed_form = 0.0;    // opposite_sign_probability(rho)
  double mc_estimate = 0.0;    // empirical opposite-sign fraction
  size_t mc_n = 0;
  double alpha_hat_mean = 0.0;
  double alpha_hat_var = 0.0;  // sample variance across replications
  int fit_reps = 0;
};

// Runs every row of the grid.  Rows (and the replications inside them) derive
// their streams from the root seed by name and index, so the output is
// byte-identical for any jobs count.
std::vector<GaussianStudyRow> run_gaussian_study(const GaussianStudyConfig&);

// CSV with header rho,closed_form,mc_estimate,mc_n,alpha_hat_mean,
// alpha_hat_var,fit_reps; numbers use shortest round-trip formatting.
std::string gaussian_study_csv(const std::vector<GaussianStudyRow>& rows);

}  // namespace cpl
