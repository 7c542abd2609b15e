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

#include <utility>
#include <vector>

namespace cpl {

// Pairwise-comparison probability model: the chance that the item scoring r
// beats the item scoring r' is sigmoid(r - r').  Adding any constant to both
// scores leaves every probability unchanged, which is why only score
// *differences* are ever meaningful.

// P(first beats second).  Scores must be finite; the difference may span the
// full double range without overflow.
double pref_prob(double r, double r_prime);

// One labelled comparison, stored as the score difference r - r' plus which
// side actually won (0: first, 1: second).
struct LabelledDiff {
  double diff = 0.0;
  int label = 0;
};

// Negative log-likelihood of a batch of labelled comparisons:
// sum of -log sigmoid(winner margin).  Labels outside {0,1} and empty
// batches are hard errors, never coerced.
double btl_nll(const std::vector<LabelledDiff>& batch);

// NLL of a single comparison with the given winner-minus-loser margin:
// -log sigmoid(margin) = softplus(-margin).
double comparison_nll(double margin);

// Analytic gradient of the batch NLL with respect to each difference:
// d/d(diff) = sigmoid(diff) - 1 for label 0, sigmoid(diff) for label 1.
std::vector<double> btl_nll_grad(const std::vector<LabelledDiff>& batch);

// Inverse of pref_prob: the score difference that yields win probability p.
// Requires p strictly inside (0, 1).
double invert_to_reward_diff(double p);

}  // namespace cpl
