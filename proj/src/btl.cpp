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

#include "cpl/btl.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "cpl/autodiff.hpp"

namespace cpl {
namespace {

void require_finite(double r, const char* which) {
  if (!std::isfinite(r)) {
    throw std::invalid_argument(std::string("btl: ") + which + " must be finite");
  }
}

void require_binary(int label) {
  if (label != 0 && label != 1) {
    throw std::invalid_argument("btl: label must be 0 or 1, got " +
                                std::to_string(label));
  }
}

}  // namespace

double pref_prob(double r, double r_prime) {
  require_finite(r, "first score");
  require_finite(r_prime, "second score");
  return sigmoid_stable(r - r_prime);
}

double comparison_nll(double margin) {
  require_finite(margin, "margin");
  return softplus(-margin);
}

double btl_nll(const std::vector<LabelledDiff>& batch) {
  if (batch.empty()) {
    throw std::invalid_argument("btl: empty batch has no likelihood");
  }
  double total = 0.0;
  for (const LabelledDiff& item : batch) {
    require_finite(item.diff, "difference");
    require_binary(item.label);
    double winner_margin = item.label == 0 ? item.diff : -item.diff;
    total += softplus(-winner_margin);
  }
  return total;
}

std::vector<double> btl_nll_grad(const std::vector<LabelledDiff>& batch) {
  if (batch.empty()) {
    throw std::invalid_argument("btl: empty batch has no likelihood");
  }
  std::vector<double> grad(batch.size());
  for (size_t i = 0; i < batch.size(); ++i) {
    require_finite(batch[i].diff, "difference");
    require_binary(batch[i].label);
    // d/dm softplus(-m) = -sigmoid(-m); chain through the label's sign.
    double m = batch[i].label == 0 ? batch[i].diff : -batch[i].diff;
    double d = -sigmoid_stable(-m);
    grad[i] = batch[i].label == 0 ? d : -d;
  }
  return grad;
}

double invert_to_reward_diff(double p) {
  if (!(p > 0.0) || !(p < 1.0)) {
    throw std::invalid_argument(
        "btl: probability must lie strictly in (0, 1), got " + std::to_string(p));
  }
  return std::log(p) - std::log1p(-p);
}

}  // namespace cpl
