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

#include <string>
#include <vector>

namespace cpl {

// A qualitative claim about a metric series over an ordered knob: it rises,
// falls, or stays flat.  Monotone directions are checked pairwise (weakly by
// default, so plateaus caused by seed noise are tolerated) plus a minimum
// endpoint move; `flat-within` ignores direction and bounds the total spread.
enum class TrendDirection { kIncreasing, kDecreasing, kFlatWithin };

struct TrendAssertion {
  TrendDirection direction = TrendDirection::kIncreasing;
  // For monotone directions: the least |last - first| that counts as a trend.
  // For kFlatWithin: the largest allowed max - min.
  double margin = 0.0;
  // Require every consecutive step to move strictly in the direction.
  bool strict = false;
};

struct TrendResult {
  bool pass = false;
  std::string detail;  // which step or endpoint fell short, with numbers
};

// Series must be complete: at least two finite values.
TrendResult assert_trend(const std::vector<double>& series,
                         const TrendAssertion& assertion);

}  // namespace cpl
