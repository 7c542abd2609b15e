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

#include "cpl/trend.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace cpl {
namespace {

std::string num(double x) {
  std::ostringstream out;
  out << x;
  return out.str();
}

}  // namespace

TrendResult assert_trend(const std::vector<double>& series,
                         const TrendAssertion& assertion) {
  if (series.size() < 2) {
    throw std::invalid_argument("trend series needs at least 2 points, got " +
                                std::to_string(series.size()));
  }
  for (double v : series) {
    if (!std::isfinite(v)) {
      throw std::invalid_argument("trend series contains a non-finite value");
    }
  }
  if (!(assertion.margin >= 0.0) || !std::isfinite(assertion.margin)) {
    throw std::invalid_argument("trend margin must be finite and >= 0");
  }

  TrendResult result;
  if (assertion.direction == TrendDirection::kFlatWithin) {
    const auto [lo, hi] = std::minmax_element(series.begin(), series.end());
    const double spread = *hi - *lo;
    result.pass = spread <= assertion.margin;
    result.detail = "spread " + num(spread) + (result.pass ? " <= " : " > ") +
                    num(assertion.margin);
    return result;
  }

  const bool up = assertion.direction == TrendDirection::kIncreasing;
  for (size_t i = 0; i + 1 < series.size(); ++i) {
    const double step = up ? series[i + 1] - series[i]
                           : series[i] - series[i + 1];
    const bool ok = assertion.strict ? step > 0.0 : step >= 0.0;
    if (!ok) {
      result.pass = false;
      result.detail = "step " + std::to_string(i) + "->" +
                      std::to_string(i + 1) + " (" + num(series[i]) + " -> " +
                      num(series[i + 1]) + ") breaks the " +
                      (up ? "increasing" : "decreasing") + " direction";
      return result;
    }
  }
  const double endpoint_move =
      up ? series.back() - series.front() : series.front() - series.back();
  result.pass = endpoint_move >= assertion.margin;
  result.detail = "endpoints " + num(series.front()) + " -> " +
                  num(series.back()) + " move " + num(endpoint_move) +
                  (result.pass ? " >= margin " : " < margin ") +
                  num(assertion.margin);
  return result;
}

}  // namespace cpl
