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
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "cpl/models.hpp"
#include "cpl/worlds.hpp"

namespace cpl {

// A named, pure, total predicate selecting a subset of a test set.
struct SliceSpec {
  std::string name;
  std::function<bool(const PreferenceExample&)> predicate;
};

SliceSpec slice_all();
SliceSpec slice_consistent();    // prompt type matches the annotator objective
SliceSpec slice_inconsistent();  // prompt type differs from the objective

std::vector<size_t> slice_indices(const Dataset& d, const SliceSpec& slice);

// Scores one side of a comparison; `prime` selects the second response.
// Lets the oracle/coin-flip baselines share the evaluation path with trained
// models.
using RewardFn = std::function<double(const PreferenceExample&, bool prime)>;

// Accuracy of one scorer on one slice.  The predicted label is
// [score(e) < score(e')] — ties predict 0 — and an example counts as correct
// when the prediction equals the recorded label.  `stderr_binomial` is
// sqrt(p(1-p)/n) for this single evaluation.  Integer counts are kept so that
// union accuracies stay exact: correct/n is the only division performed.
struct SliceResult {
  double accuracy = 0.0;
  double stderr_binomial = 0.0;
  size_t correct = 0;
  size_t n = 0;
};

SliceResult accuracy(const RewardFn& score, const Dataset& d,
                     const SliceSpec& slice);
// Batched evaluation of a trained model; same semantics as the RewardFn path.
SliceResult accuracy(const RewardModel& model, const Dataset& d,
                     const SliceSpec& slice);

// ---------------------------------------------------------------------------

// One grid cell: a (variant, knob value, slice) coordinate with the per-seed
// accuracies behind the aggregate.  Accuracies are stored as fractions;
// presentation layers multiply by 100.
struct ReportCell {
  std::string variant;
  double knob = 0.0;
  std::string slice;
  double mean = 0.0;  // mean of per-seed accuracies
  // Standard error of the mean: sample std across seeds / sqrt(#seeds).
  // ("stderr" itself is a cstdio macro, hence the short name.)
  double sem = 0.0;
  size_t n = 0;  // slice size (examples)
  std::vector<double> per_seed;         // aligned with ExperimentReport::seeds
  std::vector<double> per_seed_stderr;  // binomial sqrt(p(1-p)/n) per seed

  bool operator==(const ReportCell&) const = default;
};

// Aggregates per-seed accuracies: mean plus sample-std-based standard error.
// A single seed has no spread, so its binomial stderr is reported instead.
ReportCell aggregate_cell(std::string variant, double knob, std::string slice,
                          const std::vector<SliceResult>& per_seed);

// A full (variant x knob x slice) accuracy grid.  `validate()` enforces that
// every declared coordinate is present exactly once and every statistic is a
// sane probability.
struct ExperimentReport {
  std::string study;
  std::string knob_name;
  std::vector<std::string> variants;
  std::vector<double> knob_values;
  std::vector<std::string> slices;
  std::vector<uint64_t> seeds;
  Json metadata;
  std::vector<ReportCell> cells;

  bool has_cell(const std::string& variant, double knob,
                const std::string& slice) const;
  const ReportCell& cell(const std::string& variant, double knob,
                         const std::string& slice) const;
  void validate() const;

  Json to_json() const;
  static ExperimentReport from_json(const Json& j);

  // One row per (variant, knob, slice, seed).
  std::string to_csv_long() const;
  // One row per (variant, knob, slice), paper-table shaped.
  std::string to_csv_aggregated() const;
  // Human-readable percent table, one block per knob value.
  std::string to_text_table() const;

  bool operator==(const ExperimentReport&) const = default;
};

void save_report(const ExperimentReport& report,
                 const std::filesystem::path& path);
ExperimentReport load_report(const std::filesystem::path& path);

// ---------------------------------------------------------------------------

// Inputs to the report builders: one trained model per grid coordinate and
// seed.  Builders reject grids with missing cells.

struct IdOodCellInput {
  double rho_train = 0.0;
  uint64_t seed = 0;
  const RewardModel* model = nullptr;
};

// Accuracy of each model on its matched test distribution (slice "id",
// rho_test = rho_train) and on a fixed shifted distribution (slice "ood").
// `id_test` is keyed by rho_train.
ExperimentReport id_ood_report(const std::vector<IdOodCellInput>& models,
                               const std::map<double, Dataset>& id_test,
                               const Dataset& ood_test, double ood_rho,
                               const Json& extra_metadata = Json::object());

struct ConsistencyCellInput {
  double rho_conf = 0.0;
  std::string variant;
  uint64_t seed = 0;
  const RewardModel* model = nullptr;
};

// Consistent (t == c) and inconsistent (t != c) slice accuracies per
// (rho_conf, variant).  `test_sets` is keyed by rho_conf.
ExperimentReport consistency_report(
    const std::vector<ConsistencyCellInput>& models,
    const std::map<double, Dataset>& test_sets,
    const Json& extra_metadata = Json::object());

}  // namespace cpl
