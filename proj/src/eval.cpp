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

#include "cpl/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace cpl {
namespace {

std::string fmt(double x) { return Json(x).dump(); }

// One "CxS.S" block per number keeps the text table column-aligned.
std::string percent(double frac, double sem_frac) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%5.1f +- %.1f", frac * 100.0,
                sem_frac * 100.0);
  return buf;
}

std::string aggregation_note() {
  return "cell mean = mean of per-seed accuracies; stderr = sample std across "
         "seeds / sqrt(#seeds); single-seed cells report the per-seed binomial "
         "stderr sqrt(p(1-p)/n); accuracies are fractions (multiply by 100 for "
         "percent)";
}

}  // namespace

SliceSpec slice_all() {
  return {"all", [](const PreferenceExample&) { return true; }};
}

SliceSpec slice_consistent() {
  return {"consistent", [](const PreferenceExample& x) { return x.t == x.c; }};
}

SliceSpec slice_inconsistent() {
  return {"inconsistent", [](const PreferenceExample& x) { return x.t != x.c; }};
}

std::vector<size_t> slice_indices(const Dataset& d, const SliceSpec& slice) {
  if (!slice.predicate) {
    throw std::invalid_argument("slice '" + slice.name + "' has no predicate");
  }
  std::vector<size_t> idx;
  for (size_t i = 0; i < d.examples.size(); ++i) {
    if (slice.predicate(d.examples[i])) idx.push_back(i);
  }
  return idx;
}

namespace {

SliceResult finish(size_t correct, size_t n) {
  SliceResult r;
  r.correct = correct;
  r.n = n;
  r.accuracy = static_cast<double>(correct) / static_cast<double>(n);
  r.stderr_binomial =
      std::sqrt(r.accuracy * (1.0 - r.accuracy) / static_cast<double>(n));
  return r;
}

}  // namespace

SliceResult accuracy(const RewardFn& score, const Dataset& d,
                     const SliceSpec& slice) {
  const auto idx = slice_indices(d, slice);
  if (idx.empty()) {
    throw std::invalid_argument("slice '" + slice.name +
                                "' selects no examples");
  }
  size_t correct = 0;
  for (size_t i : idx) {
    const auto& x = d.examples[i];
    const int predicted = score(x, false) < score(x, true) ? 1 : 0;
    if (predicted == x.label) ++correct;
  }
  return finish(correct, idx.size());
}

SliceResult accuracy(const RewardModel& model, const Dataset& d,
                     const SliceSpec& slice) {
  const auto idx = slice_indices(d, slice);
  if (idx.empty()) {
    throw std::invalid_argument("slice '" + slice.name +
                                "' selects no examples");
  }
  const Batch b = make_batch(d, idx);
  const Vec r = model.reward_batch(b.e, b.c);
  const Vec rp = model.reward_batch(b.e_prime, b.c);
  size_t correct = 0;
  for (size_t i = 0; i < idx.size(); ++i) {
    const int predicted = r(static_cast<int>(i)) < rp(static_cast<int>(i)) ? 1 : 0;
    if (predicted == b.label[i]) ++correct;
  }
  return finish(correct, idx.size());
}

ReportCell aggregate_cell(std::string variant, double knob, std::string slice,
                          const std::vector<SliceResult>& per_seed) {
  if (per_seed.empty()) {
    throw std::invalid_argument("aggregate_cell: no per-seed results");
  }
  ReportCell cell;
  cell.variant = std::move(variant);
  cell.knob = knob;
  cell.slice = std::move(slice);
  cell.n = per_seed.front().n;
  for (const auto& r : per_seed) {
    if (r.n != cell.n) {
      throw std::invalid_argument(
          "aggregate_cell: slice size differs across seeds");
    }
    cell.per_seed.push_back(r.accuracy);
    cell.per_seed_stderr.push_back(r.stderr_binomial);
  }
  const size_t k = per_seed.size();
  double sum = 0.0;
  for (double a : cell.per_seed) sum += a;
  cell.mean = sum / static_cast<double>(k);
  if (k == 1) {
    // No spread to estimate from one seed; fall back to the binomial stderr.
    cell.sem = per_seed.front().stderr_binomial;
  } else {
    double ss = 0.0;
    for (double a : cell.per_seed) ss += (a - cell.mean) * (a - cell.mean);
    cell.sem = std::sqrt(ss / static_cast<double>(k - 1)) /
               std::sqrt(static_cast<double>(k));
  }
  return cell;
}

bool ExperimentReport::has_cell(const std::string& variant, double knob,
                                const std::string& slice) const {
  for (const auto& c : cells) {
    if (c.variant == variant && c.knob == knob && c.slice == slice) return true;
  }
  return false;
}

const ReportCell& ExperimentReport::cell(const std::string& variant,
                                         double knob,
                                         const std::string& slice) const {
  for (const auto& c : cells) {
    if (c.variant == variant && c.knob == knob && c.slice == slice) return c;
  }
  throw std::out_of_range("report '" + study + "': no cell (" + variant + ", " +
                          fmt(knob) + ", " + slice + ")");
}

void ExperimentReport::validate() const {
  if (variants.empty() || knob_values.empty() || slices.empty()) {
    throw std::invalid_argument("report '" + study +
                                "': empty grid declaration");
  }
  if (seeds.empty()) {
    throw std::invalid_argument("report '" + study + "': no seeds");
  }
  const size_t expected = variants.size() * knob_values.size() * slices.size();
  if (cells.size() != expected) {
    throw std::invalid_argument(
        "report '" + study + "': " + std::to_string(cells.size()) +
        " cells, expected " + std::to_string(expected));
  }
  for (const auto& v : variants) {
    for (double k : knob_values) {
      for (const auto& s : slices) {
        if (!has_cell(v, k, s)) {
          throw std::invalid_argument("report '" + study + "': missing cell (" +
                                      v + ", " + fmt(k) + ", " + s + ")");
        }
      }
    }
  }
  for (const auto& c : cells) {
    const std::string where =
        " in cell (" + c.variant + ", " + fmt(c.knob) + ", " + c.slice + ")";
    if (!(c.mean >= 0.0 && c.mean <= 1.0)) {
      throw std::invalid_argument("report '" + study + "': accuracy " +
                                  fmt(c.mean) + " outside [0,1]" + where);
    }
    if (!(c.sem >= 0.0) || !std::isfinite(c.sem)) {
      throw std::invalid_argument("report '" + study + "': bad stderr" + where);
    }
    if (c.n == 0) {
      throw std::invalid_argument("report '" + study + "': empty slice" + where);
    }
    if (c.per_seed.size() != seeds.size() ||
        c.per_seed_stderr.size() != seeds.size()) {
      throw std::invalid_argument("report '" + study +
                                  "': per-seed vector length mismatch" + where);
    }
    for (double a : c.per_seed) {
      if (!(a >= 0.0 && a <= 1.0)) {
        throw std::invalid_argument("report '" + study +
                                    "': per-seed accuracy outside [0,1]" + where);
      }
    }
  }
}

Json ExperimentReport::to_json() const {
  Json cells_json = Json::array();
  for (const auto& c : cells) {
    cells_json.push_back(Json{{"variant", c.variant},
                              {"knob", c.knob},
                              {"slice", c.slice},
                              {"mean", c.mean},
                              {"stderr", c.sem},
                              {"n", c.n},
                              {"per_seed", c.per_seed},
                              {"per_seed_stderr", c.per_seed_stderr}});
  }
  return Json{{"format", "cpl-report"},
              {"study", study},
              {"knob_name", knob_name},
              {"variants", variants},
              {"knob_values", knob_values},
              {"slices", slices},
              {"seeds", seeds},
              {"metadata", metadata},
              {"cells", cells_json}};
}

ExperimentReport ExperimentReport::from_json(const Json& j) {
  if (!j.is_object() || j.value("format", "") != "cpl-report") {
    throw std::invalid_argument("not a report JSON (missing format tag)");
  }
  ExperimentReport r;
  r.study = j.at("study").get<std::string>();
  r.knob_name = j.at("knob_name").get<std::string>();
  r.variants = j.at("variants").get<std::vector<std::string>>();
  r.knob_values = j.at("knob_values").get<std::vector<double>>();
  r.slices = j.at("slices").get<std::vector<std::string>>();
  r.seeds = j.at("seeds").get<std::vector<uint64_t>>();
  r.metadata = j.at("metadata");
  for (const auto& cj : j.at("cells")) {
    ReportCell c;
    c.variant = cj.at("variant").get<std::string>();
    c.knob = cj.at("knob").get<double>();
    c.slice = cj.at("slice").get<std::string>();
    c.mean = cj.at("mean").get<double>();
    c.sem = cj.at("stderr").get<double>();
    c.n = cj.at("n").get<size_t>();
    c.per_seed = cj.at("per_seed").get<std::vector<double>>();
    c.per_seed_stderr = cj.at("per_seed_stderr").get<std::vector<double>>();
    r.cells.push_back(std::move(c));
  }
  r.validate();
  return r;
}

std::string ExperimentReport::to_csv_long() const {
  std::ostringstream out;
  out << "variant,knob,slice,seed,accuracy,stderr,n\n";
  for (const auto& c : cells) {
    for (size_t si = 0; si < seeds.size(); ++si) {
      out << c.variant << ',' << fmt(c.knob) << ',' << c.slice << ','
          << seeds[si] << ',' << fmt(c.per_seed[si]) << ','
          << fmt(c.per_seed_stderr[si]) << ',' << c.n << '\n';
    }
  }
  return out.str();
}

std::string ExperimentReport::to_csv_aggregated() const {
  std::ostringstream out;
  out << "variant,knob,slice,mean,stderr,n,seeds\n";
  for (const auto& c : cells) {
    out << c.variant << ',' << fmt(c.knob) << ',' << c.slice << ','
        << fmt(c.mean) << ',' << fmt(c.sem) << ',' << c.n << ','
        << seeds.size() << '\n';
  }
  return out.str();
}

std::string ExperimentReport::to_text_table() const {
  std::ostringstream out;
  out << "study: " << study << "  (accuracy %, mean +- stderr over "
      << seeds.size() << " seed" << (seeds.size() == 1 ? "" : "s") << ")\n";
  for (double k : knob_values) {
    out << "\n" << knob_name << " = " << fmt(k) << "\n";
    size_t width = 0;
    for (const auto& v : variants) width = std::max(width, v.size());
    out << std::string(width, ' ');
    for (const auto& s : slices) out << "  " << s;
    out << "\n";
    for (const auto& v : variants) {
      out << v << std::string(width - v.size(), ' ');
      for (const auto& s : slices) {
        const auto& c = cell(v, k, s);
        std::string block = percent(c.mean, c.sem);
        // Right-align under the slice header.
        size_t col = std::max(s.size(), block.size());
        out << "  " << std::string(col - block.size(), ' ') << block;
      }
      out << "\n";
    }
  }
  return out.str();
}

void save_report(const ExperimentReport& report,
                 const std::filesystem::path& path) {
  report.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot open " + path.string() + " for writing");
  }
  out << report.to_json().dump(2) << "\n";
}

ExperimentReport load_report(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot open " + path.string());
  }
  Json j = Json::parse(in);
  return ExperimentReport::from_json(j);
}

// ---------------------------------------------------------------------------

ExperimentReport id_ood_report(const std::vector<IdOodCellInput>& models,
                               const std::map<double, Dataset>& id_test,
                               const Dataset& ood_test, double ood_rho,
                               const Json& extra_metadata) {
  if (models.empty()) {
    throw std::invalid_argument("id_ood_report: no models");
  }
  std::set<double> rho_set;
  std::set<uint64_t> seed_set;
  std::string variant;
  for (const auto& m : models) {
    if (m.model == nullptr) {
      throw std::invalid_argument("id_ood_report: null model pointer");
    }
    rho_set.insert(m.rho_train);
    seed_set.insert(m.seed);
    const std::string v = variant_name(m.model->spec().variant);
    if (variant.empty()) {
      variant = v;
    } else if (variant != v) {
      throw std::invalid_argument(
          "id_ood_report: mixed architectures (" + variant + " vs " + v +
          "); the grid holds one architecture across rho_train");
    }
  }

  // The declared grid is the cross product; find each model exactly once.
  auto find_model = [&](double rho, uint64_t seed) -> const RewardModel* {
    const RewardModel* found = nullptr;
    for (const auto& m : models) {
      if (m.rho_train == rho && m.seed == seed) {
        if (found != nullptr) {
          throw std::invalid_argument(
              "id_ood_report: duplicate model for rho_train=" + fmt(rho) +
              " seed=" + std::to_string(seed));
        }
        found = m.model;
      }
    }
    if (found == nullptr) {
      throw std::invalid_argument("id_ood_report: missing model for rho_train=" +
                                  fmt(rho) + " seed=" + std::to_string(seed));
    }
    return found;
  };

  ExperimentReport report;
  report.study = "id-ood";
  report.knob_name = "rho_train";
  report.variants = {variant};
  report.knob_values.assign(rho_set.begin(), rho_set.end());
  report.slices = {"id", "ood"};
  report.seeds.assign(seed_set.begin(), seed_set.end());

  const SliceSpec whole = slice_all();
  for (double rho : report.knob_values) {
    auto it = id_test.find(rho);
    if (it == id_test.end()) {
      throw std::invalid_argument(
          "id_ood_report: no in-distribution test set for rho_train=" +
          fmt(rho));
    }
    std::vector<SliceResult> id_runs, ood_runs;
    for (uint64_t seed : report.seeds) {
      const RewardModel* model = find_model(rho, seed);
      id_runs.push_back(accuracy(*model, it->second, whole));
      ood_runs.push_back(accuracy(*model, ood_test, whole));
    }
    report.cells.push_back(aggregate_cell(variant, rho, "id", id_runs));
    report.cells.push_back(aggregate_cell(variant, rho, "ood", ood_runs));
  }

  report.metadata = extra_metadata.is_object() ? extra_metadata : Json::object();
  report.metadata["aggregation"] = aggregation_note();
  report.metadata["slice_meaning"] =
      Json{{"id", "test distribution matches the training correlation"},
           {"ood", "fixed shifted test distribution"}};
  report.metadata["ood_rho"] = ood_rho;
  report.metadata["ood_test_n"] = ood_test.size();
  report.validate();
  return report;
}

ExperimentReport consistency_report(
    const std::vector<ConsistencyCellInput>& models,
    const std::map<double, Dataset>& test_sets, const Json& extra_metadata) {
  if (models.empty()) {
    throw std::invalid_argument("consistency_report: no models");
  }
  std::set<double> rho_set;
  std::set<uint64_t> seed_set;
  std::set<Variant> variant_set;
  for (const auto& m : models) {
    if (m.model == nullptr) {
      throw std::invalid_argument("consistency_report: null model pointer");
    }
    rho_set.insert(m.rho_conf);
    seed_set.insert(m.seed);
    variant_set.insert(variant_from_name(m.variant));
  }

  auto find_model = [&](double rho, const std::string& variant,
                        uint64_t seed) -> const RewardModel* {
    const RewardModel* found = nullptr;
    for (const auto& m : models) {
      if (m.rho_conf == rho && m.variant == variant && m.seed == seed) {
        if (found != nullptr) {
          throw std::invalid_argument(
              "consistency_report: duplicate model for rho_conf=" + fmt(rho) +
              " variant=" + variant + " seed=" + std::to_string(seed));
        }
        found = m.model;
      }
    }
    if (found == nullptr) {
      throw std::invalid_argument(
          "consistency_report: missing model for rho_conf=" + fmt(rho) +
          " variant=" + variant + " seed=" + std::to_string(seed));
    }
    return found;
  };

  ExperimentReport report;
  report.study = "consistency";
  report.knob_name = "rho_conf";
  for (Variant v : variant_set) report.variants.push_back(variant_name(v));
  report.knob_values.assign(rho_set.begin(), rho_set.end());
  report.slices = {"consistent", "inconsistent"};
  report.seeds.assign(seed_set.begin(), seed_set.end());

  const SliceSpec cons = slice_consistent();
  const SliceSpec incons = slice_inconsistent();
  for (double rho : report.knob_values) {
    auto it = test_sets.find(rho);
    if (it == test_sets.end()) {
      throw std::invalid_argument(
          "consistency_report: no test set for rho_conf=" + fmt(rho));
    }
    for (const auto& variant : report.variants) {
      std::vector<SliceResult> cons_runs, incons_runs;
      for (uint64_t seed : report.seeds) {
        const RewardModel* model = find_model(rho, variant, seed);
        cons_runs.push_back(accuracy(*model, it->second, cons));
        incons_runs.push_back(accuracy(*model, it->second, incons));
      }
      report.cells.push_back(
          aggregate_cell(variant, rho, "consistent", cons_runs));
      report.cells.push_back(
          aggregate_cell(variant, rho, "inconsistent", incons_runs));
    }
  }

  report.metadata = extra_metadata.is_object() ? extra_metadata : Json::object();
  report.metadata["aggregation"] = aggregation_note();
  report.metadata["slice_meaning"] =
      Json{{"consistent", "prompt type equals the annotator objective (t = c)"},
           {"inconsistent", "prompt type differs from the objective (t != c)"}};
  {
    Json sizes = Json::object();
    for (const auto& [rho, d] : test_sets) sizes[fmt(rho)] = d.size();
    report.metadata["test_n"] = sizes;
  }
  report.validate();
  return report;
}

}  // namespace cpl
