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

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <doctest.h>

#include "cpl/models.hpp"
#include "cpl/rng.hpp"
#include "cpl/worlds.hpp"

using namespace cpl;

namespace {

// A dataset where only the first embedding coordinate matters, with
// hand-chosen scores and labels.
Dataset toy_dataset(const std::vector<std::tuple<double, double, int>>& rows) {
  Dataset d;
  int64_t id = 0;
  for (const auto& [s, sp, label] : rows) {
    PreferenceExample ex;
    ex.id = id++;
    ex.e = Vec::Constant(1, s);
    ex.e_prime = Vec::Constant(1, sp);
    ex.label = label;
    d.examples.push_back(ex);
  }
  d.meta = Json{{"world", "toy"}};
  return d;
}

RewardFn first_coord_scorer() {
  return [](const PreferenceExample& ex, bool prime) {
    return prime ? ex.e_prime(0) : ex.e(0);
  };
}

EmbeddingKnobs small_emb() {
  EmbeddingKnobs k;
  k.embed_dim = 12;
  k.noise_dims = 2;
  return k;
}

Dataset small_confounded(int n, double rho_conf, uint64_t seed) {
  ConfoundedConfig cfg;
  cfg.n = n;
  cfg.rho_conf = rho_conf;
  cfg.emb = small_emb();
  cfg.seed = seed;
  return sample_confounded_world(cfg);
}

Dataset small_ultrafeedback(int n, double rho, uint64_t seed) {
  UltrafeedbackConfig cfg;
  cfg.n = n;
  cfg.rho = rho;
  cfg.emb = small_emb();
  cfg.seed = seed;
  return sample_ultrafeedback_world(cfg);
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("consistent and inconsistent slices partition the test set") {
  Dataset d = small_confounded(500, 0.8, 21);
  auto cons = slice_indices(d, slice_consistent());
  auto incons = slice_indices(d, slice_inconsistent());
  auto all = slice_indices(d, slice_all());
  CHECK(all.size() == d.size());
  CHECK(cons.size() + incons.size() == d.size());
  // Disjoint: no index can satisfy both t == c and t != c.
  std::vector<bool> seen(d.size(), false);
  for (size_t i : cons) seen[i] = true;
  for (size_t i : incons) {
    CHECK(!seen[i]);
    seen[i] = true;
  }
  for (bool b : seen) CHECK(b);
}

TEST_CASE("prediction rule: second response wins ties lose") {
  // (score, score', label): predicted label is [score < score'].
  Dataset d = toy_dataset({
      {1.0, 2.0, 1},  // predicts 1, correct
      {2.0, 1.0, 1},  // predicts 0, wrong
      {1.0, 1.0, 0},  // tie predicts 0, correct
      {0.0, 5.0, 0},  // predicts 1, wrong
  });
  SliceResult r = accuracy(first_coord_scorer(), d, slice_all());
  CHECK(r.n == 4);
  CHECK(r.correct == 2);
  CHECK(r.accuracy == 0.5);
  CHECK(r.stderr_binomial == 0.25);  // sqrt(0.5*0.5/4), exact in doubles
}

TEST_CASE("empty slice is rejected") {
  Dataset d = toy_dataset({{1.0, 2.0, 1}});
  SliceSpec never{"never", [](const PreferenceExample&) { return false; }};
  CHECK_THROWS_AS(accuracy(first_coord_scorer(), d, never),
                  std::invalid_argument);
  CHECK_THROWS_WITH_AS(accuracy(first_coord_scorer(), d, never),
                       doctest::Contains("never"), std::invalid_argument);
}

TEST_CASE("ground-truth scorer is perfect on non-tied examples") {
  Dataset d = small_ultrafeedback(2000, 0.3, 3);
  const double alpha = d.meta.at("alpha").get<double>();
  RewardFn oracle = [alpha](const PreferenceExample& ex, bool prime) {
    return ultrafeedback_reward(prime ? ex.z_prime : ex.z, alpha);
  };
  SliceSpec non_tied{"non-tied", [alpha](const PreferenceExample& ex) {
                       return ultrafeedback_reward(ex.z, alpha) !=
                              ultrafeedback_reward(ex.z_prime, alpha);
                     }};
  SliceResult r = accuracy(oracle, d, non_tied);
  CHECK(r.n > 1900);  // ties are rare
  CHECK(r.accuracy == 1.0);
  CHECK(r.stderr_binomial == 0.0);
}

TEST_CASE("coin-flip scorer sits at chance") {
  std::vector<std::tuple<double, double, int>> rows;
  for (int i = 0; i < 10000; ++i) rows.push_back({0.0, 0.0, i % 2});
  Dataset d = toy_dataset(rows);
  auto rng = std::make_shared<Rng>(7);
  RewardFn coin = [rng](const PreferenceExample&, bool) {
    return rng->uniform();
  };
  SliceResult r = accuracy(coin, d, slice_all());
  CHECK(r.accuracy > 0.47);
  CHECK(r.accuracy < 0.53);
}

TEST_CASE("batched model evaluation matches the per-example path") {
  Dataset d = small_confounded(300, 0.7, 9);
  auto spec = RewardModelSpec::base(d.embed_dim(), 16, 2, /*init_seed=*/4);
  RewardModel model = RewardModel::init(spec);
  RewardFn fn = [&model](const PreferenceExample& ex, bool prime) {
    return model.reward(prime ? ex.e_prime : ex.e, ex.c);
  };
  for (const auto& slice : {slice_all(), slice_consistent(), slice_inconsistent()}) {
    SliceResult batched = accuracy(model, d, slice);
    SliceResult looped = accuracy(fn, d, slice);
    CHECK(batched.n == looped.n);
    CHECK(batched.correct == looped.correct);
  }
}

TEST_CASE("union accuracy equals the count-weighted mean of slice accuracies") {
  Dataset d = small_confounded(600, 0.8, 31);
  auto spec = RewardModelSpec::multihead(d.embed_dim(), 16, 6, 2, 11);
  RewardModel model = RewardModel::init(spec);
  SliceResult whole = accuracy(model, d, slice_all());
  SliceResult cons = accuracy(model, d, slice_consistent());
  SliceResult incons = accuracy(model, d, slice_inconsistent());
  CHECK(cons.n + incons.n == whole.n);
  CHECK(cons.correct + incons.correct == whole.correct);
  // The identity is exact because accuracies are single divisions of integer
  // counts: weighting by counts recovers the counts.
  double weighted = static_cast<double>(cons.correct + incons.correct) /
                    static_cast<double>(cons.n + incons.n);
  CHECK(whole.accuracy == weighted);
}

TEST_CASE("per-seed aggregation: mean and sample-std-based stderr") {
  auto res = [](size_t correct, size_t n) {
    SliceResult r;
    r.correct = correct;
    r.n = n;
    r.accuracy = static_cast<double>(correct) / static_cast<double>(n);
    r.stderr_binomial = std::sqrt(r.accuracy * (1 - r.accuracy) / n);
    return r;
  };
  SUBCASE("three seeds") {
    ReportCell cell = aggregate_cell("base", 0.5, "all",
                                     {res(60, 100), res(70, 100), res(80, 100)});
    CHECK(cell.mean == doctest::Approx(0.7).epsilon(1e-12));
    // sample std of {0.6, 0.7, 0.8} is 0.1; stderr = 0.1 / sqrt(3)
    CHECK(cell.sem == doctest::Approx(0.1 / std::sqrt(3.0)).epsilon(1e-12));
    CHECK(cell.n == 100);
    CHECK(cell.per_seed.size() == 3);
    CHECK(cell.per_seed_stderr.size() == 3);
  }
  SUBCASE("single seed falls back to the binomial stderr") {
    ReportCell cell = aggregate_cell("base", 0.5, "all", {res(75, 100)});
    CHECK(cell.mean == 0.75);
    CHECK(cell.sem == res(75, 100).stderr_binomial);
  }
  SUBCASE("slice size must agree across seeds") {
    CHECK_THROWS_AS(
        aggregate_cell("base", 0.5, "all", {res(60, 100), res(60, 101)}),
        std::invalid_argument);
  }
  SUBCASE("no seeds rejected") {
    CHECK_THROWS_AS(aggregate_cell("base", 0.5, "all", {}),
                    std::invalid_argument);
  }
}

namespace {

struct IdOodFixture {
  std::map<double, Dataset> id_test;
  Dataset ood_test;
  std::vector<RewardModel> storage;
  std::vector<IdOodCellInput> inputs;

  IdOodFixture() {
    storage.reserve(4);  // push_back must not invalidate handed-out pointers
    id_test.emplace(0.0, small_ultrafeedback(250, 0.0, 100));
    id_test.emplace(0.9, small_ultrafeedback(250, 0.9, 101));
    ood_test = small_ultrafeedback(250, -0.8, 102);
    const int dim = ood_test.embed_dim();
    for (double rho : {0.0, 0.9}) {
      for (uint64_t seed : {0ull, 1ull}) {
        auto spec = RewardModelSpec::base(dim, 16, 1, /*init_seed=*/seed + 40);
        storage.push_back(RewardModel::init(spec));
        inputs.push_back({rho, seed, &storage.back()});
      }
    }
  }
};

}  // namespace

TEST_CASE("id/ood report: grid structure, round-trip, and missing cells") {
  IdOodFixture fx;
  ExperimentReport rep =
      id_ood_report(fx.inputs, fx.id_test, fx.ood_test, -0.8,
                    Json{{"note", "structure test"}});

  SUBCASE("declared grid is fully populated") {
    CHECK(rep.study == "id-ood");
    CHECK(rep.knob_name == "rho_train");
    CHECK(rep.variants == std::vector<std::string>{"base"});
    CHECK(rep.knob_values == std::vector<double>{0.0, 0.9});
    CHECK(rep.slices == std::vector<std::string>{"id", "ood"});
    CHECK(rep.seeds == std::vector<uint64_t>{0, 1});
    CHECK(rep.cells.size() == 4);
    CHECK_NOTHROW(rep.validate());
    CHECK(rep.cell("base", 0.9, "ood").per_seed.size() == 2);
    CHECK(rep.cell("base", 0.0, "id").n == 250);
    CHECK(rep.metadata.at("ood_rho").get<double>() == -0.8);
    CHECK(rep.metadata.at("note").get<std::string>() == "structure test");
    CHECK(rep.metadata.contains("aggregation"));
  }

  SUBCASE("ood cells share the fixed shifted test set") {
    CHECK(rep.cell("base", 0.0, "ood").n == fx.ood_test.size());
    CHECK(rep.cell("base", 0.9, "ood").n == fx.ood_test.size());
  }

  SUBCASE("json round-trip reproduces the grid exactly") {
    ExperimentReport back = ExperimentReport::from_json(rep.to_json());
    CHECK(back == rep);
  }

  SUBCASE("file round-trip reproduces the grid exactly") {
    auto path = temp_path("cpl_eval_report_test.json");
    save_report(rep, path);
    ExperimentReport back = load_report(path);
    CHECK(back == rep);
    std::filesystem::remove(path);
  }

  SUBCASE("csv shapes") {
    std::string long_csv = rep.to_csv_long();
    std::string agg_csv = rep.to_csv_aggregated();
    auto lines = [](const std::string& s) {
      return std::count(s.begin(), s.end(), '\n');
    };
    CHECK(lines(long_csv) == 1 + 4 * 2);  // header + cells x seeds
    CHECK(lines(agg_csv) == 1 + 4);
    CHECK(long_csv.rfind("variant,knob,slice,seed,accuracy,stderr,n\n", 0) == 0);
    CHECK(agg_csv.rfind("variant,knob,slice,mean,stderr,n,seeds\n", 0) == 0);
  }

  SUBCASE("text table renders percent blocks") {
    std::string table = rep.to_text_table();
    CHECK(table.find("rho_train = 0.9") != std::string::npos);
    CHECK(table.find("+-") != std::string::npos);
  }

  SUBCASE("missing model is rejected") {
    auto broken = fx.inputs;
    broken.pop_back();
    CHECK_THROWS_WITH_AS(
        id_ood_report(broken, fx.id_test, fx.ood_test, -0.8),
        doctest::Contains("missing model"), std::invalid_argument);
  }

  SUBCASE("missing test set is rejected") {
    auto partial = fx.id_test;
    partial.erase(0.9);
    CHECK_THROWS_WITH_AS(id_ood_report(fx.inputs, partial, fx.ood_test, -0.8),
                         doctest::Contains("test set"), std::invalid_argument);
  }

  SUBCASE("duplicate cell is rejected") {
    auto dup = fx.inputs;
    dup.push_back(dup.front());
    CHECK_THROWS_WITH_AS(id_ood_report(dup, fx.id_test, fx.ood_test, -0.8),
                         doctest::Contains("duplicate"), std::invalid_argument);
  }

  SUBCASE("mixed architectures are rejected") {
    auto mixed = fx.inputs;
    auto mh = RewardModelSpec::multihead(fx.ood_test.embed_dim(), 16, 6, 2, 7);
    RewardModel other = RewardModel::init(mh);
    mixed[1].model = &other;
    CHECK_THROWS_WITH_AS(id_ood_report(mixed, fx.id_test, fx.ood_test, -0.8),
                         doctest::Contains("architecture"),
                         std::invalid_argument);
  }
}

TEST_CASE("consistency report: variants x rho grid with slice partition") {
  std::map<double, Dataset> test_sets;
  test_sets.emplace(0.5, small_confounded(400, 0.5, 200));
  test_sets.emplace(0.8, small_confounded(400, 0.8, 201));
  const int dim = test_sets.at(0.5).embed_dim();

  std::vector<RewardModel> storage;
  storage.reserve(6);  // push_back must not invalidate handed-out pointers
  std::vector<ConsistencyCellInput> inputs;
  for (double rho : {0.5, 0.8}) {
    storage.push_back(RewardModel::init(RewardModelSpec::base(dim, 16, 2, 1)));
    inputs.push_back({rho, "base", 0, &storage.back()});
    storage.push_back(
        RewardModel::init(RewardModelSpec::multihead(dim, 16, 6, 2, 2)));
    inputs.push_back({rho, "multihead", 0, &storage.back()});
    storage.push_back(RewardModel::init(
        RewardModelSpec::adversarial(dim, 16, 6, 2, /*lambda=*/1.0, 3)));
    inputs.push_back({rho, "adversarial", 0, &storage.back()});
  }

  ExperimentReport rep = consistency_report(inputs, test_sets);
  CHECK(rep.study == "consistency");
  CHECK(rep.variants ==
        std::vector<std::string>{"base", "multihead", "adversarial"});
  CHECK(rep.knob_values == std::vector<double>{0.5, 0.8});
  CHECK(rep.slices == std::vector<std::string>{"consistent", "inconsistent"});
  CHECK(rep.cells.size() == 12);
  CHECK_NOTHROW(rep.validate());

  // Partition: the two slices cover each test set exactly.
  for (double rho : {0.5, 0.8}) {
    for (const auto& v : rep.variants) {
      size_t total = rep.cell(v, rho, "consistent").n +
                     rep.cell(v, rho, "inconsistent").n;
      CHECK(total == test_sets.at(rho).size());
    }
  }

  // Single seed: stderr falls back to the binomial per-seed value.
  const auto& cell = rep.cell("base", 0.5, "consistent");
  CHECK(cell.per_seed.size() == 1);
  CHECK(cell.sem == cell.per_seed_stderr[0]);

  SUBCASE("round-trip") {
    ExperimentReport back = ExperimentReport::from_json(rep.to_json());
    CHECK(back == rep);
  }

  SUBCASE("missing variant cell is rejected") {
    auto broken = inputs;
    broken.erase(broken.begin() + 1);  // drop multihead at rho = 0.5
    CHECK_THROWS_WITH_AS(consistency_report(broken, test_sets),
                         doctest::Contains("missing model"),
                         std::invalid_argument);
  }
}

TEST_CASE("report validation rejects tampered grids") {
  IdOodFixture fx;
  ExperimentReport rep = id_ood_report(fx.inputs, fx.id_test, fx.ood_test, -0.8);

  SUBCASE("accuracy outside [0,1]") {
    rep.cells[0].mean = 1.5;
    CHECK_THROWS_WITH_AS(rep.validate(), doctest::Contains("outside [0,1]"),
                         std::invalid_argument);
  }
  SUBCASE("negative stderr") {
    rep.cells[1].sem = -0.01;
    CHECK_THROWS_WITH_AS(rep.validate(), doctest::Contains("stderr"),
                         std::invalid_argument);
  }
  SUBCASE("dropped cell") {
    rep.cells.pop_back();
    CHECK_THROWS_AS(rep.validate(), std::invalid_argument);
  }
  SUBCASE("declared but absent knob value") {
    rep.knob_values.push_back(0.3);
    CHECK_THROWS_AS(rep.validate(), std::invalid_argument);
  }
  SUBCASE("per-seed length mismatch") {
    rep.cells[0].per_seed.pop_back();
    CHECK_THROWS_WITH_AS(rep.validate(), doctest::Contains("per-seed"),
                         std::invalid_argument);
  }
  SUBCASE("cell lookup failure names the coordinate") {
    CHECK_THROWS_WITH_AS(rep.cell("base", 0.3, "id"), doctest::Contains("0.3"),
                         std::out_of_range);
  }
}
