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

#include "cpl/worlds.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <doctest.h>

#include "cpl/dataset_io.hpp"

using cpl::ConfoundedConfig;
using cpl::Dataset;
using cpl::EmbeddingKnobs;
using cpl::EmbeddingMap;
using cpl::LabelRule;
using cpl::Mat;
using cpl::NonadditiveConfig;
using cpl::Rng;
using cpl::UltrafeedbackConfig;
using cpl::Vec;

namespace {

// Held-out R^2 of a ridge-regularized linear readout of one latent axis
// from the embeddings; first half fits, second half scores.
double probe_r2(const Dataset& d, int axis) {
  int n = static_cast<int>(d.size());
  int half = n / 2;
  int dim = d.embed_dim();
  Mat x(half, dim + 1), xt(n - half, dim + 1);
  Vec y(half), yt(n - half);
  for (int i = 0; i < n; ++i) {
    const auto& ex = d.examples[static_cast<size_t>(i)];
    if (i < half) {
      x.row(i).head(dim) = ex.e.transpose();
      x(i, dim) = 1.0;
      y(i) = ex.z(axis);
    } else {
      xt.row(i - half).head(dim) = ex.e.transpose();
      xt(i - half, dim) = 1.0;
      yt(i - half) = ex.z(axis);
    }
  }
  Vec w = (x.transpose() * x + 1e-8 * Mat::Identity(dim + 1, dim + 1))
              .ldlt()
              .solve(x.transpose() * y);
  Vec pred = xt * w;
  double ss_res = (yt - pred).squaredNorm();
  double ss_tot = (yt.array() - yt.mean()).matrix().squaredNorm();
  return 1.0 - ss_res / ss_tot;
}

double corr(const std::vector<double>& a, const std::vector<double>& b) {
  double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

TEST_CASE("deterministic labels follow the higher reward") {
  Rng tie(1);
  CHECK(cpl::assign_label(2.0, 1.0, tie) == 0);
  CHECK(cpl::assign_label(1.0, 2.0, tie) == 1);

  // Exact ties split roughly evenly from the tie stream.
  Rng ties(7);
  int zeros = 0;
  for (int i = 0; i < 2000; ++i) zeros += cpl::assign_label(1.5, 1.5, ties) == 0;
  CHECK(zeros > 880);
  CHECK(zeros < 1120);

  Rng t2(1);
  CHECK_THROWS_AS(cpl::assign_label(std::nan(""), 0.0, t2), std::invalid_argument);
}

TEST_CASE("btl labels land at the sigmoid rate of the margin") {
  Rng stream(3);
  int zeros = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) zeros += cpl::assign_label_btl(1.0, 0.0, stream) == 0;
  // True rate sigmoid(1) = 0.7310...; 4-sigma band at n = 20000 is +-0.0125.
  CHECK(std::abs(static_cast<double>(zeros) / n - 0.7310585786300049) < 0.0125);
}

TEST_CASE("embedding synthesis is deterministic and quantized") {
  EmbeddingKnobs knobs;
  knobs.embed_dim = 16;
  EmbeddingMap map = EmbeddingMap::create(2, 2, knobs, Rng(5));
  Vec z(2);
  z << 0.4, -1.2;

  Vec e1 = map(z, 0, Rng(77));
  Vec e2 = map(z, 0, Rng(77));
  CHECK(e1 == e2);
  REQUIRE(e1.size() == 16);

  // Every coordinate is already on the 1e-6 grid: re-quantizing is a no-op.
  // (k / 1e6 is not exactly representable, so compare as doubles, not ints.)
  for (Eigen::Index i = 0; i < e1.size(); ++i) {
    CHECK(std::round(e1(i) * 1e6) / 1e6 == e1(i));
  }

  // The prompt type moves the embedding; a different example stream moves
  // the nuisance/noise part.
  CHECK(map(z, 1, Rng(77)) != e1);
  CHECK(map(z, 0, Rng(78)) != e1);

  CHECK_THROWS_AS(map(Vec::Zero(3), 0, Rng(1)), std::invalid_argument);
  CHECK_THROWS_AS(map(z, 2, Rng(1)), std::invalid_argument);
}

TEST_CASE("latents decode linearly from embeddings in both worlds") {
  // The confounded world's observations list the type-aligned quality first,
  // so the probe targets that view of the latents.  The off-type slot varies
  // on a five-times smaller scale than the aligned slot, so its readout is
  // real but noticeably noisier.
  ConfoundedConfig cc;
  cc.n = 3000;
  cc.seed = 5;
  Dataset dc = sample_confounded_world(cc);
  for (auto& ex : dc.examples) {
    Vec w(2);
    w << ex.z(ex.t), ex.z(1 - ex.t);
    ex.z = w;
  }
  CHECK(probe_r2(dc, 0) > 0.8);
  CHECK(probe_r2(dc, 1) > 0.3);

  UltrafeedbackConfig uc;
  uc.n = 3000;
  uc.seed = 7;
  uc.rho = 0.3;
  Dataset du = sample_ultrafeedback_world(uc);
  CHECK(probe_r2(du, 0) > 0.8);
  CHECK(probe_r2(du, 1) > 0.8);
}

TEST_CASE("ultrafeedback scores live on the rating scale and rewards mix them") {
  UltrafeedbackConfig cfg;
  cfg.n = 500;
  cfg.seed = 2;
  Dataset d = sample_ultrafeedback_world(cfg);
  REQUIRE(d.size() == 500);
  for (const auto& ex : d.examples) {
    for (const Vec* z : {&ex.z, &ex.z_prime}) {
      REQUIRE(z->size() == 2);
      CHECK((*z)(0) >= cfg.score_min);
      CHECK((*z)(0) <= cfg.score_max);
      CHECK((*z)(1) >= cfg.score_min);
      CHECK((*z)(1) <= cfg.score_max);
    }
    CHECK(ex.c == 0);
    CHECK((ex.label == 0 || ex.label == 1));
  }

  Vec z(2);
  z << 4.0, 2.0;
  CHECK(cpl::ultrafeedback_reward(z, 0.25) == doctest::Approx(2.5).epsilon(1e-15));
  CHECK_THROWS_AS(cpl::ultrafeedback_reward(Vec::Zero(3), 0.25), std::invalid_argument);
}

TEST_CASE("deterministic labels agree with the ground-truth reward ordering") {
  UltrafeedbackConfig cfg;
  cfg.n = 2000;
  cfg.seed = 9;
  cfg.rho = -0.4;
  Dataset d = sample_ultrafeedback_world(cfg);
  for (const auto& ex : d.examples) {
    double r = cpl::ultrafeedback_reward(ex.z, cfg.alpha);
    double rp = cpl::ultrafeedback_reward(ex.z_prime, cfg.alpha);
    if (ex.label == 0) {
      CHECK(r >= rp);
    } else {
      CHECK(r <= rp);
    }
  }
}

TEST_CASE("the attained difference correlation tracks the target") {
  for (double rho : {0.0, 0.6, -0.8}) {
    UltrafeedbackConfig cfg;
    cfg.n = 10000;
    cfg.seed = 11;
    cfg.rho = rho;
    Dataset d = sample_ultrafeedback_world(cfg);
    double attained = d.meta.at("empirical_delta_corr").get<double>();
    CAPTURE(rho);
    CHECK(std::abs(attained - rho) < 0.03);
  }
}

TEST_CASE("unattainable correlation targets fail loudly with the feasible range") {
  UltrafeedbackConfig cfg;
  cfg.n = 100;
  cfg.seed = 1;
  cfg.score_min = 2.5;  // floor at the mean: harsh one-sided clipping
  cfg.rho = -0.9;
  CHECK_THROWS_WITH_AS(sample_ultrafeedback_world(cfg),
                       doctest::Contains("attainable"), std::invalid_argument);
}

TEST_CASE("world preconditions are enforced") {
  UltrafeedbackConfig u;
  u.rho = 0.96;
  CHECK_THROWS_AS(sample_ultrafeedback_world(u), std::invalid_argument);
  u.rho = -0.96;
  CHECK_THROWS_AS(sample_ultrafeedback_world(u), std::invalid_argument);
  u.rho = 0.0;
  u.n = 0;
  CHECK_THROWS_AS(sample_ultrafeedback_world(u), std::invalid_argument);

  ConfoundedConfig c;
  c.rho_conf = 0.49;
  CHECK_THROWS_AS(sample_confounded_world(c), std::invalid_argument);
  c.rho_conf = 1.01;
  CHECK_THROWS_AS(sample_confounded_world(c), std::invalid_argument);

  NonadditiveConfig q;
  q.gamma0 = 0.3;
  q.gamma1 = 0.8;
  CHECK_THROWS_WITH_AS(nonadditive_world(q), doctest::Contains("gamma0"),
                       std::invalid_argument);
}

TEST_CASE("confounded world balances objectives exactly and hits rho_conf") {
  for (double rho_conf : {0.5, 0.8, 1.0}) {
    ConfoundedConfig cfg;
    cfg.n = 10000;
    cfg.rho_conf = rho_conf;
    cfg.seed = 13;
    Dataset d = sample_confounded_world(cfg);

    int c1 = 0, match = 0;
    for (const auto& ex : d.examples) {
      c1 += ex.c;
      match += (ex.t == ex.c);
    }
    CHECK(c1 * 2 == cfg.n);  // exact alternation
    double rate = static_cast<double>(match) / cfg.n;
    CAPTURE(rho_conf);
    CHECK(std::abs(rate - rho_conf) < 0.02);
    if (rho_conf == 1.0) CHECK(match == cfg.n);  // exact, not approximate
    CHECK(d.meta.at("empirical_type_match").get<double>() ==
          doctest::Approx(rate).epsilon(1e-12));
  }
}

TEST_CASE("confounded latents have type-aligned scales and the set correlation") {
  ConfoundedConfig cfg;
  cfg.n = 10000;
  cfg.rho_conf = 0.5;
  cfg.seed = 17;
  Dataset d = sample_confounded_world(cfg);

  std::vector<double> z0, z1;
  for (const auto& ex : d.examples) {
    if (ex.t != 0) continue;
    z0.push_back(ex.z(0));
    z1.push_back(ex.z(1));
  }
  REQUIRE(z0.size() > 3000);

  double v0 = 0, v1 = 0;
  for (size_t i = 0; i < z0.size(); ++i) {
    v0 += z0[i] * z0[i];
    v1 += z1[i] * z1[i];
  }
  double s0 = std::sqrt(v0 / static_cast<double>(z0.size()));
  double s1 = std::sqrt(v1 / static_cast<double>(z1.size()));
  CHECK(s0 == doctest::Approx(cfg.scale_aligned).epsilon(0.05));
  CHECK(s1 == doctest::Approx(cfg.scale_off).epsilon(0.05));
  CHECK(corr(z0, z1) == doctest::Approx(cfg.latent_corr).epsilon(0.12));

  Vec z(2);
  z << 0.7, -0.3;
  CHECK(cpl::confounded_reward(z, 0) == 0.7);
  CHECK(cpl::confounded_reward(z, 1) == -0.3);
  CHECK_THROWS_AS(cpl::confounded_reward(z, 2), std::invalid_argument);
}

TEST_CASE("nonadditive rewards follow the prompt-conditional parabola") {
  NonadditiveConfig cfg;
  Vec a(2), b(2);
  a << 0.0, 0.5;
  b << 1.0, 0.5;
  // beta (z_t - gamma)^2 with beta = -1: gamma0 = 0.8 -> -0.09,
  // gamma1 = 0.3 -> -0.04.  Same response latent, opposite ordering driver.
  CHECK(cpl::nonadditive_reward(a, cfg) == doctest::Approx(-0.09).epsilon(1e-12));
  CHECK(cpl::nonadditive_reward(b, cfg) == doctest::Approx(-0.04).epsilon(1e-12));

  Vec bad(2);
  bad << 0.5, 0.5;
  CHECK_THROWS_AS(cpl::nonadditive_reward(bad, cfg), std::invalid_argument);

  cfg.n = 300;
  cfg.seed = 3;
  Dataset d = nonadditive_world(cfg);
  for (const auto& ex : d.examples) {
    CHECK(ex.e == ex.z);  // embeddings are the raw latents here
    CHECK(ex.e_prime == ex.z_prime);
    CHECK((ex.z(0) == 0.0 || ex.z(0) == 1.0));
    CHECK(ex.z(0) == ex.z_prime(0));  // shared prompt feature
    double r = cpl::nonadditive_reward(ex.z, cfg);
    double rp = cpl::nonadditive_reward(ex.z_prime, cfg);
    if (ex.label == 0) {
      CHECK(r >= rp);
    } else {
      CHECK(r <= rp);
    }
  }
}

TEST_CASE("generation is a pure function of the config") {
  UltrafeedbackConfig cfg;
  cfg.n = 400;
  cfg.seed = 21;
  cfg.rho = 0.5;
  std::string once = cpl::dataset_to_jsonl(sample_ultrafeedback_world(cfg));
  std::string twice = cpl::dataset_to_jsonl(sample_ultrafeedback_world(cfg));
  CHECK(once == twice);

  cfg.seed = 22;
  CHECK(cpl::dataset_to_jsonl(sample_ultrafeedback_world(cfg)) != once);
}

TEST_CASE("map_seed pins the observation space across example seeds") {
  // Train/test pairs must embed latents identically or cross-dataset
  // evaluation is meaningless; sharing map_seed guarantees that.
  UltrafeedbackConfig a;
  a.seed = 100;
  a.map_seed = 7;
  UltrafeedbackConfig b = a;
  b.seed = 200;

  cpl::EmbeddingMap ma = cpl::ultrafeedback_embedding_map(a);
  cpl::EmbeddingMap mb = cpl::ultrafeedback_embedding_map(b);
  CHECK((ma.mixing() - mb.mixing()).cwiseAbs().maxCoeff() == 0.0);

  // A probe latent lands on the same embedding in both spaces (sigma_e = 0
  // and a pinned noise stream remove the per-example randomness).
  UltrafeedbackConfig clean = a;
  clean.emb.sigma_e = 0.0;
  cpl::EmbeddingMap mc = cpl::ultrafeedback_embedding_map(clean);
  Vec z(2);
  z << 1.25, 3.5;
  cpl::Rng n1(4), n2(4);
  CHECK((mc(z, 0, n1) - mc(z, 0, n2)).cwiseAbs().maxCoeff() == 0.0);

  // Without map_seed the map follows the example seed, and the two datasets
  // live in different spaces.
  a.map_seed.reset();
  b.map_seed.reset();
  cpl::EmbeddingMap pa = cpl::ultrafeedback_embedding_map(a);
  cpl::EmbeddingMap pb = cpl::ultrafeedback_embedding_map(b);
  CHECK((pa.mixing() - pb.mixing()).cwiseAbs().maxCoeff() > 0.0);

  // The effective map seed is recorded either way.
  cpl::UltrafeedbackConfig small;
  small.n = 50;
  small.seed = 300;
  CHECK(sample_ultrafeedback_world(small).meta.at("map_seed") == 300);
  small.map_seed = 7;
  CHECK(sample_ultrafeedback_world(small).meta.at("map_seed") == 7);

  cpl::ConfoundedConfig c1, c2;
  c1.seed = 1;
  c2.seed = 2;
  c1.map_seed = c2.map_seed = 9;
  CHECK((cpl::confounded_embedding_map(c1).mixing() -
         cpl::confounded_embedding_map(c2).mixing())
            .cwiseAbs()
            .maxCoeff() == 0.0);
}

TEST_CASE("splits are disjoint, exhaustive, and seed-stable") {
  ConfoundedConfig cfg;
  cfg.n = 1000;
  cfg.seed = 4;
  Dataset d = sample_confounded_world(cfg);
  cpl::Splits s = make_splits(d, {0.8, 0.1, 0.1}, 99);

  CHECK(s.train.size() == 800);
  CHECK(s.val.size() == 100);
  CHECK(s.test.size() == 100);
  CHECK(s.train.meta.at("split") == "train");
  CHECK(s.val.meta.at("split") == "validation");
  CHECK(s.test.meta.at("split") == "test");

  std::set<int64_t> ids;
  for (const Dataset* part : {&s.train, &s.val, &s.test}) {
    for (const auto& ex : part->examples) ids.insert(ex.id);
  }
  CHECK(ids.size() == 1000);

  cpl::Splits again = make_splits(d, {0.8, 0.1, 0.1}, 99);
  CHECK(again.train.examples[0].id == s.train.examples[0].id);
  cpl::Splits other = make_splits(d, {0.8, 0.1, 0.1}, 100);
  bool same_first_ids = true;
  for (size_t i = 0; i < 20; ++i) {
    same_first_ids = same_first_ids &&
                     (other.train.examples[i].id == s.train.examples[i].id);
  }
  CHECK_FALSE(same_first_ids);

  CHECK_THROWS_AS(make_splits(d, {0.8, 0.3, 0.1}, 1), std::invalid_argument);
  CHECK_THROWS_AS(make_splits(d, {-0.1, 1.0, 0.1}, 1), std::invalid_argument);
}

TEST_CASE("datasets round-trip bit-exactly through JSONL") {
  ConfoundedConfig cfg;
  cfg.n = 120;
  cfg.seed = 8;
  cfg.labels = LabelRule::kBtlSample;
  Dataset d = sample_confounded_world(cfg);

  std::string text = cpl::dataset_to_jsonl(d);
  Dataset back = cpl::dataset_from_jsonl(text);

  REQUIRE(back.size() == d.size());
  CHECK(back.meta == d.meta);
  for (size_t i = 0; i < d.size(); ++i) {
    const auto& a = d.examples[i];
    const auto& b = back.examples[i];
    CHECK(a.id == b.id);
    CHECK(a.e == b.e);
    CHECK(a.e_prime == b.e_prime);
    CHECK(a.z == b.z);
    CHECK(a.z_prime == b.z_prime);
    CHECK(a.c == b.c);
    CHECK(a.t == b.t);
    CHECK(a.label == b.label);
  }
  // And the re-serialization is byte-identical.
  CHECK(cpl::dataset_to_jsonl(back) == text);
}

TEST_CASE("the header line announces the format and carries the meta") {
  UltrafeedbackConfig cfg;
  cfg.n = 3;
  cfg.seed = 1;
  std::string text = cpl::dataset_to_jsonl(sample_ultrafeedback_world(cfg));
  auto first_line = text.substr(0, text.find('\n'));
  auto header = cpl::Json::parse(first_line);
  CHECK(header.at("format") == "cpl-dataset");
  CHECK(header.at("meta").at("world") == "ultrafeedback");
}

TEST_CASE("headerless records import with ground truth flags off") {
  std::string text =
      R"({"id":0,"e":[0.25,-1.0],"e_prime":[0.5,0.125],"c":0,"t":1,"ell":1})"
      "\n"
      R"({"id":1,"e":[0.75,2.0],"e_prime":[-0.5,0.25],"c":1,"t":0,"ell":0})"
      "\n";
  Dataset d = cpl::dataset_from_jsonl(text);
  REQUIRE(d.size() == 2);
  CHECK(d.meta.at("world") == "imported");
  CHECK_FALSE(d.has_ground_truth());
  CHECK(d.examples[0].e(1) == -1.0);
  CHECK(d.examples[1].label == 0);
  CHECK(d.examples[0].z.size() == 0);
}

TEST_CASE("malformed dataset lines carry their line number in the error") {
  std::string bad =
      R"({"id":0,"e":[0.1],"e_prime":[0.2],"c":0,"t":0,"ell":2})"
      "\n";
  CHECK_THROWS_WITH_AS(cpl::dataset_from_jsonl(bad), doctest::Contains("line"),
                       std::runtime_error);
  CHECK_THROWS_AS(cpl::dataset_from_jsonl("not json\n"), std::runtime_error);
  CHECK_THROWS_AS(cpl::dataset_from_jsonl(""), std::runtime_error);
}

TEST_CASE("file round-trip preserves the serialized bytes") {
  NonadditiveConfig cfg;
  cfg.n = 50;
  cfg.seed = 6;
  Dataset d = nonadditive_world(cfg);
  auto path = std::filesystem::temp_directory_path() / "cpl_test_world.jsonl";
  cpl::write_dataset_jsonl(d, path);
  Dataset back = cpl::read_dataset_jsonl(path);
  CHECK(cpl::dataset_to_jsonl(back) == cpl::dataset_to_jsonl(d));
  std::filesystem::remove(path);
  CHECK_THROWS_AS(cpl::read_dataset_jsonl(path), std::runtime_error);
}
