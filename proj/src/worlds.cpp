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

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "cpl/autodiff.hpp"

namespace cpl {
namespace {

// Serialized coordinates are snapped to a 1e-6 grid: datasets stay compact
// in JSON and every value round-trips bit-exactly through text.
double quantize(double v) { return std::round(v * 1e6) / 1e6; }

double clip(double v, double lo, double hi) { return std::min(hi, std::max(lo, v)); }

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  size_t n = a.size();
  double ma = std::accumulate(a.begin(), a.end(), 0.0) / static_cast<double>(n);
  double mb = std::accumulate(b.begin(), b.end(), 0.0) / static_cast<double>(n);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (size_t i = 0; i < n; ++i) {
    double da = a[i] - ma;
    double db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  return sab / std::sqrt(saa * sbb);
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

int label_for(LabelRule rule, double r, double r_prime, Rng& stream) {
  return rule == LabelRule::kDeterministicTieBreak
             ? assign_label(r, r_prime, stream)
             : assign_label_btl(r, r_prime, stream);
}

const char* label_rule_name(LabelRule rule) {
  return rule == LabelRule::kDeterministicTieBreak ? "deterministic" : "btl";
}

Json embedding_meta(const EmbeddingKnobs& k) {
  return Json{{"dim", k.embed_dim},
              {"noise_dims", k.noise_dims},
              {"type_gain", k.type_gain},
              {"sigma_e", k.sigma_e},
              {"mixing_scale", k.mixing_scale}};
}

}  // namespace

bool Dataset::has_ground_truth() const {
  if (examples.empty()) return false;
  for (const PreferenceExample& ex : examples) {
    if (ex.z.size() == 0 || ex.z_prime.size() == 0) return false;
  }
  return true;
}

int assign_label(double r, double r_prime, Rng& tie_stream) {
  require(std::isfinite(r) && std::isfinite(r_prime),
          "assign_label: rewards must be finite");
  if (r > r_prime) return 0;
  if (r < r_prime) return 1;
  return tie_stream.bernoulli(0.5) ? 0 : 1;
}

int assign_label_btl(double r, double r_prime, Rng& stream) {
  require(std::isfinite(r) && std::isfinite(r_prime),
          "assign_label: rewards must be finite");
  return stream.bernoulli(sigmoid_stable(r - r_prime)) ? 0 : 1;
}

EmbeddingMap EmbeddingMap::create(int z_dim, int n_types,
                                  const EmbeddingKnobs& knobs, Rng stream) {
  require(z_dim > 0 && n_types > 0, "embedding map: need positive dimensions");
  require(knobs.embed_dim > 0 && knobs.noise_dims >= 0,
          "embedding map: bad embedding dimensions");
  require(knobs.sigma_e >= 0.0, "embedding map: sigma_e must be >= 0");
  EmbeddingMap map;
  map.z_dim_ = z_dim;
  map.n_types_ = n_types;
  map.knobs_ = knobs;
  int in_dim = z_dim + n_types + knobs.noise_dims;
  // Entry scale ~ 1/sqrt(in_dim) keeps pre-activations in tanh's responsive
  // range, so latents stay linearly recoverable from the embedding.
  double entry_std = knobs.mixing_scale / std::sqrt(static_cast<double>(in_dim));
  Rng mix = stream.fork("mixing");
  map.a_ = Mat(knobs.embed_dim, in_dim);
  for (Eigen::Index i = 0; i < map.a_.size(); ++i) {
    map.a_.data()[i] = mix.normal(0.0, entry_std);
  }
  return map;
}

Vec EmbeddingMap::operator()(const Vec& z, int t, Rng example_stream) const {
  require(a_.size() > 0, "embedding map: not initialized");
  require(static_cast<int>(z.size()) == z_dim_,
          "embedding map: latent has dim " + std::to_string(z.size()) +
              ", expected " + std::to_string(z_dim_));
  require(t >= 0 && t < n_types_, "embedding map: type out of range");
  Vec input = Vec::Zero(a_.cols());
  input.head(z_dim_) = z;
  input(z_dim_ + t) = knobs_.type_gain;
  for (int j = 0; j < knobs_.noise_dims; ++j) {
    input(z_dim_ + n_types_ + j) = example_stream.normal();
  }
  Vec e = (a_ * input).array().tanh();
  for (Eigen::Index i = 0; i < e.size(); ++i) {
    e(i) = quantize(e(i) + knobs_.sigma_e * example_stream.normal());
  }
  return e;
}

Vec synth_embedding(const EmbeddingMap& map, const Vec& z, int t,
                    Rng example_stream) {
  return map(z, t, example_stream);
}

// ---------------------------------------------------------------------------

double ultrafeedback_reward(const Vec& z, double alpha) {
  require(z.size() == 2, "ultrafeedback reward: latent must have 2 axes");
  return alpha * z(0) + (1.0 - alpha) * z(1);
}

namespace {

struct ScorePair {
  double z1, z2;
};

// Draws one response's two axis scores: pre-clipping bivariate normal with
// correlation rho_z, then clipping to the rating bounds.
ScorePair draw_scores(const UltrafeedbackConfig& cfg, double rho_z, Rng& stream) {
  double cross = std::sqrt(1.0 - rho_z * rho_z);
  double g1 = stream.normal();
  double g2 = rho_z * g1 + cross * stream.normal();
  return {clip(cfg.score_mean + cfg.score_std * g1, cfg.score_min, cfg.score_max),
          clip(cfg.score_mean + cfg.score_std * g2, cfg.score_min, cfg.score_max)};
}

void validate_ultrafeedback(const UltrafeedbackConfig& cfg) {
  require(cfg.n > 0, "ultrafeedback world: n must be positive");
  require(cfg.rho >= -0.95 && cfg.rho <= 0.95,
          "ultrafeedback world: rho must lie in [-0.95, 0.95], got " +
              std::to_string(cfg.rho));
  require(cfg.alpha >= 0.0 && cfg.alpha <= 1.0,
          "ultrafeedback world: alpha must lie in [0, 1]");
  require(cfg.score_std > 0.0 && cfg.score_min < cfg.score_max,
          "ultrafeedback world: degenerate score scale");
}

}  // namespace

double solve_ultrafeedback_copula(const UltrafeedbackConfig& cfg, Rng probe_stream) {
  validate_ultrafeedback(cfg);
  // A fixed probe sample reused across candidate correlations makes the
  // attained-correlation curve smooth and the bisection deterministic.
  constexpr int kProbe = 50000;
  std::vector<double> g(4 * kProbe);
  for (double& v : g) v = probe_stream.normal();

  auto attained = [&](double rho_z) {
    double cross = std::sqrt(1.0 - rho_z * rho_z);
    std::vector<double> d1(kProbe), d2(kProbe);
    for (int i = 0; i < kProbe; ++i) {
      const double* q = &g[4 * static_cast<size_t>(i)];
      auto score = [&](double ga, double gb) {
        double z1 = clip(cfg.score_mean + cfg.score_std * ga, cfg.score_min,
                         cfg.score_max);
        double z2 = clip(cfg.score_mean + cfg.score_std * (rho_z * ga + cross * gb),
                         cfg.score_min, cfg.score_max);
        return ScorePair{z1, z2};
      };
      ScorePair a = score(q[0], q[1]);
      ScorePair b = score(q[2], q[3]);
      d1[i] = a.z1 - b.z1;
      d2[i] = a.z2 - b.z2;
    }
    return pearson(d1, d2);
  };

  double lo = -0.99999, hi = 0.99999;
  double alo = attained(lo), ahi = attained(hi);
  if (cfg.rho < alo || cfg.rho > ahi) {
    throw std::invalid_argument(
        "ultrafeedback world: target correlation " + std::to_string(cfg.rho) +
        " is unattainable under score bounds [" + std::to_string(cfg.score_min) +
        ", " + std::to_string(cfg.score_max) + "]; attainable range is [" +
        std::to_string(alo) + ", " + std::to_string(ahi) + "]");
  }
  for (int iter = 0; iter < 50; ++iter) {
    double mid = 0.5 * (lo + hi);
    if (attained(mid) < cfg.rho) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

EmbeddingMap ultrafeedback_embedding_map(const UltrafeedbackConfig& cfg) {
  Rng src(cfg.map_seed.value_or(cfg.seed));
  return EmbeddingMap::create(2, 1, cfg.emb, src.fork("world"));
}

Dataset sample_ultrafeedback_world(const UltrafeedbackConfig& cfg) {
  validate_ultrafeedback(cfg);
  Rng root(cfg.seed);
  EmbeddingMap map = ultrafeedback_embedding_map(cfg);
  double rho_z = solve_ultrafeedback_copula(cfg, root.fork("copula-probe"));

  Dataset d;
  d.examples.reserve(static_cast<size_t>(cfg.n));
  std::vector<double> d1(static_cast<size_t>(cfg.n)), d2(static_cast<size_t>(cfg.n));
  for (int i = 0; i < cfg.n; ++i) {
    Rng zs = root.fork("latents", static_cast<uint64_t>(i));
    ScorePair a = draw_scores(cfg, rho_z, zs);
    ScorePair b = draw_scores(cfg, rho_z, zs);
    Vec z(2), zp(2);
    z << quantize(a.z1), quantize(a.z2);
    zp << quantize(b.z1), quantize(b.z2);

    PreferenceExample ex;
    ex.id = i;
    ex.z = z;
    ex.z_prime = zp;
    ex.c = 0;
    ex.t = 0;
    double r = ultrafeedback_reward(z, cfg.alpha);
    double rp = ultrafeedback_reward(zp, cfg.alpha);
    Rng ls = root.fork("labels", static_cast<uint64_t>(i));
    ex.label = label_for(cfg.labels, r, rp, ls);
    ex.e = map(z, 0, root.fork("emb", static_cast<uint64_t>(i)));
    ex.e_prime = map(zp, 0, root.fork("emb-prime", static_cast<uint64_t>(i)));
    d1[static_cast<size_t>(i)] = z(0) - zp(0);
    d2[static_cast<size_t>(i)] = z(1) - zp(1);
    d.examples.push_back(std::move(ex));
  }

  d.meta = Json{{"world", "ultrafeedback"},
                {"n", cfg.n},
                {"rho_target", cfg.rho},
                {"alpha", cfg.alpha},
                {"score_mean", cfg.score_mean},
                {"score_std", cfg.score_std},
                {"score_min", cfg.score_min},
                {"score_max", cfg.score_max},
                {"label_rule", label_rule_name(cfg.labels)},
                {"copula_param", rho_z},
                {"empirical_delta_corr", pearson(d1, d2)},
                {"embedding", embedding_meta(cfg.emb)},
                {"seed", cfg.seed},
                {"map_seed", cfg.map_seed.value_or(cfg.seed)}};
  return d;
}

// ---------------------------------------------------------------------------

double confounded_reward(const Vec& z, int c) {
  require(z.size() == 2, "confounded reward: latent must have 2 axes");
  require(c == 0 || c == 1, "confounded reward: objective must be 0 or 1");
  return z(c);
}

EmbeddingMap confounded_embedding_map(const ConfoundedConfig& cfg) {
  Rng src(cfg.map_seed.value_or(cfg.seed));
  // Inputs: [aligned quality, content_gain * unit-scale z0 and z1].
  return EmbeddingMap::create(3, 2, cfg.emb, src.fork("world"));
}

Dataset sample_confounded_world(const ConfoundedConfig& cfg) {
  require(cfg.n > 0, "confounded world: n must be positive");
  require(cfg.rho_conf >= 0.5 && cfg.rho_conf <= 1.0,
          "confounded world: rho_conf must lie in [0.5, 1.0], got " +
              std::to_string(cfg.rho_conf));
  require(std::abs(cfg.latent_corr) < 1.0,
          "confounded world: |latent_corr| must be < 1");
  require(cfg.scale_aligned > 0.0 && cfg.scale_off > 0.0,
          "confounded world: latent scales must be positive");
  require(cfg.content_gain >= 0.0 && std::isfinite(cfg.content_gain),
          "confounded world: content_gain must be finite and non-negative");

  Rng root(cfg.seed);
  EmbeddingMap map = confounded_embedding_map(cfg);
  double cross = std::sqrt(1.0 - cfg.latent_corr * cfg.latent_corr);

  Dataset d;
  d.examples.reserve(static_cast<size_t>(cfg.n));
  int type_matches = 0;
  for (int i = 0; i < cfg.n; ++i) {
    PreferenceExample ex;
    ex.id = i;
    ex.c = i % 2;  // equal objective counts, exactly
    Rng ts = root.fork("type", static_cast<uint64_t>(i));
    ex.t = (cfg.rho_conf >= 1.0 || ts.bernoulli(cfg.rho_conf)) ? ex.c : 1 - ex.c;
    type_matches += (ex.t == ex.c);

    Rng zs = root.fork("latents", static_cast<uint64_t>(i));
    auto draw_latent = [&]() {
      double a0 = zs.normal();
      double a1 = cfg.latent_corr * a0 + cross * zs.normal();
      double s0 = ex.t == 0 ? cfg.scale_aligned : cfg.scale_off;
      double s1 = ex.t == 1 ? cfg.scale_aligned : cfg.scale_off;
      Vec z(2);
      z << quantize(s0 * a0), quantize(s1 * a1);
      return z;
    };
    ex.z = draw_latent();
    ex.z_prime = draw_latent();

    double r = confounded_reward(ex.z, ex.c);
    double rp = confounded_reward(ex.z_prime, ex.c);
    Rng ls = root.fork("labels", static_cast<uint64_t>(i));
    ex.label = label_for(cfg.labels, r, rp, ls);
    // Observations carry two views of the response's quality.  The salient
    // view is the type-aligned quality at full strength; it fits perfectly
    // whenever t == c but names the wrong objective on inconsistent pairs.
    // The canonical view is both qualities on a common unit scale (scale
    // differences would reveal the type), weighted by content_gain; its
    // signs determine the labels exactly, so it supports the reward for
    // every objective, but it is weaker and redundant with the salient view
    // on consistent pairs.  Only the salient/canonical redundancy betrays
    // the prompt type, which is what lets type-adversarial training strip
    // the shortcut without touching the transferable signal.
    auto observed = [&](const Vec& z) {
      double s0 = ex.t == 0 ? cfg.scale_aligned : cfg.scale_off;
      double s1 = ex.t == 1 ? cfg.scale_aligned : cfg.scale_off;
      Vec w(3);
      w << z(ex.t), cfg.content_gain * z(0) / s0, cfg.content_gain * z(1) / s1;
      return w;
    };
    ex.e = map(observed(ex.z), ex.t, root.fork("emb", static_cast<uint64_t>(i)));
    ex.e_prime =
        map(observed(ex.z_prime), ex.t, root.fork("emb-prime", static_cast<uint64_t>(i)));
    d.examples.push_back(std::move(ex));
  }

  d.meta = Json{{"world", "confounded"},
                {"n", cfg.n},
                {"rho_conf", cfg.rho_conf},
                {"latent_corr", cfg.latent_corr},
                {"scale_aligned", cfg.scale_aligned},
                {"scale_off", cfg.scale_off},
                {"content_gain", cfg.content_gain},
                {"label_rule", label_rule_name(cfg.labels)},
                {"empirical_type_match",
                 static_cast<double>(type_matches) / cfg.n},
                {"embedding", embedding_meta(cfg.emb)},
                {"seed", cfg.seed},
                {"map_seed", cfg.map_seed.value_or(cfg.seed)}};
  return d;
}

// ---------------------------------------------------------------------------

double nonadditive_reward(const Vec& z, const NonadditiveConfig& cfg) {
  require(z.size() == 2, "nonadditive reward: latent must be [z_x, z_t]");
  double zx = z(0);
  require(zx == 0.0 || zx == 1.0, "nonadditive reward: prompt feature must be 0 or 1");
  double beta = zx == 0.0 ? cfg.beta0 : cfg.beta1;
  double gamma = zx == 0.0 ? cfg.gamma0 : cfg.gamma1;
  double dev = z(1) - gamma;
  return beta * dev * dev;
}

Dataset nonadditive_world(const NonadditiveConfig& cfg) {
  require(cfg.n > 0, "nonadditive world: n must be positive");
  if (!(cfg.gamma0 > cfg.gamma1)) {
    throw std::invalid_argument(
        "nonadditive world: gamma0 must exceed gamma1, got gamma0 = " +
        std::to_string(cfg.gamma0) + ", gamma1 = " + std::to_string(cfg.gamma1));
  }
  Rng root(cfg.seed);
  Dataset d;
  d.examples.reserve(static_cast<size_t>(cfg.n));
  for (int i = 0; i < cfg.n; ++i) {
    Rng zs = root.fork("latents", static_cast<uint64_t>(i));
    double zx = zs.bernoulli(0.5) ? 1.0 : 0.0;
    double zt = quantize(zs.uniform());
    double ztp = quantize(zs.uniform());

    PreferenceExample ex;
    ex.id = i;
    ex.t = static_cast<int>(zx);
    ex.c = 0;
    ex.z = Vec(2);
    ex.z << zx, zt;
    ex.z_prime = Vec(2);
    ex.z_prime << zx, ztp;
    // This world's embeddings are the latents themselves.
    ex.e = ex.z;
    ex.e_prime = ex.z_prime;
    double r = nonadditive_reward(ex.z, cfg);
    double rp = nonadditive_reward(ex.z_prime, cfg);
    Rng ls = root.fork("labels", static_cast<uint64_t>(i));
    ex.label = label_for(cfg.labels, r, rp, ls);
    d.examples.push_back(std::move(ex));
  }
  d.meta = Json{{"world", "nonadditive"},
                {"n", cfg.n},
                {"beta0", cfg.beta0},
                {"beta1", cfg.beta1},
                {"gamma0", cfg.gamma0},
                {"gamma1", cfg.gamma1},
                {"label_rule", label_rule_name(cfg.labels)},
                {"seed", cfg.seed}};
  return d;
}

// ---------------------------------------------------------------------------

Splits make_splits(const Dataset& d, SplitFractions fractions, uint64_t seed) {
  double sum = fractions.train + fractions.val + fractions.test;
  require(fractions.train >= 0.0 && fractions.val >= 0.0 && fractions.test >= 0.0 &&
              std::abs(sum - 1.0) < 1e-9,
          "make_splits: fractions must be non-negative and sum to 1");
  size_t n = d.examples.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  Rng stream = Rng(seed).fork("splits");
  stream.shuffle(order);

  size_t n_train = static_cast<size_t>(std::llround(fractions.train * static_cast<double>(n)));
  size_t n_val = static_cast<size_t>(std::llround(fractions.val * static_cast<double>(n)));
  n_train = std::min(n_train, n);
  n_val = std::min(n_val, n - n_train);

  auto take = [&](size_t begin, size_t end, const char* name) {
    Dataset out;
    out.examples.reserve(end - begin);
    for (size_t i = begin; i < end; ++i) out.examples.push_back(d.examples[order[i]]);
    out.meta = d.meta;
    out.meta["split"] = name;
    out.meta["split_seed"] = seed;
    return out;
  };
  Splits s;
  s.train = take(0, n_train, "train");
  s.val = take(n_train, n_train + n_val, "validation");
  s.test = take(n_train + n_val, n, "test");
  return s;
}

}  // namespace cpl
