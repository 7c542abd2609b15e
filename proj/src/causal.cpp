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

#include "cpl/causal.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "cpl/autodiff.hpp"  // sigmoid_stable
#include "cpl/btl.hpp"       // invert_to_reward_diff
#include "cpl/rng.hpp"

namespace cpl {
namespace {

constexpr double kSumTol = 1e-9;

std::string triple_name(int x, int y, int yp) {
  return "(x=" + std::to_string(x) + ", y=" + std::to_string(y) +
         ", y'=" + std::to_string(yp) + ")";
}

std::string latent_name(int zx, int zt, int ztp) {
  return "(zx=" + std::to_string(zx) + ", zt=" + std::to_string(zt) +
         ", zt'=" + std::to_string(ztp) + ")";
}

Json vec_to_json(const Vec& v) {
  Json a = Json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

Vec vec_from_json(const Json& j) {
  Vec v(j.size());
  for (size_t i = 0; i < j.size(); ++i) v(static_cast<int>(i)) = j[i].get<double>();
  return v;
}

Json mat_to_json(const Mat& m) {
  Json rows = Json::array();
  for (int r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (int c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

Mat mat_from_json(const Json& j) {
  const int rows = static_cast<int>(j.size());
  const int cols = rows > 0 ? static_cast<int>(j[0].size()) : 0;
  Mat m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    if (static_cast<int>(j[r].size()) != cols) {
      throw std::invalid_argument("finite world: ragged matrix rows in JSON");
    }
    for (int c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
  }
  return m;
}

Json triple_table_to_json(const TripleTable& t) {
  Json per_x = Json::array();
  for (int x = 0; x < t.n_x; ++x) {
    Json per_y = Json::array();
    for (int y = 0; y < t.n_y; ++y) {
      Json row = Json::array();
      for (int yp = 0; yp < t.n_y; ++yp) row.push_back(t.at(x, y, yp));
      per_y.push_back(row);
    }
    per_x.push_back(per_y);
  }
  return per_x;
}

TripleTable triple_table_from_json(const Json& j, int n_x, int n_y) {
  TripleTable t(n_x, n_y);
  if (static_cast<int>(j.size()) != n_x) {
    throw std::invalid_argument("finite world: pi has wrong prompt count");
  }
  for (int x = 0; x < n_x; ++x) {
    if (static_cast<int>(j[x].size()) != n_y) {
      throw std::invalid_argument("finite world: pi has wrong response count");
    }
    for (int y = 0; y < n_y; ++y) {
      if (static_cast<int>(j[x][y].size()) != n_y) {
        throw std::invalid_argument("finite world: pi has wrong response count");
      }
      for (int yp = 0; yp < n_y; ++yp) t.at(x, y, yp) = j[x][y][yp].get<double>();
    }
  }
  return t;
}

// Inverse-CDF draw over a nonnegative weight vector that sums to ~1.
size_t pick(const std::vector<double>& probs, double u) {
  double acc = 0.0;
  size_t last_positive = 0;
  for (size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] > 0.0) last_positive = i;
    acc += probs[i];
    if (u < acc) return i;
  }
  return last_positive;  // u landed in the rounding slack at the top
}

size_t pick(const Vec& probs, double u) {
  double acc = 0.0;
  int last_positive = 0;
  for (int i = 0; i < probs.size(); ++i) {
    if (probs(i) > 0.0) last_positive = i;
    acc += probs(i);
    if (u < acc) return static_cast<size_t>(i);
  }
  return static_cast<size_t>(last_positive);
}

std::string fmt(double x) { return Json(x).dump(); }

}  // namespace

// ---------------------------------------------------------------------------

TripleTable pair_independent_pi(const Vec& p_x, const Mat& q) {
  const int n_x = static_cast<int>(p_x.size());
  const int n_y = static_cast<int>(q.cols());
  if (q.rows() != n_x) {
    throw std::invalid_argument("pair_independent_pi: q rows must match p_x");
  }
  TripleTable t(n_x, n_y);
  for (int x = 0; x < n_x; ++x) {
    double sum_sq = 0.0;
    for (int y = 0; y < n_y; ++y) sum_sq += q(x, y) * q(x, y);
    const double denom = 1.0 - sum_sq;
    if (!(denom > 0.0)) {
      throw std::invalid_argument(
          "pair_independent_pi: q(.|x=" + std::to_string(x) +
          ") is a point mass; distinct pairs have no probability");
    }
    for (int y = 0; y < n_y; ++y) {
      for (int yp = 0; yp < n_y; ++yp) {
        if (y == yp) continue;
        t.at(x, y, yp) = p_x(x) * q(x, y) * q(x, yp) / denom;
      }
    }
  }
  return t;
}

void FiniteWorld::validate() const {
  if (n_x < 1 || n_y < 2 || n_c < 1) {
    throw std::invalid_argument(
        "finite world: need at least 1 prompt, 2 responses, 1 objective");
  }
  if (static_cast<int>(p_c.size()) != n_c) {
    throw std::invalid_argument("finite world: P(C) has wrong length");
  }
  double sum_c = 0.0;
  for (int c = 0; c < n_c; ++c) {
    if (!(p_c(c) >= 0.0) || !std::isfinite(p_c(c))) {
      throw std::invalid_argument("finite world: P(C) has a bad entry");
    }
    sum_c += p_c(c);
  }
  if (std::abs(sum_c - 1.0) > kSumTol) {
    throw std::invalid_argument("finite world: P(C) sums to " + fmt(sum_c) +
                                ", not 1");
  }
  if (static_cast<int>(reward.size()) != n_c) {
    throw std::invalid_argument("finite world: need one reward table per objective");
  }
  for (int c = 0; c < n_c; ++c) {
    if (reward[c].rows() != n_x || reward[c].cols() != n_y) {
      throw std::invalid_argument("finite world: reward table for c=" +
                                  std::to_string(c) + " has wrong shape");
    }
    if (!reward[c].allFinite()) {
      throw std::invalid_argument("finite world: reward table for c=" +
                                  std::to_string(c) + " has non-finite entries");
    }
  }
  if (static_cast<int>(pi.size()) != n_c) {
    throw std::invalid_argument("finite world: need one assignment table per objective");
  }
  for (int c = 0; c < n_c; ++c) {
    const TripleTable& t = pi[c];
    if (t.n_x != n_x || t.n_y != n_y) {
      throw std::invalid_argument("finite world: pi for c=" + std::to_string(c) +
                                  " has wrong shape");
    }
    double sum = 0.0;
    for (int x = 0; x < n_x; ++x) {
      for (int y = 0; y < n_y; ++y) {
        for (int yp = 0; yp < n_y; ++yp) {
          const double p = t.at(x, y, yp);
          if (!(p >= 0.0) || !std::isfinite(p)) {
            throw std::invalid_argument("finite world: pi" + triple_name(x, y, yp) +
                                        " given c=" + std::to_string(c) +
                                        " is a bad probability");
          }
          if (y == yp && p != 0.0) {
            throw std::invalid_argument(
                "finite world: comparisons pit distinct responses; pi" +
                triple_name(x, y, yp) + " must be 0");
          }
          sum += p;
        }
      }
    }
    if (std::abs(sum - 1.0) > kSumTol) {
      throw std::invalid_argument("finite world: pi given c=" +
                                  std::to_string(c) + " sums to " + fmt(sum) +
                                  ", not 1");
    }
  }
  if (independent_responses) {
    const auto& ir = *independent_responses;
    if (static_cast<int>(ir.p_x.size()) != n_x || ir.q.rows() != n_x ||
        ir.q.cols() != n_y) {
      throw std::invalid_argument(
          "finite world: independent-response declaration has wrong shape");
    }
    double sx = 0.0;
    for (int x = 0; x < n_x; ++x) sx += ir.p_x(x);
    if (std::abs(sx - 1.0) > kSumTol) {
      throw std::invalid_argument(
          "finite world: declared prompt marginal sums to " + fmt(sx));
    }
    for (int x = 0; x < n_x; ++x) {
      double sy = 0.0;
      for (int y = 0; y < n_y; ++y) {
        if (!(ir.q(x, y) >= 0.0)) {
          throw std::invalid_argument(
              "finite world: declared response distribution has a bad entry");
        }
        sy += ir.q(x, y);
      }
      if (std::abs(sy - 1.0) > kSumTol) {
        throw std::invalid_argument(
            "finite world: declared response distribution for x=" +
            std::to_string(x) + " sums to " + fmt(sy));
      }
    }
    const TripleTable expected = pair_independent_pi(ir.p_x, ir.q);
    for (int c = 0; c < n_c; ++c) {
      for (size_t i = 0; i < expected.v.size(); ++i) {
        if (std::abs(pi[c].v[i] - expected.v[i]) > kSumTol) {
          throw std::invalid_argument(
              "finite world: pi does not match the declared "
              "independent-response construction");
        }
      }
    }
  }
  if (latent) {
    const auto& g = *latent;
    if (g.n_zx < 1 || g.n_zt < 1) {
      throw std::invalid_argument("finite world: latent domain must be non-empty");
    }
    if (static_cast<int>(g.zx_of_x.size()) != n_x) {
      throw std::invalid_argument("finite world: latent prompt map has wrong length");
    }
    for (int zx : g.zx_of_x) {
      if (zx < 0 || zx >= g.n_zx) {
        throw std::invalid_argument("finite world: latent prompt value out of range");
      }
    }
    if (static_cast<int>(g.zt_of_xy.size()) != n_x) {
      throw std::invalid_argument("finite world: latent treatment map has wrong shape");
    }
    for (const auto& row : g.zt_of_xy) {
      if (static_cast<int>(row.size()) != n_y) {
        throw std::invalid_argument("finite world: latent treatment map has wrong shape");
      }
      for (int zt : row) {
        if (zt < 0 || zt >= g.n_zt) {
          throw std::invalid_argument(
              "finite world: latent treatment value out of range");
        }
      }
    }
  }
}

Json FiniteWorld::to_json() const {
  Json j{{"format", "cpl-finite-world"},
         {"n_x", n_x},
         {"n_y", n_y},
         {"n_c", n_c},
         {"p_c", vec_to_json(p_c)}};
  Json rewards = Json::array();
  for (const auto& r : reward) rewards.push_back(mat_to_json(r));
  j["reward"] = rewards;
  Json pis = Json::array();
  for (const auto& t : pi) pis.push_back(triple_table_to_json(t));
  j["pi"] = pis;
  if (independent_responses) {
    j["independent_responses"] = Json{{"p_x", vec_to_json(independent_responses->p_x)},
                                      {"q", mat_to_json(independent_responses->q)}};
  }
  if (latent) {
    j["latent"] = Json{{"n_zx", latent->n_zx},
                       {"n_zt", latent->n_zt},
                       {"zx_of_x", latent->zx_of_x},
                       {"zt_of_xy", latent->zt_of_xy}};
  }
  return j;
}

FiniteWorld FiniteWorld::from_json(const Json& j) {
  if (!j.is_object() || j.value("format", "") != "cpl-finite-world") {
    throw std::invalid_argument("not a finite-world JSON (missing format tag)");
  }
  FiniteWorld w;
  w.n_x = j.at("n_x").get<int>();
  w.n_y = j.at("n_y").get<int>();
  w.n_c = j.at("n_c").get<int>();
  w.p_c = vec_from_json(j.at("p_c"));
  for (const auto& r : j.at("reward")) w.reward.push_back(mat_from_json(r));
  for (const auto& t : j.at("pi")) {
    w.pi.push_back(triple_table_from_json(t, w.n_x, w.n_y));
  }
  if (j.contains("independent_responses")) {
    IndependentResponses ir;
    ir.p_x = vec_from_json(j.at("independent_responses").at("p_x"));
    ir.q = mat_from_json(j.at("independent_responses").at("q"));
    w.independent_responses = ir;
  }
  if (j.contains("latent")) {
    LatentMap g;
    const Json& lj = j.at("latent");
    g.n_zx = lj.at("n_zx").get<int>();
    g.n_zt = lj.at("n_zt").get<int>();
    g.zx_of_x = lj.at("zx_of_x").get<std::vector<int>>();
    g.zt_of_xy = lj.at("zt_of_xy").get<std::vector<std::vector<int>>>();
    w.latent = g;
  }
  w.validate();
  return w;
}

void save_finite_world(const FiniteWorld& w, const std::filesystem::path& path) {
  w.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot open " + path.string() + " for writing");
  }
  out << w.to_json().dump(2) << "\n";
}

FiniteWorld load_finite_world(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return FiniteWorld::from_json(Json::parse(in));
}

// Ready-made worlds -----------------------------------------------------------

FiniteWorld two_response_micro_world(bool confounded_assignment) {
  FiniteWorld w;
  w.n_x = 1;
  w.n_y = 2;
  w.n_c = 2;
  w.p_c = Vec::Constant(2, 0.5);
  Mat r0(1, 2), r1(1, 2);
  r0 << 1.0, 0.0;
  r1 << 0.0, 1.0;
  w.reward = {r0, r1};
  if (confounded_assignment) {
    // Objective 0 only ever sees (a, b); objective 1 only (b, a).
    TripleTable t0(1, 2), t1(1, 2);
    t0.at(0, 0, 1) = 1.0;
    t1.at(0, 1, 0) = 1.0;
    w.pi = {t0, t1};
  } else {
    FiniteWorld::IndependentResponses ir;
    ir.p_x = Vec::Constant(1, 1.0);
    ir.q = Mat::Constant(1, 2, 0.5);
    TripleTable t = pair_independent_pi(ir.p_x, ir.q);
    w.pi = {t, t};
    w.independent_responses = ir;
  }
  w.validate();
  return w;
}

FiniteWorld randomized_assignment_world(uint64_t seed) {
  FiniteWorld w;
  w.n_x = 3;
  w.n_y = 3;
  w.n_c = 2;
  w.p_c = Vec::Constant(2, 0.5);

  Rng root(seed);
  Rng reward_stream = root.fork("rewards");
  Rng assign_stream = root.fork("assignment");

  // Per prompt, both objectives rank the responses identically but on
  // different scales, so objectives are heterogeneous while every pairwise
  // reward gap stays >= 1.5 and expected labels stay away from 1/2.
  const double level0[3] = {-1.5, 0.0, 1.5};
  const double level1[3] = {-2.2, 0.0, 2.2};
  Mat r0(3, 3), r1(3, 3);
  for (int x = 0; x < 3; ++x) {
    std::vector<int> perm = {0, 1, 2};
    reward_stream.shuffle(perm);
    for (int y = 0; y < 3; ++y) {
      r0(x, y) = level0[perm[y]];
      r1(x, y) = level1[perm[y]];
    }
  }
  w.reward = {r0, r1};

  // Mild jitter around uniform keeps every cell's sample share healthy while
  // still randomizing the assignment; the same policy serves both objectives.
  FiniteWorld::IndependentResponses ir;
  Vec px(3);
  for (int x = 0; x < 3; ++x) px(x) = 0.9 + 0.2 * assign_stream.uniform();
  px /= px.sum();
  ir.p_x = px;
  Mat q(3, 3);
  for (int x = 0; x < 3; ++x) {
    for (int y = 0; y < 3; ++y) q(x, y) = 0.9 + 0.2 * assign_stream.uniform();
    q.row(x) /= q.row(x).sum();
  }
  ir.q = q;
  TripleTable t = pair_independent_pi(ir.p_x, ir.q);
  w.pi = {t, t};
  w.independent_responses = ir;
  w.validate();
  return w;
}

FiniteWorld shared_latent_world() {
  FiniteWorld w;
  w.n_x = 2;
  w.n_y = 3;
  w.n_c = 1;
  w.p_c = Vec::Constant(1, 1.0);

  LatentMap g;
  g.n_zx = 1;
  g.n_zt = 3;
  g.zx_of_x = {0, 0};             // both prompts share one latent
  g.zt_of_xy = {{0, 1, 1},        // x0: y1 and y2 share a treatment latent
                {0, 1, 2}};       // x1: y2 reaches the otherwise-unused zt=2
  w.latent = g;

  // Rewards depend on the pair only through (zx, zt).
  const double f[3] = {1.0, 0.0, -1.0};
  Mat r(2, 3);
  for (int x = 0; x < 2; ++x) {
    for (int y = 0; y < 3; ++y) r(x, y) = f[g.zt_of_xy[x][y]];
  }
  w.reward = {r};

  // All six x0 comparisons plus x1's (y1, y0); the held-out (x1, y0, y1) and
  // every comparison touching x1's y2 get zero mass.
  TripleTable t(2, 3);
  int live = 0;
  for (int y = 0; y < 3; ++y) {
    for (int yp = 0; yp < 3; ++yp) {
      if (y != yp) {
        t.at(0, y, yp) = 1.0;
        ++live;
      }
    }
  }
  t.at(1, 1, 0) = 1.0;
  ++live;
  for (double& p : t.v) p /= live;
  w.pi = {t};
  w.validate();
  return w;
}

// ---------------------------------------------------------------------------

OutcomeTable enumerate_potential_outcomes(const FiniteWorld& w) {
  w.validate();
  OutcomeTable out;
  out.n_c = w.n_c;
  out.marginal = TripleTable(w.n_x, w.n_y);
  out.propensity = TripleTable(w.n_x, w.n_y);
  out.conditional.assign(w.n_c, TripleTable(w.n_x, w.n_y));
  out.propensity_c = w.pi;
  for (int x = 0; x < w.n_x; ++x) {
    for (int y = 0; y < w.n_y; ++y) {
      for (int yp = 0; yp < w.n_y; ++yp) {
        double marginal = 0.0;
        double prop = 0.0;
        for (int c = 0; c < w.n_c; ++c) {
          const double e = sigmoid_stable(w.reward[c](x, y) - w.reward[c](x, yp));
          out.conditional[c].at(x, y, yp) = e;
          marginal += w.p_c(c) * e;
          prop += w.p_c(c) * w.pi[c].at(x, y, yp);
        }
        out.marginal.at(x, y, yp) = marginal;
        out.propensity.at(x, y, yp) = prop;
      }
    }
  }
  return out;
}

std::string OutcomeTable::to_csv() const {
  std::ostringstream out;
  out << "x,y,yprime,marginal,propensity";
  for (int c = 0; c < n_c; ++c) {
    out << ",e_given_c" << c << ",pi_given_c" << c;
  }
  out << "\n";
  for (int x = 0; x < marginal.n_x; ++x) {
    for (int y = 0; y < marginal.n_y; ++y) {
      for (int yp = 0; yp < marginal.n_y; ++yp) {
        if (y == yp) continue;
        out << x << ',' << y << ',' << yp << ',' << fmt(marginal.at(x, y, yp))
            << ',' << fmt(propensity.at(x, y, yp));
        for (int c = 0; c < n_c; ++c) {
          out << ',' << fmt(conditional[c].at(x, y, yp)) << ','
              << fmt(propensity_c[c].at(x, y, yp));
        }
        out << "\n";
      }
    }
  }
  return out.str();
}

std::vector<std::array<int, 3>> heterogeneous_triples(const FiniteWorld& w,
                                                      const OutcomeTable& t) {
  std::vector<std::array<int, 3>> out;
  for (int x = 0; x < w.n_x; ++x) {
    for (int y = 0; y < w.n_y; ++y) {
      for (int yp = 0; yp < w.n_y; ++yp) {
        if (y == yp) continue;
        bool differs = false;
        for (int c = 1; c < w.n_c && !differs; ++c) {
          differs = t.conditional[c].at(x, y, yp) !=
                    t.conditional[0].at(x, y, yp);
        }
        if (differs) out.push_back({x, y, yp});
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

std::vector<CausalSample> simulate_preferences(const FiniteWorld& w, size_t n,
                                               uint64_t seed) {
  w.validate();
  if (n == 0) throw std::invalid_argument("simulate_preferences: n must be > 0");
  Rng stream = Rng(seed).fork("causal-sim");
  std::vector<CausalSample> samples;
  samples.reserve(n);
  const size_t per_x = static_cast<size_t>(w.n_y) * w.n_y;
  for (size_t i = 0; i < n; ++i) {
    CausalSample s;
    s.c = static_cast<int>(pick(w.p_c, stream.uniform()));
    const size_t flat = pick(w.pi[s.c].v, stream.uniform());
    s.x = static_cast<int>(flat / per_x);
    s.y = static_cast<int>((flat % per_x) / w.n_y);
    s.yp = static_cast<int>(flat % w.n_y);
    const double p_first =
        sigmoid_stable(w.reward[s.c](s.x, s.y) - w.reward[s.c](s.x, s.yp));
    s.label = stream.bernoulli(p_first) ? 1 : 0;
    samples.push_back(s);
  }
  return samples;
}

// ---------------------------------------------------------------------------

namespace {

bool is_latent(Conditioning c) {
  return c == Conditioning::kLatentMarginal || c == Conditioning::kLatentGivenC;
}

bool is_given_c(Conditioning c) {
  return c == Conditioning::kRawGivenC || c == Conditioning::kLatentGivenC;
}

// Latent cells reachable from some raw triple (the meaningful conditioning
// domain; cells outside the image cannot correspond to any comparison).
std::vector<std::array<int, 3>> latent_image(const FiniteWorld& w) {
  std::vector<std::array<int, 3>> cells;
  for (int x = 0; x < w.n_x; ++x) {
    for (int y = 0; y < w.n_y; ++y) {
      for (int yp = 0; yp < w.n_y; ++yp) {
        if (y == yp) continue;
        std::array<int, 3> cell = {w.latent->zx_of_x[x],
                                   w.latent->zt_of_xy[x][y],
                                   w.latent->zt_of_xy[x][yp]};
        if (std::find(cells.begin(), cells.end(), cell) == cells.end()) {
          cells.push_back(cell);
        }
      }
    }
  }
  return cells;
}

}  // namespace

PluginTable plugin_estimator(const FiniteWorld& w,
                             const std::vector<CausalSample>& samples,
                             Conditioning cond) {
  w.validate();
  if (samples.empty()) {
    throw std::invalid_argument("plugin_estimator: no samples");
  }
  if (is_latent(cond) && !w.latent) {
    throw std::invalid_argument(
        "plugin_estimator: latent conditioning needs a latent map");
  }

  PluginTable table;
  table.conditioning = cond;

  // Declare every cell of the conditioning domain up front so zero-support
  // cells are visible rather than silently absent.
  std::vector<int> c_values;
  if (is_given_c(cond)) {
    for (int c = 0; c < w.n_c; ++c) c_values.push_back(c);
  } else {
    c_values.push_back(-1);
  }
  if (is_latent(cond)) {
    for (const auto& cell : latent_image(w)) {
      for (int c : c_values) {
        table.cells[{cell[0], cell[1], cell[2], c}] = PluginCell{};
      }
    }
  } else {
    for (int x = 0; x < w.n_x; ++x) {
      for (int y = 0; y < w.n_y; ++y) {
        for (int yp = 0; yp < w.n_y; ++yp) {
          if (y == yp) continue;
          for (int c : c_values) table.cells[{x, y, yp, c}] = PluginCell{};
        }
      }
    }
  }

  std::map<std::array<int, 4>, double> sums;
  for (const auto& s : samples) {
    std::array<int, 4> key;
    if (is_latent(cond)) {
      key = {w.latent->zx_of_x[s.x], w.latent->zt_of_xy[s.x][s.y],
             w.latent->zt_of_xy[s.x][s.yp], is_given_c(cond) ? s.c : -1};
    } else {
      key = {s.x, s.y, s.yp, is_given_c(cond) ? s.c : -1};
    }
    auto it = table.cells.find(key);
    if (it == table.cells.end()) {
      throw std::logic_error("plugin_estimator: sample outside the world's domain");
    }
    it->second.count += 1;
    sums[key] += s.label;
  }
  for (auto& [key, cell] : table.cells) {
    if (cell.count > 0) {
      cell.mean = sums[key] / static_cast<double>(cell.count);
    }
  }
  return table;
}

const PluginCell& PluginTable::cell(int a, int b, int d, int c) const {
  auto it = cells.find({a, b, d, c});
  if (it == cells.end()) {
    throw std::out_of_range("plugin table: no cell (" + std::to_string(a) +
                            ", " + std::to_string(b) + ", " + std::to_string(d) +
                            ", c=" + std::to_string(c) + ")");
  }
  return it->second;
}

double PluginTable::estimate(int a, int b, int d, int c) const {
  const PluginCell& pc = cell(a, b, d, c);
  if (pc.count == 0) {
    throw std::runtime_error("plugin table: cell (" + std::to_string(a) + ", " +
                             std::to_string(b) + ", " + std::to_string(d) +
                             ", c=" + std::to_string(c) +
                             ") has no data (zero support; not imputed)");
  }
  return pc.mean;
}

std::vector<std::array<int, 4>> PluginTable::zero_support() const {
  std::vector<std::array<int, 4>> out;
  for (const auto& [key, cell] : cells) {
    if (cell.count == 0) out.push_back(key);
  }
  return out;
}

std::string PluginTable::to_csv() const {
  std::ostringstream out;
  const bool latent = is_latent(conditioning);
  out << (latent ? "zx,zt,ztprime,c,mean,count,has_data\n"
                 : "x,y,yprime,c,mean,count,has_data\n");
  for (const auto& [key, cell] : cells) {
    out << key[0] << ',' << key[1] << ',' << key[2] << ',' << key[3] << ',';
    if (cell.count > 0) out << fmt(cell.mean);
    out << ',' << cell.count << ',' << (cell.count > 0 ? 1 : 0) << "\n";
  }
  return out.str();
}

// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> check_assignment_independent_of_c(const FiniteWorld& w) {
  std::vector<std::string> failures;
  for (int c = 1; c < w.n_c; ++c) {
    // One finding per objective keeps the report short.
    bool found = false;
    for (size_t i = 0; i < w.pi[c].v.size() && !found; ++i) {
      if (std::abs(w.pi[c].v[i] - w.pi[0].v[i]) > 1e-12) {
        const size_t per_x = static_cast<size_t>(w.n_y) * w.n_y;
        const int x = static_cast<int>(i / per_x);
        const int y = static_cast<int>((i % per_x) / w.n_y);
        const int yp = static_cast<int>(i % w.n_y);
        failures.push_back(
            "unconfoundedness violated: assignment depends on the objective "
            "at " +
            triple_name(x, y, yp) + " (c=0 vs c=" + std::to_string(c) + ")");
        found = true;
      }
    }
  }
  return failures;
}

void run_cell_checks(IdentificationReport& report,
                     std::optional<double> tolerance) {
  report.pass = true;
  report.worst_abs_error = 0.0;
  for (auto& check : report.checks) {
    if (check.withheld) continue;
    if (check.count == 0) {
      check.ok = false;
      report.pass = false;
      continue;
    }
    const double err = std::abs(check.estimate - check.truth);
    check.tolerance = tolerance.value_or(
        3.0 * std::sqrt(check.truth * (1.0 - check.truth) /
                        static_cast<double>(check.count)));
    check.ok = err <= check.tolerance;
    if (!check.ok) report.pass = false;
    if (err >= report.worst_abs_error) {
      report.worst_abs_error = err;
      report.worst_cell = check.cell;
    }
  }
}

}  // namespace

IdentificationReport verify_raw_identification(const FiniteWorld& w, size_t n,
                                               uint64_t seed,
                                               std::optional<double> tolerance) {
  w.validate();
  IdentificationReport report;
  report.n = n;
  report.seed = seed;

  for (int c = 0; c < w.n_c; ++c) {
    for (int x = 0; x < w.n_x; ++x) {
      for (int y = 0; y < w.n_y; ++y) {
        for (int yp = 0; yp < w.n_y; ++yp) {
          if (y == yp) continue;
          if (w.pi[c].at(x, y, yp) <= 0.0) {
            report.assumption_failures.push_back(
                "positivity violated: pi" + triple_name(x, y, yp) +
                " given c=" + std::to_string(c) + " is 0");
          }
        }
      }
    }
  }
  for (auto& f : check_assignment_independent_of_c(w)) {
    report.assumption_failures.push_back(std::move(f));
  }
  report.assumptions_ok = report.assumption_failures.empty();
  if (!report.assumptions_ok) {
    report.pass = false;
    return report;
  }

  const OutcomeTable truth = enumerate_potential_outcomes(w);
  const auto samples = simulate_preferences(w, n, seed);
  const PluginTable plugin =
      plugin_estimator(w, samples, Conditioning::kRawMarginal);
  for (int x = 0; x < w.n_x; ++x) {
    for (int y = 0; y < w.n_y; ++y) {
      for (int yp = 0; yp < w.n_y; ++yp) {
        if (y == yp) continue;
        CellCheck check;
        check.cell = triple_name(x, y, yp);
        check.truth = truth.marginal.at(x, y, yp);
        const PluginCell& pc = plugin.cell(x, y, yp);
        check.count = pc.count;
        check.estimate = pc.count > 0 ? pc.mean : 0.0;
        report.checks.push_back(check);
      }
    }
  }
  run_cell_checks(report, tolerance);
  return report;
}

IdentificationReport verify_latent_identification(
    const FiniteWorld& w, size_t n, uint64_t seed,
    std::optional<double> tolerance) {
  w.validate();
  if (!w.latent) {
    throw std::invalid_argument(
        "verify_latent_identification: the world has no latent map");
  }
  IdentificationReport report;
  report.n = n;
  report.seed = seed;

  // Sufficiency: every (x, y) sharing a latent image must share rewards.
  const LatentMap& g = *w.latent;
  std::map<std::pair<int, int>, std::pair<int, int>> representative;
  for (int x = 0; x < w.n_x; ++x) {
    for (int y = 0; y < w.n_y; ++y) {
      const std::pair<int, int> image = {g.zx_of_x[x], g.zt_of_xy[x][y]};
      auto [it, inserted] = representative.try_emplace(image, x, y);
      if (inserted) continue;
      const auto [rx, ry] = it->second;
      for (int c = 0; c < w.n_c; ++c) {
        if (w.reward[c](x, y) != w.reward[c](rx, ry)) {
          report.assumption_failures.push_back(
              "sufficiency violated: r_" + std::to_string(c) + "(x=" +
              std::to_string(rx) + ", y=" + std::to_string(ry) + ") = " +
              fmt(w.reward[c](rx, ry)) + " but r_" + std::to_string(c) +
              "(x=" + std::to_string(x) + ", y=" + std::to_string(y) + ") = " +
              fmt(w.reward[c](x, y)) + " share latent (zx=" +
              std::to_string(image.first) + ", zt=" +
              std::to_string(image.second) + ")");
        }
      }
    }
  }
  for (auto& f : check_assignment_independent_of_c(w)) {
    report.assumption_failures.push_back(std::move(f));
  }
  report.assumptions_ok = report.assumption_failures.empty();
  if (!report.assumptions_ok) {
    report.pass = false;
    return report;
  }

  // Latent cells with zero propensity are flagged and withheld, not imputed.
  std::vector<std::array<int, 3>> flagged;
  for (const auto& cell : latent_image(w)) {
    double prop = 0.0;
    for (int c = 0; c < w.n_c; ++c) {
      for (int x = 0; x < w.n_x; ++x) {
        if (g.zx_of_x[x] != cell[0]) continue;
        for (int y = 0; y < w.n_y; ++y) {
          if (g.zt_of_xy[x][y] != cell[1]) continue;
          for (int yp = 0; yp < w.n_y; ++yp) {
            if (yp == y || g.zt_of_xy[x][yp] != cell[2]) continue;
            prop += w.p_c(c) * w.pi[c].at(x, y, yp);
          }
        }
      }
    }
    if (prop <= 0.0) {
      flagged.push_back(cell);
      report.flagged_cells.push_back(latent_name(cell[0], cell[1], cell[2]));
    }
  }

  const OutcomeTable truth = enumerate_potential_outcomes(w);
  const auto samples = simulate_preferences(w, n, seed);
  const PluginTable plugin =
      plugin_estimator(w, samples, Conditioning::kLatentMarginal);
  for (int x = 0; x < w.n_x; ++x) {
    for (int y = 0; y < w.n_y; ++y) {
      for (int yp = 0; yp < w.n_y; ++yp) {
        if (y == yp) continue;
        const std::array<int, 3> cell = {g.zx_of_x[x], g.zt_of_xy[x][y],
                                         g.zt_of_xy[x][yp]};
        CellCheck check;
        check.cell = triple_name(x, y, yp) + " via " +
                     latent_name(cell[0], cell[1], cell[2]);
        check.truth = truth.marginal.at(x, y, yp);
        if (std::find(flagged.begin(), flagged.end(), cell) != flagged.end()) {
          check.withheld = true;
          check.ok = true;  // nothing to verify; the flag carries the news
          report.checks.push_back(check);
          continue;
        }
        const PluginCell& pc = plugin.cell(cell[0], cell[1], cell[2]);
        check.count = pc.count;
        check.estimate = pc.count > 0 ? pc.mean : 0.0;
        report.checks.push_back(check);
      }
    }
  }
  run_cell_checks(report, tolerance);
  return report;
}

double max_raw_error(const FiniteWorld& w, const OutcomeTable& truth,
                     const PluginTable& raw_marginal) {
  if (raw_marginal.conditioning != Conditioning::kRawMarginal) {
    throw std::invalid_argument("max_raw_error: expects a raw marginal table");
  }
  double worst = 0.0;
  for (int x = 0; x < w.n_x; ++x) {
    for (int y = 0; y < w.n_y; ++y) {
      for (int yp = 0; yp < w.n_y; ++yp) {
        if (y == yp) continue;
        const PluginCell& pc = raw_marginal.cell(x, y, yp);
        if (pc.count == 0) continue;
        worst = std::max(worst, std::abs(pc.mean - truth.marginal.at(x, y, yp)));
      }
    }
  }
  return worst;
}

double recover_reward_difference(const FiniteWorld& w,
                                 const std::vector<CausalSample>& samples,
                                 int x, int y, int yp) {
  w.validate();
  if (w.n_c != 1) {
    throw std::invalid_argument(
        "recover_reward_difference: needs a single-objective world (reward "
        "differences are only identified without objective mixing)");
  }
  if (x < 0 || x >= w.n_x || y < 0 || y >= w.n_y || yp < 0 || yp >= w.n_y ||
      y == yp) {
    throw std::invalid_argument("recover_reward_difference: bad triple " +
                                triple_name(x, y, yp));
  }
  size_t count = 0, wins = 0;
  for (const auto& s : samples) {
    if (s.x == x && s.y == y && s.yp == yp) {
      ++count;
      wins += s.label;
    }
  }
  if (count == 0) {
    throw std::invalid_argument("recover_reward_difference: no samples for " +
                                triple_name(x, y, yp));
  }
  const double mean = static_cast<double>(wins) / static_cast<double>(count);
  if (mean <= 0.0 || mean >= 1.0) {
    throw std::invalid_argument(
        "recover_reward_difference: empirical mean is exactly " + fmt(mean) +
        " for " + triple_name(x, y, yp) + "; the logit is undefined at the "
        "boundary");
  }
  return invert_to_reward_diff(mean);
}

// ---------------------------------------------------------------------------

Json IdentificationReport::to_json() const {
  Json checks_json = Json::array();
  for (const auto& c : checks) {
    checks_json.push_back(Json{{"cell", c.cell},
                               {"truth", c.truth},
                               {"estimate", c.estimate},
                               {"tolerance", c.tolerance},
                               {"count", c.count},
                               {"ok", c.ok},
                               {"withheld", c.withheld}});
  }
  return Json{{"format", "cpl-identification-report"},
              {"assumptions_ok", assumptions_ok},
              {"assumption_failures", assumption_failures},
              {"pass", pass},
              {"worst_abs_error", worst_abs_error},
              {"worst_cell", worst_cell},
              {"flagged_cells", flagged_cells},
              {"n", n},
              {"seed", seed},
              {"checks", checks_json}};
}

std::string IdentificationReport::to_csv() const {
  std::ostringstream out;
  out << "cell,truth,estimate,abs_error,tolerance,count,ok,withheld\n";
  for (const auto& c : checks) {
    out << '"' << c.cell << "\"," << fmt(c.truth) << ',' << fmt(c.estimate)
        << ',' << fmt(std::abs(c.estimate - c.truth)) << ',' << fmt(c.tolerance)
        << ',' << c.count << ',' << (c.ok ? 1 : 0) << ',' << (c.withheld ? 1 : 0)
        << "\n";
  }
  return out.str();
}

}  // namespace cpl
