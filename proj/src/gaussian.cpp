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

#include "cpl/gaussian.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "cpl/btl.hpp"  // comparison_nll
#include "cpl/parallel.hpp"

namespace cpl {

namespace {

void check_rho(double rho) {
  if (!std::isfinite(rho) || std::abs(rho) >= 1.0) {
    std::ostringstream msg;
    msg << "correlation must lie strictly inside (-1, 1), got " << rho;
    throw std::invalid_argument(msg.str());
  }
}

void check_alpha(double alpha) {
  if (!std::isfinite(alpha) || alpha < 0.0 || alpha > 1.0) {
    std::ostringstream msg;
    msg << "labeling weight must lie in [0, 1], got " << alpha;
    throw std::invalid_argument(msg.str());
  }
}

std::string fmt(double x) { return nlohmann::ordered_json(x).dump(); }

}  // namespace

void DeltaModel::validate() const {
  check_rho(rho);
  check_alpha(alpha);
}

double opposite_sign_probability(double rho) {
  check_rho(rho);
  return 0.5 - std::asin(rho) / M_PI;
}

Mat simulate_delta(double rho, size_t n, uint64_t seed) {
  check_rho(rho);
  if (n == 0) throw std::invalid_argument("simulate_delta: n must be positive");
  // Cholesky factor of [[1, rho], [rho, 1]].
  const double l21 = rho;
  const double l22 = std::sqrt(1.0 - rho * rho);
  Rng rng = Rng(seed).fork("delta-draws");
  Mat delta(static_cast<Eigen::Index>(n), 2);
  for (Eigen::Index i = 0; i < delta.rows(); ++i) {
    const double z1 = rng.normal();
    const double z2 = rng.normal();
    delta(i, 0) = z1;
    delta(i, 1) = l21 * z1 + l22 * z2;
  }
  return delta;
}

int label_delta(double d1, double d2, double alpha, Rng& rng) {
  check_alpha(alpha);
  const double margin = alpha * d1 + (1.0 - alpha) * d2;
  if (margin > 0.0) return 0;
  if (margin < 0.0) return 1;
  return rng.bernoulli(0.5) ? 0 : 1;
}

std::vector<int> label_deltas(const Mat& delta, double alpha, Rng& rng) {
  if (delta.cols() != 2) {
    throw std::invalid_argument("label_deltas: expected an n x 2 matrix");
  }
  std::vector<int> labels(static_cast<size_t>(delta.rows()));
  for (Eigen::Index i = 0; i < delta.rows(); ++i) {
    labels[static_cast<size_t>(i)] =
        label_delta(delta(i, 0), delta(i, 1), alpha, rng);
  }
  return labels;
}

namespace {

void check_fit_inputs(const Mat& delta, const std::vector<int>& labels) {
  if (delta.cols() != 2) {
    throw std::invalid_argument("fit_alpha: expected an n x 2 matrix");
  }
  if (delta.rows() == 0) {
    throw std::invalid_argument("fit_alpha: empty batch");
  }
  if (labels.size() != static_cast<size_t>(delta.rows())) {
    std::ostringstream msg;
    msg << "fit_alpha: " << delta.rows() << " draws but " << labels.size()
        << " labels";
    throw std::invalid_argument(msg.str());
  }
  bool saw_zero = false, saw_one = false;
  for (int l : labels) {
    if (l == 0) {
      saw_zero = true;
    } else if (l == 1) {
      saw_one = true;
    } else {
      std::ostringstream msg;
      msg << "fit_alpha: label must be 0 or 1, got " << l;
      throw std::invalid_argument(msg.str());
    }
  }
  if (!saw_zero || !saw_one) {
    throw std::invalid_argument(
        "fit_alpha: all labels identical; the weight is not identified");
  }
}

}  // namespace

namespace {

// Second moment of the draws (not mean-centered; the deltas are symmetric
// about the origin by construction).  Rejects samples whose differences span
// less than two dimensions, where the margin scale below can vanish.
void second_moment(const Mat& delta, double& m11, double& m12, double& m22) {
  const double n = static_cast<double>(delta.rows());
  m11 = delta.col(0).squaredNorm() / n;
  m12 = delta.col(0).dot(delta.col(1)) / n;
  m22 = delta.col(1).squaredNorm() / n;
  const double det = m11 * m22 - m12 * m12;
  if (!(det > 0.0) || !std::isfinite(det)) {
    throw std::invalid_argument(
        "sample is degenerate: score differences span less than two "
        "dimensions");
  }
}

}  // namespace

double alpha_nll(const Mat& delta, const std::vector<int>& labels, double a) {
  if (delta.cols() != 2 ||
      labels.size() != static_cast<size_t>(delta.rows())) {
    throw std::invalid_argument("alpha_nll: draws and labels do not line up");
  }
  double m11, m12, m22;
  second_moment(delta, m11, m12, m22);
  // Standardize the weighted margin to unit scale under the sample.  The raw
  // margin would reward long weight vectors: on deterministic (separable)
  // labels its likelihood collapses onto an endpoint weight regardless of the
  // labeling direction.  Dividing by the margin's own scale makes the
  // objective compare decision boundaries instead of margin magnitudes.
  const double scale =
      std::sqrt(a * a * m11 + 2.0 * a * (1.0 - a) * m12 +
                (1.0 - a) * (1.0 - a) * m22);
  double total = 0.0;
  for (Eigen::Index i = 0; i < delta.rows(); ++i) {
    const double margin =
        (a * delta(i, 0) + (1.0 - a) * delta(i, 1)) / scale;
    // Winner margin: positive margin means label 0 was the likely outcome.
    total += comparison_nll(labels[static_cast<size_t>(i)] == 0 ? margin
                                                                : -margin);
  }
  return total;
}

double fit_alpha(const Mat& delta, const std::vector<int>& labels,
                 double tol) {
  check_fit_inputs(delta, labels);
  if (!(tol > 0.0) || !std::isfinite(tol)) {
    throw std::invalid_argument("fit_alpha: tolerance must be positive");
  }
  // Golden-section search; the standardized objective has a single valley on
  // [0, 1] (its population version is strictly decreasing in the correlation
  // between fitted and labeling margins, maximized only at the true weight).
  const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
  double lo = 0.0, hi = 1.0;
  double x1 = hi - invphi * (hi - lo);
  double x2 = lo + invphi * (hi - lo);
  double f1 = alpha_nll(delta, labels, x1);
  double f2 = alpha_nll(delta, labels, x2);
  while (hi - lo > tol) {
    if (f1 < f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - invphi * (hi - lo);
      f1 = alpha_nll(delta, labels, x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + invphi * (hi - lo);
      f2 = alpha_nll(delta, labels, x2);
    }
  }
  return 0.5 * (lo + hi);
}

ShiftEval accuracy_under_shift(double alpha_hat, double alpha, double rho_test,
                               size_t n, uint64_t seed) {
  check_alpha(alpha_hat);
  check_alpha(alpha);
  check_rho(rho_test);
  if (n == 0) {
    throw std::invalid_argument("accuracy_under_shift: n must be positive");
  }
  Mat delta = simulate_delta(rho_test, n, Rng::derive(seed, "shift-draws", 0));
  Rng label_rng = Rng(seed).fork("shift-labels");
  Rng pred_rng = Rng(seed).fork("shift-pred-ties");
  ShiftEval out;
  out.n = n;
  size_t correct = 0;
  for (Eigen::Index i = 0; i < delta.rows(); ++i) {
    const double d1 = delta(i, 0);
    const double d2 = delta(i, 1);
    const int truth = label_delta(d1, d2, alpha, label_rng);
    const int pred = label_delta(d1, d2, alpha_hat, pred_rng);
    if (pred == truth) {
      ++correct;
    } else if ((d1 > 0.0) == (d2 > 0.0)) {
      ++out.errors_same_sign;
    } else {
      ++out.errors_mixed_sign;
    }
  }
  out.accuracy = static_cast<double>(correct) / static_cast<double>(n);
  return out;
}

void GaussianStudyConfig::validate() const {
  if (rhos.empty()) {
    throw std::invalid_argument("gaussian study: no correlation values");
  }
  for (double r : rhos) check_rho(r);
  check_alpha(alpha);
  if (n_mc == 0) throw std::invalid_argument("gaussian study: n_mc must be positive");
  if (n_fit == 0) throw std::invalid_argument("gaussian study: n_fit must be positive");
  if (fit_reps < 2) {
    throw std::invalid_argument(
        "gaussian study: need at least 2 replications for a variance");
  }
  if (jobs < 1) throw std::invalid_argument("gaussian study: jobs must be >= 1");
}

std::vector<GaussianStudyRow> run_gaussian_study(
    const GaussianStudyConfig& config) {
  config.validate();
  std::vector<GaussianStudyRow> rows(config.rhos.size());
  parallel_for(rows.size(), config.jobs, [&](size_t i) {
    const double rho = config.rhos[i];
    GaussianStudyRow row;
    row.rho = rho;
    row.closed_form = opposite_sign_probability(rho);
    row.mc_n = config.n_mc;
    row.fit_reps = config.fit_reps;

    Mat mc = simulate_delta(rho, config.n_mc,
                            Rng::derive(config.seed, "mc", i));
    size_t opposite = 0;
    for (Eigen::Index k = 0; k < mc.rows(); ++k) {
      if ((mc(k, 0) > 0.0) != (mc(k, 1) > 0.0)) ++opposite;
    }
    row.mc_estimate =
        static_cast<double>(opposite) / static_cast<double>(config.n_mc);

    // Refit the labeling weight on independent batches; the spread across
    // replications shows how correlation starves the fit of information.
    double sum = 0.0, sum_sq = 0.0;
    const uint64_t row_seed = Rng::derive(config.seed, "fit", i);
    for (int rep = 0; rep < config.fit_reps; ++rep) {
      const uint64_t rep_seed =
          Rng::derive(row_seed, "rep", static_cast<uint64_t>(rep));
      Mat delta = simulate_delta(rho, config.n_fit, rep_seed);
      Rng label_rng = Rng(rep_seed).fork("labels");
      std::vector<int> labels = label_deltas(delta, config.alpha, label_rng);
      const double a_hat = fit_alpha(delta, labels);
      sum += a_hat;
      sum_sq += a_hat * a_hat;
    }
    const double k = static_cast<double>(config.fit_reps);
    row.alpha_hat_mean = sum / k;
    // Sample variance; clamped at zero against cancellation residue.
    row.alpha_hat_var = std::max(0.0, (sum_sq - sum * sum / k) / (k - 1.0));
    rows[i] = row;
  });
  return rows;
}

std::string gaussian_study_csv(const std::vector<GaussianStudyRow>& rows) {
  std::ostringstream out;
  out << "rho,closed_form,mc_estimate,mc_n,alpha_hat_mean,alpha_hat_var,"
         "fit_reps\n";
  for (const auto& r : rows) {
    out << fmt(r.rho) << ',' << fmt(r.closed_form) << ',' << fmt(r.mc_estimate)
        << ',' << r.mc_n << ',' << fmt(r.alpha_hat_mean) << ','
        << fmt(r.alpha_hat_var) << ',' << r.fit_reps << '\n';
  }
  return out.str();
}

}  // namespace cpl
