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
#include <optional>
#include <string>
#include <vector>

#include "cpl/nn.hpp"
#include "cpl/worlds.hpp"

namespace cpl {

// Three ways to score (embedding, objective):
//   Base        — trunk MLP over [e; onehot(c)], scalar out.
//   Multihead   — shared trunk to a latent z-hat, one scalar head per objective.
//   Adversarial — Multihead plus an objective classifier fed z-hat through a
//                 gradient-reversal layer, so the trunk is pushed to *discard*
//                 objective-predictive structure while the heads still fit
//                 the labels.
enum class Variant { kBase, kMultihead, kAdversarial };

std::string variant_name(Variant v);
Variant variant_from_name(const std::string& name);

struct RewardModelSpec {
  Variant variant = Variant::kBase;
  MlpSpec trunk;
  MlpSpec head;       // per objective; Multihead/Adversarial only
  MlpSpec adversary;  // Adversarial only
  double lambda = 0.0;
  bool lambda_set = false;
  int n_objectives = 2;
  uint64_t init_seed = 0;

  void validate() const;
  Json to_json() const;
  static RewardModelSpec from_json(const Json& j);

  // Desk-scale constructors; widths [in, hidden, hidden, out] for the trunk
  // and [latent, hidden, 1] for heads/adversary.
  static RewardModelSpec base(int embed_dim, int hidden, int n_objectives,
                              uint64_t init_seed);
  static RewardModelSpec multihead(int embed_dim, int hidden, int latent,
                                   int n_objectives, uint64_t init_seed);
  static RewardModelSpec adversarial(int embed_dim, int hidden, int latent,
                                     int n_objectives, double lambda,
                                     uint64_t init_seed);
};

// A mini-batch in matrix form: one row per comparison.
struct Batch {
  Mat e, e_prime;
  std::vector<int> c;
  std::vector<int> label;
  size_t size() const { return c.size(); }
};

Batch make_batch(const Dataset& d);
Batch make_batch(const Dataset& d, const std::vector<size_t>& idx);

class RewardModel {
 public:
  RewardModel() = default;
  static RewardModel init(const RewardModelSpec& spec);

  const RewardModelSpec& spec() const { return spec_; }

  // Graph-free scoring.
  double base_reward(const Vec& e, int c) const;
  double multihead_reward(const Vec& e, int c) const;
  double reward(const Vec& e, int c) const;  // dispatches on variant
  Vec latent(const Vec& e) const;            // z-hat; Multihead/Adversarial
  // One reward per row of es.
  Vec reward_batch(const Mat& es, const std::vector<int>& cs) const;

  // Every tensor in a stable order: trunk, head 0, head 1, ..., adversary.
  std::vector<Mat*> parameters();
  std::vector<const Mat*> parameters() const;

  // Half-open index ranges into parameters() for each component.
  struct ParamLayout {
    std::pair<size_t, size_t> trunk;
    std::vector<std::pair<size_t, size_t>> heads;
    std::pair<size_t, size_t> adversary;
  };
  ParamLayout layout() const;

  Mlp& trunk() { return trunk_; }
  const Mlp& trunk() const { return trunk_; }
  Mlp& head(int c);
  const Mlp& head(int c) const;
  Mlp& adversary() { return adversary_; }
  const Mlp& adversary() const { return adversary_; }

 private:
  RewardModelSpec spec_;
  Mlp trunk_;
  std::vector<Mlp> heads_;
  Mlp adversary_;
};

// One optimization step's computation graph over a batch.  `params` aligns
// with RewardModel::parameters(); `reward_nll` and `adv_bce` are the two
// scalar loss terms (per-comparison means), and `total` is what training
// differentiates.  The adversary term sits behind grad_reverse, so a single
// backward pass on `total` descends the reward loss in the trunk/head
// parameters while the adversary itself still descends its own
// classification loss.
struct LossGraph {
  Graph g;
  Graph::NodeId total = -1;
  Graph::NodeId reward_nll = -1;
  Graph::NodeId adv_bce = -1;  // -1 unless Adversarial
  std::vector<Graph::NodeId> params;
};

struct LossOptions {
  std::optional<double> lambda_override;
  // Wire the adversary directly (no reversal); used by tests to read off
  // +dL_adv/dtheta when verifying the combined gradient assembly.
  bool bypass_reversal = false;
};

LossGraph build_loss_graph(const RewardModel& model, const Batch& batch,
                           const LossOptions& opts = {});

// Forward-only evaluation of the two loss terms (per-comparison means).
// Requires the Adversarial variant with lambda set.
std::pair<double, double> adversarial_losses(const RewardModel& model,
                                             const Batch& batch);

// ---------------------------------------------------------------------------

struct TrainConfig {
  int epochs = 10;
  int batch_size = 64;
  double lr = 1e-4;
  std::vector<uint64_t> seeds = {0};  // one training run per seed
  // Early stopping always selects the highest validation accuracy; ties go
  // to the earliest epoch.
};

struct EpochStats {
  int epoch = 0;  // 1-based
  double train_nll = 0, train_acc = 0;
  double val_nll = 0, val_acc = 0;
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
  int best_epoch = 0;
  double best_val_acc = 0;
};

struct TrainedModel {
  RewardModel model;
  TrainHistory history;
  uint64_t seed = 0;
};

// Mean NLL and accuracy of a model over a dataset, batched.
struct EvalStats {
  double nll = 0;
  double accuracy = 0;
};
EvalStats evaluate(const RewardModel& model, const Dataset& d);

// One deterministic run: `seed` drives initialization and epoch shuffling.
// Returns the best-validation-accuracy checkpoint plus per-epoch history.
// Non-finite training loss aborts with a diagnostic naming epoch and batch.
TrainedModel train_one(const RewardModelSpec& spec, const Splits& splits,
                       const TrainConfig& cfg, uint64_t seed);

// One run per cfg.seeds entry.
std::vector<TrainedModel> train(const RewardModelSpec& spec, const Splits& splits,
                                const TrainConfig& cfg);

// Checkpoint = binary weights (base path + ".cplw") + JSON sidecar with the
// spec, seed, best epoch, and metrics (base path + ".json").
void save_checkpoint(const std::filesystem::path& base, const TrainedModel& tm);
TrainedModel load_checkpoint(const std::filesystem::path& base);

}  // namespace cpl
