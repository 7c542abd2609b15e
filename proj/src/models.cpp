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

#include "cpl/models.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace cpl {
namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

Json mlp_spec_to_json(const MlpSpec& s) {
  return Json{{"widths", s.widths},
              {"activation", s.activation == Activation::kGelu ? "gelu" : "identity"},
              {"init_seed", s.init_seed}};
}

MlpSpec mlp_spec_from_json(const Json& j) {
  MlpSpec s;
  s.widths = j.at("widths").get<std::vector<int>>();
  std::string act = j.at("activation").get<std::string>();
  if (act == "gelu") {
    s.activation = Activation::kGelu;
  } else if (act == "identity") {
    s.activation = Activation::kIdentity;
  } else {
    throw std::invalid_argument("model spec: unknown activation '" + act + "'");
  }
  s.init_seed = j.at("init_seed").get<uint64_t>();
  return s;
}

}  // namespace

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::kBase: return "base";
    case Variant::kMultihead: return "multihead";
    case Variant::kAdversarial: return "adversarial";
  }
  throw std::logic_error("variant_name: unknown variant");
}

Variant variant_from_name(const std::string& name) {
  if (name == "base") return Variant::kBase;
  if (name == "multihead") return Variant::kMultihead;
  if (name == "adversarial") return Variant::kAdversarial;
  throw std::invalid_argument("unknown model variant '" + name + "'");
}

void RewardModelSpec::validate() const {
  trunk.validate();
  require(n_objectives == 1 || n_objectives == 2,
          "model spec: n_objectives must be 1 or 2");
  switch (variant) {
    case Variant::kBase:
      require(head.widths.empty() && adversary.widths.empty(),
              "model spec: Base takes no head or adversary networks");
      require(trunk.out_dim() == 1, "model spec: Base trunk must be scalar-out");
      break;
    case Variant::kMultihead:
      head.validate();
      require(adversary.widths.empty(),
              "model spec: Multihead takes no adversary network");
      require(trunk.out_dim() == head.in_dim(),
              "model spec: trunk output width " + std::to_string(trunk.out_dim()) +
                  " must equal head input width " + std::to_string(head.in_dim()));
      require(head.out_dim() == 1, "model spec: heads must be scalar-out");
      break;
    case Variant::kAdversarial:
      head.validate();
      adversary.validate();
      require(trunk.out_dim() == head.in_dim(),
              "model spec: trunk output width " + std::to_string(trunk.out_dim()) +
                  " must equal head input width " + std::to_string(head.in_dim()));
      require(head.out_dim() == 1, "model spec: heads must be scalar-out");
      require(adversary.in_dim() == trunk.out_dim(),
              "model spec: adversary must read the trunk's latent");
      require(adversary.out_dim() == 1, "model spec: adversary must be scalar-out");
      require(lambda_set, "model spec: Adversarial requires lambda");
      require(lambda >= 0.0 && std::isfinite(lambda),
              "model spec: lambda must be finite and >= 0");
      break;
  }
}

Json RewardModelSpec::to_json() const {
  Json j{{"variant", variant_name(variant)},
         {"trunk", mlp_spec_to_json(trunk)},
         {"n_objectives", n_objectives},
         {"init_seed", init_seed}};
  if (!head.widths.empty()) j["head"] = mlp_spec_to_json(head);
  if (!adversary.widths.empty()) j["adversary"] = mlp_spec_to_json(adversary);
  if (lambda_set) j["lambda"] = lambda;
  return j;
}

RewardModelSpec RewardModelSpec::from_json(const Json& j) {
  RewardModelSpec s;
  s.variant = variant_from_name(j.at("variant").get<std::string>());
  s.trunk = mlp_spec_from_json(j.at("trunk"));
  if (j.contains("head")) s.head = mlp_spec_from_json(j["head"]);
  if (j.contains("adversary")) s.adversary = mlp_spec_from_json(j["adversary"]);
  if (j.contains("lambda")) {
    s.lambda = j["lambda"].get<double>();
    s.lambda_set = true;
  }
  s.n_objectives = j.at("n_objectives").get<int>();
  s.init_seed = j.at("init_seed").get<uint64_t>();
  s.validate();
  return s;
}

RewardModelSpec RewardModelSpec::base(int embed_dim, int hidden, int n_objectives,
                                      uint64_t init_seed) {
  RewardModelSpec s;
  s.variant = Variant::kBase;
  s.trunk.widths = {embed_dim + n_objectives, hidden, hidden, 1};
  s.n_objectives = n_objectives;
  s.init_seed = init_seed;
  return s;
}

RewardModelSpec RewardModelSpec::multihead(int embed_dim, int hidden, int latent,
                                           int n_objectives, uint64_t init_seed) {
  RewardModelSpec s;
  s.variant = Variant::kMultihead;
  s.trunk.widths = {embed_dim, hidden, hidden, latent};
  s.head.widths = {latent, hidden, 1};
  s.n_objectives = n_objectives;
  s.init_seed = init_seed;
  return s;
}

RewardModelSpec RewardModelSpec::adversarial(int embed_dim, int hidden, int latent,
                                             int n_objectives, double lambda,
                                             uint64_t init_seed) {
  RewardModelSpec s = multihead(embed_dim, hidden, latent, n_objectives, init_seed);
  s.variant = Variant::kAdversarial;
  s.adversary.widths = {latent, hidden, 1};
  s.lambda = lambda;
  s.lambda_set = true;
  return s;
}

// ---------------------------------------------------------------------------

Batch make_batch(const Dataset& d) {
  std::vector<size_t> idx(d.examples.size());
  std::iota(idx.begin(), idx.end(), size_t{0});
  return make_batch(d, idx);
}

Batch make_batch(const Dataset& d, const std::vector<size_t>& idx) {
  require(!idx.empty(), "batch: empty index set");
  int dim = static_cast<int>(d.examples[idx[0]].e.size());
  Batch b;
  b.e = Mat(static_cast<Eigen::Index>(idx.size()), dim);
  b.e_prime = Mat(static_cast<Eigen::Index>(idx.size()), dim);
  b.c.reserve(idx.size());
  b.label.reserve(idx.size());
  for (size_t row = 0; row < idx.size(); ++row) {
    const PreferenceExample& ex = d.examples[idx[row]];
    require(static_cast<int>(ex.e.size()) == dim &&
                static_cast<int>(ex.e_prime.size()) == dim,
            "batch: inconsistent embedding dimensions");
    b.e.row(static_cast<Eigen::Index>(row)) = ex.e.transpose();
    b.e_prime.row(static_cast<Eigen::Index>(row)) = ex.e_prime.transpose();
    b.c.push_back(ex.c);
    b.label.push_back(ex.label);
  }
  return b;
}

// ---------------------------------------------------------------------------

RewardModel RewardModel::init(const RewardModelSpec& spec) {
  spec.validate();
  RewardModel m;
  m.spec_ = spec;
  Rng root(spec.init_seed);
  MlpSpec trunk_spec = spec.trunk;
  trunk_spec.init_seed = root.fork("trunk").seed();
  m.trunk_ = Mlp::glorot_init(trunk_spec);
  if (spec.variant != Variant::kBase) {
    for (int k = 0; k < spec.n_objectives; ++k) {
      MlpSpec hs = spec.head;
      hs.init_seed = root.fork("head", static_cast<uint64_t>(k)).seed();
      m.heads_.push_back(Mlp::glorot_init(hs));
    }
  }
  if (spec.variant == Variant::kAdversarial) {
    MlpSpec as = spec.adversary;
    as.init_seed = root.fork("adversary").seed();
    m.adversary_ = Mlp::glorot_init(as);
  }
  return m;
}

Mlp& RewardModel::head(int c) {
  require(c >= 0 && c < static_cast<int>(heads_.size()),
          "model: head index out of range");
  return heads_[static_cast<size_t>(c)];
}

const Mlp& RewardModel::head(int c) const {
  require(c >= 0 && c < static_cast<int>(heads_.size()),
          "model: head index out of range");
  return heads_[static_cast<size_t>(c)];
}

double RewardModel::base_reward(const Vec& e, int c) const {
  require(spec_.variant == Variant::kBase, "base_reward: model is not Base");
  require(c >= 0 && c < spec_.n_objectives, "base_reward: objective out of range");
  require(static_cast<int>(e.size()) + spec_.n_objectives == spec_.trunk.in_dim(),
          "base_reward: embedding has dim " + std::to_string(e.size()) +
              ", trunk expects " +
              std::to_string(spec_.trunk.in_dim() - spec_.n_objectives));
  Mat x = Mat::Zero(1, spec_.trunk.in_dim());
  x.block(0, 0, 1, e.size()) = e.transpose();
  x(0, e.size() + c) = 1.0;
  return trunk_(x)(0, 0);
}

Vec RewardModel::latent(const Vec& e) const {
  require(spec_.variant != Variant::kBase, "latent: Base has no latent bottleneck");
  Mat x = e.transpose();
  return trunk_(x).row(0).transpose();
}

double RewardModel::multihead_reward(const Vec& e, int c) const {
  require(spec_.variant != Variant::kBase, "multihead_reward: model is Base");
  require(c >= 0 && c < spec_.n_objectives,
          "multihead_reward: objective must be in {0,..," +
              std::to_string(spec_.n_objectives - 1) + "}, got " + std::to_string(c));
  Mat zhat = trunk_(e.transpose());
  return heads_[static_cast<size_t>(c)](zhat)(0, 0);
}

double RewardModel::reward(const Vec& e, int c) const {
  return spec_.variant == Variant::kBase ? base_reward(e, c)
                                         : multihead_reward(e, c);
}

Vec RewardModel::reward_batch(const Mat& es, const std::vector<int>& cs) const {
  require(static_cast<size_t>(es.rows()) == cs.size(),
          "reward_batch: row/objective count mismatch");
  for (int c : cs) {
    require(c >= 0 && c < spec_.n_objectives, "reward_batch: objective out of range");
  }
  Vec out(es.rows());
  if (spec_.variant == Variant::kBase) {
    Mat x = Mat::Zero(es.rows(), spec_.trunk.in_dim());
    require(es.cols() + spec_.n_objectives == spec_.trunk.in_dim(),
            "reward_batch: embedding dim mismatch");
    x.block(0, 0, es.rows(), es.cols()) = es;
    for (Eigen::Index i = 0; i < es.rows(); ++i) {
      x(i, es.cols() + cs[static_cast<size_t>(i)]) = 1.0;
    }
    out = trunk_(x).col(0);
  } else {
    Mat zhat = trunk_(es);
    std::vector<Mat> per_head;
    per_head.reserve(heads_.size());
    for (const Mlp& h : heads_) per_head.push_back(h(zhat));
    for (Eigen::Index i = 0; i < es.rows(); ++i) {
      out(i) = per_head[static_cast<size_t>(cs[static_cast<size_t>(i)])](i, 0);
    }
  }
  return out;
}

std::vector<Mat*> RewardModel::parameters() {
  std::vector<Mat*> out;
  for (Mat& t : trunk_.tensors()) out.push_back(&t);
  for (Mlp& h : heads_) {
    for (Mat& t : h.tensors()) out.push_back(&t);
  }
  for (Mat& t : adversary_.tensors()) out.push_back(&t);
  return out;
}

std::vector<const Mat*> RewardModel::parameters() const {
  std::vector<const Mat*> out;
  for (const Mat& t : trunk_.tensors()) out.push_back(&t);
  for (const Mlp& h : heads_) {
    for (const Mat& t : h.tensors()) out.push_back(&t);
  }
  for (const Mat& t : adversary_.tensors()) out.push_back(&t);
  return out;
}

RewardModel::ParamLayout RewardModel::layout() const {
  ParamLayout l;
  size_t pos = 0;
  l.trunk = {pos, pos + trunk_.tensors().size()};
  pos = l.trunk.second;
  for (const Mlp& h : heads_) {
    l.heads.push_back({pos, pos + h.tensors().size()});
    pos += h.tensors().size();
  }
  l.adversary = {pos, pos + adversary_.tensors().size()};
  return l;
}

// ---------------------------------------------------------------------------

LossGraph build_loss_graph(const RewardModel& model, const Batch& batch,
                           const LossOptions& opts) {
  const RewardModelSpec& sp = model.spec();
  size_t m = batch.size();
  require(m > 0, "loss graph: empty batch");
  require(batch.e.rows() == static_cast<Eigen::Index>(m) &&
              batch.e_prime.rows() == static_cast<Eigen::Index>(m) &&
              batch.label.size() == m,
          "loss graph: ragged batch");
  for (size_t i = 0; i < m; ++i) {
    require(batch.label[i] == 0 || batch.label[i] == 1,
            "loss graph: label must be 0 or 1");
    require(batch.c[i] >= 0 && batch.c[i] < sp.n_objectives,
            "loss graph: objective out of range");
  }

  LossGraph lg;
  Graph& g = lg.g;
  Graph::NodeId r = -1, rp = -1, zhat = -1, zhatp = -1;

  if (sp.variant == Variant::kBase) {
    require(batch.e.cols() + sp.n_objectives == sp.trunk.in_dim(),
            "loss graph: embedding dim " + std::to_string(batch.e.cols()) +
                " does not match trunk input " + std::to_string(sp.trunk.in_dim()));
    auto with_onehot = [&](const Mat& e) {
      Mat x = Mat::Zero(e.rows(), sp.trunk.in_dim());
      x.block(0, 0, e.rows(), e.cols()) = e;
      for (Eigen::Index i = 0; i < e.rows(); ++i) {
        x(i, e.cols() + batch.c[static_cast<size_t>(i)]) = 1.0;
      }
      return x;
    };
    Graph::NodeId xe = g.constant(with_onehot(batch.e));
    Graph::NodeId xep = g.constant(with_onehot(batch.e_prime));
    std::vector<Graph::NodeId> tids = model.trunk().place(g);
    lg.params = tids;
    r = Mlp::apply(g, sp.trunk, tids, xe);
    rp = Mlp::apply(g, sp.trunk, tids, xep);
  } else {
    require(batch.e.cols() == sp.trunk.in_dim(),
            "loss graph: embedding dim " + std::to_string(batch.e.cols()) +
                " does not match trunk input " + std::to_string(sp.trunk.in_dim()));
    Graph::NodeId xe = g.constant(batch.e);
    Graph::NodeId xep = g.constant(batch.e_prime);
    std::vector<Graph::NodeId> tids = model.trunk().place(g);
    lg.params = tids;
    zhat = Mlp::apply(g, sp.trunk, tids, xe);
    zhatp = Mlp::apply(g, sp.trunk, tids, xep);

    std::vector<Graph::NodeId> head_r, head_rp;
    for (int k = 0; k < sp.n_objectives; ++k) {
      std::vector<Graph::NodeId> hids = model.head(k).place(g);
      lg.params.insert(lg.params.end(), hids.begin(), hids.end());
      head_r.push_back(Mlp::apply(g, sp.head, hids, zhat));
      head_rp.push_back(Mlp::apply(g, sp.head, hids, zhatp));
    }
    if (sp.n_objectives == 1) {
      r = head_r[0];
      rp = head_rp[0];
    } else {
      // Route each comparison through its objective's head; the masked-out
      // head sees an exactly zero gradient.
      Mat mask0 = Mat::Zero(static_cast<Eigen::Index>(m), 1);
      Mat mask1 = Mat::Zero(static_cast<Eigen::Index>(m), 1);
      for (size_t i = 0; i < m; ++i) {
        (batch.c[i] == 0 ? mask0 : mask1)(static_cast<Eigen::Index>(i), 0) = 1.0;
      }
      r = g.add(g.cmul(head_r[0], mask0), g.cmul(head_r[1], mask1));
      rp = g.add(g.cmul(head_rp[0], mask0), g.cmul(head_rp[1], mask1));
    }
  }

  // Winner margin per comparison: flip the difference's sign where the
  // second response won.
  Mat sign(static_cast<Eigen::Index>(m), 1);
  for (size_t i = 0; i < m; ++i) {
    sign(static_cast<Eigen::Index>(i), 0) = batch.label[i] == 0 ? 1.0 : -1.0;
  }
  Graph::NodeId margins = g.cmul(g.sub(r, rp), sign);
  lg.reward_nll = g.scale(g.softplus_neg_sum(margins), 1.0 / static_cast<double>(m));
  lg.total = lg.reward_nll;

  if (sp.variant == Variant::kAdversarial) {
    double lambda = opts.lambda_override.value_or(sp.lambda);
    Graph::NodeId az = zhat, azp = zhatp;
    if (!opts.bypass_reversal) {
      az = g.grad_reverse(zhat, lambda);
      azp = g.grad_reverse(zhatp, lambda);
    }
    std::vector<Graph::NodeId> aids = model.adversary().place(g);
    lg.params.insert(lg.params.end(), aids.begin(), aids.end());
    Graph::NodeId logits = Mlp::apply(g, sp.adversary, aids, az);
    Graph::NodeId logitsp = Mlp::apply(g, sp.adversary, aids, azp);
    Mat targets(static_cast<Eigen::Index>(m), 1);
    for (size_t i = 0; i < m; ++i) {
      targets(static_cast<Eigen::Index>(i), 0) = static_cast<double>(batch.c[i]);
    }
    Graph::NodeId bce = g.add(g.bce_with_logits_sum(logits, targets),
                              g.bce_with_logits_sum(logitsp, targets));
    lg.adv_bce = g.scale(bce, 1.0 / static_cast<double>(m));
    lg.total = g.add(lg.reward_nll, lg.adv_bce);
  }
  return lg;
}

std::pair<double, double> adversarial_losses(const RewardModel& model,
                                             const Batch& batch) {
  require(model.spec().variant == Variant::kAdversarial,
          "adversarial_losses: model is not Adversarial");
  LossGraph lg = build_loss_graph(model, batch);
  return {lg.g.value(lg.reward_nll)(0, 0), lg.g.value(lg.adv_bce)(0, 0)};
}

// ---------------------------------------------------------------------------

EvalStats evaluate(const RewardModel& model, const Dataset& d) {
  require(!d.examples.empty(), "evaluate: empty dataset");
  Batch b = make_batch(d);
  Vec r = model.reward_batch(b.e, b.c);
  Vec rp = model.reward_batch(b.e_prime, b.c);
  EvalStats s;
  size_t correct = 0;
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    int label = b.label[static_cast<size_t>(i)];
    double margin = label == 0 ? r(i) - rp(i) : rp(i) - r(i);
    s.nll += softplus(-margin);
    int pred = r(i) < rp(i) ? 1 : 0;
    correct += (pred == label);
  }
  s.nll /= static_cast<double>(r.size());
  s.accuracy = static_cast<double>(correct) / static_cast<double>(r.size());
  return s;
}

TrainedModel train_one(const RewardModelSpec& spec, const Splits& splits,
                       const TrainConfig& cfg, uint64_t seed) {
  require(cfg.epochs > 0, "train: epochs must be positive");
  require(cfg.batch_size > 0, "train: batch size must be positive");
  require(!splits.train.examples.empty(), "train: empty training split");
  require(!splits.val.examples.empty(), "train: empty validation split");

  RewardModelSpec s = spec;
  s.init_seed = Rng(seed).fork("init").seed();
  RewardModel model = RewardModel::init(s);
  std::vector<Mat*> params = model.parameters();
  Adam adam(AdamConfig{.lr = cfg.lr});

  size_t n = splits.train.examples.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  Rng shuffle_root = Rng(seed).fork("shuffle");

  TrainedModel out;
  out.seed = seed;
  double best_acc = -1.0;
  std::vector<Mat> best_weights;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng es = shuffle_root.fork("epoch", static_cast<uint64_t>(epoch));
    es.shuffle(order);
    size_t batch_no = 0;
    for (size_t begin = 0; begin < n; begin += static_cast<size_t>(cfg.batch_size)) {
      size_t end = std::min(n, begin + static_cast<size_t>(cfg.batch_size));
      std::vector<size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(begin),
                              order.begin() + static_cast<std::ptrdiff_t>(end));
      ++batch_no;
      LossGraph lg = build_loss_graph(model, make_batch(splits.train, idx));
      double loss = lg.g.value(lg.total)(0, 0);
      if (!std::isfinite(loss)) {
        throw std::runtime_error("training diverged: non-finite loss at epoch " +
                                 std::to_string(epoch) + ", batch " +
                                 std::to_string(batch_no));
      }
      lg.g.backward(lg.total);
      std::vector<Mat> grads;
      grads.reserve(lg.params.size());
      for (Graph::NodeId id : lg.params) grads.push_back(lg.g.grad(id));
      adam.step(params, grads);
    }

    EvalStats tr = evaluate(model, splits.train);
    EvalStats va = evaluate(model, splits.val);
    out.history.epochs.push_back({epoch, tr.nll, tr.accuracy, va.nll, va.accuracy});
    if (va.accuracy > best_acc) {
      best_acc = va.accuracy;
      out.history.best_epoch = epoch;
      best_weights.clear();
      for (const Mat* p : params) best_weights.push_back(*p);
    }
  }

  for (size_t i = 0; i < params.size(); ++i) *params[i] = best_weights[i];
  out.history.best_val_acc = best_acc;
  out.model = std::move(model);
  return out;
}

std::vector<TrainedModel> train(const RewardModelSpec& spec, const Splits& splits,
                                const TrainConfig& cfg) {
  require(!cfg.seeds.empty(), "train: seed list must be non-empty");
  std::vector<TrainedModel> out;
  out.reserve(cfg.seeds.size());
  for (uint64_t seed : cfg.seeds) out.push_back(train_one(spec, splits, cfg, seed));
  return out;
}

// ---------------------------------------------------------------------------

void save_checkpoint(const std::filesystem::path& base, const TrainedModel& tm) {
  save_weights(base.string() + ".cplw", tm.model.parameters());

  Json epochs = Json::array();
  for (const EpochStats& e : tm.history.epochs) {
    epochs.push_back(Json{{"epoch", e.epoch},
                          {"train_nll", e.train_nll},
                          {"train_acc", e.train_acc},
                          {"val_nll", e.val_nll},
                          {"val_acc", e.val_acc}});
  }
  Json sidecar{{"spec", tm.model.spec().to_json()},
               {"seed", tm.seed},
               {"best_epoch", tm.history.best_epoch},
               {"metrics", Json{{"best_val_acc", tm.history.best_val_acc},
                                {"epochs", epochs}}}};
  std::ofstream out(base.string() + ".json", std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("checkpoint: cannot open " + base.string() + ".json");
  out << sidecar.dump(2) << '\n';
}

TrainedModel load_checkpoint(const std::filesystem::path& base) {
  std::ifstream in(base.string() + ".json", std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + base.string() + ".json");
  Json sidecar = Json::parse(in);

  TrainedModel tm;
  tm.model = RewardModel::init(RewardModelSpec::from_json(sidecar.at("spec")));
  tm.seed = sidecar.at("seed").get<uint64_t>();
  tm.history.best_epoch = sidecar.at("best_epoch").get<int>();
  const Json& metrics = sidecar.at("metrics");
  tm.history.best_val_acc = metrics.at("best_val_acc").get<double>();
  for (const Json& e : metrics.at("epochs")) {
    tm.history.epochs.push_back({e.at("epoch").get<int>(),
                                 e.at("train_nll").get<double>(),
                                 e.at("train_acc").get<double>(),
                                 e.at("val_nll").get<double>(),
                                 e.at("val_acc").get<double>()});
  }

  std::vector<Mat> tensors = load_weights(base.string() + ".cplw");
  std::vector<Mat*> params = tm.model.parameters();
  if (tensors.size() != params.size()) {
    throw std::runtime_error("checkpoint: tensor count does not match spec");
  }
  for (size_t i = 0; i < params.size(); ++i) {
    if (tensors[i].rows() != params[i]->rows() ||
        tensors[i].cols() != params[i]->cols()) {
      throw std::runtime_error("checkpoint: tensor " + std::to_string(i) +
                               " shape does not match spec");
    }
    *params[i] = std::move(tensors[i]);
  }
  return tm;
}

}  // namespace cpl
