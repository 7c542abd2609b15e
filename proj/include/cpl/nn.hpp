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
#include <vector>

#include "cpl/autodiff.hpp"
#include "cpl/linalg.hpp"
#include "cpl/rng.hpp"

namespace cpl {

enum class Activation { kGelu, kIdentity };

struct MlpSpec {
  std::vector<int> widths;  // [in, hidden..., out]; at least one layer
  Activation activation = Activation::kGelu;
  uint64_t init_seed = 0;

  int in_dim() const { return widths.front(); }
  int out_dim() const { return widths.back(); }
  void validate() const;  // throws std::invalid_argument on bad widths
};

// A plain feed-forward stack: x -> (x W + b -> act)* with the activation
// applied between layers but not after the last one.  Weights live here as
// ordinary matrices; training places them on a Graph as leaves per batch.
class Mlp {
 public:
  Mlp() = default;

  // Weights ~ U(+-sqrt(6 / (fan_in + fan_out))) drawn row-major from named
  // per-tensor streams off spec.init_seed; biases start at zero.
  static Mlp glorot_init(MlpSpec spec);

  const MlpSpec& spec() const { return spec_; }
  // Alternating [W0, b0, W1, b1, ...]; W is in x out, b is 1 x out.
  std::vector<Mat>& tensors() { return tensors_; }
  const std::vector<Mat>& tensors() const { return tensors_; }
  size_t layer_count() const { return tensors_.size() / 2; }
  size_t param_count() const;

  // Registers every tensor as a differentiable leaf, in storage order.
  std::vector<Graph::NodeId> place(Graph& g) const;

  // Runs the stack over x (batch x in) given placed tensor ids.  Reusing the
  // same ids for several inputs shares the weights, so their gradients
  // accumulate across uses.
  static Graph::NodeId apply(Graph& g, const MlpSpec& spec,
                             const std::vector<Graph::NodeId>& tensor_ids,
                             Graph::NodeId x);

  // Graph-free forward pass for evaluation.
  Mat operator()(const Mat& x) const;

 private:
  MlpSpec spec_;
  std::vector<Mat> tensors_;
};

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction.  Moment buffers are sized from the first step;
// later steps reject any change in parameter count or shape.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  void step(const std::vector<Mat*>& params, const std::vector<Mat>& grads);
  int64_t steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  int64_t t_ = 0;
  std::vector<Mat> m_, v_;
};

// Binary weight container: "CPLW1" magic and a layer count, then per layer
// its (rows, cols) shape followed by raw little-endian 64-bit floats in
// row-major order.
void save_weights(const std::filesystem::path& path,
                  const std::vector<const Mat*>& tensors);
std::vector<Mat> load_weights(const std::filesystem::path& path);

}  // namespace cpl
