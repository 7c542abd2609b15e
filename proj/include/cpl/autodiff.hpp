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

#include <array>
#include <cstdint>
#include <deque>
#include <functional>

#include "cpl/linalg.hpp"

namespace cpl {

// Reverse-mode differentiation over a tape of matrix operations.
//
// A Graph owns every node created through it.  Nodes are appended in
// evaluation order, so walking ids from the root downward visits consumers
// before producers; backward() exploits that instead of an explicit
// topological sort.  Each op stores a closure that pulls the node's gradient
// into its parents.  Graphs are cheap and single-use in practice: training
// builds a fresh one per batch while parameters live outside as plain
// matrices.  A Graph is not thread-safe; use one per thread.
class Graph {
 public:
  using NodeId = int32_t;

  // Leaves.  constant() never receives gradient; leaf() does.
  NodeId constant(Mat value);
  NodeId leaf(Mat value);

  // Elementwise and structural ops.
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);  // Hadamard product
  NodeId scale(NodeId a, double k);
  NodeId matmul(NodeId a, NodeId b);
  // Broadcast a 1 x n row (e.g. a bias) over every row of an m x n matrix.
  NodeId add_rowvec(NodeId m, NodeId row);
  // Elementwise product with a fixed matrix; the mask gets no gradient.
  NodeId cmul(NodeId a, Mat mask);
  NodeId gelu(NodeId a);     // x * Phi(x), exact-erf form
  NodeId sigmoid(NodeId a);
  // Identity forward; backward multiplies the incoming gradient by -lambda.
  // lambda == 0 cuts the flow entirely.  Negative lambda is rejected.
  NodeId grad_reverse(NodeId a, double lambda);
  NodeId sum(NodeId a);
  NodeId mean(NodeId a);

  // Fused scalar losses, numerically stable over the full double range.
  // softplus_neg_sum(m) = sum_ij log(1 + exp(-m_ij)), i.e. sum -log sigmoid(m).
  NodeId softplus_neg_sum(NodeId margins);
  // Binary cross-entropy against logits z with fixed targets c in {0,1}:
  // sum_ij [max(z,0) - c*z + log(1 + exp(-|z|))].
  NodeId bce_with_logits_sum(NodeId logits, Mat targets);

  // Seeds the (scalar) root with 1 and sweeps its ancestry in reverse
  // creation order, accumulating into each differentiable node's gradient.
  // Rejects non-scalar roots.  Gradients accumulate across calls; use
  // zero_grads() between independent passes.
  void backward(NodeId root);
  void zero_grads();

  const Mat& value(NodeId id) const;
  const Mat& grad(NodeId id);  // zeros if nothing has flowed into the node
  bool requires_grad(NodeId id) const;
  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    Mat grad;
    bool wants_grad = false;
    bool grad_live = false;  // grad holds accumulated data
    std::array<NodeId, 2> parents{-1, -1};
    // Pulls grad(id) into the parents.  Empty for leaves/constants.
    std::function<void(Graph&, NodeId)> back;
  };

  NodeId push(Mat value, NodeId pa, NodeId pb, std::function<void(Graph&, NodeId)> back);
  void accumulate(NodeId id, const Mat& contribution);
  Mat& grad_buffer(NodeId id);
  const Node& at(NodeId id) const;

  std::deque<Node> nodes_;
};

// Scalar building blocks shared across the project.  All are safe for
// arguments out to +-700 and beyond.
double sigmoid_stable(double x);
double softplus(double x);         // log(1 + e^x)
double gelu_scalar(double x);
double gelu_grad_scalar(double x);

struct FiniteDiffReport {
  double max_rel_err = 0.0;
  size_t worst_param = 0;  // index into the params vector
  Eigen::Index worst_entry = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

// Central-difference check of analytic gradients for a scalar function of
// several matrices.  Perturbs every entry by +-eps and compares against
// analytic_grads; the relative error denominator is floored at 1e-3 so that
// near-zero derivatives do not inflate the ratio past what the arithmetic
// noise of the difference quotient supports.
FiniteDiffReport finite_diff_check(
    const std::function<double(const std::vector<Mat>&)>& f,
    std::vector<Mat> params, const std::vector<Mat>& analytic_grads,
    double eps);

}  // namespace cpl
