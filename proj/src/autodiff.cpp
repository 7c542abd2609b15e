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

#include "cpl/autodiff.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace cpl {
namespace {

std::string shape_of(const Mat& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

[[noreturn]] void shape_error(const char* op, const Mat& a, const Mat& b) {
  throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                              shape_of(a) + " vs " + shape_of(b));
}

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

}  // namespace

double sigmoid_stable(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

double gelu_scalar(double x) {
  return x * 0.5 * std::erfc(-x * kInvSqrt2);
}

double gelu_grad_scalar(double x) {
  double cdf = 0.5 * std::erfc(-x * kInvSqrt2);
  double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
  return cdf + x * pdf;
}

const Graph::Node& Graph::at(NodeId id) const {
  if (id < 0 || static_cast<size_t>(id) >= nodes_.size()) {
    throw std::out_of_range("graph: invalid node id " + std::to_string(id));
  }
  return nodes_[static_cast<size_t>(id)];
}

Graph::NodeId Graph::push(Mat value, NodeId pa, NodeId pb,
                          std::function<void(Graph&, NodeId)> back) {
  Node n;
  n.value = std::move(value);
  n.parents = {pa, pb};
  bool differentiable = (pa >= 0 && nodes_[static_cast<size_t>(pa)].wants_grad) ||
                        (pb >= 0 && nodes_[static_cast<size_t>(pb)].wants_grad);
  n.wants_grad = differentiable;
  if (differentiable) n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

Graph::NodeId Graph::constant(Mat value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

Graph::NodeId Graph::leaf(Mat value) {
  Node n;
  n.value = std::move(value);
  n.wants_grad = true;
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

Graph::NodeId Graph::add(NodeId a, NodeId b) {
  const Mat& va = at(a).value;
  const Mat& vb = at(b).value;
  if (va.rows() != vb.rows() || va.cols() != vb.cols()) shape_error("add", va, vb);
  return push(va + vb, a, b, [a, b](Graph& g, NodeId id) {
    const Mat& go = g.grad_buffer(id);
    g.accumulate(a, go);
    g.accumulate(b, go);
  });
}

Graph::NodeId Graph::sub(NodeId a, NodeId b) {
  const Mat& va = at(a).value;
  const Mat& vb = at(b).value;
  if (va.rows() != vb.rows() || va.cols() != vb.cols()) shape_error("sub", va, vb);
  return push(va - vb, a, b, [a, b](Graph& g, NodeId id) {
    const Mat& go = g.grad_buffer(id);
    g.accumulate(a, go);
    g.accumulate(b, -go);
  });
}

Graph::NodeId Graph::mul(NodeId a, NodeId b) {
  const Mat& va = at(a).value;
  const Mat& vb = at(b).value;
  if (va.rows() != vb.rows() || va.cols() != vb.cols()) shape_error("mul", va, vb);
  return push(va.cwiseProduct(vb), a, b, [a, b](Graph& g, NodeId id) {
    const Mat& go = g.grad_buffer(id);
    g.accumulate(a, go.cwiseProduct(g.at(b).value));
    g.accumulate(b, go.cwiseProduct(g.at(a).value));
  });
}

Graph::NodeId Graph::scale(NodeId a, double k) {
  return push(at(a).value * k, a, -1, [a, k](Graph& g, NodeId id) {
    g.accumulate(a, g.grad_buffer(id) * k);
  });
}

Graph::NodeId Graph::matmul(NodeId a, NodeId b) {
  const Mat& va = at(a).value;
  const Mat& vb = at(b).value;
  if (va.cols() != vb.rows()) shape_error("matmul", va, vb);
  return push(va * vb, a, b, [a, b](Graph& g, NodeId id) {
    const Mat& go = g.grad_buffer(id);
    g.accumulate(a, go * g.at(b).value.transpose());
    g.accumulate(b, g.at(a).value.transpose() * go);
  });
}

Graph::NodeId Graph::add_rowvec(NodeId m, NodeId row) {
  const Mat& vm = at(m).value;
  const Mat& vr = at(row).value;
  if (vr.rows() != 1 || vr.cols() != vm.cols()) shape_error("add_rowvec", vm, vr);
  Mat out = vm;
  out.rowwise() += vr.row(0);
  return push(std::move(out), m, row, [m, row](Graph& g, NodeId id) {
    const Mat& go = g.grad_buffer(id);
    g.accumulate(m, go);
    Mat rg = go.colwise().sum();
    g.accumulate(row, rg);
  });
}

Graph::NodeId Graph::cmul(NodeId a, Mat mask) {
  const Mat& va = at(a).value;
  if (va.rows() != mask.rows() || va.cols() != mask.cols()) {
    shape_error("cmul", va, mask);
  }
  Mat out = va.cwiseProduct(mask);
  auto shared_mask = std::make_shared<Mat>(std::move(mask));
  return push(std::move(out), a, -1, [a, shared_mask](Graph& g, NodeId id) {
    g.accumulate(a, g.grad_buffer(id).cwiseProduct(*shared_mask));
  });
}

Graph::NodeId Graph::gelu(NodeId a) {
  const Mat& va = at(a).value;
  Mat out = va.unaryExpr([](double x) { return gelu_scalar(x); });
  return push(std::move(out), a, -1, [a](Graph& g, NodeId id) {
    const Mat& x = g.at(a).value;
    Mat d = x.unaryExpr([](double v) { return gelu_grad_scalar(v); });
    g.accumulate(a, g.grad_buffer(id).cwiseProduct(d));
  });
}

Graph::NodeId Graph::sigmoid(NodeId a) {
  const Mat& va = at(a).value;
  Mat out = va.unaryExpr([](double x) { return sigmoid_stable(x); });
  return push(std::move(out), a, -1, [a](Graph& g, NodeId id) {
    const Mat& s = g.at(id).value;
    Mat d = s.array() * (1.0 - s.array());
    g.accumulate(a, g.grad_buffer(id).cwiseProduct(d));
  });
}

Graph::NodeId Graph::grad_reverse(NodeId a, double lambda) {
  if (lambda < 0.0 || !std::isfinite(lambda)) {
    throw std::invalid_argument("grad_reverse: lambda must be finite and >= 0, got " +
                                std::to_string(lambda));
  }
  return push(at(a).value, a, -1, [a, lambda](Graph& g, NodeId id) {
    if (lambda == 0.0) return;  // reversal fully decoupled
    g.accumulate(a, g.grad_buffer(id) * (-lambda));
  });
}

Graph::NodeId Graph::sum(NodeId a) {
  Mat out(1, 1);
  out(0, 0) = at(a).value.sum();
  return push(std::move(out), a, -1, [a](Graph& g, NodeId id) {
    const Mat& x = g.at(a).value;
    double go = g.grad_buffer(id)(0, 0);
    g.accumulate(a, Mat::Constant(x.rows(), x.cols(), go));
  });
}

Graph::NodeId Graph::mean(NodeId a) {
  const Mat& va = at(a).value;
  if (va.size() == 0) {
    throw std::invalid_argument("mean: empty matrix");
  }
  Mat out(1, 1);
  out(0, 0) = va.sum() / static_cast<double>(va.size());
  return push(std::move(out), a, -1, [a](Graph& g, NodeId id) {
    const Mat& x = g.at(a).value;
    double go = g.grad_buffer(id)(0, 0) / static_cast<double>(x.size());
    g.accumulate(a, Mat::Constant(x.rows(), x.cols(), go));
  });
}

Graph::NodeId Graph::softplus_neg_sum(NodeId margins) {
  const Mat& m = at(margins).value;
  Mat out(1, 1);
  out(0, 0) = m.unaryExpr([](double v) { return softplus(-v); }).sum();
  return push(std::move(out), margins, -1, [margins](Graph& g, NodeId id) {
    const Mat& m = g.at(margins).value;
    double go = g.grad_buffer(id)(0, 0);
    // d/dm log(1 + e^{-m}) = -sigmoid(-m); this form keeps precision when
    // sigmoid(m) is within an ulp of 1.
    Mat d = m.unaryExpr([](double v) { return -sigmoid_stable(-v); });
    g.accumulate(margins, d * go);
  });
}

Graph::NodeId Graph::bce_with_logits_sum(NodeId logits, Mat targets) {
  const Mat& z = at(logits).value;
  if (z.rows() != targets.rows() || z.cols() != targets.cols()) {
    shape_error("bce_with_logits_sum", z, targets);
  }
  for (Eigen::Index i = 0; i < targets.size(); ++i) {
    double t = targets.data()[i];
    if (t != 0.0 && t != 1.0) {
      throw std::invalid_argument("bce_with_logits_sum: targets must be 0 or 1, got " +
                                  std::to_string(t));
    }
  }
  double total = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    double zi = z.data()[i];
    double ci = targets.data()[i];
    total += std::max(zi, 0.0) - ci * zi + std::log1p(std::exp(-std::abs(zi)));
  }
  Mat out(1, 1);
  out(0, 0) = total;
  auto shared_targets = std::make_shared<Mat>(std::move(targets));
  return push(std::move(out), logits, -1,
              [logits, shared_targets](Graph& g, NodeId id) {
                const Mat& z = g.at(logits).value;
                double go = g.grad_buffer(id)(0, 0);
                Mat d(z.rows(), z.cols());
                for (Eigen::Index i = 0; i < z.size(); ++i) {
                  d.data()[i] = sigmoid_stable(z.data()[i]) - shared_targets->data()[i];
                }
                g.accumulate(logits, d * go);
              });
}

void Graph::backward(NodeId root) {
  const Node& r = at(root);
  if (r.value.rows() != 1 || r.value.cols() != 1) {
    throw std::invalid_argument("backward: root must be a 1x1 scalar, got " +
                                shape_of(r.value));
  }
  if (!r.wants_grad) return;  // nothing differentiable upstream

  // Mark the root's ancestry so unrelated nodes on the tape are skipped.
  std::vector<char> live(nodes_.size(), 0);
  std::vector<NodeId> stack{root};
  live[static_cast<size_t>(root)] = 1;
  while (!stack.empty()) {
    NodeId id = stack.back();
    stack.pop_back();
    for (NodeId p : nodes_[static_cast<size_t>(id)].parents) {
      if (p >= 0 && !live[static_cast<size_t>(p)] &&
          nodes_[static_cast<size_t>(p)].wants_grad) {
        live[static_cast<size_t>(p)] = 1;
        stack.push_back(p);
      }
    }
  }

  // Leaf gradients accumulate across calls, but interior buffers are sweep
  // scratch; stale contents from an earlier pass would double-count.
  for (size_t id = 0; id < nodes_.size(); ++id) {
    if (live[id] && nodes_[id].back) {
      nodes_[id].grad_live = false;
      nodes_[id].grad.resize(0, 0);
    }
  }

  accumulate(root, Mat::Constant(1, 1, 1.0));
  for (NodeId id = root; id >= 0; --id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (live[static_cast<size_t>(id)] && n.back && n.grad_live) {
      n.back(*this, id);
    }
  }
}

void Graph::zero_grads() {
  for (Node& n : nodes_) {
    n.grad_live = false;
    n.grad.resize(0, 0);
  }
}

void Graph::accumulate(NodeId id, const Mat& contribution) {
  Node& n = nodes_[static_cast<size_t>(id)];
  if (!n.wants_grad) return;
  if (!n.grad_live) {
    n.grad = contribution;
    n.grad_live = true;
  } else {
    n.grad += contribution;
  }
}

Mat& Graph::grad_buffer(NodeId id) {
  Node& n = nodes_[static_cast<size_t>(id)];
  if (!n.grad_live) {
    n.grad = Mat::Zero(n.value.rows(), n.value.cols());
    n.grad_live = true;
  }
  return n.grad;
}

const Mat& Graph::value(NodeId id) const { return at(id).value; }

const Mat& Graph::grad(NodeId id) {
  at(id);  // bounds check
  return grad_buffer(id);
}

bool Graph::requires_grad(NodeId id) const { return at(id).wants_grad; }

FiniteDiffReport finite_diff_check(
    const std::function<double(const std::vector<Mat>&)>& f,
    std::vector<Mat> params, const std::vector<Mat>& analytic_grads,
    double eps) {
  if (!(eps > 0.0)) {
    throw std::invalid_argument("finite_diff_check: eps must be positive");
  }
  if (params.size() != analytic_grads.size()) {
    throw std::invalid_argument("finite_diff_check: params/grads count mismatch");
  }
  FiniteDiffReport report;
  for (size_t p = 0; p < params.size(); ++p) {
    if (params[p].rows() != analytic_grads[p].rows() ||
        params[p].cols() != analytic_grads[p].cols()) {
      shape_error("finite_diff_check", params[p], analytic_grads[p]);
    }
    for (Eigen::Index i = 0; i < params[p].size(); ++i) {
      double saved = params[p].data()[i];
      params[p].data()[i] = saved + eps;
      double hi = f(params);
      params[p].data()[i] = saved - eps;
      double lo = f(params);
      params[p].data()[i] = saved;
      double numeric = (hi - lo) / (2.0 * eps);
      double analytic = analytic_grads[p].data()[i];
      double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-3});
      double rel = std::abs(numeric - analytic) / denom;
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_param = p;
        report.worst_entry = i;
        report.analytic = analytic;
        report.numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace cpl
