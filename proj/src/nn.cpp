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

#include "cpl/nn.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace cpl {

void MlpSpec::validate() const {
  if (widths.size() < 2) {
    throw std::invalid_argument("mlp: need at least [in, out] widths, got " +
                                std::to_string(widths.size()));
  }
  for (int w : widths) {
    if (w <= 0) {
      throw std::invalid_argument("mlp: widths must be positive, got " +
                                  std::to_string(w));
    }
  }
}

Mlp Mlp::glorot_init(MlpSpec spec) {
  spec.validate();
  Mlp mlp;
  Rng root(spec.init_seed);
  for (size_t layer = 0; layer + 1 < spec.widths.size(); ++layer) {
    int fan_in = spec.widths[layer];
    int fan_out = spec.widths[layer + 1];
    double bound = std::sqrt(6.0 / (fan_in + fan_out));
    Rng stream = root.fork("w", layer);
    Mat w(fan_in, fan_out);
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      w.data()[i] = stream.uniform(-bound, bound);
    }
    mlp.tensors_.push_back(std::move(w));
    mlp.tensors_.push_back(Mat::Zero(1, fan_out));
  }
  mlp.spec_ = std::move(spec);
  return mlp;
}

size_t Mlp::param_count() const {
  size_t n = 0;
  for (const Mat& t : tensors_) n += static_cast<size_t>(t.size());
  return n;
}

std::vector<Graph::NodeId> Mlp::place(Graph& g) const {
  std::vector<Graph::NodeId> ids;
  ids.reserve(tensors_.size());
  for (const Mat& t : tensors_) ids.push_back(g.leaf(t));
  return ids;
}

Graph::NodeId Mlp::apply(Graph& g, const MlpSpec& spec,
                         const std::vector<Graph::NodeId>& tensor_ids,
                         Graph::NodeId x) {
  size_t layers = tensor_ids.size() / 2;
  Graph::NodeId h = x;
  for (size_t layer = 0; layer < layers; ++layer) {
    h = g.matmul(h, tensor_ids[2 * layer]);
    h = g.add_rowvec(h, tensor_ids[2 * layer + 1]);
    if (layer + 1 < layers && spec.activation == Activation::kGelu) {
      h = g.gelu(h);
    }
  }
  return h;
}

Mat Mlp::operator()(const Mat& x) const {
  if (x.cols() != spec_.in_dim()) {
    throw std::invalid_argument("mlp: input has " + std::to_string(x.cols()) +
                                " features, expected " +
                                std::to_string(spec_.in_dim()));
  }
  Mat h = x;
  size_t layers = layer_count();
  for (size_t layer = 0; layer < layers; ++layer) {
    Mat z = h * tensors_[2 * layer];
    z.rowwise() += tensors_[2 * layer + 1].row(0);
    if (layer + 1 < layers && spec_.activation == Activation::kGelu) {
      z = z.unaryExpr([](double v) { return gelu_scalar(v); });
    }
    h = std::move(z);
  }
  return h;
}

void Adam::step(const std::vector<Mat*>& params, const std::vector<Mat>& grads) {
  if (params.size() != grads.size()) {
    throw std::invalid_argument("adam: params/grads count mismatch: " +
                                std::to_string(params.size()) + " vs " +
                                std::to_string(grads.size()));
  }
  if (t_ == 0) {
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (const Mat* p : params) {
      m_.push_back(Mat::Zero(p->rows(), p->cols()));
      v_.push_back(Mat::Zero(p->rows(), p->cols()));
    }
  }
  if (params.size() != m_.size()) {
    throw std::invalid_argument("adam: parameter count changed mid-run");
  }
  ++t_;
  double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (size_t i = 0; i < params.size(); ++i) {
    Mat& p = *params[i];
    const Mat& grad = grads[i];
    if (p.rows() != grad.rows() || p.cols() != grad.cols() ||
        p.rows() != m_[i].rows() || p.cols() != m_[i].cols()) {
      throw std::invalid_argument("adam: shape mismatch at tensor " +
                                  std::to_string(i));
    }
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * grad;
    v_[i] = cfg_.beta2 * v_[i].array() + (1.0 - cfg_.beta2) * grad.array().square();
    for (Eigen::Index k = 0; k < p.size(); ++k) {
      double mhat = m_[i].data()[k] / bc1;
      double vhat = v_[i].data()[k] / bc2;
      p.data()[k] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

namespace {

constexpr char kMagic[5] = {'C', 'P', 'L', 'W', '1'};

void put_u32(std::ostream& out, uint32_t v) {
  unsigned char buf[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(buf), 4);
}

uint32_t get_u32(std::istream& in) {
  unsigned char buf[4];
  in.read(reinterpret_cast<char*>(buf), 4);
  if (!in) throw std::runtime_error("checkpoint: truncated header");
  return static_cast<uint32_t>(buf[0]) | (static_cast<uint32_t>(buf[1]) << 8) |
         (static_cast<uint32_t>(buf[2]) << 16) |
         (static_cast<uint32_t>(buf[3]) << 24);
}

void put_f64(std::ostream& out, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, 8);
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(buf), 8);
}

double get_f64(std::istream& in) {
  unsigned char buf[8];
  in.read(reinterpret_cast<char*>(buf), 8);
  if (!in) throw std::runtime_error("checkpoint: truncated payload");
  uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<uint64_t>(buf[i]) << (8 * i);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

}  // namespace

void save_weights(const std::filesystem::path& path,
                  const std::vector<const Mat*>& tensors) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("checkpoint: cannot open " + path.string());
  out.write(kMagic, sizeof(kMagic));
  put_u32(out, static_cast<uint32_t>(tensors.size()));
  for (const Mat* t : tensors) {
    put_u32(out, static_cast<uint32_t>(t->rows()));
    put_u32(out, static_cast<uint32_t>(t->cols()));
    for (Eigen::Index i = 0; i < t->size(); ++i) put_f64(out, t->data()[i]);
  }
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path.string());
}

std::vector<Mat> load_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path.string());
  char magic[5];
  in.read(magic, 5);
  if (!in || std::memcmp(magic, kMagic, 5) != 0) {
    throw std::runtime_error("checkpoint: wrong magic in " + path.string());
  }
  uint32_t count = get_u32(in);
  std::vector<Mat> tensors;
  tensors.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    uint32_t rows = get_u32(in);
    uint32_t cols = get_u32(in);
    Mat t(rows, cols);
    for (Eigen::Index k = 0; k < t.size(); ++k) t.data()[k] = get_f64(in);
    tensors.push_back(std::move(t));
  }
  // The payload must end exactly where the shapes said it would.
  in.peek();
  if (!in.eof()) {
    throw std::runtime_error("checkpoint: trailing bytes in " + path.string());
  }
  return tensors;
}

}  // namespace cpl
