// Copyright 2026 The soma Authors
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

#include <deque>
#include <functional>
#include <memory>
#include <vector>

#include <Eigen/Dense>

namespace soma::ad {

using MatX = Eigen::MatrixXd;
using VecX = Eigen::VectorXd;
using IndexList = std::shared_ptr<const std::vector<int>>;

struct Var {
  int idx = -1;
  bool valid() const { return idx >= 0; }
};

/// Reverse-mode tape over dense matrices. Ops append nodes; backward() walks
/// the tape once. With recording off the same ops evaluate values only, so
/// forward code is shared between training and inference.
///
/// Values live on the tape for its whole lifetime; call clear() between
/// independent forward passes to bound memory.
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}

  bool recording() const { return recording_; }
  int size() const { return static_cast<int>(values_.size()); }
  void clear();

  Var leaf(MatX value, bool requires_grad = false);
  Var constant(MatX value) { return leaf(std::move(value), false); }
  Var scalar(double v);

  const MatX& val(Var v) const { return values_[check(v)]; }
  double scalar_val(Var v) const;
  bool requires_grad(Var v) const { return rg_[check(v)]; }
  /// Gradient of the last backward() target w.r.t. v (zeros if untouched).
  MatX grad(Var v) const;

  void backward(Var loss);

  // --- elementwise and linear algebra ---
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var add_scaled(Var a, Var b, double s);  // a + s*b
  Var scale(Var a, double s);
  Var add_const(Var a, double c);
  Var mul(Var a, Var b);   // elementwise
  Var cdiv(Var a, Var b);  // elementwise a/b
  Var matmul(Var a, Var b);
  Var affine(Var x, Var w, Var b);  // x*w + row-broadcast b (b is 1 x C)
  Var silu(Var a);
  Var relu(Var a);
  Var rowwise_norm(Var a);  // N x C -> N x 1 Euclidean row norms
  Var layernorm_rows(Var a, Var gamma, Var beta, double eps = 1e-6);
  Var rowwise_scale(Var a, const VecX& w);  // constant per-row weights

  // --- structure ---
  Var gather_rows(Var a, IndexList idx);
  Var scatter_sum_rows(Var a, IndexList dst, int out_rows);
  Var hcat(const std::vector<Var>& parts);
  Var cols(Var a, int begin, int n);

  // --- reductions (1x1 results) ---
  Var sum(Var a);
  Var sumsq(Var a);
  Var dot(Var a, Var b);

  // --- batched 3x3 blocks; rows hold row-major 3x3 matrices ---
  Var bmm33(Var a, Var b);                 // per-row A*B
  Var bmv3(Var m, Var v);                  // per-row (3x3) * (3-vector rows)
  Var cov_transform(Var p, Var s);         // per-row sym(P S Pᵀ)
  Var rot_cov(Var w, Var s, double dt);    // per-row sym(R(w dt) S R(w dt)ᵀ)

  // --- images (H x W matrices) ---
  /// Separable same-size convolution with zero padding; kernel must be
  /// symmetric (backward reuses it).
  Var blur2d(Var img, std::shared_ptr<const VecX> kernel);

  /// Fused per-edge two-layer SiLU MLP with mean aggregation onto dst rows:
  ///   m_e = silu(silu([h_src|h_dst] w1 + b1) w2 + b2),  out[d] = mean m_e.
  /// Stores no per-edge activations; backward recomputes them chunk-wise.
  Var edge_mean_messages(Var h, IndexList src, IndexList dst, int out_rows,
                         Var w1, Var b1, Var w2, Var b2);

  // --- custom op support ---
  Var make_node(MatX value, bool requires_grad, std::function<void()> backward_fn);
  /// Attach the backward closure after the node exists (closures usually need
  /// the node's own handle).
  void set_backward(Var v, std::function<void()> backward_fn);
  /// Accumulate into v's gradient buffer (no-op when v does not require grad).
  void accum(Var v, const MatX& g);
  /// Gradient buffer of an output node inside a backward closure.
  const MatX& out_grad(Var v) const;

 private:
  int check(Var v) const;
  MatX& grad_buf(int idx);
  bool rec(Var a) const { return recording_ && rg_[check(a)]; }

  bool recording_;
  std::deque<MatX> values_;
  std::deque<MatX> grads_;  // empty until touched
  std::deque<bool> rg_;
  std::deque<std::function<void()>> backs_;
};

}  // namespace soma::ad
