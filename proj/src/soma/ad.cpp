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

#include "soma/ad.hpp"

#include <cmath>
#include <stdexcept>

#include "soma/geometry.hpp"

namespace soma::ad {

namespace {

constexpr int kEdgeChunk = 512;

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline MatX silu_of(const MatX& x) {
  return x.unaryExpr([](double v) { return v * sigmoid(v); });
}

inline MatX silu_grad_of(const MatX& x) {
  return x.unaryExpr([](double v) {
    const double s = sigmoid(v);
    return s * (1.0 + v * (1.0 - s));
  });
}

inline Eigen::Matrix3d get3(const MatX& m, int row) {
  Eigen::Matrix3d out;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) out(r, c) = m(row, 3 * r + c);
  return out;
}

inline void add3(MatX& m, int row, const Eigen::Matrix3d& v) {
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) m(row, 3 * r + c) += v(r, c);
}

MatX blur_apply(const MatX& img, const VecX& k) {
  const int h = static_cast<int>(img.rows()), w = static_cast<int>(img.cols());
  const int n = static_cast<int>(k.size()), r = n / 2;
  MatX tmp = MatX::Zero(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0;
      for (int i = -r; i <= r; ++i) {
        const int xx = x + i;
        if (xx >= 0 && xx < w) acc += k[i + r] * img(y, xx);
      }
      tmp(y, x) = acc;
    }
  MatX out = MatX::Zero(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0;
      for (int i = -r; i <= r; ++i) {
        const int yy = y + i;
        if (yy >= 0 && yy < h) acc += k[i + r] * tmp(yy, x);
      }
      out(y, x) = acc;
    }
  return out;
}

}  // namespace

void Tape::clear() {
  values_.clear();
  grads_.clear();
  rg_.clear();
  backs_.clear();
}

int Tape::check(Var v) const {
  if (!v.valid() || v.idx >= static_cast<int>(values_.size()))
    throw std::invalid_argument("tape: invalid variable handle");
  return v.idx;
}

MatX& Tape::grad_buf(int idx) {
  if (grads_[idx].size() == 0)
    grads_[idx] = MatX::Zero(values_[idx].rows(), values_[idx].cols());
  return grads_[idx];
}

Var Tape::leaf(MatX value, bool requires_grad) {
  values_.push_back(std::move(value));
  grads_.emplace_back();
  rg_.push_back(recording_ && requires_grad);
  backs_.emplace_back();
  return Var{static_cast<int>(values_.size()) - 1};
}

Var Tape::scalar(double v) {
  MatX m(1, 1);
  m(0, 0) = v;
  return constant(std::move(m));
}

double Tape::scalar_val(Var v) const {
  const MatX& m = val(v);
  require(m.size() == 1, "scalar_val: not a 1x1 value");
  return m(0, 0);
}

MatX Tape::grad(Var v) const {
  const int i = check(v);
  if (grads_[i].size() == 0) return MatX::Zero(values_[i].rows(), values_[i].cols());
  return grads_[i];
}

void Tape::accum(Var v, const MatX& g) {
  const int i = check(v);
  if (!rg_[i]) return;
  grad_buf(i) += g;
}

const MatX& Tape::out_grad(Var v) const {
  static const MatX empty;
  const int i = check(v);
  return grads_[i].size() == 0 ? empty : grads_[i];
}

void Tape::backward(Var loss) {
  require(recording_, "backward: tape is not recording");
  const int li = check(loss);
  require(values_[li].size() == 1, "backward: loss must be 1x1");
  grad_buf(li)(0, 0) += 1.0;
  for (int i = li; i >= 0; --i) {
    if (!backs_[i]) continue;
    if (grads_[i].size() == 0) continue;  // no downstream influence
    backs_[i]();
  }
}

Var Tape::make_node(MatX value, bool requires_grad, std::function<void()> backward_fn) {
  values_.push_back(std::move(value));
  grads_.emplace_back();
  const bool rg = recording_ && requires_grad;
  rg_.push_back(rg);
  backs_.emplace_back(rg ? std::move(backward_fn) : std::function<void()>());
  return Var{static_cast<int>(values_.size()) - 1};
}

void Tape::set_backward(Var v, std::function<void()> backward_fn) {
  const int i = check(v);
  if (rg_[i]) backs_[i] = std::move(backward_fn);
}

// ---------------------------------------------------------------------------

Var Tape::add(Var a, Var b) {
  require(val(a).rows() == val(b).rows() && val(a).cols() == val(b).cols(), "add: shape mismatch");
  const bool rg = rec(a) || rec(b);
  Var o = make_node(val(a) + val(b), rg, nullptr);
  if (rg) backs_.back() = [this, a, b, o]() {
    const MatX& g = out_grad(o);
    accum(a, g);
    accum(b, g);
  };
  return o;
}

Var Tape::sub(Var a, Var b) {
  require(val(a).rows() == val(b).rows() && val(a).cols() == val(b).cols(), "sub: shape mismatch");
  const bool rg = rec(a) || rec(b);
  Var o = make_node(val(a) - val(b), rg, nullptr);
  if (rg) backs_.back() = [this, a, b, o]() {
    const MatX& g = out_grad(o);
    accum(a, g);
    accum(b, -g);
  };
  return o;
}

Var Tape::add_scaled(Var a, Var b, double s) {
  require(val(a).rows() == val(b).rows() && val(a).cols() == val(b).cols(),
          "add_scaled: shape mismatch");
  const bool rg = rec(a) || rec(b);
  Var o = make_node(val(a) + s * val(b), rg, nullptr);
  if (rg) backs_.back() = [this, a, b, s, o]() {
    const MatX& g = out_grad(o);
    accum(a, g);
    accum(b, s * g);
  };
  return o;
}

Var Tape::scale(Var a, double s) {
  const bool rg = rec(a);
  Var o = make_node(s * val(a), rg, nullptr);
  if (rg) backs_.back() = [this, a, s, o]() { accum(a, s * out_grad(o)); };
  return o;
}

Var Tape::add_const(Var a, double c) {
  const bool rg = rec(a);
  Var o = make_node(val(a).array() + c, rg, nullptr);
  if (rg) backs_.back() = [this, a, o]() { accum(a, out_grad(o)); };
  return o;
}

Var Tape::mul(Var a, Var b) {
  require(val(a).rows() == val(b).rows() && val(a).cols() == val(b).cols(), "mul: shape mismatch");
  const bool rg = rec(a) || rec(b);
  Var o = make_node(val(a).cwiseProduct(val(b)), rg, nullptr);
  if (rg) backs_.back() = [this, a, b, o]() {
    const MatX& g = out_grad(o);
    accum(a, g.cwiseProduct(val(b)));
    accum(b, g.cwiseProduct(val(a)));
  };
  return o;
}

Var Tape::cdiv(Var a, Var b) {
  require(val(a).rows() == val(b).rows() && val(a).cols() == val(b).cols(), "cdiv: shape mismatch");
  const bool rg = rec(a) || rec(b);
  Var o = make_node(val(a).cwiseQuotient(val(b)), rg, nullptr);
  if (rg) backs_.back() = [this, a, b, o]() {
    const MatX& g = out_grad(o);
    accum(a, g.cwiseQuotient(val(b)));
    accum(b, -g.cwiseProduct(val(o)).cwiseQuotient(val(b)));
  };
  return o;
}

Var Tape::matmul(Var a, Var b) {
  require(val(a).cols() == val(b).rows(), "matmul: inner dimension mismatch");
  const bool rg = rec(a) || rec(b);
  Var o = make_node(val(a) * val(b), rg, nullptr);
  if (rg) backs_.back() = [this, a, b, o]() {
    const MatX& g = out_grad(o);
    accum(a, g * val(b).transpose());
    accum(b, val(a).transpose() * g);
  };
  return o;
}

Var Tape::affine(Var x, Var w, Var b) {
  require(val(x).cols() == val(w).rows(), "affine: inner dimension mismatch");
  require(val(b).rows() == 1 && val(b).cols() == val(w).cols(), "affine: bias must be 1 x out");
  MatX out = val(x) * val(w);
  out.rowwise() += val(b).row(0);
  const bool rg = rec(x) || rec(w) || rec(b);
  Var o = make_node(std::move(out), rg, nullptr);
  if (rg) backs_.back() = [this, x, w, b, o]() {
    const MatX& g = out_grad(o);
    accum(x, g * val(w).transpose());
    accum(w, val(x).transpose() * g);
    accum(b, g.colwise().sum());
  };
  return o;
}

Var Tape::silu(Var a) {
  const bool rg = rec(a);
  Var o = make_node(silu_of(val(a)), rg, nullptr);
  if (rg) backs_.back() = [this, a, o]() {
    accum(a, out_grad(o).cwiseProduct(silu_grad_of(val(a))));
  };
  return o;
}

Var Tape::relu(Var a) {
  const bool rg = rec(a);
  Var o = make_node(val(a).cwiseMax(0.0), rg, nullptr);
  if (rg) backs_.back() = [this, a, o]() {
    const MatX mask = (val(a).array() > 0.0).cast<double>();
    accum(a, out_grad(o).cwiseProduct(mask));
  };
  return o;
}

Var Tape::rowwise_norm(Var a) {
  const int n = static_cast<int>(val(a).rows());
  MatX out(n, 1);
  for (int i = 0; i < n; ++i) out(i, 0) = val(a).row(i).norm();
  const bool rg = rec(a);
  Var o = make_node(std::move(out), rg, nullptr);
  if (rg) backs_.back() = [this, a, o]() {
    const MatX& g = out_grad(o);
    const int n = static_cast<int>(val(a).rows());
    MatX ga(n, val(a).cols());
    for (int i = 0; i < n; ++i) {
      const double nm = val(o)(i, 0);
      ga.row(i) = nm > 1e-300 ? (g(i, 0) / nm) * val(a).row(i)
                              : Eigen::RowVectorXd::Zero(val(a).cols());
    }
    accum(a, ga);
  };
  return o;
}

Var Tape::layernorm_rows(Var a, Var gamma, Var beta, double eps) {
  const MatX& x = val(a);
  const int n = static_cast<int>(x.rows()), c = static_cast<int>(x.cols());
  require(val(gamma).rows() == 1 && val(gamma).cols() == c, "layernorm: gamma must be 1 x C");
  require(val(beta).rows() == 1 && val(beta).cols() == c, "layernorm: beta must be 1 x C");
  VecX invstd(n);
  MatX xhat(n, c);
  for (int i = 0; i < n; ++i) {
    const double mu = x.row(i).mean();
    const double var = (x.row(i).array() - mu).square().mean();
    invstd[i] = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = (x.row(i).array() - mu) * invstd[i];
  }
  MatX out = xhat.array().rowwise() * val(gamma).row(0).array();
  out.rowwise() += val(beta).row(0);
  const bool rg = rec(a) || rec(gamma) || rec(beta);
  Var o = make_node(std::move(out), rg, nullptr);
  if (rg) {
    auto cache_xhat = std::make_shared<MatX>(std::move(xhat));
    auto cache_inv = std::make_shared<VecX>(std::move(invstd));
    backs_.back() = [this, a, gamma, beta, o, cache_xhat, cache_inv]() {
      const MatX& g = out_grad(o);
      const MatX& xh = *cache_xhat;
      accum(gamma, (g.cwiseProduct(xh)).colwise().sum());
      accum(beta, g.colwise().sum());
      if (!requires_grad(a)) return;
      const int n = static_cast<int>(g.rows()), c = static_cast<int>(g.cols());
      MatX gx(n, c);
      for (int i = 0; i < n; ++i) {
        const Eigen::RowVectorXd gy = g.row(i).cwiseProduct(val(gamma).row(0));
        const double m1 = gy.mean();
        const double m2 = gy.cwiseProduct(xh.row(i)).mean();
        gx.row(i) = ((gy.array() - m1) - xh.row(i).array() * m2) * (*cache_inv)[i];
      }
      accum(a, gx);
    };
  }
  return o;
}

Var Tape::rowwise_scale(Var a, const VecX& w) {
  require(val(a).rows() == w.size(), "rowwise_scale: weight count mismatch");
  const bool rg = rec(a);
  Var o = make_node(w.asDiagonal() * val(a), rg, nullptr);
  if (rg) {
    auto ws = std::make_shared<VecX>(w);
    backs_.back() = [this, a, o, ws]() { accum(a, ws->asDiagonal() * out_grad(o)); };
  }
  return o;
}

Var Tape::gather_rows(Var a, IndexList idx) {
  const MatX& x = val(a);
  MatX out(static_cast<int>(idx->size()), x.cols());
  for (size_t i = 0; i < idx->size(); ++i) {
    require((*idx)[i] >= 0 && (*idx)[i] < x.rows(), "gather_rows: index out of range");
    out.row(static_cast<int>(i)) = x.row((*idx)[i]);
  }
  const bool rg = rec(a);
  Var o = make_node(std::move(out), rg, nullptr);
  if (rg) backs_.back() = [this, a, idx, o]() {
    if (!rg_[a.idx]) return;
    const MatX& g = out_grad(o);
    MatX& ga = grad_buf(a.idx);
    for (size_t i = 0; i < idx->size(); ++i)
      ga.row((*idx)[i]) += g.row(static_cast<int>(i));
  };
  return o;
}

Var Tape::scatter_sum_rows(Var a, IndexList dst, int out_rows) {
  const MatX& x = val(a);
  require(static_cast<int>(dst->size()) == x.rows(), "scatter_sum_rows: index count mismatch");
  MatX out = MatX::Zero(out_rows, x.cols());
  for (size_t i = 0; i < dst->size(); ++i) {
    require((*dst)[i] >= 0 && (*dst)[i] < out_rows, "scatter_sum_rows: index out of range");
    out.row((*dst)[i]) += x.row(static_cast<int>(i));
  }
  const bool rg = rec(a);
  Var o = make_node(std::move(out), rg, nullptr);
  if (rg) backs_.back() = [this, a, dst, o]() {
    const MatX& g = out_grad(o);
    MatX gx(val(a).rows(), val(a).cols());
    for (size_t i = 0; i < dst->size(); ++i)
      gx.row(static_cast<int>(i)) = g.row((*dst)[i]);
    accum(a, gx);
  };
  return o;
}

Var Tape::hcat(const std::vector<Var>& parts) {
  require(!parts.empty(), "hcat: empty part list");
  const Eigen::Index rows = val(parts[0]).rows();
  Eigen::Index cols = 0;
  for (Var p : parts) {
    require(val(p).rows() == rows, "hcat: row count mismatch");
    cols += val(p).cols();
  }
  MatX out(rows, cols);
  Eigen::Index at = 0;
  bool rg = false;
  for (Var p : parts) {
    out.middleCols(at, val(p).cols()) = val(p);
    at += val(p).cols();
    rg = rg || rec(p);
  }
  Var o = make_node(std::move(out), rg, nullptr);
  if (rg) {
    auto ps = std::make_shared<std::vector<Var>>(parts);
    backs_.back() = [this, ps, o]() {
      const MatX& g = out_grad(o);
      Eigen::Index at = 0;
      for (Var p : *ps) {
        accum(p, g.middleCols(at, val(p).cols()));
        at += val(p).cols();
      }
    };
  }
  return o;
}

Var Tape::cols(Var a, int begin, int n) {
  require(begin >= 0 && begin + n <= val(a).cols(), "cols: slice out of range");
  const bool rg = rec(a);
  Var o = make_node(val(a).middleCols(begin, n), rg, nullptr);
  if (rg) backs_.back() = [this, a, begin, n, o]() {
    MatX g = MatX::Zero(val(a).rows(), val(a).cols());
    g.middleCols(begin, n) = out_grad(o);
    accum(a, g);
  };
  return o;
}

Var Tape::sum(Var a) {
  MatX out(1, 1);
  out(0, 0) = val(a).sum();
  const bool rg = rec(a);
  Var o = make_node(std::move(out), rg, nullptr);
  if (rg) backs_.back() = [this, a, o]() {
    accum(a, MatX::Constant(val(a).rows(), val(a).cols(), out_grad(o)(0, 0)));
  };
  return o;
}

Var Tape::sumsq(Var a) {
  MatX out(1, 1);
  out(0, 0) = val(a).squaredNorm();
  const bool rg = rec(a);
  Var o = make_node(std::move(out), rg, nullptr);
  if (rg) backs_.back() = [this, a, o]() {
    accum(a, 2.0 * out_grad(o)(0, 0) * val(a));
  };
  return o;
}

Var Tape::dot(Var a, Var b) {
  require(val(a).rows() == val(b).rows() && val(a).cols() == val(b).cols(), "dot: shape mismatch");
  MatX out(1, 1);
  out(0, 0) = val(a).cwiseProduct(val(b)).sum();
  const bool rg = rec(a) || rec(b);
  Var o = make_node(std::move(out), rg, nullptr);
  if (rg) backs_.back() = [this, a, b, o]() {
    const double g = out_grad(o)(0, 0);
    accum(a, g * val(b));
    accum(b, g * val(a));
  };
  return o;
}

Var Tape::bmm33(Var a, Var b) {
  require(val(a).cols() == 9 && val(b).cols() == 9 && val(a).rows() == val(b).rows(),
          "bmm33: expects matching N x 9 operands");
  const int n = static_cast<int>(val(a).rows());
  MatX out(n, 9);
  for (int i = 0; i < n; ++i) {
    const Eigen::Matrix3d c = get3(val(a), i) * get3(val(b), i);
    for (int r = 0; r < 3; ++r)
      for (int k = 0; k < 3; ++k) out(i, 3 * r + k) = c(r, k);
  }
  const bool rg = rec(a) || rec(b);
  Var o = make_node(std::move(out), rg, nullptr);
  if (rg) backs_.back() = [this, a, b, o]() {
    const MatX& g = out_grad(o);
    const int n = static_cast<int>(g.rows());
    MatX ga = MatX::Zero(n, 9), gb = MatX::Zero(n, 9);
    for (int i = 0; i < n; ++i) {
      const Eigen::Matrix3d gm = get3(g, i);
      add3(ga, i, gm * get3(val(b), i).transpose());
      add3(gb, i, get3(val(a), i).transpose() * gm);
    }
    accum(a, ga);
    accum(b, gb);
  };
  return o;
}

Var Tape::bmv3(Var m, Var v) {
  require(val(m).cols() == 9 && val(v).cols() == 3 && val(m).rows() == val(v).rows(),
          "bmv3: expects N x 9 and N x 3");
  const int n = static_cast<int>(val(m).rows());
  MatX out(n, 3);
  for (int i = 0; i < n; ++i)
    out.row(i) = (get3(val(m), i) * val(v).row(i).transpose()).transpose();
  const bool rg = rec(m) || rec(v);
  Var o = make_node(std::move(out), rg, nullptr);
  if (rg) backs_.back() = [this, m, v, o]() {
    const MatX& g = out_grad(o);
    const int n = static_cast<int>(g.rows());
    MatX gm = MatX::Zero(n, 9), gv = MatX::Zero(n, 3);
    for (int i = 0; i < n; ++i) {
      const Eigen::Vector3d gr = g.row(i).transpose();
      const Eigen::Vector3d vr = val(v).row(i).transpose();
      add3(gm, i, gr * vr.transpose());
      gv.row(i) = (get3(val(m), i).transpose() * gr).transpose();
    }
    accum(m, gm);
    accum(v, gv);
  };
  return o;
}

Var Tape::cov_transform(Var p, Var s) {
  require(val(p).cols() == 9 && val(s).cols() == 9 && val(p).rows() == val(s).rows(),
          "cov_transform: expects matching N x 9 operands");
  const int n = static_cast<int>(val(p).rows());
  MatX out(n, 9);
  for (int i = 0; i < n; ++i) {
    const Eigen::Matrix3d pm = get3(val(p), i);
    const Eigen::Matrix3d c = pm * get3(val(s), i) * pm.transpose();
    const Eigen::Matrix3d cs = 0.5 * (c + c.transpose());
    for (int r = 0; r < 3; ++r)
      for (int k = 0; k < 3; ++k) out(i, 3 * r + k) = cs(r, k);
  }
  const bool rg = rec(p) || rec(s);
  Var o = make_node(std::move(out), rg, nullptr);
  if (rg) backs_.back() = [this, p, s, o]() {
    const MatX& g = out_grad(o);
    const int n = static_cast<int>(g.rows());
    MatX gp = MatX::Zero(n, 9), gs = MatX::Zero(n, 9);
    for (int i = 0; i < n; ++i) {
      const Eigen::Matrix3d gm = get3(g, i);
      const Eigen::Matrix3d gsym = 0.5 * (gm + gm.transpose());
      const Eigen::Matrix3d pm = get3(val(p), i);
      const Eigen::Matrix3d sm = get3(val(s), i);
      add3(gp, i, 2.0 * gsym * pm * sm);
      add3(gs, i, pm.transpose() * gsym * pm);
    }
    accum(p, gp);
    accum(s, gs);
  };
  return o;
}

Var Tape::rot_cov(Var w, Var s, double dt) {
  require(val(w).cols() == 3 && val(s).cols() == 9 && val(w).rows() == val(s).rows(),
          "rot_cov: expects N x 3 and N x 9");
  const int n = static_cast<int>(val(w).rows());
  MatX out(n, 9);
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector3d wi = dt * val(w).row(i).transpose();
    const Eigen::Matrix3d r = axis_angle_rotation(wi);
    const Eigen::Matrix3d c = r * get3(val(s), i) * r.transpose();
    const Eigen::Matrix3d cs = 0.5 * (c + c.transpose());
    for (int rr = 0; rr < 3; ++rr)
      for (int k = 0; k < 3; ++k) out(i, 3 * rr + k) = cs(rr, k);
  }
  const bool rg = rec(w) || rec(s);
  Var o = make_node(std::move(out), rg, nullptr);
  if (rg) backs_.back() = [this, w, s, dt, o]() {
    const MatX& g = out_grad(o);
    const int n = static_cast<int>(g.rows());
    MatX gw = MatX::Zero(n, 3), gs = MatX::Zero(n, 9);
    for (int i = 0; i < n; ++i) {
      const Eigen::Matrix3d gm = get3(g, i);
      const Eigen::Matrix3d gsym = 0.5 * (gm + gm.transpose());
      const Eigen::Vector3d wi = dt * val(w).row(i).transpose();
      const Eigen::Matrix3d r = axis_angle_rotation(wi);
      const Eigen::Matrix3d sm = get3(val(s), i);
      add3(gs, i, r.transpose() * gsym * r);
      for (int k = 0; k < 3; ++k) {
        const Eigen::Matrix3d dr = axis_angle_rotation_deriv(wi, k) * dt;
        gw(i, k) = 2.0 * (gsym.cwiseProduct(dr * sm * r.transpose())).sum();
      }
    }
    accum(w, gw);
    accum(s, gs);
  };
  return o;
}

Var Tape::blur2d(Var img, std::shared_ptr<const VecX> kernel) {
  require(kernel && kernel->size() % 2 == 1, "blur2d: kernel must have odd length");
  const bool rg = rec(img);
  Var o = make_node(blur_apply(val(img), *kernel), rg, nullptr);
  if (rg) backs_.back() = [this, img, kernel, o]() {
    accum(img, blur_apply(out_grad(o), *kernel));
  };
  return o;
}

Var Tape::edge_mean_messages(Var h, IndexList src, IndexList dst, int out_rows,
                             Var w1, Var b1, Var w2, Var b2) {
  const MatX& hv = val(h);
  const int e = static_cast<int>(src->size());
  require(dst->size() == src->size(), "edge_mean_messages: src/dst size mismatch");
  require(val(w1).rows() == 2 * hv.cols(), "edge_mean_messages: w1 input dim mismatch");
  require(val(w2).rows() == val(w1).cols(), "edge_mean_messages: w2 input dim mismatch");
  const int dout = static_cast<int>(val(w2).cols());

  VecX indeg = VecX::Zero(out_rows);
  for (int i = 0; i < e; ++i) {
    require((*dst)[i] >= 0 && (*dst)[i] < out_rows, "edge_mean_messages: dst out of range");
    require((*src)[i] >= 0 && (*src)[i] < hv.rows(), "edge_mean_messages: src out of range");
    indeg[(*dst)[i]] += 1.0;
  }

  MatX out = MatX::Zero(out_rows, dout);
  const int d = static_cast<int>(hv.cols());
  for (int at = 0; at < e; at += kEdgeChunk) {
    const int m = std::min(kEdgeChunk, e - at);
    MatX x(m, 2 * d);
    for (int i = 0; i < m; ++i) {
      x.row(i).head(d) = hv.row((*src)[at + i]);
      x.row(i).tail(d) = hv.row((*dst)[at + i]);
    }
    MatX a1 = x * val(w1);
    a1.rowwise() += val(b1).row(0);
    MatX a2 = silu_of(a1) * val(w2);
    a2.rowwise() += val(b2).row(0);
    const MatX z2 = silu_of(a2);
    for (int i = 0; i < m; ++i) out.row((*dst)[at + i]) += z2.row(i);
  }
  for (int i = 0; i < out_rows; ++i)
    if (indeg[i] > 0) out.row(i) /= indeg[i];

  const bool rg = rec(h) || rec(w1) || rec(b1) || rec(w2) || rec(b2);
  Var o = make_node(std::move(out), rg, nullptr);
  if (rg) {
    auto deg = std::make_shared<VecX>(std::move(indeg));
    backs_.back() = [this, h, src, dst, w1, b1, w2, b2, o, deg]() {
      const MatX& g = out_grad(o);
      const MatX& hv = val(h);
      const int e = static_cast<int>(src->size());
      const int d = static_cast<int>(hv.cols());
      MatX gh = MatX::Zero(hv.rows(), d);
      MatX gw1 = MatX::Zero(val(w1).rows(), val(w1).cols());
      MatX gb1 = MatX::Zero(1, val(b1).cols());
      MatX gw2 = MatX::Zero(val(w2).rows(), val(w2).cols());
      MatX gb2 = MatX::Zero(1, val(b2).cols());
      for (int at = 0; at < e; at += kEdgeChunk) {
        const int m = std::min(kEdgeChunk, e - at);
        MatX x(m, 2 * d);
        MatX gz2(m, val(w2).cols());
        for (int i = 0; i < m; ++i) {
          x.row(i).head(d) = hv.row((*src)[at + i]);
          x.row(i).tail(d) = hv.row((*dst)[at + i]);
          gz2.row(i) = g.row((*dst)[at + i]) / (*deg)[(*dst)[at + i]];
        }
        MatX a1 = x * val(w1);
        a1.rowwise() += val(b1).row(0);
        const MatX z1 = silu_of(a1);
        MatX a2 = z1 * val(w2);
        a2.rowwise() += val(b2).row(0);
        const MatX ga2 = gz2.cwiseProduct(silu_grad_of(a2));
        gw2 += z1.transpose() * ga2;
        gb2 += ga2.colwise().sum();
        const MatX ga1 = (ga2 * val(w2).transpose()).cwiseProduct(silu_grad_of(a1));
        gw1 += x.transpose() * ga1;
        gb1 += ga1.colwise().sum();
        const MatX gx = ga1 * val(w1).transpose();
        for (int i = 0; i < m; ++i) {
          gh.row((*src)[at + i]) += gx.row(i).head(d);
          gh.row((*dst)[at + i]) += gx.row(i).tail(d);
        }
      }
      accum(h, gh);
      accum(w1, gw1);
      accum(b1, gb1);
      accum(w2, gw2);
      accum(b2, gb2);
    };
  }
  return o;
}

}  // namespace soma::ad
