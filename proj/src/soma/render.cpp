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

#include "soma/render.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace soma::render {

namespace {

struct SplatProj {
  int id = -1;
  Eigen::Vector2d mean2d;
  Eigen::Matrix2d cov2d;
  Eigen::Matrix2d inv2d;
  double depth = 0;
  Vec3 x_cam;
  Eigen::Matrix<double, 2, 3> jac;
  Mat3 v_cam;  // W Σ Wᵀ
  int x0 = 0, x1 = -1, y0 = 0, y1 = -1;
};

Projected project_impl(const CameraModel& cam, const Vec3& x, const Mat3& sigma,
                       const RenderConfig& cfg, SplatProj* detail) {
  Projected out;
  const Mat3 w = rotation_of(cam.world_from_camera).transpose();
  const Vec3 x_cam = w * (x - translation_of(cam.world_from_camera));
  if (x_cam.z() <= cfg.near) return out;
  const double z = x_cam.z();
  out.visible = true;
  out.depth = z;
  out.mean2d = Eigen::Vector2d(cam.fx * x_cam.x() / z + cam.cx, cam.fy * x_cam.y() / z + cam.cy);
  Eigen::Matrix<double, 2, 3> jac;
  jac << cam.fx / z, 0, -cam.fx * x_cam.x() / (z * z),
         0, cam.fy / z, -cam.fy * x_cam.y() / (z * z);
  const Mat3 v = w * sigma * w.transpose();
  out.cov2d = jac * v * jac.transpose() + cfg.dilation * Eigen::Matrix2d::Identity();
  if (detail) {
    detail->mean2d = out.mean2d;
    detail->cov2d = out.cov2d;
    detail->inv2d = out.cov2d.inverse();
    detail->depth = z;
    detail->x_cam = x_cam;
    detail->jac = jac;
    detail->v_cam = v;
  }
  return out;
}

}  // namespace

Projected project_splat(const CameraModel& cam, const Vec3& x, const Mat3& sigma,
                        const RenderConfig& cfg) {
  cam.validate();
  return project_impl(cam, x, sigma, cfg, nullptr);
}

Image RenderOutput::image(const ad::Tape& t) const {
  Image img;
  for (int c = 0; c < 3; ++c) img.ch[c] = t.val(channels[c]).cwiseMax(0.0).cwiseMin(1.0);
  return img;
}

RenderOutput rasterize(ad::Tape& t, const CameraModel& cam, ad::Var positions,
                       ad::Var covariances, ad::Var colors, ad::Var opacities,
                       const RenderConfig& cfg) {
  cam.validate();
  const MatX& pos = t.val(positions);
  const MatX& cov = t.val(covariances);
  const MatX& col = t.val(colors);
  const MatX& opa = t.val(opacities);
  const int n = static_cast<int>(pos.rows());
  if (cov.rows() != n || col.rows() != n || opa.rows() != n)
    throw std::invalid_argument("rasterize: splat array lengths disagree");
  const int h = cam.height, w = cam.width;

  RenderOutput out;
  out.alpha = MatX::Zero(h, w);
  out.depth = MatX::Zero(h, w);

  // Project and cull.
  auto projs = std::make_shared<std::vector<SplatProj>>();
  projs->reserve(n);
  for (int i = 0; i < n; ++i) {
    SplatProj sp;
    const Projected p = project_impl(cam, pos.row(i).transpose(), unpack_cov(cov, i), cfg, &sp);
    if (!p.visible) {
      out.excluded++;
      continue;
    }
    // 3-sigma bounding box from the largest eigenvalue of cov2d.
    const double tr = sp.cov2d.trace();
    const double det = sp.cov2d.determinant();
    const double disc = std::sqrt(std::max(0.0, tr * tr * 0.25 - det));
    const double radius = 3.0 * std::sqrt(std::max(1e-12, tr * 0.5 + disc));
    sp.x0 = std::max(0, static_cast<int>(std::floor(sp.mean2d.x() - radius)));
    sp.x1 = std::min(w - 1, static_cast<int>(std::ceil(sp.mean2d.x() + radius)));
    sp.y0 = std::max(0, static_cast<int>(std::floor(sp.mean2d.y() - radius)));
    sp.y1 = std::min(h - 1, static_cast<int>(std::ceil(sp.mean2d.y() + radius)));
    if (sp.x0 > sp.x1 || sp.y0 > sp.y1) continue;
    sp.id = i;
    projs->push_back(sp);
  }
  // Stable depth order (ties broken by splat index).
  std::sort(projs->begin(), projs->end(), [](const SplatProj& a, const SplatProj& b) {
    return a.depth < b.depth || (a.depth == b.depth && a.id < b.id);
  });

  MatX planes = MatX::Zero(h, 3 * w);
  MatX transmit = MatX::Constant(h, w, 1.0);
  MatX depth_acc = MatX::Zero(h, w);
  // Per-pixel contributor lists (indices into *projs), in compositing order.
  auto contrib = std::make_shared<std::vector<std::vector<int>>>(static_cast<size_t>(h) * w);

  for (size_t k = 0; k < projs->size(); ++k) {
    const SplatProj& sp = (*projs)[k];
    const Vec3 c = col.row(sp.id).transpose();
    const double op = opa(sp.id, 0);
    for (int y = sp.y0; y <= sp.y1; ++y) {
      for (int x = sp.x0; x <= sp.x1; ++x) {
        double& tpx = transmit(y, x);
        if (tpx < cfg.min_transmittance) continue;
        const Eigen::Vector2d d(x + 0.5 - sp.mean2d.x(), y + 0.5 - sp.mean2d.y());
        const double q = d.dot(sp.inv2d * d);
        if (q > 18.0) continue;  // beyond 3 sigma
        const double g = std::exp(-0.5 * q);
        const double a = std::min(cfg.alpha_clamp, op * g);
        if (a < cfg.alpha_cutoff) continue;
        const double wgt = a * tpx;
        for (int ch = 0; ch < 3; ++ch) planes(y, ch * w + x) += c[ch] * wgt;
        depth_acc(y, x) += sp.depth * wgt;
        tpx *= (1.0 - a);
        (*contrib)[static_cast<size_t>(y) * w + x].push_back(static_cast<int>(k));
      }
    }
  }

  out.alpha = MatX::Ones(h, w) - transmit;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      out.depth(y, x) = out.alpha(y, x) >= 0.5 ? depth_acc(y, x) / out.alpha(y, x) : 0.0;

  const bool rg = t.recording() && (t.requires_grad(positions) || t.requires_grad(covariances) ||
                                    t.requires_grad(colors) || t.requires_grad(opacities));
  ad::Var node = t.make_node(std::move(planes), rg, nullptr);
  if (rg) {
    auto t_final = std::make_shared<MatX>(transmit);
    ad::Var self = node;
    t.set_backward(node, [&t, self, positions, covariances, colors, opacities, cam, cfg, projs,
                          contrib, t_final]() {
      const MatX& g = t.out_grad(self);
      const int h = cam.height, w = cam.width;
      const MatX& col = t.val(colors);
      const MatX& opa = t.val(opacities);
      const int n = static_cast<int>(t.val(positions).rows());

      std::vector<Eigen::Vector2d> gmean(projs->size(), Eigen::Vector2d::Zero());
      std::vector<Eigen::Matrix2d> gcov2d(projs->size(), Eigen::Matrix2d::Zero());
      MatX gcol = MatX::Zero(n, 3);
      MatX gopa = MatX::Zero(n, 1);

      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const auto& ids = (*contrib)[static_cast<size_t>(y) * w + x];
          if (ids.empty()) continue;
          const Vec3 gpx(g(y, x), g(y, w + x), g(y, 2 * w + x));
          if (gpx.isZero(0.0)) continue;
          double acc_t = (*t_final)(y, x);
          Vec3 trailing = Vec3::Zero();  // Σ_{j>i} c_j w_j
          for (auto it = ids.rbegin(); it != ids.rend(); ++it) {
            const SplatProj& sp = (*projs)[*it];
            const Eigen::Vector2d d(x + 0.5 - sp.mean2d.x(), y + 0.5 - sp.mean2d.y());
            const double q = d.dot(sp.inv2d * d);
            const double gau = std::exp(-0.5 * q);
            const double op = opa(sp.id, 0);
            const double a = std::min(cfg.alpha_clamp, op * gau);
            const double t_before = acc_t / (1.0 - a);
            const double wgt = a * t_before;
            const Vec3 c = col.row(sp.id).transpose();

            gcol.row(sp.id) += (wgt * gpx).transpose();
            const double dalpha =
                gpx.dot(t_before * c - trailing / (1.0 - a));
            trailing += c * wgt;
            acc_t = t_before;
            if (op * gau >= cfg.alpha_clamp) continue;  // clamped: flat
            gopa(sp.id, 0) += dalpha * gau;
            const double gg = dalpha * op;          // dL/dG
            const double gq = -0.5 * gau * gg;      // dL/dq
            const Eigen::Vector2d ad2 = sp.inv2d * d;
            gmean[*it] += -2.0 * gq * ad2;                   // dq/dmean = -2 A d
            gcov2d[*it] += gq * (-(ad2 * ad2.transpose()));  // dq/dcov = -(A d)(A d)ᵀ
          }
        }
      }

      // Chain 2D gradients through the projection to world quantities.
      MatX gpos = MatX::Zero(n, 3);
      MatX gcov3 = MatX::Zero(n, 9);
      const Mat3 wrot = rotation_of(cam.world_from_camera).transpose();
      for (size_t k = 0; k < projs->size(); ++k) {
        const SplatProj& sp = (*projs)[k];
        if (gmean[k].isZero(0.0) && gcov2d[k].isZero(0.0)) continue;
        const Eigen::Matrix2d gc = 0.5 * (gcov2d[k] + gcov2d[k].transpose());
        // Mean path.
        Vec3 gx_cam = sp.jac.transpose() * gmean[k];
        // Covariance path through V.
        const Mat3 gv = sp.jac.transpose() * gc * sp.jac;
        const Mat3 gs = wrot.transpose() * gv * wrot;
        for (int r = 0; r < 3; ++r)
          for (int cc = 0; cc < 3; ++cc) gcov3(sp.id, 3 * r + cc) += gs(r, cc);
        // Covariance path through J(x_cam).
        const Eigen::Matrix<double, 2, 3> gjac = 2.0 * gc * sp.jac * sp.v_cam;
        const double z = sp.x_cam.z(), xx = sp.x_cam.x(), yy = sp.x_cam.y();
        gx_cam.x() += gjac(0, 2) * (-cam.fx / (z * z));
        gx_cam.y() += gjac(1, 2) * (-cam.fy / (z * z));
        gx_cam.z() += gjac(0, 0) * (-cam.fx / (z * z)) + gjac(1, 1) * (-cam.fy / (z * z)) +
                      gjac(0, 2) * (2.0 * cam.fx * xx / (z * z * z)) +
                      gjac(1, 2) * (2.0 * cam.fy * yy / (z * z * z));
        gpos.row(sp.id) += (wrot.transpose() * gx_cam).transpose();
      }
      t.accum(positions, gpos);
      t.accum(covariances, gcov3);
      t.accum(colors, gcol);
      t.accum(opacities, gopa);
    });
  }

  out.rgb_planes = node;
  for (int c = 0; c < 3; ++c) out.channels[c] = t.cols(node, c * w, w);
  return out;
}

RenderOutput rasterize(ad::Tape& t, const CameraModel& cam, const PackedSplats& splats,
                       const RenderConfig& cfg) {
  ad::Var pos = t.constant(splats.positions);
  ad::Var cov = t.constant(splats.covariances);
  ad::Var col = t.constant(splats.colors);
  ad::Var opa = t.constant(splats.opacities);
  return rasterize(t, cam, pos, cov, col, opa, cfg);
}

// ---------------------------------------------------------------------------

std::shared_ptr<const VecX> ssim_kernel() {
  static const std::shared_ptr<const VecX> kernel = [] {
    VecX k(11);
    const double sigma = 1.5;
    for (int i = 0; i < 11; ++i) {
      const double d = i - 5;
      k[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    }
    k /= k.sum();
    return std::make_shared<const VecX>(k);
  }();
  return kernel;
}

namespace {

constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

MatX blur_value(const MatX& img) {
  ad::Tape t(false);
  return t.val(t.blur2d(t.constant(img), ssim_kernel()));
}

}  // namespace

MatX ssim_map(const MatX& a, const MatX& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument("ssim_map: shape mismatch");
  const MatX mu_a = blur_value(a), mu_b = blur_value(b);
  const MatX saa = blur_value(a.cwiseProduct(a)) - mu_a.cwiseProduct(mu_a);
  const MatX sbb = blur_value(b.cwiseProduct(b)) - mu_b.cwiseProduct(mu_b);
  const MatX sab = blur_value(a.cwiseProduct(b)) - mu_a.cwiseProduct(mu_b);
  const MatX num = (2.0 * mu_a.cwiseProduct(mu_b).array() + kC1) * (2.0 * sab.array() + kC2);
  const MatX den =
      (mu_a.cwiseProduct(mu_a).array() + mu_b.cwiseProduct(mu_b).array() + kC1) *
      (saa.array() + sbb.array() + kC2);
  return num.cwiseQuotient(den);
}

namespace {

ad::Var ssim_mean_channel(ad::Tape& t, ad::Var a, ad::Var b) {
  auto kernel = ssim_kernel();
  const double npx = static_cast<double>(t.val(a).size());
  ad::Var mu_a = t.blur2d(a, kernel);
  ad::Var mu_b = t.blur2d(b, kernel);
  ad::Var saa = t.sub(t.blur2d(t.mul(a, a), kernel), t.mul(mu_a, mu_a));
  ad::Var sbb = t.sub(t.blur2d(t.mul(b, b), kernel), t.mul(mu_b, mu_b));
  ad::Var sab = t.sub(t.blur2d(t.mul(a, b), kernel), t.mul(mu_a, mu_b));
  ad::Var num = t.mul(t.add_const(t.scale(t.mul(mu_a, mu_b), 2.0), kC1),
                      t.add_const(t.scale(sab, 2.0), kC2));
  ad::Var den = t.mul(t.add_const(t.add(t.mul(mu_a, mu_a), t.mul(mu_b, mu_b)), kC1),
                      t.add_const(t.add(saa, sbb), kC2));
  return t.scale(t.sum(t.cdiv(num, den)), 1.0 / npx);
}

}  // namespace

ad::Var dssim(ad::Tape& t, const std::array<ad::Var, 3>& a, const std::array<ad::Var, 3>& b) {
  for (int c = 0; c < 3; ++c)
    if (t.val(a[c]).rows() != t.val(b[c]).rows() || t.val(a[c]).cols() != t.val(b[c]).cols())
      throw std::invalid_argument("dssim: shape mismatch");
  ad::Var mean = t.scalar(0.0);
  for (int c = 0; c < 3; ++c) mean = t.add(mean, ssim_mean_channel(t, a[c], b[c]));
  mean = t.scale(mean, 1.0 / 3.0);
  // (1 - ssim)/2
  return t.scale(t.add_const(t.scale(mean, -1.0), 1.0), 0.5);
}

double dssim_value(const Image& a, const Image& b) {
  ad::Tape t(false);
  std::array<ad::Var, 3> av, bv;
  for (int c = 0; c < 3; ++c) {
    av[c] = t.constant(a.ch[c]);
    bv[c] = t.constant(b.ch[c]);
  }
  return t.scalar_val(dssim(t, av, bv));
}

ad::Var masked_image_loss(ad::Tape& t, const std::array<ad::Var, 3>& rendered,
                          const Image& target, const MaskImage& mask, double lambda) {
  if (lambda < 0 || lambda > 1) throw std::invalid_argument("masked_image_loss: lambda in [0,1]");
  const int h = static_cast<int>(mask.rows()), w = static_cast<int>(mask.cols());
  for (int c = 0; c < 3; ++c)
    if (t.val(rendered[c]).rows() != h || t.val(rendered[c]).cols() != w ||
        target.ch[c].rows() != h || target.ch[c].cols() != w)
      throw std::invalid_argument("masked_image_loss: shape mismatch");

  const MatX m = mask.cast<double>();
  const double area = m.sum();
  ad::Var mvar = t.constant(m);

  ad::Var l2 = t.scalar(0.0);
  std::array<ad::Var, 3> masked_pred, masked_tgt;
  for (int c = 0; c < 3; ++c) {
    ad::Var tgt = t.constant(target.ch[c]);
    l2 = t.add(l2, t.sumsq(t.mul(mvar, t.sub(rendered[c], tgt))));
    masked_pred[c] = t.mul(rendered[c], mvar);
    masked_tgt[c] = t.constant(target.ch[c].cwiseProduct(m));
  }
  if (area == 0.0) return t.scalar(0.0);
  ad::Var l2n = t.scale(l2, lambda / std::max(1.0, area));
  ad::Var ds = dssim(t, masked_pred, masked_tgt);
  return t.add(l2n, t.scale(ds, 1.0 - lambda));
}

double masked_image_loss_value(const Image& rendered, const Image& target, const MaskImage& mask,
                               double lambda) {
  ad::Tape t(false);
  std::array<ad::Var, 3> rv;
  for (int c = 0; c < 3; ++c) rv[c] = t.constant(rendered.ch[c]);
  return t.scalar_val(masked_image_loss(t, rv, target, mask, lambda));
}

}  // namespace soma::render
