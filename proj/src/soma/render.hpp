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

#include <array>

#include "soma/ad.hpp"
#include "soma/types.hpp"

namespace soma::render {

struct RenderConfig {
  double near = 1e-3;         // camera-space near plane, meters
  double dilation = 0.3;      // px², isotropic 2D covariance floor
  double alpha_clamp = 0.999;
  double alpha_cutoff = 1.0 / 255.0;
  double min_transmittance = 1e-4;  // per-pixel early stop
};

struct Projected {
  Eigen::Vector2d mean2d = Eigen::Vector2d::Zero();
  Eigen::Matrix2d cov2d = Eigen::Matrix2d::Zero();  // includes the dilation
  double depth = 0;
  bool visible = false;  // false when behind the near plane
};

/// Pinhole projection of one splat; cov2d = J W Σ Wᵀ Jᵀ + dilation·I.
Projected project_splat(const CameraModel& cam, const Vec3& x, const Mat3& sigma,
                        const RenderConfig& cfg = {});

/// Front-to-back alpha compositing over black. Differentiable in positions,
/// covariances, colors, and opacities through the tape (alpha and depth are
/// value-only outputs; gradients flow through rgb).
struct RenderOutput {
  ad::Var rgb_planes;                // H x 3W node: [R | G | B]
  std::array<ad::Var, 3> channels;   // views into rgb_planes
  MatX alpha;                        // H x W
  MatX depth;                        // H x W, 0 where alpha < 0.5
  int excluded = 0;                  // splats behind the near plane

  Image image(const ad::Tape& t) const;
};

RenderOutput rasterize(ad::Tape& t, const CameraModel& cam, ad::Var positions,
                       ad::Var covariances, ad::Var colors, ad::Var opacities,
                       const RenderConfig& cfg = {});

/// Value-only convenience overload.
RenderOutput rasterize(ad::Tape& t, const CameraModel& cam, const PackedSplats& splats,
                       const RenderConfig& cfg = {});

// --- SSIM / D-SSIM (11x11 Gaussian window, sigma 1.5, K1 .01, K2 .03, L 1) ---

std::shared_ptr<const VecX> ssim_kernel();

/// Per-pixel SSIM map between two single-channel images (value computation).
MatX ssim_map(const MatX& a, const MatX& b);

/// D-SSIM = (1 - mean SSIM)/2 averaged over channels, as a tape scalar.
ad::Var dssim(ad::Tape& t, const std::array<ad::Var, 3>& a, const std::array<ad::Var, 3>& b);

double dssim_value(const Image& a, const Image& b);

/// lambda * ||M (a - b)||² / max(1, ΣM) + (1-lambda) * D-SSIM(M a, M b).
/// Zero when the mask is empty; L2 gradients vanish outside the mask.
ad::Var masked_image_loss(ad::Tape& t, const std::array<ad::Var, 3>& rendered,
                          const Image& target, const MaskImage& mask, double lambda);

double masked_image_loss_value(const Image& rendered, const Image& target, const MaskImage& mask,
                               double lambda);

}  // namespace soma::render
