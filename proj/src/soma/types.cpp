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

#include "soma/types.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <stdexcept>

namespace soma {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

bool finite(const MatX& m) { return m.allFinite(); }

}  // namespace

void GaussianSplat::validate() const {
  require(std::isfinite(mass) && mass > 0, "splat mass must be > 0");
  require(opacity > 0 && opacity <= 1, "splat opacity must be in (0,1]");
  for (int i = 0; i < 3; ++i)
    require(color[i] >= 0 && color[i] <= 1, "splat color must be in [0,1]");
  require(position.allFinite() && covariance.allFinite() && attributes.allFinite(),
          "splat fields must be finite");
  require((covariance - covariance.transpose()).cwiseAbs().maxCoeff() <= 1e-10,
          "splat covariance must be symmetric within 1e-10");
  Eigen::SelfAdjointEigenSolver<Mat3> es(symmetrize(covariance));
  require(es.eigenvalues().minCoeff() > 0,
          "splat covariance must have strictly positive eigenvalues");
}

void SplatSetState::validate() const {
  require(splats.size() == velocities.size(),
          "splat and velocity counts must match");
  for (const auto& s : splats) s.validate();
  for (const auto& v : velocities) require(v.allFinite(), "velocities must be finite");
}

void Hierarchy::validate() const {
  require(num_levels() >= 2, "hierarchy needs at least 2 levels");
  for (int l = 0; l < num_levels(); ++l) {
    const Level& lvl = levels[l];
    require(lvl.count > 0, "empty hierarchy level");
    require(lvl.rest_positions.rows() == lvl.count, "rest position count mismatch");
    require(lvl.masses.size() == lvl.count, "mass count mismatch");
    const bool top = (l == num_levels() - 1);
    if (top) {
      require(lvl.parent.empty(), "top level must have no parents");
      continue;
    }
    require(static_cast<int>(lvl.parent.size()) == lvl.count, "parent map size mismatch");
    const int next = levels[l + 1].count;
    std::vector<char> covered(next, 0);
    for (int p : lvl.parent) {
      require(p >= 0 && p < next, "parent index out of range");
      covered[p] = 1;
    }
    for (char c : covered) require(c != 0, "parent map must be surjective");
  }
  // Mass conservation across levels, identical summation order (node index).
  const auto total = [](const Level& lvl) {
    double t = 0;
    for (int i = 0; i < lvl.count; ++i) t += lvl.masses[i];
    return t;
  };
  const double m0 = total(levels[0]);
  for (int l = 1; l < num_levels(); ++l)
    require(total(levels[l]) == m0, "mass not conserved across hierarchy levels");
  // Mass-weighted rest centers agree between adjacent levels.
  for (int l = 0; l + 1 < num_levels(); ++l) {
    Vec3 a = Vec3::Zero(), b = Vec3::Zero();
    for (int i = 0; i < levels[l].count; ++i)
      a += levels[l].masses[i] * levels[l].rest_positions.row(i).transpose();
    for (int i = 0; i < levels[l + 1].count; ++i)
      b += levels[l + 1].masses[i] * levels[l + 1].rest_positions.row(i).transpose();
    const double scale = std::max(1.0, a.norm());
    require((a - b).norm() / scale <= 1e-10, "rest center drift across levels");
  }
}

void RobotAction::validate() const {
  require(q.allFinite(), "joint configuration must be finite");
  require(is_rigid(ee_pose_sim, 1e-8), "end-effector pose must be rigid");
  require(gripper >= 0 && gripper <= 1, "gripper state must be in [0,1]");
  require(control_points.rows() == kControlPoints && control_points.cols() == 3,
          "control point set must be exactly 30 x 3");
  require(finite(control_points), "control points must be finite");
}

void CameraModel::validate() const {
  require(fx > 0 && fy > 0, "camera focal lengths must be > 0");
  require(width > 0 && height > 0, "camera image size must be positive");
  require(is_rigid(world_from_camera, 1e-8), "camera pose must be rigid");
}

Image Image::zero(int h, int w) {
  Image img;
  for (auto& c : img.ch) c = MatX::Zero(h, w);
  return img;
}

void SceneFrame::validate() const {
  for (const auto& v : views) {
    const int h = v.rgb.rows(), w = v.rgb.cols();
    require(h > 0 && w > 0, "empty image");
    for (const auto& c : v.rgb.ch) {
      require(c.rows() == h && c.cols() == w, "rgb channel shape mismatch");
      require(c.minCoeff() >= 0 && c.maxCoeff() <= 1, "rgb must be in [0,1]");
    }
    require(v.depth.rows() == h && v.depth.cols() == w, "depth shape mismatch");
    require(v.depth.minCoeff() >= 0, "depth must be >= 0 (0 = invalid)");
    require(v.obj_mask.rows() == h && v.obj_mask.cols() == w, "object mask shape mismatch");
    require(v.occ_mask.rows() == h && v.occ_mask.cols() == w, "occluder mask shape mismatch");
    for (const auto* m : {&v.obj_mask, &v.occ_mask})
      require(m->maxCoeff() <= 1, "masks must be binary");
    require(is_rigid(v.camera_pose, 1e-8), "frame camera pose must be rigid");
  }
  action.validate();
}

void SceneSequence::validate() const {
  require(!cameras.empty(), "sequence needs at least one camera");
  for (const auto& c : cameras) c.validate();
  require(wrist_camera >= -1 && wrist_camera < static_cast<int>(cameras.size()),
          "wrist camera index out of range");
  require(dt > 0, "dt must be > 0");
  for (const auto& f : frames) {
    require(f.views.size() == cameras.size(), "frame view count mismatch");
    for (size_t c = 0; c < cameras.size(); ++c) {
      require(f.views[c].rgb.rows() == cameras[c].height &&
                  f.views[c].rgb.cols() == cameras[c].width,
              "frame image size disagrees with camera model");
    }
    f.validate();
  }
  if (!wrist_pose_rob.empty())
    require(wrist_pose_rob.size() == frames.size(), "wrist pose count mismatch");
  for (const auto& p : reference_pairs)
    require(p.first > 0 && p.second > 0, "reference lengths must be > 0");
  initial_splats.validate();
}

Mat4 SimilarityTransform::matrix() const {
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = s * R;
  m.topRightCorner<3, 1>() = t;
  return m;
}

void SimilarityTransform::validate() const {
  require(std::isfinite(s) && s > 0, "similarity scale must be > 0");
  require((R.transpose() * R - Mat3::Identity()).norm() <= 1e-10 &&
              std::abs(R.determinant() - 1.0) <= 1e-10,
          "similarity rotation must be orthonormal det +1 within 1e-10");
  require(t.allFinite(), "similarity translation must be finite");
}

void Plane::validate() const {
  require(std::abs(n.norm() - 1.0) <= 1e-12, "plane normal must be unit within 1e-12");
  require(std::isfinite(d), "plane offset must be finite");
}

PackedSplats pack(const SplatSetState& state) {
  const int n = state.size();
  PackedSplats p;
  const int attr_dim = n > 0 ? static_cast<int>(state.splats[0].attributes.size()) : 0;
  p.positions.resize(n, 3);
  p.covariances.resize(n, 9);
  p.velocities.resize(n, 3);
  p.colors.resize(n, 3);
  p.opacities.resize(n);
  p.masses.resize(n);
  p.attributes.resize(n, attr_dim);
  for (int i = 0; i < n; ++i) {
    const GaussianSplat& s = state.splats[i];
    p.positions.row(i) = s.position.transpose();
    pack_cov(p.covariances, i, s.covariance);
    p.velocities.row(i) = state.velocities[i].transpose();
    p.colors.row(i) = s.color.transpose();
    p.opacities[i] = s.opacity;
    p.masses[i] = s.mass;
    if (attr_dim > 0) p.attributes.row(i) = s.attributes.transpose();
  }
  return p;
}

SplatSetState unpack(const PackedSplats& packed, int timestamp) {
  SplatSetState st;
  st.timestamp = timestamp;
  const int n = packed.size();
  st.splats.resize(n);
  st.velocities.resize(n);
  for (int i = 0; i < n; ++i) {
    GaussianSplat& s = st.splats[i];
    s.position = packed.positions.row(i).transpose();
    s.covariance = unpack_cov(packed.covariances, i);
    s.color = packed.colors.row(i).transpose();
    s.opacity = packed.opacities[i];
    s.mass = packed.masses[i];
    s.attributes = packed.attributes.row(i).transpose();
    st.velocities[i] = packed.velocities.row(i).transpose();
  }
  return st;
}

Mat3 unpack_cov(const MatX& covs, int row) {
  Mat3 c;
  for (int r = 0; r < 3; ++r)
    for (int k = 0; k < 3; ++k) c(r, k) = covs(row, 3 * r + k);
  return c;
}

void pack_cov(MatX& covs, int row, const Mat3& c) {
  for (int r = 0; r < 3; ++r)
    for (int k = 0; k < 3; ++k) covs(row, 3 * r + k) = c(r, k);
}

}  // namespace soma
