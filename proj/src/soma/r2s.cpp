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

#include "soma/r2s.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <stdexcept>

namespace soma::r2s {

void KinematicChain::validate() const {
  if (joints.empty()) throw std::invalid_argument("chain must have at least one joint");
  for (const auto& j : joints) {
    if (std::abs(j.axis.norm() - 1.0) > 1e-10)
      throw std::invalid_argument("joint axis must be unit norm");
    if (!is_rigid(j.parent_to_joint, 1e-8))
      throw std::invalid_argument("joint fixed transform must be rigid");
  }
  if (!is_rigid(ee_fixed, 1e-8))
    throw std::invalid_argument("end-effector fixed transform must be rigid");
  if (gripper_joint >= static_cast<int>(joints.size()))
    throw std::invalid_argument("gripper joint index out of range");
}

KinematicChain chain_from_config(const nlohmann::json& cfg) {
  KinematicChain chain;
  for (const auto& jj : cfg.at("chain")) {
    KinematicChain::Joint j;
    const std::string type = jj.at("type").get<std::string>();
    if (type == "revolute") {
      j.type = KinematicChain::Joint::Type::kRevolute;
    } else if (type == "prismatic") {
      j.type = KinematicChain::Joint::Type::kPrismatic;
    } else {
      throw std::invalid_argument("unknown joint type: " + type);
    }
    const auto& ax = jj.at("axis");
    j.axis = Vec3(ax[0].get<double>(), ax[1].get<double>(), ax[2].get<double>()).normalized();
    const auto& tr = jj.at("translation");
    const auto& qu = jj.at("quaternion");  // w x y z
    j.parent_to_joint = make_rigid(
        rotation_of_quat(qu[0].get<double>(), qu[1].get<double>(), qu[2].get<double>(),
                         qu[3].get<double>()),
        Vec3(tr[0].get<double>(), tr[1].get<double>(), tr[2].get<double>()));
    chain.joints.push_back(j);
  }
  const auto& etr = cfg.at("ee_translation");
  const auto& equ = cfg.at("ee_quaternion");
  chain.ee_fixed = make_rigid(
      rotation_of_quat(equ[0].get<double>(), equ[1].get<double>(), equ[2].get<double>(),
                       equ[3].get<double>()),
      Vec3(etr[0].get<double>(), etr[1].get<double>(), etr[2].get<double>()));
  chain.gripper_joint = cfg.at("gripper_joint").get<int>();
  chain.gripper_open = cfg.at("gripper_open").get<double>();
  chain.gripper_closed = cfg.at("gripper_closed").get<double>();
  chain.validate();
  return chain;
}

Mat4 fk(const KinematicChain& chain, const VecX& q) {
  if (q.size() != static_cast<Eigen::Index>(chain.joints.size()))
    throw std::invalid_argument("fk: joint vector length does not match chain");
  Mat4 t = Mat4::Identity();
  for (size_t i = 0; i < chain.joints.size(); ++i) {
    const auto& j = chain.joints[i];
    t = t * j.parent_to_joint;
    if (j.type == KinematicChain::Joint::Type::kRevolute) {
      t = t * make_rigid(axis_angle_rotation(q[static_cast<Eigen::Index>(i)] * j.axis),
                         Vec3::Zero());
    } else {
      t = t * make_rigid(Mat3::Identity(), q[static_cast<Eigen::Index>(i)] * j.axis);
    }
  }
  return t * chain.ee_fixed;
}

double estimate_scale(const std::vector<ReferencePair>& pairs) {
  if (pairs.empty()) throw std::invalid_argument("estimate_scale: no reference pairs");
  double num = 0, den = 0;
  for (const auto& p : pairs) {
    if (p.rec <= 0 || p.metric <= 0)
      throw std::invalid_argument("estimate_scale: reference lengths must be > 0");
    num += p.metric * p.rec;
    den += p.rec * p.rec;
  }
  return num / den;
}

SimilarityTransform estimate_rigid(const Mat4& cam_in_rob, const Mat4& cam_in_rec, double s) {
  if (s <= 0) throw std::invalid_argument("estimate_rigid: scale must be > 0");
  if (!is_rigid(cam_in_rob, 1e-8) || !is_rigid(cam_in_rec, 1e-8))
    throw std::invalid_argument("estimate_rigid: inputs must be rigid transforms");
  Mat4 scaled = cam_in_rob;
  scaled.topRightCorner<3, 1>() *= s;
  const Mat4 t = cam_in_rec * inverse_rigid(scaled);
  SimilarityTransform x;
  x.s = s;
  x.R = orthonormalize(rotation_of(t));
  x.t = translation_of(t);
  return x;
}

Mat4 map_pose(const Mat4& pose, const SimilarityTransform& x) { return x.matrix() * pose; }

Plane fit_plane(const MatX& points, double* rms_residual) {
  if (points.rows() < 3 || points.cols() != 3)
    throw std::invalid_argument("fit_plane: need at least 3 points of dimension 3");
  const Eigen::RowVector3d centroid = points.colwise().mean();
  const MatX centered = points.rowwise() - centroid;
  const Mat3 moment = (centered.transpose() * centered) / static_cast<double>(points.rows());
  Eigen::SelfAdjointEigenSolver<Mat3> es(moment);
  const Vec3 evals = es.eigenvalues();
  // Collinear (or coincident) points leave two near-zero directions.
  const double scale = std::max(evals.maxCoeff(), 1e-300);
  if (evals[1] / scale < 1e-12)
    throw std::invalid_argument("fit_plane: points are collinear");
  Plane plane;
  plane.n = es.eigenvectors().col(0).normalized();
  plane.d = -plane.n.dot(centroid.transpose());
  if (rms_residual) *rms_residual = std::sqrt(std::max(0.0, evals[0]));
  return plane;
}

Vec3 gravity_dir(const Plane& plane, const Vec3& view_dir) {
  if (std::abs(view_dir.norm() - 1.0) > 1e-8)
    throw std::invalid_argument("gravity_dir: view direction must be unit norm");
  plane.validate();
  const double dp = plane.n.dot(view_dir);
  if (std::abs(dp) < 1e-12)
    throw std::invalid_argument("gravity_dir: view is parallel to the plane, sign ambiguous");
  return (dp > 0 ? -1.0 : 1.0) * plane.n;
}

double gripper_state(const KinematicChain& chain, const VecX& q) {
  if (chain.gripper_joint < 0 || chain.gripper_joint >= static_cast<int>(chain.joints.size()))
    throw std::invalid_argument("gripper_state: invalid gripper joint index");
  if (q.size() != static_cast<Eigen::Index>(chain.joints.size()))
    throw std::invalid_argument("gripper_state: joint vector length mismatch");
  if (chain.gripper_open == chain.gripper_closed)
    throw std::invalid_argument("gripper_state: open and closed positions coincide");
  const double c =
      (q[chain.gripper_joint] - chain.gripper_closed) / (chain.gripper_open - chain.gripper_closed);
  return std::clamp(c, 0.0, 1.0);
}

MatX control_points(const Mat4& ee_pose_sim, double c, const FingerGeometry& geom) {
  constexpr int kPerFinger = RobotAction::kControlPoints / 2;
  const Mat3 r = rotation_of(ee_pose_sim);
  const Vec3 p = translation_of(ee_pose_sim);
  const double half = 0.5 * c * geom.max_separation;
  MatX out(RobotAction::kControlPoints, 3);
  for (int i = 0; i < kPerFinger; ++i) {
    const double along = geom.length * static_cast<double>(i) / (kPerFinger - 1);
    const Vec3 left(along, -half, 0);
    const Vec3 right(along, half, 0);
    out.row(i) = (r * left + p).transpose();
    out.row(kPerFinger + i) = (r * right + p).transpose();
  }
  return out;
}

}  // namespace soma::r2s
