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

#include <utility>
#include <vector>

#include <json.hpp>

#include "soma/types.hpp"

namespace soma::r2s {

/// Serial chain of revolute/prismatic joints with a fixed tool transform.
struct KinematicChain {
  struct Joint {
    enum class Type { kRevolute, kPrismatic };
    Type type = Type::kRevolute;
    Vec3 axis = Vec3::UnitZ();       // unit
    Mat4 parent_to_joint = Mat4::Identity();
  };
  std::vector<Joint> joints;
  Mat4 ee_fixed = Mat4::Identity();
  int gripper_joint = -1;
  double gripper_open = 1.0;
  double gripper_closed = 0.0;

  void validate() const;
};

KinematicChain chain_from_config(const nlohmann::json& r2s_cfg);

/// (length in reconstruction frame, length in metric frame); both > 0.
struct ReferencePair {
  double rec = 1.0;
  double metric = 1.0;
};

/// Composition of per-joint transforms in order, then the tool transform.
Mat4 fk(const KinematicChain& chain, const VecX& q);

/// Least-squares ratio fitting metric = s * rec over all pairs.
double estimate_scale(const std::vector<ReferencePair>& pairs);

/// Recovers the robot-to-simulation similarity from one camera pose expressed
/// in both frames: T = T_cam_in_rec * inv(T_cam_in_rob with translation
/// pre-scaled by s).
SimilarityTransform estimate_rigid(const Mat4& cam_in_rob, const Mat4& cam_in_rec, double s);

/// [sR t; 0 1] * pose. The rotation block of the result is sR * R_pose.
Mat4 map_pose(const Mat4& pose, const SimilarityTransform& x);

/// Total-least-squares plane through >= 3 non-collinear points; also reports
/// the RMS orthogonal residual.
Plane fit_plane(const MatX& points, double* rms_residual = nullptr);

/// g = -sign(n . v_c) * n. Throws when the view direction is parallel to the
/// plane (sign ambiguity).
Vec3 gravity_dir(const Plane& plane, const Vec3& view_dir);

/// clamp((q_g - q_closed) / (q_open - q_closed), 0, 1).
double gripper_state(const KinematicChain& chain, const VecX& q);

struct FingerGeometry {
  double length = 0.06;          // finger segment length, along tool +x
  double max_separation = 0.08;  // lateral separation at c = 1, along tool y
};

/// 15 points per finger along two segments whose lateral separation is
/// c * max_separation, expressed in the simulation frame.
MatX control_points(const Mat4& ee_pose_sim, double c, const FingerGeometry& geom);

}  // namespace soma::r2s
