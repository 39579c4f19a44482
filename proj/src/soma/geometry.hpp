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

#include <Eigen/Dense>

namespace soma {

using Mat4 = Eigen::Matrix4d;
using Mat3 = Eigen::Matrix3d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;

/// Rigid transform [R t; 0 1].
Mat4 make_rigid(const Mat3& rotation, const Vec3& translation);

Mat3 rotation_of(const Mat4& transform);
Vec3 translation_of(const Mat4& transform);

/// True if the rotation block is orthonormal with det +1 within `tol` and the
/// bottom row is exactly [0 0 0 1].
bool is_rigid(const Mat4& transform, double tol = 1e-8);

/// Inverse of a rigid transform, computed as [Rᵀ, -Rᵀt].
Mat4 inverse_rigid(const Mat4& transform);

Mat3 skew(const Vec3& w);

/// Rotation matrix exp([w]×) via Rodrigues, series-expanded near zero.
Mat3 axis_angle_rotation(const Vec3& w);

/// d(axis_angle_rotation(w))/dw_k.  Exact for all w (limit form near zero).
Mat3 axis_angle_rotation_deriv(const Vec3& w, int k);

Eigen::Quaterniond quat_of(const Mat3& rotation);
Mat3 rotation_of_quat(double w, double x, double y, double z);

/// Camera-to-world pose looking from `eye` toward `target`, OpenCV axes
/// (+z forward, +x right, +y down).
Mat4 look_at(const Vec3& eye, const Vec3& target, const Vec3& up = Vec3(0, 0, 1));

/// Geodesic distance between two rotations, radians.
double rotation_geodesic(const Mat3& a, const Mat3& b);

/// Nearest rotation matrix (polar decomposition via SVD).
Mat3 orthonormalize(const Mat3& m);

inline Mat3 symmetrize(const Mat3& m) { return 0.5 * (m + m.transpose()); }

}  // namespace soma
