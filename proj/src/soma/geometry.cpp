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

#include "soma/geometry.hpp"

#include <cmath>
#include <stdexcept>

namespace soma {

Mat4 make_rigid(const Mat3& rotation, const Vec3& translation) {
  Mat4 out = Mat4::Identity();
  out.topLeftCorner<3, 3>() = rotation;
  out.topRightCorner<3, 1>() = translation;
  return out;
}

Mat3 rotation_of(const Mat4& transform) { return transform.topLeftCorner<3, 3>(); }

Vec3 translation_of(const Mat4& transform) { return transform.topRightCorner<3, 1>(); }

bool is_rigid(const Mat4& transform, double tol) {
  if (transform.row(3) != Eigen::RowVector4d(0, 0, 0, 1)) return false;
  const Mat3 r = rotation_of(transform);
  if ((r.transpose() * r - Mat3::Identity()).norm() > tol) return false;
  return std::abs(r.determinant() - 1.0) <= tol;
}

Mat4 inverse_rigid(const Mat4& transform) {
  const Mat3 rt = rotation_of(transform).transpose();
  return make_rigid(rt, -rt * translation_of(transform));
}

Mat3 skew(const Vec3& w) {
  Mat3 s;
  s << 0, -w.z(), w.y(), w.z(), 0, -w.x(), -w.y(), w.x(), 0;
  return s;
}

Mat3 axis_angle_rotation(const Vec3& w) {
  const double theta2 = w.squaredNorm();
  const Mat3 k = skew(w);
  if (theta2 < 1e-16) {
    // exp([w]x) = I + [w]x + [w]x^2/2 up to O(theta^3)
    return Mat3::Identity() + k + 0.5 * k * k;
  }
  const double theta = std::sqrt(theta2);
  return Mat3::Identity() + (std::sin(theta) / theta) * k +
         ((1.0 - std::cos(theta)) / theta2) * k * k;
}

Mat3 axis_angle_rotation_deriv(const Vec3& w, int k) {
  // Gallego & Yezzi closed form; at w = 0 the limit is skew(e_k).
  const double theta2 = w.squaredNorm();
  Vec3 e = Vec3::Zero();
  e(k) = 1.0;
  const Mat3 r = axis_angle_rotation(w);
  if (theta2 < 1e-16) return skew(e) * r;
  const Vec3 v = w(k) * w + w.cross((Mat3::Identity() - r) * e);
  return (skew(v) / theta2) * r;
}

Eigen::Quaterniond quat_of(const Mat3& rotation) {
  Eigen::Quaterniond q(rotation);
  q.normalize();
  if (q.w() < 0) q.coeffs() = -q.coeffs();
  return q;
}

Mat3 rotation_of_quat(double w, double x, double y, double z) {
  Eigen::Quaterniond q(w, x, y, z);
  const double n = q.norm();
  if (n < 1e-12) throw std::invalid_argument("quaternion has near-zero norm");
  q.coeffs() /= n;
  return q.toRotationMatrix();
}

Mat4 look_at(const Vec3& eye, const Vec3& target, const Vec3& up) {
  const Vec3 forward = (target - eye).normalized();
  Vec3 right = forward.cross(up);
  if (right.norm() < 1e-9) right = forward.cross(Vec3(0, 1, 0));
  right.normalize();
  const Vec3 down = forward.cross(right).normalized();
  Mat3 r;
  r.col(0) = right;
  r.col(1) = down;
  r.col(2) = forward;
  return make_rigid(r, eye);
}

double rotation_geodesic(const Mat3& a, const Mat3& b) {
  const double c = ((a.transpose() * b).trace() - 1.0) * 0.5;
  return std::acos(std::clamp(c, -1.0, 1.0));
}

Mat3 orthonormalize(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 r = svd.matrixU() * svd.matrixV().transpose();
  if (r.determinant() < 0) {
    Mat3 u = svd.matrixU();
    u.col(2) *= -1.0;
    r = u * svd.matrixV().transpose();
  }
  return r;
}

}  // namespace soma
