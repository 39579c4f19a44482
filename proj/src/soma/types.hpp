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
#include <string>
#include <utility>
#include <vector>

#include "soma/geometry.hpp"

namespace soma {

using MatX = Eigen::MatrixXd;
using VecX = Eigen::VectorXd;
using MaskImage = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

/// One anisotropic Gaussian primitive. Positions in meters, covariance in m².
/// Mass and attribute units are dimensionless simulation units.
struct GaussianSplat {
  Vec3 position = Vec3::Zero();
  Mat3 covariance = Mat3::Identity();
  double mass = 1.0;
  VecX attributes;
  Vec3 color = Vec3::Zero();
  double opacity = 1.0;

  void validate() const;
};

/// The simulated object state at one timestamp plus per-splat velocities.
struct SplatSetState {
  std::vector<GaussianSplat> splats;
  std::vector<Vec3> velocities;
  int timestamp = 0;

  int size() const { return static_cast<int>(splats.size()); }
  void validate() const;
};

/// Fixed multi-level clustering. Level 0 is the finest (one node per splat);
/// parents point one level up. Frozen after construction.
struct Hierarchy {
  struct Level {
    int count = 0;
    std::vector<int> parent;  // empty at the top level
    MatX rest_positions;      // count x 3
    VecX masses;
    MatX attributes;          // count x attr_dim, aggregated
  };
  std::vector<Level> levels;

  int num_levels() const { return static_cast<int>(levels.size()); }
  void validate() const;
};

/// Robot state for one frame: joint configuration, end-effector pose mapped
/// into the simulation frame, gripper opening, and the 30 control points.
struct RobotAction {
  static constexpr int kControlPoints = 30;

  VecX q;
  Mat4 ee_pose_sim = Mat4::Identity();
  double gripper = 1.0;       // 0 = closed, 1 = open
  MatX control_points;        // 30 x 3, simulation meters

  void validate() const;
};

struct CameraModel {
  double fx = 0, fy = 0, cx = 0, cy = 0;
  int width = 0, height = 0;
  Mat4 world_from_camera = Mat4::Identity();

  Mat4 camera_from_world() const { return inverse_rigid(world_from_camera); }
  Vec3 optical_axis() const { return rotation_of(world_from_camera).col(2); }
  void validate() const;
};

/// RGB image as three H x W channel planes in [0,1].
struct Image {
  std::array<MatX, 3> ch;

  int rows() const { return static_cast<int>(ch[0].rows()); }
  int cols() const { return static_cast<int>(ch[0].cols()); }
  static Image zero(int h, int w);
};

/// Per-frame observations for every camera plus the robot action.
/// Depth value 0 marks invalid pixels. Object and occluder masks may overlap;
/// the occluder wins during supervision.
struct SceneFrame {
  struct View {
    Image rgb;
    MatX depth;          // meters, 0 = invalid
    MaskImage obj_mask;  // 0/1
    MaskImage occ_mask;  // 0/1
    Mat4 camera_pose = Mat4::Identity();  // world-from-camera at this frame
  };
  std::vector<View> views;
  RobotAction action;
  int index = 0;

  void validate() const;
};

/// One recorded manipulation sequence: cameras, frames, and everything the
/// downstream pipeline needs that perception would otherwise provide.
struct SceneSequence {
  std::vector<CameraModel> cameras;
  int wrist_camera = -1;  // index into cameras, -1 if none
  double dt = 1.0 / 30.0;
  std::vector<SceneFrame> frames;

  /// Per-frame wrist-camera pose in the robot base frame (from FK), for
  /// calibration. Empty when there is no wrist camera.
  std::vector<Mat4> wrist_pose_rob;

  /// (length in reconstruction frame, length in metric frame) pairs.
  std::vector<std::pair<double, double>> reference_pairs;

  SplatSetState initial_splats;

  std::string name;

  void validate() const;
};

/// x -> sR x + t.
struct SimilarityTransform {
  double s = 1.0;
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();

  Mat4 matrix() const;  // [sR t; 0 1]
  void validate() const;
};

/// {p : n·p + d = 0} with unit normal.
struct Plane {
  Vec3 n = Vec3::UnitZ();
  double d = 0.0;

  double signed_distance(const Vec3& p) const { return n.dot(p) + d; }
  void validate() const;
};

// --- packed views used by the numeric pipeline ---

struct PackedSplats {
  MatX positions;    // n x 3
  MatX covariances;  // n x 9, row-major 3x3 per row
  MatX velocities;   // n x 3
  MatX colors;       // n x 3
  VecX opacities;
  VecX masses;
  MatX attributes;   // n x attr_dim

  int size() const { return static_cast<int>(positions.rows()); }
};

PackedSplats pack(const SplatSetState& state);
SplatSetState unpack(const PackedSplats& packed, int timestamp);

Mat3 unpack_cov(const MatX& covs, int row);
void pack_cov(MatX& covs, int row, const Mat3& c);

}  // namespace soma
