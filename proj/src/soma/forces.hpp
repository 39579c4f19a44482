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

#include <vector>

#include "soma/ad.hpp"
#include "soma/types.hpp"

namespace soma::forces {

/// Resolved environment/interaction force parameters (absolute values, not
/// the config's radius factors).
struct ForceParams {
  double tau = 0.02;    // support threshold, meters
  double kappa = 1.0;   // support gain
  double g_mag = 1.0;   // gravity feature magnitude
  double rho = 0.03;    // interaction radius, meters
};

/// d_i = n·x_i + d.
VecX signed_distance(const MatX& positions, const Plane& plane);

/// f_env = g_mag·g + κ·max(0, (τ−d)/τ)·n for d < τ, else g_mag·g.
/// Continuous at d = τ.
MatX env_force(const MatX& positions, const Plane& plane, const Vec3& gravity,
               const ForceParams& p);

/// Tape version, differentiable in positions.
ad::Var env_force(ad::Tape& t, ad::Var positions, const Plane& plane, const Vec3& gravity,
                  const ForceParams& p);

/// Bipartite splat/control-point contact edges within radius rho, ordered
/// splat-major then control index.
struct InteractionGraph {
  std::vector<int> splat;           // per edge
  std::vector<int> control;         // per edge
  MatX rel_disp;                    // E x 3, control point - splat position
  MatX control_vel;                 // E x 3
  VecX dist;                        // E
  MatX control_points;              // 30 x 3 snapshot
  int num_splats = 0;
  double rho = 0;

  int num_edges() const { return static_cast<int>(splat.size()); }
  void validate() const;
};

InteractionGraph build_interaction_graph(const MatX& splat_positions, const MatX& control_points,
                                         const MatX& control_velocities, double rho);

/// Weights of the shared per-edge message MLP (bound to a tape).
struct PhiVars {
  ad::Var w1, b1, w2, b2, w3, b3;
};

/// Per-edge feature width consumed by the robot-force MLP:
/// [rel_disp(3), dist(1), control_vel(3), gripper(1), splat vel t-1 (3),
///  splat vel t-2 (3)].
constexpr int kPhiInputDim = 14;

/// Messages summed per splat; splats with no edges get exactly zero force.
/// Differentiable in the MLP weights, splat positions, and velocity history.
ad::Var robot_force(ad::Tape& t, const PhiVars& phi, const InteractionGraph& graph,
                    ad::Var splat_positions, ad::Var vel_t1, ad::Var vel_t2, double gripper);

/// Elementwise sum of the two force fields.
MatX total_force(const MatX& env, const MatX& robot);

}  // namespace soma::forces
