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

#include "soma/forces.hpp"

#include <stdexcept>

namespace soma::forces {

VecX signed_distance(const MatX& positions, const Plane& plane) {
  plane.validate();
  return (positions * plane.n).array() + plane.d;
}

MatX env_force(const MatX& positions, const Plane& plane, const Vec3& gravity,
               const ForceParams& p) {
  if (p.tau <= 0) throw std::invalid_argument("env_force: tau must be > 0");
  const VecX d = signed_distance(positions, plane);
  const int n = static_cast<int>(positions.rows());
  MatX f = MatX::Zero(n, 3);
  f.rowwise() += (p.g_mag * gravity).transpose();
  for (int i = 0; i < n; ++i) {
    if (d[i] < p.tau) {
      const double s = p.kappa * std::max(0.0, (p.tau - d[i]) / p.tau);
      f.row(i) += s * plane.n.transpose();
    }
  }
  return f;
}

ad::Var env_force(ad::Tape& t, ad::Var positions, const Plane& plane, const Vec3& gravity,
                  const ForceParams& p) {
  if (p.tau <= 0) throw std::invalid_argument("env_force: tau must be > 0");
  plane.validate();
  const int n = static_cast<int>(t.val(positions).rows());
  ad::Var d = t.add_const(t.matmul(positions, t.constant(plane.n)), plane.d);
  // kappa * relu((tau - d)/tau)
  ad::Var ramp = t.scale(t.relu(t.scale(t.add_const(t.scale(d, -1.0), p.tau), 1.0 / p.tau)), p.kappa);
  ad::Var support = t.matmul(ramp, t.constant(plane.n.transpose()));
  MatX grav(n, 3);
  grav.rowwise() = (p.g_mag * gravity).transpose();
  return t.add(t.constant(std::move(grav)), support);
}

void InteractionGraph::validate() const {
  const size_t e = splat.size();
  if (control.size() != e || static_cast<size_t>(rel_disp.rows()) != e ||
      static_cast<size_t>(control_vel.rows()) != e || static_cast<size_t>(dist.size()) != e)
    throw std::invalid_argument("interaction graph arrays disagree in length");
  for (size_t i = 0; i < e; ++i) {
    if (splat[i] < 0 || splat[i] >= num_splats)
      throw std::invalid_argument("interaction graph splat index out of range");
    if (control[i] < 0 || control[i] >= static_cast<int>(control_points.rows()))
      throw std::invalid_argument("interaction graph control index out of range");
    if (dist[i] > rho + 1e-12)
      throw std::invalid_argument("interaction graph edge exceeds the interaction radius");
  }
}

InteractionGraph build_interaction_graph(const MatX& splat_positions, const MatX& control_points,
                                         const MatX& control_velocities, double rho) {
  if (rho <= 0) throw std::invalid_argument("build_interaction_graph: rho must be > 0");
  if (control_points.rows() != control_velocities.rows())
    throw std::invalid_argument("build_interaction_graph: control velocity count mismatch");
  InteractionGraph g;
  g.num_splats = static_cast<int>(splat_positions.rows());
  g.rho = rho;
  g.control_points = control_points;
  std::vector<Eigen::RowVector3d> rel;
  std::vector<Eigen::RowVector3d> cv;
  std::vector<double> dist;
  const double rho2 = rho * rho;
  for (int i = 0; i < g.num_splats; ++i) {
    for (int j = 0; j < control_points.rows(); ++j) {
      const Eigen::RowVector3d r = control_points.row(j) - splat_positions.row(i);
      const double d2 = r.squaredNorm();
      if (d2 <= rho2) {
        g.splat.push_back(i);
        g.control.push_back(j);
        rel.push_back(r);
        cv.push_back(control_velocities.row(j));
        dist.push_back(std::sqrt(d2));
      }
    }
  }
  const int e = static_cast<int>(rel.size());
  g.rel_disp.resize(e, 3);
  g.control_vel.resize(e, 3);
  g.dist.resize(e);
  for (int i = 0; i < e; ++i) {
    g.rel_disp.row(i) = rel[i];
    g.control_vel.row(i) = cv[i];
    g.dist[i] = dist[i];
  }
  return g;
}

ad::Var robot_force(ad::Tape& t, const PhiVars& phi, const InteractionGraph& graph,
                    ad::Var splat_positions, ad::Var vel_t1, ad::Var vel_t2, double gripper) {
  const int n = graph.num_splats;
  if (t.val(splat_positions).rows() != n)
    throw std::invalid_argument("robot_force: position count disagrees with graph");
  if (graph.num_edges() == 0) return t.constant(MatX::Zero(n, 3));

  auto sidx = std::make_shared<const std::vector<int>>(graph.splat);
  const int e = graph.num_edges();

  // Relative displacement and distance recomputed from the position variable
  // so force gradients reach the splat positions.
  MatX ctrl_e(e, 3);
  for (int i = 0; i < e; ++i) ctrl_e.row(i) = graph.control_points.row(graph.control[i]);
  ad::Var pos_e = t.gather_rows(splat_positions, sidx);
  ad::Var rel = t.sub(t.constant(std::move(ctrl_e)), pos_e);
  ad::Var dist = t.rowwise_norm(rel);

  MatX grip(e, 1);
  grip.setConstant(gripper);
  ad::Var x = t.hcat({rel, dist, t.constant(graph.control_vel), t.constant(std::move(grip)),
                      t.gather_rows(vel_t1, sidx), t.gather_rows(vel_t2, sidx)});
  ad::Var h1 = t.silu(t.affine(x, phi.w1, phi.b1));
  ad::Var h2 = t.silu(t.affine(h1, phi.w2, phi.b2));
  ad::Var msg = t.affine(h2, phi.w3, phi.b3);
  return t.scatter_sum_rows(msg, sidx, n);
}

MatX total_force(const MatX& env, const MatX& robot) {
  if (env.rows() != robot.rows() || env.cols() != robot.cols())
    throw std::invalid_argument("total_force: shape mismatch");
  return env + robot;
}

}  // namespace soma::forces
