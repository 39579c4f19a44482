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

#include <cstdint>
#include <vector>

#include "soma/ad.hpp"
#include "soma/types.hpp"

namespace soma::hier {

struct BuildConfig {
  int kmeans_iters = 25;
  int kmeans_restarts = 5;
  int retry_limit = 5;
};

/// The [n, n/2, 2] fine-to-coarse recipe (three levels; tiny inputs degrade
/// gracefully to two levels).
std::vector<int> default_level_sizes(int n);

/// Seeded k-means (k-means++ init, fixed Lloyd iterations, best of
/// `kmeans_restarts` by inertia) at every level; aggregated masses, rest
/// centers, and attributes from the children. The result is frozen.
Hierarchy build_hierarchy(const PackedSplats& splats, const std::vector<int>& level_sizes,
                          std::uint64_t seed, const BuildConfig& cfg = {});

/// Shared parent-index list for tape ops (level -> level+1).
ad::IndexList parent_index(const Hierarchy& h, int level);

// --- plain (non-tape) aggregation, level 0 values -> all levels ---

/// Mass-weighted means per level (positions, velocities).
std::vector<MatX> aggregate_mass_weighted(const Hierarchy& h, const MatX& level0);
/// Arithmetic means per level (attributes).
std::vector<MatX> aggregate_mean(const Hierarchy& h, const MatX& level0);
/// Plain sums per level (forces).
std::vector<MatX> aggregate_sum(const Hierarchy& h, const MatX& level0);

// --- tape ops ---

ad::Var aggregate_mass_weighted(ad::Tape& t, const Hierarchy& h, int level, ad::Var child_vals);
ad::Var aggregate_mean(ad::Tape& t, const Hierarchy& h, int level, ad::Var child_vals);
ad::Var aggregate_sum(ad::Tape& t, const Hierarchy& h, int level, ad::Var child_vals);

/// One top-down propagation step from `parent_level` to `parent_level - 1`.
///
/// positions:  x̂_k = x̂_parent + P_k (ref_k - ref_center_parent) with
///             P_k = upstream_product_parent * F_parent, computed in the
///             regrouped form ref_k + shift_parent + (P_k off - off) so that
///             identity F and zero shift reproduce the references bit-exactly.
/// covariances (level 0 only): sym(P_k Σ_k P_kᵀ).
struct PropagateResult {
  ad::Var positions;        // child level
  ad::Var running_product;  // per child, for the next level down
  ad::Var covariances;      // invalid unless child covariances were supplied
};

PropagateResult propagate(ad::Tape& t, const Hierarchy& h, int parent_level,
                          ad::Var parent_positions, ad::Var parent_F,
                          ad::Var upstream_product, ad::Var child_ref_positions,
                          ad::Var parent_ref_centers, ad::Var child_covariances = {});

/// Eq.-13-style residual: sum over levels l >= 1 and clusters of
/// || m_cl x̂_cl - Σ_{i in children} m_i x̂_i ||². `normalized` divides each
/// cluster term by m_cl².
ad::Var momentum_residual(ad::Tape& t, const Hierarchy& h,
                          const std::vector<ad::Var>& level_positions,
                          bool normalized = false);

/// Non-tape convenience wrapper.
double momentum_residual_value(const Hierarchy& h, const std::vector<MatX>& level_positions,
                               bool normalized = false);

}  // namespace soma::hier
