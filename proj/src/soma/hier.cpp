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

#include "soma/hier.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "soma/rng.hpp"

namespace soma::hier {

namespace {

struct KmeansResult {
  std::vector<int> assign;
  double inertia = std::numeric_limits<double>::infinity();
  bool ok = false;  // false when a cluster came out empty
};

KmeansResult kmeans_once(const MatX& points, int k, int iters, Rng& rng) {
  const int n = static_cast<int>(points.rows());
  KmeansResult res;
  res.assign.assign(n, 0);
  MatX centers(k, points.cols());

  // k-means++ seeding.
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  int first = static_cast<int>(rng.uniform_int(0, n - 1));
  centers.row(0) = points.row(first);
  for (int c = 1; c < k; ++c) {
    double total = 0;
    for (int i = 0; i < n; ++i) {
      const double d = (points.row(i) - centers.row(c - 1)).squaredNorm();
      d2[i] = std::min(d2[i], d);
      total += d2[i];
    }
    int pick = 0;
    if (total <= 0) {
      pick = static_cast<int>(rng.uniform_int(0, n - 1));
    } else {
      double r = rng.uniform() * total;
      for (int i = 0; i < n; ++i) {
        r -= d2[i];
        if (r <= 0) {
          pick = i;
          break;
        }
      }
    }
    centers.row(c) = points.row(pick);
  }

  std::vector<int> counts(k, 0);
  for (int it = 0; it < iters; ++it) {
    // Assign.
    for (int i = 0; i < n; ++i) {
      int best = 0;
      double bd = (points.row(i) - centers.row(0)).squaredNorm();
      for (int c = 1; c < k; ++c) {
        const double d = (points.row(i) - centers.row(c)).squaredNorm();
        if (d < bd) {
          bd = d;
          best = c;
        }
      }
      res.assign[i] = best;
    }
    // Update.
    centers.setZero();
    std::fill(counts.begin(), counts.end(), 0);
    for (int i = 0; i < n; ++i) {
      centers.row(res.assign[i]) += points.row(i);
      counts[res.assign[i]]++;
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] == 0) return res;  // empty cluster, caller retries
      centers.row(c) /= counts[c];
    }
  }

  res.inertia = 0;
  for (int i = 0; i < n; ++i)
    res.inertia += (points.row(i) - centers.row(res.assign[i])).squaredNorm();
  res.ok = true;
  return res;
}

KmeansResult kmeans(const MatX& points, int k, const BuildConfig& cfg, Rng& rng) {
  KmeansResult best;
  for (int attempt = 0; attempt < cfg.retry_limit; ++attempt) {
    bool any_ok = false;
    for (int r = 0; r < cfg.kmeans_restarts; ++r) {
      KmeansResult res = kmeans_once(points, k, cfg.kmeans_iters, rng);
      if (res.ok) {
        any_ok = true;
        if (res.inertia < best.inertia) best = std::move(res);
      }
    }
    if (any_ok) return best;
  }
  throw std::runtime_error("build_hierarchy: clustering produced empty clusters repeatedly");
}

}  // namespace

std::vector<int> default_level_sizes(int n) {
  if (n < 2) throw std::invalid_argument("default_level_sizes: need at least 2 splats");
  if (n < 8) return {n, std::max(1, n / 2)};
  return {n, n / 2, 2};
}

Hierarchy build_hierarchy(const PackedSplats& splats, const std::vector<int>& level_sizes,
                          std::uint64_t seed, const BuildConfig& cfg) {
  const int n = splats.size();
  if (level_sizes.size() < 2) throw std::invalid_argument("build_hierarchy: need >= 2 levels");
  if (level_sizes.front() != n)
    throw std::invalid_argument("build_hierarchy: first level size must equal splat count");
  if (level_sizes.back() < 1) throw std::invalid_argument("build_hierarchy: last level size must be >= 1");
  for (size_t i = 1; i < level_sizes.size(); ++i)
    if (level_sizes[i] >= level_sizes[i - 1])
      throw std::invalid_argument("build_hierarchy: level sizes must be strictly decreasing");

  Rng rng(seed);
  Hierarchy h;
  h.levels.resize(level_sizes.size());
  h.levels[0].count = n;
  h.levels[0].rest_positions = splats.positions;
  h.levels[0].masses = splats.masses;
  h.levels[0].attributes = splats.attributes;

  for (size_t l = 0; l + 1 < level_sizes.size(); ++l) {
    Hierarchy::Level& cur = h.levels[l];
    Hierarchy::Level& next = h.levels[l + 1];
    const int k = level_sizes[l + 1];
    const KmeansResult km = kmeans(cur.rest_positions, k, cfg, rng);
    cur.parent = km.assign;
    next.count = k;
    next.masses = VecX::Zero(k);
    next.rest_positions = MatX::Zero(k, 3);
    next.attributes = MatX::Zero(k, cur.attributes.cols());
    VecX counts = VecX::Zero(k);
    for (int i = 0; i < cur.count; ++i) {
      const int p = cur.parent[i];
      next.masses[p] += cur.masses[i];
      next.rest_positions.row(p) += cur.masses[i] * cur.rest_positions.row(i);
      next.attributes.row(p) += cur.attributes.row(i);
      counts[p] += 1.0;
    }
    for (int c = 0; c < k; ++c) {
      next.rest_positions.row(c) /= next.masses[c];
      next.attributes.row(c) /= counts[c];
    }
  }
  h.validate();
  return h;
}

ad::IndexList parent_index(const Hierarchy& h, int level) {
  if (level < 0 || level + 1 >= h.num_levels())
    throw std::invalid_argument("parent_index: level out of range");
  return std::make_shared<const std::vector<int>>(h.levels[level].parent);
}

namespace {

enum class AggKind { kMassWeighted, kMean, kSum };

MatX aggregate_once(const Hierarchy& h, int level, const MatX& vals, AggKind kind) {
  const auto& cur = h.levels[level];
  const auto& next = h.levels[level + 1];
  if (vals.rows() != cur.count)
    throw std::invalid_argument("aggregate: value count does not match level");
  MatX out = MatX::Zero(next.count, vals.cols());
  VecX counts = VecX::Zero(next.count);
  for (int i = 0; i < cur.count; ++i) {
    const int p = cur.parent[i];
    const double w = kind == AggKind::kMassWeighted ? cur.masses[i] : 1.0;
    out.row(p) += w * vals.row(i);
    counts[p] += 1.0;
  }
  if (kind == AggKind::kMassWeighted)
    for (int c = 0; c < next.count; ++c) out.row(c) /= next.masses[c];
  if (kind == AggKind::kMean)
    for (int c = 0; c < next.count; ++c) out.row(c) /= counts[c];
  return out;
}

std::vector<MatX> aggregate_all(const Hierarchy& h, const MatX& level0, AggKind kind) {
  std::vector<MatX> out;
  out.push_back(level0);
  for (int l = 0; l + 1 < h.num_levels(); ++l)
    out.push_back(aggregate_once(h, l, out.back(), kind));
  return out;
}

ad::Var aggregate_tape(ad::Tape& t, const Hierarchy& h, int level, ad::Var child_vals,
                       AggKind kind) {
  const auto& cur = h.levels[level];
  const auto& next = h.levels[level + 1];
  ad::Var weighted = child_vals;
  if (kind == AggKind::kMassWeighted) weighted = t.rowwise_scale(child_vals, cur.masses);
  ad::Var summed = t.scatter_sum_rows(weighted, parent_index(h, level), next.count);
  switch (kind) {
    case AggKind::kMassWeighted:
      return t.rowwise_scale(summed, next.masses.cwiseInverse());
    case AggKind::kMean: {
      VecX counts = VecX::Zero(next.count);
      for (int p : cur.parent) counts[p] += 1.0;
      return t.rowwise_scale(summed, counts.cwiseInverse());
    }
    case AggKind::kSum:
      return summed;
  }
  throw std::logic_error("unreachable");
}

}  // namespace

std::vector<MatX> aggregate_mass_weighted(const Hierarchy& h, const MatX& level0) {
  return aggregate_all(h, level0, AggKind::kMassWeighted);
}
std::vector<MatX> aggregate_mean(const Hierarchy& h, const MatX& level0) {
  return aggregate_all(h, level0, AggKind::kMean);
}
std::vector<MatX> aggregate_sum(const Hierarchy& h, const MatX& level0) {
  return aggregate_all(h, level0, AggKind::kSum);
}

ad::Var aggregate_mass_weighted(ad::Tape& t, const Hierarchy& h, int level, ad::Var child_vals) {
  return aggregate_tape(t, h, level, child_vals, AggKind::kMassWeighted);
}
ad::Var aggregate_mean(ad::Tape& t, const Hierarchy& h, int level, ad::Var child_vals) {
  return aggregate_tape(t, h, level, child_vals, AggKind::kMean);
}
ad::Var aggregate_sum(ad::Tape& t, const Hierarchy& h, int level, ad::Var child_vals) {
  return aggregate_tape(t, h, level, child_vals, AggKind::kSum);
}

PropagateResult propagate(ad::Tape& t, const Hierarchy& h, int parent_level,
                          ad::Var parent_positions, ad::Var parent_F,
                          ad::Var upstream_product, ad::Var child_ref_positions,
                          ad::Var parent_ref_centers, ad::Var child_covariances) {
  if (parent_level < 1 || parent_level >= h.num_levels())
    throw std::invalid_argument("propagate: parent level out of range");
  const int child_level = parent_level - 1;
  ad::IndexList pmap = parent_index(h, child_level);

  if (!t.val(parent_F).allFinite())
    throw std::runtime_error("propagate: non-finite deformation input");

  // Per-parent running product, then gathered per child.
  ad::Var product = t.bmm33(upstream_product, parent_F);
  ad::Var child_product = t.gather_rows(product, pmap);

  ad::Var shift = t.sub(parent_positions, parent_ref_centers);
  ad::Var off = t.sub(child_ref_positions, t.gather_rows(parent_ref_centers, pmap));
  // ref + shift + (P off - off) == x̂_parent + P off, regrouped so that
  // P = I and zero shift return the references bit-exactly.
  ad::Var deformed = t.sub(t.bmv3(child_product, off), off);
  ad::Var positions = t.add(t.add(child_ref_positions, t.gather_rows(shift, pmap)), deformed);

  PropagateResult out;
  out.positions = positions;
  out.running_product = child_product;
  if (child_covariances.valid())
    out.covariances = t.cov_transform(child_product, child_covariances);
  return out;
}

ad::Var momentum_residual(ad::Tape& t, const Hierarchy& h,
                          const std::vector<ad::Var>& level_positions, bool normalized) {
  if (static_cast<int>(level_positions.size()) != h.num_levels())
    throw std::invalid_argument("momentum_residual: need positions at every level");
  ad::Var total = t.scalar(0.0);
  for (int l = 1; l < h.num_levels(); ++l) {
    const auto& child = h.levels[l - 1];
    ad::Var child_weighted = t.rowwise_scale(level_positions[l - 1], child.masses);
    ad::Var summed = t.scatter_sum_rows(child_weighted, parent_index(h, l - 1), h.levels[l].count);
    ad::Var parent_weighted = t.rowwise_scale(level_positions[l], h.levels[l].masses);
    ad::Var diff = t.sub(parent_weighted, summed);
    if (normalized) diff = t.rowwise_scale(diff, h.levels[l].masses.cwiseInverse());
    total = t.add(total, t.sumsq(diff));
  }
  return total;
}

double momentum_residual_value(const Hierarchy& h, const std::vector<MatX>& level_positions,
                               bool normalized) {
  ad::Tape t(false);
  std::vector<ad::Var> vars;
  for (const auto& m : level_positions) vars.push_back(t.constant(m));
  return t.scalar_val(momentum_residual(t, h, vars, normalized));
}

}  // namespace soma::hier
