#pragma once

#include <algorithm>
#include <limits>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "pscn/geometry.hpp"
#include "pscn/nn.hpp"

namespace pscn {

/// Order-independent total order on the points of one cloud: Morton code of the
/// normalized position, then raw coordinates lexicographically, then index.
/// Only exact duplicates fall through to the index.
class CanonicalOrder {
 public:
  CanonicalOrder(const PointCloud& cloud, int depth)
      : positions_(cloud.positions), codes_(morton_codes(normalize_unit_cube(cloud).positions, depth)) {}

  bool less(std::size_t a, std::size_t b) const {
    return std::tie(codes_[a].value, positions_[a], a) < std::tie(codes_[b].value, positions_[b], b);
  }
  const std::vector<MortonCode>& codes() const { return codes_; }

 private:
  std::span<const Vec3> positions_;
  std::vector<MortonCode> codes_;
};

/// Farthest-point sampling of k indices. Starts from the canonically smallest
/// point (minimum Morton code) and repeatedly adds the point whose squared
/// distance to the selected set is largest, ties resolved canonically.
inline std::vector<std::size_t> fps(const PointCloud& cloud, std::size_t k,
                                    int depth = kDefaultMortonDepth) {
  validate(cloud);
  const std::size_t n = cloud.size();
  if (k == 0 || k > n) {
    throw InputError("fps: k=" + std::to_string(k) + " outside [1, " + std::to_string(n) + "]");
  }
  const CanonicalOrder canon(cloud, depth);
  std::size_t seed = 0;
  for (std::size_t i = 1; i < n; ++i) {
    if (canon.less(i, seed)) seed = i;
  }
  std::vector<std::size_t> picked{seed};
  std::vector<char> taken(n, 0);
  taken[seed] = 1;
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  while (picked.size() < k) {
    const Vec3& last = cloud.positions[picked.back()];
    std::size_t best = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (taken[i]) continue;
      nearest[i] = std::min(nearest[i], squared_distance(cloud.positions[i], last));
      if (best == n || nearest[i] > nearest[best] ||
          (nearest[i] == nearest[best] && canon.less(i, best))) {
        best = i;
      }
    }
    picked.push_back(best);
    taken[best] = 1;
  }
  return picked;
}

/// One ball-query group. Slot 0 is always the center; slots past the real
/// members repeat the center and are marked invalid.
struct GroupedNeighborhood {
  std::size_t center = 0;
  std::vector<std::size_t> members;
  std::vector<Vec3> relative;  // member - center
  std::vector<char> valid;     // pad mask: 1 = real member
};

/// Up to K points strictly within radius r of each center, nearest first.
inline std::vector<GroupedNeighborhood> ball_query(const PointCloud& cloud,
                                                   std::span<const std::size_t> centers,
                                                   double radius, std::size_t max_members,
                                                   int depth = kDefaultMortonDepth) {
  validate(cloud);
  if (centers.empty()) throw InputError("ball_query: no centers");
  if (!(radius > 0.0)) throw InputError("ball_query: radius must be positive");
  if (max_members == 0) throw InputError("ball_query: K must be at least 1");
  const CanonicalOrder canon(cloud, depth);
  const double r2 = radius * radius;
  std::vector<GroupedNeighborhood> groups;
  groups.reserve(centers.size());
  std::vector<std::pair<double, std::size_t>> hits;
  for (std::size_t c : centers) {
    if (c >= cloud.size()) throw InputError("ball_query: center index out of range");
    const Vec3& origin = cloud.positions[c];
    hits.clear();
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      if (i == c) continue;
      const double d2 = squared_distance(cloud.positions[i], origin);
      if (d2 < r2) hits.emplace_back(d2, i);
    }
    const std::size_t keep = std::min(hits.size(), max_members - 1);
    std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(keep), hits.end(),
                      [&](const auto& a, const auto& b) {
                        if (a.first != b.first) return a.first < b.first;
                        return canon.less(a.second, b.second);
                      });
    GroupedNeighborhood g;
    g.center = c;
    g.members.assign(max_members, c);
    g.relative.assign(max_members, Vec3{0.0, 0.0, 0.0});
    g.valid.assign(max_members, 0);
    g.valid[0] = 1;
    for (std::size_t s = 0; s < keep; ++s) {
      const std::size_t m = hits[s].second;
      g.members[s + 1] = m;
      g.valid[s + 1] = 1;
      for (int a = 0; a < 3; ++a) g.relative[s + 1][a] = cloud.positions[m][a] - origin[a];
    }
    groups.push_back(std::move(g));
  }
  return groups;
}

struct EmbeddedCloud {
  Tensor positions;  // n' x 3, constant
  Tensor features;   // n' x C'
  std::vector<std::size_t> centers;  // indices into the source cloud
};

inline Tensor positions_tensor(std::span<const Vec3> points) {
  std::vector<double> v;
  v.reserve(points.size() * 3);
  for (const auto& p : points) v.insert(v.end(), p.begin(), p.end());
  return Tensor({points.size(), 3}, std::move(v));
}

struct SetAbstractionParams {
  std::size_t centers = 256;
  double radius = 0.2;
  std::size_t group_size = 32;
  bool use_normals = false;
  int morton_depth = kDefaultMortonDepth;
};

/// Channels entering the shared convolution for each group member.
inline std::size_t set_abstraction_input_channels(bool use_normals) { return use_normals ? 6 : 3; }

/// FPS centers, ball-query groups, then per group
/// max over members of concat(shared_mlp(member input), relative xyz).
inline EmbeddedCloud set_abstraction(const PointCloud& cloud, const SetAbstractionParams& p,
                                     std::span<const DenseLayer> mlp) {
  if (p.use_normals && !cloud.has_normals()) {
    throw InputError("set_abstraction: normals requested but the cloud has none");
  }
  const auto centers = fps(cloud, p.centers, p.morton_depth);
  const auto groups = ball_query(cloud, centers, p.radius, p.group_size, p.morton_depth);
  const std::size_t n = centers.size(), k = p.group_size;
  const std::size_t cin = set_abstraction_input_channels(p.use_normals);
  std::vector<double> member_in(n * k * cin), member_xyz(n * k * 3);
  for (std::size_t g = 0; g < n; ++g) {
    for (std::size_t s = 0; s < k; ++s) {
      const std::size_t row = g * k + s;
      for (int a = 0; a < 3; ++a) {
        member_in[row * cin + a] = groups[g].relative[s][a];
        member_xyz[row * 3 + a] = groups[g].relative[s][a];
      }
      if (p.use_normals) {
        const auto& nrm = (*cloud.normals)[groups[g].members[s]];
        for (int a = 0; a < 3; ++a) member_in[row * cin + 3 + a] = nrm[a];
      }
    }
  }
  const Tensor input({n * k, cin}, std::move(member_in));
  const Tensor raw({n * k, 3}, std::move(member_xyz));
  const Tensor conv = shared_mlp(input, mlp);
  const std::size_t width = conv.dim(1) + 3;
  const Tensor joined = reshape(concat({conv, raw}, 1), {n, k, width});

  std::vector<Vec3> center_pos;
  center_pos.reserve(n);
  for (std::size_t c : centers) center_pos.push_back(cloud.positions[c]);
  return {positions_tensor(center_pos), pool(joined, 1, PoolKind::max), centers};
}

}  // namespace pscn
