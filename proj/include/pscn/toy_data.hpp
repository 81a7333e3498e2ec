#pragma once

#include <cmath>
#include <random>
#include <tuple>
#include <vector>

#include "pscn/train.hpp"

namespace pscn {

namespace detail {

inline Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  for (;;) {
    const Vec3 v{g(rng), g(rng), g(rng)};
    const double len = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    if (len > 1e-9) return {v[0] / len, v[1] / len, v[2] / len};
  }
}

// Uniform point on the surface of [-1,1]^3 with its outward face normal.
inline std::pair<Vec3, Vec3> random_cube_surface(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> face(0, 5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const int f = face(rng);
  const int axis = f / 2;
  const double side = f % 2 ? 1.0 : -1.0;
  Vec3 p{u(rng), u(rng), u(rng)};
  Vec3 n{0.0, 0.0, 0.0};
  p[axis] = side;
  n[axis] = side;
  return {p, n};
}

}  // namespace detail

/// Label 0: sphere surfaces, label 1: cube surfaces; random scale and offset.
inline std::vector<Sample> make_sphere_cube_dataset(std::size_t per_class, std::size_t points,
                                                    std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> scale(0.5, 2.0), shift(-1.0, 1.0);
  std::vector<Sample> out;
  for (std::size_t i = 0; i < 2 * per_class; ++i) {
    const int label = static_cast<int>(i % 2);
    const double s = scale(rng);
    const Vec3 offset{shift(rng), shift(rng), shift(rng)};
    Sample sample;
    sample.cloud.label = label;
    sample.cloud.normals.emplace();
    for (std::size_t k = 0; k < points; ++k) {
      Vec3 p, n;
      if (label == 0) {
        n = detail::random_unit(rng);
        p = n;
      } else {
        std::tie(p, n) = detail::random_cube_surface(rng);
      }
      for (int a = 0; a < 3; ++a) p[a] = p[a] * s + offset[a];
      sample.cloud.positions.push_back(p);
      sample.cloud.normals->push_back(n);
    }
    out.push_back(std::move(sample));
  }
  return out;
}

/// Part label 0 on a hemisphere (x < 0), part label 1 on a half cube (x > 0).
inline std::vector<Sample> make_composite_segmentation_dataset(std::size_t count, std::size_t points,
                                                               std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Sample> out;
  for (std::size_t i = 0; i < count; ++i) {
    Sample sample;
    sample.cloud.label = 0;
    sample.cloud.normals.emplace();
    while (sample.cloud.size() < points) {
      const bool sphere_part = sample.cloud.size() % 2 == 0;
      Vec3 p, n;
      if (sphere_part) {
        n = detail::random_unit(rng);
        p = n;
        if (p[0] >= 0.0) continue;
      } else {
        std::tie(p, n) = detail::random_cube_surface(rng);
        if (p[0] <= 0.0) continue;
      }
      sample.cloud.positions.push_back(p);
      sample.cloud.normals->push_back(n);
      sample.part_labels.push_back(sphere_part ? 0 : 1);
    }
    out.push_back(std::move(sample));
  }
  return out;
}

}  // namespace pscn
