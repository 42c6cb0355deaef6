// SPDX-License-Identifier: Apache-2.0
//
// Shared test fixtures: deterministic random clusters and small model
// configurations sized for fast tests.
#pragma once

#include <cmath>
#include <vector>

#include "nnpforge/chemdata.hpp"
#include "nnpforge/model.hpp"
#include "nnpforge/random.hpp"
#include "nnpforge/surrogate.hpp"

namespace fixtures {

inline nnpforge::ModelConfig small_model() {
  nnpforge::ModelConfig cfg;
  cfg.n_atom_features = 16;
  cfg.n_interactions = 2;
  cfg.n_rbf = 8;
  cfg.cutoff = 6.0;
  cfg.rbf_width = cfg.cutoff / cfg.n_rbf;
  cfg.readout_hidden = 8;
  cfg.element_vocabulary = {1, 8};
  return cfg;
}

// Water-patterned cluster with mildly perturbed geometry; deterministic.
inline nnpforge::Cluster random_water_cluster(int n_waters, std::uint64_t seed) {
  nnpforge::Rng rng(nnpforge::derive_seed(seed, 0xf1f0));
  nnpforge::Cluster c;
  for (int m = 0; m < n_waters; ++m) {
    const double cx = 2.9 * (m % 3) + 0.3 * rng.uniform();
    const double cy = 2.9 * ((m / 3) % 3) + 0.3 * rng.uniform();
    const double cz = 2.9 * (m / 9) + 0.3 * rng.uniform();
    c.atomic_numbers.insert(c.atomic_numbers.end(), {8, 1, 1});
    c.positions.insert(c.positions.end(), {cx, cy, cz});
    c.positions.insert(c.positions.end(),
                       {cx + 0.96 + 0.05 * rng.uniform(), cy + 0.05 * rng.uniform(), cz});
    c.positions.insert(c.positions.end(),
                       {cx - 0.24, cy + 0.93 + 0.05 * rng.uniform(), cz + 0.05 * rng.uniform()});
  }
  return c;
}

// A relaxed water cluster on the surrogate PES-A.
inline nnpforge::Cluster relaxed_water_cluster(const nnpforge::SurrogateSpec& spec, int n_waters,
                                               std::uint64_t seed) {
  nnpforge::Cluster c = random_water_cluster(n_waters, seed);
  nnpforge::relax_on_surface(spec, c.atomic_numbers, c.positions, 1e-4, 20000);
  c.energy = nnpforge::surrogate_energy(spec, c.atomic_numbers, c.positions);
  return c;
}

// Applies a rotation matrix (row-major 3x3) to every atom.
inline std::vector<double> rotate_positions(const std::vector<double>& pos, const double r[9]) {
  std::vector<double> out(pos.size());
  for (std::size_t a = 0; a < pos.size() / 3; ++a) {
    for (int i = 0; i < 3; ++i)
      out[3 * a + static_cast<std::size_t>(i)] = r[3 * i] * pos[3 * a] +
                                                 r[3 * i + 1] * pos[3 * a + 1] +
                                                 r[3 * i + 2] * pos[3 * a + 2];
  }
  return out;
}

// Rotation about an axis by angle (Rodrigues).
inline void rotation_matrix(double axis_x, double axis_y, double axis_z, double angle,
                            double out[9]) {
  const double n = std::sqrt(axis_x * axis_x + axis_y * axis_y + axis_z * axis_z);
  const double x = axis_x / n, y = axis_y / n, z = axis_z / n;
  const double c = std::cos(angle), s = std::sin(angle), t = 1.0 - c;
  out[0] = t * x * x + c;
  out[1] = t * x * y - s * z;
  out[2] = t * x * z + s * y;
  out[3] = t * x * y + s * z;
  out[4] = t * y * y + c;
  out[5] = t * y * z - s * x;
  out[6] = t * x * z - s * y;
  out[7] = t * y * z + s * x;
  out[8] = t * z * z + c;
}

}  // namespace fixtures
