// SPDX-License-Identifier: Apache-2.0
//
// Analytic water-cluster potentials used as stand-ins for the expensive
// reference methods, with exact forces: PES-A (flexible-SPC-like harmonic
// intramolecular terms + O-O Lennard-Jones + switched Coulomb) and PES-B, a
// scaled/shifted/perturbed variant of PES-A representing a second method.
// Plus generators for desk-scale minima and non-minima datasets.
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "nnpforge/chemdata.hpp"
#include "nnpforge/dynamics.hpp"

namespace nnpforge {

struct SurrogateSpec {
  // Intramolecular harmonic terms, E = k·Δ² convention.
  double bond_k = 450.0;        // kcal/mol/Å²
  double bond_r0 = 0.9572;      // Å
  double angle_k = 55.0;        // kcal/mol/rad²
  double angle_theta0 = 1.8242181341844732;  // 104.52° in rad

  // Intermolecular terms.
  double lj_epsilon = 0.1521;   // kcal/mol, O-O
  double lj_sigma = 3.1507;     // Å
  double q_oxygen = -0.8340;    // e
  double q_hydrogen = 0.4170;   // e
  double coulomb_switch_on = 8.0;   // Å, cubic switch to zero
  double coulomb_switch_off = 9.0;  // Å

  // PES-B = a·E_A + b·Σ_m g_m + c·Σ_{O-O} LJ(σ′), where g_m is a smooth
  // per-molecule binding indicator that vanishes at full dissociation.
  double b_scale = 1.05;
  double b_offset_per_water = 0.3;  // kcal/mol
  double b_pair_scale = 0.2;
  double b_sigma_factor = 1.08;
  double b_indicator_on = 4.5;   // Å, O-O switch for the binding indicator
  double b_indicator_off = 7.5;  // Å

  void validate() const;
};

double surrogate_energy(const SurrogateSpec& spec, const std::vector<int>& z,
                        const std::vector<double>& positions);
EnergyForces surrogate_eval(const SurrogateSpec& spec, const std::vector<int>& z,
                            const std::vector<double>& positions);
double surrogate_energy(const SurrogateSpec& spec, const Cluster& c);
std::vector<double> surrogate_forces(const SurrogateSpec& spec, const Cluster& c);

double pes_b_energy(const SurrogateSpec& spec, const std::vector<int>& z,
                    const std::vector<double>& positions);
EnergyForces pes_b_eval(const SurrogateSpec& spec, const std::vector<int>& z,
                        const std::vector<double>& positions);
double pes_b_energy(const SurrogateSpec& spec, const Cluster& c);

enum class Surface { A, B };

class SurrogateProvider : public ForceProvider {
 public:
  SurrogateProvider(SurrogateSpec spec, Surface surface)
      : spec_(spec), surface_(surface) {}
  EnergyForces evaluate(const std::vector<int>& z,
                        const std::vector<double>& pos) const override;
  std::string name() const override { return surface_ == Surface::A ? "pes-A" : "pes-B"; }

 private:
  SurrogateSpec spec_;
  Surface surface_;
};

// Random packed geometries relaxed on PES-A until max |F component| < 1e-4
// kcal/mol/Å; only converged, bound (E < 0) structures are emitted.
// Non-converged samples are discarded and tallied in tags["generator.discarded"].
ClusterSet generate_minima(const SurrogateSpec& spec, std::span<const int> sizes, int count,
                           std::uint64_t seed);

// Short PES-A NVT runs from each minimum; the second half of each run is
// subsampled. Every emitted cluster carries the surrogate E and F of its
// frame. Unstable runs are skipped and tallied in tags["generator.skipped"].
ClusterSet generate_nonminima(const SurrogateSpec& spec, const ClusterSet& minima,
                              double temperature, int steps, std::uint64_t seed);

// Same geometries, energies re-labelled with PES-B; forces dropped (the
// second-method dataset carries energies only).
ClusterSet relabel_pes_b(const SurrogateSpec& spec, const ClusterSet& set);

// Single relaxation to the nearest PES-A minimum; returns converged flag.
bool relax_on_surface(const SurrogateSpec& spec, std::vector<int> const& z,
                      std::vector<double>& positions, double force_tol, int max_iters);

}  // namespace nnpforge
