// SPDX-License-Identifier: Apache-2.0
//
// NNP- or surrogate-driven molecular dynamics: velocity Verlet with an
// optional Berendsen thermostat, trajectory capture and re-scoring against a
// reference potential. Units: Å, fs, amu, kcal/mol, K (see constants.hpp).
#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "nnpforge/chemdata.hpp"
#include "nnpforge/model.hpp"

namespace nnpforge {

// Anything that can score a configuration: the NNP, the analytic surrogates,
// or test potentials.
class ForceProvider {
 public:
  virtual ~ForceProvider() = default;
  virtual EnergyForces evaluate(const std::vector<int>& atomic_numbers,
                                const std::vector<double>& positions) const = 0;
  virtual std::string name() const = 0;
};

class NnpProvider : public ForceProvider {
 public:
  explicit NnpProvider(ModelParams params, std::string label = "nnp")
      : params_(std::move(params)), label_(std::move(label)) {}
  EnergyForces evaluate(const std::vector<int>& z,
                        const std::vector<double>& pos) const override;
  std::string name() const override { return label_; }
  const ModelParams& params() const { return params_; }

 private:
  ModelParams params_;
  std::string label_;
};

enum class Ensemble { NVT, NVE };

struct MDConfig {
  double dt = 0.25;            // fs
  int n_steps = 10000;
  double temperature = 300.0;  // K
  double tau = 50.0;           // fs, Berendsen coupling
  Ensemble mode = Ensemble::NVT;
  std::uint64_t seed = 0;
  int snapshot_stride = 10;
  double force_bound = 1e4;    // kcal/mol/Å per component; beyond => unstable

  void validate() const;
};

struct MDState {
  std::vector<double> positions;
  std::vector<double> velocities;  // Å/fs
  std::vector<double> masses;      // amu
  std::vector<double> forces;      // at current positions
  double potential = 0.0;
  double temperature = 0.0;
  std::int64_t step = 0;
};

struct MDFrame {
  std::int64_t step = 0;
  std::vector<double> positions;
  std::vector<double> velocities;
  std::vector<double> forces;
  double energy = 0.0;       // predicted potential, kcal/mol
  double temperature = 0.0;  // instantaneous, K
};

struct Trajectory {
  MDConfig config;
  std::vector<int> atomic_numbers;
  std::vector<double> masses;
  std::vector<MDFrame> frames;
  std::string provenance;
  bool truncated = false;
  std::string truncation_reason;
};

// Thrown by verlet_step on non-finite or out-of-bound forces; run_md converts
// it into a truncated trajectory.
struct ForceBlowup : std::runtime_error {
  explicit ForceBlowup(const std::string& msg) : std::runtime_error(msg) {}
};

// Maxwell-Boltzmann draw at T0, centre-of-mass momentum removed, then
// rescaled so the kinetic temperature equals T0 exactly. T0 = 0 gives zeros.
std::vector<double> init_velocities(const Cluster& c, double t0, std::uint64_t seed);

// T = 2·KE / (k_B · N_dof) with N_dof = 3N - 3 (returns 0 when N_dof <= 0).
double kinetic_temperature(const std::vector<double>& velocities,
                           const std::vector<double>& masses);

// One velocity-Verlet step: half kick, drift, force refresh, half kick.
// state.forces must hold forces at state.positions on entry.
void verlet_step(MDState& state, const ForceProvider& provider,
                 const std::vector<int>& atomic_numbers, double dt,
                 double force_bound = 1e4);

// Berendsen velocity scaling factor, clamped to [0.9, 1.1].
double berendsen_scale(double t_inst, double t0, double dt, double tau);

Trajectory run_md(const ForceProvider& provider, const Cluster& start, const MDConfig& cfg);

// Seed ensemble (the paper's repeated-seed protocol); members run
// independently, results ordered by seed index.
std::vector<Trajectory> run_md_ensemble(const ForceProvider& provider, const Cluster& start,
                                        const MDConfig& cfg, std::span<const std::uint64_t> seeds,
                                        int threads = 0);

struct TrajectoryValidation {
  std::vector<double> reference_energies;  // one per frame
  bool valid = false;                      // all reference energies < 0
};

TrajectoryValidation validate_trajectory(const Trajectory& traj,
                                         const ForceProvider& reference);

// Secular energy drift: |least-squares slope × span| / |E(0)|, computed on
// total (potential + kinetic) energy per frame. The bounded oscillation a
// symplectic integrator shows is not drift and is excluded by the fit.
double energy_drift(const Trajectory& traj);

// Mean instantaneous temperature over frames in [first, last).
double mean_temperature(const Trajectory& traj, std::size_t first, std::size_t last);

// Extended-XYZ persistence: comment line carries step/energy/temperature.
std::string write_trajectory_xyz(const Trajectory& traj);
Trajectory read_trajectory_xyz(const std::string& text);

}  // namespace nnpforge
