// SPDX-License-Identifier: Apache-2.0
#include "nnpforge/dynamics.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "nnpforge/constants.hpp"
#include "nnpforge/parallel.hpp"
#include "nnpforge/random.hpp"

namespace nnpforge {

EnergyForces NnpProvider::evaluate(const std::vector<int>& z,
                                   const std::vector<double>& pos) const {
  Cluster c;
  c.atomic_numbers = z;
  c.positions = pos;
  return energy_and_forces(params_, c);
}

void MDConfig::validate() const {
  if (dt <= 0.0) throw std::invalid_argument("md config: dt must be positive");
  if (n_steps < 1) throw std::invalid_argument("md config: n_steps must be >= 1");
  if (mode == Ensemble::NVT && tau < dt)
    throw std::invalid_argument("md config: tau must be >= dt in NVT mode");
  if (snapshot_stride < 1) throw std::invalid_argument("md config: snapshot_stride must be >= 1");
  if (temperature < 0.0) throw std::invalid_argument("md config: temperature must be >= 0");
}

std::vector<double> init_velocities(const Cluster& c, double t0, std::uint64_t seed) {
  if (t0 < 0.0) throw std::invalid_argument("init_velocities: negative temperature");
  const int n = c.n_atoms();
  std::vector<double> v(static_cast<std::size_t>(3 * n), 0.0);
  if (t0 == 0.0) return v;

  std::vector<double> masses(static_cast<std::size_t>(n));
  for (int a = 0; a < n; ++a)
    masses[static_cast<std::size_t>(a)] = units::atomic_mass(c.atomic_numbers[a]);

  Rng rng(derive_seed(seed, 0x7e10));
  for (int a = 0; a < n; ++a) {
    const double s = std::sqrt(units::kBoltzmann * t0 * units::kForceToAccel /
                               masses[static_cast<std::size_t>(a)]);
    for (int k = 0; k < 3; ++k) v[static_cast<std::size_t>(3 * a + k)] = s * rng.normal();
  }

  // Remove centre-of-mass momentum.
  double total_mass = 0.0;
  double p[3] = {0.0, 0.0, 0.0};
  for (int a = 0; a < n; ++a) {
    const double m = masses[static_cast<std::size_t>(a)];
    total_mass += m;
    for (int k = 0; k < 3; ++k) p[k] += m * v[static_cast<std::size_t>(3 * a + k)];
  }
  for (int a = 0; a < n; ++a)
    for (int k = 0; k < 3; ++k)
      v[static_cast<std::size_t>(3 * a + k)] -= p[k] / total_mass;

  // Rescale to the exact target kinetic temperature.
  const double t_now = kinetic_temperature(v, masses);
  if (t_now > 0.0) {
    const double lambda = std::sqrt(t0 / t_now);
    for (auto& x : v) x *= lambda;
  }
  return v;
}

double kinetic_temperature(const std::vector<double>& velocities,
                           const std::vector<double>& masses) {
  const int n = static_cast<int>(masses.size());
  if (n < 1) throw std::invalid_argument("kinetic_temperature: no atoms");
  const int n_dof = 3 * n - 3;
  if (n_dof <= 0) return 0.0;
  double ke = 0.0;  // amu·Å²/fs²
  for (int a = 0; a < n; ++a) {
    const double m = masses[static_cast<std::size_t>(a)];
    for (int k = 0; k < 3; ++k) {
      const double vv = velocities[static_cast<std::size_t>(3 * a + k)];
      ke += 0.5 * m * vv * vv;
    }
  }
  return 2.0 * ke * units::kKineticToKcal / (units::kBoltzmann * n_dof);
}

namespace {

void check_forces(const std::vector<double>& f, double bound, std::int64_t step) {
  for (double x : f) {
    if (!std::isfinite(x))
      throw ForceBlowup("non-finite force at step " + std::to_string(step));
    if (std::abs(x) > bound)
      throw ForceBlowup("force component " + std::to_string(x) + " exceeds bound " +
                        std::to_string(bound) + " at step " + std::to_string(step));
  }
}

}  // namespace

void verlet_step(MDState& state, const ForceProvider& provider,
                 const std::vector<int>& atomic_numbers, double dt, double force_bound) {
  const int n = static_cast<int>(state.masses.size());
  // Half kick with current forces.
  for (int a = 0; a < n; ++a) {
    const double inv_m =
        units::kForceToAccel / state.masses[static_cast<std::size_t>(a)];
    for (int k = 0; k < 3; ++k) {
      const std::size_t i = static_cast<std::size_t>(3 * a + k);
      state.velocities[i] += 0.5 * dt * state.forces[i] * inv_m;
    }
  }
  // Drift.
  for (std::size_t i = 0; i < state.positions.size(); ++i)
    state.positions[i] += dt * state.velocities[i];
  // New forces.
  EnergyForces ef = provider.evaluate(atomic_numbers, state.positions);
  check_forces(ef.forces, force_bound, state.step + 1);
  state.forces = std::move(ef.forces);
  state.potential = ef.energy;
  // Second half kick.
  for (int a = 0; a < n; ++a) {
    const double inv_m =
        units::kForceToAccel / state.masses[static_cast<std::size_t>(a)];
    for (int k = 0; k < 3; ++k) {
      const std::size_t i = static_cast<std::size_t>(3 * a + k);
      state.velocities[i] += 0.5 * dt * state.forces[i] * inv_m;
    }
  }
  ++state.step;
  state.temperature = kinetic_temperature(state.velocities, state.masses);
}

double berendsen_scale(double t_inst, double t0, double dt, double tau) {
  if (t_inst <= 0.0) return 1.0;
  const double lambda = std::sqrt(1.0 + (dt / tau) * (t0 / t_inst - 1.0));
  return std::min(1.1, std::max(0.9, lambda));
}

Trajectory run_md(const ForceProvider& provider, const Cluster& start, const MDConfig& cfg) {
  cfg.validate();
  start.validate();

  Trajectory traj;
  traj.config = cfg;
  traj.atomic_numbers = start.atomic_numbers;
  traj.provenance = provider.name();
  const int n = start.n_atoms();
  traj.masses.resize(static_cast<std::size_t>(n));
  for (int a = 0; a < n; ++a)
    traj.masses[static_cast<std::size_t>(a)] = units::atomic_mass(start.atomic_numbers[a]);

  MDState state;
  state.positions = start.positions;
  state.velocities = init_velocities(start, cfg.temperature, cfg.seed);
  state.masses = traj.masses;
  state.temperature = kinetic_temperature(state.velocities, state.masses);

  auto snapshot = [&]() {
    traj.frames.push_back({state.step, state.positions, state.velocities, state.forces,
                           state.potential, state.temperature});
  };

  try {
    EnergyForces ef = provider.evaluate(traj.atomic_numbers, state.positions);
    check_forces(ef.forces, cfg.force_bound, 0);
    state.forces = std::move(ef.forces);
    state.potential = ef.energy;
    snapshot();  // frame at step 0

    for (int s = 1; s <= cfg.n_steps; ++s) {
      verlet_step(state, provider, traj.atomic_numbers, cfg.dt, cfg.force_bound);
      if (cfg.mode == Ensemble::NVT) {
        const double lambda =
            berendsen_scale(state.temperature, cfg.temperature, cfg.dt, cfg.tau);
        if (lambda != 1.0) {
          for (auto& v : state.velocities) v *= lambda;
          state.temperature = kinetic_temperature(state.velocities, state.masses);
        }
      }
      if (s % cfg.snapshot_stride == 0) snapshot();
    }
  } catch (const ForceBlowup& e) {
    traj.truncated = true;
    traj.truncation_reason = e.what();
  }
  return traj;
}

std::vector<Trajectory> run_md_ensemble(const ForceProvider& provider, const Cluster& start,
                                        const MDConfig& cfg, std::span<const std::uint64_t> seeds,
                                        int threads) {
  std::vector<Trajectory> out(seeds.size());
  parallel_for(static_cast<int>(seeds.size()), resolve_threads(threads), [&](int i) {
    MDConfig c = cfg;
    c.seed = seeds[static_cast<std::size_t>(i)];
    out[static_cast<std::size_t>(i)] = run_md(provider, start, c);
  });
  return out;
}

// Bound-cluster criterion. Strictly E < 0 would classify a fully dissociated
// configuration as valid through the ~-1e-10 attractive pair tail; the small
// margin makes E -> 0⁻ asymptotes invalid as intended.
constexpr double kBoundEnergyThreshold = -1e-6;  // kcal/mol

TrajectoryValidation validate_trajectory(const Trajectory& traj,
                                         const ForceProvider& reference) {
  TrajectoryValidation v;
  v.valid = !traj.frames.empty();
  for (const auto& frame : traj.frames) {
    const EnergyForces ef = reference.evaluate(traj.atomic_numbers, frame.positions);
    v.reference_energies.push_back(ef.energy);
    if (!(ef.energy < kBoundEnergyThreshold)) v.valid = false;
  }
  return v;
}

double energy_drift(const Trajectory& traj) {
  const std::size_t n = traj.frames.size();
  if (n < 2) return 0.0;
  std::vector<double> e(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& f = traj.frames[i];
    double ke = 0.0;
    for (std::size_t a = 0; a < traj.masses.size(); ++a)
      for (int k = 0; k < 3; ++k) {
        const double vv = f.velocities[3 * a + static_cast<std::size_t>(k)];
        ke += 0.5 * traj.masses[a] * vv * vv;
      }
    e[i] = f.energy + ke * units::kKineticToKcal;
  }
  // Least-squares slope of E against step index.
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = static_cast<double>(traj.frames[i].step);
    sx += x;
    sy += e[i];
    sxx += x * x;
    sxy += x * e[i];
  }
  const double denom = n * sxx - sx * sx;
  if (denom == 0.0) return 0.0;
  const double slope = (n * sxy - sx * sy) / denom;
  const double span = static_cast<double>(traj.frames.back().step - traj.frames.front().step);
  const double e0 = std::abs(e.front());
  return e0 > 0.0 ? std::abs(slope * span) / e0 : std::abs(slope * span);
}

double mean_temperature(const Trajectory& traj, std::size_t first, std::size_t last) {
  last = std::min(last, traj.frames.size());
  if (first >= last) throw std::invalid_argument("mean_temperature: empty window");
  double acc = 0.0;
  for (std::size_t i = first; i < last; ++i) acc += traj.frames[i].temperature;
  return acc / static_cast<double>(last - first);
}

std::string write_trajectory_xyz(const Trajectory& traj) {
  std::string out;
  char buf[64];
  for (const auto& f : traj.frames) {
    out += std::to_string(traj.atomic_numbers.size());
    out += '\n';
    std::snprintf(buf, sizeof(buf), "step=%lld energy=%.17g temperature=%.17g",
                  static_cast<long long>(f.step), f.energy, f.temperature);
    out += buf;
    out += '\n';
    for (std::size_t a = 0; a < traj.atomic_numbers.size(); ++a) {
      out += z_to_symbol(traj.atomic_numbers[a]);
      for (int k = 0; k < 3; ++k) {
        std::snprintf(buf, sizeof(buf), " %.17g", f.positions[3 * a + static_cast<std::size_t>(k)]);
        out += buf;
      }
      out += '\n';
    }
  }
  return out;
}

Trajectory read_trajectory_xyz(const std::string& text) {
  // Reuse the cluster parser; step/temperature keys are re-parsed here.
  Trajectory traj;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    int n_atoms = 0;
    if (!(ls >> n_atoms) || n_atoms <= 0) continue;
    if (!std::getline(in, line)) throw std::runtime_error("trajectory xyz: missing comment line");
    MDFrame frame;
    {
      std::istringstream cs(line);
      std::string tok;
      while (cs >> tok) {
        const auto eq = tok.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = tok.substr(0, eq);
        const std::string val = tok.substr(eq + 1);
        if (key == "step") frame.step = std::stoll(val);
        else if (key == "energy") frame.energy = std::stod(val);
        else if (key == "temperature") frame.temperature = std::stod(val);
      }
    }
    const bool first = traj.frames.empty();
    for (int a = 0; a < n_atoms; ++a) {
      if (!std::getline(in, line)) throw std::runtime_error("trajectory xyz: truncated frame");
      std::istringstream as(line);
      std::string sym;
      double x, y, z;
      if (!(as >> sym >> x >> y >> z)) throw std::runtime_error("trajectory xyz: bad atom row");
      if (first) traj.atomic_numbers.push_back(symbol_to_z(sym));
      frame.positions.insert(frame.positions.end(), {x, y, z});
    }
    frame.velocities.assign(frame.positions.size(), 0.0);
    traj.frames.push_back(std::move(frame));
  }
  if (traj.frames.empty()) throw std::runtime_error("trajectory xyz: no frames");
  traj.masses.resize(traj.atomic_numbers.size());
  for (std::size_t a = 0; a < traj.atomic_numbers.size(); ++a)
    traj.masses[a] = units::atomic_mass(traj.atomic_numbers[a]);
  return traj;
}

}  // namespace nnpforge
