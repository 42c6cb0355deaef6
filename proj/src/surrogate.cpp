// SPDX-License-Identifier: Apache-2.0
#include "nnpforge/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "nnpforge/constants.hpp"
#include "nnpforge/random.hpp"

namespace nnpforge {

void SurrogateSpec::validate() const {
  if (bond_k <= 0 || angle_k <= 0 || lj_epsilon <= 0 || lj_sigma <= 0)
    throw std::invalid_argument("surrogate spec: force constants must be positive");
  if (std::abs(q_oxygen + 2.0 * q_hydrogen) > 1e-12)
    throw std::invalid_argument("surrogate spec: molecule must be charge neutral");
  if (coulomb_switch_off <= coulomb_switch_on || b_indicator_off <= b_indicator_on)
    throw std::invalid_argument("surrogate spec: switch ranges must be increasing");
}

namespace {

void require_water(const std::vector<int>& z) {
  if (z.empty() || z.size() % 3 != 0)
    throw std::invalid_argument("surrogate: composition is not O,H,H water molecules");
  for (std::size_t m = 0; m < z.size() / 3; ++m)
    if (z[3 * m] != 8 || z[3 * m + 1] != 1 || z[3 * m + 2] != 1)
      throw std::invalid_argument("surrogate: composition is not O,H,H water molecules");
}

struct V3 {
  double x, y, z;
};
inline V3 operator-(V3 a, V3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
inline V3 operator+(V3 a, V3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
inline V3 operator*(double s, V3 a) { return {s * a.x, s * a.y, s * a.z}; }
inline double dot(V3 a, V3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline double norm(V3 a) { return std::sqrt(dot(a, a)); }

inline V3 load(const std::vector<double>& pos, std::size_t a) {
  return {pos[3 * a], pos[3 * a + 1], pos[3 * a + 2]};
}
inline void add_force(std::vector<double>& f, std::size_t a, V3 v) {
  f[3 * a] += v.x;
  f[3 * a + 1] += v.y;
  f[3 * a + 2] += v.z;
}

// Cubic switch: 1 for r <= on, 0 for r >= off, C¹ at both ends.
inline double switch_value(double r, double on, double off) {
  if (r <= on) return 1.0;
  if (r >= off) return 0.0;
  const double t = (r - on) / (off - on);
  return 1.0 + t * t * (2.0 * t - 3.0);
}
inline double switch_derivative(double r, double on, double off) {
  if (r <= on || r >= off) return 0.0;
  const double t = (r - on) / (off - on);
  return 6.0 * t * (t - 1.0) / (off - on);
}

// Accumulates E and (optionally) forces for PES-A.
double pes_a_terms(const SurrogateSpec& s, const std::vector<int>& z,
                   const std::vector<double>& pos, std::vector<double>* f) {
  require_water(z);
  const std::size_t n_mol = z.size() / 3;
  double energy = 0.0;

  // Intramolecular: two OH bonds and the HOH angle per molecule.
  for (std::size_t m = 0; m < n_mol; ++m) {
    const std::size_t o = 3 * m, h1 = 3 * m + 1, h2 = 3 * m + 2;
    for (std::size_t h : {h1, h2}) {
      const V3 d = load(pos, h) - load(pos, o);
      const double r = norm(d);
      const double dr = r - s.bond_r0;
      energy += s.bond_k * dr * dr;
      if (f) {
        const V3 fh = (-2.0 * s.bond_k * dr / r) * d;
        add_force(*f, h, fh);
        add_force(*f, o, -1.0 * fh);
      }
    }
    const V3 u = load(pos, h1) - load(pos, o);
    const V3 v = load(pos, h2) - load(pos, o);
    const double nu = norm(u), nv = norm(v);
    double ct = dot(u, v) / (nu * nv);
    ct = std::min(1.0, std::max(-1.0, ct));
    const double theta = std::acos(ct);
    const double dth = theta - s.angle_theta0;
    energy += s.angle_k * dth * dth;
    if (f) {
      const double st = std::max(std::sqrt(1.0 - ct * ct), 1e-8);
      const double de_dtheta = 2.0 * s.angle_k * dth;
      // dθ/dr_h1 = (cosθ·û − v̂)/(|u| sinθ), and symmetrically for h2.
      const V3 uh = (1.0 / nu) * u;
      const V3 vh = (1.0 / nv) * v;
      const V3 g1 = (1.0 / (nu * st)) * (ct * uh - vh);
      const V3 g2 = (1.0 / (nv * st)) * (ct * vh - uh);
      add_force(*f, h1, -de_dtheta * g1);
      add_force(*f, h2, -de_dtheta * g2);
      add_force(*f, o, de_dtheta * (g1 + g2));
    }
  }

  // Intermolecular: O-O Lennard-Jones and switched Coulomb on all pairs.
  for (std::size_t ma = 0; ma + 1 < n_mol; ++ma) {
    for (std::size_t mb = ma + 1; mb < n_mol; ++mb) {
      {
        const std::size_t oa = 3 * ma, ob = 3 * mb;
        const V3 d = load(pos, ob) - load(pos, oa);
        const double r = norm(d);
        const double sr6 = std::pow(s.lj_sigma / r, 6);
        const double sr12 = sr6 * sr6;
        energy += 4.0 * s.lj_epsilon * (sr12 - sr6);
        if (f) {
          const double de_dr = 4.0 * s.lj_epsilon * (-12.0 * sr12 + 6.0 * sr6) / r;
          const V3 fb = (-de_dr / r) * d;
          add_force(*f, ob, fb);
          add_force(*f, oa, -1.0 * fb);
        }
      }
      for (int ia = 0; ia < 3; ++ia) {
        for (int ib = 0; ib < 3; ++ib) {
          const std::size_t a = 3 * ma + static_cast<std::size_t>(ia);
          const std::size_t b = 3 * mb + static_cast<std::size_t>(ib);
          const double qa = z[a] == 8 ? s.q_oxygen : s.q_hydrogen;
          const double qb = z[b] == 8 ? s.q_oxygen : s.q_hydrogen;
          const V3 d = load(pos, b) - load(pos, a);
          const double r = norm(d);
          const double sw = switch_value(r, s.coulomb_switch_on, s.coulomb_switch_off);
          if (sw == 0.0) continue;
          const double qq = units::kCoulomb * qa * qb;
          energy += qq * sw / r;
          if (f) {
            const double dsw = switch_derivative(r, s.coulomb_switch_on, s.coulomb_switch_off);
            const double de_dr = qq * (dsw / r - sw / (r * r));
            const V3 fb = (-de_dr / r) * d;
            add_force(*f, b, fb);
            add_force(*f, a, -1.0 * fb);
          }
        }
      }
    }
  }
  return energy;
}

// PES-B extras: b·Σ_m g_m + c·Σ 4ε[(σ′/r)¹² − (σ′/r)⁶] over O-O pairs, with
// g_m = 1 − Π_{m'≠m}(1 − w(r_OO)). Both vanish at full dissociation.
double pes_b_extras(const SurrogateSpec& s, const std::vector<int>& z,
                    const std::vector<double>& pos, std::vector<double>* f) {
  const std::size_t n_mol = z.size() / 3;
  double energy = 0.0;

  const double sigma_b = s.lj_sigma * s.b_sigma_factor;
  for (std::size_t ma = 0; ma + 1 < n_mol; ++ma) {
    for (std::size_t mb = ma + 1; mb < n_mol; ++mb) {
      const std::size_t oa = 3 * ma, ob = 3 * mb;
      const V3 d = load(pos, ob) - load(pos, oa);
      const double r = norm(d);
      const double sr6 = std::pow(sigma_b / r, 6);
      const double sr12 = sr6 * sr6;
      energy += s.b_pair_scale * 4.0 * s.lj_epsilon * (sr12 - sr6);
      if (f) {
        const double de_dr =
            s.b_pair_scale * 4.0 * s.lj_epsilon * (-12.0 * sr12 + 6.0 * sr6) / r;
        const V3 fb = (-de_dr / r) * d;
        add_force(*f, ob, fb);
        add_force(*f, oa, -1.0 * fb);
      }
    }
  }

  if (n_mol < 2) return energy;  // isolated molecule: indicator is zero

  // w_{ab} per molecule pair and the per-molecule products.
  std::vector<double> w(n_mol * n_mol, 0.0);
  for (std::size_t ma = 0; ma < n_mol; ++ma)
    for (std::size_t mb = ma + 1; mb < n_mol; ++mb) {
      const V3 d = load(pos, 3 * mb) - load(pos, 3 * ma);
      const double r = norm(d);
      const double wv = switch_value(r, s.b_indicator_on, s.b_indicator_off);
      w[ma * n_mol + mb] = wv;
      w[mb * n_mol + ma] = wv;
    }

  for (std::size_t m = 0; m < n_mol; ++m) {
    double prod = 1.0;
    for (std::size_t mo = 0; mo < n_mol; ++mo)
      if (mo != m) prod *= 1.0 - w[m * n_mol + mo];
    energy += s.b_offset_per_water * (1.0 - prod);
  }

  if (f) {
    for (std::size_t ma = 0; ma < n_mol; ++ma) {
      for (std::size_t mb = ma + 1; mb < n_mol; ++mb) {
        const V3 d = load(pos, 3 * mb) - load(pos, 3 * ma);
        const double r = norm(d);
        const double dw = switch_derivative(r, s.b_indicator_on, s.b_indicator_off);
        if (dw == 0.0) continue;
        // dg_ma/dw_ab = Π over the remaining partners of ma, and vice versa.
        double prod_a = 1.0, prod_b = 1.0;
        for (std::size_t mo = 0; mo < n_mol; ++mo) {
          if (mo != ma && mo != mb) prod_a *= 1.0 - w[ma * n_mol + mo];
          if (mo != mb && mo != ma) prod_b *= 1.0 - w[mb * n_mol + mo];
        }
        const double de_dw = s.b_offset_per_water * (prod_a + prod_b);
        const double de_dr = de_dw * dw;
        const V3 fb = (-de_dr / r) * d;
        add_force(*f, 3 * mb, fb);
        add_force(*f, 3 * ma, -1.0 * fb);
      }
    }
  }
  return energy;
}

}  // namespace

double surrogate_energy(const SurrogateSpec& spec, const std::vector<int>& z,
                        const std::vector<double>& positions) {
  spec.validate();
  return pes_a_terms(spec, z, positions, nullptr);
}

EnergyForces surrogate_eval(const SurrogateSpec& spec, const std::vector<int>& z,
                            const std::vector<double>& positions) {
  spec.validate();
  EnergyForces ef;
  ef.forces.assign(positions.size(), 0.0);
  ef.energy = pes_a_terms(spec, z, positions, &ef.forces);
  return ef;
}

double surrogate_energy(const SurrogateSpec& spec, const Cluster& c) {
  return surrogate_energy(spec, c.atomic_numbers, c.positions);
}

std::vector<double> surrogate_forces(const SurrogateSpec& spec, const Cluster& c) {
  return surrogate_eval(spec, c.atomic_numbers, c.positions).forces;
}

double pes_b_energy(const SurrogateSpec& spec, const std::vector<int>& z,
                    const std::vector<double>& positions) {
  spec.validate();
  return spec.b_scale * pes_a_terms(spec, z, positions, nullptr) +
         pes_b_extras(spec, z, positions, nullptr);
}

EnergyForces pes_b_eval(const SurrogateSpec& spec, const std::vector<int>& z,
                        const std::vector<double>& positions) {
  spec.validate();
  EnergyForces a;
  a.forces.assign(positions.size(), 0.0);
  a.energy = pes_a_terms(spec, z, positions, &a.forces);
  std::vector<double> fb(positions.size(), 0.0);
  const double eb = pes_b_extras(spec, z, positions, &fb);
  EnergyForces out;
  out.energy = spec.b_scale * a.energy + eb;
  out.forces.resize(positions.size());
  for (std::size_t i = 0; i < positions.size(); ++i)
    out.forces[i] = spec.b_scale * a.forces[i] + fb[i];
  return out;
}

double pes_b_energy(const SurrogateSpec& spec, const Cluster& c) {
  return pes_b_energy(spec, c.atomic_numbers, c.positions);
}

EnergyForces SurrogateProvider::evaluate(const std::vector<int>& z,
                                         const std::vector<double>& pos) const {
  return surface_ == Surface::A ? surrogate_eval(spec_, z, pos) : pes_b_eval(spec_, z, pos);
}

bool relax_on_surface(const SurrogateSpec& spec, const std::vector<int>& z,
                      std::vector<double>& positions, double force_tol, int max_iters) {
  // FIRE descent. Monotone gradient descent stalls far above the 1e-4
  // force threshold here: the surface mixes ~900 kcal/mol/Å² bond curvature
  // with ~0.1 intermolecular curvature, and the safe step for the stiff
  // modes advances the soft modes by nearly nothing.
  const std::size_t n = positions.size();
  std::vector<double> v(n, 0.0);
  double dt = 0.02;
  const double dt_max = 0.12;
  double alpha = 0.1;
  int n_pos = 0;

  EnergyForces ef = surrogate_eval(spec, z, positions);
  for (int iter = 0; iter < max_iters; ++iter) {
    double gmax = 0.0;
    for (double fx : ef.forces) gmax = std::max(gmax, std::abs(fx));
    if (gmax < force_tol) return true;

    double p = 0.0, vnorm = 0.0, fnorm = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      p += ef.forces[i] * v[i];
      vnorm += v[i] * v[i];
      fnorm += ef.forces[i] * ef.forces[i];
    }
    vnorm = std::sqrt(vnorm);
    fnorm = std::sqrt(fnorm);

    if (p > 0.0) {
      for (std::size_t i = 0; i < n; ++i)
        v[i] = (1.0 - alpha) * v[i] + alpha * vnorm * ef.forces[i] / fnorm;
      if (++n_pos > 5) {
        dt = std::min(dt * 1.1, dt_max);
        alpha *= 0.99;
      }
    } else {
      n_pos = 0;
      dt *= 0.5;
      alpha = 0.1;
      std::fill(v.begin(), v.end(), 0.0);
    }

    for (std::size_t i = 0; i < n; ++i) {
      v[i] += dt * ef.forces[i];
      double dx = dt * v[i];
      dx = std::min(0.2, std::max(-0.2, dx));  // displacement cap
      positions[i] += dx;
    }
    ef = surrogate_eval(spec, z, positions);
  }
  return false;
}

namespace {

V3 random_unit(Rng& rng) {
  while (true) {
    V3 v{rng.normal(), rng.normal(), rng.normal()};
    const double n = norm(v);
    if (n > 1e-6) return (1.0 / n) * v;
  }
}

// One water at `center` with equilibrium internal geometry, random orientation.
void place_water(std::vector<double>& pos, V3 center, const SurrogateSpec& s, Rng& rng) {
  const V3 a = random_unit(rng);
  V3 b = random_unit(rng);
  // Orthogonalize b against a.
  const double proj = dot(a, b);
  b = b - proj * a;
  double nb = norm(b);
  while (nb < 1e-6) {
    b = random_unit(rng);
    b = b - dot(a, b) * a;
    nb = norm(b);
  }
  b = (1.0 / nb) * b;
  const double half = 0.5 * s.angle_theta0;
  const V3 h1 = center + s.bond_r0 * (std::cos(half) * a + std::sin(half) * b);
  const V3 h2 = center + s.bond_r0 * (std::cos(half) * a - std::sin(half) * b);
  for (V3 p : {center, h1, h2}) {
    pos.push_back(p.x);
    pos.push_back(p.y);
    pos.push_back(p.z);
  }
}

Cluster random_packed_cluster(const SurrogateSpec& spec, int n_waters, Rng& rng) {
  Cluster c;
  const double box = std::cbrt(40.0 * n_waters) + 1.0;
  std::vector<V3> oxygens;
  for (int m = 0; m < n_waters; ++m) {
    for (int attempt = 0;; ++attempt) {
      const V3 cand{rng.uniform(0.0, box), rng.uniform(0.0, box), rng.uniform(0.0, box)};
      bool ok = true;
      for (const V3& o : oxygens)
        if (norm(cand - o) < 2.7) {
          ok = false;
          break;
        }
      if (ok || attempt > 500) {
        oxygens.push_back(cand);
        break;
      }
    }
  }
  for (const V3& o : oxygens) {
    place_water(c.positions, o, spec, rng);
    c.atomic_numbers.insert(c.atomic_numbers.end(), {8, 1, 1});
  }
  return c;
}

}  // namespace

ClusterSet generate_minima(const SurrogateSpec& spec, std::span<const int> sizes, int count,
                           std::uint64_t seed) {
  spec.validate();
  if (sizes.empty() || count < 1)
    throw std::invalid_argument("generate_minima: need sizes and a positive count");
  for (int s : sizes)
    if (s < 2 || s > 25)
      throw std::invalid_argument("generate_minima: sizes must lie in [2, 25]");

  ClusterSet set;
  set.tags["tag"] = "minima";
  set.tags["pes"] = "A";
  int discarded = 0;
  int attempt = 0;
  while (set.size() < count) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(attempt)));
    const int n_waters = sizes[static_cast<std::size_t>(attempt) % sizes.size()];
    ++attempt;
    Cluster c = random_packed_cluster(spec, n_waters, rng);
    if (!relax_on_surface(spec, c.atomic_numbers, c.positions, 1e-4, 20000)) {
      ++discarded;
      continue;
    }
    const double e = surrogate_energy(spec, c.atomic_numbers, c.positions);
    if (!(e < 0.0)) {
      ++discarded;
      continue;
    }
    c.energy = e;
    set.clusters.push_back(std::move(c));
    if (attempt > 20 * count + 100)
      throw std::runtime_error("generate_minima: excessive discard rate");
  }
  set.tags["generator.discarded"] = std::to_string(discarded);
  return set;
}

ClusterSet generate_nonminima(const SurrogateSpec& spec, const ClusterSet& minima,
                              double temperature, int steps, std::uint64_t seed) {
  spec.validate();
  if (minima.empty()) throw std::invalid_argument("generate_nonminima: empty minima set");
  if (steps < 8) throw std::invalid_argument("generate_nonminima: need at least 8 steps");

  const SurrogateProvider provider(spec, Surface::A);
  ClusterSet set;
  set.tags["tag"] = "nonminima";
  set.tags["pes"] = "A";
  int skipped = 0;

  MDConfig cfg;
  cfg.n_steps = steps;
  cfg.temperature = temperature;
  cfg.mode = Ensemble::NVT;
  cfg.snapshot_stride = std::max(1, steps / 8);

  for (int i = 0; i < minima.size(); ++i) {
    MDConfig run_cfg = cfg;
    run_cfg.seed = derive_seed(seed, static_cast<std::uint64_t>(i));
    const Trajectory traj = run_md(provider, minima.clusters[static_cast<std::size_t>(i)], run_cfg);
    if (traj.truncated) {
      ++skipped;
      continue;
    }
    for (const auto& frame : traj.frames) {
      if (frame.step < steps / 2) continue;  // burn-in
      Cluster c;
      c.atomic_numbers = traj.atomic_numbers;
      c.positions = frame.positions;
      c.energy = frame.energy;
      c.forces = frame.forces;
      set.clusters.push_back(std::move(c));
    }
  }
  if (set.empty()) throw std::runtime_error("generate_nonminima: all runs unstable");
  set.tags["generator.skipped"] = std::to_string(skipped);
  return set;
}

ClusterSet relabel_pes_b(const SurrogateSpec& spec, const ClusterSet& set) {
  ClusterSet out;
  out.tags = set.tags;
  out.tags["pes"] = "B";
  for (const auto& c : set.clusters) {
    Cluster nc;
    nc.atomic_numbers = c.atomic_numbers;
    nc.positions = c.positions;
    nc.energy = pes_b_energy(spec, c.atomic_numbers, c.positions);
    out.clusters.push_back(std::move(nc));
  }
  return out;
}

}  // namespace nnpforge
