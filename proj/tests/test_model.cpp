// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "nnpforge/model.hpp"
#include "nnpforge/random.hpp"
#include "nnpforge/training.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace nnpforge;

namespace {

Batch one_cluster_batch(const Cluster& c) {
  const Cluster arr[] = {c};
  return batch_clusters(arr);
}

}  // namespace

TEST_CASE("shifted_softplus values") {
  CHECK(shifted_softplus(0.0) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(shifted_softplus(-50.0) == doctest::Approx(-std::log(2.0)).epsilon(1e-12));
  CHECK(shifted_softplus(100.0) == doctest::Approx(100.0 - std::log(2.0)).epsilon(1e-12));
  CHECK(shifted_softplus(1.3) == doctest::Approx(std::log(0.5 * std::exp(1.3) + 0.5)));
}

TEST_CASE("rbf_expand centers, symmetry, bounds") {
  ModelConfig cfg = fixtures::small_model();
  const double spacing = cfg.cutoff / (cfg.n_rbf - 1);

  SUBCASE("exact center gives 1") {
    for (int k : {0, 3, cfg.n_rbf - 1}) {
      const auto v = rbf_expand(spacing * k, cfg);
      CHECK(v[static_cast<std::size_t>(k)] == doctest::Approx(1.0).epsilon(1e-15));
    }
  }
  SUBCASE("midpoint between adjacent centers is symmetric") {
    const auto v = rbf_expand(spacing * 2.5, cfg);
    CHECK(v[2] == doctest::Approx(v[3]).epsilon(1e-12));
  }
  SUBCASE("all elements in (0, 1]") {
    for (double d : {0.0, 1.7, 4.4, cfg.cutoff}) {
      for (double x : rbf_expand(d, cfg)) {
        CHECK(x > 0.0);
        CHECK(x <= 1.0);
      }
    }
  }
}

TEST_CASE("init_params determinism and validation") {
  const ModelConfig cfg = fixtures::small_model();
  const ModelParams a = init_params(cfg, 42);
  const ModelParams b = init_params(cfg, 42);
  const ModelParams c = init_params(cfg, 43);

  bool identical = true;
  bool differs = false;
  visit_params(a, [&](const std::string& name, const Tensor& ta) {
    visit_params(b, [&](const std::string& nb, const Tensor& tb) {
      if (name == nb && ta.v != tb.v) identical = false;
    });
    visit_params(c, [&](const std::string& nc, const Tensor& tc) {
      if (name == nc && ta.v != tc.v) differs = true;
    });
  });
  CHECK(identical);
  CHECK(differs);

  ModelConfig bad = cfg;
  bad.n_interactions = 0;
  CHECK_THROWS_AS(init_params(bad, 1), std::invalid_argument);
}

TEST_CASE("initial energies equal the configured offset exactly") {
  ModelConfig cfg = fixtures::small_model();
  cfg.energy_offset = -2.5;
  const ModelParams p = init_params(cfg, 7);
  const Cluster c = fixtures::random_water_cluster(2, 3);
  CHECK(predict_energy(p, c) == doctest::Approx(-2.5 * 6).epsilon(1e-12));
}

TEST_CASE("energy invariance under permutation, translation, rotation") {
  const ModelParams p = init_params(fixtures::small_model(), 5);
  // Put some signal in the readout so the test is not about zeros.
  ModelParams trained = p;
  Rng rng(99);
  visit_params(trained, [&](const std::string&, Tensor& t) {
    for (auto& x : t.v) x += 0.05 * rng.uniform(-1.0, 1.0);
  });

  const Cluster c = fixtures::random_water_cluster(3, 17);
  const double e0 = predict_energy(trained, c);
  CHECK(std::abs(e0) > 1e-6);  // non-trivial baseline

  SUBCASE("permutation of whole molecules") {
    Cluster swapped;
    for (int m : {2, 1, 0})
      for (int a = 0; a < 3; ++a) {
        swapped.atomic_numbers.push_back(c.atomic_numbers[static_cast<std::size_t>(3 * m + a)]);
        for (int d = 0; d < 3; ++d)
          swapped.positions.push_back(c.positions[static_cast<std::size_t>(9 * m + 3 * a + d)]);
      }
    const double e1 = predict_energy(trained, swapped);
    CHECK(e1 == doctest::Approx(e0).epsilon(1e-10));
  }
  SUBCASE("rigid translation") {
    Cluster moved = c;
    for (std::size_t i = 0; i < moved.positions.size(); i += 3) {
      moved.positions[i] += 13.7;
      moved.positions[i + 1] -= 4.2;
      moved.positions[i + 2] += 0.9;
    }
    CHECK(predict_energy(trained, moved) == doctest::Approx(e0).epsilon(1e-10));
  }
  SUBCASE("rigid rotation") {
    double r[9];
    fixtures::rotation_matrix(1.0, -2.0, 0.5, 1.1, r);
    Cluster rot = c;
    rot.positions = fixtures::rotate_positions(c.positions, r);
    CHECK(predict_energy(trained, rot) == doctest::Approx(e0).epsilon(1e-10));
  }
}

TEST_CASE("forces: equivariance, zero net force, zero net torque") {
  ModelParams p = init_params(fixtures::small_model(), 21);
  Rng rng(5);
  visit_params(p, [&](const std::string&, Tensor& t) {
    for (auto& x : t.v) x += 0.05 * rng.uniform(-1.0, 1.0);
  });
  const Cluster c = fixtures::random_water_cluster(3, 8);
  const std::vector<double> f = forces(p, c);

  SUBCASE("net force is zero") {
    double net[3] = {0, 0, 0};
    for (std::size_t a = 0; a < f.size() / 3; ++a)
      for (int k = 0; k < 3; ++k) net[k] += f[3 * a + static_cast<std::size_t>(k)];
    for (int k = 0; k < 3; ++k) CHECK(std::abs(net[k]) < 1e-8);
  }
  SUBCASE("net torque is zero") {
    double torque[3] = {0, 0, 0};
    for (std::size_t a = 0; a < f.size() / 3; ++a) {
      const double* r = &c.positions[3 * a];
      const double* fa = &f[3 * a];
      torque[0] += r[1] * fa[2] - r[2] * fa[1];
      torque[1] += r[2] * fa[0] - r[0] * fa[2];
      torque[2] += r[0] * fa[1] - r[1] * fa[0];
    }
    for (int k = 0; k < 3; ++k) CHECK(std::abs(torque[k]) < 1e-8);
  }
  SUBCASE("forces rotate with the configuration") {
    double r[9];
    fixtures::rotation_matrix(0.3, 1.0, -0.7, 0.8, r);
    Cluster rot = c;
    rot.positions = fixtures::rotate_positions(c.positions, r);
    const std::vector<double> f_rot = forces(p, rot);
    const std::vector<double> f_expected = fixtures::rotate_positions(f, r);
    for (std::size_t i = 0; i < f.size(); ++i)
      CHECK(std::abs(f_rot[i] - f_expected[i]) < 1e-8);
  }
}

TEST_CASE("forces match central finite differences") {
  ModelParams p = init_params(fixtures::small_model(), 33);
  Rng rng(6);
  visit_params(p, [&](const std::string&, Tensor& t) {
    for (auto& x : t.v) x += 0.05 * rng.uniform(-1.0, 1.0);
  });

  for (int trial = 0; trial < 3; ++trial) {
    Cluster c = fixtures::random_water_cluster(2, 40 + static_cast<std::uint64_t>(trial));
    const std::vector<double> f = forces(p, c);
    auto energy_of = [&](const std::vector<double>& pos) {
      Cluster probe = c;
      probe.positions = pos;
      return predict_energy(p, probe);
    };
    for (std::size_t i = 0; i < c.positions.size(); ++i) {
      const double fd = -oracles::central_difference(energy_of, c.positions, i, 1e-4);
      const double scale = std::max(1e-3, std::abs(fd));
      CHECK(std::abs(f[i] - fd) / scale < 1e-5);
    }
  }
}

TEST_CASE("param_gradients: finite differences, zero adjoint, force term") {
  ModelParams p = init_params(fixtures::small_model(), 51);
  Rng rng(14);
  visit_params(p, [&](const std::string&, Tensor& t) {
    for (auto& x : t.v) x += 0.05 * rng.uniform(-1.0, 1.0);
  });
  const Cluster c = fixtures::random_water_cluster(2, 77);
  const Batch batch = one_cluster_batch(c);

  SUBCASE("zero adjoint gives zero gradients") {
    LossAdjoint adj;
    adj.d_energy = {0.0};
    const ParamGradients g = param_gradients(p, batch, adj);
    for (const auto& t : g.tensors)
      for (double x : t.v) CHECK(x == 0.0);
  }

  SUBCASE("energy adjoint matches finite differences on sampled parameters") {
    LossAdjoint adj;
    adj.d_energy = {1.0};  // objective = E
    const ParamGradients g = param_gradients(p, batch, adj);

    Rng pick(3);
    int checked = 0;
    for (std::size_t slot = 0; slot < g.tensors.size() && checked < 20; ++slot) {
      const std::size_t n = g.tensors[slot].size();
      if (n == 0) continue;
      const std::size_t idx = static_cast<std::size_t>(pick.uniform_int(static_cast<int>(n)));
      // Perturb exactly that scalar.
      auto eval_with = [&](double delta) {
        ModelParams q = p;
        std::size_t s2 = 0;
        visit_params(q, [&](const std::string&, Tensor& t) {
          if (s2 == slot) t.v[idx] += delta;
          ++s2;
        });
        return predict_energy(q, c);
      };
      const double h = 1e-5;
      const double fd = (eval_with(h) - eval_with(-h)) / (2.0 * h);
      const double an = g.tensors[slot].v[idx];
      const double scale = std::max(1e-4, std::abs(fd));
      CHECK(std::abs(an - fd) / scale < 1e-5);
      ++checked;
    }
    CHECK(checked >= 15);
  }

  SUBCASE("adjoint shape mismatch throws") {
    LossAdjoint adj;
    adj.d_energy = {1.0, 2.0};  // batch has one cluster
    CHECK_THROWS_AS(param_gradients(p, batch, adj), std::invalid_argument);
  }
}

TEST_CASE("force-loss parameter gradients match finite differences") {
  // L = mean squared force error against fixed targets; d L/d θ goes through
  // the nested reverse pass.
  ModelParams p = init_params(fixtures::small_model(), 61);
  Rng rng(15);
  visit_params(p, [&](const std::string&, Tensor& t) {
    for (auto& x : t.v) x += 0.05 * rng.uniform(-1.0, 1.0);
  });
  Cluster c = fixtures::random_water_cluster(2, 91);
  c.energy = -3.0;
  c.forces = std::vector<double>(c.positions.size());
  Rng frng(8);
  for (auto& f : *c.forces) f = frng.uniform(-1.0, 1.0);
  const Batch batch = one_cluster_batch(c);

  LossConfig cfg;
  cfg.energy_weight = 0.0;
  cfg.force_weight = 1.0;
  const LossAndGrads lg = loss_and_gradients(p, batch, cfg);

  auto loss_of = [&](const ModelParams& q) { return compute_loss(q, batch, cfg).total; };

  Rng pick(4);
  int checked = 0;
  for (std::size_t slot = 0; slot < lg.grads.tensors.size() && checked < 20; ++slot) {
    const std::size_t n = lg.grads.tensors[slot].size();
    if (n == 0) continue;
    const std::size_t idx = static_cast<std::size_t>(pick.uniform_int(static_cast<int>(n)));
    auto eval_with = [&](double delta) {
      ModelParams q = p;
      std::size_t s2 = 0;
      visit_params(q, [&](const std::string&, Tensor& t) {
        if (s2 == slot) t.v[idx] += delta;
        ++s2;
      });
      return loss_of(q);
    };
    const double h = 1e-5;
    const double fd = (eval_with(h) - eval_with(-h)) / (2.0 * h);
    const double an = lg.grads.tensors[slot].v[idx];
    const double scale = std::max(1e-4, std::abs(fd));
    CHECK(std::abs(an - fd) / scale < 1e-4);
    ++checked;
  }
  CHECK(checked >= 15);
}

TEST_CASE("batch evaluation equals independent single-cluster evaluation") {
  ModelParams p = init_params(fixtures::small_model(), 71);
  Rng rng(16);
  visit_params(p, [&](const std::string&, Tensor& t) {
    for (auto& x : t.v) x += 0.05 * rng.uniform(-1.0, 1.0);
  });
  std::vector<Cluster> clusters;
  for (int i = 0; i < 4; ++i)
    clusters.push_back(fixtures::random_water_cluster(1 + i % 3, 200 + static_cast<std::uint64_t>(i)));
  const Batch batch = batch_clusters(clusters);
  const std::vector<double> batched = predict_energies(p, batch);
  for (std::size_t i = 0; i < clusters.size(); ++i) {
    const double single = predict_energy(p, clusters[i]);
    CHECK(batched[i] == doctest::Approx(single).epsilon(1e-10));
  }
}

TEST_CASE("energy is continuous as a pair crosses the cutoff") {
  ModelParams p = init_params(fixtures::small_model(), 81);
  Rng rng(17);
  visit_params(p, [&](const std::string&, Tensor& t) {
    for (auto& x : t.v) x += 0.05 * rng.uniform(-1.0, 1.0);
  });
  const double rc = p.config.cutoff;
  auto dimer_at = [&](double d) {
    Cluster c;
    c.atomic_numbers = {8, 1, 1, 8, 1, 1};
    c.positions = {0, 0, 0, 0.95, 0, 0, -0.3, 0.9, 0,
                   d, 0, 0, d + 0.95, 0, 0, d - 0.3, 0.9, 0};
    return predict_energy(p, c);
  };
  // The O-O pair at distance d crosses the cutoff; remaining pairs stay put.
  const double below = dimer_at(rc - 1e-6);
  const double above = dimer_at(rc + 1e-6);
  CHECK(std::abs(below - above) < 1e-6);
}

TEST_CASE("unknown element is rejected") {
  const ModelParams p = init_params(fixtures::small_model(), 3);
  Cluster c;
  c.atomic_numbers = {6};  // carbon not in {H, O} vocabulary
  c.positions = {0, 0, 0};
  CHECK_THROWS_AS(predict_energy(p, c), std::invalid_argument);
}
