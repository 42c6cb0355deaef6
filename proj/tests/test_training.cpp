// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "nnpforge/random.hpp"
#include "nnpforge/surrogate.hpp"
#include "nnpforge/training.hpp"
#include "support/fixtures.hpp"

using namespace nnpforge;

namespace {

// Small labeled dataset from the surrogate.
ClusterSet labeled_set(int n, std::uint64_t seed, bool with_forces) {
  SurrogateSpec spec;
  ClusterSet set;
  set.tags["tag"] = "test-data";
  for (int i = 0; i < n; ++i) {
    Cluster c = fixtures::random_water_cluster(2 + i % 2, seed + static_cast<std::uint64_t>(i));
    const EnergyForces ef = surrogate_eval(spec, c.atomic_numbers, c.positions);
    c.energy = ef.energy;
    if (with_forces) c.forces = ef.forces;
    set.clusters.push_back(std::move(c));
  }
  return set;
}

ModelParams nudged_params(std::uint64_t seed) {
  ModelParams p = init_params(fixtures::small_model(), seed);
  Rng rng(seed + 1);
  visit_params(p, [&](const std::string&, Tensor& t) {
    for (auto& x : t.v) x += 0.05 * rng.uniform(-1.0, 1.0);
  });
  return p;
}

}  // namespace

TEST_CASE("compute_loss spec examples") {
  const ModelParams p = nudged_params(1);
  ClusterSet set = labeled_set(1, 10, true);
  const Cluster& c = set.clusters[0];

  SUBCASE("predictions equal targets gives zero loss") {
    Cluster exact = c;
    exact.energy = predict_energy(p, c);
    exact.forces = forces(p, c);
    const Cluster arr[] = {exact};
    LossConfig cfg;
    cfg.force_weight = 0.5;
    cfg.energy_weight = 0.5;
    const LossResult r = compute_loss(p, batch_clusters(arr), cfg);
    CHECK(r.total == doctest::Approx(0.0).epsilon(1e-15));
  }

  SUBCASE("force_weight zero reduces to pure energy loss") {
    const Cluster arr[] = {c};
    LossConfig cfg;  // defaults: ew=1, fw=0, MSE, per-cluster
    const LossResult r = compute_loss(p, batch_clusters(arr), cfg);
    const double res = predict_energy(p, c) - *c.energy;
    CHECK(r.total == doctest::Approx(res * res).epsilon(1e-12));
    CHECK(r.force_term == 0.0);
  }

  SUBCASE("single cluster with residual 2 gives MSE 4") {
    Cluster shiftedc = c;
    shiftedc.energy = predict_energy(p, c) - 2.0;  // prediction - target = +2
    const Cluster arr[] = {shiftedc};
    LossConfig cfg;
    const LossResult r = compute_loss(p, batch_clusters(arr), cfg);
    CHECK(r.total == doctest::Approx(4.0).epsilon(1e-12));
  }

  SUBCASE("missing force targets with force_weight > 0 is an error") {
    Cluster no_forces = c;
    no_forces.forces.reset();
    const Cluster arr[] = {no_forces};
    LossConfig cfg;
    cfg.force_weight = 1.0;
    CHECK_THROWS_AS(compute_loss(p, batch_clusters(arr), cfg), std::invalid_argument);
  }
}

TEST_CASE("adam_step properties") {
  ModelParams p = nudged_params(2);
  AdamConfig acfg;
  acfg.lr = 1e-3;
  OptimizerState state = OptimizerState::fresh(p, acfg);

  SUBCASE("zero gradient leaves parameters unchanged") {
    ParamGradients g;
    visit_params(p, [&](const std::string& n, const Tensor& t) {
      g.names.push_back(n);
      g.tensors.emplace_back(t.rows, t.cols);
    });
    const ModelParams before = p;
    adam_step(state, p, g);
    bool unchanged = true;
    std::size_t slot = 0;
    visit_params(before, [&](const std::string&, const Tensor& t) {
      std::size_t s2 = 0;
      visit_params(p, [&](const std::string&, const Tensor& t2) {
        if (s2 == slot && t.v != t2.v) unchanged = false;
        ++s2;
      });
      ++slot;
    });
    CHECK(unchanged);
    CHECK(state.step == 1);
  }

  SUBCASE("constant gradient: step magnitude approaches lr (scalar oracle)") {
    // Independent scalar Adam simulation.
    const double g = 0.37;
    double m = 0, v = 0, theta = 1.0;
    double last_step = 0;
    for (int t = 1; t <= 200; ++t) {
      m = 0.9 * m + 0.1 * g;
      v = 0.999 * v + 0.001 * g * g;
      const double mhat = m / (1 - std::pow(0.9, t));
      const double vhat = v / (1 - std::pow(0.999, t));
      const double step = 1e-3 * mhat / (std::sqrt(vhat) + 1e-8);
      theta -= step;
      last_step = step;
    }
    CHECK(std::abs(last_step) == doctest::Approx(1e-3).epsilon(1e-3));

    // The library produces the same trajectory on a one-parameter view.
    ModelParams q = p;
    OptimizerState s2 = OptimizerState::fresh(q, acfg);
    double lib_first_param_before = q.embedding.v[0];
    for (int t = 0; t < 200; ++t) {
      ParamGradients grads;
      visit_params(q, [&](const std::string& n, const Tensor& tt) {
        grads.names.push_back(n);
        Tensor gt(tt.rows, tt.cols);
        if (n == "embedding") gt.v[0] = g;
        grads.tensors.push_back(std::move(gt));
      });
      adam_step(s2, q, grads);
    }
    const double moved = lib_first_param_before - q.embedding.v[0];
    CHECK(moved == doctest::Approx(theta == 1.0 ? 0.0 : (1.0 - theta)).epsilon(1e-10));
    CHECK(s2.step == 200);
  }

  SUBCASE("NaN gradients raise NumericalError") {
    ParamGradients g;
    visit_params(p, [&](const std::string& n, const Tensor& t) {
      g.names.push_back(n);
      Tensor gt(t.rows, t.cols);
      if (g.tensors.empty()) gt.v[0] = std::nan("");
      g.tensors.push_back(std::move(gt));
    });
    CHECK_THROWS_AS(adam_step(state, p, g), NumericalError);
  }
}

TEST_CASE("one adam step at small lr reduces a single-sample loss") {
  const ClusterSet set = labeled_set(1, 21, false);
  const Cluster arr[] = {set.clusters[0]};
  const Batch batch = batch_clusters(arr);
  ModelParams p = nudged_params(3);
  LossConfig cfg;

  const double before = compute_loss(p, batch, cfg).total;
  AdamConfig acfg;
  acfg.lr = 1e-5;
  OptimizerState state = OptimizerState::fresh(p, acfg);
  const LossAndGrads lg = loss_and_gradients(p, batch, cfg);
  adam_step(state, p, lg.grads);
  const double after = compute_loss(p, batch, cfg).total;
  CHECK(after < before);
}

TEST_CASE("train: determinism, warm start, provenance") {
  const ClusterSet data = labeled_set(24, 100, false);
  const SplitIndices split = split_dataset(data, {0.7, 0.2, 0.1}, 5);
  LossConfig loss;
  TrainSchedule sched;
  sched.max_epochs = 4;
  sched.batch_size = 8;
  sched.lr = 1e-3;
  sched.seed = 17;

  const ScratchInit init{fixtures::small_model(), 17};
  const Checkpoint a = train(data, split, InitSpec(init), loss, sched, "setA");
  const Checkpoint b = train(data, split, InitSpec(init), loss, sched, "setA");

  SUBCASE("identical seeds give identical history and identical ids") {
    REQUIRE(a.history.size() == b.history.size());
    for (std::size_t i = 0; i < a.history.size(); ++i) {
      CHECK(a.history[i].train_loss == b.history[i].train_loss);
      CHECK(a.history[i].val_loss == b.history[i].val_loss);
    }
    CHECK(a.id == b.id);
    CHECK(a.provenance.kind == "scratch");
    CHECK(a.n_train == static_cast<std::int64_t>(split.train.size()));
  }

  SUBCASE("warm start: epoch-0 validation equals parent evaluation") {
    const ClusterSet data2 = labeled_set(18, 500, false);
    const SplitIndices split2 = split_dataset(data2, {0.6, 0.2, 0.2}, 9);
    TrainSchedule s2 = sched;
    s2.max_epochs = 2;
    const Checkpoint child = finetune(a, data2, split2, loss, s2, "setB");
    const double parent_val = evaluate_loss(a.params, data2, split2.validation, loss, s2.batch_size);
    CHECK(child.history[0].val_loss == doctest::Approx(parent_val).epsilon(1e-15));
    CHECK(child.provenance.kind == "pretrain");
    REQUIRE(child.provenance.lineage.size() == 1);
    CHECK(child.provenance.lineage[0] == a.id);

    // Lineage chain grows by one per finetune generation.
    const Checkpoint grandchild = finetune(child, data2, split2, loss, s2, "setB");
    CHECK(grandchild.provenance.lineage.size() == 2);
  }

  SUBCASE("zero-epoch finetune returns parent parameters") {
    TrainSchedule s0 = sched;
    s0.max_epochs = 0;
    const Checkpoint same = finetune(a, data, split, loss, s0, "setA");
    bool identical = true;
    std::size_t slot = 0;
    std::vector<const Tensor*> parent_tensors;
    visit_params(a.params,
                 [&](const std::string&, const Tensor& t) { parent_tensors.push_back(&t); });
    visit_params(same.params, [&](const std::string&, const Tensor& t) {
      if (t.v != parent_tensors[slot]->v) identical = false;
      ++slot;
    });
    CHECK(identical);
  }
}

TEST_CASE("training loss decreases on a learnable problem") {
  SurrogateSpec spec;
  const int sizes[] = {2, 3};
  const ClusterSet data = generate_minima(spec, sizes, 60, 42);
  const SplitIndices split = split_dataset(data, {0.7, 0.2, 0.1}, 2);
  LossConfig loss;
  TrainSchedule sched;
  sched.max_epochs = 40;
  sched.batch_size = 16;
  sched.lr = 3e-3;
  sched.seed = 4;
  const Checkpoint c =
      train(data, split, InitSpec(ScratchInit{fixtures::small_model(), 4}), loss, sched, "x");
  CHECK(c.history.back().epoch >= 1);
  const double first = c.history.front().val_loss;
  double best = first;
  for (const auto& h : c.history) best = std::min(best, h.val_loss);
  CHECK(best < 0.5 * first);
}

TEST_CASE("checkpoint save/load round-trip is bit-exact") {
  const ClusterSet data = labeled_set(16, 300, false);
  const SplitIndices split = split_dataset(data, {0.6, 0.2, 0.2}, 3);
  LossConfig loss;
  TrainSchedule sched;
  sched.max_epochs = 2;
  sched.batch_size = 8;
  sched.seed = 8;
  const Checkpoint c =
      train(data, split, InitSpec(ScratchInit{fixtures::small_model(), 8}), loss, sched, "tag1");

  save_checkpoint(c, "ckpt_roundtrip.nnpf");
  const Checkpoint r = load_checkpoint("ckpt_roundtrip.nnpf");

  // Bit-identical parameters -> bit-identical evaluation.
  const Cluster probe = fixtures::random_water_cluster(2, 1234);
  CHECK(predict_energy(c.params, probe) == predict_energy(r.params, probe));
  CHECK(r.id == c.id);
  CHECK(r.dataset_tag == "tag1");
  CHECK(r.provenance.kind == "scratch");
  REQUIRE(r.optimizer.has_value());
  CHECK(r.optimizer->step == c.optimizer->step);
  REQUIRE(r.history.size() == c.history.size());
  CHECK(r.history.back().val_loss == c.history.back().val_loss);

  // Re-serialization reproduces the file byte for byte.
  const auto bytes1 = serialize_checkpoint(c);
  const auto bytes2 = serialize_checkpoint(r);
  CHECK(bytes1 == bytes2);
}

TEST_CASE("checkpoint load rejects corruption") {
  const ClusterSet data = labeled_set(16, 300, false);
  const SplitIndices split = split_dataset(data, {0.6, 0.2, 0.2}, 3);
  LossConfig loss;
  TrainSchedule sched;
  sched.max_epochs = 1;
  sched.batch_size = 8;
  const Checkpoint c =
      train(data, split, InitSpec(ScratchInit{fixtures::small_model(), 8}), loss, sched, "t");
  auto bytes = serialize_checkpoint(c);

  SUBCASE("corrupted magic") {
    bytes[0] = 'X';
    CHECK_THROWS_WITH_AS(deserialize_checkpoint(bytes), doctest::Contains("magic"),
                         std::runtime_error);
  }
  SUBCASE("version mismatch") {
    bytes[4] = 99;
    CHECK_THROWS_WITH_AS(deserialize_checkpoint(bytes), doctest::Contains("version"),
                         std::runtime_error);
  }
  SUBCASE("truncated file") {
    bytes.resize(bytes.size() / 2);
    CHECK_THROWS_AS(deserialize_checkpoint(bytes), std::runtime_error);
  }
}

TEST_CASE("history csv has the documented header") {
  Checkpoint c;
  c.params = init_params(fixtures::small_model(), 1);
  c.history = {{0, 1.0, 2.0, 1e-3}, {1, 0.5, 1.5, 1e-3}};
  c.id = "deadbeef";
  write_history_csv(c, "history_test.csv");
  std::ifstream in("history_test.csv");
  std::string line;
  std::getline(in, line);
  CHECK(line == "epoch,train_loss,val_loss,lr");
  int rows = 0;
  while (std::getline(in, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 2);
}

TEST_CASE("divergence aborts with diagnostics and preserves the best checkpoint") {
  // A degenerate geometry (coincident atoms) produces a zero pair distance
  // whose reverse pass is singular: the force loss turns NaN and training
  // must abort rather than continue on garbage.
  ClusterSet data = labeled_set(16, 700, true);
  Cluster degenerate = data.clusters[0];
  for (int k = 0; k < 3; ++k)
    degenerate.positions[static_cast<std::size_t>(3 + k)] = degenerate.positions[static_cast<std::size_t>(k)];
  data.clusters.push_back(degenerate);

  SplitIndices split;
  for (int i = 0; i < 12; ++i) split.train.push_back(i);
  split.train.push_back(16);  // the degenerate sample
  for (int i = 12; i < 14; ++i) split.validation.push_back(i);
  for (int i = 14; i < 16; ++i) split.test.push_back(i);

  LossConfig loss;
  loss.energy_weight = 0.01;
  loss.force_weight = 0.99;
  TrainSchedule sched;
  sched.max_epochs = 5;
  sched.batch_size = 4;
  sched.lr = 1e-3;
  sched.seed = 1;
  try {
    train(data, split, InitSpec(ScratchInit{fixtures::small_model(), 1}), loss, sched, "t");
    FAIL("expected TrainingDiverged");
  } catch (const TrainingDiverged& e) {
    CHECK(std::string(e.what()).find("epoch") != std::string::npos);
    REQUIRE(e.best.has_value());
    CHECK(e.best->history.size() >= 1);
  }
}
