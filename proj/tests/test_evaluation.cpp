// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "nnpforge/evaluation.hpp"
#include "nnpforge/random.hpp"
#include "nnpforge/surrogate.hpp"
#include "support/fixtures.hpp"

using namespace nnpforge;

TEST_CASE("e_h2o_error basics") {
  CHECK(e_h2o_error(-9.5, -10.0, 5) == doctest::Approx(0.1));
  CHECK(e_h2o_error(-10.0, -10.0, 5) == 0.0);
  CHECK(e_h2o_error(-10.5, -10.0, 5) == doctest::Approx(e_h2o_error(-9.5, -10.0, 5)));
  CHECK_THROWS_AS(e_h2o_error(1.0, 1.0, 0), std::invalid_argument);
}

TEST_CASE("f_mag_error basics") {
  const double f[3] = {1.0, 0.0, 0.0};
  const double f2[3] = {2.0, 0.0, 0.0};
  CHECK(f_mag_error(f, f) == 0.0);
  CHECK(f_mag_error(f2, f) == doctest::Approx(1.0));
  // A rotation preserves the norm.
  const double fr[3] = {0.0, 1.0, 0.0};
  CHECK(f_mag_error(fr, f) == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("f_ang_error basics and degenerate handling") {
  const double f[3] = {1.0, 2.0, -0.5};
  const double fneg[3] = {-1.0, -2.0, 0.5};
  const double fperp[3] = {2.0, -1.0, 0.0};
  CHECK(*f_ang_error(f, f) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(*f_ang_error(fneg, f) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(*f_ang_error(fperp, f) == doctest::Approx(0.5).epsilon(1e-12));

  // Numerically parallel vectors survive the arccos clamp.
  const double fa[3] = {1.0, 1.0, 1.0};
  const double fb[3] = {1.0 + 1e-16, 1.0, 1.0};
  const auto ang = f_ang_error(fa, fb);
  REQUIRE(ang.has_value());
  CHECK(std::isfinite(*ang));
  CHECK(*ang >= 0.0);

  // Zero-norm input is excluded rather than silently zero.
  const double zero[3] = {0.0, 0.0, 0.0};
  CHECK_FALSE(f_ang_error(zero, f).has_value());
  CHECK_FALSE(f_ang_error(f, zero).has_value());
}

TEST_CASE("f_ang is symmetric and bounded on random pairs") {
  Rng rng(12);
  for (int i = 0; i < 300; ++i) {
    double a[3], b[3];
    for (int k = 0; k < 3; ++k) {
      a[k] = rng.uniform(-3.0, 3.0);
      b[k] = rng.uniform(-3.0, 3.0);
    }
    const auto ab = f_ang_error(a, b);
    const auto ba = f_ang_error(b, a);
    REQUIRE(ab.has_value());
    CHECK(*ab >= 0.0);
    CHECK(*ab <= 1.0);
    CHECK(*ab == doctest::Approx(*ba).epsilon(1e-12));

    // Triangle-style bound on the magnitude error.
    const double norm_diff = std::sqrt((a[0] - b[0]) * (a[0] - b[0]) +
                                       (a[1] - b[1]) * (a[1] - b[1]) +
                                       (a[2] - b[2]) * (a[2] - b[2]));
    CHECK(std::abs(f_mag_error(a, b)) <= norm_diff + 1e-12);
  }
}

namespace {

// Labeled test set plus "model" predictions with controlled errors.
struct EvalFixture {
  ClusterSet set;
  std::vector<double> e_pred;
  std::vector<std::vector<double>> f_pred;
};

EvalFixture controlled_fixture() {
  SurrogateSpec spec;
  EvalFixture fx;
  Rng rng(31);
  for (int i = 0; i < 6; ++i) {
    Cluster c = fixtures::random_water_cluster(2 + i % 2, 400 + static_cast<std::uint64_t>(i));
    const EnergyForces ef = surrogate_eval(spec, c.atomic_numbers, c.positions);
    c.energy = ef.energy;
    c.forces = ef.forces;
    fx.e_pred.push_back(ef.energy + 0.1 * (i + 1));
    std::vector<double> fp = ef.forces;
    for (auto& x : fp) x += rng.uniform(-0.2, 0.2);
    fx.f_pred.push_back(std::move(fp));
    fx.set.clusters.push_back(std::move(c));
  }
  return fx;
}

}  // namespace

TEST_CASE("evaluate_predictions perfect oracle gives zero metrics") {
  EvalFixture fx = controlled_fixture();
  std::vector<double> exact_e;
  std::vector<std::vector<double>> exact_f;
  for (const auto& c : fx.set.clusters) {
    exact_e.push_back(*c.energy);
    exact_f.push_back(*c.forces);
  }
  const MetricsReport r = evaluate_predictions(exact_e, &exact_f, fx.set, "perfect");
  CHECK(r.e_mae == 0.0);
  CHECK(r.e_rmse == 0.0);
  REQUIRE(r.force.has_value());
  CHECK(r.force->mag_mean_abs == 0.0);
  // acos(1 - 1ulp)/pi is ~5e-9, the arccos resolution floor at exact equality.
  CHECK(r.force->ang_mean == doctest::Approx(0.0).epsilon(1e-8).scale(1.0));
  CHECK(r.force->undefined_angles == 0);
}

TEST_CASE("evaluate_predictions equals a hand-computed spreadsheet on 3 clusters") {
  // Known energies, two waters each, fixed prediction offsets.
  ClusterSet set;
  for (int i = 0; i < 3; ++i) {
    Cluster c = fixtures::random_water_cluster(2, 500 + static_cast<std::uint64_t>(i));
    c.energy = -10.0 * (i + 1);
    set.clusters.push_back(c);
  }
  const std::vector<double> pred = {-9.0, -20.5, -31.0};  // errors: 1.0, 0.5, 1.0
  const MetricsReport r = evaluate_predictions(pred, nullptr, set, "hand");
  // Per-water errors: 0.5, 0.25, 0.5.
  CHECK(r.e_mae == doctest::Approx((0.5 + 0.25 + 0.5) / 3.0).epsilon(1e-12));
  CHECK(r.e_rmse ==
        doctest::Approx(std::sqrt((0.25 + 0.0625 + 0.25) / 3.0)).epsilon(1e-12));
  CHECK_FALSE(r.force.has_value());
  CHECK(r.n_samples == 3);
}

TEST_CASE("evaluate_predictions equals a brute-force single-sample loop") {
  EvalFixture fx = controlled_fixture();
  const MetricsReport r = evaluate_predictions(fx.e_pred, &fx.f_pred, fx.set, "x");

  double mae = 0.0, rmse = 0.0;
  std::vector<double> mags, angs;
  for (int i = 0; i < fx.set.size(); ++i) {
    const Cluster& c = fx.set.clusters[static_cast<std::size_t>(i)];
    const double err = std::abs(fx.e_pred[static_cast<std::size_t>(i)] - *c.energy) / c.n_waters();
    mae += err;
    rmse += err * err;
    for (int a = 0; a < c.n_atoms(); ++a) {
      const double* fp = fx.f_pred[static_cast<std::size_t>(i)].data() + 3 * a;
      const double* ft = c.forces->data() + 3 * a;
      const double np = std::sqrt(fp[0] * fp[0] + fp[1] * fp[1] + fp[2] * fp[2]);
      const double nt = std::sqrt(ft[0] * ft[0] + ft[1] * ft[1] + ft[2] * ft[2]);
      mags.push_back(np - nt);
      const double dot = (fp[0] * ft[0] + fp[1] * ft[1] + fp[2] * ft[2]) / (np * nt);
      angs.push_back(std::acos(std::min(1.0, std::max(-1.0, dot))) / 3.14159265358979323846);
    }
  }
  mae /= fx.set.size();
  rmse = std::sqrt(rmse / fx.set.size());
  double mag_abs = 0.0, ang_mean = 0.0;
  for (double m : mags) mag_abs += std::abs(m);
  for (double a : angs) ang_mean += a;
  mag_abs /= static_cast<double>(mags.size());
  ang_mean /= static_cast<double>(angs.size());

  CHECK(r.e_mae == doctest::Approx(mae).epsilon(1e-12));
  CHECK(r.e_rmse == doctest::Approx(rmse).epsilon(1e-12));
  REQUIRE(r.force.has_value());
  CHECK(r.force->mag_mean_abs == doctest::Approx(mag_abs).epsilon(1e-12));
  CHECK(r.force->ang_mean == doctest::Approx(ang_mean).epsilon(1e-12));
}

TEST_CASE("evaluate_model is invariant to test-set shuffling") {
  SurrogateSpec spec;
  ModelParams p = init_params(fixtures::small_model(), 3);
  Rng rng(44);
  visit_params(p, [&](const std::string&, Tensor& t) {
    for (auto& x : t.v) x += 0.05 * rng.uniform(-1.0, 1.0);
  });
  ClusterSet set;
  for (int i = 0; i < 8; ++i) {
    Cluster c = fixtures::random_water_cluster(2, 600 + static_cast<std::uint64_t>(i));
    const EnergyForces ef = surrogate_eval(spec, c.atomic_numbers, c.positions);
    c.energy = ef.energy;
    c.forces = ef.forces;
    set.clusters.push_back(std::move(c));
  }
  ClusterSet shuffled = set;
  std::reverse(shuffled.clusters.begin(), shuffled.clusters.end());

  EvalOptions opts;
  opts.tag = "t";
  const MetricsReport a = evaluate_model(p, set, opts);
  const MetricsReport b = evaluate_model(p, shuffled, opts);
  CHECK(a.e_mae == doctest::Approx(b.e_mae).epsilon(1e-10));
  CHECK(a.e_rmse == doctest::Approx(b.e_rmse).epsilon(1e-10));
  CHECK(a.force->mag_mean_abs == doctest::Approx(b.force->mag_mean_abs).epsilon(1e-10));
  CHECK(a.force->ang_mean == doctest::Approx(b.force->ang_mean).epsilon(1e-10));
  CHECK(a.force->ang_median == doctest::Approx(b.force->ang_median).epsilon(1e-12));
}

TEST_CASE("evaluate_model rejects an empty test set") {
  const ModelParams p = init_params(fixtures::small_model(), 3);
  EvalOptions opts;
  CHECK_THROWS_AS(evaluate_model(p, ClusterSet{}, opts), std::invalid_argument);
}

TEST_CASE("energy_histogram spec examples") {
  SUBCASE("all equal values land in one bin") {
    const std::vector<double> v(17, 3.25);
    const Histogram h = energy_histogram(v, {3.0, 4.0, 10});
    std::int64_t total = 0;
    int nonzero = 0;
    for (std::int64_t c : h.counts) {
      total += c;
      if (c > 0) ++nonzero;
    }
    CHECK(total == 17);
    CHECK(nonzero == 1);
  }
  SUBCASE("counts always sum to the sample count") {
    Rng rng(5);
    std::vector<double> v;
    for (int i = 0; i < 257; ++i) v.push_back(rng.uniform(-12.0, 2.0));
    const Histogram h = energy_histogram(v, {-10.0, 0.0, 25});  // some out of range
    std::int64_t total = 0;
    for (std::int64_t c : h.counts) total += c;
    CHECK(total == 257);
  }
  SUBCASE("shifting by whole bins shifts the histogram") {
    Rng rng(6);
    std::vector<double> v;
    for (int i = 0; i < 100; ++i) v.push_back(rng.uniform(1.0, 3.0));
    const HistogramSpec spec{0.0, 4.0, 16};
    const double width = (spec.hi - spec.lo) / spec.bins;
    const Histogram h1 = energy_histogram(v, spec);
    std::vector<double> shifted;
    for (double x : v) shifted.push_back(x + 2.0 * width);
    const Histogram h2 = energy_histogram(shifted, spec);
    for (int b = 0; b + 2 < spec.bins; ++b)
      CHECK(h2.counts[static_cast<std::size_t>(b + 2)] ==
            h1.counts[static_cast<std::size_t>(b)]);
  }
}

TEST_CASE("metrics JSON round-trip and histogram CSV shape") {
  EvalFixture fx = controlled_fixture();
  MetricsReport r = evaluate_predictions(fx.e_pred, &fx.f_pred, fx.set, "tagged");
  r.model_id = "abc123";
  r.initialization = "pretrain";
  r.n_train = 4242;
  std::vector<double> per_water = {-9.0, -9.5, -10.0, -10.5};
  r.pred_hist = energy_histogram(per_water, {-11.0, -8.0, 6});

  const MetricsReport back = metrics_from_json(metrics_to_json(r));
  CHECK(back.e_mae == r.e_mae);
  CHECK(back.e_rmse == r.e_rmse);
  CHECK(back.model_id == "abc123");
  CHECK(back.initialization == "pretrain");
  CHECK(back.n_train == 4242);
  REQUIRE(back.force.has_value());
  CHECK(back.force->ang_median == r.force->ang_median);
  REQUIRE(back.pred_hist.has_value());
  CHECK(back.pred_hist->counts == r.pred_hist->counts);

  const std::string csv = histogram_to_csv(*r.pred_hist);
  CHECK(csv.substr(0, 25) == "bin_left,bin_right,count\n");
  int lines = 0;
  for (char ch : csv)
    if (ch == '\n') ++lines;
  CHECK(lines == 7);  // header + 6 bins
}

TEST_CASE("comparison markdown has the table layout") {
  MetricsReport a;
  a.e_mae = 0.1316;
  a.initialization = "pretrain";
  a.n_train = 11600;
  a.test_tag = "nonminima";
  ForceMetrics fm;
  fm.mag_mean_abs = 8.94;
  fm.ang_mean = 0.098;
  a.force = fm;
  MetricsReport b;
  b.e_mae = 0.3548;
  b.initialization = "scratch";
  b.n_train = 11800;
  b.test_tag = "nonminima";

  const MetricsReport rows[] = {a, b};
  const std::string md = comparison_markdown(rows, "hosty");
  CHECK(md.find("| Initialization |") != std::string::npos);
  CHECK(md.find("| hosty | nonminima | pretrain | 11600 | 0.1316 | 8.9400 | 0.0980 |") !=
        std::string::npos);
  CHECK(md.find("| hosty | nonminima | scratch | 11800 | 0.3548 | - | - |") != std::string::npos);
}
