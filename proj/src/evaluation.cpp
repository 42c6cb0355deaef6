// SPDX-License-Identifier: Apache-2.0
#include "nnpforge/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <json.hpp>

#include "nnpforge/constants.hpp"
#include "nnpforge/parallel.hpp"

namespace nnpforge {

using nlohmann::json;

double e_h2o_error(double e_pred, double e_true, int n_waters) {
  if (n_waters < 1) throw std::invalid_argument("e_h2o_error: n_waters must be >= 1");
  return std::abs(e_pred - e_true) / n_waters;
}

double f_mag_error(std::span<const double, 3> f_pred, std::span<const double, 3> f_true) {
  auto norm3 = [](std::span<const double, 3> v) {
    return std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
  };
  return norm3(f_pred) - norm3(f_true);
}

std::optional<double> f_ang_error(std::span<const double, 3> f_pred,
                                  std::span<const double, 3> f_true) {
  const double np = std::sqrt(f_pred[0] * f_pred[0] + f_pred[1] * f_pred[1] +
                              f_pred[2] * f_pred[2]);
  const double nt = std::sqrt(f_true[0] * f_true[0] + f_true[1] * f_true[1] +
                              f_true[2] * f_true[2]);
  if (np < 1e-12 || nt < 1e-12) return std::nullopt;
  double c = (f_pred[0] * f_true[0] + f_pred[1] * f_true[1] + f_pred[2] * f_true[2]) / (np * nt);
  c = std::min(1.0, std::max(-1.0, c));  // clamp keeps arccos NaN-free
  return std::acos(c) / units::kPi;
}

HistogramSpec spanning_spec(std::span<const double> values, int bins) {
  if (values.empty()) throw std::invalid_argument("spanning_spec: no values");
  double lo = values[0], hi = values[0];
  for (double v : values) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (hi <= lo) hi = lo + 1.0;  // degenerate all-equal input
  return {lo, hi, bins};
}

Histogram energy_histogram(std::span<const double> values, const HistogramSpec& spec) {
  if (values.empty()) throw std::invalid_argument("energy_histogram: no values");
  if (spec.bins < 1 || spec.hi <= spec.lo)
    throw std::invalid_argument("energy_histogram: bad bin spec");
  Histogram h;
  h.spec = spec;
  h.counts.assign(static_cast<std::size_t>(spec.bins), 0);
  const double width = (spec.hi - spec.lo) / spec.bins;
  for (double v : values) {
    int b = static_cast<int>(std::floor((v - spec.lo) / width));
    b = std::min(spec.bins - 1, std::max(0, b));  // clamp keeps conservation
    ++h.counts[static_cast<std::size_t>(b)];
  }
  return h;
}

namespace {

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

MetricsReport evaluate_predictions(std::span<const double> e_pred,
                                   const std::vector<std::vector<double>>* f_pred,
                                   const ClusterSet& test, const std::string& tag) {
  if (test.empty()) throw std::invalid_argument("evaluate: empty test set");
  if (static_cast<int>(e_pred.size()) != test.size())
    throw std::invalid_argument("evaluate: prediction count mismatch");

  MetricsReport r;
  r.test_tag = tag;
  r.n_samples = test.size();

  double abs_acc = 0.0, sq_acc = 0.0;
  bool any_forces = true;
  for (const auto& c : test.clusters) any_forces = any_forces && c.forces.has_value();
  if (f_pred == nullptr) any_forces = false;

  std::vector<double> mags, angs;
  std::int64_t undefined = 0, atoms = 0;

  for (int i = 0; i < test.size(); ++i) {
    const Cluster& c = test.clusters[static_cast<std::size_t>(i)];
    if (!c.energy) throw std::invalid_argument("evaluate: cluster without energy target");
    const int nw = c.n_waters();
    const double err = e_h2o_error(e_pred[static_cast<std::size_t>(i)], *c.energy, nw);
    abs_acc += err;
    sq_acc += err * err;

    if (any_forces) {
      const auto& fp = (*f_pred)[static_cast<std::size_t>(i)];
      if (fp.size() != c.forces->size())
        throw std::invalid_argument("evaluate: force prediction shape mismatch");
      for (int a = 0; a < c.n_atoms(); ++a) {
        std::span<const double, 3> pa(fp.data() + 3 * a, 3);
        std::span<const double, 3> ta(c.forces->data() + 3 * a, 3);
        mags.push_back(f_mag_error(pa, ta));
        if (auto ang = f_ang_error(pa, ta))
          angs.push_back(*ang);
        else
          ++undefined;
        ++atoms;
      }
    }
  }

  r.e_mae = abs_acc / r.n_samples;
  r.e_rmse = std::sqrt(sq_acc / r.n_samples);

  if (any_forces) {
    ForceMetrics fm;
    fm.n_atoms = atoms;
    fm.undefined_angles = undefined;
    std::vector<double> abs_mags(mags.size());
    for (std::size_t i = 0; i < mags.size(); ++i) {
      fm.mag_mean_signed += mags[i];
      abs_mags[i] = std::abs(mags[i]);
      fm.mag_mean_abs += abs_mags[i];
    }
    if (!mags.empty()) {
      fm.mag_mean_signed /= static_cast<double>(mags.size());
      fm.mag_mean_abs /= static_cast<double>(mags.size());
      fm.mag_median_abs = median_of(abs_mags);
    }
    for (double a : angs) fm.ang_mean += a;
    if (!angs.empty()) {
      fm.ang_mean /= static_cast<double>(angs.size());
      fm.ang_median = median_of(angs);
    }
    r.force = fm;
  }
  return r;
}

MetricsReport evaluate_model(const ModelParams& params, const ClusterSet& test,
                             const EvalOptions& opts) {
  if (test.empty()) throw std::invalid_argument("evaluate_model: empty test set");
  bool with_forces = true;
  for (const auto& c : test.clusters) with_forces = with_forces && c.forces.has_value();

  const int n = test.size();
  std::vector<double> e_pred(static_cast<std::size_t>(n));
  std::vector<std::vector<double>> f_pred(static_cast<std::size_t>(n));

  // Per-cluster evaluation, parallel over samples; results land by index so
  // the reduction order is fixed.
  parallel_for(n, resolve_threads(opts.threads), [&](int i) {
    const Cluster& c = test.clusters[static_cast<std::size_t>(i)];
    if (with_forces) {
      EnergyForces ef = energy_and_forces(params, c);
      e_pred[static_cast<std::size_t>(i)] = ef.energy;
      f_pred[static_cast<std::size_t>(i)] = std::move(ef.forces);
    } else {
      e_pred[static_cast<std::size_t>(i)] = predict_energy(params, c);
    }
  });

  MetricsReport r =
      evaluate_predictions(e_pred, with_forces ? &f_pred : nullptr, test, opts.tag);

  if (opts.with_histogram) {
    std::vector<double> pred_per_water(static_cast<std::size_t>(n));
    std::vector<double> ref_per_water(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      const Cluster& c = test.clusters[static_cast<std::size_t>(i)];
      const int nw = std::max(1, c.n_waters());
      pred_per_water[static_cast<std::size_t>(i)] = e_pred[static_cast<std::size_t>(i)] / nw;
      ref_per_water[static_cast<std::size_t>(i)] = *c.energy / nw;
    }
    // One spec spanning both distributions keeps the pair comparable.
    std::vector<double> all(pred_per_water);
    all.insert(all.end(), ref_per_water.begin(), ref_per_water.end());
    const HistogramSpec spec = spanning_spec(all, opts.histogram_bins);
    r.pred_hist = energy_histogram(pred_per_water, spec);
    r.ref_hist = energy_histogram(ref_per_water, spec);
  }
  return r;
}

namespace {

json histogram_to_json_obj(const Histogram& h) {
  return json{{"lo", h.spec.lo}, {"hi", h.spec.hi}, {"bins", h.spec.bins}, {"counts", h.counts}};
}

Histogram histogram_from_json_obj(const json& j) {
  Histogram h;
  h.spec.lo = j.at("lo").get<double>();
  h.spec.hi = j.at("hi").get<double>();
  h.spec.bins = j.at("bins").get<int>();
  h.counts = j.at("counts").get<std::vector<std::int64_t>>();
  return h;
}

}  // namespace

std::string metrics_to_json(const MetricsReport& r) {
  json j;
  j["e_h2o_mae"] = r.e_mae;
  j["e_h2o_rmse"] = r.e_rmse;
  j["n_samples"] = r.n_samples;
  j["model_id"] = r.model_id;
  j["initialization"] = r.initialization;
  j["n_train"] = r.n_train;
  j["test_tag"] = r.test_tag;
  if (r.force) {
    j["force"] = {{"mag_mean_abs", r.force->mag_mean_abs},
                  {"mag_mean_signed", r.force->mag_mean_signed},
                  {"mag_median_abs", r.force->mag_median_abs},
                  {"ang_mean", r.force->ang_mean},
                  {"ang_median", r.force->ang_median},
                  {"undefined_angles", r.force->undefined_angles},
                  {"n_atoms", r.force->n_atoms}};
  }
  if (r.pred_hist) j["pred_hist"] = histogram_to_json_obj(*r.pred_hist);
  if (r.ref_hist) j["ref_hist"] = histogram_to_json_obj(*r.ref_hist);
  return j.dump(2);
}

MetricsReport metrics_from_json(const std::string& text) {
  const json j = json::parse(text);
  MetricsReport r;
  r.e_mae = j.at("e_h2o_mae").get<double>();
  r.e_rmse = j.at("e_h2o_rmse").get<double>();
  r.n_samples = j.at("n_samples").get<int>();
  r.model_id = j.at("model_id").get<std::string>();
  r.initialization = j.at("initialization").get<std::string>();
  r.n_train = j.at("n_train").get<std::int64_t>();
  r.test_tag = j.at("test_tag").get<std::string>();
  if (j.contains("force")) {
    ForceMetrics fm;
    const auto& f = j.at("force");
    fm.mag_mean_abs = f.at("mag_mean_abs").get<double>();
    fm.mag_mean_signed = f.at("mag_mean_signed").get<double>();
    fm.mag_median_abs = f.at("mag_median_abs").get<double>();
    fm.ang_mean = f.at("ang_mean").get<double>();
    fm.ang_median = f.at("ang_median").get<double>();
    fm.undefined_angles = f.at("undefined_angles").get<std::int64_t>();
    fm.n_atoms = f.at("n_atoms").get<std::int64_t>();
    r.force = fm;
  }
  if (j.contains("pred_hist")) r.pred_hist = histogram_from_json_obj(j.at("pred_hist"));
  if (j.contains("ref_hist")) r.ref_hist = histogram_from_json_obj(j.at("ref_hist"));
  return r;
}

std::string histogram_to_csv(const Histogram& h) {
  std::string out = "bin_left,bin_right,count\n";
  const double width = (h.spec.hi - h.spec.lo) / h.spec.bins;
  char buf[96];
  for (int b = 0; b < h.spec.bins; ++b) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%lld\n", h.spec.lo + b * width,
                  h.spec.lo + (b + 1) * width,
                  static_cast<long long>(h.counts[static_cast<std::size_t>(b)]));
    out += buf;
  }
  return out;
}

std::string comparison_markdown(std::span<const MetricsReport> rows,
                                const std::string& host_note) {
  std::string out;
  out += "| Host | Test set | Initialization | N_train | E_H2O (kcal/mol) | F_mag "
         "(kcal/mol/A) | F_ang |\n";
  out += "|---|---|---|---|---|---|---|\n";
  char buf[256];
  for (const auto& r : rows) {
    if (r.force)
      std::snprintf(buf, sizeof(buf), "| %s | %s | %s | %lld | %.4f | %.4f | %.4f |\n",
                    host_note.c_str(), r.test_tag.c_str(), r.initialization.c_str(),
                    static_cast<long long>(r.n_train), r.e_mae, r.force->mag_mean_abs,
                    r.force->ang_mean);
    else
      std::snprintf(buf, sizeof(buf), "| %s | %s | %s | %lld | %.4f | - | - |\n",
                    host_note.c_str(), r.test_tag.c_str(), r.initialization.c_str(),
                    static_cast<long long>(r.n_train), r.e_mae);
    out += buf;
  }
  return out;
}

}  // namespace nnpforge
