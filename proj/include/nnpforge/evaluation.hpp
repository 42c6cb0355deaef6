// SPDX-License-Identifier: Apache-2.0
//
// Test-set metrics: per-water energy error, signed force-magnitude error,
// normalized force-direction error, distribution histograms and comparison
// tables.
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nnpforge/chemdata.hpp"
#include "nnpforge/model.hpp"

namespace nnpforge {

// |E_pred - E_true| / n_waters.
double e_h2o_error(double e_pred, double e_true, int n_waters);

// Signed ‖F̂‖ - ‖F‖ for one atom's 3-vectors.
double f_mag_error(std::span<const double, 3> f_pred, std::span<const double, 3> f_true);

// arccos of the clamped unit-vector dot over π, in [0, 1]. Empty when either
// norm is below 1e-12 (the direction is undefined; excluded, not silently 0).
std::optional<double> f_ang_error(std::span<const double, 3> f_pred,
                                  std::span<const double, 3> f_true);

struct HistogramSpec {
  double lo = 0.0;
  double hi = 1.0;
  int bins = 60;
};

struct Histogram {
  HistogramSpec spec;
  std::vector<std::int64_t> counts;  // out-of-range values land in edge bins
};

Histogram energy_histogram(std::span<const double> values, const HistogramSpec& spec);
HistogramSpec spanning_spec(std::span<const double> values, int bins = 60);

struct ForceMetrics {
  double mag_mean_abs = 0.0;     // mean |F_mag|, the tabulated value
  double mag_mean_signed = 0.0;  // signed mean (bias)
  double mag_median_abs = 0.0;
  double ang_mean = 0.0;
  double ang_median = 0.0;
  std::int64_t undefined_angles = 0;
  std::int64_t n_atoms = 0;
};

struct MetricsReport {
  double e_mae = 0.0;   // per-water MAE, kcal/mol
  double e_rmse = 0.0;  // per-water RMSE
  std::optional<ForceMetrics> force;
  int n_samples = 0;
  std::string model_id;
  std::string initialization;  // provenance kind
  std::int64_t n_train = 0;
  std::string test_tag;
  std::optional<Histogram> pred_hist;  // predicted E_H2O distribution
  std::optional<Histogram> ref_hist;   // reference E_H2O distribution
};

// Metrics from externally supplied predictions (also the brute-force oracle
// route in tests). Force metrics require both predictions and targets.
MetricsReport evaluate_predictions(std::span<const double> e_pred,
                                   const std::vector<std::vector<double>>* f_pred,
                                   const ClusterSet& test, const std::string& tag);

struct EvalOptions {
  std::string tag;
  bool with_histogram = false;
  int histogram_bins = 60;
  int batch_size = 32;
  int threads = 0;
};

// Full-model evaluation over a test set; deterministic and independent of
// batch order. Force metrics are omitted when the set carries no forces.
MetricsReport evaluate_model(const ModelParams& params, const ClusterSet& test,
                             const EvalOptions& opts);

std::string metrics_to_json(const MetricsReport& r);
MetricsReport metrics_from_json(const std::string& text);

// CSV: bin_left,bin_right,count
std::string histogram_to_csv(const Histogram& h);

// Markdown table mirroring the paper's comparison layout, one row per report.
std::string comparison_markdown(std::span<const MetricsReport> rows,
                                const std::string& host_note);

}  // namespace nnpforge
