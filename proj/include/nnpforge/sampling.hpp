// SPDX-License-Identifier: Apache-2.0
//
// Active sampling during finetuning: per-sample force errors on a reserve
// pool are compared against validation error statistics, and a sample is
// promoted into the training subset when 1 - erf((ε_s - μ_ε)/σ_ε) < p_tol.
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "nnpforge/chemdata.hpp"
#include "nnpforge/training.hpp"

namespace nnpforge {

// Gaussian error function via the non-alternating scaled Maclaurin series;
// absolute error below 1e-14 everywhere.
double erf(double x);

struct ErrorStats {
  double mu = 0.0;     // mean per-sample force error
  double sigma = 0.0;  // population standard deviation
  int n = 0;
};

// ε for one sample: mean absolute per-component force error of the model
// against the cluster's force targets.
double force_error_eps(const ModelParams& params, const Cluster& c);

// μ_ε and σ_ε over the validation split (population σ; needs n >= 2).
ErrorStats validation_error_stats(const ModelParams& params, const ClusterSet& data,
                                  std::span<const int> validation);

// True iff 1 - erf((ε_s - μ)/σ) < p_tol. The σ = 0 degenerate case promotes
// iff ε_s > μ (the σ -> 0⁺ limit of the criterion).
bool promotion_decision(double eps_s, const ErrorStats& stats, double p_tol);

struct PromotionEvent {
  int round = 0;
  int sample = 0;  // dataset index
  double eps_s = 0.0;
  double mu = 0.0;
  double sigma = 0.0;
  bool promoted = false;
};

struct SamplingPools {
  std::vector<int> train_subset;
  std::vector<int> reserve;
  std::vector<PromotionEvent> log;

  void validate() const;  // disjointness
};

// Scores a seeded random subset of min(score_count, |reserve|) reserve
// samples and moves the qualifying ones into the training subset. Every
// scoring event is logged. Zero promotions is a valid outcome.
void active_round(const ModelParams& params, SamplingPools& pools, const ClusterSet& data,
                  std::span<const int> validation, double p_tol, int score_count, int round,
                  std::uint64_t seed);

struct ActiveResult {
  Checkpoint checkpoint;
  SamplingPools pools;
};

// Finetuning with an active_round after every round_period epochs. The
// training subset of `pools` is the working training set; `validation`
// doubles as the loss validation split and the error-statistics source.
ActiveResult active_training_loop(const Checkpoint& parent, const ClusterSet& data,
                                  SamplingPools pools, std::span<const int> validation,
                                  const LossConfig& loss_cfg, const TrainSchedule& schedule,
                                  double p_tol, int round_period, int score_count,
                                  const std::string& dataset_tag = "");

// CSV: round,sample_id,epsilon_s,mu,sigma,promoted
void write_promotion_log_csv(const SamplingPools& pools, const std::string& path);

// Reconstructs final pools from initial pools plus the log (consistency
// check for the append-only log).
SamplingPools replay_promotion_log(std::vector<int> initial_train, std::vector<int> initial_reserve,
                                   const std::vector<PromotionEvent>& log);

}  // namespace nnpforge
