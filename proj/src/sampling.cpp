// SPDX-License-Identifier: Apache-2.0
#include "nnpforge/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "nnpforge/random.hpp"

namespace nnpforge {

double erf(double x) {
  // erf(x) = (2/√π) e^(−x²) Σ_{k≥0} x^(2k+1) 2^k / (2k+1)!!
  // All terms are positive, so there is no cancellation at any x.
  const double ax = std::abs(x);
  if (ax > 6.5) return x > 0.0 ? 1.0 : -1.0;  // |1 - erf| < 1e-19 out here
  const double x2 = x * x;
  double term = ax;
  double sum = ax;
  for (int k = 1; k < 300; ++k) {
    term *= 2.0 * x2 / (2.0 * k + 1.0);
    sum += term;
    if (term < 1e-17 * sum) break;
  }
  const double two_over_sqrt_pi = 1.1283791670955125739;
  // Clamp: near saturation the rounding of exp(-x²)·sum can land 1 ulp
  // above 1.
  const double r = std::min(1.0, two_over_sqrt_pi * std::exp(-x2) * sum);
  return x >= 0.0 ? r : -r;
}

double force_error_eps(const ModelParams& params, const Cluster& c) {
  if (!c.forces) throw std::invalid_argument("force_error_eps: cluster has no force targets");
  const std::vector<double> f_pred = forces(params, c);
  double acc = 0.0;
  for (std::size_t i = 0; i < f_pred.size(); ++i)
    acc += std::abs(f_pred[i] - (*c.forces)[i]);
  return acc / static_cast<double>(f_pred.size());
}

ErrorStats validation_error_stats(const ModelParams& params, const ClusterSet& data,
                                  std::span<const int> validation) {
  if (validation.empty())
    throw std::invalid_argument("validation_error_stats: empty validation set");
  std::vector<double> eps;
  eps.reserve(validation.size());
  for (int i : validation)
    eps.push_back(force_error_eps(params, data.clusters[static_cast<std::size_t>(i)]));

  ErrorStats s;
  s.n = static_cast<int>(eps.size());
  for (double e : eps) s.mu += e;
  s.mu /= s.n;
  if (s.n >= 2) {
    double var = 0.0;
    for (double e : eps) var += (e - s.mu) * (e - s.mu);
    s.sigma = std::sqrt(var / s.n);  // population σ
  }
  return s;
}

bool promotion_decision(double eps_s, const ErrorStats& stats, double p_tol) {
  if (p_tol <= 0.0 || p_tol >= 1.0)
    throw std::invalid_argument("promotion_decision: p_tol must lie in (0, 1)");
  if (stats.sigma == 0.0) return eps_s > stats.mu;
  const double z = (eps_s - stats.mu) / stats.sigma;
  return 1.0 - erf(z) < p_tol;
}

void SamplingPools::validate() const {
  std::set<int> train_set(train_subset.begin(), train_subset.end());
  for (int r : reserve)
    if (train_set.count(r))
      throw std::invalid_argument("sampling pools: train subset and reserve overlap");
}

void active_round(const ModelParams& params, SamplingPools& pools, const ClusterSet& data,
                  std::span<const int> validation, double p_tol, int score_count, int round,
                  std::uint64_t seed) {
  if (pools.reserve.empty()) throw std::invalid_argument("active_round: reserve is empty");
  const ErrorStats stats = validation_error_stats(params, data, validation);

  // Seeded random subset of the reserve.
  std::vector<int> order(pools.reserve.begin(), pools.reserve.end());
  Rng rng(derive_seed(seed, 0xac7e0000ULL + static_cast<std::uint64_t>(round)));
  shuffle(order, rng);
  const std::size_t n_score = std::min<std::size_t>(order.size(),
                                                    static_cast<std::size_t>(std::max(score_count, 0)));

  // Promotions are applied in scoring order so a log replay reconstructs the
  // pools exactly.
  std::vector<int> promoted;
  for (std::size_t i = 0; i < n_score; ++i) {
    const int sample = order[i];
    const double eps = force_error_eps(params, data.clusters[static_cast<std::size_t>(sample)]);
    const bool take = promotion_decision(eps, stats, p_tol);
    pools.log.push_back({round, sample, eps, stats.mu, stats.sigma, take});
    if (take) promoted.push_back(sample);
  }
  if (!promoted.empty()) {
    const std::set<int> promoted_set(promoted.begin(), promoted.end());
    std::vector<int> remaining;
    remaining.reserve(pools.reserve.size());
    for (int r : pools.reserve)
      if (!promoted_set.count(r)) remaining.push_back(r);
    pools.reserve = std::move(remaining);
    pools.train_subset.insert(pools.train_subset.end(), promoted.begin(), promoted.end());
  }
  pools.validate();
}

ActiveResult active_training_loop(const Checkpoint& parent, const ClusterSet& data,
                                  SamplingPools pools, std::span<const int> validation,
                                  const LossConfig& loss_cfg, const TrainSchedule& schedule,
                                  double p_tol, int round_period, int score_count,
                                  const std::string& dataset_tag) {
  if (round_period < 1) throw std::invalid_argument("active_training_loop: round_period >= 1");
  pools.validate();

  SplitIndices split;
  split.train = pools.train_subset;
  split.validation.assign(validation.begin(), validation.end());
  split.seed = schedule.seed;

  int round = 0;
  EpochHook hook = [&](int epoch, const ModelParams& params, std::vector<int>& train_indices) {
    if (epoch % round_period != 0 || pools.reserve.empty()) return;
    ++round;
    const std::size_t before = pools.train_subset.size();
    active_round(params, pools, data, validation, p_tol, score_count, round, schedule.seed);
    for (std::size_t i = before; i < pools.train_subset.size(); ++i)
      train_indices.push_back(pools.train_subset[i]);
  };

  Checkpoint ckpt = finetune(parent, data, split, loss_cfg, schedule, dataset_tag, hook);
  return {std::move(ckpt), std::move(pools)};
}

void write_promotion_log_csv(const SamplingPools& pools, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << "round,sample_id,epsilon_s,mu,sigma,promoted\n";
  char buf[160];
  for (const auto& e : pools.log) {
    std::snprintf(buf, sizeof(buf), "%d,%d,%.17g,%.17g,%.17g,%d\n", e.round, e.sample, e.eps_s,
                  e.mu, e.sigma, e.promoted ? 1 : 0);
    out << buf;
  }
}

SamplingPools replay_promotion_log(std::vector<int> initial_train, std::vector<int> initial_reserve,
                                   const std::vector<PromotionEvent>& log) {
  SamplingPools p;
  p.train_subset = std::move(initial_train);
  p.reserve = std::move(initial_reserve);
  p.log = log;
  for (const auto& e : log) {
    if (!e.promoted) continue;
    auto it = std::find(p.reserve.begin(), p.reserve.end(), e.sample);
    if (it == p.reserve.end())
      throw std::runtime_error("replay: promoted sample not found in reserve");
    p.reserve.erase(it);
    p.train_subset.push_back(e.sample);
  }
  p.validate();
  return p;
}

}  // namespace nnpforge
