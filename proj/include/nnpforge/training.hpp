// SPDX-License-Identifier: Apache-2.0
//
// Losses, Adam, pretraining/finetuning loops and checkpoint persistence.
// Scratch vs pretrain differ only in parameter initialization; everything
// else (seeds, data order, schedule) is shared so the comparison isolates
// initialization as the single varying factor.
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "nnpforge/chemdata.hpp"
#include "nnpforge/model.hpp"

namespace nnpforge {

enum class EnergyLossKind { MSE, MAE };
enum class EnergyNorm { Cluster, PerWater };

struct LossConfig {
  double energy_weight = 1.0;
  double force_weight = 0.0;
  EnergyLossKind energy_loss = EnergyLossKind::MSE;
  EnergyNorm normalize_energy_by = EnergyNorm::Cluster;

  void validate() const;
};

struct LossResult {
  double total = 0.0;
  double energy_term = 0.0;  // unweighted
  double force_term = 0.0;   // unweighted
  LossAdjoint adjoint;       // d total / d outputs
};

// Loss and its output adjoints for one batch. Targets come from the batch.
LossResult compute_loss(const ModelParams& params, const Batch& batch, const LossConfig& cfg);

// Fused single-graph loss + parameter gradients (one forward, one reverse
// chain), exactly what one optimizer step consumes.
struct LossAndGrads {
  LossResult loss;
  ParamGradients grads;
};
LossAndGrads loss_and_gradients(const ModelParams& params, const Batch& batch,
                                const LossConfig& cfg);

struct NumericalError : std::runtime_error {
  explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct OptimizerState {
  std::int64_t step = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::vector<Tensor> m;  // first moments, visit_params order
  std::vector<Tensor> v;  // second moments

  static OptimizerState fresh(const ModelParams& params, const AdamConfig& cfg);
};

// Standard Adam with bias correction. Throws NumericalError on non-finite
// gradients, leaving params untouched.
void adam_step(OptimizerState& state, ModelParams& params, const ParamGradients& grads);

struct TrainSchedule {
  int max_epochs = 100;
  int batch_size = 32;
  double lr = 1e-3;
  double lr_decay = 0.5;       // plateau decay factor
  int lr_patience = 10;        // validation epochs without improvement
  double min_lr = 1e-7;
  int early_stop_patience = 0; // 0 disables early stopping
  std::uint64_t seed = 0;
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
};

struct Provenance {
  std::string kind = "scratch";        // "scratch" | "pretrain"
  std::vector<std::string> lineage;    // ancestor checkpoint ids, oldest first
};

struct Checkpoint {
  ModelParams params;
  std::optional<OptimizerState> optimizer;
  std::vector<EpochStats> history;
  Provenance provenance;
  std::string dataset_tag;
  std::uint64_t seed = 0;
  std::int64_t n_train = 0;
  std::string id;
};

struct TrainingDiverged : std::runtime_error {
  TrainingDiverged(const std::string& msg, std::optional<Checkpoint> best_so_far)
      : std::runtime_error(msg), best(std::move(best_so_far)) {}
  std::optional<Checkpoint> best;
};

struct ScratchInit {
  ModelConfig config;
  std::uint64_t seed = 0;
};
using InitSpec = std::variant<ScratchInit, Checkpoint>;

// Exact dataset-level loss (batching does not change the value).
double evaluate_loss(const ModelParams& params, const ClusterSet& data,
                     std::span<const int> indices, const LossConfig& cfg,
                     int batch_size = 32);

// Epoch loop with seeded mini-batching, per-epoch validation, best-validation
// checkpointing, plateau lr decay and optional early stopping. Deterministic
// given seeds. The optional hook runs after every epoch and may mutate the
// working training-index list (active sampling uses this).
using EpochHook = std::function<void(int epoch, const ModelParams& params,
                                     std::vector<int>& train_indices)>;

Checkpoint train(const ClusterSet& data, const SplitIndices& split, const InitSpec& init,
                 const LossConfig& loss_cfg, const TrainSchedule& schedule,
                 const std::string& dataset_tag = "", const EpochHook& hook = nullptr);

// train() warm-started from parent params with a fresh optimizer; provenance
// records the parent chain.
Checkpoint finetune(const Checkpoint& parent, const ClusterSet& data, const SplitIndices& split,
                    const LossConfig& loss_cfg, const TrainSchedule& schedule,
                    const std::string& dataset_tag = "", const EpochHook& hook = nullptr);

// Binary checkpoint document: magic "NNPF", u32 version, canonical JSON
// metadata block, then named little-endian f64 arrays. Lossless round-trip.
void save_checkpoint(const Checkpoint& c, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);
std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& c);
Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);
std::string compute_checkpoint_id(const Checkpoint& c);

void write_history_csv(const Checkpoint& c, const std::string& path);

}  // namespace nnpforge
