// SPDX-License-Identifier: Apache-2.0
//
// SchNet-style graph network: element embeddings, continuous-filter
// convolution blocks over a radial-basis expansion of pair distances with a
// smooth cosine cutoff, atomwise readout summed per cluster. Energies come
// from energy_forward; forces and parameter gradients come from reverse
// passes over the same tape.
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "nnpforge/chemdata.hpp"
#include "nnpforge/tape.hpp"

namespace nnpforge {

struct ModelConfig {
  int n_atom_features = 64;
  int n_interactions = 3;
  int n_rbf = 32;
  double cutoff = 6.0;          // Å
  double rbf_width = 6.0 / 32;  // Å; conventionally cutoff / n_rbf
  int readout_hidden = 32;
  std::vector<int> element_vocabulary = {1, 8};  // sorted atomic numbers
  double energy_offset = 0.0;   // initial per-atom energy, kcal/mol

  void validate() const;
  int vocab_index(int z) const;  // throws on unknown element
};

struct DenseParams {
  Tensor w;  // in×out
  Tensor b;  // 1×out
};

struct InteractionParams {
  DenseParams filter1;  // n_rbf -> F
  DenseParams filter2;  // F -> F
  DenseParams in_proj;  // F -> F
  DenseParams out1;     // F -> F
  DenseParams out2;     // F -> F
};

struct ModelParams {
  ModelConfig config;
  Tensor embedding;     // vocab×F
  Tensor element_bias;  // vocab×1
  std::vector<InteractionParams> interactions;
  DenseParams readout1;  // F -> hidden
  DenseParams readout2;  // hidden -> 1
};

// Deterministic initialization: Glorot-uniform weights, zero biases, normal
// embeddings scaled by 1/sqrt(F). The final readout layer starts at zero so
// initial energies equal energy_offset per atom exactly.
ModelParams init_params(const ModelConfig& config, std::uint64_t seed);

// Gaussian radial basis: element k = exp(-γ (d - μ_k)²), centers evenly
// spaced on [0, cutoff], γ = 1/(2 rbf_width²).
std::vector<double> rbf_expand(double d, const ModelConfig& config);

double shifted_softplus(double x);  // ln(0.5 eˣ + 0.5)

enum class GradMode { None, Positions, Params, All };

// Forward build: per-cluster energies plus the retained tape.
struct ModelForward {
  Tape tape;
  int positions_id = -1;
  int energies_id = -1;               // n_clusters×1
  int forces_id = -1;                 // n_atoms×3, emitted on demand
  std::vector<int> param_ids;         // canonical order
  std::vector<double> energies;       // value snapshot of energies_id

  const Tensor& energies_value() const { return tape.value(energies_id); }
};

ModelForward energy_forward(const ModelParams& params, const Batch& batch,
                            GradMode mode = GradMode::None);

// Emits F = -dE/dr onto the forward tape (requires GradMode with positions)
// and returns the node id. Idempotent.
int emit_forces(ModelForward& fwd);

std::vector<double> predict_energies(const ModelParams& params, const Batch& batch);
double predict_energy(const ModelParams& params, const Cluster& c);

// Exact forces via reverse pass (negative position gradient of the energy).
std::vector<double> forces(const ModelParams& params, const Cluster& c);
EnergyForces energy_and_forces(const ModelParams& params, const Cluster& c);

// Canonical parameter iteration; the order defines optimizer slot, gradient
// and checkpoint array layouts.
void visit_params(ModelParams& p,
                  const std::function<void(const std::string&, Tensor&)>& fn);
void visit_params(const ModelParams& p,
                  const std::function<void(const std::string&, const Tensor&)>& fn);
std::vector<std::string> param_names(const ModelParams& p);
std::size_t param_scalar_count(const ModelParams& p);

// Adjoint of a scalar loss with respect to model outputs: d_energy per
// cluster, d_forces per atom component when a force term is present.
struct LossAdjoint {
  std::vector<double> d_energy;
  std::optional<std::vector<double>> d_forces;
};

struct ParamGradients {
  std::vector<std::string> names;
  std::vector<Tensor> tensors;  // aligned with names / visit_params order
};

// Exact gradient of L = Σ_c d_energy[c]·E_c (+ Σ d_forces·F) with respect to
// every parameter; differentiates through the force reverse pass when force
// adjoints are present.
ParamGradients param_gradients(const ModelParams& params, const Batch& batch,
                               const LossAdjoint& adjoint);

}  // namespace nnpforge
