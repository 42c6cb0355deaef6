// SPDX-License-Identifier: Apache-2.0
#include "nnpforge/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "nnpforge/constants.hpp"
#include "nnpforge/random.hpp"

namespace nnpforge {

void ModelConfig::validate() const {
  if (n_atom_features < 1 || n_interactions < 1 || n_rbf < 1 || readout_hidden < 1)
    throw std::invalid_argument("model config: all counts must be >= 1");
  if (cutoff <= 0.0) throw std::invalid_argument("model config: cutoff must be positive");
  if (rbf_width <= 0.0) throw std::invalid_argument("model config: rbf_width must be positive");
  if (element_vocabulary.empty())
    throw std::invalid_argument("model config: element vocabulary is empty");
  if (!std::is_sorted(element_vocabulary.begin(), element_vocabulary.end()))
    throw std::invalid_argument("model config: element vocabulary must be sorted");
}

int ModelConfig::vocab_index(int z) const {
  auto it = std::lower_bound(element_vocabulary.begin(), element_vocabulary.end(), z);
  if (it == element_vocabulary.end() || *it != z)
    throw std::invalid_argument("element Z=" + std::to_string(z) + " not in model vocabulary");
  return static_cast<int>(it - element_vocabulary.begin());
}

double shifted_softplus(double x) {
  const double m = x > 0.0 ? x : 0.0;
  return m + std::log1p(std::exp(-std::abs(x))) - 0.6931471805599453094;
}

std::vector<double> rbf_expand(double d, const ModelConfig& config) {
  const int k = config.n_rbf;
  const double gamma = 1.0 / (2.0 * config.rbf_width * config.rbf_width);
  const double spacing = k > 1 ? config.cutoff / (k - 1) : 0.0;
  std::vector<double> out(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) {
    const double t = d - spacing * i;
    out[static_cast<std::size_t>(i)] = std::exp(-gamma * t * t);
  }
  return out;
}

namespace {

Tensor glorot_uniform(int rows, int cols, Rng& rng) {
  Tensor t(rows, cols);
  const double bound = std::sqrt(6.0 / (rows + cols));
  for (auto& x : t.v) x = rng.uniform(-bound, bound);
  return t;
}

DenseParams init_dense(int in, int out, Rng& rng) {
  return {glorot_uniform(in, out, rng), Tensor(1, out)};
}

}  // namespace

ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(derive_seed(seed, 0xb10c));
  const int vocab = static_cast<int>(config.element_vocabulary.size());
  const int f = config.n_atom_features;

  ModelParams p;
  p.config = config;
  p.embedding = Tensor(vocab, f);
  const double emb_scale = 1.0 / std::sqrt(static_cast<double>(f));
  for (auto& x : p.embedding.v) x = rng.normal() * emb_scale;
  p.element_bias = Tensor(vocab, 1);
  for (auto& x : p.element_bias.v) x = config.energy_offset;

  for (int t = 0; t < config.n_interactions; ++t) {
    InteractionParams ip;
    ip.filter1 = init_dense(config.n_rbf, f, rng);
    ip.filter2 = init_dense(f, f, rng);
    ip.in_proj = init_dense(f, f, rng);
    ip.out1 = init_dense(f, f, rng);
    ip.out2 = init_dense(f, f, rng);
    p.interactions.push_back(std::move(ip));
  }
  p.readout1 = init_dense(f, config.readout_hidden, rng);
  // Zero final layer: initial energy is exactly energy_offset per atom.
  p.readout2 = {Tensor(config.readout_hidden, 1), Tensor(1, 1)};
  return p;
}

namespace {

template <typename P, typename Fn>
void visit_params_impl(P& p, Fn&& fn) {
  fn("embedding", p.embedding);
  fn("element_bias", p.element_bias);
  for (std::size_t t = 0; t < p.interactions.size(); ++t) {
    auto& ip = p.interactions[t];
    const std::string base = "interaction" + std::to_string(t) + ".";
    fn(base + "filter1.w", ip.filter1.w);
    fn(base + "filter1.b", ip.filter1.b);
    fn(base + "filter2.w", ip.filter2.w);
    fn(base + "filter2.b", ip.filter2.b);
    fn(base + "in_proj.w", ip.in_proj.w);
    fn(base + "in_proj.b", ip.in_proj.b);
    fn(base + "out1.w", ip.out1.w);
    fn(base + "out1.b", ip.out1.b);
    fn(base + "out2.w", ip.out2.w);
    fn(base + "out2.b", ip.out2.b);
  }
  fn("readout1.w", p.readout1.w);
  fn("readout1.b", p.readout1.b);
  fn("readout2.w", p.readout2.w);
  fn("readout2.b", p.readout2.b);
}

}  // namespace

void visit_params(ModelParams& p,
                  const std::function<void(const std::string&, Tensor&)>& fn) {
  visit_params_impl(p, fn);
}

void visit_params(const ModelParams& p,
                  const std::function<void(const std::string&, const Tensor&)>& fn) {
  visit_params_impl(p, fn);
}

std::vector<std::string> param_names(const ModelParams& p) {
  std::vector<std::string> names;
  visit_params(p, [&](const std::string& n, const Tensor&) { names.push_back(n); });
  return names;
}

std::size_t param_scalar_count(const ModelParams& p) {
  std::size_t n = 0;
  visit_params(p, [&](const std::string&, const Tensor& t) { n += t.size(); });
  return n;
}

ModelForward energy_forward(const ModelParams& params, const Batch& batch, GradMode mode) {
  params.config.validate();
  const ModelConfig& cfg = params.config;
  const int n_atoms = batch.n_atoms();
  const int n_clusters = batch.n_clusters();
  const int f = cfg.n_atom_features;
  if (n_atoms == 0) throw std::invalid_argument("energy_forward: empty batch");

  const bool grad_pos = mode == GradMode::Positions || mode == GradMode::All;
  const bool grad_params = mode == GradMode::Params || mode == GradMode::All;

  ModelForward fwd;
  Tape& tape = fwd.tape;

  // Leaves.
  Tensor pos(n_atoms, 3, batch.positions);
  fwd.positions_id = tape.leaf(std::move(pos), grad_pos);
  const ModelParams& cp = params;
  visit_params(cp, [&](const std::string&, const Tensor& t) {
    fwd.param_ids.push_back(tape.leaf(t, grad_params));
  });

  // Canonical leaf order mirrors visit_params.
  int next = 0;
  const int id_embedding = fwd.param_ids[static_cast<std::size_t>(next++)];
  const int id_element_bias = fwd.param_ids[static_cast<std::size_t>(next++)];
  struct InteractionIds {
    int f1w, f1b, f2w, f2b, inw, inb, o1w, o1b, o2w, o2b;
  };
  std::vector<InteractionIds> iids;
  for (int t = 0; t < cfg.n_interactions; ++t) {
    InteractionIds ii{};
    ii.f1w = fwd.param_ids[static_cast<std::size_t>(next++)];
    ii.f1b = fwd.param_ids[static_cast<std::size_t>(next++)];
    ii.f2w = fwd.param_ids[static_cast<std::size_t>(next++)];
    ii.f2b = fwd.param_ids[static_cast<std::size_t>(next++)];
    ii.inw = fwd.param_ids[static_cast<std::size_t>(next++)];
    ii.inb = fwd.param_ids[static_cast<std::size_t>(next++)];
    ii.o1w = fwd.param_ids[static_cast<std::size_t>(next++)];
    ii.o1b = fwd.param_ids[static_cast<std::size_t>(next++)];
    ii.o2w = fwd.param_ids[static_cast<std::size_t>(next++)];
    ii.o2b = fwd.param_ids[static_cast<std::size_t>(next++)];
    iids.push_back(ii);
  }
  const int id_r1w = fwd.param_ids[static_cast<std::size_t>(next++)];
  const int id_r1b = fwd.param_ids[static_cast<std::size_t>(next++)];
  const int id_r2w = fwd.param_ids[static_cast<std::size_t>(next++)];
  const int id_r2b = fwd.param_ids[static_cast<std::size_t>(next++)];

  // Vocabulary index per atom (errors on unknown elements).
  std::vector<int> z_idx(static_cast<std::size_t>(n_atoms));
  for (int a = 0; a < n_atoms; ++a)
    z_idx[static_cast<std::size_t>(a)] = cfg.vocab_index(batch.atomic_numbers[a]);

  // Edges, built per cluster so batched clusters never see each other.
  std::vector<int> edge_i, edge_j;
  for (int c = 0; c < n_clusters; ++c) {
    Cluster view;
    const int lo = batch.atom_offset[c];
    const int hi = batch.atom_offset[c + 1];
    view.atomic_numbers.assign(batch.atomic_numbers.begin() + lo,
                               batch.atomic_numbers.begin() + hi);
    view.positions.assign(batch.positions.begin() + 3 * lo, batch.positions.begin() + 3 * hi);
    const PairList pl = neighbor_pairs(view, cfg.cutoff);
    for (const auto& e : pl.edges) {
      edge_i.push_back(e.i + lo);
      edge_j.push_back(e.j + lo);
    }
  }
  const int n_edges = static_cast<int>(edge_i.size());

  // Distances on tape (differentiable w.r.t. positions).
  const int ri = tape.gather(fwd.positions_id, edge_i);
  const int rj = tape.gather(fwd.positions_id, edge_j);
  const int diff = tape.sub(rj, ri);
  const int d2 = tape.row_sum(tape.mul(diff, diff));
  const int d = tape.sqrt(d2);  // n_edges×1

  // Radial basis and cosine cutoff per edge.
  const int k = cfg.n_rbf;
  const double gamma = 1.0 / (2.0 * cfg.rbf_width * cfg.rbf_width);
  Tensor centers(1, k);
  const double spacing = k > 1 ? cfg.cutoff / (k - 1) : 0.0;
  for (int i = 0; i < k; ++i) centers.v[static_cast<std::size_t>(i)] = spacing * i;
  const int mu = tape.col_bcast(tape.constant(std::move(centers)), n_edges);
  const int t_diff = tape.sub(tape.row_bcast(d, k), mu);
  const int rbf = tape.exp(tape.scale(tape.mul(t_diff, t_diff), -gamma));
  const int fcut = tape.add_scalar(
      tape.scale(tape.cos(tape.scale(d, units::kPi / cfg.cutoff)), 0.5), 0.5);

  auto dense = [&](int x, int w, int b) { return tape.add_row_vec(tape.matmul(x, w), b); };

  // Embedding then interaction blocks.
  int x = tape.gather(id_embedding, z_idx);  // n_atoms×F
  for (int t = 0; t < cfg.n_interactions; ++t) {
    const auto& ii = iids[static_cast<std::size_t>(t)];
    const int w1 = tape.ssp(dense(rbf, ii.f1w, ii.f1b));
    const int w_edge = tape.mul_col_vec(dense(w1, ii.f2w, ii.f2b), fcut);
    const int h = dense(x, ii.inw, ii.inb);
    const int hj = tape.gather(h, edge_j);
    const int messages = tape.mul(hj, w_edge);
    const int m = tape.scatter(messages, edge_i, n_atoms);
    const int v = dense(tape.ssp(dense(m, ii.o1w, ii.o1b)), ii.o2w, ii.o2b);
    x = tape.add(x, v);
  }

  // Atomwise readout plus per-element bias, summed per cluster.
  const int r1 = tape.ssp(dense(x, id_r1w, id_r1b));
  const int e_atom = dense(r1, id_r2w, id_r2b);  // n_atoms×1
  const int e_bias = tape.gather(id_element_bias, z_idx);
  const int e_total = tape.add(e_atom, e_bias);
  fwd.energies_id = tape.scatter(e_total, batch.cluster_of_atom, n_clusters);
  fwd.energies = tape.value(fwd.energies_id).v;
  (void)f;
  return fwd;
}

int emit_forces(ModelForward& fwd) {
  if (fwd.forces_id >= 0) return fwd.forces_id;
  if (!fwd.tape.needs_grad(fwd.positions_id))
    throw std::logic_error("emit_forces: forward was built without position gradients");
  const int e_sum = fwd.tape.sum(fwd.energies_id);
  const int wrt[] = {fwd.positions_id};
  const auto g = fwd.tape.gradient(e_sum, wrt);
  if (g[0] < 0) {
    // No edges anywhere (isolated atoms): forces are identically zero.
    const Tensor& pos = fwd.tape.value(fwd.positions_id);
    fwd.forces_id = fwd.tape.constant(Tensor(pos.rows, 3));
  } else {
    fwd.forces_id = fwd.tape.scale(g[0], -1.0);
  }
  return fwd.forces_id;
}

std::vector<double> predict_energies(const ModelParams& params, const Batch& batch) {
  return energy_forward(params, batch, GradMode::None).energies;
}

double predict_energy(const ModelParams& params, const Cluster& c) {
  const Cluster one[] = {c};
  return predict_energies(params, batch_clusters(one))[0];
}

std::vector<double> forces(const ModelParams& params, const Cluster& c) {
  const Cluster one[] = {c};
  ModelForward fwd = energy_forward(params, batch_clusters(one), GradMode::Positions);
  const int fid = emit_forces(fwd);
  return fwd.tape.value(fid).v;
}

EnergyForces energy_and_forces(const ModelParams& params, const Cluster& c) {
  const Cluster one[] = {c};
  ModelForward fwd = energy_forward(params, batch_clusters(one), GradMode::Positions);
  const int fid = emit_forces(fwd);
  return {fwd.energies[0], fwd.tape.value(fid).v};
}

ParamGradients param_gradients(const ModelParams& params, const Batch& batch,
                               const LossAdjoint& adjoint) {
  const bool with_forces = adjoint.d_forces.has_value();
  ModelForward fwd =
      energy_forward(params, batch, with_forces ? GradMode::All : GradMode::Params);
  Tape& tape = fwd.tape;

  if (static_cast<int>(adjoint.d_energy.size()) != batch.n_clusters())
    throw std::invalid_argument("param_gradients: energy adjoint shape mismatch");
  const int adj_e =
      tape.constant(Tensor(batch.n_clusters(), 1, adjoint.d_energy));
  int objective = tape.sum(tape.mul(fwd.energies_id, adj_e));

  if (with_forces) {
    if (static_cast<int>(adjoint.d_forces->size()) != 3 * batch.n_atoms())
      throw std::invalid_argument("param_gradients: force adjoint shape mismatch");
    const int f_id = emit_forces(fwd);
    const int adj_f = tape.constant(Tensor(batch.n_atoms(), 3, *adjoint.d_forces));
    objective = tape.add(objective, tape.sum(tape.mul(f_id, adj_f)));
  }

  const auto grad_ids = tape.gradient(objective, fwd.param_ids);

  ParamGradients out;
  std::size_t slot = 0;
  visit_params(params, [&](const std::string& name, const Tensor& t) {
    out.names.push_back(name);
    const int gid = grad_ids[slot++];
    out.tensors.push_back(gid >= 0 ? tape.value(gid) : Tensor(t.rows, t.cols));
  });
  return out;
}

}  // namespace nnpforge
