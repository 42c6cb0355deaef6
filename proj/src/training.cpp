// SPDX-License-Identifier: Apache-2.0
#include "nnpforge/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "nnpforge/random.hpp"

namespace nnpforge {

using nlohmann::json;

void LossConfig::validate() const {
  if (energy_weight < 0.0 || force_weight < 0.0)
    throw std::invalid_argument("loss config: weights must be non-negative");
  if (energy_weight + force_weight <= 0.0)
    throw std::invalid_argument("loss config: at least one weight must be positive");
}

namespace {

struct LossParts {
  double energy_term = 0.0;
  double force_term = 0.0;
  LossAdjoint adjoint;
};

// Loss terms and adjoints from predictions already computed on a tape.
LossParts loss_from_predictions(const Batch& batch, const LossConfig& cfg,
                                const std::vector<double>& e_pred,
                                const double* f_pred) {
  cfg.validate();
  if (!batch.energies) throw std::invalid_argument("loss: batch has no energy targets");
  const int k = batch.n_clusters();
  const bool with_force = cfg.force_weight > 0.0;
  if (with_force && !batch.forces)
    throw std::invalid_argument("loss: force_weight > 0 but batch carries no force targets");

  LossParts out;
  out.adjoint.d_energy.assign(static_cast<std::size_t>(k), 0.0);
  for (int c = 0; c < k; ++c) {
    double norm = 1.0;
    if (cfg.normalize_energy_by == EnergyNorm::PerWater) {
      if (batch.n_waters[static_cast<std::size_t>(c)] < 1)
        throw std::invalid_argument("loss: per-water normalization on a non-water cluster");
      norm = batch.n_waters[static_cast<std::size_t>(c)];
    }
    const double r =
        (e_pred[static_cast<std::size_t>(c)] - (*batch.energies)[static_cast<std::size_t>(c)]) /
        norm;
    if (cfg.energy_loss == EnergyLossKind::MSE) {
      out.energy_term += r * r / k;
      out.adjoint.d_energy[static_cast<std::size_t>(c)] =
          cfg.energy_weight * 2.0 * r / (k * norm);
    } else {
      out.energy_term += std::abs(r) / k;
      const double sgn = r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0);
      out.adjoint.d_energy[static_cast<std::size_t>(c)] = cfg.energy_weight * sgn / (k * norm);
    }
  }

  if (with_force) {
    const std::size_t n_comp = batch.forces->size();
    out.adjoint.d_forces.emplace(n_comp, 0.0);
    for (std::size_t i = 0; i < n_comp; ++i) {
      const double df = f_pred[i] - (*batch.forces)[i];
      out.force_term += df * df / static_cast<double>(n_comp);
      (*out.adjoint.d_forces)[i] =
          cfg.force_weight * 2.0 * df / static_cast<double>(n_comp);
    }
  }
  return out;
}

}  // namespace

LossResult compute_loss(const ModelParams& params, const Batch& batch, const LossConfig& cfg) {
  cfg.validate();
  const bool with_force = cfg.force_weight > 0.0;
  ModelForward fwd =
      energy_forward(params, batch, with_force ? GradMode::Positions : GradMode::None);
  const double* f_pred = nullptr;
  if (with_force) {
    const int fid = emit_forces(fwd);
    f_pred = fwd.tape.value(fid).v.data();
  }
  const LossParts parts = loss_from_predictions(batch, cfg, fwd.energies, f_pred);
  LossResult r;
  r.energy_term = parts.energy_term;
  r.force_term = parts.force_term;
  r.total = cfg.energy_weight * parts.energy_term + cfg.force_weight * parts.force_term;
  r.adjoint = parts.adjoint;
  return r;
}

LossAndGrads loss_and_gradients(const ModelParams& params, const Batch& batch,
                                const LossConfig& cfg) {
  cfg.validate();
  const bool with_force = cfg.force_weight > 0.0;
  ModelForward fwd =
      energy_forward(params, batch, with_force ? GradMode::All : GradMode::Params);
  Tape& tape = fwd.tape;
  const double* f_pred = nullptr;
  int f_id = -1;
  if (with_force) {
    f_id = emit_forces(fwd);
    f_pred = tape.value(f_id).v.data();
  }
  const LossParts parts = loss_from_predictions(batch, cfg, fwd.energies, f_pred);

  const int adj_e = tape.constant(Tensor(batch.n_clusters(), 1, parts.adjoint.d_energy));
  int objective = tape.sum(tape.mul(fwd.energies_id, adj_e));
  if (with_force) {
    const int adj_f = tape.constant(Tensor(batch.n_atoms(), 3, *parts.adjoint.d_forces));
    objective = tape.add(objective, tape.sum(tape.mul(f_id, adj_f)));
  }
  const auto grad_ids = tape.gradient(objective, fwd.param_ids);

  LossAndGrads out;
  out.loss.energy_term = parts.energy_term;
  out.loss.force_term = parts.force_term;
  out.loss.total = cfg.energy_weight * parts.energy_term + cfg.force_weight * parts.force_term;
  out.loss.adjoint = parts.adjoint;
  std::size_t slot = 0;
  visit_params(params, [&](const std::string& name, const Tensor& t) {
    out.grads.names.push_back(name);
    const int gid = grad_ids[slot++];
    out.grads.tensors.push_back(gid >= 0 ? tape.value(gid) : Tensor(t.rows, t.cols));
  });
  return out;
}

OptimizerState OptimizerState::fresh(const ModelParams& params, const AdamConfig& cfg) {
  OptimizerState s;
  s.lr = cfg.lr;
  s.beta1 = cfg.beta1;
  s.beta2 = cfg.beta2;
  s.eps = cfg.eps;
  visit_params(params, [&](const std::string&, const Tensor& t) {
    s.m.emplace_back(t.rows, t.cols);
    s.v.emplace_back(t.rows, t.cols);
  });
  return s;
}

void adam_step(OptimizerState& state, ModelParams& params, const ParamGradients& grads) {
  for (const auto& g : grads.tensors)
    for (double x : g.v)
      if (!std::isfinite(x)) throw NumericalError("adam_step: non-finite gradient");

  const std::int64_t t = state.step + 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(t));

  std::size_t slot = 0;
  visit_params(params, [&](const std::string&, Tensor& p) {
    const Tensor& g = grads.tensors[slot];
    Tensor& m = state.m[slot];
    Tensor& v = state.v[slot];
    if (!p.same_shape(g)) throw std::invalid_argument("adam_step: gradient shape mismatch");
    for (std::size_t i = 0; i < p.size(); ++i) {
      m.v[i] = state.beta1 * m.v[i] + (1.0 - state.beta1) * g.v[i];
      v.v[i] = state.beta2 * v.v[i] + (1.0 - state.beta2) * g.v[i] * g.v[i];
      const double mhat = m.v[i] / bc1;
      const double vhat = v.v[i] / bc2;
      p.v[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
    ++slot;
  });
  state.step = t;
}

double evaluate_loss(const ModelParams& params, const ClusterSet& data,
                     std::span<const int> indices, const LossConfig& cfg, int batch_size) {
  cfg.validate();
  if (indices.empty()) throw std::invalid_argument("evaluate_loss: empty index set");
  const bool with_force = cfg.force_weight > 0.0;

  double e_acc = 0.0, f_acc = 0.0;
  std::int64_t n_clusters = 0, n_comp = 0;
  for (std::size_t lo = 0; lo < indices.size(); lo += static_cast<std::size_t>(batch_size)) {
    const std::size_t hi = std::min(indices.size(), lo + static_cast<std::size_t>(batch_size));
    std::vector<Cluster> chunk;
    for (std::size_t i = lo; i < hi; ++i)
      chunk.push_back(data.clusters[static_cast<std::size_t>(indices[i])]);
    const Batch batch = batch_clusters(chunk);
    ModelForward fwd =
        energy_forward(params, batch, with_force ? GradMode::Positions : GradMode::None);
    const double* f_pred = nullptr;
    if (with_force) f_pred = fwd.tape.value(emit_forces(fwd)).v.data();
    // Accumulate raw sums so the result is independent of batch size.
    for (int c = 0; c < batch.n_clusters(); ++c) {
      double norm = 1.0;
      if (cfg.normalize_energy_by == EnergyNorm::PerWater)
        norm = batch.n_waters[static_cast<std::size_t>(c)];
      const double r = (fwd.energies[static_cast<std::size_t>(c)] -
                        (*batch.energies)[static_cast<std::size_t>(c)]) /
                       norm;
      e_acc += cfg.energy_loss == EnergyLossKind::MSE ? r * r : std::abs(r);
    }
    n_clusters += batch.n_clusters();
    if (with_force) {
      if (!batch.forces)
        throw std::invalid_argument("evaluate_loss: force_weight > 0 but no force targets");
      for (std::size_t i = 0; i < batch.forces->size(); ++i) {
        const double df = f_pred[i] - (*batch.forces)[i];
        f_acc += df * df;
      }
      n_comp += static_cast<std::int64_t>(batch.forces->size());
    }
  }
  double loss = cfg.energy_weight * e_acc / static_cast<double>(n_clusters);
  if (with_force && n_comp > 0) loss += cfg.force_weight * f_acc / static_cast<double>(n_comp);
  return loss;
}

namespace {

double mean_energy_per_atom(const ClusterSet& data, std::span<const int> indices) {
  double e_sum = 0.0;
  std::int64_t atoms = 0;
  for (int i : indices) {
    const Cluster& c = data.clusters[static_cast<std::size_t>(i)];
    if (!c.energy) throw std::invalid_argument("train: cluster without energy target");
    e_sum += *c.energy;
    atoms += c.n_atoms();
  }
  return atoms > 0 ? e_sum / static_cast<double>(atoms) : 0.0;
}

Checkpoint make_checkpoint(ModelParams params, std::optional<OptimizerState> opt,
                           std::vector<EpochStats> history, Provenance prov,
                           const std::string& tag, std::uint64_t seed, std::int64_t n_train) {
  Checkpoint c;
  c.params = std::move(params);
  c.optimizer = std::move(opt);
  c.history = std::move(history);
  c.provenance = std::move(prov);
  c.dataset_tag = tag;
  c.seed = seed;
  c.n_train = n_train;
  c.id = compute_checkpoint_id(c);
  return c;
}

}  // namespace

Checkpoint train(const ClusterSet& data, const SplitIndices& split, const InitSpec& init,
                 const LossConfig& loss_cfg, const TrainSchedule& schedule,
                 const std::string& dataset_tag, const EpochHook& hook) {
  loss_cfg.validate();
  if (split.train.empty() || split.validation.empty())
    throw std::invalid_argument("train: empty train or validation split");
  if (schedule.batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");

  // Initialization: the only place scratch and pretrain runs differ.
  ModelParams params;
  Provenance prov;
  if (const auto* scratch = std::get_if<ScratchInit>(&init)) {
    ModelConfig cfg = scratch->config;
    cfg.energy_offset = mean_energy_per_atom(data, split.train);
    params = init_params(cfg, scratch->seed);
    prov.kind = "scratch";
  } else {
    const Checkpoint& parent = std::get<Checkpoint>(init);
    for (int i : split.train)
      for (int z : data.clusters[static_cast<std::size_t>(i)].atomic_numbers)
        parent.params.config.vocab_index(z);  // throws on vocabulary mismatch
    params = parent.params;
    prov.kind = "pretrain";
    prov.lineage = parent.provenance.lineage;
    prov.lineage.push_back(parent.id);
  }

  AdamConfig adam;
  adam.lr = schedule.lr;
  OptimizerState opt = OptimizerState::fresh(params, adam);

  std::vector<EpochStats> history;
  std::vector<int> train_indices(split.train.begin(), split.train.end());

  auto val_loss_of = [&](const ModelParams& p) {
    return evaluate_loss(p, data, split.validation, loss_cfg, schedule.batch_size);
  };

  double val0 = val_loss_of(params);
  history.push_back(
      {0, evaluate_loss(params, data, train_indices, loss_cfg, schedule.batch_size), val0,
       opt.lr});

  ModelParams best_params = params;
  OptimizerState best_opt = opt;
  double best_val = val0;
  int epochs_since_best = 0;
  int epochs_since_lr = 0;

  auto finish = [&](std::vector<EpochStats> hist) {
    return make_checkpoint(best_params, best_opt, std::move(hist), prov, dataset_tag,
                           schedule.seed, static_cast<std::int64_t>(split.train.size()));
  };

  for (int epoch = 1; epoch <= schedule.max_epochs; ++epoch) {
    Rng rng(derive_seed(schedule.seed, 0xe60c000ULL + static_cast<std::uint64_t>(epoch)));
    shuffle(train_indices, rng);

    double train_acc = 0.0;
    std::int64_t seen = 0;
    for (std::size_t lo = 0; lo < train_indices.size();
         lo += static_cast<std::size_t>(schedule.batch_size)) {
      const std::size_t hi =
          std::min(train_indices.size(), lo + static_cast<std::size_t>(schedule.batch_size));
      std::vector<Cluster> chunk;
      for (std::size_t i = lo; i < hi; ++i)
        chunk.push_back(data.clusters[static_cast<std::size_t>(train_indices[i])]);
      const Batch batch = batch_clusters(chunk);
      LossAndGrads lg = loss_and_gradients(params, batch, loss_cfg);
      if (!std::isfinite(lg.loss.total))
        throw TrainingDiverged("train: non-finite batch loss at epoch " + std::to_string(epoch),
                               finish(history));
      adam_step(opt, params, lg.grads);
      train_acc += lg.loss.total * static_cast<double>(hi - lo);
      seen += static_cast<std::int64_t>(hi - lo);
    }
    const double train_loss = train_acc / static_cast<double>(seen);
    const double val = val_loss_of(params);
    history.push_back({epoch, train_loss, val, opt.lr});
    if (!std::isfinite(val))
      throw TrainingDiverged("train: validation loss diverged at epoch " + std::to_string(epoch),
                             finish(history));

    if (val < best_val) {
      best_val = val;
      best_params = params;
      best_opt = opt;
      epochs_since_best = 0;
      epochs_since_lr = 0;
    } else {
      ++epochs_since_best;
      ++epochs_since_lr;
    }

    if (schedule.lr_patience > 0 && epochs_since_lr >= schedule.lr_patience &&
        opt.lr > schedule.min_lr) {
      opt.lr = std::max(schedule.min_lr, opt.lr * schedule.lr_decay);
      epochs_since_lr = 0;
    }
    if (schedule.early_stop_patience > 0 && epochs_since_best >= schedule.early_stop_patience)
      break;

    if (hook) hook(epoch, params, train_indices);
  }
  return finish(history);
}

Checkpoint finetune(const Checkpoint& parent, const ClusterSet& data, const SplitIndices& split,
                    const LossConfig& loss_cfg, const TrainSchedule& schedule,
                    const std::string& dataset_tag, const EpochHook& hook) {
  return train(data, split, InitSpec(parent), loss_cfg, schedule, dataset_tag, hook);
}

// ---------------------------------------------------------------------------
// Checkpoint serialization.
// ---------------------------------------------------------------------------

namespace {

constexpr std::uint32_t kFormatVersion = 1;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void put_f64(std::vector<std::uint8_t>& out, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, 8);
  put_u64(out, bits);
}

struct Reader {
  const std::vector<std::uint8_t>& buf;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > buf.size()) throw std::runtime_error("checkpoint: truncated file");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[pos + i]) << (8 * i);
    pos += 8;
    return v;
  }
  double f64() {
    const std::uint64_t bits = u64();
    double d;
    std::memcpy(&d, &bits, 8);
    return d;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(buf.data() + pos), n);
    pos += n;
    return s;
  }
  std::uint8_t u8() {
    need(1);
    return buf[pos++];
  }
};

void put_array(std::vector<std::uint8_t>& out, const std::string& name, const Tensor& t) {
  put_u32(out, static_cast<std::uint32_t>(name.size()));
  out.insert(out.end(), name.begin(), name.end());
  out.push_back(1);  // dtype f64
  put_u32(out, 2);   // rank
  put_u64(out, static_cast<std::uint64_t>(t.rows));
  put_u64(out, static_cast<std::uint64_t>(t.cols));
  for (double d : t.v) put_f64(out, d);
}

json config_to_json(const ModelConfig& c) {
  return json{{"n_atom_features", c.n_atom_features},
              {"n_interactions", c.n_interactions},
              {"n_rbf", c.n_rbf},
              {"cutoff", c.cutoff},
              {"rbf_width", c.rbf_width},
              {"readout_hidden", c.readout_hidden},
              {"element_vocabulary", c.element_vocabulary},
              {"energy_offset", c.energy_offset}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.n_atom_features = j.at("n_atom_features").get<int>();
  c.n_interactions = j.at("n_interactions").get<int>();
  c.n_rbf = j.at("n_rbf").get<int>();
  c.cutoff = j.at("cutoff").get<double>();
  c.rbf_width = j.at("rbf_width").get<double>();
  c.readout_hidden = j.at("readout_hidden").get<int>();
  c.element_vocabulary = j.at("element_vocabulary").get<std::vector<int>>();
  c.energy_offset = j.at("energy_offset").get<double>();
  return c;
}

std::uint64_t fnv1a(const std::vector<std::uint8_t>& bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 1099511628211ULL;
  }
  return h;
}

std::vector<std::uint8_t> serialize_with_id(const Checkpoint& c, const std::string& id) {
  json meta;
  meta["config"] = config_to_json(c.params.config);
  meta["dataset_tag"] = c.dataset_tag;
  meta["seed"] = c.seed;
  meta["n_train"] = c.n_train;
  meta["provenance"] = {{"kind", c.provenance.kind}, {"lineage", c.provenance.lineage}};
  json hist = json::array();
  for (const auto& h : c.history)
    hist.push_back({h.epoch, h.train_loss, h.val_loss, h.lr});
  meta["history"] = hist;
  meta["optimizer"] = {{"present", c.optimizer.has_value()},
                       {"step", c.optimizer ? c.optimizer->step : 0},
                       {"lr", c.optimizer ? c.optimizer->lr : 0.0},
                       {"beta1", c.optimizer ? c.optimizer->beta1 : 0.0},
                       {"beta2", c.optimizer ? c.optimizer->beta2 : 0.0},
                       {"eps", c.optimizer ? c.optimizer->eps : 0.0}};
  meta["id"] = id;
  const std::string meta_str = meta.dump();

  std::vector<std::uint8_t> out;
  out.push_back('N');
  out.push_back('N');
  out.push_back('P');
  out.push_back('F');
  put_u32(out, kFormatVersion);
  put_u64(out, meta_str.size());
  out.insert(out.end(), meta_str.begin(), meta_str.end());

  std::uint32_t n_arrays = 0;
  visit_params(c.params, [&](const std::string&, const Tensor&) { ++n_arrays; });
  if (c.optimizer) n_arrays *= 3;
  put_u32(out, n_arrays);
  visit_params(c.params,
               [&](const std::string& name, const Tensor& t) { put_array(out, "param." + name, t); });
  if (c.optimizer) {
    std::size_t slot = 0;
    visit_params(c.params, [&](const std::string& name, const Tensor&) {
      put_array(out, "adam.m." + name, c.optimizer->m[slot]);
      put_array(out, "adam.v." + name, c.optimizer->v[slot]);
      ++slot;
    });
  }
  return out;
}

}  // namespace

std::string compute_checkpoint_id(const Checkpoint& c) {
  const auto bytes = serialize_with_id(c, "");
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a(bytes)));
  return buf;
}

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& c) {
  return serialize_with_id(c, c.id);
}

Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader r{bytes};
  if (r.str(4) != "NNPF") throw std::runtime_error("checkpoint: bad magic bytes");
  const std::uint32_t version = r.u32();
  if (version != kFormatVersion)
    throw std::runtime_error("checkpoint: unsupported format version " + std::to_string(version));
  const std::uint64_t meta_len = r.u64();
  const json meta = json::parse(r.str(meta_len));

  Checkpoint c;
  c.params.config = config_from_json(meta.at("config"));
  c.dataset_tag = meta.at("dataset_tag").get<std::string>();
  c.seed = meta.at("seed").get<std::uint64_t>();
  c.n_train = meta.at("n_train").get<std::int64_t>();
  c.provenance.kind = meta.at("provenance").at("kind").get<std::string>();
  c.provenance.lineage = meta.at("provenance").at("lineage").get<std::vector<std::string>>();
  for (const auto& h : meta.at("history"))
    c.history.push_back({h.at(0).get<int>(), h.at(1).get<double>(), h.at(2).get<double>(),
                         h.at(3).get<double>()});
  c.id = meta.at("id").get<std::string>();

  // Rebuild parameter shapes from the config, then fill from arrays.
  c.params = init_params(c.params.config, 0);
  const bool has_opt = meta.at("optimizer").at("present").get<bool>();
  if (has_opt) {
    AdamConfig acfg;
    c.optimizer = OptimizerState::fresh(c.params, acfg);
    c.optimizer->step = meta.at("optimizer").at("step").get<std::int64_t>();
    c.optimizer->lr = meta.at("optimizer").at("lr").get<double>();
    c.optimizer->beta1 = meta.at("optimizer").at("beta1").get<double>();
    c.optimizer->beta2 = meta.at("optimizer").at("beta2").get<double>();
    c.optimizer->eps = meta.at("optimizer").at("eps").get<double>();
  }

  const std::uint32_t n_arrays = r.u32();
  std::map<std::string, Tensor> arrays;
  for (std::uint32_t i = 0; i < n_arrays; ++i) {
    const std::uint32_t name_len = r.u32();
    const std::string name = r.str(name_len);
    const std::uint8_t dtype = r.u8();
    if (dtype != 1) throw std::runtime_error("checkpoint: unsupported dtype");
    const std::uint32_t rank = r.u32();
    if (rank != 2) throw std::runtime_error("checkpoint: unsupported rank");
    const auto rows = static_cast<int>(r.u64());
    const auto cols = static_cast<int>(r.u64());
    Tensor t(rows, cols);
    for (auto& x : t.v) x = r.f64();
    arrays.emplace(name, std::move(t));
  }

  auto take = [&](const std::string& name) -> Tensor {
    auto it = arrays.find(name);
    if (it == arrays.end()) throw std::runtime_error("checkpoint: missing array " + name);
    return it->second;
  };
  std::size_t slot = 0;
  visit_params(c.params, [&](const std::string& name, Tensor& t) {
    Tensor loaded = take("param." + name);
    if (!loaded.same_shape(t))
      throw std::runtime_error("checkpoint: array shape mismatch for " + name);
    t = std::move(loaded);
    if (c.optimizer) {
      c.optimizer->m[slot] = take("adam.m." + name);
      c.optimizer->v[slot] = take("adam.v." + name);
    }
    ++slot;
  });
  return c;
}

void save_checkpoint(const Checkpoint& c, const std::string& path) {
  const auto bytes = serialize_checkpoint(c);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

void write_history_csv(const Checkpoint& c, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << "epoch,train_loss,val_loss,lr\n";
  char buf[128];
  for (const auto& h : c.history) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g\n", h.epoch, h.train_loss, h.val_loss,
                  h.lr);
    out << buf;
  }
}

}  // namespace nnpforge
