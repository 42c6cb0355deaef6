// SPDX-License-Identifier: Apache-2.0
#include "nnpforge/runs.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "nnpforge/dynamics.hpp"
#include "nnpforge/evaluation.hpp"
#include "nnpforge/parallel.hpp"
#include "nnpforge/random.hpp"
#include "nnpforge/sampling.hpp"
#include "nnpforge/surrogate.hpp"
#include "nnpforge/training.hpp"

namespace nnpforge::runs {

namespace fs = std::filesystem;

json default_config() {
  json cfg;
  cfg["model"] = {{"n_atom_features", 64}, {"n_interactions", 3},      {"n_rbf", 32},
                  {"cutoff", 6.0},         {"rbf_width", 6.0 / 32.0},  {"readout_hidden", 32},
                  {"element_vocabulary", json::array({1, 8})}};
  cfg["loss"] = {{"energy_weight", 1.0},
                 {"force_weight", 0.0},
                 {"energy_loss", "mse"},
                 {"normalize_energy_by", "cluster"}};
  cfg["schedule"] = {{"max_epochs", 100}, {"batch_size", 32},   {"lr", 1e-3},
                     {"lr_decay", 0.5},   {"lr_patience", 10},  {"min_lr", 1e-7},
                     {"early_stop_patience", 0}};
  cfg["md"] = {{"dt", 0.25},         {"n_steps", 10000}, {"temperature", 300.0},
               {"tau", 50.0},        {"mode", "nvt"},    {"snapshot_stride", 10},
               {"force_bound", 1e4}};
  cfg["sampling"] = {{"p_tol", 0.05},
                     {"round_period", 5},
                     {"score_count", 256},
                     {"initial_train_fraction", 0.25}};
  cfg["surrogate"] = {{"bond_k", 450.0},
                      {"bond_r0", 0.9572},
                      {"angle_k", 55.0},
                      {"angle_theta0_deg", 104.52},
                      {"lj_epsilon", 0.1521},
                      {"lj_sigma", 3.1507},
                      {"q_oxygen", -0.8340},
                      {"coulomb_switch_on", 8.0},
                      {"coulomb_switch_off", 9.0},
                      {"b_scale", 1.05},
                      {"b_offset_per_water", 0.3},
                      {"b_pair_scale", 0.2},
                      {"b_sigma_factor", 1.08},
                      {"b_indicator_on", 4.5},
                      {"b_indicator_off", 7.5}};
  cfg["run"] = {{"seed", 0}, {"threads", 0}};
  return cfg;
}

json load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config file " + path);
  json j = json::parse(in);
  if (j.contains("config")) return j.at("config");  // manifest: rerun as-is
  return j;
}

json merge_config(json base, const json& patch) {
  if (!patch.is_object() || !base.is_object()) return patch;
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    if (base.contains(it.key()) && base[it.key()].is_object() && it.value().is_object())
      base[it.key()] = merge_config(base[it.key()], it.value());
    else
      base[it.key()] = it.value();
  }
  return base;
}

std::string file_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot open " + path);
  std::uint64_t h = 1469598103934665603ULL;
  char buf[65536];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ULL;
    }
  }
  char out[32];
  std::snprintf(out, sizeof(out), "fnv1a:%016llx", static_cast<unsigned long long>(h));
  return out;
}

namespace {

ModelConfig model_config_from(const json& cfg) {
  const json& m = cfg.at("model");
  ModelConfig c;
  c.n_atom_features = m.at("n_atom_features").get<int>();
  c.n_interactions = m.at("n_interactions").get<int>();
  c.n_rbf = m.at("n_rbf").get<int>();
  c.cutoff = m.at("cutoff").get<double>();
  c.rbf_width = m.contains("rbf_width") && m.at("rbf_width").get<double>() > 0
                    ? m.at("rbf_width").get<double>()
                    : c.cutoff / c.n_rbf;
  c.readout_hidden = m.at("readout_hidden").get<int>();
  c.element_vocabulary = m.at("element_vocabulary").get<std::vector<int>>();
  c.validate();
  return c;
}

LossConfig loss_config_from(const json& cfg) {
  const json& l = cfg.at("loss");
  LossConfig c;
  c.energy_weight = l.at("energy_weight").get<double>();
  c.force_weight = l.at("force_weight").get<double>();
  const std::string kind = l.at("energy_loss").get<std::string>();
  if (kind == "mse") c.energy_loss = EnergyLossKind::MSE;
  else if (kind == "mae") c.energy_loss = EnergyLossKind::MAE;
  else throw std::invalid_argument("loss.energy_loss must be 'mse' or 'mae'");
  const std::string norm = l.at("normalize_energy_by").get<std::string>();
  if (norm == "cluster") c.normalize_energy_by = EnergyNorm::Cluster;
  else if (norm == "per_water") c.normalize_energy_by = EnergyNorm::PerWater;
  else throw std::invalid_argument("loss.normalize_energy_by must be 'cluster' or 'per_water'");
  c.validate();
  return c;
}

TrainSchedule schedule_from(const json& cfg) {
  const json& s = cfg.at("schedule");
  TrainSchedule t;
  t.max_epochs = s.at("max_epochs").get<int>();
  t.batch_size = s.at("batch_size").get<int>();
  t.lr = s.at("lr").get<double>();
  t.lr_decay = s.at("lr_decay").get<double>();
  t.lr_patience = s.at("lr_patience").get<int>();
  t.min_lr = s.at("min_lr").get<double>();
  t.early_stop_patience = s.at("early_stop_patience").get<int>();
  t.seed = cfg.at("run").at("seed").get<std::uint64_t>();
  return t;
}

MDConfig md_config_from(const json& cfg) {
  const json& m = cfg.at("md");
  MDConfig c;
  c.dt = m.at("dt").get<double>();
  c.n_steps = m.at("n_steps").get<int>();
  c.temperature = m.at("temperature").get<double>();
  c.tau = m.at("tau").get<double>();
  const std::string mode = m.at("mode").get<std::string>();
  if (mode == "nvt") c.mode = Ensemble::NVT;
  else if (mode == "nve") c.mode = Ensemble::NVE;
  else throw std::invalid_argument("md.mode must be 'nvt' or 'nve'");
  c.snapshot_stride = m.at("snapshot_stride").get<int>();
  c.force_bound = m.at("force_bound").get<double>();
  c.seed = cfg.at("run").at("seed").get<std::uint64_t>();
  c.validate();
  return c;
}

SurrogateSpec surrogate_from(const json& cfg) {
  const json& s = cfg.at("surrogate");
  SurrogateSpec sp;
  sp.bond_k = s.at("bond_k").get<double>();
  sp.bond_r0 = s.at("bond_r0").get<double>();
  sp.angle_k = s.at("angle_k").get<double>();
  sp.angle_theta0 = s.at("angle_theta0_deg").get<double>() * 3.14159265358979323846 / 180.0;
  sp.lj_epsilon = s.at("lj_epsilon").get<double>();
  sp.lj_sigma = s.at("lj_sigma").get<double>();
  sp.q_oxygen = s.at("q_oxygen").get<double>();
  sp.q_hydrogen = -0.5 * sp.q_oxygen;
  sp.coulomb_switch_on = s.at("coulomb_switch_on").get<double>();
  sp.coulomb_switch_off = s.at("coulomb_switch_off").get<double>();
  sp.b_scale = s.at("b_scale").get<double>();
  sp.b_offset_per_water = s.at("b_offset_per_water").get<double>();
  sp.b_pair_scale = s.at("b_pair_scale").get<double>();
  sp.b_sigma_factor = s.at("b_sigma_factor").get<double>();
  sp.b_indicator_on = s.at("b_indicator_on").get<double>();
  sp.b_indicator_off = s.at("b_indicator_off").get<double>();
  sp.validate();
  return sp;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << text;
}

RunOutcome finish_run(const std::string& command, const json& cfg, const fs::path& out_dir,
                      json inputs, json outputs, json extra = json::object()) {
  json manifest;
  manifest["command"] = command;
  manifest["config"] = cfg;
  manifest["inputs"] = std::move(inputs);
  manifest["outputs"] = std::move(outputs);
  for (auto it = extra.begin(); it != extra.end(); ++it) manifest[it.key()] = it.value();
  write_text(out_dir / "manifest.json", manifest.dump(2) + "\n");
  return {out_dir.string(), std::move(manifest)};
}

fs::path prepare_out_dir(const std::string& out_dir) {
  if (out_dir.empty()) throw std::invalid_argument("output directory required");
  fs::path p(out_dir);
  fs::create_directories(p);
  return p;
}

SplitIndices resolve_splits(const json& run, const ClusterSet& data, std::uint64_t seed) {
  if (run.contains("splits_dir") && !run.at("splits_dir").get<std::string>().empty())
    return read_split_files(run.at("splits_dir").get<std::string>());
  std::array<double, 3> fr{0.8, 0.1, 0.1};
  if (run.contains("split_fractions")) {
    const auto v = run.at("split_fractions").get<std::vector<double>>();
    if (v.size() != 3) throw std::invalid_argument("split_fractions must have 3 entries");
    fr = {v[0], v[1], v[2]};
  }
  return split_dataset(data, fr, seed);
}

std::string dataset_tag_of(const ClusterSet& set) {
  std::string tag;
  if (auto it = set.tags.find("tag"); it != set.tags.end()) tag = it->second;
  if (auto it = set.tags.find("pes"); it != set.tags.end())
    tag += (tag.empty() ? "" : "-") + ("pes" + it->second);
  return tag.empty() ? "unknown" : tag;
}

Checkpoint train_like_run(const json& cfg, const fs::path& out, bool is_finetune,
                          json& inputs, json& outputs) {
  const json& run = cfg.at("run");
  const std::string data_path = run.at("data").get<std::string>();
  ClusterSet data = read_xyz_file(data_path);
  inputs[data_path] = file_hash(data_path);

  const std::uint64_t seed = run.at("seed").get<std::uint64_t>();
  const SplitIndices split = resolve_splits(run, data, seed);
  const LossConfig loss = loss_config_from(cfg);
  const TrainSchedule sched = schedule_from(cfg);
  const std::string tag = dataset_tag_of(data);

  Checkpoint ckpt;
  if (is_finetune) {
    const std::string parent_path = run.at("from").get<std::string>();
    const Checkpoint parent = load_checkpoint(parent_path);
    inputs[parent_path] = file_hash(parent_path);
    const bool active = run.contains("active") && run.at("active").get<bool>();
    if (active) {
      const json& sampling = cfg.at("sampling");
      const double p_tol = sampling.at("p_tol").get<double>();
      const int round_period = sampling.at("round_period").get<int>();
      const int score_count = sampling.at("score_count").get<int>();
      const double init_frac = sampling.at("initial_train_fraction").get<double>();

      std::vector<int> train_idx = split.train;
      Rng rng(derive_seed(seed, 0x9001));
      shuffle(train_idx, rng);
      const auto n_init = static_cast<std::size_t>(
          std::max<double>(1.0, init_frac * static_cast<double>(train_idx.size())));
      SamplingPools pools;
      pools.train_subset.assign(train_idx.begin(), train_idx.begin() + n_init);
      pools.reserve.assign(train_idx.begin() + n_init, train_idx.end());

      ActiveResult res = active_training_loop(parent, data, std::move(pools), split.validation,
                                              loss, sched, p_tol, round_period, score_count, tag);
      write_promotion_log_csv(res.pools, (out / "promotions.csv").string());
      outputs.push_back("promotions.csv");
      ckpt = std::move(res.checkpoint);
    } else {
      ckpt = finetune(parent, data, split, loss, sched, tag);
    }
  } else {
    ScratchInit init{model_config_from(cfg), seed};
    ckpt = train(data, split, InitSpec(init), loss, sched, tag);
  }

  save_checkpoint(ckpt, (out / "best.ckpt").string());
  write_history_csv(ckpt, (out / "history.csv").string());
  write_split_files(split, out.string());
  outputs.push_back("best.ckpt");
  outputs.push_back("history.csv");
  return ckpt;
}

}  // namespace

RunOutcome run_gen_data(const json& cfg, const std::string& out_dir) {
  const fs::path out = prepare_out_dir(out_dir);
  const json& run = cfg.at("run");
  const SurrogateSpec spec = surrogate_from(cfg);
  const std::uint64_t seed = run.at("seed").get<std::uint64_t>();
  json inputs = json::object();
  json outputs = json::array();

  ClusterSet set;
  if (run.contains("nonminima") && run.at("nonminima").get<bool>()) {
    const std::string minima_path = run.at("from_minima").get<std::string>();
    const ClusterSet minima = read_xyz_file(minima_path);
    inputs[minima_path] = file_hash(minima_path);
    const double temp = run.at("temperature").get<double>();
    const int steps = run.contains("md_steps") ? run.at("md_steps").get<int>() : 400;
    set = generate_nonminima(spec, minima, temp, steps, seed);
  } else {
    const auto sizes = run.at("sizes").get<std::vector<int>>();
    const int count = run.at("count").get<int>();
    set = generate_minima(spec, sizes, count, seed);
    const std::string pes = run.at("pes").get<std::string>();
    if (pes == "B") {
      set = relabel_pes_b(spec, set);
    } else if (pes != "A") {
      throw std::invalid_argument("gen-data: pes must be 'A' or 'B'");
    }
  }

  write_xyz_file(set, (out / "dataset.xyz").string());
  outputs.push_back("dataset.xyz");
  if (run.contains("split") && run.at("split").get<bool>()) {
    const SplitIndices split = split_dataset(
        set, {0.8, 0.1, 0.1}, seed);
    write_split_files(split, out.string());
    outputs.push_back("train.idx");
    outputs.push_back("val.idx");
    outputs.push_back("test.idx");
  }
  json extra;
  extra["dataset_tags"] = set.tags;
  extra["n_clusters"] = set.size();
  return finish_run("gen-data", cfg, out, std::move(inputs), std::move(outputs), extra);
}

RunOutcome run_pretrain(const json& cfg, const std::string& out_dir) {
  const fs::path out = prepare_out_dir(out_dir);
  json inputs = json::object();
  json outputs = json::array();
  const Checkpoint ckpt = train_like_run(cfg, out, false, inputs, outputs);
  json extra;
  extra["checkpoint_id"] = ckpt.id;
  extra["provenance"] = {{"kind", ckpt.provenance.kind}, {"lineage", ckpt.provenance.lineage}};
  extra["dataset_tag"] = ckpt.dataset_tag;
  return finish_run("pretrain", cfg, out, std::move(inputs), std::move(outputs), extra);
}

RunOutcome run_finetune(const json& cfg, const std::string& out_dir) {
  const fs::path out = prepare_out_dir(out_dir);
  json inputs = json::object();
  json outputs = json::array();
  const Checkpoint ckpt = train_like_run(cfg, out, true, inputs, outputs);
  json extra;
  extra["checkpoint_id"] = ckpt.id;
  extra["provenance"] = {{"kind", ckpt.provenance.kind}, {"lineage", ckpt.provenance.lineage}};
  extra["dataset_tag"] = ckpt.dataset_tag;
  return finish_run("finetune", cfg, out, std::move(inputs), std::move(outputs), extra);
}

namespace {

std::unique_ptr<ForceProvider> provider_from(const json& cfg, json& inputs) {
  const json& run = cfg.at("run");
  if (run.contains("from") && !run.at("from").get<std::string>().empty()) {
    const std::string path = run.at("from").get<std::string>();
    Checkpoint ckpt = load_checkpoint(path);
    inputs[path] = file_hash(path);
    return std::make_unique<NnpProvider>(std::move(ckpt.params), "nnp:" + ckpt.id);
  }
  if (run.contains("pes")) {
    const std::string pes = run.at("pes").get<std::string>();
    const SurrogateSpec spec = surrogate_from(cfg);
    if (pes == "A") return std::make_unique<SurrogateProvider>(spec, Surface::A);
    if (pes == "B") return std::make_unique<SurrogateProvider>(spec, Surface::B);
    throw std::invalid_argument("pes must be 'A' or 'B'");
  }
  throw std::invalid_argument("need a checkpoint ('from') or a surrogate ('pes')");
}

}  // namespace

RunOutcome run_md(const json& cfg, const std::string& out_dir) {
  const fs::path out = prepare_out_dir(out_dir);
  const json& run = cfg.at("run");
  json inputs = json::object();
  json outputs = json::array();

  const auto provider = provider_from(cfg, inputs);
  const std::string cluster_path = run.at("cluster").get<std::string>();
  const ClusterSet clusters = read_xyz_file(cluster_path, false);
  inputs[cluster_path] = file_hash(cluster_path);
  const int cluster_index = run.contains("cluster_index") ? run.at("cluster_index").get<int>() : 0;
  const Cluster& start = clusters.clusters.at(static_cast<std::size_t>(cluster_index));

  MDConfig md = md_config_from(cfg);
  const int n_seeds = run.contains("seeds") ? run.at("seeds").get<int>() : 1;
  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < n_seeds; ++i)
    seeds.push_back(derive_seed(md.seed, static_cast<std::uint64_t>(i)));

  const int threads = resolve_threads(run.value("threads", 0));
  const auto trajectories = run_md_ensemble(*provider, start, md, seeds, threads);

  json verdicts = json::array();
  for (std::size_t i = 0; i < trajectories.size(); ++i) {
    const auto& traj = trajectories[i];
    const std::string base = "traj_" + std::to_string(i);
    write_text(out / (base + ".xyz"), write_trajectory_xyz(traj));
    json sidecar;
    sidecar["provenance"] = traj.provenance;
    sidecar["seed"] = seeds[i];
    sidecar["n_frames"] = traj.frames.size();
    sidecar["truncated"] = traj.truncated;
    sidecar["truncation_reason"] = traj.truncation_reason;
    sidecar["config"] = cfg.at("md");
    write_text(out / (base + ".json"), sidecar.dump(2) + "\n");
    outputs.push_back(base + ".xyz");
    outputs.push_back(base + ".json");
    verdicts.push_back(traj.truncated ? "unstable" : "completed");
  }
  json extra;
  extra["verdicts"] = verdicts;
  return finish_run("md", cfg, out, std::move(inputs), std::move(outputs), extra);
}

RunOutcome run_validate(const json& cfg, const std::string& out_dir) {
  const fs::path out = prepare_out_dir(out_dir);
  const json& run = cfg.at("run");
  json inputs = json::object();
  json outputs = json::array();

  const std::string traj_path = run.at("traj").get<std::string>();
  std::ifstream in(traj_path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot open " + traj_path);
  std::ostringstream ss;
  ss << in.rdbuf();
  const Trajectory traj = read_trajectory_xyz(ss.str());
  inputs[traj_path] = file_hash(traj_path);

  const SurrogateSpec spec = surrogate_from(cfg);
  const std::string pes = run.at("pes").get<std::string>();
  const SurrogateProvider reference(spec, pes == "B" ? Surface::B : Surface::A);
  const TrajectoryValidation v = validate_trajectory(traj, reference);

  std::string csv = "step,E_nnp,E_reference\n";
  char buf[96];
  for (std::size_t i = 0; i < traj.frames.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%lld,%.17g,%.17g\n",
                  static_cast<long long>(traj.frames[i].step), traj.frames[i].energy,
                  v.reference_energies[i]);
    csv += buf;
  }
  write_text(out / "validation.csv", csv);
  outputs.push_back("validation.csv");
  json extra;
  extra["verdict"] = v.valid ? "valid" : "invalid";
  return finish_run("validate", cfg, out, std::move(inputs), std::move(outputs), extra);
}

RunOutcome run_eval(const json& cfg, const std::string& out_dir) {
  const fs::path out = prepare_out_dir(out_dir);
  const json& run = cfg.at("run");
  json inputs = json::object();
  json outputs = json::array();

  const std::string ckpt_path = run.at("from").get<std::string>();
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  inputs[ckpt_path] = file_hash(ckpt_path);
  const std::string test_path = run.at("test").get<std::string>();
  const ClusterSet test = read_xyz_file(test_path);
  inputs[test_path] = file_hash(test_path);

  EvalOptions opts;
  opts.tag = dataset_tag_of(test);
  opts.with_histogram = run.contains("hist") && run.at("hist").get<bool>();
  opts.threads = run.value("threads", 0);
  MetricsReport report = evaluate_model(ckpt.params, test, opts);
  report.model_id = ckpt.id;
  report.initialization = ckpt.provenance.kind;
  report.n_train = ckpt.n_train;

  write_text(out / "report.json", metrics_to_json(report) + "\n");
  outputs.push_back("report.json");
  if (report.pred_hist) {
    write_text(out / "hist_pred.csv", histogram_to_csv(*report.pred_hist));
    write_text(out / "hist_ref.csv", histogram_to_csv(*report.ref_hist));
    outputs.push_back("hist_pred.csv");
    outputs.push_back("hist_ref.csv");
  }
  json extra;
  extra["e_h2o_mae"] = report.e_mae;
  return finish_run("eval", cfg, out, std::move(inputs), std::move(outputs), extra);
}

RunOutcome run_compare(const json& cfg, const std::string& out_dir) {
  const fs::path out = prepare_out_dir(out_dir);
  const json& run = cfg.at("run");
  json inputs = json::object();
  json outputs = json::array();

  const auto paths = run.at("reports").get<std::vector<std::string>>();
  std::vector<MetricsReport> rows;
  for (const auto& p : paths) {
    std::ifstream in(p);
    if (!in) throw std::invalid_argument("cannot open report " + p);
    std::ostringstream ss;
    ss << in.rdbuf();
    rows.push_back(metrics_from_json(ss.str()));
    inputs[p] = file_hash(p);
  }
  std::string host = "local";
  if (const char* h = std::getenv("HOSTNAME")) host = h;
  const std::string md = comparison_markdown(rows, host);
  write_text(out / "comparison.md", md);
  outputs.push_back("comparison.md");
  return finish_run("compare", cfg, out, std::move(inputs), std::move(outputs));
}

RunOutcome run_command(const json& cfg, const std::string& out_dir) {
  const std::string cmd = cfg.at("run").at("command").get<std::string>();
  if (cmd == "gen-data") return run_gen_data(cfg, out_dir);
  if (cmd == "pretrain") return run_pretrain(cfg, out_dir);
  if (cmd == "finetune") return run_finetune(cfg, out_dir);
  if (cmd == "md") return run_md(cfg, out_dir);
  if (cmd == "validate") return run_validate(cfg, out_dir);
  if (cmd == "eval") return run_eval(cfg, out_dir);
  if (cmd == "compare") return run_compare(cfg, out_dir);
  throw std::invalid_argument("unknown command: " + cmd);
}

}  // namespace nnpforge::runs
