// SPDX-License-Identifier: Apache-2.0
//
// nnpforge CLI: data generation, pretraining, finetuning (optionally with
// active sampling), molecular dynamics, trajectory validation, evaluation
// and comparison reports. Every command resolves its configuration from
// defaults, an optional --config file (plain config or a previous run's
// manifest) and flag overrides, and echoes the result into the run manifest.
//
// Exit codes: 0 success (including unstable-trajectory science outcomes),
// 2 usage error, 3 numerical failure.
#include <chrono>
#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "nnpforge/runs.hpp"
#include "nnpforge/training.hpp"

namespace {

using nlohmann::json;

std::string default_out_dir(const std::string& command) {
  const auto now = std::chrono::system_clock::now().time_since_epoch();
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now).count();
  return "runs/" + std::to_string(ms) + "-" + command;
}

struct CommonFlags {
  std::string config_file;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int threads = 0;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config_file, "JSON config file or a run manifest");
  cmd->add_option("--out", flags.out_dir, "Output directory (default runs/<timestamp>-<cmd>)");
  cmd->add_option("--seed", flags.seed, "Global seed")->each([&](const std::string&) {
    flags.seed_set = true;
  });
  cmd->add_option("--threads", flags.threads,
                  "Worker cap (default: NNPFORGE_THREADS or 1)");
}

json resolve_config(const CommonFlags& flags, const std::string& command) {
  json cfg = nnpforge::runs::default_config();
  if (!flags.config_file.empty())
    cfg = nnpforge::runs::merge_config(cfg, nnpforge::runs::load_config_file(flags.config_file));
  cfg["run"]["command"] = command;
  if (flags.seed_set) cfg["run"]["seed"] = flags.seed;
  if (flags.threads > 0) cfg["run"]["threads"] = flags.threads;
  return cfg;
}

int execute(const json& cfg, const CommonFlags& flags) {
  const std::string command = cfg.at("run").at("command").get<std::string>();
  const std::string out = flags.out_dir.empty() ? default_out_dir(command) : flags.out_dir;
  const auto outcome = nnpforge::runs::run_command(cfg, out);
  std::printf("%s: wrote %s\n", command.c_str(), outcome.out_dir.c_str());
  if (outcome.manifest.contains("verdict"))
    std::printf("verdict: %s\n", outcome.manifest.at("verdict").get<std::string>().c_str());
  if (outcome.manifest.contains("verdicts"))
    for (const auto& v : outcome.manifest.at("verdicts"))
      std::printf("trajectory: %s\n", v.get<std::string>().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nnpforge: neural network potential training and dynamics toolkit"};
  app.require_subcommand(1);

  CommonFlags flags;
  json overrides = json::object();

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate surrogate datasets");
  add_common(gen, flags);
  std::string gen_pes = "A";
  std::string gen_sizes = "3-6";
  int gen_count = 100;
  bool gen_nonminima = false;
  std::string gen_from_minima;
  double gen_temp = 300.0;
  int gen_md_steps = 400;
  bool gen_split = false;
  gen->add_option("--pes", gen_pes, "Surface label: A or B")->required();
  gen->add_option("--sizes", gen_sizes, "Cluster sizes, e.g. 3-8 or 3,4,5");
  gen->add_option("--count", gen_count, "Number of minima to emit");
  gen->add_flag("--nonminima", gen_nonminima, "Generate non-minima from --from-minima");
  gen->add_option("--from-minima", gen_from_minima, "Minima .xyz for non-minima generation");
  gen->add_option("--temp", gen_temp, "MD temperature for non-minima (K)");
  gen->add_option("--md-steps", gen_md_steps, "MD steps per non-minima run");
  gen->add_flag("--split", gen_split, "Also write 0.8:0.1:0.1 split files");

  // pretrain / finetune
  auto* pre = app.add_subcommand("pretrain", "Train a model from scratch");
  auto* fine = app.add_subcommand("finetune", "Continue training from a checkpoint");
  std::string data_path, splits_dir, from_ckpt;
  int epochs = -1;
  int batch_size = -1;
  double lr = -1.0;
  double force_weight = -1.0;
  double energy_weight = -1.0;
  bool active = false;
  double p_tol = -1.0;
  int round_period = -1;
  int score_count = -1;
  for (CLI::App* cmd : {pre, fine}) {
    add_common(cmd, flags);
    cmd->add_option("--data", data_path, "Training dataset (.xyz)")->required();
    cmd->add_option("--splits", splits_dir, "Directory with train/val/test.idx (default: seeded 0.8:0.1:0.1)");
    cmd->add_option("--epochs", epochs, "Max epochs");
    cmd->add_option("--batch-size", batch_size, "Mini-batch size");
    cmd->add_option("--lr", lr, "Learning rate");
    cmd->add_option("--force-weight", force_weight, "Force loss weight");
    cmd->add_option("--energy-weight", energy_weight, "Energy loss weight");
  }
  fine->add_option("--from", from_ckpt, "Parent checkpoint")->required();
  fine->add_flag("--active", active, "Enable erf-threshold active sampling");
  fine->add_option("--p-tol", p_tol, "Active sampling tolerance in (0,1)");
  fine->add_option("--round-period", round_period, "Epochs between active rounds");
  fine->add_option("--score-count", score_count, "Reserve samples scored per round");

  // md
  auto* md = app.add_subcommand("md", "Run molecular dynamics");
  add_common(md, flags);
  std::string md_from, md_pes, md_cluster, md_mode;
  int md_steps = -1, md_seeds = 1, md_stride = -1, md_cluster_index = 0;
  double md_temp = -1.0, md_dt = -1.0, md_tau = -1.0;
  md->add_option("--from", md_from, "NNP checkpoint force provider");
  md->add_option("--pes", md_pes, "Surrogate force provider: A or B");
  md->add_option("--cluster", md_cluster, "Starting configuration (.xyz)")->required();
  md->add_option("--cluster-index", md_cluster_index, "Frame index within the file");
  md->add_option("--temp", md_temp, "Target temperature (K)");
  md->add_option("--steps", md_steps, "Number of steps");
  md->add_option("--dt", md_dt, "Timestep (fs)");
  md->add_option("--tau", md_tau, "Berendsen time constant (fs)");
  md->add_option("--mode", md_mode, "nvt or nve");
  md->add_option("--stride", md_stride, "Snapshot stride");
  md->add_option("--seeds", md_seeds, "Ensemble size (seeds derived from --seed)");

  // validate
  auto* val = app.add_subcommand("validate", "Re-score a trajectory with a reference surface");
  add_common(val, flags);
  std::string val_traj, val_pes = "A";
  val->add_option("--traj", val_traj, "Trajectory .xyz")->required();
  val->add_option("--pes", val_pes, "Reference surface: A or B");

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a test set");
  add_common(ev, flags);
  std::string ev_from, ev_test;
  bool ev_hist = false;
  ev->add_option("--from", ev_from, "Checkpoint")->required();
  ev->add_option("--test", ev_test, "Test dataset (.xyz)")->required();
  ev->add_flag("--hist", ev_hist, "Emit E_H2O histograms (predicted and reference)");

  // compare
  auto* cmp = app.add_subcommand("compare", "Tabulate evaluation reports");
  add_common(cmp, flags);
  std::vector<std::string> cmp_reports;
  std::string cmp_rows_file;
  cmp->add_option("--rows", cmp_rows_file, "JSON array of report paths");
  cmp->add_option("--report", cmp_reports, "Report path (repeatable)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_exit_code() == 0 ? 0 : 2;
  }

  try {
    json cfg;
    // A value from an explicitly passed flag overrides the config file; an
    // untouched flag must not clobber config (or manifest-rerun) values.
    auto passed = [](CLI::App* cmd, const std::string& name) { return cmd->count(name) > 0; };
    auto set_default = [](json& j, const std::string& key, const json& v) {
      if (!j["run"].contains(key)) j["run"][key] = v;
    };
    if (gen->parsed()) {
      cfg = resolve_config(flags, "gen-data");
      cfg["run"]["pes"] = gen_pes;  // required flag
      if (passed(gen, "--sizes") || !cfg["run"].contains("sizes")) {
        // "3-8" or "3,4,5" -> explicit list
        std::vector<int> sizes;
        if (gen_sizes.find('-') != std::string::npos) {
          const auto dash = gen_sizes.find('-');
          const int lo = std::stoi(gen_sizes.substr(0, dash));
          const int hi = std::stoi(gen_sizes.substr(dash + 1));
          if (hi < lo) throw std::invalid_argument("bad --sizes range");
          for (int s = lo; s <= hi; ++s) sizes.push_back(s);
        } else {
          std::size_t pos = 0;
          while (pos < gen_sizes.size()) {
            auto comma = gen_sizes.find(',', pos);
            if (comma == std::string::npos) comma = gen_sizes.size();
            sizes.push_back(std::stoi(gen_sizes.substr(pos, comma - pos)));
            pos = comma + 1;
          }
        }
        cfg["run"]["sizes"] = sizes;
      }
      if (passed(gen, "--count")) cfg["run"]["count"] = gen_count;
      set_default(cfg, "count", gen_count);
      if (passed(gen, "--nonminima")) cfg["run"]["nonminima"] = gen_nonminima;
      set_default(cfg, "nonminima", false);
      if (cfg["run"]["nonminima"].get<bool>()) {
        if (passed(gen, "--from-minima")) cfg["run"]["from_minima"] = gen_from_minima;
        if (!cfg["run"].contains("from_minima"))
          throw std::invalid_argument("--nonminima requires --from-minima");
        if (passed(gen, "--temp")) cfg["run"]["temperature"] = gen_temp;
        set_default(cfg, "temperature", gen_temp);
        if (passed(gen, "--md-steps")) cfg["run"]["md_steps"] = gen_md_steps;
        set_default(cfg, "md_steps", gen_md_steps);
      }
      if (passed(gen, "--split")) cfg["run"]["split"] = gen_split;
      set_default(cfg, "split", false);
    } else if (pre->parsed() || fine->parsed()) {
      CLI::App* cmd = pre->parsed() ? pre : fine;
      cfg = resolve_config(flags, pre->parsed() ? "pretrain" : "finetune");
      cfg["run"]["data"] = data_path;  // required flag
      if (passed(cmd, "--splits")) cfg["run"]["splits_dir"] = splits_dir;
      if (epochs >= 0) cfg["schedule"]["max_epochs"] = epochs;
      if (batch_size > 0) cfg["schedule"]["batch_size"] = batch_size;
      if (lr > 0) cfg["schedule"]["lr"] = lr;
      if (force_weight >= 0) cfg["loss"]["force_weight"] = force_weight;
      if (energy_weight >= 0) cfg["loss"]["energy_weight"] = energy_weight;
      if (fine->parsed()) {
        cfg["run"]["from"] = from_ckpt;  // required flag
        if (passed(fine, "--active")) cfg["run"]["active"] = active;
        set_default(cfg, "active", false);
        if (p_tol > 0) cfg["sampling"]["p_tol"] = p_tol;
        if (round_period > 0) cfg["sampling"]["round_period"] = round_period;
        if (score_count > 0) cfg["sampling"]["score_count"] = score_count;
      }
    } else if (md->parsed()) {
      cfg = resolve_config(flags, "md");
      if (passed(md, "--from")) cfg["run"]["from"] = md_from;
      if (passed(md, "--pes")) cfg["run"]["pes"] = md_pes;
      cfg["run"]["cluster"] = md_cluster;  // required flag
      if (passed(md, "--cluster-index")) cfg["run"]["cluster_index"] = md_cluster_index;
      set_default(cfg, "cluster_index", 0);
      if (passed(md, "--seeds")) cfg["run"]["seeds"] = md_seeds;
      set_default(cfg, "seeds", 1);
      if (md_temp >= 0) cfg["md"]["temperature"] = md_temp;
      if (md_steps > 0) cfg["md"]["n_steps"] = md_steps;
      if (md_dt > 0) cfg["md"]["dt"] = md_dt;
      if (md_tau > 0) cfg["md"]["tau"] = md_tau;
      if (md_stride > 0) cfg["md"]["snapshot_stride"] = md_stride;
      if (!md_mode.empty()) cfg["md"]["mode"] = md_mode;
    } else if (val->parsed()) {
      cfg = resolve_config(flags, "validate");
      cfg["run"]["traj"] = val_traj;  // required flag
      if (passed(val, "--pes")) cfg["run"]["pes"] = val_pes;
      set_default(cfg, "pes", "A");
    } else if (ev->parsed()) {
      cfg = resolve_config(flags, "eval");
      cfg["run"]["from"] = ev_from;    // required flag
      cfg["run"]["test"] = ev_test;    // required flag
      if (passed(ev, "--hist")) cfg["run"]["hist"] = ev_hist;
      set_default(cfg, "hist", false);
    } else if (cmp->parsed()) {
      cfg = resolve_config(flags, "compare");
      std::vector<std::string> reports = cmp_reports;
      if (!cmp_rows_file.empty()) {
        const json rows = nnpforge::runs::load_config_file(cmp_rows_file);
        for (const auto& r : rows) reports.push_back(r.get<std::string>());
      }
      if (reports.empty()) throw std::invalid_argument("compare: no reports given");
      cfg["run"]["reports"] = reports;
    }
    return execute(cfg, flags);
  } catch (const nnpforge::TrainingDiverged& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    if (e.best && !flags.out_dir.empty()) {
      nnpforge::save_checkpoint(*e.best, flags.out_dir + "/best.ckpt");
      std::fprintf(stderr, "best checkpoint preserved at %s/best.ckpt\n", flags.out_dir.c_str());
    }
    return 3;
  } catch (const nnpforge::NumericalError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 3;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
