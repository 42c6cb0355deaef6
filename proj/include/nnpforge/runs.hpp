// SPDX-License-Identifier: Apache-2.0
//
// Command implementations behind the CLI: each takes a fully resolved JSON
// config, writes its artifacts plus a manifest into the output directory,
// and is bit-identically rerunnable from that manifest.
#pragma once

#include <string>

#include <json.hpp>

namespace nnpforge::runs {

using nlohmann::json;

// Section defaults: model, loss, schedule, md, sampling, surrogate, run.
json default_config();

// Reads a config file; a manifest (detected by its "config" key) yields the
// embedded resolved config, which makes any manifest directly rerunnable.
json load_config_file(const std::string& path);

// Overlays `patch` onto `base` (recursive for objects).
json merge_config(json base, const json& patch);

struct RunOutcome {
  std::string out_dir;
  json manifest;
};

RunOutcome run_gen_data(const json& cfg, const std::string& out_dir);
RunOutcome run_pretrain(const json& cfg, const std::string& out_dir);
RunOutcome run_finetune(const json& cfg, const std::string& out_dir);
RunOutcome run_md(const json& cfg, const std::string& out_dir);
RunOutcome run_validate(const json& cfg, const std::string& out_dir);
RunOutcome run_eval(const json& cfg, const std::string& out_dir);
RunOutcome run_compare(const json& cfg, const std::string& out_dir);

// Dispatch by cfg["run"]["command"].
RunOutcome run_command(const json& cfg, const std::string& out_dir);

// Content hash used for input provenance in manifests.
std::string file_hash(const std::string& path);

}  // namespace nnpforge::runs
