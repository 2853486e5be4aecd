#ifndef HSFUSE_CONFIG_HPP
#define HSFUSE_CONFIG_HPP

#include <hsfuse/data.hpp>
#include <hsfuse/trainer.hpp>

#include <map>
#include <string>
#include <vector>

// Flat key=value configuration files ('#' comments, blank lines ignored) with
// command-line overrides. Unknown keys are rejected so manifests stay honest.

namespace hsfuse::config {

using KvMap = std::map<std::string, std::string>;

KvMap read_kv_file(const std::string& path);

// "key=value" fragments from the command line, applied over file contents.
void apply_overrides(KvMap& kv, const std::vector<std::string>& overrides);

train::RunConfig parse_run_config(const KvMap& kv);
data::SynthSpec parse_synth_spec(const KvMap& kv);

// Every resolved key, sorted, for the run manifest.
std::vector<std::pair<std::string, std::string>> describe(const train::RunConfig& cfg);
std::vector<std::pair<std::string, std::string>> describe(const data::SynthSpec& spec);

}  // namespace hsfuse::config

#endif
