#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ubr/phantom.hpp"
#include "ubr/trainer.hpp"

namespace ubr {

/// Everything a pipeline run can be configured with. Text form is INI with
/// sections [phantom], [sampler], [network] and [train].
struct RunConfig {
  PhantomSpec phantom;
  TrainConfig train;

  bool operator==(const RunConfig&) const = default;
};

/// Rejects unknown sections and keys, naming `context` and the key.
RunConfig parse_run_config(const std::string& text, const std::string& context = "config");
RunConfig load_run_config(const std::filesystem::path& path);
std::string to_ini(const RunConfig& config);
void write_run_config(const std::filesystem::path& path, const RunConfig& config);

/// Sets "section.key" from text, e.g. set_option(cfg, "train.iterations", "100").
void set_option(RunConfig& config, const std::string& dotted_key, const std::string& value);

/// All "section.key" names accepted by set_option.
std::vector<std::string> option_names();

std::string format_double(double value);
std::string stages_to_text(const std::vector<StageSpec>& stages);
std::vector<StageSpec> stages_from_text(const std::string& text);

}  // namespace ubr
