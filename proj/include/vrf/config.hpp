#pragma once
// Shared CLI plumbing: data-directory resolution, config validation, and the
// key=value dump behind --dump-config (the same format the --config file
// reader accepts, so dumps round-trip).

#include <iosfwd>
#include <string>
#include <vector>

#include "vrf/data.hpp"
#include "vrf/pipeline.hpp"

namespace vrf {

// $VRF_DATA_DIR when set and nonempty, otherwise ".".
std::string data_dir();

// Relative paths land under data_dir(); absolute paths pass through.
std::string resolve_path(const std::string& path);

// Human-readable problems with a config; empty means valid.
std::vector<std::string> validate(const SyntheticConfig& cfg);
std::vector<std::string> validate(const TrainConfig& cfg);

void dump_config(const SyntheticConfig& cfg, std::ostream& out);
void dump_config(const TrainConfig& cfg, std::ostream& out);

}  // namespace vrf
