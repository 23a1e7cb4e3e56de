#pragma once

#include <iosfwd>
#include <string>

#include "specmon/neural/network.hpp"

namespace specmon::nn {

// Checkpoint layout:
//   line 1: "specmon-checkpoint 1"
//   line 2: network config as one JSON object
//   then:   uint64 parameter count, followed by that many float32 values,
//           all little-endian.
void save_checkpoint(std::ostream& os, const DanNet<float>& net);
void save_checkpoint(const std::string& path, const DanNet<float>& net);
DanNet<float> load_checkpoint(std::istream& is);
DanNet<float> load_checkpoint(const std::string& path);

std::string config_to_json(const NetworkConfig& config);
NetworkConfig config_from_json(const std::string& text);

}  // namespace specmon::nn
