#pragma once

#include <nlohmann/json.hpp>
#include <string>
#include <utility>
#include <vector>

namespace qlc {

struct RunOutput {
  nlohmann::json report;
  // (filename, content) pairs, deterministic order
  std::vector<std::pair<std::string, std::string>> artifacts;
  bool numeric_ok = true;
};

// Commands: fit, target, rate, bounds, entropy, simulate, verify.
// config is the parsed JSON config; workers <= 0 picks QLC_THREADS or the
// hardware count.
RunOutput run_command(const std::string& command, const nlohmann::json& config, int workers = 0);

}  // namespace qlc
