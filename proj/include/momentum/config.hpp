// Flat key = value run configuration with sections cell.*, task.*, optim.*
// and run.*. Unknown keys, duplicate keys and missing required keys are
// errors; '#' starts a comment.
//
//   cell.kind = momentum_lstm     # required
//   cell.h = 64                   # required
//   task.kind = copying           # required
//   optim.kind = rmsprop          # required
//   optim.lr = 0.0002             # required
//   run.batch = 128               # required
//   run.iterations = 2000         # required

#pragma once

#include "momentum/training.hpp"

#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace momentum {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigFile {
    std::vector<std::pair<std::string, std::string>> entries;

    static ConfigFile parse(std::istream& in);
    static ConfigFile load(const std::filesystem::path& path);
};

/// Type-checks every entry; cell.d defaults to the task's input dimension.
TrainConfig to_train_config(const ConfigFile& file);

/// Canonical config text: every key, reals in round-trip precision. Parsing
/// it back reproduces the same run.
std::string echo_config(const TrainConfig& config);

}  // namespace momentum
