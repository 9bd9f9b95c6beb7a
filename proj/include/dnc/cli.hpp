/*
 * Copyright 2026 The DNC Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// The `dnc` command line: simulate, fit, predict, evaluate.
//
// Settings are resolved as built-in defaults, then the --config JSON file,
// then explicit flags.

#ifndef DNC_CLI_HPP
#define DNC_CLI_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dnc/model.hpp"
#include "dnc/trainer.hpp"

namespace dnc {

enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitUsage = 2, kExitData = 3, kExitDiverged = 4 };

/// Thread count environment variable read by the predict command.
inline constexpr const char* kThreadsEnv = "DNC_NUM_THREADS";

struct RunConfig {
  Architecture arch;
  TrainConfig train;
  int samples = 200;
  std::optional<DesignLayout> layout;
  std::string design;
  long n = 2500;
  std::string train_path, val_path, test_path, model_path, out_path;
};

/// Reads a flat JSON object of RunConfig keys over `base`. Unknown keys,
/// wrong types and out-of-range values raise ConfigError.
RunConfig load_run_config(const std::string& path, RunConfig base = {});

/// Range checks shared by the config file and flags.
void validate(const RunConfig& cfg);

/// Thread count from DNC_NUM_THREADS, else the hardware concurrency.
int thread_count();

/// Runs one command; `args` excludes the program name. Returns an ExitCode.
int run_cli(const std::vector<std::string>& args);

}  // namespace dnc

#endif  // DNC_CLI_HPP
