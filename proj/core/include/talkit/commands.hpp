// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>

#include "talkit/runconfig.hpp"

namespace talkit::cli {

struct CliOptions {
  std::optional<std::filesystem::path> checkpoint;  // predict: which epoch
  std::optional<std::filesystem::path> detections;  // eval: which file
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitRuntime = 2;
inline constexpr int kExitUsage = 64;

std::string usage();

/// Dispatches one command (generate | train | predict | eval | ablate) and
/// maps errors to exit codes: 1 for validation/config/format problems, 2 for
/// runtime failures, 64 for an unknown command.
int run(const std::string& command, const std::filesystem::path& config_path,
        const CliOptions& opts, std::ostream& out, std::ostream& err);

}  // namespace talkit::cli
