// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

namespace vgjepa::cli {

// Default output root when --out is omitted.
inline constexpr const char* kOutputRootEnv = "VGJEPA_OUTPUT_ROOT";

// Runs one subcommand. args excludes the program name. Returns the process
// exit code: 0 ok, 2 usage, 3 config, 4 data, 5 numeric failure. Results go
// to `out`, logs and structured errors to stderr.
int dispatch(const std::vector<std::string>& args, std::ostream& out);
int dispatch(int argc, const char* const* argv);

std::filesystem::path output_root();

}  // namespace vgjepa::cli
