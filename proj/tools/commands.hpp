#pragma once

// Subcommands of the `bat` tool. Each takes its argument vector (without the
// program and subcommand names) and returns a process exit code:
//   0 success, 1 verification failure, 2 usage or configuration error.

#include <iosfwd>
#include <string>
#include <vector>

namespace bat::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitVerifyFailed = 1;
inline constexpr int kExitUsage = 2;

// Environment variable naming the default output directory for `train`.
inline constexpr const char* kOutDirEnv = "BAT_OUT_DIR";

int cmd_train(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int cmd_evaluate(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int cmd_verify(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int cmd_export(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int run(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err);

}  // namespace bat::cli
