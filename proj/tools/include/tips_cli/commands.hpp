#pragma once

namespace tips::cli {

/// Parses arguments, runs one subcommand and maps errors to exit codes:
/// 0 ok, 1 user error, 2 internal error.
int run_cli(int argc, char** argv);

}  // namespace tips::cli
