#pragma once

namespace msb::cli {

// Parses arguments, dispatches the subcommand and maps failures to exit codes:
// 0 success, 1 usage, 2 data error, 3 numeric failure.
int run(int argc, char** argv);

}  // namespace msb::cli
