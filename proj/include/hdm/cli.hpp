#pragma once

#include <ostream>

namespace hdm {

/// Exit codes of the command-line front end.
enum ExitCode : int {
    kExitOk = 0,
    kExitInternal = 1,
    kExitConfig = 2,      // usage, config, I/O or checkpoint integrity error
    kExitDivergence = 3,  // non-finite training loss
    kExitAborted = 4,     // more than 1% of sampled trajectories aborted
    kExitCheckFailed = 5, // a verification check failed (report still written)
};

/// Default output root when --output is not given: $HDM_OUTPUT_ROOT, else "runs".
inline constexpr const char* kOutputRootEnv = "HDM_OUTPUT_ROOT";

/// Entry point of the `hdm` tool. Subcommands: pretrain, sample, verify,
/// finetune (alias transfer), report. Progress goes to `out`, diagnostics to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace hdm
