#pragma once

namespace ssimadv {

/// Entry point behind main(): parses argv and dispatches to the train,
/// attack, report or selftest subcommand. Returns 0 on success, 2 on
/// usage/validation errors, 1 on runtime failures.
int run_cli(int argc, const char* const* argv);

}  // namespace ssimadv
