// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <iosfwd>

namespace pkmix {

// Exit codes: 0 success, 1 usage, configuration or input error, 2 numerical
// failure.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitNumerical = 2;

// Subcommands fit, predict, dendro, eppf and prior-sim.
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace pkmix
