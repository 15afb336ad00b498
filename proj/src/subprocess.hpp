#pragma once

#include <string>

namespace meshcompose {

// Runs `command` through /bin/sh, writes `input` to its stdin, and captures
// stdout. Returns the child's exit code (-1 if it died on a signal).
int run_subprocess(const std::string& command, const std::string& input, std::string& output);

} // namespace meshcompose
