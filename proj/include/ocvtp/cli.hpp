// Copyright 2026 The OC-VTP Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "ocvtp/error.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace ocvtp {

/// Exit codes: 0 ok, 1 configuration, 2 I/O or file format, 3 numerical.
int exit_code_for(ErrorKind kind);

/// Runs one subcommand (synth, train, prune, eval, flops, viz). args[0] is
/// the program name. Diagnostics go to `err` as a single line.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ocvtp
