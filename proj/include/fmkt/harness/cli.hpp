#pragma once

namespace fmkt::harness {

// Subcommands: train-teacher, distill, eval, analyze, report.
// Exit codes: 0 success, 1 validation/configuration error, 2 runtime failure.
int cli(int argc, const char* const* argv);

}  // namespace fmkt::harness
