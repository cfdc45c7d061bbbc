#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>

namespace lrtl {

/// Process exit codes shared by every subcommand.
enum class ExitCode : int { ok = 0, assertion = 1, io = 2, config = 3 };

struct CommandOptions {
  std::string config;  // JSON file; empty uses defaults
  std::string out;     // output directory
  std::optional<std::uint64_t> seed;
  std::string format = "json";  // metric reports: json or csv
  std::string scene;            // scene directory for segment and sweep
  std::string method;           // overrides the segment config's method
};

/// Generates a scene and writes it to opt.out. Prints a one-line summary.
ExitCode cmd_synth(const CommandOptions& opt, std::ostream& out, std::ostream& err);

/// Segments a scene with lrtl or a baseline; writes labels.csv, metrics and,
/// for lrtl, trace.csv.
ExitCode cmd_segment(const CommandOptions& opt, std::ostream& out, std::ostream& err);

/// Runs the corruption sweep; writes sweep.csv and sweep.json and checks the
/// configured assertions.
ExitCode cmd_sweep(const CommandOptions& opt, std::ostream& out, std::ostream& err);

/// Finite-difference gradient report.
ExitCode cmd_gradcheck(const CommandOptions& opt, std::ostream& out, std::ostream& err);

/// Dispatches by name and maps library errors to exit codes.
int run_command(const std::string& name, const CommandOptions& opt, std::ostream& out, std::ostream& err);

}  // namespace lrtl
