#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "specmon/env_sim.hpp"

namespace specmon {

// Spec files are `key = value` lines where value is an integer, a `[lo, hi]`
// pair, or the literal `random` (freq only). `#` starts a comment. Accepted
// keys: number, width, period, duty_cycle, freq, start, n_bands, n_classes,
// change_prob. Missing keys keep EnvSpec defaults.
EnvSpec parse_spec(const std::string& text, const std::string& name = {});
EnvSpec load_spec(const std::string& path);
std::string format_spec(const EnvSpec& spec);

// Ground-truth grid as CSV: header `t,band_0,...,band_{n-1}`, one row per
// timestep, cell = class id (0 = none).
void write_truth_csv(std::ostream& os, const std::vector<std::vector<int>>& grid, int n_bands);
std::vector<std::vector<int>> read_truth_csv(std::istream& is, int* n_bands_out = nullptr);

// Built-in specs from the reference environment table plus the stationary /
// non-stationary / multi-class environments used for agent comparisons.
EnvSpec builtin_spec(const std::string& name);
std::vector<std::string> builtin_spec_names();

}  // namespace specmon
