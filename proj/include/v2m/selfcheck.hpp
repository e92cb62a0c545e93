#pragma once

// Built-in diagnostics: a finite-difference gradient battery over every
// differentiable op plus the full two-block generator, and a quick numeric
// self test of the schedule, codec and conditioning ramp.

#include <string>
#include <vector>

namespace v2m {

struct CheckResult {
  std::string name;
  double err = 0.0;  // max relative gradient error, or metric distance
  bool ok = false;
};

struct CheckSummary {
  std::vector<CheckResult> results;
  bool all_ok = true;
  double max_err = 0.0;
};

// verbose prints one "[ok] name err" line per check to stdout
CheckSummary gradient_battery(bool verbose = false);
CheckSummary self_test(bool verbose = false);

}  // namespace v2m
