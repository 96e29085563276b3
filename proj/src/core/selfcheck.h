// Copyright 2026 The streamkd Authors
// SPDX-License-Identifier: Apache-2.0

// Quick built-in oracle and gradient checks, runnable from the CLI.

#ifndef STREAMKD_CORE_SELFCHECK_H_
#define STREAMKD_CORE_SELFCHECK_H_

#include <cstdint>
#include <string>
#include <vector>

namespace streamkd {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

std::vector<CheckResult> RunSelfCheck(uint64_t seed);
std::string FormatSelfCheck(const std::vector<CheckResult>& results);

}  // namespace streamkd

#endif  // STREAMKD_CORE_SELFCHECK_H_
