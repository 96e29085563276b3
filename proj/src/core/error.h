// Copyright 2026 The streamkd Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef STREAMKD_CORE_ERROR_H_
#define STREAMKD_CORE_ERROR_H_

#include <stdexcept>
#include <string>

namespace streamkd {

// Values mirror skd_status in the public C header.
enum class ErrorCode {
  kInvalidArgument = 1,
  kIo = 2,
  kFormat = 3,
  kConfigMismatch = 4,
  kUnsatisfiable = 5,
  kEmptyReceptionField = 6,
  kNumeric = 7,
  kMissingStage = 8,
  kInternal = 9,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void Fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

inline void Require(bool cond, const std::string& what) {
  if (!cond) Fail(ErrorCode::kInvalidArgument, what);
}

}  // namespace streamkd

#endif  // STREAMKD_CORE_ERROR_H_
