// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace lwq {

enum class ErrorCode {
    Ok = 0,
    FormatError,
    UnsupportedDtype,
    IoError,
    InvalidInput,
    ConfigError,
    PlanMismatch,
    DegenerateBudget,
    DegenerateActivations,
    EmptyCorpus,
    Internal,
};

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
    ErrorCode code() const { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
    throw Error(code, what);
}

} // namespace lwq
