// Copyright Contributors to the posefree3d project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace posefree {

/// Invalid or inconsistent user configuration. The CLI maps it to exit code 2.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A caller broke an operation's precondition (programming error).
class ContractViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Non-finite values during optimization. The CLI maps it to exit code 3.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace posefree
