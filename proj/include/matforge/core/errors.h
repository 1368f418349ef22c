// Copyright (c) 2026 The matforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace matforge {

/// Malformed input files or out-of-contract data.
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

/// File parse failures; carries a 1-based line number when known.
class ParseError : public DataError {
public:
    ParseError(const std::string& msg, int line)
        : DataError("line " + std::to_string(line) + ": " + msg), line_number(line) {}
    explicit ParseError(const std::string& msg) : DataError(msg), line_number(0) {}

    int line_number;
};

/// Bad configuration values; messages name the offending field.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace matforge
