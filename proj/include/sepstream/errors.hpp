#pragma once

#include <stdexcept>
#include <string>

namespace sepstream {

// Error taxonomy shared by all modules. The CLI maps these onto the
// process exit-code contract: 0 success, 2 config, 3 data integrity,
// 4 I/O.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Invalid or inconsistent configuration (bad field values, impossible
// cross-field combinations, empty selections).
class ConfigError : public Error {
public:
    using Error::Error;
};

// API misuse of a stateful protocol (begin without end, out-of-order
// step appends).
class ProtocolError : public Error {
public:
    using Error::Error;
};

// Corrupt or inconsistent data: bad frame payloads, truncated files,
// duplicate particle ids, step gaps.
class IntegrityError : public Error {
public:
    using Error::Error;
};

// Unrecognized file format or version.
class FormatError : public Error {
public:
    using Error::Error;
};

// Filesystem failures, reported with path context.
class IoError : public Error {
public:
    using Error::Error;
};

enum ExitCode {
    kExitOk = 0,
    kExitConfig = 2,
    kExitIntegrity = 3,
    kExitIo = 4,
};

// Exit code for an in-flight exception; rethrows unknown types.
int exit_code_for(const std::exception& e) noexcept;

} // namespace sepstream
