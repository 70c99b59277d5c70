#pragma once

#include <stdexcept>
#include <string>

namespace patrack {

// Error taxonomy shared by library and CLI. The CLI maps each kind to a
// process exit code (see tools/patrack.cpp).
enum class ErrorKind {
    config,        // bad configuration or dimension/usage contract violation
    io,            // unreadable/unwritable/malformed files
    numeric,       // NaN or other numeric failure during computation
    integrity,     // checkpoint digest mismatch
    verification,  // gradient verification tolerance failure
};

class Error : public std::runtime_error {
  public:
    Error(ErrorKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
    ErrorKind kind() const { return kind_; }

  private:
    ErrorKind kind_;
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error(ErrorKind::config, msg) {}
};
struct IoError : Error {
    explicit IoError(const std::string& msg) : Error(ErrorKind::io, msg) {}
};
struct NumericError : Error {
    explicit NumericError(const std::string& msg) : Error(ErrorKind::numeric, msg) {}
};
struct IntegrityError : Error {
    explicit IntegrityError(const std::string& msg) : Error(ErrorKind::integrity, msg) {}
};
struct VerificationError : Error {
    explicit VerificationError(const std::string& msg) : Error(ErrorKind::verification, msg) {}
};

}  // namespace patrack
