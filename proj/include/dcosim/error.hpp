#pragma once

#include <stdexcept>
#include <string>

namespace dcosim {

/// Base for every error raised by the framework.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A descriptor or scenario document failed validation. `path()` names the
/// offending field, e.g. `variables[3].value_reference`.
class ValidationError : public Error {
public:
    ValidationError(std::string path, const std::string& message)
        : Error(path.empty() ? message : path + ": " + message), path_(std::move(path)) {}

    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

/// Malformed bytes on the wire, or a peer that broke the request/reply rule.
/// Always fatal for the connection it occurred on.
class ProtocolError : public Error {
public:
    using Error::Error;
};

class TimeoutError : public Error {
public:
    using Error::Error;
};

/// The peer closed the stream (or the stream failed) mid-exchange.
class ConnectionError : public Error {
public:
    using Error::Error;
};

class AuthenticationError : public Error {
public:
    using Error::Error;
};

} // namespace dcosim
