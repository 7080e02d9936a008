#pragma once

#include <stdexcept>
#include <string>

namespace valigen {

/// Base class for every domain failure the engine reports. The CLI maps these
/// to exit code 1; anything else escaping dispatch is a bug.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid input data: catalogs, manifests, images, configs.
class DataError : public Error {
public:
    using Error::Error;
};

/// Malformed frames, bad probability vectors, unexpected reply ids.
class ProtocolError : public Error {
public:
    using Error::Error;
};

/// A worker did not answer before the deadline.
class TimeoutError : public Error {
public:
    using Error::Error;
};

/// Spawn/connect failures and handshake rejections.
class HandshakeError : public Error {
public:
    using Error::Error;
};

/// A worker answered a request with an `error` frame.
class WorkerError : public Error {
public:
    WorkerError(std::string code, const std::string& message)
        : Error("worker error [" + code + "]: " + message), code_(std::move(code)) {}

    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

/// Command-line misuse; maps to exit code 2.
class UsageError : public Error {
public:
    using Error::Error;
};

}  // namespace valigen
