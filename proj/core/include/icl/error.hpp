#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

namespace icl {

/// Base class for every error raised by the harness.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Malformed input file (dataset, embedding file, tag file, config).
class ParseError : public Error {
  public:
    using Error::Error;
};

/// Configuration or precondition violated before any work was done.
class ValidationError : public Error {
  public:
    using Error::Error;
};

/// Filesystem failures.
class IoError : public Error {
  public:
    using Error::Error;
};

/// Raised by a generation model. Carries the query it was serving, if known.
class OracleError : public Error {
  public:
    OracleError(const std::string& what, std::optional<std::uint64_t> query_id = std::nullopt)
        : Error(what), query_id_(query_id) {}

    std::optional<std::uint64_t> query_id() const noexcept { return query_id_; }

  private:
    std::optional<std::uint64_t> query_id_;
};

} // namespace icl
