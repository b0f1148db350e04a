#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace reqrag {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A record or value failed structural validation. `field` names the offending
// field; `offset` is the record offset (line number) when known.
class ValidationError : public Error {
public:
    ValidationError(std::string field, const std::string& message,
                    std::optional<std::size_t> offset = std::nullopt);

    const std::string& field() const noexcept { return field_; }
    std::optional<std::size_t> offset() const noexcept { return offset_; }

private:
    std::string field_;
    std::optional<std::size_t> offset_;
};

class LookupError : public Error {
public:
    using Error::Error;
};

// Caller supplied an unusable argument (empty query, empty text, ...).
class InputError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

// Line-oriented file format violation.
class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& message);
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

// Failure of an embedding or generation provider.
class ProviderError : public Error {
public:
    ProviderError(std::string provider_id, const std::string& message);
    const std::string& provider_id() const noexcept { return provider_id_; }

private:
    std::string provider_id_;
};

// Batch operation where some elements failed; indices are ascending.
class BatchError : public Error {
public:
    BatchError(std::vector<std::size_t> failed, const std::string& message);
    const std::vector<std::size_t>& failed_indices() const noexcept { return failed_; }

private:
    std::vector<std::size_t> failed_;
};

}  // namespace reqrag
