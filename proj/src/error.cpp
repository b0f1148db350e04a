#include "reqrag/error.hpp"

namespace reqrag {

namespace {

std::string with_offset(const std::string& field, const std::string& message,
                        std::optional<std::size_t> offset) {
    std::string out = field.empty() ? message : field + ": " + message;
    if (offset) out = "record " + std::to_string(*offset) + ": " + out;
    return out;
}

}  // namespace

ValidationError::ValidationError(std::string field, const std::string& message,
                                 std::optional<std::size_t> offset)
    : Error(with_offset(field, message, offset)), field_(std::move(field)), offset_(offset) {}

ParseError::ParseError(std::size_t line, const std::string& message)
    : Error("line " + std::to_string(line) + ": " + message), line_(line) {}

ProviderError::ProviderError(std::string provider_id, const std::string& message)
    : Error("provider '" + provider_id + "': " + message), provider_id_(std::move(provider_id)) {}

BatchError::BatchError(std::vector<std::size_t> failed, const std::string& message)
    : Error(message), failed_(std::move(failed)) {}

}  // namespace reqrag
