#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace prep {

enum class Errc {
    MissingObjectNames,
    EmptyFacts,
    UnfilledPlaceholder,
    UnknownStrategy,
    IllegalStrategy,
    BackendError,
    EmptyResponse,
    Transport,
    Protocol,
    ModelNotFound,
    CacheIO,
    MatchError,
    KindMismatch,
    DuplicateObjects,
    ParseError,
    InvalidKey,
    DuplicateId,
    Unbalanced,
    NTooLarge,
    UnknownObject,
    NotEnoughTriples,
    ZeroN,
    ModelSetMismatch,
    UnknownFormat,
    EmptyReport,
    ConfigError,
    IO,
};

constexpr std::string_view to_string(Errc code) {
    switch (code) {
    case Errc::MissingObjectNames: return "MissingObjectNames";
    case Errc::EmptyFacts: return "EmptyFacts";
    case Errc::UnfilledPlaceholder: return "UnfilledPlaceholder";
    case Errc::UnknownStrategy: return "UnknownStrategy";
    case Errc::IllegalStrategy: return "IllegalStrategy";
    case Errc::BackendError: return "BackendError";
    case Errc::EmptyResponse: return "EmptyResponse";
    case Errc::Transport: return "Transport";
    case Errc::Protocol: return "Protocol";
    case Errc::ModelNotFound: return "ModelNotFound";
    case Errc::CacheIO: return "CacheIO";
    case Errc::MatchError: return "MatchError";
    case Errc::KindMismatch: return "KindMismatch";
    case Errc::DuplicateObjects: return "DuplicateObjects";
    case Errc::ParseError: return "ParseError";
    case Errc::InvalidKey: return "InvalidKey";
    case Errc::DuplicateId: return "DuplicateId";
    case Errc::Unbalanced: return "Unbalanced";
    case Errc::NTooLarge: return "NTooLarge";
    case Errc::UnknownObject: return "UnknownObject";
    case Errc::NotEnoughTriples: return "NotEnoughTriples";
    case Errc::ZeroN: return "ZeroN";
    case Errc::ModelSetMismatch: return "ModelSetMismatch";
    case Errc::UnknownFormat: return "UnknownFormat";
    case Errc::EmptyReport: return "EmptyReport";
    case Errc::ConfigError: return "ConfigError";
    case Errc::IO: return "IO";
    }
    return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so
/// callers (and the CLI exit-code mapping) can branch without string matching.
class Error : public std::runtime_error {
public:
    Error(Errc code, std::string_view what)
        : std::runtime_error(std::string(to_string(code)) + ": " + std::string(what)), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

/// Backend failure tagged with the conversation step that triggered it.
class BackendFailure : public Error {
public:
    BackendFailure(Errc cause, std::string_view what, int step = -1)
        : Error(cause, what), step_(step) {}

    int step() const noexcept { return step_; }

    std::string question_id;

private:
    int step_;
};

} // namespace prep
