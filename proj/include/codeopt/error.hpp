#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace codeopt {

enum class ErrorCode : std::uint8_t {
    DomainError,
    ConfigError,
    BackendUnavailable,
    FixtureMiss,
    BundleMissing,
    SandboxSpawnFailure,
    GradeParseError,
    DebugExhausted,
    AllSeedsFailed,
    EmptyMemory,
    DuplicateHypothesis,
    ScoreParseError,
    EmptyCandidateSet,
    ImplementationFailed,
    DiversificationFailed,
    SelectorParseError,
    LeafNode,
    ExpansionRefused,
    EmptyLog,
    LengthMismatch,
    SeqGap,
    IoFailure,
    CorruptLog,
    InvariantBreach,
};

std::string_view to_string(ErrorCode code) noexcept;

// Every failure the engine reports carries a code so callers (and the CLI's
// exit-code mapping) can branch without parsing messages.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    [[nodiscard]] ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

class BackendUnavailable : public Error {
public:
    BackendUnavailable(int attempts, const std::string& last_error)
        : Error(ErrorCode::BackendUnavailable,
                "gave up after " + std::to_string(attempts) + " attempt(s): " + last_error),
          attempts_(attempts) {}

    [[nodiscard]] int attempts() const noexcept { return attempts_; }

private:
    int attempts_;
};

class CorruptLog : public Error {
public:
    CorruptLog(std::uint64_t first_bad_seq, const std::string& what)
        : Error(ErrorCode::CorruptLog, "at seq " + std::to_string(first_bad_seq) + ": " + what),
          seq_(first_bad_seq) {}

    [[nodiscard]] std::uint64_t first_bad_seq() const noexcept { return seq_; }

private:
    std::uint64_t seq_;
};

// Thrown by backends for failures worth retrying (network, 5xx, rate limits).
class TransientBackendError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// CLI exit codes: 2 config, 3 task bundle, 4 oracle exhaustion, 5 internal.
int exit_code_for(ErrorCode code) noexcept;

}  // namespace codeopt
