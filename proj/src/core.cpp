#include "codeopt/core.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

namespace codeopt {

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::DomainError: return "DomainError";
        case ErrorCode::ConfigError: return "ConfigError";
        case ErrorCode::BackendUnavailable: return "BackendUnavailable";
        case ErrorCode::FixtureMiss: return "FixtureMiss";
        case ErrorCode::BundleMissing: return "BundleMissing";
        case ErrorCode::SandboxSpawnFailure: return "SandboxSpawnFailure";
        case ErrorCode::GradeParseError: return "GradeParseError";
        case ErrorCode::DebugExhausted: return "DebugExhausted";
        case ErrorCode::AllSeedsFailed: return "AllSeedsFailed";
        case ErrorCode::EmptyMemory: return "EmptyMemory";
        case ErrorCode::DuplicateHypothesis: return "DuplicateHypothesis";
        case ErrorCode::ScoreParseError: return "ScoreParseError";
        case ErrorCode::EmptyCandidateSet: return "EmptyCandidateSet";
        case ErrorCode::ImplementationFailed: return "ImplementationFailed";
        case ErrorCode::DiversificationFailed: return "DiversificationFailed";
        case ErrorCode::SelectorParseError: return "SelectorParseError";
        case ErrorCode::LeafNode: return "LeafNode";
        case ErrorCode::ExpansionRefused: return "ExpansionRefused";
        case ErrorCode::EmptyLog: return "EmptyLog";
        case ErrorCode::LengthMismatch: return "LengthMismatch";
        case ErrorCode::SeqGap: return "SeqGap";
        case ErrorCode::IoFailure: return "IoFailure";
        case ErrorCode::CorruptLog: return "CorruptLog";
        case ErrorCode::InvariantBreach: return "InvariantBreach";
    }
    return "Unknown";
}

int exit_code_for(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::ConfigError:
        case ErrorCode::DomainError:
            return 2;
        case ErrorCode::BundleMissing:
        case ErrorCode::SandboxSpawnFailure:
        case ErrorCode::GradeParseError:
            return 3;
        case ErrorCode::BackendUnavailable:
        case ErrorCode::FixtureMiss:
            return 4;
        default:
            return 5;
    }
}

namespace {

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

}  // namespace

std::string_view to_string(Direction d) noexcept {
    return d == Direction::HigherBetter ? "HigherBetter" : "LowerBetter";
}

Direction parse_direction(std::string_view text) {
    const auto t = lower(text);
    if (t == "higherbetter" || t == "higher" || t == "max" || t == "maximize") {
        return Direction::HigherBetter;
    }
    if (t == "lowerbetter" || t == "lower" || t == "min" || t == "minimize") {
        return Direction::LowerBetter;
    }
    throw Error(ErrorCode::DomainError, "unknown direction '" + std::string(text) + "'");
}

double direction_adjusted_delta(double h_new, double h_ref, Direction direction) {
    if (!std::isfinite(h_new) || !std::isfinite(h_ref)) {
        throw Error(ErrorCode::DomainError, "score delta requires finite scores");
    }
    return direction == Direction::HigherBetter ? h_new - h_ref : h_ref - h_new;
}

bool is_improvement(double delta, double tolerance) {
    if (!(tolerance >= 0.0)) {
        throw Error(ErrorCode::DomainError, "tolerance must be non-negative");
    }
    return delta > -tolerance;
}

bool strictly_better(MaybeScore a, MaybeScore b, Direction direction) {
    if (!a) return false;
    if (!b) return true;
    return direction_adjusted_delta(*a, *b, direction) > 0.0;
}

std::optional<double> score_delta(const PerfPair& perf, Direction direction) {
    if (!perf.current) return std::nullopt;
    if (!perf.best) return 0.0;
    return direction_adjusted_delta(*perf.current, *perf.best, direction);
}

void Task::check() const {
    if (!(dev_fraction > 0.0 && dev_fraction <= 1.0)) {
        throw Error(ErrorCode::DomainError, "dev_fraction must lie in (0, 1]");
    }
    if (time_limit_dev > time_limit_full) {
        throw Error(ErrorCode::DomainError, "time_limit_dev exceeds time_limit_full");
    }
    if (time_limit_dev <= 0.0) {
        throw Error(ErrorCode::DomainError, "time limits must be positive");
    }
}

std::string_view to_string(Component c) noexcept {
    switch (c) {
        case Component::Data: return "Data";
        case Component::FeatureEng: return "FeatureEng";
        case Component::Model: return "Model";
        case Component::Ensemble: return "Ensemble";
        case Component::Workflow: return "Workflow";
    }
    return "Workflow";
}

std::optional<Component> parse_component(std::string_view text) {
    const auto t = lower(text);
    if (t == "data") return Component::Data;
    if (t == "featureeng" || t == "feature_eng" || t == "feature engineering" || t == "features") {
        return Component::FeatureEng;
    }
    if (t == "model") return Component::Model;
    if (t == "ensemble") return Component::Ensemble;
    if (t == "workflow") return Component::Workflow;
    return std::nullopt;
}

std::string_view to_string(HypothesisOrigin o) noexcept {
    switch (o) {
        case HypothesisOrigin::Local: return "Local";
        case HypothesisOrigin::MemoryBest: return "MemoryBest";
        case HypothesisOrigin::MemorySampled: return "MemorySampled";
        case HypothesisOrigin::SelectorModified: return "SelectorModified";
        case HypothesisOrigin::SelectorGenerated: return "SelectorGenerated";
    }
    return "Local";
}

HypothesisOrigin parse_origin(std::string_view text) {
    for (auto o : {HypothesisOrigin::Local, HypothesisOrigin::MemoryBest,
                   HypothesisOrigin::MemorySampled, HypothesisOrigin::SelectorModified,
                   HypothesisOrigin::SelectorGenerated}) {
        if (to_string(o) == text) return o;
    }
    throw Error(ErrorCode::DomainError, "unknown hypothesis origin '" + std::string(text) + "'");
}

std::string_view to_string(ExitStatus s) noexcept {
    switch (s) {
        case ExitStatus::Ok: return "Ok";
        case ExitStatus::NonzeroExit: return "NonzeroExit";
        case ExitStatus::Timeout: return "Timeout";
        case ExitStatus::ResourceKill: return "ResourceKill";
    }
    return "Ok";
}

ExitStatus parse_exit_status(std::string_view text) {
    for (auto s : {ExitStatus::Ok, ExitStatus::NonzeroExit, ExitStatus::Timeout,
                   ExitStatus::ResourceKill}) {
        if (to_string(s) == text) return s;
    }
    throw Error(ErrorCode::DomainError, "unknown exit status '" + std::string(text) + "'");
}

std::string_view to_string(Gate g) noexcept {
    switch (g) {
        case Gate::Format: return "Format";
        case Gate::Alignment: return "Alignment";
        case Gate::Comprehensive: return "Comprehensive";
        case Gate::Judge: return "Judge";
    }
    return "Format";
}

Gate parse_gate(std::string_view text) {
    for (auto g : {Gate::Format, Gate::Alignment, Gate::Comprehensive, Gate::Judge}) {
        if (to_string(g) == text) return g;
    }
    throw Error(ErrorCode::DomainError, "unknown gate '" + std::string(text) + "'");
}

void TraceState::apply(const IterationRecord& record, const Solution& solution,
                       Direction direction) {
    if (record.decision) {
        ++n_succ;
        const MaybeScore score = record.feedback.perf.current;
        if (strictly_better(score, best_score, direction)) {
            best_score = score;
            best_solution = solution;
        }
    } else {
        ++n_fail;
    }
    history.push_back(record);
}

TraceState replay_trace(const TraceState& initial, const std::vector<IterationRecord>& history,
                        const std::vector<Solution>& solutions, Direction direction) {
    TraceState state;
    state.trace_id = initial.trace_id;
    state.best_solution = initial.best_solution;
    state.best_score = initial.best_score;
    for (const auto& rec : history) {
        auto it = std::find_if(solutions.begin(), solutions.end(),
                               [&](const Solution& s) { return s.id == rec.solution_id; });
        Solution sol = it != solutions.end() ? *it : Solution{rec.solution_id, {}, {}, {}, 0};
        state.apply(rec, sol, direction);
    }
    return state;
}

}  // namespace codeopt
