#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "codeopt/error.hpp"

namespace codeopt {

enum class Direction : std::uint8_t { HigherBetter, LowerBetter };

// A score that is absent when the run failed. Never encoded as a sentinel.
using MaybeScore = std::optional<double>;

std::string_view to_string(Direction d) noexcept;
Direction parse_direction(std::string_view text);

/// Signed improvement of `h_new` over `h_ref`; positive means better.
/// Throws DomainError for non-finite input.
double direction_adjusted_delta(double h_new, double h_ref, Direction direction);

/// Near-tie acceptance: true iff delta > -tolerance.
bool is_improvement(double delta, double tolerance);

/// True when `a` is strictly better than `b` under `direction`. A present score
/// beats a missing one.
bool strictly_better(MaybeScore a, MaybeScore b, Direction direction);

// ---------------------------------------------------------------------------
// Task bundle description

struct SubmissionSchema {
    std::vector<std::string> columns;
    std::optional<std::size_t> rows;
    std::vector<std::string> numeric_columns;
};

struct Task {
    std::string id;
    std::string description;
    std::string metric_name;
    Direction direction = Direction::HigherBetter;
    std::filesystem::path bundle_path;
    double dev_fraction = 1.0;
    double time_limit_dev = 60.0;
    double time_limit_full = 600.0;
    std::string runner = "python3";
    std::string solution_file = "solution.py";
    std::optional<std::filesystem::path> baseline_path;
    SubmissionSchema schema;

    // Throws DomainError when an invariant does not hold.
    void check() const;
};

// ---------------------------------------------------------------------------
// Budget

enum class BudgetMode : std::uint8_t { WallClockSeconds, IterationCount };

struct Budget {
    BudgetMode mode = BudgetMode::IterationCount;
    double total = 0.0;
    double consumed = 0.0;
    int extensions_granted = 0;
    int extension_cap = 1;

    [[nodiscard]] double remaining() const noexcept { return total - consumed; }
    [[nodiscard]] bool exhausted() const noexcept { return consumed >= total; }
};

// ---------------------------------------------------------------------------
// Solutions and hypotheses

struct Solution {
    std::string id;
    std::string code;
    std::optional<std::string> parent_id;
    std::optional<std::string> hypothesis_id;
    std::uint64_t created_at = 0;
};

enum class Component : std::uint8_t { Data, FeatureEng, Model, Ensemble, Workflow };
std::string_view to_string(Component c) noexcept;
std::optional<Component> parse_component(std::string_view text);

enum class HypothesisOrigin : std::uint8_t {
    Local,
    MemoryBest,
    MemorySampled,
    SelectorModified,
    SelectorGenerated,
};
std::string_view to_string(HypothesisOrigin o) noexcept;
HypothesisOrigin parse_origin(std::string_view text);

// Dimension names used by the hypothesis scorer, in weight order.
inline constexpr std::string_view kScoreDimensions[] = {"impact", "alignment", "novelty",
                                                       "feasibility", "risk"};

struct Hypothesis {
    std::string id;
    std::string text;
    Component target_component = Component::Workflow;
    std::string challenge;
    std::map<std::string, double> scores;
    double total_score = 0.0;
    HypothesisOrigin origin = HypothesisOrigin::Local;
    std::optional<std::string> parent_hypothesis_id;
};

// ---------------------------------------------------------------------------
// Feedback

struct PerfPair {
    MaybeScore current;
    MaybeScore best;
};

enum class ExitStatus : std::uint8_t { Ok, NonzeroExit, Timeout, ResourceKill };
std::string_view to_string(ExitStatus s) noexcept;
ExitStatus parse_exit_status(std::string_view text);

struct ExecutionTrace {
    std::string stdout_excerpt;
    std::string stderr_excerpt;
    std::string runtime_log;
    std::string code_diff;
    ExitStatus exit_status = ExitStatus::Ok;
    double wall_seconds = 0.0;
};

enum class Gate : std::uint8_t { Format, Alignment, Comprehensive, Judge };
std::string_view to_string(Gate g) noexcept;
Gate parse_gate(std::string_view text);

struct DiagnosticReason {
    Gate gate = Gate::Format;
    std::string verdict_text;
    std::optional<bool> hypothesis_verified;
    std::optional<std::string> code_quality_notes;
    std::vector<std::string> leakage_findings;
};

struct StructuredFeedback {
    PerfPair perf;
    ExecutionTrace trace;
    DiagnosticReason reason;
};

struct IterationRecord {
    int trace_id = 1;
    int iteration = 0;
    Hypothesis hypothesis;
    std::string solution_id;
    StructuredFeedback feedback;
    bool decision = false;
    std::optional<double> delta;
};

// Per-trace optimisation state. Mutated only by the trace's owning worker.
struct TraceState {
    int trace_id = 1;
    Solution best_solution;
    MaybeScore best_score;
    std::vector<IterationRecord> history;
    int n_succ = 0;
    int n_fail = 0;

    // Appends `record` and updates counters and the trace-local best. The best
    // moves only on an accepted record whose score strictly beats it.
    void apply(const IterationRecord& record, const Solution& solution, Direction direction);
};

/// Rebuilds counters and best score from `initial` plus history alone.
TraceState replay_trace(const TraceState& initial, const std::vector<IterationRecord>& history,
                        const std::vector<Solution>& solutions, Direction direction);

/// Δh used for memory commits: h_t − h* (direction adjusted), or 0 when the
/// trace has no best yet.
std::optional<double> score_delta(const PerfPair& perf, Direction direction);

}  // namespace codeopt
