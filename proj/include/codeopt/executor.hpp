#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <semaphore>
#include <string>
#include <vector>

#include "codeopt/core.hpp"
#include "codeopt/oracle.hpp"

namespace codeopt {

enum class ExecKind : std::uint8_t { DevSubset, FullData };
std::string_view to_string(ExecKind k) noexcept;

struct ExecMode {
    ExecKind kind = ExecKind::FullData;
    std::uint64_t seed = 0;
};

struct TimeoutState {
    int stage = 1;
    int consecutive_timeouts = 0;
    int patience = 2;
    int multiplier_cap = 4;
    // Stages added per escalation.
    int step = 1;

    [[nodiscard]] int multiplier() const noexcept;
    void check() const;
};

TimeoutState escalate_timeout(TimeoutState state, ExitStatus outcome);

// ---------------------------------------------------------------------------
// Task bundles
//
//   task.toml        id, description, metric_name, direction, dev_fraction,
//                    time_limit_dev, time_limit_full, runner, solution_file,
//                    baseline, [submission] columns/rows/numeric_columns
//   data/full/       everything a FullData run may read
//   data/dev/        DevSubset view (derived from data/full when absent)
//   grading/         held-out labels, visible only to the grader
//   grade            executable: grade <submission> --seed <n> -> "SCORE <x>"
//   grade_holdout    optional, same contract, scores a separate held-out split

Task load_task(const std::filesystem::path& bundle_dir);

/// Builds data/dev from data/full: files named train* keep their header plus a
/// seeded-shuffle prefix of ceil(dev_fraction * rows) rows; other files are
/// copied as-is. Returns false if data/dev already existed.
bool derive_dev_split(const Task& task, std::uint64_t split_seed = 0);

struct LintReport {
    std::vector<std::string> errors;
    std::vector<std::string> warnings;
    std::optional<double> baseline_score;

    [[nodiscard]] bool ok() const noexcept { return errors.empty(); }
};

struct LintOptions {
    // Also run the declared baseline through the executor and grader.
    bool run_baseline = false;
};

LintReport lint_bundle(const std::filesystem::path& bundle_dir, const LintOptions& opts = {});

/// Parses the grader's stdout. Exactly one non-blank line `SCORE <decimal>`
/// with a finite value; anything else throws GradeParseError.
double parse_score_record(std::string_view stdout_text);

// ---------------------------------------------------------------------------
// Concurrency permits

enum class PermitKind : std::uint8_t { Running, Debugging, Feedback };

class Permits {
public:
    Permits(int running = 3, int debugging = 3, int feedback = 1);

    class Guard {
    public:
        Guard(Permits& owner, PermitKind kind);
        ~Guard();
        Guard(const Guard&) = delete;
        Guard& operator=(const Guard&) = delete;

    private:
        Permits& owner_;
        PermitKind kind_;
    };

    [[nodiscard]] Guard acquire(PermitKind kind) { return Guard(*this, kind); }
    [[nodiscard]] int limit(PermitKind kind) const;
    // Highest number of simultaneous holders ever observed.
    [[nodiscard]] int peak(PermitKind kind) const;

private:
    struct Slot {
        explicit Slot(int n) : sem(n), limit(n) {}
        std::counting_semaphore<1024> sem;
        int limit;
        std::atomic<int> in_use{0};
        std::atomic<int> peak{0};
    };
    Slot& slot(PermitKind kind);
    const Slot& slot(PermitKind kind) const;

    Slot running_;
    Slot debugging_;
    Slot feedback_;
};

// ---------------------------------------------------------------------------
// Execution

struct ExecutorConfig {
    std::filesystem::path work_root = std::filesystem::temp_directory_path();
    bool keep_scratch = false;
    // Kernel filesystem confinement (Landlock) for solution processes.
    bool confine = true;
    // Directories a solution may read besides its data view and scratch.
    std::vector<std::filesystem::path> readable_roots = {
        "/usr", "/lib", "/lib32", "/lib64", "/bin", "/sbin", "/etc", "/proc", "/sys", "/dev", "/opt"};
    std::size_t excerpt_bytes = 4000;
    double grader_timeout = 120.0;
};

struct ExecResult {
    MaybeScore score;
    // From the optional `grade_holdout` script: a score on rows the main
    // grader never sees, used only for reporting.
    MaybeScore holdout_score;
    ExecutionTrace trace;
    std::optional<std::string> submission;
    // Set when the post-run audit found files outside scratch changed.
    bool sandbox_violation = false;
};

struct SeedEvalReport {
    std::vector<std::uint64_t> seeds;
    std::vector<MaybeScore> scores;
    double mean = 0.0;
    std::vector<std::uint64_t> failed_seeds;
};

/// Mean over present scores. Throws AllSeedsFailed when none is present.
SeedEvalReport summarize_seeds(std::vector<std::uint64_t> seeds, std::vector<MaybeScore> scores);

class DebugExhausted : public Error {
public:
    DebugExhausted(Solution last_solution, ExecResult last_result, int fix_attempts)
        : Error(ErrorCode::DebugExhausted,
                "still failing after " + std::to_string(fix_attempts) + " fix attempt(s)"),
          solution(std::move(last_solution)),
          result(std::move(last_result)) {}

    Solution solution;
    ExecResult result;
};

class Executor {
public:
    explicit Executor(ExecutorConfig cfg = {}, Permits* permits = nullptr);

    /// Runs `solution` against `task` under `mode`. `reference_code` (usually
    /// the trace's best) feeds the trace's code diff.
    ExecResult execute(const Solution& solution, const Task& task, const ExecMode& mode,
                       const TimeoutState& timeout, std::string_view reference_code = {});

    /// Executes, and on failure asks the oracle for a corrected program, up to
    /// max_fix_iters times. `timeout` escalates after every execution.
    std::pair<Solution, ExecResult> debug_loop(Solution solution, const Task& task,
                                               const ExecMode& mode, int max_fix_iters,
                                               OracleClient& oracle, TimeoutState& timeout);

    SeedEvalReport multi_seed_eval(const Solution& solution, const Task& task,
                                   const std::vector<std::uint64_t>& seeds,
                                   const TimeoutState& timeout = {});

    [[nodiscard]] bool confinement_available() const;
    [[nodiscard]] const ExecutorConfig& config() const { return cfg_; }
    [[nodiscard]] Permits* permits() const { return permits_; }

private:
    ExecutorConfig cfg_;
    Permits* permits_;
};

}  // namespace codeopt
