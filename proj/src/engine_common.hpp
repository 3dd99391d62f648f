#pragma once

// Pieces shared by the multi-trace loop and the tree search: candidate
// evaluation and the iteration event payloads.

#include <optional>
#include <string>
#include <vector>

#include "codeopt/config.hpp"
#include "codeopt/eventlog.hpp"
#include "codeopt/executor.hpp"
#include "codeopt/reasoning.hpp"
#include "codeopt/validation.hpp"

namespace codeopt::detail {

struct Baseline {
    Solution solution;
    MaybeScore score;
    MaybeScore holdout;
};

std::optional<Baseline> run_baseline(const Task& task, Executor& exec, const RunConfig& cfg);

TimeoutState dev_timeout(const RunConfig& cfg);
TimeoutState full_timeout(const RunConfig& cfg);

std::uint64_t exec_seed(const RunConfig& cfg, int trace, int iteration);

struct Evaluation {
    IterationRecord record;
    Solution solution;  // empty id when implementation failed
    std::vector<GateOutcome> gates;
    MaybeScore holdout;
    std::optional<std::string> implementation_failure;
};

struct Candidate {
    const Hypothesis* hypothesis = nullptr;
    const Solution* base = nullptr;  // code the change starts from and is diffed against
    MaybeScore reference_score;      // h* the candidate is judged against
    int trace = 1;
    int iteration = 0;
    std::string solution_id;
    std::uint64_t created_at = 0;
    std::uint64_t seed = 0;
    // Only the rule-based format gate decides (used for starting solutions).
    bool format_only = false;
};

/// implement -> full execution -> validation. Never throws for failures of
/// the candidate itself; those become rejected records.
Evaluation evaluate(const Candidate& c, const Task& task, const RunConfig& cfg, OracleClient& oracle,
                    Executor& exec, TimeoutState& dev, TimeoutState& full, Permits* permits);

/// A rejected record for an iteration that never produced code.
Evaluation failed_evaluation(int trace, int iteration, Hypothesis hypothesis, MaybeScore reference,
                             const std::string& why);

nlohmann::json chosen_payload(const Evaluation& ev, int lambda, const nlohmann::json& pool,
                              const std::vector<std::string>& warnings);
nlohmann::json executed_payload(const Evaluation& ev);
nlohmann::json gates_payload(const Evaluation& ev);
nlohmann::json decision_payload(const Evaluation& ev);

/// Emits HypothesisChosen, Executed, GateOutcome and Decision for one iteration.
void emit_iteration(EventLog& log, const Evaluation& ev, int lambda, const nlohmann::json& pool,
                    const std::vector<std::string>& warnings);

nlohmann::json run_init_payload(const std::string& mode, const Task& task, int n_traces, const Budget& budget,
                                const std::optional<Baseline>& baseline, const nlohmann::json& tree);

nlohmann::json log_meta(const std::string& mode, const Task& task, const RunConfig& cfg,
                        const std::string& oracle_name);

}  // namespace codeopt::detail
