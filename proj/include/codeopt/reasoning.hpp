#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "codeopt/core.hpp"
#include "codeopt/executor.hpp"
#include "codeopt/memory.hpp"
#include "codeopt/oracle.hpp"

namespace codeopt {

struct ScoringWeights {
    double impact = 0.4;
    double alignment = 0.2;
    double novelty = 0.2;
    double feasibility = 0.1;
    double risk = 0.1;

    void check() const;
    [[nodiscard]] double total(const std::map<std::string, double>& scores) const;
};

enum class ChallengeSource : std::uint8_t { Scenario, History };
std::string_view to_string(ChallengeSource s) noexcept;

struct Challenge {
    std::string text;
    ChallengeSource source = ChallengeSource::Scenario;
};

struct SolutionSketch {
    std::string plan_text;
    std::vector<Component> touched_components;
};

struct ReasoningConfig {
    ScoringWeights weights;
    int challenges_per_source = 3;
    int topk = 3;
    bool unique_hypothesis = true;
    int duplicate_reprompts = 1;
    // After iteration 0, ask for hypotheses with the compact prompt variant.
    bool simple_hypothesis = false;
    int max_fix_iters = 3;
};

/// 3 - floor((3 n_succ + 2 n_fail) / 8), clamped at 0.
int adaptive_lambda(int n_succ, int n_fail);

/// Compact digest of a trace's history for prompts.
std::string summarize_history(const std::vector<IterationRecord>& history, std::size_t last_n = 5);

std::vector<Challenge> extract_challenges(int lambda, const TraceState& state, const Task& task,
                                          OracleClient& oracle, const ReasoningConfig& cfg);

struct ParsedHypothesis {
    std::string text;
    Component component = Component::Workflow;
    bool component_defaulted = false;
};

/// Parses "<text> / <Component>". An unknown or absent tag maps to Workflow.
ParsedHypothesis parse_hypothesis_reply(std::string_view reply);

/// One GenerateHypothesis request (plus re-prompts on duplicates). `taken`
/// lists texts already used by this trace. Warnings are appended to `warnings`.
Hypothesis generate_hypothesis(const Challenge& challenge, const Solution& best,
                               const TraceState& state, const Task& task, OracleClient& oracle,
                               const ReasoningConfig& cfg, const std::vector<std::string>& taken,
                               std::string id, std::vector<std::string>& warnings);

/// Parses a ScoreHypothesis reply: a JSON object with every dimension in [0, 1].
std::map<std::string, double> parse_score_payload(std::string_view reply);

/// Scores each hypothesis (one request each) and stable-sorts by total, descending.
std::vector<Hypothesis> prioritize(std::vector<Hypothesis> hypotheses,
                                   const std::vector<EntryPtr>& memory, const ScoringWeights& weights,
                                   const Task& task, const TraceState& state, OracleClient& oracle);

/// Uniform draw from the first min(k, n) entries.
const Hypothesis& select_topk_sample(const std::vector<Hypothesis>& sorted, int k, Rng& rng);

class ImplementationFailed : public Error {
public:
    ImplementationFailed(const std::string& why, std::optional<ExecResult> last)
        : Error(ErrorCode::ImplementationFailed, why), last_result(std::move(last)) {}

    std::optional<ExecResult> last_result;
};

struct Implementation {
    Solution solution;
    SolutionSketch sketch;
    ExecResult dev_result;
};

/// Sketch, code, then a dev-subset debug loop.
Implementation implement(const Hypothesis& hypothesis, const Solution& best, const Task& task,
                         OracleClient& oracle, Executor& executor, TimeoutState& timeout,
                         const ReasoningConfig& cfg, std::string solution_id,
                         std::uint64_t created_at, std::uint64_t seed = 0);

}  // namespace codeopt
