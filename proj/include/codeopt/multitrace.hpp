#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "codeopt/config.hpp"
#include "codeopt/eventlog.hpp"
#include "codeopt/executor.hpp"
#include "codeopt/memory.hpp"
#include "codeopt/reasoning.hpp"

namespace codeopt {

/// N initial hypotheses. With `diversity` on, request n lists hypotheses
/// 1..n-1 in its context and a repeat is re-prompted once, then
/// DiversificationFailed. With it off, requests are independent.
std::vector<Hypothesis> init_diversified(const Task& task, int n, OracleClient& oracle, bool diversity = true);

struct PoolMember {
    Hypothesis hypothesis;
    // The memory entry a member came from; null for local hypotheses.
    EntryPtr source;
};

using Embedder = std::function<std::vector<double>(std::string_view)>;

/// local + best memory entry + one kernel-weighted memory sample per local
/// hypothesis (or one for the best entry when there are none), deduplicated
/// by exact text in that order. Throws EmptyCandidateSet when all are empty.
std::vector<PoolMember> build_candidate_pool(const std::vector<Hypothesis>& local,
                                             std::span<const EntryPtr> memory, const Embedder& embed,
                                             const KernelParams& params, int L, MaybeScore h_star,
                                             Direction direction, Rng& rng);

nlohmann::json pool_to_json(const std::vector<PoolMember>& pool);

/// Asks the selector to pick, modify, or replace a pool member. Replies:
///   Select #n | Modify #n: <text> [/ Component] | Generate: <text> [/ Component]
Hypothesis cross_trace_select(const std::vector<PoolMember>& pool, const Task& task, const TraceState& state,
                              OracleClient& oracle, std::string new_id);

/// Grants at most one bounded extension per call when remaining budget is
/// below the configured fraction and the oracle asks for it.
Budget adjust_budget(const Budget& budget, const RunConfig& cfg, const Task& task,
                     const std::vector<ExitStatus>& recent_exits, const std::vector<MaybeScore>& best_curve,
                     OracleClient& oracle);

struct TraceBest {
    int trace_id = 0;
    Solution solution;
    MaybeScore validation_score;
};

using SeedEvaluator = std::function<SeedEvalReport(const Solution&, const std::vector<std::uint64_t>&)>;

/// Top-k by validation score, then argmax of the multi-seed mean. Ties go to
/// the lower trace id at both steps.
FinalSelection final_select(std::vector<TraceBest> bests, int topk, const std::vector<std::uint64_t>& seeds,
                            Direction direction, const SeedEvaluator& evaluate);
FinalSelection final_select(std::vector<TraceBest> bests, int topk, const std::vector<std::uint64_t>& seeds,
                            Executor& executor, const Task& task);

struct RunResult {
    Solution best;
    RunState state;
    RunReport report;
};

/// Header metadata for a run's event log.
nlohmann::json run_log_meta(const std::string& mode, const Task& task, const RunConfig& cfg,
                            const std::string& oracle_name);

RunResult run(const Task& task, const RunConfig& cfg, OracleClient& oracle, Executor& executor, EventLog& log);

}  // namespace codeopt
