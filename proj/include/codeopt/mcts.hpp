#pragma once

#include "codeopt/config.hpp"
#include "codeopt/eventlog.hpp"
#include "codeopt/executor.hpp"
#include "codeopt/multitrace.hpp"
#include "codeopt/tree.hpp"

namespace codeopt {

/// True when `score` meets an early-stop threshold under `direction`.
bool meets_threshold(double score, double threshold, Direction direction);

/// Tree-search variant: PUCT selection, k-way expansion of the selected leaf,
/// every child executed, validated and backed up at once. One child costs one
/// budget unit; so does revisiting a leaf at the depth cap.
RunResult mcts_run(const Task& task, const RunConfig& cfg, OracleClient& oracle, Executor& executor, EventLog& log);

}  // namespace codeopt
