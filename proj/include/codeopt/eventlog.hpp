#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "codeopt/core.hpp"
#include "codeopt/memory.hpp"
#include "codeopt/tree.hpp"
#include "codeopt/validation.hpp"

namespace codeopt {

// ---------------------------------------------------------------------------
// Events
//
// File layout (JSONL):
//   {"schema":"codeopt-events","version":1,"meta":{...}}
//   {"seq":1,"t":1,"trace":0,"kind":"Init","payload":{...}}
//   ...
//
// One iteration of trace i is, in order: HypothesisChosen, Executed,
// GateOutcome, Decision, and MemoryCommit when accepted. Events of different
// traces may interleave.

enum class EventKind : std::uint8_t {
    Init,
    HypothesisChosen,
    Executed,
    GateOutcome,
    Decision,
    MemoryCommit,
    BudgetChange,
    TreeUpdate,
    Sync,
    Final,
};

std::string_view to_string(EventKind k) noexcept;
EventKind parse_event_kind(std::string_view text);

struct RunEvent {
    std::uint64_t seq = 0;
    std::uint64_t t = 0;
    int trace = 0;
    EventKind kind = EventKind::Init;
    nlohmann::json payload = nlohmann::json::object();
};

inline constexpr std::string_view kLogSchema = "codeopt-events";
inline constexpr int kLogVersion = 1;

std::string event_to_line(const RunEvent& ev);
RunEvent event_from_json(const nlohmann::json& j);
std::string header_line(const nlohmann::json& meta);

// Appends events through a single writer thread. Producers call emit() (which
// assigns seq and logical time) or append() (which checks the seq they carry).
// An empty path keeps the log in memory only.
class EventLog {
public:
    EventLog(std::filesystem::path path, nlohmann::json meta, bool deterministic = true);
    ~EventLog();
    EventLog(const EventLog&) = delete;
    EventLog& operator=(const EventLog&) = delete;

    std::uint64_t emit(int trace, EventKind kind, nlohmann::json payload);
    /// Throws SeqGap unless ev.seq is exactly one past the last seq.
    void append(RunEvent ev);

    /// Drains the queue and stops the writer. Rethrows any write failure as
    /// IoFailure. Safe to call twice.
    void close();

    [[nodiscard]] std::uint64_t last_seq() const;
    [[nodiscard]] std::vector<RunEvent> events() const;
    [[nodiscard]] const nlohmann::json& meta() const { return meta_; }
    [[nodiscard]] const std::filesystem::path& path() const { return path_; }

private:
    void push_locked(RunEvent ev);
    void writer_loop();

    std::filesystem::path path_;
    nlohmann::json meta_;
    bool deterministic_;
    std::chrono::steady_clock::time_point start_;

    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::deque<std::string> queue_;
    std::vector<RunEvent> events_;
    std::uint64_t last_seq_ = 0;
    bool stopping_ = false;
    bool closed_ = false;
    std::optional<std::string> io_error_;
    std::ofstream out_;
    std::thread writer_;
};

struct LogFile {
    nlohmann::json meta = nlohmann::json::object();
    std::vector<RunEvent> events;
};

/// Parses a log. An empty file is an empty log. A malformed line or a seq
/// that does not continue the sequence throws CorruptLog.
LogFile read_log(const std::filesystem::path& path);
LogFile parse_log(std::string_view text);

// ---------------------------------------------------------------------------
// Payload builders shared by the engines and by replay.

nlohmann::json gate_to_json(const GateOutcome& g);
GateOutcome gate_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------
// Reports

struct SeedCandidate {
    int trace_id = 0;
    std::string solution_id;
    MaybeScore validation_score;
    std::vector<std::uint64_t> seeds;
    std::vector<MaybeScore> seed_scores;
    std::optional<double> mean;
};

struct FinalSelection {
    int trace_id = 0;
    std::string solution_id;
    MaybeScore validation_score;
    std::optional<double> seed_mean;
    std::vector<SeedCandidate> candidates;
};

nlohmann::json final_to_json(const FinalSelection& f);
FinalSelection final_from_json(const nlohmann::json& j);

// Everything the report is computed from. The live engines fill it from their
// own state; replay fills it from the log alone.
struct RunState {
    std::string mode;
    std::string task_id;
    Direction direction = Direction::HigherBetter;
    std::vector<TraceState> traces;
    // Holdout score of each trace's current best, parallel to `traces`.
    std::vector<MaybeScore> best_holdout;
    // Every iteration in decision order.
    std::vector<IterationRecord> iterations;
    // Holdout scores per iteration, parallel to `iterations`: (current, best).
    std::vector<std::pair<MaybeScore, MaybeScore>> holdout;
    std::vector<MemoryEntry> memory;
    std::optional<SearchTree> tree;
    Budget budget;
    std::optional<FinalSelection> final;
    int sync_events = 0;
};

struct TraceSummary {
    int trace_id = 0;
    int iterations = 0;
    int accepted = 0;
    MaybeScore best_score;
    std::string best_solution_id;
};

struct RunReport {
    std::string mode;
    std::string task_id;
    Direction direction = Direction::HigherBetter;
    MaybeScore best_score;
    std::string best_solution_id;
    int best_trace = 0;
    int iterations = 0;
    int accepted = 0;
    std::optional<double> improvement_rate;
    std::optional<double> ic;
    std::size_t ic_pairs = 0;
    std::vector<TraceSummary> traces;
    std::size_t memory_size = 0;
    std::size_t tree_nodes = 0;
    std::size_t tree_edges = 0;
    int sync_events = 0;
    Budget budget;
    std::optional<FinalSelection> final;

    [[nodiscard]] nlohmann::json to_json() const;
    [[nodiscard]] std::string to_text() const;
};

RunReport build_report(const RunState& state);

/// Rebuilds the run state from a log without calling any oracle or executor.
RunState replay(const LogFile& log);

}  // namespace codeopt
