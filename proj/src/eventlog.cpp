#include "codeopt/eventlog.hpp"

#include <cmath>
#include <map>
#include <sstream>

#include "codeopt/experiments.hpp"
#include "codeopt/serialize.hpp"

namespace codeopt {

using nlohmann::json;

namespace {

constexpr std::pair<EventKind, std::string_view> kKindNames[] = {
    {EventKind::Init, "Init"},
    {EventKind::HypothesisChosen, "HypothesisChosen"},
    {EventKind::Executed, "Executed"},
    {EventKind::GateOutcome, "GateOutcome"},
    {EventKind::Decision, "Decision"},
    {EventKind::MemoryCommit, "MemoryCommit"},
    {EventKind::BudgetChange, "BudgetChange"},
    {EventKind::TreeUpdate, "TreeUpdate"},
    {EventKind::Sync, "Sync"},
    {EventKind::Final, "Final"},
};

}  // namespace

std::string_view to_string(EventKind k) noexcept {
    for (const auto& [kind, name] : kKindNames) {
        if (kind == k) return name;
    }
    return "?";
}

EventKind parse_event_kind(std::string_view text) {
    for (const auto& [kind, name] : kKindNames) {
        if (name == text) return kind;
    }
    throw Error(ErrorCode::DomainError, "unknown event kind '" + std::string(text) + "'");
}

std::string event_to_line(const RunEvent& ev) {
    const json j{{"seq", ev.seq},
                 {"t", ev.t},
                 {"trace", ev.trace},
                 {"kind", std::string(to_string(ev.kind))},
                 {"payload", ev.payload}};
    return j.dump(-1, ' ', false, json::error_handler_t::replace);
}

RunEvent event_from_json(const json& j) {
    RunEvent ev;
    ev.seq = j.at("seq").get<std::uint64_t>();
    ev.t = j.at("t").get<std::uint64_t>();
    ev.trace = j.at("trace").get<int>();
    ev.kind = parse_event_kind(j.at("kind").get<std::string>());
    ev.payload = j.at("payload");
    return ev;
}

std::string header_line(const json& meta) {
    const json j{{"schema", std::string(kLogSchema)}, {"version", kLogVersion}, {"meta", meta}};
    return j.dump(-1, ' ', false, json::error_handler_t::replace);
}

// ---------------------------------------------------------------------------
// Writer

EventLog::EventLog(std::filesystem::path path, json meta, bool deterministic)
    : path_(std::move(path)),
      meta_(std::move(meta)),
      deterministic_(deterministic),
      start_(std::chrono::steady_clock::now()) {
    if (path_.empty()) {
        closed_ = true;
        return;
    }
    if (path_.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path_.parent_path(), ec);
    }
    out_.open(path_, std::ios::binary | std::ios::trunc);
    if (!out_) throw Error(ErrorCode::IoFailure, "cannot open event log " + path_.string());
    out_ << header_line(meta_) << '\n';
    out_.flush();
    if (!out_) throw Error(ErrorCode::IoFailure, "cannot write event log " + path_.string());
    writer_ = std::thread([this] { writer_loop(); });
}

EventLog::~EventLog() {
    try {
        close();
    } catch (...) {
    }
}

void EventLog::push_locked(RunEvent ev) {
    last_seq_ = ev.seq;
    if (!path_.empty()) {
        queue_.push_back(event_to_line(ev));
        cv_.notify_one();
    }
    events_.push_back(std::move(ev));
}

std::uint64_t EventLog::emit(int trace, EventKind kind, json payload) {
    std::lock_guard lock(mu_);
    if (stopping_) throw Error(ErrorCode::IoFailure, "event log already closed");
    RunEvent ev;
    ev.seq = last_seq_ + 1;
    ev.t = deterministic_
               ? ev.seq
               : static_cast<std::uint64_t>(std::chrono::duration_cast<std::chrono::milliseconds>(
                                                std::chrono::steady_clock::now() - start_)
                                                .count());
    ev.trace = trace;
    ev.kind = kind;
    ev.payload = std::move(payload);
    push_locked(std::move(ev));
    return last_seq_;
}

void EventLog::append(RunEvent ev) {
    std::lock_guard lock(mu_);
    if (stopping_) throw Error(ErrorCode::IoFailure, "event log already closed");
    if (ev.seq != last_seq_ + 1) {
        throw Error(ErrorCode::SeqGap, "expected seq " + std::to_string(last_seq_ + 1) + ", got " +
                                           std::to_string(ev.seq));
    }
    push_locked(std::move(ev));
}

void EventLog::writer_loop() {
    std::unique_lock lock(mu_);
    for (;;) {
        cv_.wait(lock, [this] { return stopping_ || !queue_.empty(); });
        while (!queue_.empty()) {
            std::string line = std::move(queue_.front());
            queue_.pop_front();
            lock.unlock();
            if (!io_error_) {
                out_ << line << '\n';
                out_.flush();
            }
            lock.lock();
            if (!out_ && !io_error_) io_error_ = "write to " + path_.string() + " failed";
        }
        if (stopping_) return;
    }
}

void EventLog::close() {
    {
        std::lock_guard lock(mu_);
        if (stopping_) {
            if (io_error_) throw Error(ErrorCode::IoFailure, *io_error_);
            return;
        }
        stopping_ = true;
        cv_.notify_one();
    }
    if (writer_.joinable()) writer_.join();
    if (out_.is_open()) out_.close();
    if (io_error_) throw Error(ErrorCode::IoFailure, *io_error_);
}

std::uint64_t EventLog::last_seq() const {
    std::lock_guard lock(mu_);
    return last_seq_;
}

std::vector<RunEvent> EventLog::events() const {
    std::lock_guard lock(mu_);
    return events_;
}

// ---------------------------------------------------------------------------
// Reader

LogFile parse_log(std::string_view text) {
    LogFile log;
    std::uint64_t last = 0;
    bool header_seen = false;
    for (const auto& raw : split_lines(text)) {
        if (trim(raw).empty()) continue;
        json j;
        try {
            j = json::parse(raw);
        } catch (const json::exception& e) {
            throw CorruptLog(last + 1, std::string("unparsable line: ") + e.what());
        }
        if (!header_seen) {
            if (!j.is_object() || j.value("schema", "") != kLogSchema) {
                throw CorruptLog(1, "missing log header");
            }
            if (j.value("version", 0) != kLogVersion) throw CorruptLog(1, "unsupported log version");
            log.meta = j.value("meta", json::object());
            header_seen = true;
            continue;
        }
        RunEvent ev;
        try {
            ev = event_from_json(j);
        } catch (const std::exception& e) {
            throw CorruptLog(last + 1, std::string("malformed event: ") + e.what());
        }
        if (ev.seq != last + 1) throw CorruptLog(last + 1, "sequence does not continue");
        last = ev.seq;
        log.events.push_back(std::move(ev));
    }
    return log;
}

LogFile read_log(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw Error(ErrorCode::IoFailure, "no log at " + path.string());
    return parse_log(read_file(path));
}

// ---------------------------------------------------------------------------
// Payload pieces

json gate_to_json(const GateOutcome& g) {
    return {{"gate", std::string(to_string(g.gate))},
            {"passed", g.passed},
            {"reason", g.reason_text},
            {"findings", g.findings}};
}

GateOutcome gate_from_json(const json& j) {
    return GateOutcome{parse_gate(j.at("gate").get<std::string>()), j.at("passed").get<bool>(),
                       j.at("reason").get<std::string>(),
                       j.at("findings").get<std::vector<std::string>>()};
}

namespace {

json optional_double(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> optional_double_from(const json& j) {
    if (j.is_null()) return std::nullopt;
    return j.get<double>();
}

}  // namespace

json final_to_json(const FinalSelection& f) {
    json cands = json::array();
    for (const auto& c : f.candidates) {
        json scores = json::array();
        for (const auto& s : c.seed_scores) scores.push_back(score_to_json(s));
        cands.push_back({{"trace", c.trace_id},
                         {"solution_id", c.solution_id},
                         {"validation_score", score_to_json(c.validation_score)},
                         {"seeds", c.seeds},
                         {"seed_scores", scores},
                         {"mean", optional_double(c.mean)}});
    }
    return {{"trace", f.trace_id},
            {"solution_id", f.solution_id},
            {"validation_score", score_to_json(f.validation_score)},
            {"seed_mean", optional_double(f.seed_mean)},
            {"candidates", cands}};
}

FinalSelection final_from_json(const json& j) {
    FinalSelection f;
    f.trace_id = j.at("trace").get<int>();
    f.solution_id = j.at("solution_id").get<std::string>();
    f.validation_score = score_from_json(j.at("validation_score"));
    f.seed_mean = optional_double_from(j.at("seed_mean"));
    for (const auto& c : j.at("candidates")) {
        SeedCandidate s;
        s.trace_id = c.at("trace").get<int>();
        s.solution_id = c.at("solution_id").get<std::string>();
        s.validation_score = score_from_json(c.at("validation_score"));
        s.seeds = c.at("seeds").get<std::vector<std::uint64_t>>();
        for (const auto& x : c.at("seed_scores")) s.seed_scores.push_back(score_from_json(x));
        s.mean = optional_double_from(c.at("mean"));
        f.candidates.push_back(std::move(s));
    }
    return f;
}

// ---------------------------------------------------------------------------
// Reports

RunReport build_report(const RunState& state) {
    RunReport r;
    r.mode = state.mode;
    r.task_id = state.task_id;
    r.direction = state.direction;
    r.iterations = static_cast<int>(state.iterations.size());
    for (const auto& rec : state.iterations) r.accepted += rec.decision ? 1 : 0;
    if (r.iterations > 0) r.improvement_rate = static_cast<double>(r.accepted) / r.iterations;

    std::vector<double> val, test;
    for (std::size_t i = 0; i < state.iterations.size(); ++i) {
        const auto& perf = state.iterations[i].feedback.perf;
        const auto& [h_cur, h_best] = state.holdout[i];
        if (perf.current && perf.best && h_cur && h_best) {
            val.push_back(direction_adjusted_delta(*perf.current, *perf.best, state.direction));
            test.push_back(direction_adjusted_delta(*h_cur, *h_best, state.direction));
        }
    }
    r.ic_pairs = val.size();
    if (val.size() >= 2) r.ic = spearman_ic(val, test);

    for (const auto& t : state.traces) {
        TraceSummary s;
        s.trace_id = t.trace_id;
        s.iterations = static_cast<int>(t.history.size());
        s.accepted = t.n_succ;
        s.best_score = t.best_score;
        s.best_solution_id = t.best_solution.id;
        r.traces.push_back(std::move(s));
        if (r.best_trace == 0 || strictly_better(t.best_score, r.best_score, state.direction)) {
            r.best_trace = t.trace_id;
            r.best_score = t.best_score;
            r.best_solution_id = t.best_solution.id;
        }
    }
    if (state.final) {
        r.best_trace = state.final->trace_id;
        r.best_solution_id = state.final->solution_id;
        r.best_score = state.final->validation_score;
    }
    r.memory_size = state.memory.size();
    if (state.tree) {
        r.tree_nodes = state.tree->size();
        r.tree_edges = state.tree->edge_count();
    }
    r.sync_events = state.sync_events;
    r.budget = state.budget;
    r.final = state.final;
    return r;
}

json RunReport::to_json() const {
    json traces_j = json::array();
    for (const auto& t : traces) {
        traces_j.push_back({{"trace", t.trace_id},
                            {"iterations", t.iterations},
                            {"accepted", t.accepted},
                            {"best_score", score_to_json(t.best_score)},
                            {"best_solution_id", t.best_solution_id}});
    }
    return {{"mode", mode},
            {"task_id", task_id},
            {"direction", std::string(codeopt::to_string(direction))},
            {"best_score", score_to_json(best_score)},
            {"best_solution_id", best_solution_id},
            {"best_trace", best_trace},
            {"iterations", iterations},
            {"accepted", accepted},
            {"improvement_rate", optional_double(improvement_rate)},
            {"ic", optional_double(ic)},
            {"ic_pairs", ic_pairs},
            {"traces", traces_j},
            {"memory_size", memory_size},
            {"tree_nodes", tree_nodes},
            {"tree_edges", tree_edges},
            {"sync_events", sync_events},
            {"budget", budget},
            {"final", final ? final_to_json(*final) : json(nullptr)}};
}

namespace {

std::string percent(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f%%", 100.0 * x);
    return buf;
}

std::string score_text(const MaybeScore& s) { return s ? format_double(*s) : std::string("none"); }

}  // namespace

std::string RunReport::to_text() const {
    std::ostringstream out;
    out << "task " << task_id << " (" << mode << ", " << codeopt::to_string(direction) << ")\n";
    out << "best score " << score_text(best_score);
    if (!best_solution_id.empty()) out << " from " << best_solution_id << " (trace " << best_trace << ")";
    out << "\n";
    out << "iterations " << iterations << ", accepted " << accepted << "\n";
    if (improvement_rate) {
        out << "improvement rate " << percent(*improvement_rate) << " (" << accepted << "/" << iterations << ")\n";
    } else {
        out << "improvement rate n/a (no iterations)\n";
    }
    if (ic) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.4f", *ic);
        out << "IC " << buf << " over " << ic_pairs << " pairs\n";
    } else if (ic_pairs >= 2) {
        out << "IC undefined (no variance) over " << ic_pairs << " pairs\n";
    }
    for (const auto& t : traces) {
        out << "  trace " << t.trace_id << ": " << t.iterations << " iterations, " << t.accepted
            << " accepted, best " << score_text(t.best_score) << "\n";
    }
    out << "memory entries " << memory_size << "\n";
    if (tree_nodes > 0) out << "tree nodes " << tree_nodes << ", edges " << tree_edges << "\n";
    if (sync_events > 0) out << "sync events " << sync_events << "\n";
    out << "budget " << format_double(budget.consumed) << " of " << format_double(budget.total)
        << (budget.mode == BudgetMode::IterationCount ? " iterations" : " seconds");
    if (budget.extensions_granted > 0) out << ", " << budget.extensions_granted << " extension(s)";
    out << "\n";
    if (final && !final->candidates.empty()) {
        out << "final selection: " << final->solution_id << " (trace " << final->trace_id << ")";
        if (final->seed_mean) out << ", seed mean " << format_double(*final->seed_mean);
        out << "\n";
    }
    return out.str();
}

// ---------------------------------------------------------------------------
// Replay

namespace {

struct Pending {
    int stage = 0;  // 0 idle, 1 chosen, 2 executed, 3 gated, 4 awaiting commit
    IterationRecord record;
    Solution solution;
    MaybeScore holdout;
};

}  // namespace

RunState replay(const LogFile& log) {
    RunState st;
    if (log.events.empty()) return st;

    std::map<int, Pending> pending;
    MaybeScore baseline_score;
    MaybeScore baseline_holdout;
    std::optional<Solution> baseline;
    bool started = false;
    bool commits = true;

    auto trace_index = [&](const RunEvent& ev) -> std::size_t {
        if (ev.trace < 1 || static_cast<std::size_t>(ev.trace) > st.traces.size()) {
            throw CorruptLog(ev.seq, "event names unknown trace " + std::to_string(ev.trace));
        }
        return static_cast<std::size_t>(ev.trace - 1);
    };

    for (const auto& ev : log.events) {
        const auto& p = ev.payload;
        try {
            if (!started && !(ev.kind == EventKind::Init && ev.trace == 0)) {
                throw CorruptLog(ev.seq, "log does not begin with a run Init event");
            }
            switch (ev.kind) {
                case EventKind::Init: {
                    if (ev.trace == 0) {
                        if (started) throw CorruptLog(ev.seq, "second run Init event");
                        started = true;
                        st.mode = p.at("mode").get<std::string>();
                        commits = st.mode != "mcts";
                        st.task_id = p.at("task_id").get<std::string>();
                        st.direction = parse_direction(p.at("direction").get<std::string>());
                        st.budget = p.at("budget").get<Budget>();
                        const int n = p.at("n_traces").get<int>();
                        for (int i = 1; i <= n; ++i) {
                            TraceState t;
                            t.trace_id = i;
                            st.traces.push_back(std::move(t));
                            st.best_holdout.emplace_back();
                        }
                        if (!p.at("baseline").is_null()) {
                            const auto& b = p.at("baseline");
                            baseline = b.at("solution").get<Solution>();
                            baseline_score = score_from_json(b.at("score"));
                            baseline_holdout = score_from_json(b.at("holdout"));
                            for (std::size_t i = 0; i < st.traces.size(); ++i) {
                                st.traces[i].best_solution = *baseline;
                                st.traces[i].best_score = baseline_score;
                                st.best_holdout[i] = baseline_holdout;
                            }
                        }
                        if (p.contains("tree") && !p.at("tree").is_null()) {
                            st.tree.emplace(p.at("tree").at("max_depth").get<int>());
                        }
                        break;
                    }
                    const auto i = trace_index(ev);
                    if (p.at("accepted").get<bool>()) {
                        st.traces[i].best_solution = p.at("solution").get<Solution>();
                        st.traces[i].best_score = score_from_json(p.at("perf").at("current"));
                        st.best_holdout[i] = score_from_json(p.at("holdout"));
                    }
                    break;
                }
                case EventKind::HypothesisChosen: {
                    trace_index(ev);
                    auto& pd = pending[ev.trace];
                    if (pd.stage != 0) throw CorruptLog(ev.seq, "previous iteration incomplete");
                    pd = Pending{};
                    pd.stage = 1;
                    pd.record.trace_id = ev.trace;
                    pd.record.iteration = p.at("iteration").get<int>();
                    pd.record.hypothesis = p.at("hypothesis").get<Hypothesis>();
                    if (!p.at("solution").is_null()) pd.solution = p.at("solution").get<Solution>();
                    pd.record.solution_id = pd.solution.id;
                    break;
                }
                case EventKind::Executed: {
                    auto& pd = pending[ev.trace];
                    if (pd.stage != 1) throw CorruptLog(ev.seq, "Executed out of order");
                    pd.record.feedback.perf = p.at("perf").get<PerfPair>();
                    pd.record.feedback.trace = p.at("trace").get<ExecutionTrace>();
                    pd.holdout = score_from_json(p.at("holdout"));
                    pd.stage = 2;
                    break;
                }
                case EventKind::GateOutcome: {
                    auto& pd = pending[ev.trace];
                    if (pd.stage != 2) throw CorruptLog(ev.seq, "GateOutcome out of order");
                    for (const auto& g : p.at("gates")) gate_from_json(g);
                    pd.stage = 3;
                    break;
                }
                case EventKind::Decision: {
                    const auto i = trace_index(ev);
                    auto& pd = pending[ev.trace];
                    if (pd.stage != 3) throw CorruptLog(ev.seq, "Decision without Executed and GateOutcome");
                    pd.record.decision = p.at("decision").get<bool>();
                    if (!p.at("delta").is_null()) pd.record.delta = p.at("delta").get<double>();
                    pd.record.feedback.reason = p.at("reason").get<DiagnosticReason>();
                    const std::string before = st.traces[i].best_solution.id;
                    const MaybeScore before_score = st.traces[i].best_score;
                    st.traces[i].apply(pd.record, pd.solution, st.direction);
                    st.iterations.push_back(pd.record);
                    st.holdout.emplace_back(pd.holdout, st.best_holdout[i]);
                    if (st.traces[i].best_solution.id != before || st.traces[i].best_score != before_score) {
                        st.best_holdout[i] = pd.holdout;
                    }
                    pd.stage = pd.record.decision && commits ? 4 : 0;
                    break;
                }
                case EventKind::MemoryCommit: {
                    auto& pd = pending[ev.trace];
                    if (pd.stage != 4) throw CorruptLog(ev.seq, "MemoryCommit without an accepted Decision");
                    st.memory.push_back(entry_from_json(p.at("entry")));
                    pd.stage = 0;
                    break;
                }
                case EventKind::BudgetChange:
                    st.budget = p.at("budget").get<Budget>();
                    break;
                case EventKind::TreeUpdate: {
                    if (!st.tree) throw CorruptLog(ev.seq, "TreeUpdate in a run without a tree");
                    auto& tree = *st.tree;
                    if (!p.at("node").is_null()) {
                        const auto& n = p.at("node");
                        const int id = n.at("id").get<int>();
                        int got = 0;
                        if (n.at("parent").is_null()) {
                            got = tree.add_root(n.at("solution_id").get<std::string>(),
                                                n.at("hypothesis").get<std::string>());
                        } else {
                            got = tree.add_child(n.at("parent").get<int>(), n.at("solution_id").get<std::string>(),
                                                 n.at("hypothesis").get<std::string>());
                        }
                        if (got != id) throw CorruptLog(ev.seq, "tree node ids out of order");
                        tree.set_evaluation(id, score_from_json(n.at("score")), n.at("validated").get<bool>(),
                                            n.at("reward").get<double>());
                    }
                    tree.backprop(p.at("path").get<std::vector<int>>(), p.at("reward").get<double>());
                    break;
                }
                case EventKind::Sync:
                    ++st.sync_events;
                    break;
                case EventKind::Final:
                    if (!p.at("selection").is_null()) st.final = final_from_json(p.at("selection"));
                    st.budget = p.at("budget").get<Budget>();
                    break;
            }
        } catch (const CorruptLog&) {
            throw;
        } catch (const std::exception& e) {
            throw CorruptLog(ev.seq, e.what());
        }
    }
    for (const auto& [trace, pd] : pending) {
        if (pd.stage != 0) {
            throw CorruptLog(log.events.back().seq + 1,
                             "trace " + std::to_string(trace) + " stops mid-iteration");
        }
    }
    return st;
}

}  // namespace codeopt
