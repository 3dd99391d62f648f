#include "codeopt/multitrace.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <mutex>
#include <regex>
#include <thread>

#include "codeopt/serialize.hpp"
#include "engine_common.hpp"

namespace codeopt {

using nlohmann::json;

std::vector<Hypothesis> init_diversified(const Task& task, int n, OracleClient& oracle, bool diversity) {
    if (n < 1) throw Error(ErrorCode::DomainError, "need at least one trace");
    std::vector<Hypothesis> out;
    for (int i = 1; i <= n; ++i) {
        std::string existing;
        if (diversity) {
            for (const auto& h : out) existing += "- " + h.text + "\n";
        }
        std::string hint = diversity ? "Propose a direction that differs from every existing one." : "";
        std::optional<ParsedHypothesis> accepted;
        for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
            const auto reply = oracle.ask(OracleRole::InitHypothesis,
                                          {{"task_description", task.description},
                                           {"metric", task.metric_name},
                                           {"direction", std::string(to_string(task.direction))},
                                           {"trace_id", std::to_string(i)},
                                           {"diversity_hint", hint},
                                           {"existing", existing}});
            auto parsed = parse_hypothesis_reply(reply.text);
            const bool repeat = std::any_of(out.begin(), out.end(),
                                            [&](const Hypothesis& h) { return h.text == parsed.text; });
            if (parsed.text.empty() || (diversity && repeat)) {
                hint = "The proposal '" + parsed.text +
                       "' is empty or repeats an existing one; propose a clearly different direction.";
                continue;
            }
            accepted = std::move(parsed);
        }
        if (!accepted) {
            throw Error(ErrorCode::DiversificationFailed,
                        "trace " + std::to_string(i) + " could not get a distinct initial hypothesis");
        }
        Hypothesis h;
        h.id = "h" + std::to_string(i) + "-0";
        h.text = accepted->text;
        h.target_component = accepted->component;
        h.challenge = "initial direction";
        out.push_back(std::move(h));
    }
    return out;
}

// ---------------------------------------------------------------------------

std::vector<PoolMember> build_candidate_pool(const std::vector<Hypothesis>& local,
                                             std::span<const EntryPtr> memory, const Embedder& embed,
                                             const KernelParams& params, int L, MaybeScore h_star,
                                             Direction direction, Rng& rng) {
    if (local.empty() && memory.empty()) throw Error(ErrorCode::EmptyCandidateSet, "no local hypotheses and no memory");
    std::vector<PoolMember> pool;
    auto add = [&](Hypothesis h, EntryPtr src) {
        for (const auto& m : pool) {
            if (m.hypothesis.text == h.text) return;
        }
        pool.push_back(PoolMember{std::move(h), std::move(src)});
    };
    for (const auto& h : local) add(h, nullptr);
    if (memory.empty()) return pool;

    const auto best = best_entry(memory);
    auto from_memory = [](const EntryPtr& e, HypothesisOrigin origin) {
        Hypothesis h = e->hypothesis;
        h.origin = origin;
        return h;
    };
    add(from_memory(best, HypothesisOrigin::MemoryBest), best);
    if (local.empty()) {
        const auto s = sample_similar(memory, best->embedding, params, L, h_star, direction, rng);
        add(from_memory(s, HypothesisOrigin::MemorySampled), s);
    }
    for (const auto& h : local) {
        const auto emb = embed(h.text);
        const auto s = sample_similar(memory, emb, params, L, h_star, direction, rng);
        add(from_memory(s, HypothesisOrigin::MemorySampled), s);
    }
    return pool;
}

json pool_to_json(const std::vector<PoolMember>& pool) {
    json out = json::array();
    for (const auto& m : pool) {
        json j{{"id", m.hypothesis.id},
               {"text", m.hypothesis.text},
               {"origin", std::string(to_string(m.hypothesis.origin))}};
        if (m.source) {
            j["source_trace"] = m.source->trace_id;
            j["source_iteration"] = m.source->iteration;
            j["delta"] = m.source->delta;
        }
        out.push_back(std::move(j));
    }
    return out;
}

namespace {

std::string describe_pool(const std::vector<PoolMember>& pool) {
    std::string s;
    for (std::size_t i = 0; i < pool.size(); ++i) {
        const auto& m = pool[i];
        s += "#" + std::to_string(i + 1) + " [" + std::string(to_string(m.hypothesis.origin)) + "] " +
             m.hypothesis.text + " / " + std::string(to_string(m.hypothesis.target_component)) + "\n";
        if (m.source) {
            const auto& fb = m.source->feedback;
            s += "   from trace " + std::to_string(m.source->trace_id) + " iteration " +
                 std::to_string(m.source->iteration) + ", delta " + format_double(m.source->delta);
            if (fb.perf.current) s += ", score " + format_double(*fb.perf.current);
            s += "\n";
            const auto lines = split_lines(fb.reason.verdict_text);
            if (!lines.empty() && !trim(lines.front()).empty()) s += "   verdict: " + trim(lines.front()) + "\n";
        }
    }
    return s;
}

std::size_t pool_index(const std::string& digits, std::size_t n) {
    std::size_t idx = 0;
    try {
        idx = std::stoul(digits);
    } catch (const std::exception&) {
        throw Error(ErrorCode::SelectorParseError, "bad pool index '" + digits + "'");
    }
    if (idx < 1 || idx > n) {
        throw Error(ErrorCode::SelectorParseError,
                    "pool index " + digits + " outside 1.." + std::to_string(n));
    }
    return idx - 1;
}

}  // namespace

Hypothesis cross_trace_select(const std::vector<PoolMember>& pool, const Task& task, const TraceState& state,
                              OracleClient& oracle, std::string new_id) {
    if (pool.empty()) throw Error(ErrorCode::EmptyCandidateSet, "selector pool is empty");
    const auto reply = oracle.ask(OracleRole::SelectHypothesis, {{"task_description", task.description},
                                                                 {"candidates", describe_pool(pool)},
                                                                 {"history", summarize_history(state.history)}});
    std::string line;
    for (const auto& l : split_lines(reply.text)) {
        if (!trim(l).empty()) {
            line = trim(l);
            break;
        }
    }
    static const std::regex select_re(R"(^select\s*#\s*(\d+)\s*\.?$)", std::regex::icase);
    static const std::regex modify_re(R"(^modify\s*#\s*(\d+)\s*:\s*(.+)$)", std::regex::icase);
    static const std::regex generate_re(R"(^generate\s*:\s*(.+)$)", std::regex::icase);
    std::smatch m;
    if (std::regex_match(line, m, select_re)) {
        return pool[pool_index(m[1].str(), pool.size())].hypothesis;
    }
    if (std::regex_match(line, m, modify_re)) {
        const auto& base = pool[pool_index(m[1].str(), pool.size())].hypothesis;
        const auto parsed = parse_hypothesis_reply(m[2].str());
        if (parsed.text.empty()) throw Error(ErrorCode::SelectorParseError, "modification text is empty");
        Hypothesis h;
        h.id = std::move(new_id);
        h.text = parsed.text;
        h.target_component = parsed.component_defaulted ? base.target_component : parsed.component;
        h.challenge = base.challenge;
        h.origin = HypothesisOrigin::SelectorModified;
        h.parent_hypothesis_id = base.id;
        return h;
    }
    if (std::regex_match(line, m, generate_re)) {
        const auto parsed = parse_hypothesis_reply(m[1].str());
        if (parsed.text.empty()) throw Error(ErrorCode::SelectorParseError, "generated text is empty");
        Hypothesis h;
        h.id = std::move(new_id);
        h.text = parsed.text;
        h.target_component = parsed.component;
        h.challenge = "selector proposal";
        h.origin = HypothesisOrigin::SelectorGenerated;
        return h;
    }
    throw Error(ErrorCode::SelectorParseError, "unrecognised selector reply: '" + line + "'");
}

Budget adjust_budget(const Budget& budget, const RunConfig& cfg, const Task& task,
                     const std::vector<ExitStatus>& recent_exits, const std::vector<MaybeScore>& best_curve,
                     OracleClient& oracle) {
    if (!cfg.llm_decide_longer_runtime || budget.total <= 0) return budget;
    if (budget.extensions_granted >= budget.extension_cap) return budget;
    if (budget.remaining() / budget.total >= cfg.extension_threshold) return budget;

    std::string exits, curve;
    for (auto e : recent_exits) exits += std::string(to_string(e)) + "\n";
    for (const auto& s : best_curve) curve += (s ? format_double(*s) : std::string("none")) + "\n";
    try {
        const auto reply = oracle.ask(OracleRole::BudgetDecision,
                                      {{"task_description", task.description},
                                       {"remaining_budget", format_double(budget.remaining()) + " of " +
                                                                format_double(budget.total)},
                                       {"recent_exit_statuses", exits},
                                       {"best_curve", curve}});
        const auto lines = split_lines(reply.text);
        if (lines.empty() || !starts_with_ci(trim(lines.front()), "extend")) return budget;
    } catch (const Error&) {
        return budget;
    }
    Budget out = budget;
    double step = cfg.extension_fraction * cfg.budget;
    // Iterations are indivisible, so an extension grants whole ones.
    if (out.mode == BudgetMode::IterationCount) step = std::max(1.0, std::round(step));
    out.total += step;
    out.extensions_granted += 1;
    return out;
}

// ---------------------------------------------------------------------------

namespace {

// Lower sorts first: better validation score, then lower trace id.
bool ranks_before(const TraceBest& a, const TraceBest& b, Direction d) {
    if (strictly_better(a.validation_score, b.validation_score, d)) return true;
    if (strictly_better(b.validation_score, a.validation_score, d)) return false;
    return a.trace_id < b.trace_id;
}

}  // namespace

FinalSelection final_select(std::vector<TraceBest> bests, int topk, const std::vector<std::uint64_t>& seeds,
                            Direction direction, const SeedEvaluator& evaluate) {
    if (bests.empty()) throw Error(ErrorCode::EmptyCandidateSet, "no trace has a best solution");
    if (topk < 1) throw Error(ErrorCode::DomainError, "topk must be at least 1");
    std::sort(bests.begin(), bests.end(),
              [&](const TraceBest& a, const TraceBest& b) { return ranks_before(a, b, direction); });
    bests.resize(std::min(bests.size(), static_cast<std::size_t>(topk)));

    FinalSelection sel;
    std::optional<std::size_t> winner;
    for (std::size_t i = 0; i < bests.size(); ++i) {
        const auto rep = evaluate(bests[i].solution, seeds);
        SeedCandidate c;
        c.trace_id = bests[i].trace_id;
        c.solution_id = bests[i].solution.id;
        c.validation_score = bests[i].validation_score;
        c.seeds = rep.seeds;
        c.seed_scores = rep.scores;
        c.mean = rep.mean;
        sel.candidates.push_back(std::move(c));
        if (!winner) {
            winner = i;
            continue;
        }
        const auto& w = sel.candidates[*winner];
        const auto& cur = sel.candidates.back();
        const double d = direction_adjusted_delta(*cur.mean, *w.mean, direction);
        if (d > 0 || (d == 0 && cur.trace_id < w.trace_id)) winner = i;
    }
    const auto& w = sel.candidates[*winner];
    sel.trace_id = w.trace_id;
    sel.solution_id = w.solution_id;
    sel.validation_score = w.validation_score;
    sel.seed_mean = w.mean;
    return sel;
}

FinalSelection final_select(std::vector<TraceBest> bests, int topk, const std::vector<std::uint64_t>& seeds,
                            Executor& executor, const Task& task) {
    return final_select(std::move(bests), topk, seeds, task.direction,
                        [&](const Solution& s, const std::vector<std::uint64_t>& sd) {
                            return executor.multi_seed_eval(s, task, sd);
                        });
}

// ---------------------------------------------------------------------------
// The main loop

namespace {

class MultiTraceEngine {
public:
    MultiTraceEngine(const Task& task, const RunConfig& cfg, OracleClient& oracle, Executor& exec, EventLog& log)
        : task_(task), cfg_(cfg), oracle_(oracle), exec_(exec), log_(log) {}

    RunResult run();

private:
    struct Worker {
        Rng rng{0};
        TimeoutState dev;
        TimeoutState full;
        std::vector<ExitStatus> recent_exits;
        std::vector<MaybeScore> best_curve;
    };

    void init_traces();
    bool start_iteration(int trace);
    void iterate(int trace);
    void record(int trace, const detail::Evaluation& ev, int lambda, const json& pool,
                const std::vector<std::string>& warnings);
    void sync(int round);
    std::vector<EntryPtr> memory_view(int trace) const;
    double elapsed() const;

    const Task& task_;
    const RunConfig& cfg_;
    OracleClient& oracle_;
    Executor& exec_;
    EventLog& log_;

    SuccessMemory memory_;
    std::mutex mu_;
    RunState rs_;
    Budget budget_;
    std::vector<Worker> workers_;
    std::optional<detail::Baseline> baseline_;
    std::chrono::steady_clock::time_point phase2_start_;
    double last_sync_ = 0.0;
    int sync_round_ = 0;
};

double MultiTraceEngine::elapsed() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - phase2_start_).count();
}

std::vector<EntryPtr> MultiTraceEngine::memory_view(int trace) const {
    if (!cfg_.enable_global_memory) return {};
    if (!cfg_.enable_cross_trace_sharing) return memory_.snapshot_for_trace(trace);
    return memory_.snapshot();
}

void MultiTraceEngine::init_traces() {
    const int n = cfg_.max_trace_num;
    const auto hyps = init_diversified(task_, n, oracle_, cfg_.cross_trace_diversity);
    for (int i = 1; i <= n; ++i) {
        auto& w = workers_[static_cast<std::size_t>(i - 1)];
        auto& st = rs_.traces[static_cast<std::size_t>(i - 1)];
        const Solution empty;
        detail::Candidate c;
        c.hypothesis = &hyps[static_cast<std::size_t>(i - 1)];
        c.base = baseline_ ? &baseline_->solution : &empty;
        c.reference_score = baseline_ ? baseline_->score : MaybeScore{};
        c.trace = i;
        c.iteration = 0;
        c.solution_id = "s" + std::to_string(i) + "-0";
        c.seed = detail::exec_seed(cfg_, i, 0);
        c.format_only = true;
        const auto ev = detail::evaluate(c, task_, cfg_, oracle_, exec_, w.dev, w.full, exec_.permits());

        json gates = json::array();
        for (const auto& g : ev.gates) gates.push_back(gate_to_json(g));
        log_.emit(i, EventKind::Init,
                  {{"hypothesis", ev.record.hypothesis},
                   {"solution", ev.solution.id.empty() ? json(nullptr) : json(ev.solution)},
                   {"perf", ev.record.feedback.perf},
                   {"trace", ev.record.feedback.trace},
                   {"holdout", score_to_json(ev.holdout)},
                   {"gates", gates},
                   {"accepted", ev.record.decision},
                   {"implementation_failed",
                    ev.implementation_failure ? json(*ev.implementation_failure) : json(nullptr)}});
        if (ev.record.decision) {
            st.best_solution = ev.solution;
            st.best_score = ev.record.feedback.perf.current;
            rs_.best_holdout[static_cast<std::size_t>(i - 1)] = ev.holdout;
        }
        w.best_curve.push_back(st.best_score);
    }
}

// Called with mu_ held.
void MultiTraceEngine::sync(int round) {
    json bests = json::array();
    for (const auto& t : rs_.traces) {
        bests.push_back({{"trace", t.trace_id}, {"solution_id", t.best_solution.id}, {"score", score_to_json(t.best_score)}});
    }
    log_.emit(0, EventKind::Sync, {{"round", round}, {"bests", bests}});
    ++rs_.sync_events;
}

bool MultiTraceEngine::start_iteration(int trace) {
    std::lock_guard lock(mu_);
    if (budget_.mode == BudgetMode::WallClockSeconds) {
        budget_.consumed = elapsed();
        if (cfg_.merge_hours > 0 && budget_.consumed - last_sync_ >= cfg_.merge_hours * 3600.0) {
            last_sync_ = budget_.consumed;
            sync(++sync_round_);
        }
    }
    auto& w = workers_[static_cast<std::size_t>(trace - 1)];
    const auto adjusted = adjust_budget(budget_, cfg_, task_, w.recent_exits, w.best_curve, oracle_);
    if (adjusted.total != budget_.total || adjusted.extensions_granted != budget_.extensions_granted) {
        budget_ = adjusted;
        log_.emit(trace, EventKind::BudgetChange, {{"budget", budget_}, {"reason", "extension granted"}});
    }
    if (budget_.exhausted()) return false;
    if (budget_.mode == BudgetMode::IterationCount) budget_.consumed += 1;
    return true;
}

void MultiTraceEngine::record(int trace, const detail::Evaluation& ev, int lambda, const json& pool,
                              const std::vector<std::string>& warnings) {
    std::lock_guard lock(mu_);
    const auto idx = static_cast<std::size_t>(trace - 1);
    auto& st = rs_.traces[idx];
    auto& w = workers_[idx];
    detail::emit_iteration(log_, ev, lambda, pool, warnings);

    const std::string before = st.best_solution.id;
    const MaybeScore before_score = st.best_score;
    st.apply(ev.record, ev.solution, task_.direction);
    rs_.iterations.push_back(ev.record);
    rs_.holdout.emplace_back(ev.holdout, rs_.best_holdout[idx]);
    if (st.best_solution.id != before || st.best_score != before_score) rs_.best_holdout[idx] = ev.holdout;
    w.recent_exits.push_back(ev.record.feedback.trace.exit_status);
    if (w.recent_exits.size() > 5) w.recent_exits.erase(w.recent_exits.begin());
    w.best_curve.push_back(st.best_score);

    if (ev.record.decision) {
        IterationRecord kept = ev.record;
        if (cfg_.memory_save_type == MemorySaveType::HypothesisOnly) {
            kept.feedback.trace = ExecutionTrace{};
            kept.feedback.reason = DiagnosticReason{};
        }
        const auto entry = memory_.commit(kept, task_.direction, oracle_);
        log_.emit(trace, EventKind::MemoryCommit, {{"iteration", ev.record.iteration}, {"entry", entry_to_json(*entry)}});
        rs_.memory.push_back(*entry);
    }
}

void MultiTraceEngine::iterate(int trace) {
    const auto idx = static_cast<std::size_t>(trace - 1);
    auto& w = workers_[idx];
    // Only this worker mutates its trace; other threads read it under mu_.
    const TraceState& st = rs_.traces[idx];
    const int t = static_cast<int>(st.history.size()) + 1;
    const std::string tag = std::to_string(trace) + "-" + std::to_string(t);
    std::vector<std::string> warnings;

    const int lambda = adaptive_lambda(st.n_succ, st.n_fail);
    const auto challenges = extract_challenges(lambda, st, task_, oracle_, cfg_.reasoning);
    std::vector<std::string> taken;
    for (const auto& r : st.history) taken.push_back(r.hypothesis.text);
    std::vector<Hypothesis> local;
    for (std::size_t j = 0; j < challenges.size(); ++j) {
        try {
            auto h = generate_hypothesis(challenges[j], st.best_solution, st, task_, oracle_, cfg_.reasoning, taken,
                                         "h" + tag + "-" + std::to_string(j + 1), warnings);
            taken.push_back(h.text);
            local.push_back(std::move(h));
        } catch (const Error& e) {
            if (e.code() != ErrorCode::DuplicateHypothesis) throw;
            warnings.emplace_back(e.what());
        }
    }
    const auto mem = memory_view(trace);
    if (!local.empty()) local = prioritize(std::move(local), mem, cfg_.reasoning.weights, task_, st, oracle_);

    Hypothesis chosen;
    json pool_j = json::array();
    bool have_choice = true;
    try {
        if (cfg_.llm_select_hypothesis) {
            const auto pool = build_candidate_pool(
                local, mem, [this](std::string_view s) { return oracle_.embed(s); }, cfg_.kernel, t, st.best_score,
                task_.direction, w.rng);
            pool_j = pool_to_json(pool);
            chosen = cross_trace_select(pool, task_, st, oracle_, "h" + tag + "-sel");
        } else {
            std::vector<PoolMember> members;
            for (const auto& h : local) members.push_back(PoolMember{h, nullptr});
            pool_j = pool_to_json(members);
            chosen = select_topk_sample(local, cfg_.reasoning.topk, w.rng);
        }
    } catch (const Error& e) {
        if (e.code() != ErrorCode::EmptyCandidateSet) throw;
        warnings.emplace_back(e.what());
        have_choice = false;
    }

    detail::Evaluation ev;
    if (have_choice) {
        detail::Candidate c;
        c.hypothesis = &chosen;
        c.base = &st.best_solution;
        c.reference_score = st.best_score;
        c.trace = trace;
        c.iteration = t;
        c.solution_id = "s" + tag;
        c.created_at = static_cast<std::uint64_t>(t);
        c.seed = detail::exec_seed(cfg_, trace, t);
        ev = detail::evaluate(c, task_, cfg_, oracle_, exec_, w.dev, w.full, exec_.permits());
    } else {
        chosen.id = "h" + tag + "-none";
        ev = detail::failed_evaluation(trace, t, chosen, st.best_score, "no candidate hypothesis");
    }
    record(trace, ev, lambda, pool_j, warnings);
}

RunResult MultiTraceEngine::run() {
    cfg_.check();
    const int n = cfg_.max_trace_num;
    budget_ = cfg_.initial_budget();
    rs_.mode = "multitrace";
    rs_.task_id = task_.id;
    rs_.direction = task_.direction;
    workers_.resize(static_cast<std::size_t>(n));
    for (int i = 1; i <= n; ++i) {
        auto& w = workers_[static_cast<std::size_t>(i - 1)];
        w.rng = Rng(splitmix64(cfg_.seed + static_cast<std::uint64_t>(i)));
        w.dev = detail::dev_timeout(cfg_);
        w.full = detail::full_timeout(cfg_);
    }

    baseline_ = detail::run_baseline(task_, exec_, cfg_);
    log_.emit(0, EventKind::Init, detail::run_init_payload(rs_.mode, task_, n, budget_, baseline_, nullptr));
    for (int i = 1; i <= n; ++i) {
        TraceState st;
        st.trace_id = i;
        if (baseline_) {
            st.best_solution = baseline_->solution;
            st.best_score = baseline_->score;
        }
        rs_.traces.push_back(std::move(st));
        rs_.best_holdout.push_back(baseline_ ? baseline_->holdout : MaybeScore{});
    }

    // Phase 1
    init_traces();

    // Phase 2
    phase2_start_ = std::chrono::steady_clock::now();
    if (cfg_.deterministic) {
        for (int round = 1;; ++round) {
            bool stop = false;
            for (int i = 1; i <= n && !stop; ++i) {
                if (!start_iteration(i)) {
                    stop = true;
                    break;
                }
                iterate(i);
            }
            if (stop) break;
            if (cfg_.merge_iterations > 0 && round % cfg_.merge_iterations == 0) {
                std::lock_guard lock(mu_);
                sync(++sync_round_);
            }
        }
    } else {
        std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
        {
            std::vector<std::jthread> threads;
            for (int i = 1; i <= n; ++i) {
                threads.emplace_back([this, i, &errors] {
                    try {
                        while (start_iteration(i)) iterate(i);
                    } catch (...) {
                        errors[static_cast<std::size_t>(i - 1)] = std::current_exception();
                    }
                });
            }
        }
        for (const auto& e : errors) {
            if (e) std::rethrow_exception(e);
        }
    }

    // Phase 3
    std::vector<TraceBest> bests;
    for (const auto& t : rs_.traces) {
        if (t.best_score && !t.best_solution.id.empty()) bests.push_back(TraceBest{t.trace_id, t.best_solution, t.best_score});
    }
    RunResult result;
    if (baseline_) result.best = baseline_->solution;
    if (!bests.empty()) {
        if (cfg_.enable_multi_seed_selection) {
            try {
                rs_.final = final_select(bests, cfg_.topk_final, cfg_.final_seeds, exec_, task_);
            } catch (const Error& e) {
                if (e.code() != ErrorCode::AllSeedsFailed) throw;
            }
        }
        if (!rs_.final) {
            // Single-candidate selection by validation score alone.
            rs_.final = final_select(bests, 1, {0}, task_.direction, [](const Solution&, const std::vector<std::uint64_t>&) {
                return SeedEvalReport{{}, {}, 0.0, {}};
            });
            rs_.final->seed_mean.reset();
            for (auto& c : rs_.final->candidates) c.mean.reset();
        }
        for (const auto& b : bests) {
            if (b.trace_id == rs_.final->trace_id) result.best = b.solution;
        }
    }
    rs_.budget = budget_;
    log_.emit(0, EventKind::Final,
              {{"selection", rs_.final ? final_to_json(*rs_.final) : json(nullptr)},
               {"budget", budget_},
               {"best_solution", result.best.id.empty() ? json(nullptr) : json(result.best)}});
    result.state = rs_;
    result.report = build_report(rs_);
    return result;
}

}  // namespace

nlohmann::json run_log_meta(const std::string& mode, const Task& task, const RunConfig& cfg,
                            const std::string& oracle_name) {
    return detail::log_meta(mode, task, cfg, oracle_name);
}

RunResult run(const Task& task, const RunConfig& cfg, OracleClient& oracle, Executor& executor, EventLog& log) {
    MultiTraceEngine engine(task, cfg, oracle, executor, log);
    return engine.run();
}

}  // namespace codeopt
