#include "engine_common.hpp"

#include "codeopt/serialize.hpp"

namespace codeopt::detail {

using nlohmann::json;

TimeoutState dev_timeout(const RunConfig& cfg) {
    TimeoutState t;
    t.patience = cfg.timeout_stage_patience;
    t.multiplier_cap = cfg.coder_timeout_multiplier;
    t.step = cfg.timeout_increase_stage;
    return t;
}

TimeoutState full_timeout(const RunConfig& cfg) {
    TimeoutState t;
    t.patience = cfg.timeout_stage_patience;
    t.multiplier_cap = cfg.runner_timeout_multiplier;
    t.step = cfg.timeout_increase_stage;
    return t;
}

std::uint64_t exec_seed(const RunConfig& cfg, int trace, int iteration) {
    if (cfg.fix_seed_and_split) return cfg.seed;
    return splitmix64(cfg.seed ^ (static_cast<std::uint64_t>(trace) << 32) ^ static_cast<std::uint64_t>(iteration));
}

std::optional<Baseline> run_baseline(const Task& task, Executor& exec, const RunConfig& cfg) {
    if (!task.baseline_path || !std::filesystem::exists(*task.baseline_path)) return std::nullopt;
    Baseline b;
    b.solution = Solution{"baseline", read_file(*task.baseline_path), {}, {}, 0};
    const auto r = exec.execute(b.solution, task, {ExecKind::FullData, exec_seed(cfg, 0, 0)}, full_timeout(cfg));
    if (r.trace.exit_status == ExitStatus::Ok && check_format(r.submission, task).passed) {
        b.score = r.score;
        b.holdout = r.holdout_score;
    }
    return b;
}

Evaluation evaluate(const Candidate& c, const Task& task, const RunConfig& cfg, OracleClient& oracle,
                    Executor& exec, TimeoutState& dev, TimeoutState& full, Permits* permits) {
    Evaluation ev;
    auto& rec = ev.record;
    rec.trace_id = c.trace;
    rec.iteration = c.iteration;
    rec.hypothesis = *c.hypothesis;

    std::optional<Implementation> impl;
    try {
        impl = implement(*c.hypothesis, *c.base, task, oracle, exec, dev, cfg.reasoning, c.solution_id,
                         c.created_at, c.seed);
    } catch (const ImplementationFailed& e) {
        ev.implementation_failure = e.what();
        ExecutionTrace tr;
        if (e.last_result) {
            tr = e.last_result->trace;
        } else {
            tr.exit_status = ExitStatus::NonzeroExit;
            tr.runtime_log = "no executable code produced\n";
        }
        if (cfg.deterministic) tr.wall_seconds = 0.0;
        rec.feedback.perf = PerfPair{std::nullopt, c.reference_score};
        rec.feedback.trace = std::move(tr);
        const std::string why = std::string("implementation failed: ") + e.what();
        ev.gates.push_back(GateOutcome{Gate::Format, false, why, {}});
        rec.feedback.reason.gate = Gate::Format;
        rec.feedback.reason.verdict_text = why;
        rec.decision = false;
        return ev;
    }

    ev.solution = impl->solution;
    rec.solution_id = ev.solution.id;
    auto result = exec.execute(ev.solution, task, {ExecKind::FullData, c.seed}, full, c.base->code);
    full = escalate_timeout(full, result.trace.exit_status);
    if (cfg.deterministic) result.trace.wall_seconds = 0.0;

    rec.feedback.perf = PerfPair{result.score, c.reference_score};
    rec.feedback.trace = result.trace;
    ev.holdout = result.holdout_score;

    if (c.format_only) {
        auto g = check_format(result.submission, task);
        if (g.passed && result.trace.exit_status != ExitStatus::Ok) {
            g = GateOutcome{Gate::Format, false, "run ended with " + std::string(to_string(result.trace.exit_status)), {}};
        }
        if (g.passed && !result.score) g = GateOutcome{Gate::Format, false, "grader produced no score", {}};
        rec.decision = g.passed;
        rec.feedback.reason.gate = Gate::Format;
        rec.feedback.reason.verdict_text = g.reason_text;
        ev.gates.push_back(std::move(g));
        rec.delta = score_delta(rec.feedback.perf, task.direction);
        return ev;
    }

    ValidationInput in;
    in.task = &task;
    in.solution = &ev.solution;
    in.hypothesis = c.hypothesis;
    in.submission = result.submission;
    in.perf = rec.feedback.perf;
    in.trace = result.trace;
    ValidationConfig vc;
    vc.tolerance = cfg.near_tie_tolerance;
    auto vr = validate(in, oracle, vc, permits);

    ev.gates = std::move(vr.gates);
    rec.decision = vr.decision;
    rec.feedback.reason = std::move(vr.reason);
    rec.delta = score_delta(rec.feedback.perf, task.direction);
    return ev;
}

Evaluation failed_evaluation(int trace, int iteration, Hypothesis hypothesis, MaybeScore reference,
                             const std::string& why) {
    Evaluation ev;
    ev.record.trace_id = trace;
    ev.record.iteration = iteration;
    ev.record.hypothesis = std::move(hypothesis);
    ev.record.feedback.perf = PerfPair{std::nullopt, reference};
    ev.record.feedback.trace.exit_status = ExitStatus::NonzeroExit;
    ev.record.feedback.reason.gate = Gate::Format;
    ev.record.feedback.reason.verdict_text = why;
    ev.implementation_failure = why;
    ev.gates.push_back(GateOutcome{Gate::Format, false, why, {}});
    return ev;
}

json chosen_payload(const Evaluation& ev, int lambda, const json& pool, const std::vector<std::string>& warnings) {
    return {{"iteration", ev.record.iteration},
            {"lambda", lambda},
            {"hypothesis", ev.record.hypothesis},
            {"pool", pool},
            {"solution", ev.solution.id.empty() ? json(nullptr) : json(ev.solution)},
            {"warnings", warnings},
            {"implementation_failed",
             ev.implementation_failure ? json(*ev.implementation_failure) : json(nullptr)}};
}

json executed_payload(const Evaluation& ev) {
    return {{"iteration", ev.record.iteration},
            {"perf", ev.record.feedback.perf},
            {"trace", ev.record.feedback.trace},
            {"holdout", score_to_json(ev.holdout)}};
}

json gates_payload(const Evaluation& ev) {
    json gates = json::array();
    for (const auto& g : ev.gates) gates.push_back(gate_to_json(g));
    return {{"iteration", ev.record.iteration}, {"gates", gates}};
}

json decision_payload(const Evaluation& ev) {
    return {{"iteration", ev.record.iteration},
            {"decision", ev.record.decision},
            {"delta", ev.record.delta ? json(*ev.record.delta) : json(nullptr)},
            {"reason", ev.record.feedback.reason}};
}

void emit_iteration(EventLog& log, const Evaluation& ev, int lambda, const json& pool,
                    const std::vector<std::string>& warnings) {
    const int trace = ev.record.trace_id;
    log.emit(trace, EventKind::HypothesisChosen, chosen_payload(ev, lambda, pool, warnings));
    log.emit(trace, EventKind::Executed, executed_payload(ev));
    log.emit(trace, EventKind::GateOutcome, gates_payload(ev));
    log.emit(trace, EventKind::Decision, decision_payload(ev));
}

json run_init_payload(const std::string& mode, const Task& task, int n_traces, const Budget& budget,
                      const std::optional<Baseline>& baseline, const json& tree) {
    json b = nullptr;
    if (baseline) {
        b = {{"solution", baseline->solution},
             {"score", score_to_json(baseline->score)},
             {"holdout", score_to_json(baseline->holdout)}};
    }
    return {{"mode", mode},
            {"task_id", task.id},
            {"direction", std::string(to_string(task.direction))},
            {"n_traces", n_traces},
            {"budget", budget},
            {"baseline", b},
            {"tree", tree}};
}

json log_meta(const std::string& mode, const Task& task, const RunConfig& cfg, const std::string& oracle_name) {
    return {{"mode", mode},
            {"task_id", task.id},
            {"metric", task.metric_name},
            {"direction", std::string(to_string(task.direction))},
            {"oracle", oracle_name},
            {"deterministic", cfg.deterministic},
            {"seed", cfg.seed},
            {"traces", mode == "mcts" ? 1 : cfg.max_trace_num}};
}

}  // namespace codeopt::detail
