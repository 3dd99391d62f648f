#include "codeopt/serialize.hpp"

namespace codeopt {

using nlohmann::json;

namespace {

template <typename T>
json opt(const std::optional<T>& v) {
    return v ? json(*v) : json(nullptr);
}

template <typename T>
std::optional<T> get_opt(const json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<T>();
}

}  // namespace

json score_to_json(const MaybeScore& s) { return s ? json(*s) : json(nullptr); }

MaybeScore score_from_json(const json& j) {
    if (j.is_null()) return std::nullopt;
    return j.get<double>();
}

void to_json(json& j, const Solution& s) {
    j = json{{"id", s.id},
             {"code", s.code},
             {"parent_id", opt(s.parent_id)},
             {"hypothesis_id", opt(s.hypothesis_id)},
             {"created_at", s.created_at}};
}

void from_json(const json& j, Solution& s) {
    s.id = j.at("id").get<std::string>();
    s.code = j.at("code").get<std::string>();
    s.parent_id = get_opt<std::string>(j, "parent_id");
    s.hypothesis_id = get_opt<std::string>(j, "hypothesis_id");
    s.created_at = j.at("created_at").get<std::uint64_t>();
}

void to_json(json& j, const Hypothesis& h) {
    j = json{{"id", h.id},
             {"text", h.text},
             {"component", std::string(to_string(h.target_component))},
             {"challenge", h.challenge},
             {"scores", h.scores},
             {"total_score", h.total_score},
             {"origin", std::string(to_string(h.origin))},
             {"parent_hypothesis_id", opt(h.parent_hypothesis_id)}};
}

void from_json(const json& j, Hypothesis& h) {
    h.id = j.at("id").get<std::string>();
    h.text = j.at("text").get<std::string>();
    h.target_component = parse_component(j.at("component").get<std::string>()).value_or(Component::Workflow);
    h.challenge = j.at("challenge").get<std::string>();
    h.scores = j.at("scores").get<std::map<std::string, double>>();
    h.total_score = j.at("total_score").get<double>();
    h.origin = parse_origin(j.at("origin").get<std::string>());
    h.parent_hypothesis_id = get_opt<std::string>(j, "parent_hypothesis_id");
}

void to_json(json& j, const PerfPair& p) {
    j = json{{"current", score_to_json(p.current)}, {"best", score_to_json(p.best)}};
}

void from_json(const json& j, PerfPair& p) {
    p.current = score_from_json(j.at("current"));
    p.best = score_from_json(j.at("best"));
}

void to_json(json& j, const ExecutionTrace& t) {
    j = json{{"stdout", t.stdout_excerpt},
             {"stderr", t.stderr_excerpt},
             {"runtime_log", t.runtime_log},
             {"code_diff", t.code_diff},
             {"exit_status", std::string(to_string(t.exit_status))},
             {"wall_seconds", t.wall_seconds}};
}

void from_json(const json& j, ExecutionTrace& t) {
    t.stdout_excerpt = j.at("stdout").get<std::string>();
    t.stderr_excerpt = j.at("stderr").get<std::string>();
    t.runtime_log = j.at("runtime_log").get<std::string>();
    t.code_diff = j.at("code_diff").get<std::string>();
    t.exit_status = parse_exit_status(j.at("exit_status").get<std::string>());
    t.wall_seconds = j.at("wall_seconds").get<double>();
}

void to_json(json& j, const DiagnosticReason& r) {
    j = json{{"gate", std::string(to_string(r.gate))},
             {"verdict_text", r.verdict_text},
             {"hypothesis_verified", opt(r.hypothesis_verified)},
             {"code_quality_notes", opt(r.code_quality_notes)},
             {"leakage_findings", r.leakage_findings}};
}

void from_json(const json& j, DiagnosticReason& r) {
    r.gate = parse_gate(j.at("gate").get<std::string>());
    r.verdict_text = j.at("verdict_text").get<std::string>();
    r.hypothesis_verified = get_opt<bool>(j, "hypothesis_verified");
    r.code_quality_notes = get_opt<std::string>(j, "code_quality_notes");
    r.leakage_findings = j.at("leakage_findings").get<std::vector<std::string>>();
}

void to_json(json& j, const StructuredFeedback& f) {
    j = json{{"perf", f.perf}, {"trace", f.trace}, {"reason", f.reason}};
}

void from_json(const json& j, StructuredFeedback& f) {
    f.perf = j.at("perf").get<PerfPair>();
    f.trace = j.at("trace").get<ExecutionTrace>();
    f.reason = j.at("reason").get<DiagnosticReason>();
}

void to_json(json& j, const Budget& b) {
    j = json{{"mode", b.mode == BudgetMode::IterationCount ? "IterationCount" : "WallClockSeconds"},
             {"total", b.total},
             {"consumed", b.consumed},
             {"extensions_granted", b.extensions_granted},
             {"extension_cap", b.extension_cap}};
}

void from_json(const json& j, Budget& b) {
    b.mode = j.at("mode").get<std::string>() == "IterationCount" ? BudgetMode::IterationCount
                                                                 : BudgetMode::WallClockSeconds;
    b.total = j.at("total").get<double>();
    b.consumed = j.at("consumed").get<double>();
    b.extensions_granted = j.at("extensions_granted").get<int>();
    b.extension_cap = j.at("extension_cap").get<int>();
}

json entry_to_json(const MemoryEntry& e) {
    return json{{"hypothesis", e.hypothesis}, {"feedback", e.feedback}, {"delta", e.delta},
                {"trace_id", e.trace_id},     {"iteration", e.iteration}, {"embedding", e.embedding}};
}

MemoryEntry entry_from_json(const json& j) {
    MemoryEntry e;
    e.hypothesis = j.at("hypothesis").get<Hypothesis>();
    e.feedback = j.at("feedback").get<StructuredFeedback>();
    e.delta = j.at("delta").get<double>();
    e.trace_id = j.at("trace_id").get<int>();
    e.iteration = j.at("iteration").get<int>();
    e.embedding = j.at("embedding").get<std::vector<double>>();
    return e;
}

}  // namespace codeopt
