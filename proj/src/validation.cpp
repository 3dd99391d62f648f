#include "codeopt/validation.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>

namespace codeopt {

namespace {

// Splits one CSV line; double quotes group fields and "" escapes a quote.
std::vector<std::string> csv_fields(std::string_view line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur.push_back('"');
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(trim(cur));
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(trim(cur));
    return out;
}

bool is_finite_number(const std::string& s) {
    if (s.empty()) return false;
    std::size_t used = 0;
    try {
        const double v = std::stod(s, &used);
        return used == s.size() && std::isfinite(v);
    } catch (const std::exception&) {
        return false;
    }
}

GateOutcome fail(Gate g, std::string why, std::vector<std::string> findings = {}) {
    return GateOutcome{g, false, std::move(why), std::move(findings)};
}

std::string optional_number(const MaybeScore& s) { return s ? format_double(*s) : ""; }

}  // namespace

GateOutcome check_format(const std::optional<std::string>& submission, const Task& task) {
    if (!submission) return fail(Gate::Format, "submission absent");
    auto lines = split_lines(*submission);
    while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
    if (lines.empty()) return fail(Gate::Format, "submission is empty");

    const auto header = csv_fields(lines.front());
    const auto& schema = task.schema;
    if (!schema.columns.empty() && header != schema.columns) {
        std::string want, got;
        for (const auto& c : schema.columns) want += (want.empty() ? "" : ",") + c;
        for (const auto& c : header) got += (got.empty() ? "" : ",") + c;
        return fail(Gate::Format, "columns [" + got + "] do not match expected [" + want + "]");
    }
    const std::size_t rows = lines.size() - 1;
    if (schema.rows && rows != *schema.rows) {
        return fail(Gate::Format, "row count " + std::to_string(rows) + " does not match expected " +
                                      std::to_string(*schema.rows));
    }
    std::vector<std::size_t> numeric_idx;
    for (const auto& name : schema.numeric_columns) {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) return fail(Gate::Format, "numeric column '" + name + "' missing");
        numeric_idx.push_back(static_cast<std::size_t>(it - header.begin()));
    }
    for (std::size_t r = 1; r < lines.size(); ++r) {
        const auto fields = csv_fields(lines[r]);
        if (fields.size() != header.size()) {
            return fail(Gate::Format, "row " + std::to_string(r) + " has " +
                                          std::to_string(fields.size()) + " fields, expected " +
                                          std::to_string(header.size()));
        }
        for (auto idx : numeric_idx) {
            if (!is_finite_number(fields[idx])) {
                return fail(Gate::Format, "row " + std::to_string(r) + " column '" + header[idx] +
                                              "' is not a finite number");
            }
        }
    }
    return GateOutcome{Gate::Format, true, "submission matches schema (" + std::to_string(rows) + " rows)", {}};
}

GateOutcome check_format(const std::filesystem::path& submission_path, const Task& task) {
    if (!std::filesystem::is_regular_file(submission_path)) return fail(Gate::Format, "submission absent");
    return check_format(std::optional<std::string>(read_file(submission_path)), task);
}

std::vector<std::string> parse_findings(std::string_view reply) {
    const std::string t = to_lower(trim(reply));
    std::string bare = t;
    while (!bare.empty() && (bare.back() == '.' || bare.back() == '!')) bare.pop_back();
    if (bare.empty() || bare == "no issues" || bare == "none" || bare == "no issues found") return {};
    std::vector<std::string> findings;
    for (auto line : split_lines(reply)) {
        line = trim(line);
        std::size_t k = 0;
        while (k < line.size() && (line[k] == '-' || line[k] == '*' || line[k] == ' ' ||
                                   std::isdigit(static_cast<unsigned char>(line[k])) ||
                                   line[k] == '.' || line[k] == ')')) {
            ++k;
        }
        line = trim(line.substr(k));
        if (!line.empty()) findings.push_back(line);
    }
    return findings;
}

GateOutcome check_alignment(const ValidationInput& in, OracleClient& oracle) {
    const auto reply = oracle.ask(OracleRole::AlignmentCheck,
                                  {{"task_description", in.task->description},
                                   {"metric", in.task->metric_name},
                                   {"code", in.solution->code},
                                   {"code_diff", in.trace.code_diff},
                                   {"stdout_tail", in.trace.stdout_excerpt}});
    auto findings = parse_findings(reply.text);
    if (findings.empty()) return GateOutcome{Gate::Alignment, true, reply.text, {}};
    return fail(Gate::Alignment, reply.text, std::move(findings));
}

ComprehensiveOutcome comprehensive_analysis(const ValidationInput& in, OracleClient& oracle,
                                            double tolerance) {
    OracleContext ctx{{"task_description", in.task->description},
                      {"hypothesis", in.hypothesis != nullptr ? in.hypothesis->text : ""},
                      {"code_diff", in.trace.code_diff},
                      {"h_current", optional_number(in.perf.current)},
                      {"h_best", optional_number(in.perf.best)},
                      {"direction", std::string(to_string(in.task->direction))},
                      {"runtime_log", in.trace.runtime_log},
                      {"aspect", "hypothesis"}};
    const auto reply = oracle.ask(OracleRole::ComprehensiveAnalysis, ctx);

    ComprehensiveOutcome out;
    const auto lines = split_lines(reply.text);
    const std::string head = lines.empty() ? std::string() : lines.front();
    if (contains_ci(head, "REFUTED")) {
        out.hypothesis_verified = false;
        out.gate = fail(Gate::Comprehensive, reply.text);
        return out;
    }
    if (contains_ci(head, "VERIFIED")) out.hypothesis_verified = true;
    out.gate = GateOutcome{Gate::Comprehensive, true, reply.text, {}};

    const auto delta = score_delta(in.perf, in.task->direction);
    if (delta && is_improvement(*delta, tolerance)) {
        ctx["aspect"] = "code_quality";
        out.code_quality_notes = oracle.ask(OracleRole::ComprehensiveAnalysis, ctx).text;
    }
    return out;
}

ValidationResult validate(const ValidationInput& in, OracleClient& oracle,
                          const ValidationConfig& cfg, Permits* permits) {
    if (in.task == nullptr || in.solution == nullptr) {
        throw Error(ErrorCode::DomainError, "validation needs a task and a solution");
    }
    ValidationResult res;
    auto& reason = res.reason;

    if (cfg.score_only) {
        const auto delta = score_delta(in.perf, in.task->direction);
        res.decision = delta.has_value() && (*delta > 0.0 || !in.perf.best);
        reason.gate = Gate::Judge;
        reason.verdict_text = delta ? "score-only: delta " + format_double(*delta)
                                    : "score-only: no score";
        return res;
    }

    auto format = check_format(in.submission, *in.task);
    if (format.passed && in.trace.exit_status != ExitStatus::Ok) {
        format = fail(Gate::Format, "run ended with " + std::string(to_string(in.trace.exit_status)));
    }
    if (format.passed && !in.perf.current) {
        format = fail(Gate::Format, "grader produced no score for the submission");
    }
    res.gates.push_back(format);
    if (!format.passed) {
        reason.gate = Gate::Format;
        reason.verdict_text = format.reason_text;
        return res;
    }

    std::optional<Permits::Guard> permit;
    if (permits != nullptr) permit.emplace(*permits, PermitKind::Feedback);

    auto align = check_alignment(in, oracle);
    res.gates.push_back(align);
    if (!align.passed) {
        reason.gate = Gate::Alignment;
        reason.verdict_text = align.reason_text;
        reason.leakage_findings = align.findings;
        return res;
    }

    auto comp = comprehensive_analysis(in, oracle, cfg.tolerance);
    res.gates.push_back(comp.gate);
    reason.hypothesis_verified = comp.hypothesis_verified;
    reason.code_quality_notes = comp.code_quality_notes;
    if (!comp.gate.passed) {
        reason.gate = Gate::Comprehensive;
        reason.verdict_text = comp.gate.reason_text;
        return res;
    }

    std::string analysis = comp.gate.reason_text;
    if (comp.code_quality_notes) analysis += "\n" + *comp.code_quality_notes;
    const auto verdict = oracle.ask(OracleRole::Judge,
                                    {{"task_description", in.task->description},
                                     {"hypothesis", in.hypothesis != nullptr ? in.hypothesis->text : ""},
                                     {"code_diff", in.trace.code_diff},
                                     {"h_current", optional_number(in.perf.current)},
                                     {"h_best", optional_number(in.perf.best)},
                                     {"direction", std::string(to_string(in.task->direction))},
                                     {"analysis", analysis}});
    const auto lines = split_lines(verdict.text);
    res.decision = !lines.empty() && starts_with_ci(trim(lines.front()), "ACCEPT");
    res.gates.push_back(GateOutcome{Gate::Judge, res.decision, verdict.text, {}});
    reason.gate = Gate::Judge;
    reason.verdict_text = verdict.text;
    return res;
}

// ---------------------------------------------------------------------------

std::vector<OverfitCase> load_overfit_pack(const std::filesystem::path& path) {
    std::vector<OverfitCase> cases;
    for (const auto& line : split_lines(read_file(path))) {
        if (trim(line).empty()) continue;
        const auto j = nlohmann::json::parse(line);
        OverfitCase c;
        c.id = j.at("case").get<int>();
        c.component = parse_component(j.at("component").get<std::string>()).value_or(Component::Workflow);
        c.val_change = j.at("val_change").get<double>();
        c.test_change = j.at("test_change").get<double>();
        c.expected_accept = j.at("expected").get<std::string>() == "Accept";
        for (const auto& t : j.at("transcript")) {
            c.transcript.emplace_back(parse_role(t.at("role").get<std::string>()),
                                      t.at("response_text").get<std::string>());
        }
        cases.push_back(std::move(c));
    }
    return cases;
}

std::vector<CaseOutcome> replay_overfit_pack(const std::vector<OverfitCase>& cases,
                                             const ValidationConfig& cfg) {
    Task task;
    task.id = "overfit-pack";
    task.metric_name = "loss";
    task.direction = Direction::LowerBetter;

    std::vector<CaseOutcome> out;
    for (const auto& c : cases) {
        auto backend = std::make_shared<ScriptedBackend>();
        std::map<OracleRole, int> ordinals;
        for (const auto& [role, text] : c.transcript) backend->add(role, ++ordinals[role], text);
        OracleClient oracle(backend);

        Solution sol{"case-" + std::to_string(c.id), "# recorded solution\n", {}, {}, 0};
        Hypothesis hyp;
        hyp.id = "h-" + std::to_string(c.id);
        hyp.text = "recorded change";
        hyp.target_component = c.component;

        ValidationInput in;
        in.task = &task;
        in.solution = &sol;
        in.hypothesis = &hyp;
        in.submission = "id,prediction\n0,0\n";
        in.perf = PerfPair{1.0 + c.val_change, 1.0};

        const auto r = validate(in, oracle, cfg);
        out.push_back(CaseOutcome{c.id, r.decision, c.expected_accept, r.reason.gate,
                                  oracle.roles_called()});
    }
    return out;
}

}  // namespace codeopt
