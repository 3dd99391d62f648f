#include "codeopt/reasoning.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace codeopt {

void ScoringWeights::check() const {
    for (double w : {impact, alignment, novelty, feasibility, risk}) {
        if (!(w >= 0.0 && w <= 1.0)) throw Error(ErrorCode::ConfigError, "scoring weights must lie in [0, 1]");
    }
    const double sum = impact + alignment + novelty + feasibility + risk;
    if (std::abs(sum - 1.0) > 1e-12) throw Error(ErrorCode::ConfigError, "scoring weights must sum to 1");
}

double ScoringWeights::total(const std::map<std::string, double>& s) const {
    return impact * s.at("impact") + alignment * s.at("alignment") + novelty * s.at("novelty") +
           feasibility * s.at("feasibility") + risk * s.at("risk");
}

std::string_view to_string(ChallengeSource s) noexcept {
    return s == ChallengeSource::Scenario ? "Scenario" : "History";
}

int adaptive_lambda(int n_succ, int n_fail) {
    if (n_succ < 0 || n_fail < 0) throw Error(ErrorCode::DomainError, "counts must be non-negative");
    return std::max(0, 3 - (3 * n_succ + 2 * n_fail) / 8);
}

std::string summarize_history(const std::vector<IterationRecord>& history, std::size_t last_n) {
    std::ostringstream out;
    const std::size_t start = history.size() > last_n ? history.size() - last_n : 0;
    for (std::size_t i = start; i < history.size(); ++i) {
        const auto& r = history[i];
        out << "iteration " << r.iteration << ": " << r.hypothesis.text << " -> "
            << (r.decision ? "accepted" : "rejected");
        if (r.feedback.perf.current) out << ", score " << format_double(*r.feedback.perf.current);
        out << " [" << to_string(r.feedback.reason.gate) << "] "
            << trim(split_lines(r.feedback.reason.verdict_text).empty()
                        ? std::string()
                        : split_lines(r.feedback.reason.verdict_text).front())
            << "\n";
    }
    return out.str();
}

namespace {

std::vector<Challenge> ask_challenges(ChallengeSource source, std::string material,
                                      const Task& task, OracleClient& oracle, int count) {
    const auto reply = oracle.ask(OracleRole::ExtractChallenges,
                                  {{"task_description", task.description},
                                   {"source", source == ChallengeSource::Scenario ? "scenario" : "history"},
                                   {"material", std::move(material)},
                                   {"count", std::to_string(count)}});
    std::vector<Challenge> out;
    for (auto line : split_lines(reply.text)) {
        line = trim(line);
        while (!line.empty() && (line.front() == '-' || line.front() == '*')) line = trim(line.substr(1));
        if (line.empty()) continue;
        out.push_back(Challenge{line, source});
        if (static_cast<int>(out.size()) == count) break;
    }
    return out;
}

}  // namespace

std::vector<Challenge> extract_challenges(int lambda, const TraceState& state, const Task& task,
                                          OracleClient& oracle, const ReasoningConfig& cfg) {
    if (lambda < 0 || lambda > 3) throw Error(ErrorCode::DomainError, "lambda must lie in 0..3");
    std::vector<Challenge> out;
    if (lambda > 0) {
        auto part = ask_challenges(ChallengeSource::Scenario,
                                   "metric: " + task.metric_name + "\ncurrent best code:\n" +
                                       state.best_solution.code,
                                   task, oracle, cfg.challenges_per_source);
        out.insert(out.end(), part.begin(), part.end());
    }
    if (lambda < 3) {
        std::string material = summarize_history(state.history);
        if (!state.history.empty()) {
            const auto& last = state.history.back().feedback;
            material += "last stderr tail:\n" + last.trace.stderr_excerpt;
        }
        auto part = ask_challenges(ChallengeSource::History, material, task, oracle,
                                   cfg.challenges_per_source);
        out.insert(out.end(), part.begin(), part.end());
    }
    return out;
}

ParsedHypothesis parse_hypothesis_reply(std::string_view reply) {
    ParsedHypothesis p;
    std::string line;
    for (const auto& l : split_lines(reply)) {
        if (!trim(l).empty()) {
            line = trim(l);
            break;
        }
    }
    const auto slash = line.rfind(" / ");
    if (slash == std::string::npos) {
        p.text = line;
        p.component_defaulted = true;
        return p;
    }
    p.text = trim(line.substr(0, slash));
    const auto comp = parse_component(trim(line.substr(slash + 3)));
    if (comp) {
        p.component = *comp;
    } else {
        p.component_defaulted = true;
    }
    return p;
}

Hypothesis generate_hypothesis(const Challenge& challenge, const Solution& best,
                               const TraceState& state, const Task& task, OracleClient& oracle,
                               const ReasoningConfig& cfg, const std::vector<std::string>& taken,
                               std::string id, std::vector<std::string>& warnings) {
    if (trim(challenge.text).empty()) throw Error(ErrorCode::DomainError, "challenge is empty");
    // The compact variant only carries the latest outcome.
    const std::string history = summarize_history(
        state.history, cfg.simple_hypothesis && !state.history.empty() ? 1 : 5);

    for (int attempt = 0; attempt <= cfg.duplicate_reprompts; ++attempt) {
        std::string hist = history;
        if (attempt > 0) hist += "\nAlready tried, propose something different:\n" +
                                 [&] {
                                     std::string s;
                                     for (const auto& t : taken) s += "- " + t + "\n";
                                     return s;
                                 }();
        const auto reply = oracle.ask(OracleRole::GenerateHypothesis,
                                      {{"task_description", task.description},
                                       {"challenge", challenge.text},
                                       {"best_code", best.code},
                                       {"history", hist}});
        const auto parsed = parse_hypothesis_reply(reply.text);
        if (parsed.text.empty()) {
            warnings.push_back("empty hypothesis reply for challenge: " + challenge.text);
            continue;
        }
        if (cfg.unique_hypothesis &&
            std::find(taken.begin(), taken.end(), parsed.text) != taken.end()) {
            continue;
        }
        if (parsed.component_defaulted) {
            warnings.push_back("hypothesis '" + parsed.text + "' has no valid component tag; using Workflow");
        }
        Hypothesis h;
        h.id = std::move(id);
        h.text = parsed.text;
        h.target_component = parsed.component;
        h.challenge = challenge.text;
        h.origin = HypothesisOrigin::Local;
        return h;
    }
    throw Error(ErrorCode::DuplicateHypothesis,
                "no new hypothesis for challenge '" + challenge.text + "'");
}

std::map<std::string, double> parse_score_payload(std::string_view reply) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(strip_code_fence(reply));
    } catch (const nlohmann::json::exception&) {
        throw Error(ErrorCode::ScoreParseError, "score reply is not JSON: " + std::string(reply));
    }
    if (!j.is_object()) throw Error(ErrorCode::ScoreParseError, "score reply is not an object");
    std::map<std::string, double> out;
    for (auto dim : kScoreDimensions) {
        const std::string key(dim);
        if (!j.contains(key) || !j[key].is_number()) {
            throw Error(ErrorCode::ScoreParseError, "score reply lacks numeric '" + key + "'");
        }
        const double v = j[key].get<double>();
        if (!(v >= 0.0 && v <= 1.0)) {
            throw Error(ErrorCode::ScoreParseError, "score '" + key + "' outside [0, 1]");
        }
        out[key] = v;
    }
    return out;
}

std::vector<Hypothesis> prioritize(std::vector<Hypothesis> hypotheses,
                                   const std::vector<EntryPtr>& memory, const ScoringWeights& weights,
                                   const Task& task, const TraceState& state, OracleClient& oracle) {
    weights.check();
    std::string mem_digest;
    for (const auto& e : memory) {
        mem_digest += "past success (delta " + format_double(e->delta) + "): " + e->hypothesis.text + "\n";
    }
    const std::string history = summarize_history(state.history) + mem_digest;
    for (auto& h : hypotheses) {
        const auto reply = oracle.ask(OracleRole::ScoreHypothesis,
                                      {{"task_description", task.description},
                                       {"hypothesis", h.text},
                                       {"component", std::string(to_string(h.target_component))},
                                       {"history", history}});
        h.scores = parse_score_payload(reply.text);
        h.total_score = weights.total(h.scores);
    }
    std::stable_sort(hypotheses.begin(), hypotheses.end(),
                     [](const Hypothesis& a, const Hypothesis& b) { return a.total_score > b.total_score; });
    return hypotheses;
}

const Hypothesis& select_topk_sample(const std::vector<Hypothesis>& sorted, int k, Rng& rng) {
    if (k < 1) throw Error(ErrorCode::DomainError, "k must be at least 1");
    if (sorted.empty()) throw Error(ErrorCode::EmptyCandidateSet, "no hypotheses to sample");
    const auto n = std::min<std::size_t>(static_cast<std::size_t>(k), sorted.size());
    return sorted[rng.uniform_index(n)];
}

Implementation implement(const Hypothesis& hypothesis, const Solution& best, const Task& task,
                         OracleClient& oracle, Executor& executor, TimeoutState& timeout,
                         const ReasoningConfig& cfg, std::string solution_id,
                         std::uint64_t created_at, std::uint64_t seed) {
    const std::string component(to_string(hypothesis.target_component));
    const auto plan = oracle.ask(OracleRole::Sketch, {{"task_description", task.description},
                                                      {"hypothesis", hypothesis.text},
                                                      {"component", component},
                                                      {"base_code", best.code}});
    SolutionSketch sketch{plan.text, {hypothesis.target_component}};

    const auto code = oracle.ask(OracleRole::Implement, {{"task_description", task.description},
                                                         {"hypothesis", hypothesis.text},
                                                         {"sketch", sketch.plan_text},
                                                         {"base_code", best.code},
                                                         {"mode", "DevSubset"}});
    Solution sol;
    sol.id = std::move(solution_id);
    sol.code = strip_code_fence(code.text);
    if (!best.id.empty()) sol.parent_id = best.id;
    sol.hypothesis_id = hypothesis.id;
    sol.created_at = created_at;
    if (trim(sol.code).empty()) {
        throw ImplementationFailed("oracle returned no code for '" + hypothesis.text + "'", std::nullopt);
    }
    try {
        auto [fixed, result] = executor.debug_loop(std::move(sol), task, {ExecKind::DevSubset, seed},
                                                   cfg.max_fix_iters, oracle, timeout);
        return Implementation{std::move(fixed), std::move(sketch), std::move(result)};
    } catch (const DebugExhausted& e) {
        throw ImplementationFailed(std::string("dev run never succeeded: ") + e.what(), e.result);
    }
}

}  // namespace codeopt
