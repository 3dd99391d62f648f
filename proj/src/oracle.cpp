#include "codeopt/oracle.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>
#include <sstream>
#include <thread>

namespace codeopt {

std::string_view to_string(OracleRole r) noexcept {
    switch (r) {
        case OracleRole::InitHypothesis: return "InitHypothesis";
        case OracleRole::ExtractChallenges: return "ExtractChallenges";
        case OracleRole::GenerateHypothesis: return "GenerateHypothesis";
        case OracleRole::ScoreHypothesis: return "ScoreHypothesis";
        case OracleRole::SelectHypothesis: return "SelectHypothesis";
        case OracleRole::Sketch: return "Sketch";
        case OracleRole::Implement: return "Implement";
        case OracleRole::DebugFix: return "DebugFix";
        case OracleRole::AlignmentCheck: return "AlignmentCheck";
        case OracleRole::ComprehensiveAnalysis: return "ComprehensiveAnalysis";
        case OracleRole::Judge: return "Judge";
        case OracleRole::BudgetDecision: return "BudgetDecision";
        case OracleRole::Embed: return "Embed";
    }
    return "Embed";
}

std::string template_stem(OracleRole r) {
    const auto name = to_string(r);
    std::string out;
    for (std::size_t i = 0; i < name.size(); ++i) {
        const char c = name[i];
        if (std::isupper(static_cast<unsigned char>(c))) {
            if (i != 0) out.push_back('_');
            out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        } else {
            out.push_back(c);
        }
    }
    return out;
}

OracleRole parse_role(std::string_view text) {
    for (auto r : kAllRoles) {
        if (to_string(r) == text || template_stem(r) == text) return r;
    }
    throw Error(ErrorCode::DomainError, "unknown oracle role '" + std::string(text) + "'");
}

const std::vector<std::string>& context_schema(OracleRole role) {
    static const std::map<OracleRole, std::vector<std::string>> schemas = {
        {OracleRole::InitHypothesis,
         {"task_description", "metric", "direction", "trace_id", "diversity_hint", "existing"}},
        {OracleRole::ExtractChallenges,
         {"task_description", "source", "material", "count"}},
        {OracleRole::GenerateHypothesis,
         {"task_description", "challenge", "best_code", "history"}},
        {OracleRole::ScoreHypothesis,
         {"task_description", "hypothesis", "component", "history"}},
        {OracleRole::SelectHypothesis, {"task_description", "candidates", "history"}},
        {OracleRole::Sketch, {"task_description", "hypothesis", "component", "base_code"}},
        {OracleRole::Implement,
         {"task_description", "hypothesis", "sketch", "base_code", "mode"}},
        {OracleRole::DebugFix, {"task_description", "code", "stderr_tail", "diff", "attempt"}},
        {OracleRole::AlignmentCheck,
         {"task_description", "metric", "code", "code_diff", "stdout_tail"}},
        {OracleRole::ComprehensiveAnalysis,
         {"task_description", "hypothesis", "code_diff", "h_current", "h_best", "direction",
          "aspect", "runtime_log"}},
        {OracleRole::Judge,
         {"task_description", "hypothesis", "code_diff", "h_current", "h_best", "direction",
          "analysis"}},
        {OracleRole::BudgetDecision,
         {"task_description", "remaining_budget", "recent_exit_statuses", "best_curve"}},
        {OracleRole::Embed, {"text"}},
    };
    return schemas.at(role);
}

void check_context(const OracleRequest& request) {
    const auto& allowed = context_schema(request.role);
    for (const auto& [key, value] : request.context) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
            throw Error(ErrorCode::DomainError, "context key '" + key + "' is not valid for " +
                                                    std::string(to_string(request.role)));
        }
    }
}

// ---------------------------------------------------------------------------

namespace {

std::uint64_t fnv1a(std::string_view s, std::uint64_t seed) {
    std::uint64_t h = 0xcbf29ce484222325ULL ^ splitmix64(seed);
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return splitmix64(h);
}

void add_feature(std::vector<double>& v, std::string_view token, std::uint64_t seed, double w) {
    const auto h = fnv1a(token, seed);
    const auto idx = static_cast<std::size_t>(h % v.size());
    v[idx] += ((h >> 63) != 0U) ? -w : w;
}

}  // namespace

std::vector<double> hash_embedding(std::string_view text, const EmbeddingConfig& cfg) {
    if (trim(text).empty()) throw Error(ErrorCode::DomainError, "cannot embed empty text");
    if (cfg.dimension == 0) throw Error(ErrorCode::DomainError, "embedding dimension must be positive");

    std::vector<double> v(cfg.dimension, 0.0);
    const std::string lower = to_lower(text);

    std::string word;
    auto flush = [&] {
        if (!word.empty()) add_feature(v, "w:" + word, cfg.seed, 1.0);
        word.clear();
    };
    for (char c : lower) {
        if (std::isalnum(static_cast<unsigned char>(c))) {
            word.push_back(c);
        } else {
            flush();
        }
    }
    flush();

    if (lower.size() < 3) {
        add_feature(v, "g:" + lower, cfg.seed, 0.5);
    } else {
        for (std::size_t i = 0; i + 3 <= lower.size(); ++i) {
            add_feature(v, "g:" + lower.substr(i, 3), cfg.seed, 0.5);
        }
    }

    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm == 0.0) {
        // Every feature cancelled out; fall back to a single deterministic axis.
        v[fnv1a(lower, cfg.seed) % v.size()] = 1.0;
        return v;
    }
    for (double& x : v) x /= norm;
    return v;
}

double cosine(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw Error(ErrorCode::LengthMismatch, "cosine of unequal lengths");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
}

// ---------------------------------------------------------------------------
// Scripted

std::shared_ptr<ScriptedBackend> ScriptedBackend::from_jsonl(std::string_view text,
                                                             EmbeddingConfig embed) {
    auto backend = std::make_shared<ScriptedBackend>(embed);
    int line_no = 0;
    for (const auto& line : split_lines(text)) {
        ++line_no;
        if (trim(line).empty()) continue;
        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::ConfigError,
                        "fixture line " + std::to_string(line_no) + ": " + e.what());
        }
        if (!rec.contains("role") || !rec.contains("ordinal") || !rec.contains("response_text")) {
            throw Error(ErrorCode::ConfigError, "fixture line " + std::to_string(line_no) +
                                                    " needs role, ordinal, response_text");
        }
        int ordinal = 0;
        if (rec["ordinal"].is_string()) {
            if (rec["ordinal"].get<std::string>() != "*") {
                throw Error(ErrorCode::ConfigError, "fixture ordinal must be an integer or \"*\"");
            }
        } else {
            ordinal = rec["ordinal"].get<int>();
        }
        backend->add(parse_role(rec["role"].get<std::string>()), ordinal,
                     rec["response_text"].get<std::string>());
    }
    return backend;
}

std::shared_ptr<ScriptedBackend> ScriptedBackend::from_file(const std::filesystem::path& path,
                                                            EmbeddingConfig embed) {
    if (!std::filesystem::exists(path)) {
        throw Error(ErrorCode::ConfigError, "fixture file not found: " + path.string());
    }
    return from_jsonl(read_file(path), embed);
}

void ScriptedBackend::add(OracleRole role, int ordinal, std::string response_text) {
    if (ordinal < 0) throw Error(ErrorCode::ConfigError, "fixture ordinal must be non-negative");
    std::lock_guard lock(mu_);
    fixtures_[{role, ordinal}] = std::move(response_text);
}

int ScriptedBackend::served(OracleRole role) const {
    std::lock_guard lock(mu_);
    auto it = counters_.find(role);
    return it == counters_.end() ? 0 : it->second;
}

OracleResponse ScriptedBackend::complete(const OracleRequest& request) {
    std::lock_guard lock(mu_);
    if (request.role == OracleRole::Embed) {
        auto it = request.context.find("text");
        OracleResponse resp;
        resp.embedding = hash_embedding(it == request.context.end() ? "" : it->second, embed_);
        return resp;
    }
    const int ordinal = ++counters_[request.role];
    auto it = fixtures_.find({request.role, ordinal});
    if (it == fixtures_.end()) it = fixtures_.find({request.role, 0});
    if (it == fixtures_.end()) {
        throw Error(ErrorCode::FixtureMiss, "no fixture for " + std::string(to_string(request.role)) +
                                                "#" + std::to_string(ordinal));
    }
    return OracleResponse{it->second, std::nullopt, std::nullopt};
}

// ---------------------------------------------------------------------------
// Synthetic

void SyntheticOracleParams::check() const {
    if (!(fidelity >= 0.0 && fidelity <= 1.0)) {
        throw Error(ErrorCode::DomainError, "fidelity must lie in [0, 1]");
    }
    if (!(noise_scale >= 0.0)) throw Error(ErrorCode::DomainError, "noise_scale must be non-negative");
}

SyntheticBackend::SyntheticBackend(SyntheticOracleParams params, EmbeddingConfig embed)
    : params_(params), embed_(embed), rng_(params.rng_seed) {
    params_.check();
}

bool SyntheticBackend::draw_correct() {
    std::lock_guard lock(mu_);
    return rng_.bernoulli(params_.fidelity);
}

namespace {

std::string ctx(const OracleContext& c, const std::string& key, std::string fallback = {}) {
    auto it = c.find(key);
    return it == c.end() ? std::move(fallback) : it->second;
}

std::optional<double> ctx_number(const OracleContext& c, const std::string& key) {
    auto it = c.find(key);
    if (it == c.end() || trim(it->second).empty()) return std::nullopt;
    try {
        return std::stod(it->second);
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

// The true answer to "is this step an improvement?" given the numbers in a request.
bool truly_improves(const OracleContext& c) {
    const auto cur = ctx_number(c, "h_current");
    if (!cur) return false;
    const auto best = ctx_number(c, "h_best");
    if (!best) return true;
    const auto dir = parse_direction(ctx(c, "direction", "HigherBetter"));
    return direction_adjusted_delta(*cur, *best, dir) > 0.0;
}

}  // namespace

OracleResponse SyntheticBackend::complete(const OracleRequest& request) {
    const auto& c = request.context;
    OracleResponse resp;
    const std::string tag = std::to_string(request.nonce);
    switch (request.role) {
        case OracleRole::Embed:
            resp.embedding = hash_embedding(ctx(c, "text"), embed_);
            break;
        case OracleRole::InitHypothesis: {
            static constexpr std::string_view comps[] = {"Data", "FeatureEng", "Model",
                                                         "Ensemble", "Workflow"};
            const auto trace = static_cast<std::size_t>(ctx_number(c, "trace_id").value_or(1));
            resp.text = "synthetic initial direction " + tag + " / " +
                        std::string(comps[(trace - 1) % 5]);
            break;
        }
        case OracleRole::ExtractChallenges:
            resp.text = "synthetic challenge " + tag + "-a\nsynthetic challenge " + tag + "-b";
            break;
        case OracleRole::GenerateHypothesis:
            resp.text = "synthetic direction " + tag + " / Model";
            break;
        case OracleRole::ScoreHypothesis: {
            nlohmann::json j;
            std::lock_guard lock(mu_);
            for (auto dim : kScoreDimensions) j[std::string(dim)] = rng_.uniform01();
            resp.text = j.dump();
            break;
        }
        case OracleRole::SelectHypothesis:
            resp.text = "Select #1";
            break;
        case OracleRole::Sketch:
            resp.text = "keep structure, adjust the targeted component";
            break;
        case OracleRole::Implement:
            resp.text = ctx(c, "base_code");
            break;
        case OracleRole::DebugFix:
            resp.text = ctx(c, "code");
            break;
        case OracleRole::AlignmentCheck:
            resp.text = "no issues";
            break;
        case OracleRole::ComprehensiveAnalysis: {
            if (ctx(c, "aspect") == "code_quality") {
                resp.text = "code quality acceptable";
                break;
            }
            const bool truth = truly_improves(c);
            const bool says = draw_correct() ? truth : !truth;
            resp.text = says ? "VERIFIED" : "REFUTED";
            break;
        }
        case OracleRole::Judge: {
            const bool truth = truly_improves(c);
            const bool says = draw_correct() ? truth : !truth;
            resp.text = says ? "ACCEPT" : "REJECT";
            break;
        }
        case OracleRole::BudgetDecision:
            resp.text = "keep";
            break;
    }
    return resp;
}

// ---------------------------------------------------------------------------
// Templates

std::string render_template(std::string_view tmpl, const OracleContext& context) {
    std::string out;
    std::size_t pos = 0;
    while (pos < tmpl.size()) {
        const auto open = tmpl.find("{{", pos);
        if (open == std::string_view::npos) {
            out.append(tmpl.substr(pos));
            break;
        }
        const auto close = tmpl.find("}}", open + 2);
        if (close == std::string_view::npos) {
            out.append(tmpl.substr(pos));
            break;
        }
        out.append(tmpl.substr(pos, open - pos));
        const auto key = trim(tmpl.substr(open + 2, close - open - 2));
        auto it = context.find(key);
        if (it != context.end()) out.append(it->second);
        pos = close + 2;
    }
    return out;
}

std::string PromptTemplates::render(const OracleRequest& request) const {
    const auto path = dir_ / (template_stem(request.role) + ".txt");
    if (!std::filesystem::exists(path)) {
        throw Error(ErrorCode::ConfigError, "missing prompt template " + path.string());
    }
    return render_template(read_file(path), request.context);
}

// ---------------------------------------------------------------------------
// Retry and client

void RetryPolicy::check() const {
    if (max_retry < 0) throw Error(ErrorCode::DomainError, "max_retry must be non-negative");
    if (!(wait_seconds >= 0.0)) throw Error(ErrorCode::DomainError, "wait_seconds must be non-negative");
}

OracleResponse with_retry(OracleBackend& backend, const OracleRequest& request,
                          const RetryPolicy& policy, const Sleeper& sleep, int* attempts_out) {
    policy.check();
    const int max_attempts = backend.deterministic() ? 1 : policy.max_retry + 1;
    std::string last;
    for (int attempt = 1; attempt <= max_attempts; ++attempt) {
        if (attempts_out != nullptr) *attempts_out = attempt;
        try {
            return backend.complete(request);
        } catch (const TransientBackendError& e) {
            last = e.what();
        }
        if (attempt < max_attempts) {
            if (sleep) {
                sleep(policy.wait_seconds);
            } else {
                std::this_thread::sleep_for(std::chrono::duration<double>(policy.wait_seconds));
            }
        }
    }
    throw BackendUnavailable(max_attempts, last);
}

OracleClient::OracleClient(std::shared_ptr<OracleBackend> backend, RetryPolicy policy,
                           EmbeddingConfig embed)
    : backend_(std::move(backend)), policy_(policy), embed_(embed) {
    if (!backend_) throw Error(ErrorCode::ConfigError, "oracle backend not configured");
    policy_.check();
}

OracleResponse OracleClient::ask(OracleRole role, OracleContext context) {
    OracleRequest req{role, std::move(context), ++nonce_};
    check_context(req);
    {
        std::lock_guard lock(mu_);
        transcript_.push_back(req);
    }
    auto resp = with_retry(*backend_, req, policy_, sleeper_);
    if (role == OracleRole::Embed) {
        if (!resp.embedding || resp.embedding->size() != embed_.dimension) {
            throw Error(ErrorCode::InvariantBreach, "embedding has the wrong dimension");
        }
    } else if (role != OracleRole::Implement && role != OracleRole::DebugFix) {
        resp.text = trim(resp.text);
    }
    return resp;
}

std::vector<double> OracleClient::embed(std::string_view text) {
    if (trim(text).empty()) throw Error(ErrorCode::DomainError, "cannot embed empty text");
    return *ask(OracleRole::Embed, {{"text", std::string(text)}}).embedding;
}

std::vector<OracleRequest> OracleClient::transcript() const {
    std::lock_guard lock(mu_);
    return transcript_;
}

std::vector<OracleRole> OracleClient::roles_called(bool include_embed) const {
    std::lock_guard lock(mu_);
    std::vector<OracleRole> out;
    for (const auto& r : transcript_) {
        if (include_embed || r.role != OracleRole::Embed) out.push_back(r.role);
    }
    return out;
}

std::size_t OracleClient::calls(bool include_embed) const {
    return roles_called(include_embed).size();
}

void OracleClient::clear_transcript() {
    std::lock_guard lock(mu_);
    transcript_.clear();
}

}  // namespace codeopt
