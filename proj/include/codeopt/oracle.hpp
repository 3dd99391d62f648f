#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "codeopt/core.hpp"
#include "codeopt/util.hpp"

namespace codeopt {

enum class OracleRole : std::uint8_t {
    InitHypothesis,
    ExtractChallenges,
    GenerateHypothesis,
    ScoreHypothesis,
    SelectHypothesis,
    Sketch,
    Implement,
    DebugFix,
    AlignmentCheck,
    ComprehensiveAnalysis,
    Judge,
    BudgetDecision,
    Embed,
};

inline constexpr OracleRole kAllRoles[] = {
    OracleRole::InitHypothesis, OracleRole::ExtractChallenges, OracleRole::GenerateHypothesis,
    OracleRole::ScoreHypothesis, OracleRole::SelectHypothesis, OracleRole::Sketch,
    OracleRole::Implement, OracleRole::DebugFix, OracleRole::AlignmentCheck,
    OracleRole::ComprehensiveAnalysis, OracleRole::Judge, OracleRole::BudgetDecision,
    OracleRole::Embed,
};

std::string_view to_string(OracleRole r) noexcept;
// Accepts both "GenerateHypothesis" and "generate_hypothesis".
OracleRole parse_role(std::string_view text);
// File stem used for prompt templates, e.g. "generate_hypothesis".
std::string template_stem(OracleRole r);

using OracleContext = std::map<std::string, std::string>;

struct OracleRequest {
    OracleRole role = OracleRole::InitHypothesis;
    OracleContext context;
    std::uint64_t nonce = 0;
};

struct OracleResponse {
    std::string text;
    std::optional<nlohmann::json> structured;
    std::optional<std::vector<double>> embedding;
};

/// Context keys a request of `role` may carry.
const std::vector<std::string>& context_schema(OracleRole role);
/// Throws DomainError if the request uses a key outside its role's schema.
void check_context(const OracleRequest& request);

class OracleBackend {
public:
    virtual ~OracleBackend() = default;
    virtual OracleResponse complete(const OracleRequest& request) = 0;
    // Deterministic backends are never retried.
    [[nodiscard]] virtual bool deterministic() const = 0;
    [[nodiscard]] virtual std::string name() const = 0;
};

// ---------------------------------------------------------------------------
// Embeddings

struct EmbeddingConfig {
    std::size_t dimension = 64;
    std::uint64_t seed = 0x5eed;
};

/// Seeded feature-hash map onto the unit sphere. Tokens are lowercase
/// alphanumeric words plus character trigrams.
std::vector<double> hash_embedding(std::string_view text, const EmbeddingConfig& cfg);
double cosine(std::span<const double> a, std::span<const double> b);

// ---------------------------------------------------------------------------
// Scripted replay backend

// Fixtures are keyed by (role, per-role ordinal). Ordinal 0 is an explicit
// wildcard serving any ordinal without its own record.
class ScriptedBackend : public OracleBackend {
public:
    explicit ScriptedBackend(EmbeddingConfig embed = {}) : embed_(embed) {}

    static std::shared_ptr<ScriptedBackend> from_jsonl(std::string_view text,
                                                       EmbeddingConfig embed = {});
    static std::shared_ptr<ScriptedBackend> from_file(const std::filesystem::path& path,
                                                      EmbeddingConfig embed = {});

    void add(OracleRole role, int ordinal, std::string response_text);

    OracleResponse complete(const OracleRequest& request) override;
    [[nodiscard]] bool deterministic() const override { return true; }
    [[nodiscard]] std::string name() const override { return "scripted"; }

    [[nodiscard]] int served(OracleRole role) const;

private:
    EmbeddingConfig embed_;
    mutable std::mutex mu_;
    std::map<std::pair<OracleRole, int>, std::string> fixtures_;
    std::map<OracleRole, int> counters_;
};

// ---------------------------------------------------------------------------
// Synthetic fidelity backend

struct SyntheticOracleParams {
    double fidelity = 1.0;
    double noise_scale = 2.0;
    std::uint64_t rng_seed = 1;

    void check() const;
};

// Generates verdicts that are correct with probability `fidelity`, judged
// against the perf pair carried in the request. Code-producing roles echo the
// base code they are given.
class SyntheticBackend : public OracleBackend {
public:
    explicit SyntheticBackend(SyntheticOracleParams params, EmbeddingConfig embed = {});

    OracleResponse complete(const OracleRequest& request) override;
    [[nodiscard]] bool deterministic() const override { return true; }
    [[nodiscard]] std::string name() const override { return "synthetic"; }
    [[nodiscard]] const SyntheticOracleParams& params() const { return params_; }

    // One Bernoulli(fidelity) draw from the backend's stream: true means the
    // next verdict or proposal is correct.
    bool draw_correct();

private:

    SyntheticOracleParams params_;
    EmbeddingConfig embed_;
    std::mutex mu_;
    Rng rng_;
};

// ---------------------------------------------------------------------------
// Prompt templates (data files, one per role, `{{key}}` placeholders)

class PromptTemplates {
public:
    explicit PromptTemplates(std::filesystem::path dir) : dir_(std::move(dir)) {}
    [[nodiscard]] std::string render(const OracleRequest& request) const;
    [[nodiscard]] const std::filesystem::path& dir() const { return dir_; }

private:
    std::filesystem::path dir_;
};

std::string render_template(std::string_view tmpl, const OracleContext& context);

// ---------------------------------------------------------------------------
// Live chat-completion backend

struct LiveBackendConfig {
    std::string url;  // full endpoint, e.g. https://host/v1/chat/completions
    std::string api_key;
    std::string model = "gpt-5";
    double temperature = 1.0;
    double timeout_seconds = 600.0;
    std::filesystem::path template_dir;
    EmbeddingConfig embed;

    // Reads ENGINE_ORACLE_URL and ENGINE_ORACLE_KEY.
    static LiveBackendConfig from_env(std::filesystem::path template_dir);
};

class LiveBackend : public OracleBackend {
public:
    explicit LiveBackend(LiveBackendConfig cfg);

    OracleResponse complete(const OracleRequest& request) override;
    [[nodiscard]] bool deterministic() const override { return false; }
    [[nodiscard]] std::string name() const override { return "live"; }

    // The JSON body that would be posted for `request`.
    [[nodiscard]] nlohmann::json build_body(const OracleRequest& request) const;

private:
    LiveBackendConfig cfg_;
    PromptTemplates templates_;
};

// ---------------------------------------------------------------------------
// Retry

struct RetryPolicy {
    int max_retry = 12000;
    double wait_seconds = 5.0;

    void check() const;
};

using Sleeper = std::function<void(double seconds)>;

/// Calls `backend` until success, a non-transient error, or max_retry retries.
/// Deterministic backends get exactly one attempt.
OracleResponse with_retry(OracleBackend& backend, const OracleRequest& request,
                          const RetryPolicy& policy, const Sleeper& sleep = {},
                          int* attempts_out = nullptr);

// ---------------------------------------------------------------------------
// Client used by every module: numbering, retry, transcript.

class OracleClient {
public:
    OracleClient(std::shared_ptr<OracleBackend> backend, RetryPolicy policy = {},
                 EmbeddingConfig embed = {});

    OracleResponse ask(OracleRole role, OracleContext context);
    /// Unit-norm embedding; throws DomainError on empty text.
    std::vector<double> embed(std::string_view text);

    [[nodiscard]] std::vector<OracleRequest> transcript() const;
    [[nodiscard]] std::vector<OracleRole> roles_called(bool include_embed = false) const;
    [[nodiscard]] std::size_t calls(bool include_embed = false) const;
    void clear_transcript();

    void set_sleeper(Sleeper s) { sleeper_ = std::move(s); }
    [[nodiscard]] OracleBackend& backend() { return *backend_; }
    [[nodiscard]] const EmbeddingConfig& embedding_config() const { return embed_; }

private:
    std::shared_ptr<OracleBackend> backend_;
    RetryPolicy policy_;
    EmbeddingConfig embed_;
    Sleeper sleeper_;
    std::atomic<std::uint64_t> nonce_{0};
    mutable std::mutex mu_;
    std::vector<OracleRequest> transcript_;
};

}  // namespace codeopt
