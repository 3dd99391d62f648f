#include "codeopt/config.hpp"

#include <cmath>
#include <functional>
#include <map>

namespace codeopt {

std::string_view to_string(RewardMode m) noexcept { return m == RewardMode::Binary ? "binary" : "score"; }

RewardMode parse_reward_mode(std::string_view text) {
    const auto t = to_lower(text);
    if (t == "binary") return RewardMode::Binary;
    if (t == "score") return RewardMode::Score;
    throw Error(ErrorCode::ConfigError, "reward mode must be binary or score");
}

void RunConfig::check() const {
    auto need = [](bool ok, const char* what) {
        if (!ok) throw Error(ErrorCode::ConfigError, what);
    };
    need(max_trace_num >= 1, "max_trace_num must be at least 1");
    need(debugging_semaphore >= 1 && running_semaphore >= 1 && feedback_semaphore >= 1,
         "semaphores must be at least 1");
    need(temperature >= 0.0, "temperature must be non-negative");
    need(retry.max_retry >= 0 && retry.wait_seconds >= 0.0, "retry settings must be non-negative");
    need(budget >= 0.0, "budget must be non-negative");
    need(extension_fraction >= 0.0 && extension_cap >= 0, "extension settings must be non-negative");
    need(coder_timeout_multiplier >= 1 && runner_timeout_multiplier >= 1, "timeout multipliers must be >= 1");
    need(timeout_increase_stage >= 1, "timeout_increase_stage must be >= 1");
    need(timeout_stage_patience >= 1, "timeout_stage_patience must be >= 1");
    need(topk_final >= 1, "topk_final must be at least 1");
    need(!final_seeds.empty(), "final_seeds must not be empty");
    need(near_tie_tolerance >= 0.0, "near_tie_tolerance must be non-negative");
    need(merge_iterations >= 0, "merge_iterations must be non-negative");
    need(embedding_dim >= 1, "embedding_dim must be positive");
    need(reasoning.topk >= 1 && reasoning.challenges_per_source >= 1 && reasoning.max_fix_iters >= 0,
         "reasoning settings out of range");
    need(mcts.c_puct >= 0.0 && mcts.expand_k >= 1 && mcts.max_depth >= 1, "mcts settings out of range");
    reasoning.weights.check();
    try {
        kernel.check();
    } catch (const Error& e) {
        throw Error(ErrorCode::ConfigError, e.what());
    }
}

Budget RunConfig::initial_budget() const {
    Budget b;
    b.mode = budget_mode;
    b.total = budget;
    b.extension_cap = extension_cap;
    return b;
}

namespace {

using Setter = std::function<void(RunConfig&, const KeyValueFile&, const std::string&)>;

int as_int(const KeyValueFile& kv, const std::string& k) {
    const double v = kv.get_number(k);
    if (v != std::floor(v)) throw Error(ErrorCode::ConfigError, k + " must be an integer");
    return static_cast<int>(v);
}

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> s = {
        {"chat_model", [](RunConfig& c, const KeyValueFile& kv, const std::string& k) { c.chat_model = kv.get_string(k); }},
        {"temperature", [](RunConfig& c, const KeyValueFile& kv, const std::string& k) { c.temperature = kv.get_number(k); }},
        {"max_retry", [](RunConfig& c, const KeyValueFile& kv, const std::string& k) { c.retry.max_retry = as_int(kv, k); }},
        {"retry_wait_seconds", [](RunConfig& c, const KeyValueFile& kv, const std::string& k) { c.retry.wait_seconds = kv.get_number(k); }},
        {"full_runtime", [](RunConfig& c, const KeyValueFile& kv, const std::string& k) { c.full_runtime_hours = kv.get_number(k); }},
        {"embedding_dim", [](RunConfig& c, const KeyValueFile& kv, const std::string& k) { c.embedding_dim = static_cast<std::size_t>(as_int(kv, k)); }},
        {"enable_global_memory", [](RunConfig& c, const KeyValueFile& kv, const std::string& k) { c.enable_global_memory = kv.get_bool(k); }},
        {"memory_save_type", [](RunConfig& c, const KeyValueFile& kv, const std::string& k) {
             const auto v = to_lower(kv.get_string(k));
             if (v == "full") c.memory_save_type = MemorySaveType::Full;
             else if (v == "hypothesis") c.memory_save_type = MemorySaveType::HypothesisOnly;
             else throw Error(ErrorCode::ConfigError, "memory_save_type must be Full or Hypothesis");
         }},
        {"kernel_alpha", [](RunConfig& c, const KeyValueFile& kv, const std::string& k) { c.kernel.alpha = kv.get_number(k); }},
        {"kernel_beta", [](RunConfig& c, const KeyValueFile& kv, const std::string& k) { c.kernel.beta = kv.get_number(k); }},
        {"kernel_gamma", [](RunConfig& c, const KeyValueFile& kv, const std::string& k) { c.kernel.gamma = kv.get_number(k); }},
        {"llm_select_hypothesis", [](RunConfig& c, const KeyValueFile& kv, const std::string& k) { c.llm_select_hypothesis = kv.get_bool(k); }},
        {"simple_hypothesis", [](RunConfig& c, const KeyValueFile& kv, const std::string& k) { c.reasoning.simple_hypothesis = kv.get_bool(k); }},
        {"unique_hypothesis", [](RunConfig& c, const KeyValueFile& kv, const std::string& k) { c.reasoning.unique_hypothesis = kv.get_bool(k); }},
        {"enable_cross_trace_sharing", [](RunConfig& c, const KeyValueFile& kv, const std::string& k) { c.enable_cross_trace_sharing = kv.get_bool(k); }},
        {"topk", [](RunConfig& c, const KeyValueFile& kv, const std::string& k) { c.reasoning.topk = as_int(kv, k); }},
        {"challenges_per_source", [](RunConfig& c, const KeyValueFile& kv, const std::string& k) { c.reasoning.challenges_per_source = as_int(kv, k); }},
        {"max_fix_iters", [](RunConfig& c, const KeyValueFile& kv, const std::string& k) { c.reasoning.max_fix_iters = as_int(kv, k); }},
        {"near_tie_tolerance", [](RunConfig& c, const KeyValueFile& kv, const std::string& k) { c.near_tie_tolerance = kv.get_number(k); }},
        {"scoring_weights", [](RunConfig& c, const KeyValueFile& kv, const std::string& k) {
             const auto w = kv.get_number_list(k);
             if (w.size() != 5) throw Error(ErrorCode::ConfigError, "scoring_weights needs 5 values");
             c.reasoning.weights = ScoringWeights{w[0], w[1], w[2], w[3], w[4]};
         }},
        {"max_trace_num", [](RunConfig& c, const KeyValueFile& kv, const std::string& k) { c.max_trace_num = as_int(kv, k); }},
        {"merge_hours", [](RunConfig& c, const KeyValueFile& kv, const std::string& k) { c.merge_hours = kv.get_number(k); }},
        {"merge_iterations", [](RunConfig& c, const KeyValueFile& kv, const std::string& k) { c.merge_iterations = as_int(kv, k); }},
        {"debugging_semaphore", [](RunConfig& c, const KeyValueFile& kv, const std::string& k) { c.debugging_semaphore = as_int(kv, k); }},
        {"running_semaphore", [](RunConfig& c, const KeyValueFile& kv, const std::string& k) { c.running_semaphore = as_int(kv, k); }},
        {"feedback_semaphore", [](RunConfig& c, const KeyValueFile& kv, const std::string& k) { c.feedback_semaphore = as_int(kv, k); }},
        {"cross_trace_diversity", [](RunConfig& c, const KeyValueFile& kv, const std::string& k) { c.cross_trace_diversity = kv.get_bool(k); }},
        {"coder_timeout_multiplier", [](RunConfig& c, const KeyValueFile& kv, const std::string& k) { c.coder_timeout_multiplier = as_int(kv, k); }},
        {"runner_timeout_multiplier", [](RunConfig& c, const KeyValueFile& kv, const std::string& k) { c.runner_timeout_multiplier = as_int(kv, k); }},
        {"timeout_increase_stage", [](RunConfig& c, const KeyValueFile& kv, const std::string& k) { c.timeout_increase_stage = as_int(kv, k); }},
        {"timeout_stage_patience", [](RunConfig& c, const KeyValueFile& kv, const std::string& k) { c.timeout_stage_patience = as_int(kv, k); }},
        {"llm_decide_longer_runtime", [](RunConfig& c, const KeyValueFile& kv, const std::string& k) { c.llm_decide_longer_runtime = kv.get_bool(k); }},
        {"fix_seed_and_split", [](RunConfig& c, const KeyValueFile& kv, const std::string& k) { c.fix_seed_and_split = kv.get_bool(k); }},
        {"enable_multi-seed_selection", [](RunConfig& c, const KeyValueFile& kv, const std::string& k) { c.enable_multi_seed_selection = kv.get_bool(k); }},
        {"enable_multi_seed_selection", [](RunConfig& c, const KeyValueFile& kv, const std::string& k) { c.enable_multi_seed_selection = kv.get_bool(k); }},
        {"topk_final", [](RunConfig& c, const KeyValueFile& kv, const std::string& k) { c.topk_final = as_int(kv, k); }},
        {"final_seeds", [](RunConfig& c, const KeyValueFile& kv, const std::string& k) {
             c.final_seeds.clear();
             for (double v : kv.get_number_list(k)) {
                 if (v < 0 || v != std::floor(v)) throw Error(ErrorCode::ConfigError, "final_seeds must be non-negative integers");
                 c.final_seeds.push_back(static_cast<std::uint64_t>(v));
             }
         }},
        {"budget_mode", [](RunConfig& c, const KeyValueFile& kv, const std::string& k) {
             const auto v = to_lower(kv.get_string(k));
             if (v == "iterations") c.budget_mode = BudgetMode::IterationCount;
             else if (v == "seconds") c.budget_mode = BudgetMode::WallClockSeconds;
             else throw Error(ErrorCode::ConfigError, "budget_mode must be iterations or seconds");
         }},
        {"budget", [](RunConfig& c, const KeyValueFile& kv, const std::string& k) { c.budget = kv.get_number(k); }},
        {"extension_fraction", [](RunConfig& c, const KeyValueFile& kv, const std::string& k) { c.extension_fraction = kv.get_number(k); }},
        {"extension_cap", [](RunConfig& c, const KeyValueFile& kv, const std::string& k) { c.extension_cap = as_int(kv, k); }},
        {"extension_threshold", [](RunConfig& c, const KeyValueFile& kv, const std::string& k) { c.extension_threshold = kv.get_number(k); }},
        {"seed", [](RunConfig& c, const KeyValueFile& kv, const std::string& k) { c.seed = static_cast<std::uint64_t>(as_int(kv, k)); }},
        {"deterministic", [](RunConfig& c, const KeyValueFile& kv, const std::string& k) { c.deterministic = kv.get_bool(k); }},
        {"work_dir", [](RunConfig& c, const KeyValueFile& kv, const std::string& k) { c.work_dir = kv.get_string(k); }},
        {"mcts.c_puct", [](RunConfig& c, const KeyValueFile& kv, const std::string& k) { c.mcts.c_puct = kv.get_number(k); }},
        {"mcts.expand_k", [](RunConfig& c, const KeyValueFile& kv, const std::string& k) { c.mcts.expand_k = as_int(kv, k); }},
        {"mcts.max_depth", [](RunConfig& c, const KeyValueFile& kv, const std::string& k) { c.mcts.max_depth = as_int(kv, k); }},
        {"mcts.reward", [](RunConfig& c, const KeyValueFile& kv, const std::string& k) { c.mcts.reward = parse_reward_mode(kv.get_string(k)); }},
        {"mcts.early_stop", [](RunConfig& c, const KeyValueFile& kv, const std::string& k) { c.mcts.early_stop = kv.get_number(k); }},
    };
    return s;
}

}  // namespace

RunConfig parse_run_config(std::string_view text, std::string_view origin) {
    const auto kv = KeyValueFile::parse(text, origin);
    RunConfig cfg;
    for (const auto& [key, value] : kv.values()) {
        auto it = setters().find(key);
        if (it == setters().end()) {
            throw Error(ErrorCode::ConfigError, std::string(origin) + ": unknown key '" + key + "'");
        }
        it->second(cfg, kv, key);
    }
    cfg.check();
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::string text;
    try {
        text = read_file(path);
    } catch (const Error&) {
        throw Error(ErrorCode::ConfigError, "cannot read config file " + path.string());
    }
    return parse_run_config(text, path.string());
}

}  // namespace codeopt
