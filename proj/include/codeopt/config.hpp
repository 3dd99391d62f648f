#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "codeopt/core.hpp"
#include "codeopt/memory.hpp"
#include "codeopt/oracle.hpp"
#include "codeopt/reasoning.hpp"

namespace codeopt {

enum class MemorySaveType : std::uint8_t { Full, HypothesisOnly };
enum class RewardMode : std::uint8_t { Binary, Score };

std::string_view to_string(RewardMode m) noexcept;
RewardMode parse_reward_mode(std::string_view text);

struct MctsConfig {
    double c_puct = 1.0;
    int expand_k = 3;
    int max_depth = 10;
    RewardMode reward = RewardMode::Score;
    std::optional<double> early_stop;
};

// Key names follow the engine's hyperparameter table; see README for the list.
struct RunConfig {
    // Oracle
    std::string chat_model = "gpt-5";
    double temperature = 1.0;
    RetryPolicy retry;
    double full_runtime_hours = 12.0;
    std::size_t embedding_dim = 64;

    // Memory
    bool enable_global_memory = true;
    MemorySaveType memory_save_type = MemorySaveType::Full;
    KernelParams kernel;

    // Reasoning
    bool llm_select_hypothesis = true;
    bool enable_cross_trace_sharing = true;
    ReasoningConfig reasoning = [] {
        ReasoningConfig r;
        r.simple_hypothesis = true;
        return r;
    }();
    double near_tie_tolerance = 0.0;

    // Multi-trace
    int max_trace_num = 4;
    double merge_hours = 3.0;
    // Iteration-count runs have no clock; sync every this many rounds (0 = off).
    int merge_iterations = 0;
    int debugging_semaphore = 3;
    int running_semaphore = 3;
    int feedback_semaphore = 1;
    bool cross_trace_diversity = true;

    // Robust implementation
    int coder_timeout_multiplier = 4;
    int runner_timeout_multiplier = 4;
    int timeout_increase_stage = 1;
    int timeout_stage_patience = 2;
    bool llm_decide_longer_runtime = true;
    bool fix_seed_and_split = true;
    bool enable_multi_seed_selection = true;
    int topk_final = 2;
    std::vector<std::uint64_t> final_seeds = {1, 2, 3};

    // Budget
    BudgetMode budget_mode = BudgetMode::IterationCount;
    double budget = 20;
    double extension_fraction = 0.25;
    int extension_cap = 1;
    // Ask about an extension once remaining / total drops below this.
    double extension_threshold = 0.2;

    std::uint64_t seed = 0;
    bool deterministic = true;
    std::filesystem::path work_dir = std::filesystem::temp_directory_path();

    MctsConfig mcts;

    void check() const;
    [[nodiscard]] Budget initial_budget() const;
};

/// Reads a run config file. Unknown keys and bad values raise ConfigError.
RunConfig load_run_config(const std::filesystem::path& path);
RunConfig parse_run_config(std::string_view text, std::string_view origin = "<config>");

}  // namespace codeopt
