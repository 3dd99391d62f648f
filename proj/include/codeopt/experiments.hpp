#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "codeopt/core.hpp"
#include "codeopt/util.hpp"

namespace codeopt {

struct LogFile;

// ---------------------------------------------------------------------------
// Metrics

/// accepted / total. Throws EmptyLog when there are no iterations.
double improvement_rate(const std::vector<IterationRecord>& iterations);
double improvement_rate(const LogFile& log);

/// 1-based ranks; tied values share the average of their ranks.
std::vector<double> average_ranks(std::span<const double> xs);

/// Spearman rank correlation (Pearson on average ranks). Returns nullopt when
/// either series is constant. Throws LengthMismatch, or DomainError when
/// fewer than two pairs are given.
std::optional<double> spearman_ic(std::span<const double> val_deltas, std::span<const double> test_deltas);

// ---------------------------------------------------------------------------
// Synthetic crossover lab
//
// A hidden target on a d-dimensional integer grid; score = -L1 distance. A
// move changes one coordinate by +-1. Both strategies observe scores through
// Gaussian noise of scale sigma0 * (1 - p), where p is the oracle fidelity.

struct LandscapeConfig {
    int dimension = 8;
    int arity = 10;
};

using LabState = std::vector<int>;

class SyntheticLandscape {
public:
    SyntheticLandscape(LandscapeConfig cfg, Rng& rng);
    SyntheticLandscape(LandscapeConfig cfg, LabState target);

    [[nodiscard]] double score(const LabState& s) const;
    [[nodiscard]] int l1(const LabState& s) const;
    [[nodiscard]] LabState random_state(Rng& rng) const;
    [[nodiscard]] const LabState& target() const { return target_; }
    [[nodiscard]] const LandscapeConfig& config() const { return cfg_; }

    /// With probability p a move toward the target (the state itself when
    /// already optimal); otherwise a move that increases the distance.
    [[nodiscard]] LabState directed_move(const LabState& s, double p, Rng& rng) const;
    [[nodiscard]] LabState random_move(const LabState& s, Rng& rng) const;

private:
    LandscapeConfig cfg_;
    LabState target_;
};

struct LabConfig {
    LandscapeConfig landscape;
    int eval_budget = 200;
    double sigma0 = 2.0;
    int expand_k = 3;
    double c_puct = 1.0;
    int max_depth = 10;
    // MCTS proposals come from the same directed oracle as the gradient strategy.
    bool directed_mcts = false;
    std::uint64_t base_seed = 20240601;

    void check() const;
};

struct StrategyResult {
    double final_score = 0.0;
    int evaluations = 0;
    LabState final_state;
};

StrategyResult run_gradient(const SyntheticLandscape& land, const LabState& start, double p,
                            const LabConfig& cfg, Rng& rng);
StrategyResult run_tree_search(const SyntheticLandscape& land, const LabState& start, double p,
                               const LabConfig& cfg, Rng& rng);

struct LevelStats {
    double fidelity = 0.0;
    std::vector<double> gradient;
    std::vector<double> mcts;
    std::vector<double> gap;
    std::vector<std::uint64_t> seeds;
    std::vector<int> gradient_evals;
    std::vector<int> mcts_evals;
};

struct CrossoverReport {
    std::vector<LevelStats> levels;
    int seeds_per_level = 0;
    LabConfig config;
};

std::uint64_t lab_seed(std::uint64_t base, std::size_t level, std::size_t index);

CrossoverReport run_crossover(const std::vector<double>& fidelities, int seeds_per_level,
                              const LabConfig& cfg = {});

double mean_of(std::span<const double> xs);
// Sample standard deviation (n - 1); 0 for fewer than two values.
double stddev_of(std::span<const double> xs);

struct TrendTest {
    double slope = 0.0;
    double slope_p_value = 1.0;
    // Smallest one-sided Welch p-value for "level i+1 is lower than level i".
    double min_decrease_p_value = 1.0;
    bool increasing = false;
    bool no_significant_decrease = false;

    [[nodiscard]] bool passed() const { return increasing && no_significant_decrease; }
};

/// One-sided OLS slope test of gap against fidelity, plus Welch tests that no
/// adjacent level has a significantly lower mean gap.
TrendTest trend_test(const CrossoverReport& report, double alpha = 0.05);

std::string crossover_tsv(const CrossoverReport& report);
// Whitespace-separated columns with a '#' header, for gnuplot.
std::string crossover_dat(const CrossoverReport& report);

}  // namespace codeopt
