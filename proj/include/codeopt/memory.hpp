#pragma once

#include <memory>
#include <optional>
#include <shared_mutex>
#include <span>
#include <vector>

#include "codeopt/core.hpp"
#include "codeopt/oracle.hpp"
#include "codeopt/util.hpp"

namespace codeopt {

struct MemoryEntry {
    Hypothesis hypothesis;
    StructuredFeedback feedback;
    double delta = 0.0;
    int trace_id = 1;
    int iteration = 0;
    std::vector<double> embedding;
};

using EntryPtr = std::shared_ptr<const MemoryEntry>;

struct KernelParams {
    double alpha = 1.0;
    double beta = 1.0;
    double gamma = 0.05;

    void check() const;
};

/// U = alpha * S * exp(-gamma * L) + beta * tanh(delta).
double kernel_potential(double similarity, double delta, int L, const KernelParams& params);

/// Potential of a candidate (given by its embedding) against one entry. The
/// score gap is the entry's score against the querying trace's best; it is 0
/// when either is missing.
double interaction_potential(std::span<const double> candidate_embedding, const MemoryEntry& entry,
                             const KernelParams& params, int L, MaybeScore h_star,
                             Direction direction);

/// Max-shifted softmax.
std::vector<double> softmax(std::span<const double> logits);

std::vector<double> sampling_probabilities(std::span<const EntryPtr> entries,
                                           std::span<const double> candidate_embedding,
                                           const KernelParams& params, int L, MaybeScore h_star,
                                           Direction direction);

EntryPtr sample_similar(std::span<const EntryPtr> entries, std::span<const double> candidate_embedding,
                        const KernelParams& params, int L, MaybeScore h_star, Direction direction,
                        Rng& rng);

/// Largest delta; ties go to the earliest committed entry.
EntryPtr best_entry(std::span<const EntryPtr> entries);

// Append-only store shared by all traces. Readers take snapshots; a snapshot
// holds every entry committed before it was taken.
class SuccessMemory {
public:
    /// Commits an accepted record (returns the new entry) and ignores a
    /// rejected one (returns nullptr). The embedding is computed here, once.
    EntryPtr commit(const IterationRecord& record, Direction direction, OracleClient& oracle);
    /// Same, with a precomputed embedding (used by replay).
    EntryPtr commit(const IterationRecord& record, Direction direction, std::vector<double> embedding);

    [[nodiscard]] std::vector<EntryPtr> snapshot() const;
    [[nodiscard]] std::vector<EntryPtr> snapshot_for_trace(int trace_id) const;
    [[nodiscard]] std::size_t size() const;

private:
    mutable std::shared_mutex mu_;
    std::vector<EntryPtr> entries_;
};

}  // namespace codeopt
