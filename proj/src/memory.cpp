#include "codeopt/memory.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>

namespace codeopt {

void KernelParams::check() const {
    if (!(alpha >= 0.0) || !(beta >= 0.0) || !(gamma >= 0.0)) {
        throw Error(ErrorCode::DomainError, "kernel weights and decay must be non-negative");
    }
    if (!(alpha + beta > 0.0)) throw Error(ErrorCode::DomainError, "alpha + beta must be positive");
}

double kernel_potential(double similarity, double delta, int L, const KernelParams& params) {
    if (L < 0) throw Error(ErrorCode::DomainError, "iteration count must be non-negative");
    return params.alpha * similarity * std::exp(-params.gamma * static_cast<double>(L)) +
           params.beta * std::tanh(delta);
}

double interaction_potential(std::span<const double> candidate_embedding, const MemoryEntry& entry,
                             const KernelParams& params, int L, MaybeScore h_star,
                             Direction direction) {
    const double s = cosine(candidate_embedding, entry.embedding);
    const MaybeScore h_j = entry.feedback.perf.current;
    const double delta = (h_j && h_star) ? direction_adjusted_delta(*h_j, *h_star, direction) : 0.0;
    return kernel_potential(s, delta, L, params);
}

std::vector<double> softmax(std::span<const double> logits) {
    if (logits.empty()) return {};
    const double m = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double z = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - m);
        z += p[i];
    }
    for (double& x : p) x /= z;
    return p;
}

std::vector<double> sampling_probabilities(std::span<const EntryPtr> entries,
                                           std::span<const double> candidate_embedding,
                                           const KernelParams& params, int L, MaybeScore h_star,
                                           Direction direction) {
    std::vector<double> u;
    u.reserve(entries.size());
    for (const auto& e : entries) {
        u.push_back(interaction_potential(candidate_embedding, *e, params, L, h_star, direction));
    }
    return softmax(u);
}

EntryPtr sample_similar(std::span<const EntryPtr> entries, std::span<const double> candidate_embedding,
                        const KernelParams& params, int L, MaybeScore h_star, Direction direction,
                        Rng& rng) {
    if (entries.empty()) throw Error(ErrorCode::EmptyMemory, "cannot sample from empty memory");
    const auto p = sampling_probabilities(entries, candidate_embedding, params, L, h_star, direction);
    return entries[rng.categorical(p)];
}

EntryPtr best_entry(std::span<const EntryPtr> entries) {
    if (entries.empty()) throw Error(ErrorCode::EmptyMemory, "memory is empty");
    EntryPtr best = entries.front();
    for (const auto& e : entries) {
        if (e->delta > best->delta) best = e;
    }
    return best;
}

EntryPtr SuccessMemory::commit(const IterationRecord& record, Direction direction,
                               OracleClient& oracle) {
    if (!record.decision) return nullptr;
    return commit(record, direction, oracle.embed(record.hypothesis.text));
}

EntryPtr SuccessMemory::commit(const IterationRecord& record, Direction direction,
                               std::vector<double> embedding) {
    if (!record.decision) return nullptr;
    const auto delta = score_delta(record.feedback.perf, direction);
    if (!delta) throw Error(ErrorCode::DomainError, "accepted record has no score");
    auto entry = std::make_shared<const MemoryEntry>(MemoryEntry{
        record.hypothesis, record.feedback, *delta, record.trace_id, record.iteration,
        std::move(embedding)});
    std::unique_lock lock(mu_);
    entries_.push_back(entry);
    return entry;
}

std::vector<EntryPtr> SuccessMemory::snapshot() const {
    std::shared_lock lock(mu_);
    return entries_;
}

std::vector<EntryPtr> SuccessMemory::snapshot_for_trace(int trace_id) const {
    std::shared_lock lock(mu_);
    std::vector<EntryPtr> out;
    for (const auto& e : entries_) {
        if (e->trace_id == trace_id) out.push_back(e);
    }
    return out;
}

std::size_t SuccessMemory::size() const {
    std::shared_lock lock(mu_);
    return entries_.size();
}

}  // namespace codeopt
