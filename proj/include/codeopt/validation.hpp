#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "codeopt/core.hpp"
#include "codeopt/executor.hpp"
#include "codeopt/oracle.hpp"

namespace codeopt {

struct GateOutcome {
    Gate gate = Gate::Format;
    bool passed = false;
    std::string reason_text;
    std::vector<std::string> findings;
};

/// Rule-based checks of a submission against the task's declared schema.
GateOutcome check_format(const std::optional<std::string>& submission, const Task& task);
GateOutcome check_format(const std::filesystem::path& submission_path, const Task& task);

/// Everything a validation pass looks at for one iteration.
struct ValidationInput {
    const Task* task = nullptr;
    const Solution* solution = nullptr;
    const Hypothesis* hypothesis = nullptr;
    std::optional<std::string> submission;
    PerfPair perf;
    ExecutionTrace trace;
};

GateOutcome check_alignment(const ValidationInput& in, OracleClient& oracle);

struct ComprehensiveOutcome {
    GateOutcome gate;
    std::optional<bool> hypothesis_verified;
    std::optional<std::string> code_quality_notes;
};

/// Hypothesis check, plus a code-quality pass when the score is an improvement
/// within `tolerance`.
ComprehensiveOutcome comprehensive_analysis(const ValidationInput& in, OracleClient& oracle,
                                            double tolerance);

/// Splits an AlignmentCheck reply into findings; "no issues" yields none.
std::vector<std::string> parse_findings(std::string_view reply);

struct ValidationConfig {
    double tolerance = 0.0;
    // Accept iff the validation score improved; no gates, no oracle.
    bool score_only = false;
};

struct ValidationResult {
    bool decision = false;
    DiagnosticReason reason;
    std::vector<GateOutcome> gates;
};

ValidationResult validate(const ValidationInput& in, OracleClient& oracle,
                          const ValidationConfig& cfg = {}, Permits* permits = nullptr);

// ---------------------------------------------------------------------------
// Recorded overfitting cases (JSONL, one case per line):
//   {"case": 23, "component": "Model", "val_change": -0.638, "test_change": 0.003,
//    "expected": "Reject", "transcript": [{"role": "AlignmentCheck", "response_text": "..."}]}
// Changes are relative to a normalised best of 1.0 on a lower-is-better metric.

struct OverfitCase {
    int id = 0;
    Component component = Component::Workflow;
    double val_change = 0.0;
    double test_change = 0.0;
    bool expected_accept = false;
    std::vector<std::pair<OracleRole, std::string>> transcript;
};

struct CaseOutcome {
    int id = 0;
    bool decision = false;
    bool expected_accept = false;
    Gate deciding_gate = Gate::Format;
    std::vector<OracleRole> roles;
};

std::vector<OverfitCase> load_overfit_pack(const std::filesystem::path& path);
std::vector<CaseOutcome> replay_overfit_pack(const std::vector<OverfitCase>& cases,
                                             const ValidationConfig& cfg);

}  // namespace codeopt
