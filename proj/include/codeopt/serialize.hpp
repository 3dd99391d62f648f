#pragma once

#include <json.hpp>

#include "codeopt/core.hpp"
#include "codeopt/memory.hpp"

// JSON forms of the core records. Missing scores are written as null.

namespace codeopt {

nlohmann::json score_to_json(const MaybeScore& s);
MaybeScore score_from_json(const nlohmann::json& j);

void to_json(nlohmann::json& j, const Solution& s);
void from_json(const nlohmann::json& j, Solution& s);
void to_json(nlohmann::json& j, const Hypothesis& h);
void from_json(const nlohmann::json& j, Hypothesis& h);
void to_json(nlohmann::json& j, const PerfPair& p);
void from_json(const nlohmann::json& j, PerfPair& p);
void to_json(nlohmann::json& j, const ExecutionTrace& t);
void from_json(const nlohmann::json& j, ExecutionTrace& t);
void to_json(nlohmann::json& j, const DiagnosticReason& r);
void from_json(const nlohmann::json& j, DiagnosticReason& r);
void to_json(nlohmann::json& j, const StructuredFeedback& f);
void from_json(const nlohmann::json& j, StructuredFeedback& f);
void to_json(nlohmann::json& j, const Budget& b);
void from_json(const nlohmann::json& j, Budget& b);

nlohmann::json entry_to_json(const MemoryEntry& e);
MemoryEntry entry_from_json(const nlohmann::json& j);

}  // namespace codeopt
