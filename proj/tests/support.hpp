#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "codeopt/config.hpp"
#include "codeopt/eventlog.hpp"
#include "codeopt/executor.hpp"
#include "codeopt/oracle.hpp"

namespace testsupport {

inline std::filesystem::path fixture_dir() { return CODEOPT_FIXTURE_DIR; }

// A new empty directory under the system temp dir.
std::filesystem::path fresh_dir(const std::string& tag);
// Copies a bundle from fixtures/bundles so DevSubset derivation never touches the source tree.
std::filesystem::path copy_bundle(const std::string& name);

// Toy-bundle solutions.
std::string constant_code(double value);
std::string exact_code();
std::string crashing_code();

// Scripted oracle for small end-to-end runs on the toy bundle: init
// proposals 1..n, unique generated ideas, and wildcard replies for every
// other role (implementation defaults to the constant-0.45 solution).
std::shared_ptr<codeopt::ScriptedBackend> scripted_run_backend(int traces);

codeopt::RunConfig small_run_config(int traces, double budget, const std::filesystem::path& work_dir);

std::string read_text(const std::filesystem::path& p);

}  // namespace testsupport
