#include "support.hpp"

#include <atomic>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "codeopt/util.hpp"

namespace fs = std::filesystem;
using namespace codeopt;

namespace testsupport {

fs::path fresh_dir(const std::string& tag) {
    static std::atomic<int> counter{0};
    const auto p = fs::temp_directory_path() / "codeopt-tests" /
                   (tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

fs::path copy_bundle(const std::string& name) {
    const auto dst = fresh_dir("bundle-" + name) / name;
    fs::copy(fixture_dir() / "bundles" / name, dst, fs::copy_options::recursive);
    return dst;
}

namespace {

std::string writer(const std::string& expr) {
    return "import csv\nimport os\n\n"
           "with open(os.path.join(os.environ[\"TASK_DATA_DIR\"], \"test.csv\")) as f:\n"
           "    rows = list(csv.DictReader(f))\n"
           "with open(os.environ[\"OUTPUT_PATH\"], \"w\") as out:\n"
           "    out.write(\"id,prediction\\n\")\n"
           "    for r in rows:\n"
           "        out.write(f\"{r['id']},{" + expr + "}\\n\")\n";
}

}  // namespace

std::string constant_code(double value) { return writer(format_double(value)); }
std::string exact_code() { return writer("float(r['x']) / 10"); }
std::string crashing_code() { return "raise RuntimeError('model exploded')\n"; }

std::shared_ptr<ScriptedBackend> scripted_run_backend(int traces) {
    auto b = std::make_shared<ScriptedBackend>();
    for (int i = 1; i <= traces; ++i) b->add(OracleRole::InitHypothesis, i, "initial direction " + std::to_string(i) + " / Model");
    for (int k = 1; k <= 400; ++k) b->add(OracleRole::GenerateHypothesis, k, "idea " + std::to_string(k) + " / FeatureEng");
    b->add(OracleRole::ExtractChallenges, 0, "predictions ignore the feature");
    b->add(OracleRole::ScoreHypothesis, 0,
           R"({"impact":0.5,"alignment":0.5,"novelty":0.5,"feasibility":0.5,"risk":0.5})");
    b->add(OracleRole::SelectHypothesis, 0, "Select #1");
    b->add(OracleRole::Sketch, 0, "write a constant prediction");
    b->add(OracleRole::Implement, 0, constant_code(0.45));
    b->add(OracleRole::DebugFix, 0, crashing_code());
    b->add(OracleRole::AlignmentCheck, 0, "No issues.");
    b->add(OracleRole::ComprehensiveAnalysis, 0, "VERIFIED: the change did what it said.");
    b->add(OracleRole::Judge, 0, "ACCEPT");
    b->add(OracleRole::BudgetDecision, 0, "keep");
    return b;
}

RunConfig small_run_config(int traces, double budget, const fs::path& work_dir) {
    RunConfig cfg;
    cfg.max_trace_num = traces;
    cfg.budget = budget;
    cfg.deterministic = true;
    cfg.work_dir = work_dir;
    cfg.reasoning.challenges_per_source = 1;
    cfg.final_seeds = {1};
    cfg.topk_final = 1;
    cfg.retry.wait_seconds = 0.0;
    return cfg;
}

std::string read_text(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

}  // namespace testsupport
