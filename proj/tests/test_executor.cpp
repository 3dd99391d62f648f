#include <catch_amalgamated.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <thread>

#include "codeopt/executor.hpp"
#include "codeopt/util.hpp"
#include "support.hpp"

using namespace codeopt;
using namespace testsupport;
using Catch::Approx;
namespace fs = std::filesystem;

namespace {

Executor make_executor(Permits* permits = nullptr) {
    ExecutorConfig cfg;
    cfg.work_root = fresh_dir("exec");
    return Executor(cfg, permits);
}

Solution sol(const std::string& id, std::string code) { return Solution{id, std::move(code), {}, {}, 0}; }

void set_time_limits(const fs::path& bundle, int dev, int full) {
    auto text = read_file(bundle / "task.toml");
    std::string out;
    for (const auto& line : split_lines(text)) {
        if (line.rfind("time_limit_dev", 0) == 0) {
            out += "time_limit_dev = " + std::to_string(dev) + "\n";
        } else if (line.rfind("time_limit_full", 0) == 0) {
            out += "time_limit_full = " + std::to_string(full) + "\n";
        } else {
            out += line + "\n";
        }
    }
    write_file(bundle / "task.toml", out);
}

}  // namespace

TEST_CASE("grader output contract") {
    CHECK(parse_score_record("SCORE 0.55\n") == 0.55);
    CHECK(parse_score_record("\n  SCORE -1.5e-3  \n\n") == Approx(-0.0015));
    for (const char* bad : {"", "SCORE", "SCORE nan", "SCORE inf", "SCORE 1\nSCORE 2", "score 1", "SCORE 1 extra",
                            "SCORE 0x1p3"}) {
        INFO(bad);
        try {
            parse_score_record(bad);
            FAIL("accepted a malformed record");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::GradeParseError);
        }
    }
}

TEST_CASE("bundle loading") {
    const auto task = load_task(fixture_dir() / "bundles" / "toy");
    CHECK(task.id == "toy-linear");
    CHECK(task.direction == Direction::HigherBetter);
    CHECK(task.dev_fraction == 0.5);
    CHECK(task.schema.columns == std::vector<std::string>{"id", "prediction"});
    CHECK(task.schema.rows == 8u);
    REQUIRE(task.baseline_path.has_value());
    try {
        load_task("/nonexistent/bundle");
        FAIL("expected BundleMissing");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::BundleMissing);
        CHECK(exit_code_for(e.code()) == 3);
    }
}

TEST_CASE("dev split derivation") {
    const auto bundle = copy_bundle("toy");
    const auto task = load_task(bundle);
    CHECK(derive_dev_split(task, 0));
    const auto train = split_lines(read_file(bundle / "data" / "dev" / "train.csv"));
    CHECK(train.front() == "id,x,y");
    CHECK(train.size() == 1 + 8);
    CHECK(read_file(bundle / "data" / "dev" / "test.csv") == read_file(bundle / "data" / "full" / "test.csv"));
    CHECK_FALSE(derive_dev_split(task, 0));
}

TEST_CASE("baseline executes and grades") {
    const auto bundle = copy_bundle("toy");
    const auto task = load_task(bundle);
    auto ex = make_executor();
    const auto r = ex.execute(sol("baseline", read_file(*task.baseline_path)), task, {ExecKind::FullData, 0}, {});
    CHECK(r.trace.exit_status == ExitStatus::Ok);
    REQUIRE(r.score.has_value());
    CHECK(*r.score == Approx(0.55));
    REQUIRE(r.holdout_score.has_value());
    CHECK(*r.holdout_score == Approx(0.55875));
    CHECK_FALSE(r.sandbox_violation);
    REQUIRE(r.submission.has_value());
    CHECK(r.submission->rfind("id,prediction\n", 0) == 0);

    const auto exact = ex.execute(sol("exact", exact_code()), task, {ExecKind::FullData, 0}, {});
    CHECK(*exact.score == Approx(1.0));
    const auto dev = ex.execute(sol("const", constant_code(0.45)), task, {ExecKind::DevSubset, 0}, {},
                                read_file(*task.baseline_path));
    CHECK(*dev.score == Approx(0.8));
    CHECK(dev.trace.code_diff.find("+") != std::string::npos);
}

TEST_CASE("failing solutions") {
    const auto bundle = copy_bundle("toy");
    const auto task = load_task(bundle);
    auto ex = make_executor();
    const auto r = ex.execute(sol("boom", crashing_code()), task, {ExecKind::FullData, 0}, {});
    CHECK(r.trace.exit_status == ExitStatus::NonzeroExit);
    CHECK_FALSE(r.score.has_value());
    CHECK(r.trace.stderr_excerpt.find("model exploded") != std::string::npos);

    const auto silent = ex.execute(sol("silent", "pass\n"), task, {ExecKind::FullData, 0}, {});
    CHECK(silent.trace.exit_status == ExitStatus::Ok);
    CHECK_FALSE(silent.score.has_value());
    CHECK_FALSE(silent.submission.has_value());
}

TEST_CASE("time limit produces Timeout") {
    const auto bundle = copy_bundle("seeded");
    set_time_limits(bundle, 1, 2);
    const auto task = load_task(bundle);
    auto ex = make_executor();
    const auto start = std::chrono::steady_clock::now();
    const auto r = ex.execute(sol("loop", read_file(bundle / "baseline.py")), task, {ExecKind::FullData, 9}, {});
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    CHECK(r.trace.exit_status == ExitStatus::Timeout);
    CHECK_FALSE(r.score.has_value());
    CHECK(secs < 10.0);
}

TEST_CASE("solutions cannot read held-out labels") {
    const auto bundle = copy_bundle("toy");
    const auto task = load_task(bundle);
    auto ex = make_executor();
    if (!ex.confinement_available()) SKIP("kernel confinement unavailable");
    const std::string peek = "import os\nopen(os.path.join(os.environ['TASK_DATA_DIR'], '..', '..', 'grading', "
                             "'answers.csv')).read()\nopen('" +
                             (bundle / "grading" / "answers.csv").string() + "').read()\n";
    const auto r = ex.execute(sol("peek", peek), task, {ExecKind::FullData, 0}, {});
    CHECK(r.trace.exit_status == ExitStatus::NonzeroExit);
}

TEST_CASE("timeout escalation") {
    TimeoutState s;
    s.stage = 1;
    s.consecutive_timeouts = 1;
    auto n = escalate_timeout(s, ExitStatus::Timeout);
    CHECK(n.stage == 2);
    CHECK(n.consecutive_timeouts == 0);

    s.stage = 4;
    n = escalate_timeout(s, ExitStatus::Timeout);
    CHECK(n.stage == 4);
    CHECK(n.consecutive_timeouts == 0);

    s.stage = 2;
    n = escalate_timeout(s, ExitStatus::Ok);
    CHECK(n.stage == 2);
    CHECK(n.consecutive_timeouts == 0);

    s = TimeoutState{};
    n = escalate_timeout(s, ExitStatus::Timeout);
    CHECK(n.stage == 1);
    CHECK(n.consecutive_timeouts == 1);

    s.stage = 1;
    s.consecutive_timeouts = 1;
    s.step = 2;
    CHECK(escalate_timeout(s, ExitStatus::Timeout).stage == 3);
    CHECK(TimeoutState{}.multiplier() == 1);
}

TEST_CASE("debug loop") {
    const auto bundle = copy_bundle("toy");
    const auto task = load_task(bundle);
    auto ex = make_executor();
    const std::string name_error = constant_code(0.45) + "undefined_name\n";

    SECTION("one fix") {
        auto b = std::make_shared<ScriptedBackend>();
        b->add(OracleRole::DebugFix, 1, "```python\n" + exact_code() + "```");
        OracleClient oracle(b);
        TimeoutState t;
        auto [fixed, r] = ex.debug_loop(sol("s", name_error), task, {ExecKind::DevSubset, 0}, 3, oracle, t);
        CHECK(r.trace.exit_status == ExitStatus::Ok);
        CHECK(fixed.code == exact_code());
        CHECK(oracle.calls() == 1);
        const auto req = oracle.transcript().front();
        CHECK(req.context.at("stderr_tail").find("undefined_name") != std::string::npos);
    }
    SECTION("no fixes allowed") {
        OracleClient oracle(std::make_shared<ScriptedBackend>());
        TimeoutState t;
        CHECK_THROWS_AS(ex.debug_loop(sol("s", name_error), task, {ExecKind::DevSubset, 0}, 0, oracle, t),
                        DebugExhausted);
        CHECK(oracle.calls() == 0);
    }
    SECTION("passing code is untouched") {
        OracleClient oracle(std::make_shared<ScriptedBackend>());
        TimeoutState t;
        auto [same, r] = ex.debug_loop(sol("s", exact_code()), task, {ExecKind::DevSubset, 0}, 3, oracle, t);
        CHECK(same.code == exact_code());
        CHECK(oracle.calls() == 0);
    }
    SECTION("every fix fails") {
        auto b = std::make_shared<ScriptedBackend>();
        b->add(OracleRole::DebugFix, 0, crashing_code());
        OracleClient oracle(b);
        TimeoutState t;
        try {
            ex.debug_loop(sol("s", name_error), task, {ExecKind::DevSubset, 0}, 2, oracle, t);
            FAIL("expected DebugExhausted");
        } catch (const DebugExhausted& e) {
            CHECK(e.result.trace.exit_status == ExitStatus::NonzeroExit);
        }
        CHECK(oracle.calls() == 2);
    }
}

TEST_CASE("multi-seed evaluation") {
    const auto bundle = copy_bundle("seeded");
    set_time_limits(bundle, 1, 2);
    const auto task = load_task(bundle);
    auto ex = make_executor();
    const auto base = sol("seeded", read_file(bundle / "baseline.py"));
    const auto r = ex.multi_seed_eval(base, task, {1, 2, 3});
    CHECK(r.mean == Approx(0.80));
    CHECK(r.failed_seeds.empty());
    CHECK(ex.multi_seed_eval(base, task, {7}).mean == Approx(0.5));

    const auto partial = ex.multi_seed_eval(base, task, {1, 9});
    CHECK(partial.mean == Approx(0.80));
    CHECK(partial.failed_seeds == std::vector<std::uint64_t>{9});

    try {
        ex.multi_seed_eval(sol("boom", crashing_code()), task, {1, 2, 3});
        FAIL("expected AllSeedsFailed");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::AllSeedsFailed);
    }
    CHECK_THROWS_AS(ex.multi_seed_eval(base, task, {1, 1}), Error);
    CHECK_THROWS_AS(summarize_seeds({1, 2}, {std::nullopt, std::nullopt}), Error);
}

TEST_CASE("bundle linter") {
    const auto good = lint_bundle(fixture_dir() / "bundles" / "toy");
    CHECK(good.ok());

    const auto bundle = copy_bundle("toy");
    derive_dev_split(load_task(bundle), 0);
    const auto run = lint_bundle(bundle, LintOptions{true});
    CHECK(run.ok());
    CHECK(run.warnings.empty());
    REQUIRE(run.baseline_score.has_value());
    CHECK(*run.baseline_score == Approx(0.55));

    fs::copy_file(bundle / "grading" / "answers.csv", bundle / "data" / "full" / "answers.csv");
    const auto leaky = lint_bundle(bundle);
    CHECK_FALSE(leaky.ok());

    fs::remove(bundle / "grade");
    CHECK_FALSE(lint_bundle(bundle).ok());
    CHECK_FALSE(lint_bundle("/nonexistent").ok());
}

TEST_CASE("permits bound concurrency") {
    Permits permits(2, 3, 1);
    std::vector<std::thread> threads;
    for (int i = 0; i < 6; ++i) {
        threads.emplace_back([&] {
            auto g = permits.acquire(PermitKind::Running);
            std::this_thread::sleep_for(std::chrono::milliseconds(20));
        });
    }
    for (auto& t : threads) t.join();
    CHECK(permits.peak(PermitKind::Running) <= 2);
    CHECK(permits.peak(PermitKind::Running) >= 1);
    CHECK(permits.limit(PermitKind::Feedback) == 1);
}
