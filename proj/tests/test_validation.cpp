#include <catch_amalgamated.hpp>

#include "codeopt/validation.hpp"
#include "support.hpp"

using namespace codeopt;
using namespace testsupport;

namespace {

Task hundred_rows() {
    Task t;
    t.id = "rows";
    t.metric_name = "rmse";
    t.direction = Direction::LowerBetter;
    t.schema.columns = {"id", "target"};
    t.schema.rows = 100;
    t.schema.numeric_columns = {"target"};
    return t;
}

std::optional<std::string> text(std::string s) { return s; }

std::string csv_rows(std::size_t n, const std::string& value = "1.5") {
    std::string s = "id,target\n";
    for (std::size_t i = 0; i < n; ++i) s += std::to_string(i) + "," + value + "\n";
    return s;
}

struct Case {
    Task task = hundred_rows();
    Solution solution{"s1", "print('model')\n", std::string("s0"), std::string("h1"), 1};
    Hypothesis hypothesis;
    ValidationInput in;

    explicit Case(PerfPair perf, std::optional<std::string> submission = csv_rows(100)) {
        hypothesis.id = "h1";
        hypothesis.text = "add a lag-7 feature";
        in.task = &task;
        in.solution = &solution;
        in.hypothesis = &hypothesis;
        in.submission = std::move(submission);
        in.perf = perf;
    }
};

std::shared_ptr<ScriptedBackend> all_pass() {
    auto b = std::make_shared<ScriptedBackend>();
    b->add(OracleRole::AlignmentCheck, 0, "No issues.");
    b->add(OracleRole::ComprehensiveAnalysis, 0, "VERIFIED: error on weekly peaks dropped.");
    b->add(OracleRole::Judge, 0, "ACCEPT");
    return b;
}

}  // namespace

TEST_CASE("format gate") {
    const auto task = hundred_rows();
    CHECK(check_format(text(csv_rows(100)), task).passed);

    const auto absent = check_format(std::optional<std::string>{}, task);
    CHECK_FALSE(absent.passed);
    CHECK(absent.reason_text == "submission absent");
    CHECK(check_format(fresh_dir("fmt") / "missing.csv", task).reason_text == "submission absent");

    const auto short_file = check_format(text(csv_rows(99)), task);
    CHECK_FALSE(short_file.passed);
    CHECK(short_file.reason_text.find("99") != std::string::npos);
    CHECK(short_file.reason_text.find("100") != std::string::npos);

    CHECK_FALSE(check_format(text("id,prediction\n1,2\n"), task).passed);
    CHECK_FALSE(check_format(text(csv_rows(100, "nan")), task).passed);
    CHECK_FALSE(check_format(text(csv_rows(100, "abc")), task).passed);
    CHECK_FALSE(check_format(text(""), task).passed);
    auto quoted = csv_rows(99) + "\"99\",\"2.5\"\n";
    CHECK(check_format(text(quoted), task).passed);
}

TEST_CASE("alignment findings") {
    CHECK(parse_findings("No issues.").empty());
    CHECK(parse_findings("none").empty());
    CHECK(parse_findings("  no issues found  ").empty());
    CHECK(parse_findings("reads test labels") == std::vector<std::string>{"reads test labels"});
    CHECK(parse_findings("1. target mean computed on test\n- future rows used").size() == 2);

    Case c(PerfPair{0.4, 0.5});
    auto b = std::make_shared<ScriptedBackend>();
    b->add(OracleRole::AlignmentCheck, 1, "reads test labels");
    b->add(OracleRole::AlignmentCheck, 2, "no issues");
    OracleClient oracle(b);
    const auto bad = check_alignment(c.in, oracle);
    CHECK_FALSE(bad.passed);
    CHECK(bad.findings.size() == 1);
    CHECK(check_alignment(c.in, oracle).passed);
}

TEST_CASE("comprehensive analysis") {
    SECTION("refuted hypothesis fails") {
        Case c(PerfPair{0.41, 0.43});
        auto b = std::make_shared<ScriptedBackend>();
        b->add(OracleRole::ComprehensiveAnalysis, 1,
               "Hypothesis Evaluation: REFUTED\nThe new feature has a weak correlation with the residual error; "
               "the gain is noise.");
        OracleClient oracle(b);
        const auto out = comprehensive_analysis(c.in, oracle, 0.0);
        CHECK_FALSE(out.gate.passed);
        CHECK(out.hypothesis_verified == false);
        CHECK(oracle.calls() == 1);
    }
    SECTION("verified improvement gets a code quality pass") {
        Case c(PerfPair{0.41, 0.43});
        OracleClient oracle(all_pass());
        const auto out = comprehensive_analysis(c.in, oracle, 0.0);
        CHECK(out.gate.passed);
        CHECK(out.hypothesis_verified == true);
        CHECK(out.code_quality_notes.has_value());
        REQUIRE(oracle.calls() == 2);
        CHECK(oracle.transcript()[1].context.at("aspect") == "code_quality");
    }
    SECTION("non-improving score skips the code quality pass") {
        Case c(PerfPair{0.45, 0.43});
        OracleClient oracle(all_pass());
        const auto out = comprehensive_analysis(c.in, oracle, 0.0);
        CHECK(out.gate.passed);
        CHECK_FALSE(out.code_quality_notes.has_value());
        CHECK(oracle.calls() == 1);
    }
}

TEST_CASE("gates short-circuit") {
    SECTION("format failure asks nobody") {
        for (auto sub : {std::optional<std::string>{}, std::optional<std::string>{csv_rows(99)}}) {
            Case c(PerfPair{0.4, 0.5}, sub);
            OracleClient oracle(all_pass());
            const auto r = validate(c.in, oracle);
            CHECK_FALSE(r.decision);
            CHECK(r.reason.gate == Gate::Format);
            CHECK(oracle.calls(true) == 0);
        }
        Case crashed(PerfPair{std::nullopt, 0.5});
        crashed.in.trace.exit_status = ExitStatus::Timeout;
        OracleClient oracle(all_pass());
        CHECK_FALSE(validate(crashed.in, oracle).decision);
        CHECK(oracle.calls(true) == 0);
    }
    SECTION("all gates pass in order") {
        Case c(PerfPair{0.4, 0.5});
        OracleClient oracle(all_pass());
        const auto r = validate(c.in, oracle);
        CHECK(r.decision);
        CHECK(r.reason.gate == Gate::Judge);
        CHECK(oracle.roles_called() == std::vector<OracleRole>{OracleRole::AlignmentCheck,
                                                               OracleRole::ComprehensiveAnalysis,
                                                               OracleRole::ComprehensiveAnalysis, OracleRole::Judge});
        REQUIRE(r.gates.size() == 4);
        for (const auto& g : r.gates) CHECK(g.passed);
    }
    SECTION("alignment failure stops before analysis") {
        Case c(PerfPair{0.4, 0.5});
        auto b = all_pass();
        b->add(OracleRole::AlignmentCheck, 1, "- fits the scaler on test rows");
        OracleClient oracle(b);
        const auto r = validate(c.in, oracle);
        CHECK_FALSE(r.decision);
        CHECK(r.reason.gate == Gate::Alignment);
        CHECK(r.reason.leakage_findings.size() == 1);
        CHECK(oracle.roles_called() == std::vector<OracleRole>{OracleRole::AlignmentCheck});
    }
    SECTION("judge can still reject") {
        Case c(PerfPair{0.4, 0.5});
        auto b = all_pass();
        b->add(OracleRole::Judge, 1, "REJECT: gain within noise");
        OracleClient oracle(b);
        const auto r = validate(c.in, oracle);
        CHECK_FALSE(r.decision);
        CHECK(r.reason.gate == Gate::Judge);
        CHECK(r.reason.hypothesis_verified == true);
    }
    SECTION("feedback permit is released") {
        Case c(PerfPair{0.4, 0.5});
        OracleClient oracle(all_pass());
        Permits permits(1, 1, 1);
        CHECK(validate(c.in, oracle, {}, &permits).decision);
        CHECK(validate(c.in, oracle, {}, &permits).decision);
        CHECK(permits.peak(PermitKind::Feedback) == 1);
    }
}

TEST_CASE("score-only mode") {
    Case better(PerfPair{0.4, 0.5});
    Case worse(PerfPair{0.6, 0.5});
    Case first(PerfPair{0.6, std::nullopt});
    OracleClient oracle(std::make_shared<ScriptedBackend>());
    ValidationConfig cfg;
    cfg.score_only = true;
    CHECK(validate(better.in, oracle, cfg).decision);
    CHECK_FALSE(validate(worse.in, oracle, cfg).decision);
    CHECK(validate(first.in, oracle, cfg).decision);
    CHECK(oracle.calls(true) == 0);
}

TEST_CASE("recorded overfitting cases") {
    const auto cases = load_overfit_pack(fixture_dir() / "overfit_pack.jsonl");
    REQUIRE(cases.size() == 9);
    const auto gated = replay_overfit_pack(cases, {});
    int rejected = 0;
    for (const auto& o : gated) {
        INFO("case " << o.id);
        CHECK(o.decision == o.expected_accept);
        rejected += o.decision ? 0 : 1;
        if (o.id == 32) {
            CHECK_FALSE(o.decision);
            CHECK(o.deciding_gate == Gate::Alignment);
        }
    }
    CHECK(rejected == 6);

    ValidationConfig score_only;
    score_only.score_only = true;
    for (const auto& o : replay_overfit_pack(cases, score_only)) {
        CHECK(o.decision);
        CHECK(o.roles.empty());
    }
}
