#include <catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>

#include "codeopt/config.hpp"
#include "codeopt/mcts.hpp"
#include "codeopt/multitrace.hpp"
#include "support.hpp"

using namespace codeopt;
using namespace testsupport;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct CliResult {
    int code = -1;
    std::string out;
};

CliResult cli(const std::string& args) {
    const auto dir = fresh_dir("cli");
    const auto out = dir / "out.txt";
    const std::string cmd = std::string("\"") + CODEOPT_CLI + "\" " + args + " > \"" + out.string() + "\" 2>&1";
    const int status = std::system(cmd.c_str());
    CliResult r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = read_text(out);
    return r;
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

fs::path scripted_log(int traces, double budget, const std::string& tag) {
    const auto dir = fresh_dir(tag);
    const auto bundle = copy_bundle("toy");
    const Task task = load_task(bundle);
    const auto cfg = small_run_config(traces, budget, dir);
    OracleClient oracle(scripted_run_backend(traces), cfg.retry);
    ExecutorConfig ecfg;
    ecfg.work_root = dir;
    Executor exec(ecfg);
    const auto path = dir / "events.jsonl";
    EventLog log(path, run_log_meta("multitrace", task, cfg, "scripted"), true);
    run(task, cfg, oracle, exec, log);
    log.close();
    return path;
}

std::vector<std::string> lines_of(const fs::path& p) {
    std::ifstream in(p);
    std::vector<std::string> out;
    for (std::string line; std::getline(in, line);) out.push_back(line);
    return out;
}

void write_lines(const fs::path& p, const std::vector<std::string>& lines) {
    std::ofstream out(p, std::ios::binary);
    for (const auto& l : lines) out << l << "\n";
}

// The same wildcard replies as scripted_run_backend, as a fixture file.
fs::path fixture_file(const fs::path& dir, int traces) {
    std::vector<std::string> lines;
    auto add = [&](const char* role, json ordinal, const std::string& text) {
        lines.push_back(json{{"role", role}, {"ordinal", ordinal}, {"response_text", text}}.dump());
    };
    for (int i = 1; i <= traces; ++i) add("InitHypothesis", i, "initial direction " + std::to_string(i) + " / Model");
    for (int k = 1; k <= 40; ++k) add("GenerateHypothesis", k, "idea " + std::to_string(k) + " / FeatureEng");
    add("ExtractChallenges", "*", "predictions ignore the feature");
    add("ScoreHypothesis", "*", R"({"impact":0.5,"alignment":0.5,"novelty":0.5,"feasibility":0.5,"risk":0.5})");
    add("SelectHypothesis", "*", "Select #1");
    add("Sketch", "*", "write a constant prediction");
    add("Implement", "*", constant_code(0.45));
    add("DebugFix", "*", crashing_code());
    add("AlignmentCheck", "*", "No issues.");
    add("ComprehensiveAnalysis", "*", "VERIFIED: fine.");
    add("Judge", "*", "ACCEPT");
    add("BudgetDecision", "*", "keep");
    const auto p = dir / "oracle.jsonl";
    write_lines(p, lines);
    return p;
}

fs::path cli_config(const fs::path& dir) {
    const auto p = dir / "run.toml";
    write_lines(p, {"max_trace_num = 2", "budget = 3", "challenges_per_source = 1", "final_seeds = [1]",
                    "topk_final = 1", "retry_wait_seconds = 0", "work_dir = \"" + (dir / "work").string() + "\""});
    return p;
}

}  // namespace

TEST_CASE("appending checks the sequence") {
    EventLog log("", json::object());
    RunEvent e;
    e.seq = 1;
    e.kind = EventKind::Init;
    log.append(e);
    CHECK(log.last_seq() == 1);
    e.seq = 3;
    try {
        log.append(e);
        FAIL("expected SeqGap");
    } catch (const Error& err) {
        CHECK(err.code() == ErrorCode::SeqGap);
    }
    e.seq = 2;
    log.append(e);
    CHECK(log.emit(0, EventKind::Final, json::object()) == 3);
    log.close();
    log.close();
}

TEST_CASE("a replayed log re-appended to a copy is byte-identical") {
    const auto path = scripted_log(2, 3, "reappend");
    const auto original = read_log(path);
    const auto copy = path.parent_path() / "copy.jsonl";
    {
        EventLog out(copy, original.meta, true);
        for (const auto& e : original.events) out.append(e);
        out.close();
    }
    CHECK(read_text(copy) == read_text(path));
    CHECK(parse_log(read_text(path)).events.size() == original.events.size());
}

TEST_CASE("empty and damaged logs") {
    const auto dir = fresh_dir("damaged");
    write_lines(dir / "empty.jsonl", {});
    const auto empty = read_log(dir / "empty.jsonl");
    CHECK(empty.events.empty());
    const auto st = replay(empty);
    CHECK(st.traces.empty());
    CHECK(st.iterations.empty());
    CHECK_FALSE(build_report(st).improvement_rate.has_value());

    const auto path = scripted_log(1, 2, "truncate");
    auto lines = lines_of(path);
    // Cut right after the second iteration's HypothesisChosen event.
    std::size_t cut = 0;
    int chosen = 0;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (json::parse(lines[i]).value("kind", "") == "HypothesisChosen" && ++chosen == 2) cut = i + 1;
    }
    REQUIRE(cut > 0);
    lines.resize(cut);
    write_lines(dir / "cut.jsonl", lines);
    const auto cut_log = read_log(dir / "cut.jsonl");
    try {
        replay(cut_log);
        FAIL("expected CorruptLog");
    } catch (const CorruptLog& e) {
        CHECK(e.first_bad_seq() == cut_log.events.back().seq + 1);
    }

    lines[3] = "{not json";
    write_lines(dir / "garbled.jsonl", lines);
    try {
        read_log(dir / "garbled.jsonl");
        FAIL("expected CorruptLog");
    } catch (const CorruptLog& e) {
        CHECK(e.first_bad_seq() == 3);
    }

    auto gap = lines_of(path);
    gap.erase(gap.begin() + 4);
    write_lines(dir / "gap.jsonl", gap);
    CHECK_THROWS_AS(read_log(dir / "gap.jsonl"), CorruptLog);
}

TEST_CASE("report on the long-run failure log") {
    const auto log = read_log(fixture_dir() / "failure_breakdown" / "failure_breakdown.jsonl");
    const auto rep = build_report(replay(log));
    CHECK(rep.iterations == 90);
    CHECK(rep.accepted == 31);
    CHECK(rep.to_text().find("improvement rate 34.4%") != std::string::npos);
    CHECK(rep.to_json()["improvement_rate"].get<double>() == Catch::Approx(31.0 / 90.0));
    REQUIRE(rep.traces.size() == 1);
    CHECK(rep.traces.front().iterations == 90);
}

TEST_CASE("single-iteration report") {
    const auto path = scripted_log(1, 1, "single");
    const auto rep = build_report(replay(read_log(path)));
    REQUIRE(rep.iterations == 1);
    REQUIRE(rep.improvement_rate.has_value());
    CHECK((*rep.improvement_rate == 0.0 || *rep.improvement_rate == 1.0));
    const auto text = rep.to_text();
    CHECK((text.find("improvement rate 100.0%") != std::string::npos ||
           text.find("improvement rate 0.0%") != std::string::npos));
}

TEST_CASE("tree search report counts match a recount of the log") {
    const auto dir = fresh_dir("treereport");
    const auto bundle = copy_bundle("toy");
    const Task task = load_task(bundle);
    const auto cfg = small_run_config(1, 5, dir);
    OracleClient oracle(scripted_run_backend(1), cfg.retry);
    ExecutorConfig ecfg;
    ecfg.work_root = dir;
    Executor exec(ecfg);
    const auto path = dir / "events.jsonl";
    EventLog log(path, run_log_meta("mcts", task, cfg, "scripted"), true);
    const auto live = mcts_run(task, cfg, oracle, exec, log);
    log.close();

    std::size_t nodes = 0;
    std::size_t edges = 0;
    for (const auto& line : lines_of(path)) {
        const auto j = json::parse(line);
        if (j.value("kind", "") != "TreeUpdate" || j["payload"]["node"].is_null()) continue;
        ++nodes;
        edges += !j["payload"]["node"]["parent"].is_null();
    }
    const auto rep = build_report(replay(read_log(path)));
    CHECK(rep.tree_nodes == nodes);
    CHECK(rep.tree_edges == edges);
    CHECK(nodes == 6);
    CHECK(rep.to_json() == live.report.to_json());
    CHECK(rep.to_text().find("tree") != std::string::npos);
}

TEST_CASE("run config files") {
    const auto cfg = parse_run_config(
        "max_trace_num = 3\nmerge_iterations = 2\nfix_seed_and_split = true\nenable_multi_seed_selection = false\n"
        "[mcts]\nc_puct = 2.5\nreward = \"binary\"\n");
    CHECK(cfg.max_trace_num == 3);
    CHECK(cfg.merge_iterations == 2);
    CHECK(cfg.fix_seed_and_split);
    CHECK_FALSE(cfg.enable_multi_seed_selection);
    CHECK(cfg.mcts.c_puct == 2.5);
    CHECK(cfg.mcts.reward == RewardMode::Binary);

    for (const char* bad : {"no_such_key = 1\n", "max_trace_num = 0\n", "max_trace_num = \"two\"\n",
                            "[mcts]\nreward = \"maybe\"\n", "max_trace_num = \n"}) {
        try {
            parse_run_config(bad);
            FAIL("expected ConfigError for " << bad);
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::ConfigError);
        }
    }
    try {
        load_run_config(fresh_dir("cfg") / "missing.toml");
        FAIL("expected ConfigError");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::ConfigError);
    }
}

TEST_CASE("cli exit codes") {
    const auto dir = fresh_dir("cliexit");
    const auto bundle = copy_bundle("toy");

    CHECK(cli("").code == 2);
    CHECK(cli("run").code == 2);
    CHECK(cli("frobnicate").code == 2);
    CHECK(cli("mcts " + q(bundle) + " --reward sometimes").code == 2);

    CHECK(cli("run " + q(dir / "nowhere") + " --oracle synthetic:0.5").code == 3);

    const auto partial = dir / "partial.jsonl";
    write_lines(partial, {R"({"role":"Judge","ordinal":1,"response_text":"ACCEPT"})"});
    const auto miss = cli("run " + q(bundle) + " --config " + q(cli_config(dir)) + " --oracle scripted:" +
                          q(partial) + " --deterministic --log " + q(dir / "miss.jsonl"));
    CHECK(miss.code == 4);
    CHECK(miss.out.find("FixtureMiss") != std::string::npos);

    CHECK(cli("run " + q(bundle) + " --oracle synthetic:1.5").code == 2);

    const auto broken = copy_bundle("toy");
    fs::remove(broken / "grade");
    const auto lint = cli("lint " + q(broken));
    CHECK(lint.code == 3);
    CHECK(lint.out.find("failed") != std::string::npos);
    CHECK(cli("lint " + q(bundle)).code == 0);

    write_lines(dir / "bad.jsonl", {"{oops"});
    CHECK(cli("report " + q(dir / "bad.jsonl")).code == 5);
}

TEST_CASE("cli report, replay and scripted run") {
    const auto report = cli("report " + q(fixture_dir() / "failure_breakdown" / "failure_breakdown.jsonl"));
    CHECK(report.code == 0);
    CHECK(report.out.find("improvement rate 34.4% (31/90)") != std::string::npos);

    const auto dir = fresh_dir("clirun");
    const auto bundle = copy_bundle("toy");
    const auto log = dir / "events.jsonl";
    const auto best = dir / "best.py";
    const auto r = cli("run " + q(bundle) + " --config " + q(cli_config(dir)) + " --oracle scripted:" +
                       q(fixture_file(dir, 2)) + " --deterministic --log " + q(log) + " --out " + q(best));
    INFO(r.out);
    REQUIRE(r.code == 0);
    CHECK(fs::exists(best));
    CHECK(read_text(best) == constant_code(0.45));

    const auto rep_json = cli("report --json " + q(log));
    REQUIRE(rep_json.code == 0);
    const auto j = json::parse(rep_json.out);
    CHECK(j == build_report(replay(read_log(log))).to_json());
    CHECK(j["iterations"].get<int>() == 3);

    const auto rp = cli("replay " + q(log));
    CHECK(rp.code == 0);
    CHECK(rp.out.find("traces 2, iterations 3") != std::string::npos);
    CHECK(cli("replay " + q(log) + " --tree " + q(dir / "tree.json")).code == 2);

    const auto m = cli("mcts " + q(bundle) + " --config " + q(cli_config(dir)) + " --oracle scripted:" +
                       q(fixture_file(dir, 2)) + " --deterministic --expand-k 2 --log " + q(dir / "tree.jsonl"));
    INFO(m.out);
    REQUIRE(m.code == 0);
    CHECK(cli("replay " + q(dir / "tree.jsonl") + " --tree " + q(dir / "tree.json")).code == 0);
    const auto tree = json::parse(read_text(dir / "tree.json"));
    CHECK(tree.is_object());

    const auto cmp = cli("compare --fidelities 0.2,0.9 --seeds 3 --budget 50");
    CHECK(cmp.code == 0);
    CHECK(cmp.out.find("fidelity\t") == 0);
}
