#include <catch_amalgamated.hpp>

#include <algorithm>

#include "codeopt/experiments.hpp"
#include "codeopt/multitrace.hpp"
#include "codeopt/serialize.hpp"
#include "support.hpp"

using namespace codeopt;
using namespace testsupport;
using Catch::Approx;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

Task plain_task() {
    Task t;
    t.id = "t";
    t.description = "predict demand";
    t.metric_name = "rmse";
    t.direction = Direction::LowerBetter;
    return t;
}

Hypothesis hyp(const std::string& id, const std::string& text) {
    Hypothesis h;
    h.id = id;
    h.text = text;
    return h;
}

EntryPtr entry(const std::string& text, double delta, int trace = 1, int iteration = 1) {
    MemoryEntry e;
    e.hypothesis = hyp("m-" + text, text);
    e.delta = delta;
    e.trace_id = trace;
    e.iteration = iteration;
    e.feedback.perf.current = 0.5;
    e.embedding = hash_embedding(text, EmbeddingConfig{});
    return std::make_shared<const MemoryEntry>(e);
}

std::vector<double> embed_text(std::string_view s) { return hash_embedding(s, EmbeddingConfig{}); }

std::vector<PoolMember> pool_of(std::vector<std::string> texts) {
    std::vector<PoolMember> p;
    for (std::size_t i = 0; i < texts.size(); ++i) p.push_back({hyp("p" + std::to_string(i + 1), texts[i]), nullptr});
    return p;
}

int count_priors(const std::string& existing) {
    int n = 0;
    for (const auto& l : split_lines(existing)) n += l.rfind("- ", 0) == 0;
    return n;
}

struct ScriptedRun {
    fs::path dir = fresh_dir("run");
    fs::path bundle = copy_bundle("toy");
    Task task = load_task(bundle);
    RunConfig cfg;
    std::shared_ptr<ScriptedBackend> backend;
    fs::path log_path = dir / "events.jsonl";

    ScriptedRun(int traces, double budget) : cfg(small_run_config(traces, budget, dir)), backend(scripted_run_backend(traces)) {}

    RunResult go() {
        OracleClient oracle(backend, cfg.retry);
        Permits permits(cfg.running_semaphore, cfg.debugging_semaphore, cfg.feedback_semaphore);
        ExecutorConfig ecfg;
        ecfg.work_root = dir;
        Executor exec(ecfg, &permits);
        EventLog log(log_path, run_log_meta("multitrace", task, cfg, "scripted"), cfg.deterministic);
        auto r = run(task, cfg, oracle, exec, log);
        log.close();
        return r;
    }
};

std::vector<RunEvent> events_of(const fs::path& p) { return read_log(p).events; }

}  // namespace

TEST_CASE("diversified initialisation") {
    const auto task = plain_task();
    SECTION("single trace") {
        auto b = std::make_shared<ScriptedBackend>();
        b->add(OracleRole::InitHypothesis, 1, "use gradient boosting / Model");
        OracleClient oracle(b);
        const auto hs = init_diversified(task, 1, oracle);
        REQUIRE(hs.size() == 1);
        CHECK(hs[0].text == "use gradient boosting");
        CHECK(oracle.transcript()[0].context.at("existing").empty());
    }
    SECTION("four traces see every earlier proposal") {
        auto b = std::make_shared<ScriptedBackend>();
        const std::vector<std::string> texts = {"gradient boosting / Model", "target encoding / FeatureEng",
                                                "drop noisy rows / Data", "blend three models / Ensemble"};
        for (std::size_t i = 0; i < texts.size(); ++i) b->add(OracleRole::InitHypothesis, static_cast<int>(i) + 1, texts[i]);
        OracleClient oracle(b);
        const auto hs = init_diversified(task, 4, oracle);
        REQUIRE(hs.size() == 4);
        for (std::size_t i = 0; i < 4; ++i) {
            for (std::size_t j = i + 1; j < 4; ++j) CHECK(hs[i].text != hs[j].text);
        }
        const auto t = oracle.transcript();
        REQUIRE(t.size() == 4);
        for (std::size_t n = 0; n < 4; ++n) {
            CHECK(count_priors(t[n].context.at("existing")) == static_cast<int>(n));
            for (std::size_t k = 0; k < n; ++k) CHECK(t[n].context.at("existing").find(hs[k].text) != std::string::npos);
        }
        CHECK(hs[2].target_component == Component::Data);
    }
    SECTION("repeats are re-prompted once") {
        auto b = std::make_shared<ScriptedBackend>();
        b->add(OracleRole::InitHypothesis, 1, "gradient boosting / Model");
        b->add(OracleRole::InitHypothesis, 2, "gradient boosting / Model");
        b->add(OracleRole::InitHypothesis, 3, "lag features / FeatureEng");
        OracleClient oracle(b);
        const auto hs = init_diversified(task, 2, oracle);
        CHECK(hs[1].text == "lag features");
        CHECK(oracle.calls() == 3);
    }
    SECTION("two repeats fail") {
        auto b = std::make_shared<ScriptedBackend>();
        b->add(OracleRole::InitHypothesis, 0, "gradient boosting / Model");
        OracleClient oracle(b);
        try {
            init_diversified(task, 2, oracle);
            FAIL("expected DiversificationFailed");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::DiversificationFailed);
        }
    }
    SECTION("diversity off sends independent requests") {
        auto b = std::make_shared<ScriptedBackend>();
        b->add(OracleRole::InitHypothesis, 0, "gradient boosting / Model");
        OracleClient oracle(b);
        const auto hs = init_diversified(task, 3, oracle, false);
        CHECK(hs.size() == 3);
        for (const auto& r : oracle.transcript()) CHECK(r.context.at("existing").empty());
    }
}

TEST_CASE("candidate pool") {
    Rng rng(3);
    const KernelParams k;
    const std::vector<Hypothesis> local = {hyp("a", "lag features"), hyp("b", "bagging"), hyp("c", "drop outliers")};
    SECTION("empty memory keeps local hypotheses") {
        const auto pool = build_candidate_pool(local, {}, embed_text, k, 1, 0.5, Direction::LowerBetter, rng);
        REQUIRE(pool.size() == 3);
        for (std::size_t i = 0; i < 3; ++i) {
            CHECK(pool[i].hypothesis.id == local[i].id);
            CHECK_FALSE(pool[i].source);
        }
    }
    SECTION("single memory entry appears once") {
        const std::vector<EntryPtr> mem{entry("target encoding", 0.1, 2, 4)};
        const std::vector<Hypothesis> two(local.begin(), local.begin() + 2);
        const auto pool = build_candidate_pool(two, mem, embed_text, k, 1, 0.5, Direction::LowerBetter, rng);
        CHECK(pool.size() == 3);
        CHECK(pool[2].hypothesis.text == "target encoding");
        CHECK(pool[2].hypothesis.origin == HypothesisOrigin::MemoryBest);
        CHECK(pool[2].source == mem[0]);
        const auto j = pool_to_json(pool);
        CHECK(j[2]["source_trace"] == 2);
        CHECK(j[2]["origin"] == "MemoryBest");
    }
    SECTION("text duplicates across sources collapse") {
        const std::vector<EntryPtr> mem{entry("bagging", 0.2)};
        const auto pool = build_candidate_pool(local, mem, embed_text, k, 1, 0.5, Direction::LowerBetter, rng);
        CHECK(pool.size() == 3);
    }
    SECTION("memory only") {
        const std::vector<EntryPtr> mem{entry("x", 0.1), entry("y", 0.3)};
        const auto pool = build_candidate_pool({}, mem, embed_text, k, 1, 0.5, Direction::LowerBetter, rng);
        REQUIRE_FALSE(pool.empty());
        CHECK(pool[0].hypothesis.text == "y");
        CHECK(pool.size() <= 2);
    }
    SECTION("nothing at all") {
        try {
            build_candidate_pool({}, {}, embed_text, k, 1, 0.5, Direction::LowerBetter, rng);
            FAIL("expected EmptyCandidateSet");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::EmptyCandidateSet);
        }
    }
}

TEST_CASE("cross-trace selector") {
    const auto task = plain_task();
    auto pool = pool_of({"lag features", "bagging", "drop outliers"});
    pool[1].hypothesis.origin = HypothesisOrigin::MemoryBest;
    auto ask = [&](const std::string& reply) {
        auto b = std::make_shared<ScriptedBackend>();
        b->add(OracleRole::SelectHypothesis, 1, reply);
        OracleClient oracle(b);
        return cross_trace_select(pool, task, TraceState{}, oracle, "new");
    };
    const auto picked = ask("Select #2");
    CHECK(picked.id == "p2");
    CHECK(picked.origin == HypothesisOrigin::MemoryBest);

    const auto mod = ask("Modify #1: also add early stopping");
    CHECK(mod.origin == HypothesisOrigin::SelectorModified);
    CHECK(mod.parent_hypothesis_id == std::optional<std::string>("p1"));
    CHECK(mod.text == "also add early stopping");
    CHECK(mod.id == "new");

    const auto gen = ask("Generate: quantile loss / Model");
    CHECK(gen.origin == HypothesisOrigin::SelectorGenerated);
    CHECK(gen.target_component == Component::Model);

    for (const char* bad : {"Select #9", "Select #0", "pick the second one", ""}) {
        try {
            ask(bad);
            FAIL("accepted " << bad);
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::SelectorParseError);
        }
    }
}

TEST_CASE("budget extension") {
    const auto task = plain_task();
    RunConfig cfg;
    cfg.budget = 20;
    Budget b = cfg.initial_budget();
    b.consumed = 18;
    auto oracle_saying = [](const std::string& reply) {
        auto s = std::make_shared<ScriptedBackend>();
        s->add(OracleRole::BudgetDecision, 0, reply);
        return OracleClient(s);
    };
    {
        auto oracle = oracle_saying("extend: still improving");
        const auto out = adjust_budget(b, cfg, task, {ExitStatus::Timeout}, {0.5, 0.4}, oracle);
        CHECK(out.total == Approx(25.0));
        CHECK(out.extensions_granted == 1);
        const auto again = adjust_budget(out, cfg, task, {}, {}, oracle);
        CHECK(again.total == out.total);
        CHECK(oracle.calls() == 1);
    }
    {
        auto oracle = oracle_saying("keep");
        CHECK(adjust_budget(b, cfg, task, {}, {}, oracle).total == 20.0);
    }
    {
        RunConfig off = cfg;
        off.llm_decide_longer_runtime = false;
        auto oracle = oracle_saying("extend");
        CHECK(adjust_budget(b, off, task, {}, {}, oracle).total == 20.0);
        CHECK(oracle.calls() == 0);
    }
    {
        Budget early = cfg.initial_budget();
        early.consumed = 2;
        auto oracle = oracle_saying("extend");
        CHECK(adjust_budget(early, cfg, task, {}, {}, oracle).total == 20.0);
        CHECK(oracle.calls() == 0);
    }
    {
        RunConfig small = cfg;
        small.budget = 3;
        Budget last = small.initial_budget();
        last.consumed = 3;
        auto oracle = oracle_saying("extend");
        // A quarter of three iterations still grants a whole one.
        CHECK(adjust_budget(last, small, task, {}, {}, oracle).total == 4.0);
        small.budget_mode = BudgetMode::WallClockSeconds;
        Budget secs = small.initial_budget();
        secs.consumed = 3;
        CHECK(adjust_budget(secs, small, task, {}, {}, oracle).total == Approx(3.75));
    }
}

TEST_CASE("final selection") {
    auto by_mean = [](std::map<std::string, double> means) {
        return [means](const Solution& s, const std::vector<std::uint64_t>& seeds) {
            std::vector<MaybeScore> scores(seeds.size(), means.at(s.id));
            return summarize_seeds(seeds, scores);
        };
    };
    const std::vector<std::uint64_t> seeds{1, 2, 3};
    auto tb = [](int trace, const std::string& id, double val) {
        return TraceBest{trace, Solution{id, "", {}, {}, 0}, val};
    };
    {
        const auto sel = final_select({tb(1, "a", 0.9), tb(2, "b", 0.85)}, 2, seeds, Direction::HigherBetter,
                                      by_mean({{"a", 0.80}, {"b", 0.83}}));
        CHECK(sel.solution_id == "b");
        CHECK(sel.trace_id == 2);
        CHECK(*sel.seed_mean == Approx(0.83));
        CHECK(sel.candidates.size() == 2);
    }
    {
        const auto sel = final_select({tb(1, "a", 0.9)}, 2, seeds, Direction::HigherBetter, by_mean({{"a", 0.7}}));
        CHECK(sel.solution_id == "a");
        REQUIRE(sel.candidates.size() == 1);
        CHECK(sel.candidates[0].seed_scores.size() == 3);
    }
    {
        const auto sel = final_select({tb(2, "b", 0.9), tb(1, "a", 0.9)}, 2, seeds, Direction::HigherBetter,
                                      by_mean({{"a", 0.5}, {"b", 0.5}}));
        CHECK(sel.trace_id == 1);
    }
    {
        const auto sel = final_select({tb(1, "a", 0.30), tb(2, "b", 0.20), tb(3, "c", 0.25)}, 2, seeds,
                                      Direction::LowerBetter, by_mean({{"a", 0.1}, {"b", 0.4}, {"c", 0.35}}));
        CHECK(sel.solution_id == "c");
        CHECK(sel.candidates.size() == 2);
    }
    CHECK_THROWS_AS(final_select({}, 2, seeds, Direction::HigherBetter, by_mean({})), Error);

    const auto bundle = copy_bundle("seeded");
    const auto task = load_task(bundle);
    ExecutorConfig ecfg;
    ecfg.work_root = fresh_dir("final");
    Executor ex(ecfg);
    const Solution seeded{"seeded", read_file(bundle / "baseline.py"), {}, {}, 0};
    const Solution flat{"flat", "import os\nopen(os.environ['OUTPUT_PATH'], 'w').write('id,prediction\\n1,0.81\\n2,0.81\\n')\n", {}, {}, 0};
    const auto sel = final_select({TraceBest{1, seeded, 0.9}, TraceBest{2, flat, 0.8}}, 2, seeds, ex, task);
    CHECK(sel.solution_id == "flat");
    CHECK(*sel.candidates[0].mean == Approx(0.80));
}

TEST_CASE("single-trace scripted run") {
    ScriptedRun r(1, 3);
    r.backend->add(OracleRole::Implement, 1, constant_code(0.0));
    r.backend->add(OracleRole::Implement, 2, constant_code(0.45));
    r.backend->add(OracleRole::Implement, 3, constant_code(0.2));
    r.backend->add(OracleRole::Implement, 4, exact_code());
    r.backend->add(OracleRole::Judge, 1, "ACCEPT");
    r.backend->add(OracleRole::Judge, 2, "REJECT: worse than the best");
    r.backend->add(OracleRole::Judge, 3, "ACCEPT");
    const auto res = r.go();

    CHECK(res.best.code == exact_code());
    CHECK(res.best.id == "s1-3");
    CHECK(res.report.iterations == 3);
    CHECK(res.report.accepted == 2);
    CHECK(*res.report.best_score == Approx(1.0));
    CHECK(res.state.memory.size() == 2);

    const auto log = read_log(r.log_path);
    CHECK(improvement_rate(log) == Approx(2.0 / 3.0));
    std::vector<std::string> kinds;
    for (const auto& e : log.events) kinds.emplace_back(to_string(e.kind));
    const std::vector<std::string> expected = {
        "Init", "Init",
        "HypothesisChosen", "Executed", "GateOutcome", "Decision", "MemoryCommit",
        "HypothesisChosen", "Executed", "GateOutcome", "Decision",
        "HypothesisChosen", "Executed", "GateOutcome", "Decision", "MemoryCommit",
        "Final"};
    CHECK(kinds == expected);
    CHECK(log.events.back().payload["selection"]["solution_id"] == "s1-3");

    // Init proposals are not iterations and do not consume budget.
    CHECK(log.events.back().payload["budget"]["consumed"] == 3.0);
    const auto replayed = build_report(replay(log));
    CHECK(replayed.to_json() == res.report.to_json());
}

TEST_CASE("accepted work is visible to other traces at once") {
    ScriptedRun r(2, 4);
    r.backend->add(OracleRole::Implement, 1, constant_code(0.0));
    r.backend->add(OracleRole::Implement, 2, constant_code(0.0));
    r.backend->add(OracleRole::Implement, 3, constant_code(0.45));
    r.backend->add(OracleRole::Implement, 4, crashing_code());
    const auto res = r.go();
    const auto log = read_log(r.log_path);

    std::optional<std::string> committed;
    std::uint64_t commit_seq = 0;
    for (const auto& e : log.events) {
        if (e.kind == EventKind::MemoryCommit && e.trace == 1 && e.payload["iteration"] == 1) {
            committed = e.payload["entry"]["hypothesis"]["text"].get<std::string>();
            commit_seq = e.seq;
            break;
        }
    }
    REQUIRE(committed.has_value());
    int checked = 0;
    for (const auto& e : log.events) {
        if (e.kind != EventKind::HypothesisChosen || e.trace != 2 || e.seq < commit_seq) continue;
        bool found = false;
        for (const auto& m : e.payload["pool"]) {
            if (m["text"] == *committed && m["origin"] == "MemoryBest" && m["source_trace"] == 1) found = true;
        }
        CHECK(found);
        ++checked;
    }
    CHECK(checked == 2);
    CHECK(res.report.traces.size() == 2);
}

TEST_CASE("zero budget keeps the initial best") {
    ScriptedRun r(2, 0);
    r.backend->add(OracleRole::Implement, 1, constant_code(0.45));
    r.backend->add(OracleRole::Implement, 2, crashing_code());
    const auto res = r.go();
    CHECK(res.report.iterations == 0);
    CHECK(res.best.code == constant_code(0.45));
    for (const auto& e : events_of(r.log_path)) CHECK(e.kind != EventKind::HypothesisChosen);
}

TEST_CASE("scripted runs are byte-for-byte reproducible") {
    auto once = [](const fs::path& out) {
        ScriptedRun r(2, 4);
        r.backend->add(OracleRole::Implement, 3, exact_code());
        r.backend->add(OracleRole::Judge, 2, "REJECT");
        r.log_path = out;
        return r.go();
    };
    const auto dir = fresh_dir("det");
    const auto a = once(dir / "a.jsonl");
    const auto b = once(dir / "b.jsonl");
    CHECK(read_text(dir / "a.jsonl") == read_text(dir / "b.jsonl"));
    CHECK(a.report.to_json().dump() == b.report.to_json().dump());
    const auto replayed = build_report(replay(read_log(dir / "a.jsonl")));
    CHECK(replayed.to_json().dump() == a.report.to_json().dump());
    CHECK(replayed.to_text() == a.report.to_text());
}

TEST_CASE("threaded traces") {
    ScriptedRun r(2, 6);
    r.cfg.deterministic = false;
    const auto res = r.go();
    CHECK(res.report.iterations == 6);
    const auto state = replay(read_log(r.log_path));
    CHECK(state.iterations.size() == 6);
    CHECK(build_report(state).accepted == res.report.accepted);
}

TEST_CASE("budget extension during a run") {
    ScriptedRun r(1, 4);
    r.backend->add(OracleRole::BudgetDecision, 0, "extend");
    const auto res = r.go();
    CHECK(res.report.budget.total == Approx(5.0));
    CHECK(res.report.iterations == 5);
    int changes = 0;
    for (const auto& e : events_of(r.log_path)) changes += e.kind == EventKind::BudgetChange;
    CHECK(changes == 1);
}

TEST_CASE("periodic sync events") {
    ScriptedRun r(2, 4);
    r.cfg.merge_iterations = 1;
    const auto res = r.go();
    CHECK(res.report.sync_events == 2);
    CHECK(replay(read_log(r.log_path)).sync_events == 2);
}
