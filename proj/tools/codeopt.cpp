#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include "codeopt/config.hpp"
#include "codeopt/eventlog.hpp"
#include "codeopt/executor.hpp"
#include "codeopt/experiments.hpp"
#include "codeopt/mcts.hpp"
#include "codeopt/multitrace.hpp"
#include "codeopt/oracle.hpp"
#include "codeopt/util.hpp"

using namespace codeopt;

namespace {

struct RunArgs {
    std::string task_dir;
    std::string config;
    std::string oracle = "live";
    bool deterministic = false;
    std::string log = "events.jsonl";
    std::string out;
    std::optional<double> budget;
    std::optional<std::uint64_t> seed;
    // mcts only
    std::optional<double> c_puct;
    std::optional<int> expand_k;
    std::optional<int> max_depth;
    std::string reward;
};

std::shared_ptr<OracleBackend> make_backend(const std::string& spec, const RunConfig& cfg,
                                            const EmbeddingConfig& embed) {
    if (spec == "live") {
        auto live = LiveBackendConfig::from_env(CODEOPT_TEMPLATE_DIR);
        live.model = cfg.chat_model;
        live.temperature = cfg.temperature;
        live.embed = embed;
        return std::make_shared<LiveBackend>(live);
    }
    if (spec.rfind("scripted:", 0) == 0) return ScriptedBackend::from_file(spec.substr(9), embed);
    if (spec.rfind("synthetic:", 0) == 0) {
        SyntheticOracleParams p;
        try {
            p.fidelity = std::stod(spec.substr(10));
        } catch (const std::exception&) {
            throw Error(ErrorCode::ConfigError, "bad fidelity in '" + spec + "'");
        }
        p.rng_seed = cfg.seed + 1;
        p.check();
        return std::make_shared<SyntheticBackend>(p, embed);
    }
    throw Error(ErrorCode::ConfigError, "unknown oracle '" + spec + "' (live | scripted:<file> | synthetic:<p>)");
}

int run_engine(const RunArgs& a, bool tree) {
    RunConfig cfg = a.config.empty() ? RunConfig{} : load_run_config(a.config);
    if (a.deterministic) cfg.deterministic = true;
    if (a.budget) cfg.budget = *a.budget;
    if (a.seed) cfg.seed = *a.seed;
    if (a.c_puct) cfg.mcts.c_puct = *a.c_puct;
    if (a.expand_k) cfg.mcts.expand_k = *a.expand_k;
    if (a.max_depth) cfg.mcts.max_depth = *a.max_depth;
    if (!a.reward.empty()) cfg.mcts.reward = parse_reward_mode(a.reward);
    cfg.check();

    const Task task = load_task(a.task_dir);
    EmbeddingConfig embed;
    embed.dimension = cfg.embedding_dim;
    OracleClient oracle(make_backend(a.oracle, cfg, embed), cfg.retry, embed);

    Permits permits(cfg.running_semaphore, cfg.debugging_semaphore, cfg.feedback_semaphore);
    ExecutorConfig ecfg;
    ecfg.work_root = cfg.work_dir;
    Executor exec(ecfg, &permits);

    const std::string mode = tree ? "mcts" : "multitrace";
    EventLog log(a.log, run_log_meta(mode, task, cfg, oracle.backend().name()), cfg.deterministic);
    RunResult result;
    try {
        result = tree ? mcts_run(task, cfg, oracle, exec, log) : run(task, cfg, oracle, exec, log);
    } catch (...) {
        try {
            log.close();
        } catch (const Error&) {
        }
        throw;
    }
    log.close();
    if (!a.out.empty() && !result.best.code.empty()) write_file(a.out, result.best.code);
    std::cout << result.report.to_text();
    std::cout << "log: " << a.log << "\n";
    return 0;
}

void add_run_options(CLI::App* cmd, RunArgs& a) {
    cmd->add_option("task_dir", a.task_dir, "task bundle directory")->required();
    cmd->add_option("--config", a.config, "run config file")->check(CLI::ExistingFile);
    cmd->add_option("--oracle", a.oracle, "live | scripted:<fixture> | synthetic:<p>");
    cmd->add_flag("--deterministic", a.deterministic, "logical time, round-robin traces");
    cmd->add_option("--log", a.log, "event log path");
    cmd->add_option("--out", a.out, "write the selected solution here");
    cmd->add_option("--budget", a.budget, "override the configured budget");
    cmd->add_option("--seed", a.seed, "override the configured seed");
}

int print_report(const std::string& path, bool as_json) {
    const auto state = replay(read_log(path));
    const auto rep = build_report(state);
    if (as_json) {
        std::cout << rep.to_json().dump(2) << "\n";
    } else {
        std::cout << rep.to_text();
    }
    return 0;
}

int replay_log(const std::string& path, const std::string& tree_out) {
    const auto log = read_log(path);
    const auto state = replay(log);
    std::cout << "events " << log.events.size() << ", traces " << state.traces.size() << ", iterations "
              << state.iterations.size() << ", memory " << state.memory.size();
    if (state.tree) std::cout << ", tree nodes " << state.tree->size() << ", edges " << state.tree->edge_count();
    std::cout << "\n";
    for (const auto& t : state.traces) {
        std::cout << "  trace " << t.trace_id << ": " << t.history.size() << " iteration(s), " << t.n_succ
                  << " accepted, best " << (t.best_score ? format_double(*t.best_score) : std::string("none"))
                  << (t.best_solution.id.empty() ? "" : " (" + t.best_solution.id + ")") << "\n";
    }
    if (!tree_out.empty()) {
        if (!state.tree) throw Error(ErrorCode::DomainError, "log has no search tree");
        write_file(tree_out, state.tree->to_json().dump(2) + "\n");
    }
    return 0;
}

int compare(const std::vector<double>& fidelities, int seeds, const LabConfig& lab, const std::string& tsv,
            const std::string& dat) {
    const auto rep = run_crossover(fidelities, seeds, lab);
    const auto text = crossover_tsv(rep);
    std::cout << text;
    if (!tsv.empty()) write_file(tsv, text);
    if (!dat.empty()) write_file(dat, crossover_dat(rep));
    if (fidelities.size() >= 2) {
        const auto tt = trend_test(rep);
        std::cout << "trend: slope " << format_double(tt.slope) << " (one-sided p " << format_double(tt.slope_p_value)
                  << "), smallest adjacent-decrease p " << format_double(tt.min_decrease_p_value) << ": "
                  << (tt.passed() ? "non-decreasing" : "not established") << "\n";
    }
    return 0;
}

int lint(const std::string& dir, bool run_base) {
    LintOptions opts;
    opts.run_baseline = run_base;
    const auto rep = lint_bundle(dir, opts);
    for (const auto& e : rep.errors) std::cout << "error: " << e << "\n";
    for (const auto& w : rep.warnings) std::cout << "warning: " << w << "\n";
    if (rep.baseline_score) std::cout << "baseline score " << format_double(*rep.baseline_score) << "\n";
    std::cout << (rep.ok() ? "ok" : "failed") << "\n";
    return rep.ok() ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"codeopt: hypothesis-driven code optimisation engine"};
    app.require_subcommand(1);

    RunArgs run_args;
    auto* run_cmd = app.add_subcommand("run", "multi-trace optimisation run");
    add_run_options(run_cmd, run_args);

    RunArgs mcts_args;
    auto* mcts_cmd = app.add_subcommand("mcts", "tree-search optimisation run");
    add_run_options(mcts_cmd, mcts_args);
    mcts_cmd->add_option("--c-puct", mcts_args.c_puct, "exploration constant");
    mcts_cmd->add_option("--expand-k", mcts_args.expand_k, "children per expansion");
    mcts_cmd->add_option("--max-depth", mcts_args.max_depth, "tree depth cap");
    mcts_cmd->add_option("--reward", mcts_args.reward, "binary | score")
        ->check(CLI::IsMember({"binary", "score"}));

    std::vector<double> fidelities{0.2, 0.5, 0.9};
    int seeds = 20;
    LabConfig lab;
    std::string tsv, dat;
    auto* cmp_cmd = app.add_subcommand("compare", "synthetic gradient vs tree-search lab");
    cmp_cmd->add_option("--fidelities", fidelities, "oracle fidelity levels")->delimiter(',');
    cmp_cmd->add_option("--seeds", seeds, "seeds per level")->check(CLI::PositiveNumber);
    cmp_cmd->add_option("--budget", lab.eval_budget, "evaluations per strategy");
    cmp_cmd->add_option("--sigma0", lab.sigma0, "noise scale at fidelity 0");
    cmp_cmd->add_option("--base-seed", lab.base_seed, "seed for the whole grid");
    cmp_cmd->add_flag("--directed-mcts", lab.directed_mcts, "tree search uses directed proposals");
    cmp_cmd->add_option("--tsv", tsv, "also write the table here");
    cmp_cmd->add_option("--dat", dat, "write a gnuplot data file");

    std::string report_log;
    bool report_json = false;
    auto* rep_cmd = app.add_subcommand("report", "summarise an event log");
    rep_cmd->add_option("log", report_log, "event log")->required();
    rep_cmd->add_flag("--json", report_json, "machine-readable output");

    std::string replay_path, tree_out;
    auto* replay_cmd = app.add_subcommand("replay", "rebuild run state from an event log");
    replay_cmd->add_option("log", replay_path, "event log")->required();
    replay_cmd->add_option("--tree", tree_out, "write the search tree snapshot here");

    std::string lint_dir;
    bool lint_run = false;
    auto* lint_cmd = app.add_subcommand("lint", "check a task bundle");
    lint_cmd->add_option("bundle", lint_dir, "task bundle directory")->required();
    lint_cmd->add_flag("--run-baseline", lint_run, "also execute and grade the baseline");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (*run_cmd) return run_engine(run_args, false);
        if (*mcts_cmd) return run_engine(mcts_args, true);
        if (*cmp_cmd) {
            lab.check();
            return compare(fidelities, seeds, lab, tsv, dat);
        }
        if (*rep_cmd) return print_report(report_log, report_json);
        if (*replay_cmd) return replay_log(replay_path, tree_out);
        if (*lint_cmd) return lint(lint_dir, lint_run);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 5;
    }
    return 0;
}
