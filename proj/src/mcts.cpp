#include "codeopt/mcts.hpp"

#include <map>

#include "codeopt/serialize.hpp"
#include "engine_common.hpp"

namespace codeopt {

using nlohmann::json;

bool meets_threshold(double score, double threshold, Direction direction) {
    return direction == Direction::HigherBetter ? score >= threshold : score <= threshold;
}

namespace {

struct NodeData {
    Solution solution;
    std::optional<IterationRecord> record;
};

class TreeEngine {
public:
    TreeEngine(const Task& task, const RunConfig& cfg, OracleClient& oracle, Executor& exec, EventLog& log)
        : task_(task), cfg_(cfg), oracle_(oracle), exec_(exec), log_(log), tree_(cfg.mcts.max_depth) {}

    RunResult run();

private:
    void make_root();
    // Context for reasoning prompts: the node's own solution as "best", the
    // records along its path as history.
    TraceState path_state(const std::vector<int>& path) const;
    // Returns true when the early-stop threshold was met.
    bool expand(const std::vector<int>& path);
    void emit_tree(const json& node, const std::vector<int>& path, double r);

    const Task& task_;
    const RunConfig& cfg_;
    OracleClient& oracle_;
    Executor& exec_;
    EventLog& log_;

    RunState rs_;
    SearchTree tree_;
    Budget budget_;
    std::map<int, NodeData> data_;
    TimeoutState dev_;
    TimeoutState full_;
    int iteration_ = 0;
};

void TreeEngine::emit_tree(const json& node, const std::vector<int>& path, double r) {
    log_.emit(1, EventKind::TreeUpdate, {{"node", node}, {"path", path}, {"reward", r}});
}

void TreeEngine::make_root() {
    const auto baseline = detail::run_baseline(task_, exec_, cfg_);
    json tree_j{{"max_depth", tree_.max_depth()}};
    log_.emit(0, EventKind::Init, detail::run_init_payload(rs_.mode, task_, 1, budget_, baseline, tree_j));
    auto& trace = rs_.traces.front();

    NodeData root;
    MaybeScore score;
    bool validated = false;
    std::string hyp_text;
    if (baseline) {
        root.solution = baseline->solution;
        score = baseline->score;
        validated = score.has_value();
        trace.best_solution = baseline->solution;
        trace.best_score = baseline->score;
        rs_.best_holdout.front() = baseline->holdout;
        hyp_text = "baseline";
    } else {
        const auto hyps = init_diversified(task_, 1, oracle_, false);
        const Solution empty;
        detail::Candidate c;
        c.hypothesis = &hyps.front();
        c.base = &empty;
        c.trace = 1;
        c.solution_id = "m0";
        c.seed = detail::exec_seed(cfg_, 1, 0);
        c.format_only = true;
        const auto ev = detail::evaluate(c, task_, cfg_, oracle_, exec_, dev_, full_, exec_.permits());
        json gates = json::array();
        for (const auto& g : ev.gates) gates.push_back(gate_to_json(g));
        log_.emit(1, EventKind::Init,
                  {{"hypothesis", ev.record.hypothesis},
                   {"solution", ev.solution.id.empty() ? json(nullptr) : json(ev.solution)},
                   {"perf", ev.record.feedback.perf},
                   {"trace", ev.record.feedback.trace},
                   {"holdout", score_to_json(ev.holdout)},
                   {"gates", gates},
                   {"accepted", ev.record.decision},
                   {"implementation_failed",
                    ev.implementation_failure ? json(*ev.implementation_failure) : json(nullptr)}});
        root.solution = ev.solution;
        score = ev.record.feedback.perf.current;
        validated = ev.record.decision && score.has_value();
        if (validated) {
            trace.best_solution = ev.solution;
            trace.best_score = score;
            rs_.best_holdout.front() = ev.holdout;
        }
        hyp_text = hyps.front().text;
    }
    const double r = reward(validated, validated ? score : MaybeScore{}, task_.direction, cfg_.mcts.reward);
    const int id = tree_.add_root(root.solution.id, hyp_text);
    tree_.set_evaluation(id, score, validated, r);
    tree_.backprop({id}, r);
    data_[id] = std::move(root);
    emit_tree(node_to_json(tree_.node(id)), {id}, r);
}

TraceState TreeEngine::path_state(const std::vector<int>& path) const {
    TraceState st;
    st.trace_id = 1;
    const auto& leaf = tree_.node(path.back());
    st.best_solution = data_.at(leaf.id).solution;
    st.best_score = leaf.score;
    for (int id : path) {
        const auto& d = data_.at(id);
        if (!d.record) continue;
        st.history.push_back(*d.record);
        if (d.record->decision) {
            ++st.n_succ;
        } else {
            ++st.n_fail;
        }
    }
    return st;
}

bool TreeEngine::expand(const std::vector<int>& path) {
    const int parent = path.back();
    const TraceState st = path_state(path);
    const MaybeScore parent_score = tree_.node(parent).score;
    std::vector<std::string> warnings;
    const auto challenges = extract_challenges(3, st, task_, oracle_, cfg_.reasoning);

    std::vector<std::string> taken;
    for (const auto& child : tree_.node(parent).children) taken.push_back(tree_.node(child.child).hypothesis);
    auto& trace = rs_.traces.front();

    for (int j = 0; j < cfg_.mcts.expand_k; ++j) {
        if (budget_.exhausted()) break;
        budget_.consumed += 1;
        ++iteration_;
        const int t = iteration_;
        const std::string tag = "m" + std::to_string(t);
        std::vector<std::string> child_warnings = warnings;

        detail::Evaluation ev;
        std::optional<Hypothesis> hyp;
        if (challenges.empty()) {
            child_warnings.emplace_back("no challenges to build on");
        } else {
            try {
                hyp = generate_hypothesis(challenges[static_cast<std::size_t>(j) % challenges.size()],
                                          st.best_solution, st, task_, oracle_, cfg_.reasoning, taken, "h" + tag,
                                          child_warnings);
                taken.push_back(hyp->text);
            } catch (const Error& e) {
                if (e.code() != ErrorCode::DuplicateHypothesis) throw;
                child_warnings.emplace_back(e.what());
            }
        }
        if (hyp) {
            detail::Candidate c;
            c.hypothesis = &*hyp;
            c.base = &data_.at(parent).solution;
            c.reference_score = parent_score;
            c.trace = 1;
            c.iteration = t;
            c.solution_id = tag;
            c.created_at = static_cast<std::uint64_t>(t);
            c.seed = detail::exec_seed(cfg_, 1, t);
            ev = detail::evaluate(c, task_, cfg_, oracle_, exec_, dev_, full_, exec_.permits());
        } else {
            Hypothesis none;
            none.id = "h" + tag;
            ev = detail::failed_evaluation(1, t, none, parent_score, "no hypothesis generated");
        }

        const MaybeScore score = ev.record.feedback.perf.current;
        const bool validated = ev.record.decision && score.has_value();
        const double r = reward(validated, validated ? score : MaybeScore{}, task_.direction, cfg_.mcts.reward);

        detail::emit_iteration(log_, ev, 3, json::array(), child_warnings);
        const std::string before = trace.best_solution.id;
        const MaybeScore before_score = trace.best_score;
        trace.apply(ev.record, ev.solution, task_.direction);
        rs_.iterations.push_back(ev.record);
        rs_.holdout.emplace_back(ev.holdout, rs_.best_holdout.front());
        if (trace.best_solution.id != before || trace.best_score != before_score) rs_.best_holdout.front() = ev.holdout;

        const int id = tree_.add_child(parent, ev.solution.id.empty() ? tag : ev.solution.id, ev.record.hypothesis.text);
        tree_.set_evaluation(id, score, validated, r);
        auto child_path = path;
        child_path.push_back(id);
        tree_.backprop(child_path, r);
        data_[id] = NodeData{ev.solution, ev.record};
        emit_tree(node_to_json(tree_.node(id)), child_path, r);

        if (validated && cfg_.mcts.early_stop && meets_threshold(*score, *cfg_.mcts.early_stop, task_.direction)) {
            return true;
        }
    }
    return false;
}

RunResult TreeEngine::run() {
    cfg_.check();
    budget_ = cfg_.initial_budget();
    if (budget_.mode != BudgetMode::IterationCount) {
        throw Error(ErrorCode::ConfigError, "tree search supports budget_mode = iterations only");
    }
    rs_.mode = "mcts";
    rs_.task_id = task_.id;
    rs_.direction = task_.direction;
    rs_.traces.emplace_back();
    rs_.traces.front().trace_id = 1;
    rs_.best_holdout.emplace_back();
    dev_ = detail::dev_timeout(cfg_);
    full_ = detail::full_timeout(cfg_);

    make_root();
    bool stop = false;
    while (!stop && !budget_.exhausted()) {
        const auto path = tree_.select_path(cfg_.mcts.c_puct);
        const int leaf = path.back();
        if (!tree_.can_expand(leaf)) {
            budget_.consumed += 1;
            const double r = tree_.node(leaf).reward;
            tree_.backprop(path, r);
            emit_tree(nullptr, path, r);
            continue;
        }
        stop = expand(path);
    }

    RunResult result;
    result.best = rs_.traces.front().best_solution;
    rs_.budget = budget_;
    rs_.tree = tree_;
    log_.emit(0, EventKind::Final,
              {{"selection", nullptr},
               {"budget", budget_},
               {"best_solution", result.best.id.empty() ? json(nullptr) : json(result.best)}});
    result.state = rs_;
    result.report = build_report(rs_);
    return result;
}

}  // namespace

RunResult mcts_run(const Task& task, const RunConfig& cfg, OracleClient& oracle, Executor& executor, EventLog& log) {
    TreeEngine engine(task, cfg, oracle, executor, log);
    return engine.run();
}

}  // namespace codeopt
