#include "codeopt/tree.hpp"

#include <algorithm>
#include <cmath>

#include "codeopt/serialize.hpp"

namespace codeopt {

double puct_score(double q, double n_parent, double n_edge, double c_puct) {
    if (n_parent < 0 || n_edge < 0 || c_puct < 0) {
        throw Error(ErrorCode::DomainError, "puct inputs must be non-negative");
    }
    return q + c_puct * std::sqrt(n_parent) / (1.0 + n_edge);
}

double reward(bool validated, MaybeScore v, Direction direction, RewardMode mode) {
    if (mode == RewardMode::Binary) return validated ? 1.0 : 0.0;
    if (!validated) return -1.0;
    if (!v || !std::isfinite(*v)) throw Error(ErrorCode::DomainError, "validated reward needs a finite score");
    return direction == Direction::HigherBetter ? std::tanh(*v) : -std::tanh(*v);
}

int SearchTree::add_root(std::string solution_id, std::string hypothesis) {
    if (!nodes_.empty()) throw Error(ErrorCode::InvariantBreach, "tree already has a root");
    TreeNode n;
    n.id = 0;
    n.solution_id = std::move(solution_id);
    n.hypothesis = std::move(hypothesis);
    nodes_.push_back(std::move(n));
    return 0;
}

int SearchTree::add_child(int parent, std::string solution_id, std::string hypothesis) {
    auto& p = mut(parent);
    if (p.depth >= max_depth_) {
        throw Error(ErrorCode::ExpansionRefused,
                    "node " + std::to_string(parent) + " is at max depth " + std::to_string(max_depth_));
    }
    TreeNode n;
    n.id = static_cast<int>(nodes_.size());
    n.solution_id = std::move(solution_id);
    n.parent = parent;
    n.depth = p.depth + 1;
    n.hypothesis = std::move(hypothesis);
    p.children.push_back(EdgeStats{n.id, 0.0, 0});
    nodes_.push_back(std::move(n));
    return nodes_.back().id;
}

void SearchTree::set_evaluation(int node, MaybeScore score, bool validated, double r) {
    auto& n = mut(node);
    n.evaluated = true;
    n.score = score;
    n.validated = validated;
    n.reward = r;
}

const EdgeStats& SearchTree::select_child(int node, double c_puct) const {
    const auto& n = this->node(node);
    if (n.children.empty()) throw Error(ErrorCode::LeafNode, "node " + std::to_string(node) + " has no children");
    const EdgeStats* best = nullptr;
    double best_u = 0.0;
    for (const auto& e : n.children) {
        const double u = puct_score(e.q, n.visits, e.n, c_puct);
        if (best == nullptr || u > best_u || (u == best_u && e.child < best->child)) {
            best = &e;
            best_u = u;
        }
    }
    return *best;
}

std::vector<int> SearchTree::select_path(double c_puct) const {
    if (nodes_.empty()) throw Error(ErrorCode::InvariantBreach, "tree has no root");
    std::vector<int> path{0};
    while (!nodes_[path.back()].children.empty()) path.push_back(select_child(path.back(), c_puct).child);
    return path;
}

void SearchTree::backprop(const std::vector<int>& path, double r) {
    if (path.empty()) throw Error(ErrorCode::DomainError, "empty backprop path");
    if (path.front() != 0) throw Error(ErrorCode::InvariantBreach, "backprop path must start at the root");
    std::vector<EdgeStats*> edges;
    for (std::size_t i = 0; i + 1 < path.size(); ++i) {
        auto& parent = mut(path[i]);
        auto it = std::find_if(parent.children.begin(), parent.children.end(),
                               [&](const EdgeStats& e) { return e.child == path[i + 1]; });
        if (it == parent.children.end()) throw Error(ErrorCode::InvariantBreach, "backprop path is not connected");
        edges.push_back(&*it);
    }
    for (auto* e : edges) {
        e->q = (e->n * e->q + r) / (e->n + 1);
        e->n += 1;
    }
    for (int id : path) mut(id).visits += 1;
    mut(path.back()).evaluations += 1;
}

const TreeNode& SearchTree::node(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size()) {
        throw Error(ErrorCode::DomainError, "no tree node " + std::to_string(id));
    }
    return nodes_[static_cast<std::size_t>(id)];
}

TreeNode& SearchTree::mut(int id) { return const_cast<TreeNode&>(node(id)); }

std::size_t SearchTree::edge_count() const {
    std::size_t n = 0;
    for (const auto& node : nodes_) n += node.children.size();
    return n;
}

bool SearchTree::can_expand(int node) const { return this->node(node).depth < max_depth_; }

nlohmann::json node_to_json(const TreeNode& n) {
    nlohmann::json edges = nlohmann::json::array();
    for (const auto& e : n.children) edges.push_back({{"child", e.child}, {"q", e.q}, {"n", e.n}});
    return {{"id", n.id},
            {"solution_id", n.solution_id},
            {"parent", n.parent ? nlohmann::json(*n.parent) : nlohmann::json(nullptr)},
            {"depth", n.depth},
            {"visits", n.visits},
            {"evaluations", n.evaluations},
            {"evaluated", n.evaluated},
            {"score", score_to_json(n.score)},
            {"validated", n.validated},
            {"reward", n.reward},
            {"hypothesis", n.hypothesis},
            {"edges", edges}};
}

nlohmann::json SearchTree::to_json() const {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& n : nodes_) nodes.push_back(node_to_json(n));
    return {{"max_depth", max_depth_}, {"nodes", nodes}};
}

}  // namespace codeopt
