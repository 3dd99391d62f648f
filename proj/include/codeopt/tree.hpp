#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "codeopt/config.hpp"
#include "codeopt/core.hpp"

namespace codeopt {

/// Q + c * sqrt(N_parent) / (1 + N_edge), uniform prior.
double puct_score(double q, double n_parent, double n_edge, double c_puct);

/// Binary: 1 / 0. Score: +tanh(v) or -tanh(v) by direction, -1 when rejected.
double reward(bool validated, MaybeScore v, Direction direction, RewardMode mode);

struct EdgeStats {
    int child = 0;
    double q = 0.0;
    int n = 0;
};

struct TreeNode {
    int id = 0;
    std::string solution_id;
    std::optional<int> parent;
    std::vector<EdgeStats> children;
    // Completed simulations through this node: edge visits plus the times its
    // own evaluation was backed up.
    int visits = 0;
    int evaluations = 0;
    int depth = 0;
    bool evaluated = false;
    MaybeScore score;
    bool validated = false;
    double reward = 0.0;
    std::string hypothesis;
};

class SearchTree {
public:
    explicit SearchTree(int max_depth = 10) : max_depth_(max_depth) {}

    int add_root(std::string solution_id, std::string hypothesis = {});
    /// Throws ExpansionRefused when `parent` is already at max depth.
    int add_child(int parent, std::string solution_id, std::string hypothesis);
    void set_evaluation(int node, MaybeScore score, bool validated, double reward);

    /// Argmax of puct_score over the node's edges; ties go to the lowest child
    /// id. Throws LeafNode when the node has no children.
    [[nodiscard]] const EdgeStats& select_child(int node, double c_puct) const;
    /// Node ids from the root down to the first node without children.
    [[nodiscard]] std::vector<int> select_path(double c_puct) const;

    /// `path` is a list of node ids starting at the root. Every edge along it
    /// is averaged with `r`, and every node on it gains one visit.
    void backprop(const std::vector<int>& path, double r);

    [[nodiscard]] const TreeNode& node(int id) const;
    [[nodiscard]] const std::vector<TreeNode>& nodes() const { return nodes_; }
    [[nodiscard]] std::size_t size() const { return nodes_.size(); }
    [[nodiscard]] std::size_t edge_count() const;
    [[nodiscard]] int max_depth() const { return max_depth_; }
    [[nodiscard]] bool can_expand(int node) const;

    [[nodiscard]] nlohmann::json to_json() const;

private:
    TreeNode& mut(int id);

    int max_depth_;
    std::vector<TreeNode> nodes_;
};

nlohmann::json node_to_json(const TreeNode& n);

}  // namespace codeopt
