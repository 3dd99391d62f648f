#include "codeopt/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <boost/math/distributions/students_t.hpp>

#include "codeopt/eventlog.hpp"
#include "codeopt/tree.hpp"

namespace codeopt {

double improvement_rate(const std::vector<IterationRecord>& iterations) {
    if (iterations.empty()) throw Error(ErrorCode::EmptyLog, "log contains no iterations");
    const auto accepted = std::count_if(iterations.begin(), iterations.end(),
                                        [](const IterationRecord& r) { return r.decision; });
    return static_cast<double>(accepted) / static_cast<double>(iterations.size());
}

double improvement_rate(const LogFile& log) { return improvement_rate(replay(log).iterations); }

std::vector<double> average_ranks(std::span<const double> xs) {
    std::vector<std::size_t> order(xs.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
    std::vector<double> ranks(xs.size());
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && xs[order[j + 1]] == xs[order[i]]) ++j;
        const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

std::optional<double> spearman_ic(std::span<const double> val_deltas, std::span<const double> test_deltas) {
    if (val_deltas.size() != test_deltas.size()) {
        throw Error(ErrorCode::LengthMismatch, "series lengths differ: " + std::to_string(val_deltas.size()) +
                                                   " vs " + std::to_string(test_deltas.size()));
    }
    if (val_deltas.size() < 2) throw Error(ErrorCode::DomainError, "need at least two pairs");
    const auto a = average_ranks(val_deltas);
    const auto b = average_ranks(test_deltas);
    const double ma = mean_of(a);
    const double mb = mean_of(b);
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (saa == 0.0 || sbb == 0.0) return std::nullopt;
    return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

// ---------------------------------------------------------------------------
// Landscape

SyntheticLandscape::SyntheticLandscape(LandscapeConfig cfg, Rng& rng) : cfg_(cfg) {
    if (cfg_.dimension < 1 || cfg_.arity < 2) throw Error(ErrorCode::DomainError, "landscape too small");
    target_ = random_state(rng);
}

SyntheticLandscape::SyntheticLandscape(LandscapeConfig cfg, LabState target)
    : cfg_(cfg), target_(std::move(target)) {
    if (static_cast<int>(target_.size()) != cfg_.dimension) {
        throw Error(ErrorCode::DomainError, "target has the wrong dimension");
    }
}

int SyntheticLandscape::l1(const LabState& s) const {
    int d = 0;
    for (std::size_t i = 0; i < target_.size(); ++i) d += std::abs(s[i] - target_[i]);
    return d;
}

double SyntheticLandscape::score(const LabState& s) const { return -static_cast<double>(l1(s)); }

LabState SyntheticLandscape::random_state(Rng& rng) const {
    LabState s(static_cast<std::size_t>(cfg_.dimension));
    for (auto& v : s) v = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(cfg_.arity)));
    return s;
}

LabState SyntheticLandscape::directed_move(const LabState& s, double p, Rng& rng) const {
    std::vector<std::pair<std::size_t, int>> good, bad;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] != target_[i]) good.emplace_back(i, target_[i] > s[i] ? 1 : -1);
        for (int step : {-1, 1}) {
            const int n = s[i] + step;
            if (n >= 0 && n < cfg_.arity && std::abs(n - target_[i]) > std::abs(s[i] - target_[i])) {
                bad.emplace_back(i, step);
            }
        }
    }
    LabState out = s;
    if (rng.bernoulli(p)) {
        if (good.empty()) return out;
        const auto [i, step] = good[rng.uniform_index(good.size())];
        out[i] += step;
    } else {
        const auto [i, step] = bad[rng.uniform_index(bad.size())];
        out[i] += step;
    }
    return out;
}

LabState SyntheticLandscape::random_move(const LabState& s, Rng& rng) const {
    LabState out = s;
    for (;;) {
        const auto i = rng.uniform_index(out.size());
        const int step = rng.bernoulli(0.5) ? 1 : -1;
        if (out[i] + step >= 0 && out[i] + step < cfg_.arity) {
            out[i] += step;
            return out;
        }
    }
}

void LabConfig::check() const {
    if (eval_budget < 1) throw Error(ErrorCode::ConfigError, "eval_budget must be positive");
    if (sigma0 < 0) throw Error(ErrorCode::ConfigError, "sigma0 must be non-negative");
    if (expand_k < 1 || max_depth < 1 || c_puct < 0) throw Error(ErrorCode::ConfigError, "bad tree settings");
    if (landscape.dimension < 1 || landscape.arity < 2) throw Error(ErrorCode::ConfigError, "landscape too small");
}

namespace {

double observe(const SyntheticLandscape& land, const LabState& s, double sigma, Rng& rng) {
    const double truth = land.score(s);
    return sigma > 0 ? truth + rng.normal(0.0, sigma) : truth;
}

}  // namespace

StrategyResult run_gradient(const SyntheticLandscape& land, const LabState& start, double p,
                            const LabConfig& cfg, Rng& rng) {
    const double sigma = cfg.sigma0 * (1.0 - p);
    LabState cur = start;
    double cur_obs = observe(land, cur, sigma, rng);
    int evals = 1;
    while (evals < cfg.eval_budget) {
        LabState cand = land.directed_move(cur, p, rng);
        const double o = observe(land, cand, sigma, rng);
        ++evals;
        if (o - cur_obs > 0) {
            cur = std::move(cand);
            cur_obs = o;
        }
    }
    return StrategyResult{land.score(cur), evals, cur};
}

StrategyResult run_tree_search(const SyntheticLandscape& land, const LabState& start, double p,
                               const LabConfig& cfg, Rng& rng) {
    const double sigma = cfg.sigma0 * (1.0 - p);
    const double scale = static_cast<double>(land.config().dimension);
    SearchTree tree(cfg.max_depth);
    std::vector<LabState> states{start};
    tree.add_root("0");
    const double root_obs = observe(land, start, sigma, rng);
    tree.set_evaluation(0, root_obs, true, 0.0);
    tree.backprop({0}, 0.0);
    int evals = 1;
    double best_obs = root_obs;
    int best_node = 0;

    while (evals < cfg.eval_budget) {
        const auto path = tree.select_path(cfg.c_puct);
        const int leaf = path.back();
        if (!tree.can_expand(leaf)) {
            tree.backprop(path, tree.node(leaf).reward);
            ++evals;
            continue;
        }
        for (int j = 0; j < cfg.expand_k && evals < cfg.eval_budget; ++j) {
            const auto& base = states[static_cast<std::size_t>(leaf)];
            LabState s = cfg.directed_mcts ? land.directed_move(base, p, rng) : land.random_move(base, rng);
            const double o = observe(land, s, sigma, rng);
            ++evals;
            const double r = std::tanh((o - root_obs) / scale);
            const int id = tree.add_child(leaf, std::to_string(states.size()), {});
            states.push_back(std::move(s));
            tree.set_evaluation(id, o, true, r);
            auto child_path = path;
            child_path.push_back(id);
            tree.backprop(child_path, r);
            if (o > best_obs) {
                best_obs = o;
                best_node = id;
            }
        }
    }
    const auto& best = states[static_cast<std::size_t>(best_node)];
    return StrategyResult{land.score(best), evals, best};
}

std::uint64_t lab_seed(std::uint64_t base, std::size_t level, std::size_t index) {
    return splitmix64(base ^ (static_cast<std::uint64_t>(level) << 32) ^ static_cast<std::uint64_t>(index));
}

CrossoverReport run_crossover(const std::vector<double>& fidelities, int seeds_per_level, const LabConfig& cfg) {
    cfg.check();
    if (seeds_per_level < 1) throw Error(ErrorCode::ConfigError, "seeds_per_level must be positive");
    CrossoverReport rep;
    rep.seeds_per_level = seeds_per_level;
    rep.config = cfg;
    for (std::size_t level = 0; level < fidelities.size(); ++level) {
        const double p = fidelities[level];
        if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorCode::ConfigError, "fidelity must lie in [0, 1]");
        LevelStats ls;
        ls.fidelity = p;
        for (int i = 0; i < seeds_per_level; ++i) {
            const auto seed = lab_seed(cfg.base_seed, level, static_cast<std::size_t>(i));
            Rng setup(seed);
            const SyntheticLandscape land(cfg.landscape, setup);
            const LabState start = land.random_state(setup);
            Rng g_rng(splitmix64(seed ^ 0x6772));
            Rng m_rng(splitmix64(seed ^ 0x6d63));
            const auto g = run_gradient(land, start, p, cfg, g_rng);
            const auto m = run_tree_search(land, start, p, cfg, m_rng);
            ls.seeds.push_back(seed);
            ls.gradient.push_back(g.final_score);
            ls.mcts.push_back(m.final_score);
            ls.gap.push_back(g.final_score - m.final_score);
            ls.gradient_evals.push_back(g.evaluations);
            ls.mcts_evals.push_back(m.evaluations);
        }
        rep.levels.push_back(std::move(ls));
    }
    return rep;
}

double mean_of(std::span<const double> xs) {
    if (xs.empty()) return 0.0;
    return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double stddev_of(std::span<const double> xs) {
    if (xs.size() < 2) return 0.0;
    const double m = mean_of(xs);
    double ss = 0;
    for (double x : xs) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

TrendTest trend_test(const CrossoverReport& report, double alpha) {
    namespace bm = boost::math;
    TrendTest t;
    std::vector<double> xs, ys;
    for (const auto& l : report.levels) {
        for (double g : l.gap) {
            xs.push_back(l.fidelity);
            ys.push_back(g);
        }
    }
    const std::size_t n = xs.size();
    if (report.levels.size() < 2 || n < 3) return t;

    const double mx = mean_of(xs);
    const double my = mean_of(ys);
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
    }
    t.slope = sxy / sxx;
    const double intercept = my - t.slope * mx;
    double sse = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double e = ys[i] - (intercept + t.slope * xs[i]);
        sse += e * e;
    }
    const double dof = static_cast<double>(n - 2);
    const double se = std::sqrt(sse / dof / sxx);
    if (se == 0.0) {
        t.slope_p_value = t.slope > 0 ? 0.0 : 1.0;
    } else {
        t.slope_p_value = bm::cdf(bm::complement(bm::students_t(dof), t.slope / se));
    }
    t.increasing = t.slope > 0 && t.slope_p_value < alpha;

    t.min_decrease_p_value = 1.0;
    for (std::size_t i = 0; i + 1 < report.levels.size(); ++i) {
        const auto& a = report.levels[i].gap;
        const auto& b = report.levels[i + 1].gap;
        const double va = std::pow(stddev_of(a), 2) / static_cast<double>(a.size());
        const double vb = std::pow(stddev_of(b), 2) / static_cast<double>(b.size());
        const double diff = mean_of(a) - mean_of(b);  // positive when level i+1 is lower
        double p = 1.0;
        if (va + vb == 0.0) {
            p = diff > 0 ? 0.0 : 1.0;
        } else {
            const double welch_dof = std::pow(va + vb, 2) /
                                     (va * va / static_cast<double>(a.size() - 1) +
                                      vb * vb / static_cast<double>(b.size() - 1));
            p = bm::cdf(bm::complement(bm::students_t(welch_dof), diff / std::sqrt(va + vb)));
        }
        t.min_decrease_p_value = std::min(t.min_decrease_p_value, p);
    }
    t.no_significant_decrease = t.min_decrease_p_value >= alpha;
    return t;
}

namespace {

std::string fixed(double v, int digits = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

}  // namespace

std::string crossover_tsv(const CrossoverReport& report) {
    std::ostringstream out;
    out << "fidelity\tseeds\tgradient_mean\tgradient_std\tmcts_mean\tmcts_std\tgap_mean\tgap_std\n";
    for (const auto& l : report.levels) {
        out << fixed(l.fidelity, 3) << '\t' << l.gap.size() << '\t' << fixed(mean_of(l.gradient)) << '\t'
            << fixed(stddev_of(l.gradient)) << '\t' << fixed(mean_of(l.mcts)) << '\t' << fixed(stddev_of(l.mcts))
            << '\t' << fixed(mean_of(l.gap)) << '\t' << fixed(stddev_of(l.gap)) << '\n';
    }
    return out.str();
}

std::string crossover_dat(const CrossoverReport& report) {
    std::ostringstream out;
    out << "# fidelity gradient_mean gradient_std mcts_mean mcts_std gap_mean gap_std\n";
    for (const auto& l : report.levels) {
        out << fixed(l.fidelity, 3) << ' ' << fixed(mean_of(l.gradient)) << ' ' << fixed(stddev_of(l.gradient))
            << ' ' << fixed(mean_of(l.mcts)) << ' ' << fixed(stddev_of(l.mcts)) << ' ' << fixed(mean_of(l.gap))
            << ' ' << fixed(stddev_of(l.gap)) << '\n';
    }
    return out.str();
}

}  // namespace codeopt
