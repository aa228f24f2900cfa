#pragma once
// From-scratch binary random forest: CART-style trees, Gini impurity,
// midpoint thresholds, probability averaging.
//
// Determinism contract (tests replay it): tree t draws from the substream
// (seed, kTreeStreamTag, t). With bootstrap on, the tree first draws n
// sample indices, then node construction proceeds depth-first (left before
// right); a node that passes the depth/size/purity checks draws exactly one
// candidate-feature subset. Ties in impurity break toward the lowest
// feature index, then the lowest threshold. A split must improve Gini by
// more than kMinGiniGain to be accepted.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "trustspeech/errors.hpp"
#include "trustspeech/parallel.hpp"
#include "trustspeech/rng.hpp"

namespace trustspeech {

inline constexpr double kMinGiniGain = 1e-12;
inline constexpr std::uint64_t kTreeStreamTag = 0x7472656573ULL;  // "trees"

struct TrainConfig {
    int n_trees = 500;
    int max_depth = 20;
    int n_candidates = 0;  // 0 = floor(sqrt(feature count)), resolved at fit
    int min_samples_split = 2;
    bool bootstrap = true;
    std::uint64_t seed = 0;
};

// Flat node storage; feature == -1 marks a leaf.
struct TreeNode {
    int feature = -1;
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    std::array<double, 2> proportions{0.0, 0.0};  // [p_L, p_H] at leaves
};

using Tree = std::vector<TreeNode>;

struct Forest {
    std::vector<Tree> trees;
    TrainConfig config;
    std::vector<std::string> feature_names;
    std::size_t n_features = 0;
};

inline double gini(std::span<const std::size_t> counts) {
    std::size_t total = 0;
    for (std::size_t c : counts) total += c;
    if (total == 0) throw ArgumentError("gini: empty node");
    double acc = 0.0;
    for (std::size_t c : counts) {
        const double p = static_cast<double>(c) / static_cast<double>(total);
        acc += p * p;
    }
    return 1.0 - acc;
}

namespace detail {

struct BestSplit {
    double gain = 0.0;
    int feature = -1;
    double threshold = 0.0;
};

// Evaluates every midpoint between consecutive distinct values of one
// feature over the node's samples. Left child takes x <= threshold.
inline void consider_feature(const std::vector<std::vector<double>>& x,
                             const std::vector<int>& y, const std::vector<int>& node,
                             int feature, double parent_gini, BestSplit& best) {
    const std::size_t n = node.size();
    std::vector<std::pair<double, int>> vals(n);
    for (std::size_t i = 0; i < n; ++i)
        vals[i] = {x[static_cast<std::size_t>(node[i])][static_cast<std::size_t>(feature)],
                   y[static_cast<std::size_t>(node[i])]};
    std::sort(vals.begin(), vals.end());

    std::size_t left_counts[2] = {0, 0};
    std::size_t total_counts[2] = {0, 0};
    for (const auto& [v, label] : vals) total_counts[static_cast<std::size_t>(label)] += 1;

    const double n_d = static_cast<double>(n);
    for (std::size_t i = 0; i + 1 < n; ++i) {
        left_counts[static_cast<std::size_t>(vals[i].second)] += 1;
        const double a = vals[i].first, b = vals[i + 1].first;
        if (!(a < b)) continue;
        double thr = (a + b) / 2.0;
        if (!(thr < b)) thr = a;  // midpoint rounded up to b: fall back to a

        const double nl = static_cast<double>(i + 1);
        const double nr = n_d - nl;
        auto g = [](double c0, double c1) {
            const double t = c0 + c1;
            const double p0 = c0 / t, p1 = c1 / t;
            return 1.0 - (p0 * p0 + p1 * p1);
        };
        const double gl = g(static_cast<double>(left_counts[0]),
                            static_cast<double>(left_counts[1]));
        const double gr = g(static_cast<double>(total_counts[0] - left_counts[0]),
                            static_cast<double>(total_counts[1] - left_counts[1]));
        const double child = (nl * gl + nr * gr) / n_d;
        const double gain = parent_gini - child;
        if (gain <= kMinGiniGain) continue;
        const bool better =
            best.feature < 0 || gain > best.gain ||
            (gain == best.gain && (feature < best.feature ||
                                   (feature == best.feature && thr < best.threshold)));
        if (better) {
            best.gain = gain;
            best.feature = feature;
            best.threshold = thr;
        }
    }
}

inline int build_node(const std::vector<std::vector<double>>& x, const std::vector<int>& y,
                      std::vector<int>&& node, int depth, const TrainConfig& cfg,
                      int n_candidates, Rng& rng, Tree& tree) {
    std::size_t counts[2] = {0, 0};
    for (int i : node) counts[static_cast<std::size_t>(y[static_cast<std::size_t>(i)])] += 1;
    const std::size_t n = node.size();

    auto make_leaf = [&] {
        TreeNode leaf;
        leaf.proportions = {static_cast<double>(counts[0]) / static_cast<double>(n),
                            static_cast<double>(counts[1]) / static_cast<double>(n)};
        tree.push_back(leaf);
        return static_cast<int>(tree.size()) - 1;
    };

    if (depth >= cfg.max_depth || n < static_cast<std::size_t>(cfg.min_samples_split) ||
        counts[0] == 0 || counts[1] == 0)
        return make_leaf();

    const std::size_t n_features = x[0].size();
    const std::vector<std::size_t> candidates =
        rng.sample_without_replacement(n_features, static_cast<std::size_t>(n_candidates));

    const double parent =
        gini(std::span<const std::size_t>(counts, 2));
    BestSplit best;
    for (std::size_t f : candidates)
        consider_feature(x, y, node, static_cast<int>(f), parent, best);
    if (best.feature < 0) return make_leaf();

    std::vector<int> left, right;
    for (int i : node) {
        const double v =
            x[static_cast<std::size_t>(i)][static_cast<std::size_t>(best.feature)];
        (v <= best.threshold ? left : right).push_back(i);
    }
    node.clear();

    tree.push_back(TreeNode{best.feature, best.threshold, -1, -1, {}});
    const int self = static_cast<int>(tree.size()) - 1;
    const int l = build_node(x, y, std::move(left), depth + 1, cfg, n_candidates, rng, tree);
    const int r = build_node(x, y, std::move(right), depth + 1, cfg, n_candidates, rng, tree);
    tree[static_cast<std::size_t>(self)].left = l;
    tree[static_cast<std::size_t>(self)].right = r;
    return self;
}

inline void validate_training_data(const std::vector<std::vector<double>>& x,
                                   const std::vector<int>& y) {
    if (x.empty()) throw ArgumentError("train: empty dataset");
    if (x.size() != y.size()) throw ArgumentError("train: feature/label size mismatch");
    for (const auto& row : x)
        if (row.size() != x[0].size())
            throw ArgumentError("train: ragged feature matrix");
    for (int label : y)
        if (label != 0 && label != 1) throw ArgumentError("train: labels must be 0 or 1");
}

}  // namespace detail

inline int resolve_candidates(const TrainConfig& cfg, std::size_t n_features) {
    int k = cfg.n_candidates > 0
                ? cfg.n_candidates
                : static_cast<int>(std::floor(std::sqrt(static_cast<double>(n_features))));
    k = std::max(1, std::min(k, static_cast<int>(n_features)));
    return k;
}

inline Tree train_tree(const std::vector<std::vector<double>>& x, const std::vector<int>& y,
                       Rng& rng, const TrainConfig& cfg) {
    detail::validate_training_data(x, y);
    Tree tree;
    std::vector<int> all(x.size());
    std::iota(all.begin(), all.end(), 0);
    detail::build_node(x, y, std::move(all), 0, cfg, resolve_candidates(cfg, x[0].size()),
                       rng, tree);
    return tree;
}

inline Forest train_forest(const std::vector<std::vector<double>>& x,
                           const std::vector<int>& y, const TrainConfig& cfg,
                           std::vector<std::string> feature_names = {}) {
    detail::validate_training_data(x, y);
    if (cfg.n_trees < 1) throw ArgumentError("train_forest: n_trees must be >= 1");

    Forest forest;
    forest.config = cfg;
    forest.feature_names = std::move(feature_names);
    forest.n_features = x[0].size();
    forest.trees.resize(static_cast<std::size_t>(cfg.n_trees));

    const std::size_t n = x.size();
    parallel_for(static_cast<std::size_t>(cfg.n_trees), [&](std::size_t t) {
        Rng rng = Rng::substream(cfg.seed, {kTreeStreamTag, static_cast<std::uint64_t>(t)});
        if (cfg.bootstrap) {
            std::vector<std::vector<double>> bx;
            std::vector<int> by;
            bx.reserve(n);
            by.reserve(n);
            for (std::size_t i = 0; i < n; ++i) {
                const std::size_t pick = rng.uniform_index(n);
                bx.push_back(x[pick]);
                by.push_back(y[pick]);
            }
            forest.trees[t] = train_tree(bx, by, rng, cfg);
        } else {
            forest.trees[t] = train_tree(x, y, rng, cfg);
        }
    });
    return forest;
}

// Posterior for class H (label 1); the class-L posterior is its complement.
inline double predict_proba(const Forest& forest, std::span<const double> x) {
    if (x.size() != forest.n_features)
        throw ArgumentError("predict_proba: expected " + std::to_string(forest.n_features) +
                            " features, got " + std::to_string(x.size()));
    double acc = 0.0;
    for (const Tree& tree : forest.trees) {
        std::size_t node = 0;
        while (tree[node].feature >= 0) {
            const double v = x[static_cast<std::size_t>(tree[node].feature)];
            node = static_cast<std::size_t>(v <= tree[node].threshold ? tree[node].left
                                                                      : tree[node].right);
        }
        acc += tree[node].proportions[1];
    }
    return acc / static_cast<double>(forest.trees.size());
}

inline nlohmann::json forest_to_json(const Forest& forest) {
    nlohmann::json j;
    j["version"] = 1;
    j["config"] = {{"n_trees", forest.config.n_trees},
                   {"max_depth", forest.config.max_depth},
                   {"n_candidates", forest.config.n_candidates},
                   {"min_samples_split", forest.config.min_samples_split},
                   {"bootstrap", forest.config.bootstrap},
                   {"seed", forest.config.seed}};
    j["feature_names"] = forest.feature_names;
    j["n_features"] = forest.n_features;
    nlohmann::json trees = nlohmann::json::array();
    for (const Tree& tree : forest.trees) {
        nlohmann::json nodes = nlohmann::json::array();
        for (const TreeNode& n : tree)
            nodes.push_back({{"f", n.feature},
                             {"t", n.threshold},
                             {"l", n.left},
                             {"r", n.right},
                             {"p", n.proportions}});
        trees.push_back(std::move(nodes));
    }
    j["trees"] = std::move(trees);
    return j;
}

inline Forest forest_from_json(const nlohmann::json& j) {
    if (!j.contains("version") || j["version"].get<int>() != 1)
        throw SchemaError("forest: unsupported or missing version");
    Forest forest;
    const auto& c = j.at("config");
    forest.config.n_trees = c.at("n_trees").get<int>();
    forest.config.max_depth = c.at("max_depth").get<int>();
    forest.config.n_candidates = c.at("n_candidates").get<int>();
    forest.config.min_samples_split = c.at("min_samples_split").get<int>();
    forest.config.bootstrap = c.at("bootstrap").get<bool>();
    forest.config.seed = c.at("seed").get<std::uint64_t>();
    forest.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    forest.n_features = j.at("n_features").get<std::size_t>();
    for (const auto& nodes : j.at("trees")) {
        Tree tree;
        for (const auto& n : nodes) {
            TreeNode node;
            node.feature = n.at("f").get<int>();
            node.threshold = n.at("t").get<double>();
            node.left = n.at("l").get<int>();
            node.right = n.at("r").get<int>();
            node.proportions = n.at("p").get<std::array<double, 2>>();
            tree.push_back(node);
        }
        forest.trees.push_back(std::move(tree));
    }
    return forest;
}

}  // namespace trustspeech
