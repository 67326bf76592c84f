#include "agbmap/regression_tree.hpp"

#include "agbmap/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <numeric>

namespace agbmap {
namespace {

struct Split {
    int feature = -1;
    double threshold = 0.0;
    double gain = 0.0;
};

struct WorkItem {
    int node;
    std::vector<std::size_t> rows;
    int depth;
};

double mean_over(std::span<const double> y, const std::vector<std::size_t>& rows)
{
    double s = 0.0;
    for (auto r : rows) {
        s += y[r];
    }
    return s / static_cast<double>(rows.size());
}

Split best_split(const FeatureMatrix& X, std::span<const double> y, const std::vector<std::size_t>& rows,
                 std::span<const std::size_t> features, int min_leaf)
{
    const std::size_t n = rows.size();
    double total = 0.0;
    double lo = y[rows[0]];
    double hi = lo;
    for (auto r : rows) {
        total += y[r];
        lo = std::min(lo, y[r]);
        hi = std::max(hi, y[r]);
    }
    Split best;
    if (hi == lo) {
        return best;
    }
    const double mean = total / static_cast<double>(n);
    double sst = 0.0;
    for (auto r : rows) {
        sst += (y[r] - mean) * (y[r] - mean);
    }
    const double base = total * total / static_cast<double>(n);
    const double min_gain = 1e-10 * sst;

    std::vector<std::pair<double, double>> pairs(n);
    for (auto f : features) {
        for (std::size_t i = 0; i < n; ++i) {
            pairs[i] = {X.at(rows[i], f), y[rows[i]]};
        }
        std::sort(pairs.begin(), pairs.end(),
                  [](const auto& a, const auto& b) { return a.first < b.first; });
        double left_sum = 0.0;
        for (std::size_t i = 0; i + 1 < n; ++i) {
            left_sum += pairs[i].second;
            const auto n_left = i + 1;
            const auto n_right = n - n_left;
            if (pairs[i].first == pairs[i + 1].first) {
                continue;
            }
            if (n_left < static_cast<std::size_t>(min_leaf) || n_right < static_cast<std::size_t>(min_leaf)) {
                continue;
            }
            const double right_sum = total - left_sum;
            const double score = left_sum * left_sum / static_cast<double>(n_left)
                                 + right_sum * right_sum / static_cast<double>(n_right);
            const double gain = score - base;
            if (gain > min_gain && gain > best.gain) {
                const double a = pairs[i].first;
                const double b = pairs[i + 1].first;
                double t = a + (b - a) / 2.0;
                if (!(t < b)) {
                    t = a;
                }
                best = {static_cast<int>(f), t, gain};
            }
        }
    }
    return best;
}

} // namespace

RegressionTree RegressionTree::fit(const FeatureMatrix& X, std::span<const double> y,
                                   std::span<const std::size_t> sample, const Params& params, Engine& rng,
                                   std::span<const std::size_t> leaf_rows)
{
    if (sample.empty()) {
        throw InvalidArgument("regression tree: empty sample");
    }
    if (y.size() != X.rows()) {
        throw InvalidArgument("regression tree: response length differs from row count");
    }
    const int min_leaf = std::max(1, params.min_samples_leaf);
    const std::size_t p = X.cols();
    const std::size_t n_try = (params.max_features == 0 || params.max_features >= p) ? p : params.max_features;
    std::vector<std::size_t> feature_pool(p);
    std::iota(feature_pool.begin(), feature_pool.end(), std::size_t{0});

    RegressionTree tree;
    tree.nodes_.push_back({});
    std::vector<WorkItem> stack;
    stack.push_back({0, std::vector<std::size_t>(sample.begin(), sample.end()), 0});

    while (!stack.empty()) {
        WorkItem item = std::move(stack.back());
        stack.pop_back();
        tree.nodes_[static_cast<std::size_t>(item.node)].value = mean_over(y, item.rows);

        const bool depth_left = params.max_depth < 0 || item.depth < params.max_depth;
        if (!depth_left || item.rows.size() < 2 * static_cast<std::size_t>(min_leaf)) {
            continue;
        }
        if (n_try < p) {
            // Partial Fisher-Yates: the first n_try entries become the candidate set.
            for (std::size_t k = 0; k < n_try; ++k) {
                std::uniform_int_distribution<std::size_t> pick(k, p - 1);
                std::swap(feature_pool[k], feature_pool[pick(rng)]);
            }
        }
        const auto split = best_split(X, y, item.rows, std::span(feature_pool).first(n_try), min_leaf);
        if (split.feature < 0) {
            continue;
        }

        std::vector<std::size_t> left_rows, right_rows;
        for (auto r : item.rows) {
            (X.at(r, static_cast<std::size_t>(split.feature)) <= split.threshold ? left_rows : right_rows).push_back(r);
        }
        const int left = static_cast<int>(tree.nodes_.size());
        tree.nodes_.push_back({});
        tree.nodes_.push_back({});
        auto& node = tree.nodes_[static_cast<std::size_t>(item.node)];
        node.feature = split.feature;
        node.threshold = split.threshold;
        node.left = left;
        node.right = left + 1;
        // Right first so the left subtree is expanded first (stable node numbering).
        stack.push_back({left + 1, std::move(right_rows), item.depth + 1});
        stack.push_back({left, std::move(left_rows), item.depth + 1});
    }

    if (!leaf_rows.empty()) {
        std::vector<double> sums(tree.nodes_.size(), 0.0);
        std::vector<std::size_t> counts(tree.nodes_.size(), 0);
        for (auto r : leaf_rows) {
            const auto leaf = static_cast<std::size_t>(tree.leaf_of(X.row(r)));
            sums[leaf] += y[r];
            ++counts[leaf];
        }
        for (std::size_t i = 0; i < tree.nodes_.size(); ++i) {
            if (tree.nodes_[i].feature < 0 && counts[i] > 0) {
                tree.nodes_[i].value = sums[i] / static_cast<double>(counts[i]);
            }
        }
    }
    return tree;
}

int RegressionTree::leaf_of(std::span<const double> row) const
{
    int i = 0;
    while (nodes_[static_cast<std::size_t>(i)].feature >= 0) {
        const auto& n = nodes_[static_cast<std::size_t>(i)];
        i = row[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
    }
    return i;
}

double RegressionTree::predict(std::span<const double> row) const
{
    return nodes_[static_cast<std::size_t>(leaf_of(row))].value;
}

std::size_t RegressionTree::depth() const
{
    std::vector<std::size_t> d(nodes_.size(), 0);
    std::size_t out = 0;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        out = std::max(out, d[i]);
        if (nodes_[i].feature >= 0) {
            d[static_cast<std::size_t>(nodes_[i].left)] = d[i] + 1;
            d[static_cast<std::size_t>(nodes_[i].right)] = d[i] + 1;
        }
    }
    return out;
}

nlohmann::json RegressionTree::to_json() const
{
    nlohmann::json feature = nlohmann::json::array(), threshold = nlohmann::json::array(),
                   left = nlohmann::json::array(), right = nlohmann::json::array(), value = nlohmann::json::array();
    for (const auto& n : nodes_) {
        feature.push_back(n.feature);
        threshold.push_back(n.threshold);
        left.push_back(n.left);
        right.push_back(n.right);
        value.push_back(n.value);
    }
    return {{"feature", feature}, {"threshold", threshold}, {"left", left}, {"right", right}, {"value", value}};
}

RegressionTree RegressionTree::from_json(const nlohmann::json& j)
{
    const auto feature = j.at("feature").get<std::vector<int>>();
    const auto threshold = j.at("threshold").get<std::vector<double>>();
    const auto left = j.at("left").get<std::vector<int>>();
    const auto right = j.at("right").get<std::vector<int>>();
    const auto value = j.at("value").get<std::vector<double>>();
    const auto n = feature.size();
    if (n == 0 || threshold.size() != n || left.size() != n || right.size() != n || value.size() != n) {
        throw FormatError("regression tree: node arrays are empty or of unequal length");
    }
    RegressionTree tree;
    tree.nodes_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        tree.nodes_[i] = {feature[i], threshold[i], left[i], right[i], value[i]};
        if (feature[i] >= 0) {
            const auto bad = [&](int c) { return c <= static_cast<int>(i) || c >= static_cast<int>(n); };
            if (bad(left[i]) || bad(right[i])) {
                throw FormatError("regression tree: child index out of range");
            }
        }
    }
    return tree;
}

} // namespace agbmap
