#pragma once

#include "agbmap/feature_matrix.hpp"
#include "agbmap/rng.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstddef>
#include <span>
#include <vector>

namespace agbmap {

/// CART regression tree (squared-error splits, axis-aligned thresholds).
class RegressionTree {
public:
    struct Params {
        int max_depth = -1;        // < 0: unlimited, 0: single leaf
        int min_samples_leaf = 1;
        std::size_t max_features = 0; // features tried per split; 0 = all
    };

    struct Node {
        int feature = -1; // -1 marks a leaf
        double threshold = 0.0;
        int left = -1;
        int right = -1;
        double value = 0.0;
    };

    /// Grows the tree on `sample` (row indices into X; repeats allowed). If
    /// `leaf_rows` is nonempty, leaf values are re-estimated as the mean of `y`
    /// over those rows after the structure is fixed.
    static RegressionTree fit(const FeatureMatrix& X, std::span<const double> y, std::span<const std::size_t> sample,
                              const Params& params, Engine& rng, std::span<const std::size_t> leaf_rows = {});

    double predict(std::span<const double> row) const;
    const std::vector<Node>& nodes() const { return nodes_; }
    std::size_t depth() const;

    nlohmann::json to_json() const;
    static RegressionTree from_json(const nlohmann::json& j);

private:
    int leaf_of(std::span<const double> row) const;

    std::vector<Node> nodes_;
};

} // namespace agbmap
