#pragma once

#include "agbmap/feature_matrix.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace agbmap {

enum class LearnerKind { knn, bagged_trees, boosted_trees };

std::string_view to_string(LearnerKind kind);
LearnerKind parse_learner_kind(std::string_view text);

/// Candidate features per split for bagged trees.
enum class FeatureRule { sqrt, third, all };

std::size_t features_per_split(FeatureRule rule, std::size_t n_features);

/// k nearest neighbours on standardized features, unweighted mean of targets.
struct KnnParams {
    int k = 5;

    friend bool operator==(const KnnParams&, const KnnParams&) = default;
};

/// Bootstrap-aggregated CART trees with random feature subsets per split.
struct BaggedTreesParams {
    int n_trees = 100;
    int max_depth = -1; // -1: unlimited
    FeatureRule features = FeatureRule::sqrt;
    int min_samples_leaf = 5;

    friend bool operator==(const BaggedTreesParams&, const BaggedTreesParams&) = default;
};

/// Least-squares gradient boosting of shallow CART trees.
struct BoostedTreesParams {
    int n_trees = 200;
    double learning_rate = 0.1;
    int max_depth = 3;
    int min_samples_leaf = 5;

    friend bool operator==(const BoostedTreesParams&, const BoostedTreesParams&) = default;
};

using LearnerSpec = std::variant<KnnParams, BaggedTreesParams, BoostedTreesParams>;

LearnerKind kind_of(const LearnerSpec& spec);
/// Throws InvalidArgument when a hyperparameter is outside its domain.
void validate(const LearnerSpec& spec);
std::string describe(const LearnerSpec& spec);
nlohmann::json spec_to_json(const LearnerSpec& spec);
LearnerSpec spec_from_json(const nlohmann::json& j);

/// Default search grids: knn k in {1,5,10,25}; bagged trees in {100,300} x depth
/// {8,16,unlimited} x features {sqrt(p), p/3}; boosted trees in {200,500} x
/// learning rate {0.05,0.1} x depth {3,6}.
std::vector<LearnerSpec> default_grid(LearnerKind kind);

/// Cartesian product of per-hyperparameter value lists, e.g.
/// {"kind": "knn", "k": [1, 5]}. Missing keys use the struct defaults.
std::vector<LearnerSpec> expand_grid(const nlohmann::json& j);

/// A trained base learner.
class Regressor {
public:
    virtual ~Regressor() = default;
    virtual double predict(std::span<const double> row) const = 0;
    virtual LearnerSpec spec() const = 0;
    virtual std::size_t n_features() const = 0;
    /// Model state without the spec.
    virtual nlohmann::json state_to_json() const = 0;
};

/// Deterministic given seed. Throws InvalidArgument on fewer than two rows.
std::unique_ptr<Regressor> train_base(const LearnerSpec& spec, const FeatureMatrix& X, std::span<const double> y,
                                      std::uint64_t seed);

nlohmann::json regressor_to_json(const Regressor& model);
std::unique_ptr<Regressor> regressor_from_json(const nlohmann::json& j);

/// Row -> fold in [0, k): rows are shuffled under seed and dealt round-robin, so
/// fold sizes differ by at most one and the first folds take the remainder.
std::vector<int> fold_assignment(std::size_t n, int k, std::uint64_t seed);

/// Out-of-fold predictions: row i comes from a model trained without its fold.
std::vector<double> cv_predict(const LearnerSpec& spec, const FeatureMatrix& X, std::span<const double> y, int k,
                               std::uint64_t seed);

struct GridSearchResult {
    LearnerSpec best;
    std::size_t best_index = 0;
    std::vector<double> cv_rmse; // one per candidate, grid order
};

/// Minimizes cross-validated RMSE over `grid`; ties keep the earlier candidate.
/// Every candidate sees the same folds.
GridSearchResult grid_search(std::span<const LearnerSpec> grid, const FeatureMatrix& X, std::span<const double> y,
                             int k, std::uint64_t seed);

} // namespace agbmap
