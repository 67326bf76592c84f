#pragma once

#include "agbmap/feature_matrix.hpp"
#include "agbmap/grid.hpp"
#include "agbmap/learners.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace agbmap {

/// Linear meta-model over base-learner predictions.
struct StackFit {
    double intercept = 0.0;
    std::vector<double> coefficients;
    /// Prediction columns were collinear; coefficients are minimum norm.
    bool collinear = false;
};

/// OLS of y on the columns of `oof` (one column per base learner) with intercept.
StackFit fit_stack(const std::vector<std::vector<double>>& oof, std::span<const double> y);

class EnsembleModel {
public:
    EnsembleModel() = default;
    EnsembleModel(std::vector<std::string> feature_names, std::vector<std::unique_ptr<Regressor>> base,
                  StackFit stack);

    const std::vector<std::string>& feature_names() const { return feature_names_; }
    std::size_t n_base() const { return base_.size(); }
    const Regressor& base(std::size_t i) const { return *base_[i]; }
    const StackFit& stack() const { return stack_; }

    /// Meta-model applied to the base predictions, clamped at 0.
    double predict(std::span<const double> row) const;
    std::vector<double> base_predictions(std::span<const double> row) const;
    std::vector<double> predict(const FeatureMatrix& X) const;

    nlohmann::json to_json() const;
    static EnsembleModel from_json(const nlohmann::json& j);

private:
    std::vector<std::string> feature_names_;
    std::vector<std::unique_ptr<Regressor>> base_;
    StackFit stack_;
};

struct EnsembleOptions {
    /// One search grid per base learner.
    std::vector<std::vector<LearnerSpec>> grids;
    int folds = 5;
    std::uint64_t seed = 0;
};

struct EnsembleTraining {
    EnsembleModel model;
    std::vector<GridSearchResult> searches;
    std::vector<std::vector<double>> oof; // per base learner
};

/// Grid search per learner, out-of-fold predictions for the chosen specs, OLS
/// stacking on those, then every base learner refit on all rows.
EnsembleTraining train_ensemble(const FeatureMatrix& X, std::span<const double> y, const EnsembleOptions& options);

/// One layer per feature column, in feature order. Cells masked in any layer
/// are masked in the output.
Grid predict_grid(const EnsembleModel& model, const std::vector<Grid>& layers);

} // namespace agbmap
