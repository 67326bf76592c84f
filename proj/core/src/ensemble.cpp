#include "agbmap/ensemble.hpp"

#include "agbmap/error.hpp"
#include "agbmap/linear_model.hpp"
#include "agbmap/rng.hpp"

#include <algorithm>

namespace agbmap {

StackFit fit_stack(const std::vector<std::vector<double>>& oof, std::span<const double> y)
{
    if (oof.empty()) {
        throw InvalidArgument("stacking needs at least one base learner");
    }
    for (const auto& c : oof) {
        if (c.size() != y.size()) {
            throw InvalidArgument("stacking: prediction column length differs from response");
        }
    }
    const auto ols = fit_ols(oof, y);
    return {ols.intercept, ols.coefficients, ols.rank_deficient};
}

EnsembleModel::EnsembleModel(std::vector<std::string> feature_names, std::vector<std::unique_ptr<Regressor>> base,
                             StackFit stack)
    : feature_names_(std::move(feature_names)), base_(std::move(base)), stack_(std::move(stack))
{
    if (base_.empty() || stack_.coefficients.size() != base_.size()) {
        throw InvalidArgument("ensemble: one meta coefficient per base model required");
    }
    for (const auto& b : base_) {
        if (b->n_features() != feature_names_.size()) {
            throw InvalidArgument("ensemble: base model feature count differs from feature names");
        }
    }
}

std::vector<double> EnsembleModel::base_predictions(std::span<const double> row) const
{
    std::vector<double> out;
    out.reserve(base_.size());
    for (const auto& b : base_) {
        out.push_back(b->predict(row));
    }
    return out;
}

double EnsembleModel::predict(std::span<const double> row) const
{
    if (row.size() != feature_names_.size()) {
        throw InvalidArgument("ensemble: row has " + std::to_string(row.size()) + " features, model expects "
                              + std::to_string(feature_names_.size()));
    }
    double v = stack_.intercept;
    for (std::size_t i = 0; i < base_.size(); ++i) {
        v += stack_.coefficients[i] * base_[i]->predict(row);
    }
    return std::max(0.0, v);
}

std::vector<double> EnsembleModel::predict(const FeatureMatrix& X) const
{
    std::vector<double> out(X.rows());
    for (std::size_t i = 0; i < X.rows(); ++i) {
        out[i] = predict(X.row(i));
    }
    return out;
}

nlohmann::json EnsembleModel::to_json() const
{
    nlohmann::json base = nlohmann::json::array();
    for (const auto& b : base_) {
        base.push_back(regressor_to_json(*b));
    }
    return {{"format", "agbmap-ensemble"},
            {"version", 1},
            {"features", feature_names_},
            {"base_models", base},
            {"meta", {{"intercept", stack_.intercept}, {"coefficients", stack_.coefficients}, {"collinear", stack_.collinear}}}};
}

EnsembleModel EnsembleModel::from_json(const nlohmann::json& j)
{
    try {
        if (j.at("format").get<std::string>() != "agbmap-ensemble") {
            throw FormatError("not an ensemble model document");
        }
        if (j.at("version").get<int>() != 1) {
            throw FormatError("unsupported ensemble model version " + j.at("version").dump());
        }
        std::vector<std::unique_ptr<Regressor>> base;
        for (const auto& b : j.at("base_models")) {
            base.push_back(regressor_from_json(b));
        }
        const auto& meta = j.at("meta");
        StackFit stack{meta.at("intercept").get<double>(), meta.at("coefficients").get<std::vector<double>>(),
                       meta.value("collinear", false)};
        return EnsembleModel(j.at("features").get<std::vector<std::string>>(), std::move(base), std::move(stack));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("ensemble JSON: ") + e.what());
    }
}

EnsembleTraining train_ensemble(const FeatureMatrix& X, std::span<const double> y, const EnsembleOptions& options)
{
    if (options.grids.empty()) {
        throw InvalidArgument("ensemble needs at least one learner grid");
    }
    X.validate();
    EnsembleTraining out;
    std::vector<std::unique_ptr<Regressor>> base;
    for (std::size_t l = 0; l < options.grids.size(); ++l) {
        const auto learner_seed = derive_seed(options.seed, {l});
        auto search = grid_search(options.grids[l], X, y, options.folds, learner_seed);
        out.oof.push_back(cv_predict(search.best, X, y, options.folds, learner_seed));
        base.push_back(train_base(search.best, X, y, derive_seed(learner_seed, {0xf1a1})));
        out.searches.push_back(std::move(search));
    }
    auto stack = fit_stack(out.oof, y);
    out.model = EnsembleModel(X.column_names(), std::move(base), std::move(stack));
    return out;
}

Grid predict_grid(const EnsembleModel& model, const std::vector<Grid>& layers)
{
    const auto p = model.feature_names().size();
    if (layers.size() != p) {
        throw InvalidArgument("predict_grid: " + std::to_string(layers.size()) + " predictor layers for "
                              + std::to_string(p) + " model features");
    }
    for (std::size_t k = 1; k < layers.size(); ++k) {
        require_aligned(layers[0], layers[k], "predict_grid");
    }
    Grid out(layers[0].geometry(), "Mg/ha");
    std::vector<double> row(p);
    for (std::size_t i = 0; i < out.size(); ++i) {
        bool ok = true;
        for (std::size_t k = 0; k < p && ok; ++k) {
            ok = layers[k].valid(i);
            if (ok) {
                row[k] = layers[k].value(i);
            }
        }
        if (ok) {
            out.set(i, static_cast<float>(model.predict(row)));
        }
    }
    return out;
}

} // namespace agbmap
