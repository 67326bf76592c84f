#include "agbmap/learners.hpp"

#include "agbmap/error.hpp"
#include "agbmap/regression_tree.hpp"
#include "agbmap/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace agbmap {

std::string_view to_string(LearnerKind kind)
{
    switch (kind) {
    case LearnerKind::knn:
        return "knn";
    case LearnerKind::bagged_trees:
        return "bagged_trees";
    case LearnerKind::boosted_trees:
        return "boosted_trees";
    }
    return "unknown";
}

LearnerKind parse_learner_kind(std::string_view text)
{
    for (auto k : {LearnerKind::knn, LearnerKind::bagged_trees, LearnerKind::boosted_trees}) {
        if (text == to_string(k)) {
            return k;
        }
    }
    throw InvalidArgument("unknown learner kind '" + std::string(text) + "'");
}

std::size_t features_per_split(FeatureRule rule, std::size_t n_features)
{
    const double p = static_cast<double>(n_features);
    switch (rule) {
    case FeatureRule::sqrt:
        return std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(std::sqrt(p))));
    case FeatureRule::third:
        return std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(p / 3.0)));
    case FeatureRule::all:
        return n_features;
    }
    return n_features;
}

namespace {

std::string_view rule_name(FeatureRule r)
{
    switch (r) {
    case FeatureRule::sqrt:
        return "sqrt";
    case FeatureRule::third:
        return "third";
    case FeatureRule::all:
        return "all";
    }
    return "all";
}

FeatureRule parse_rule(const std::string& s)
{
    if (s == "sqrt") {
        return FeatureRule::sqrt;
    }
    if (s == "third") {
        return FeatureRule::third;
    }
    if (s == "all") {
        return FeatureRule::all;
    }
    throw InvalidArgument("unknown feature rule '" + s + "' (expected sqrt, third or all)");
}

int parse_depth(const nlohmann::json& v)
{
    if (v.is_null() || (v.is_string() && v.get<std::string>() == "unlimited")) {
        return -1;
    }
    return v.get<int>();
}

nlohmann::json depth_json(int depth) { return depth < 0 ? nlohmann::json("unlimited") : nlohmann::json(depth); }

template <class... Ts>
struct Overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

// ---------------------------------------------------------------------------

class KnnModel final : public Regressor {
public:
    KnnModel(KnnParams params, const FeatureMatrix& X, std::span<const double> y)
        : params_(params), p_(X.cols()), means_(X.cols(), 0.0), scales_(X.cols(), 1.0), y_(y.begin(), y.end())
    {
        const auto n = X.rows();
        for (std::size_t j = 0; j < p_; ++j) {
            double m = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                m += X.at(i, j);
            }
            m /= static_cast<double>(n);
            double ss = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                ss += (X.at(i, j) - m) * (X.at(i, j) - m);
            }
            const double sd = std::sqrt(ss / static_cast<double>(n));
            means_[j] = m;
            scales_[j] = sd > 0.0 ? sd : 1.0;
        }
        train_.resize(n * p_);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < p_; ++j) {
                train_[i * p_ + j] = (X.at(i, j) - means_[j]) / scales_[j];
            }
        }
    }

    KnnModel(KnnParams params, const nlohmann::json& state)
        : params_(params),
          p_(state.at("n_features").get<std::size_t>()),
          means_(state.at("means").get<std::vector<double>>()),
          scales_(state.at("scales").get<std::vector<double>>()),
          train_(state.at("train").get<std::vector<double>>()),
          y_(state.at("y").get<std::vector<double>>())
    {
        if (means_.size() != p_ || scales_.size() != p_ || train_.size() != y_.size() * p_ || y_.empty()) {
            throw FormatError("knn model: inconsistent state arrays");
        }
    }

    double predict(std::span<const double> row) const override
    {
        const std::size_t n = y_.size();
        std::vector<double> z(p_);
        for (std::size_t j = 0; j < p_; ++j) {
            z[j] = (row[j] - means_[j]) / scales_[j];
        }
        std::vector<std::pair<double, std::size_t>> dist(n);
        for (std::size_t i = 0; i < n; ++i) {
            double d = 0.0;
            const double* t = train_.data() + i * p_;
            for (std::size_t j = 0; j < p_; ++j) {
                d += (z[j] - t[j]) * (z[j] - t[j]);
            }
            dist[i] = {d, i};
        }
        const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(params_.k), n);
        std::nth_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k - 1), dist.end());
        std::sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k));
        double s = 0.0;
        for (std::size_t i = 0; i < k; ++i) {
            s += y_[dist[i].second];
        }
        return s / static_cast<double>(k);
    }

    LearnerSpec spec() const override { return params_; }
    std::size_t n_features() const override { return p_; }

    nlohmann::json state_to_json() const override
    {
        return {{"n_features", p_}, {"means", means_}, {"scales", scales_}, {"train", train_}, {"y", y_}};
    }

private:
    KnnParams params_;
    std::size_t p_;
    std::vector<double> means_;
    std::vector<double> scales_;
    std::vector<double> train_; // standardized, row-major
    std::vector<double> y_;
};

class BaggedTreesModel final : public Regressor {
public:
    BaggedTreesModel(BaggedTreesParams params, const FeatureMatrix& X, std::span<const double> y, std::uint64_t seed)
        : params_(params), p_(X.cols())
    {
        const auto n = X.rows();
        RegressionTree::Params tp;
        tp.max_depth = params.max_depth;
        tp.min_samples_leaf = params.min_samples_leaf;
        tp.max_features = features_per_split(params.features, p_);
        std::vector<std::size_t> all(n);
        std::iota(all.begin(), all.end(), std::size_t{0});
        std::vector<std::size_t> boot(n);
        trees_.reserve(static_cast<std::size_t>(params.n_trees));
        for (int t = 0; t < params.n_trees; ++t) {
            auto rng = make_engine(seed, {static_cast<std::uint64_t>(t)});
            std::uniform_int_distribution<std::size_t> draw(0, n - 1);
            for (auto& b : boot) {
                b = draw(rng);
            }
            // Splits come from the bootstrap sample; leaf means use every training row.
            trees_.push_back(RegressionTree::fit(X, y, boot, tp, rng, all));
        }
    }

    BaggedTreesModel(BaggedTreesParams params, const nlohmann::json& state)
        : params_(params), p_(state.at("n_features").get<std::size_t>())
    {
        for (const auto& t : state.at("trees")) {
            trees_.push_back(RegressionTree::from_json(t));
        }
        if (trees_.empty()) {
            throw FormatError("bagged trees model: no trees");
        }
    }

    double predict(std::span<const double> row) const override
    {
        double s = 0.0;
        for (const auto& t : trees_) {
            s += t.predict(row);
        }
        return s / static_cast<double>(trees_.size());
    }

    LearnerSpec spec() const override { return params_; }
    std::size_t n_features() const override { return p_; }

    nlohmann::json state_to_json() const override
    {
        nlohmann::json trees = nlohmann::json::array();
        for (const auto& t : trees_) {
            trees.push_back(t.to_json());
        }
        return {{"n_features", p_}, {"trees", trees}};
    }

private:
    BaggedTreesParams params_;
    std::size_t p_;
    std::vector<RegressionTree> trees_;
};

class BoostedTreesModel final : public Regressor {
public:
    BoostedTreesModel(BoostedTreesParams params, const FeatureMatrix& X, std::span<const double> y, std::uint64_t seed)
        : params_(params), p_(X.cols())
    {
        const auto n = X.rows();
        base_ = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
        std::vector<double> fitted(n, base_);
        std::vector<double> residual(n);
        std::vector<std::size_t> all(n);
        std::iota(all.begin(), all.end(), std::size_t{0});
        RegressionTree::Params tp;
        tp.max_depth = params.max_depth;
        tp.min_samples_leaf = params.min_samples_leaf;
        auto rng = make_engine(seed, {0xb0057});
        trees_.reserve(static_cast<std::size_t>(params.n_trees));
        for (int t = 0; t < params.n_trees; ++t) {
            for (std::size_t i = 0; i < n; ++i) {
                residual[i] = y[i] - fitted[i];
            }
            auto tree = RegressionTree::fit(X, residual, all, tp, rng);
            for (std::size_t i = 0; i < n; ++i) {
                fitted[i] += params.learning_rate * tree.predict(X.row(i));
            }
            trees_.push_back(std::move(tree));
        }
    }

    BoostedTreesModel(BoostedTreesParams params, const nlohmann::json& state)
        : params_(params), p_(state.at("n_features").get<std::size_t>()), base_(state.at("base").get<double>())
    {
        for (const auto& t : state.at("trees")) {
            trees_.push_back(RegressionTree::from_json(t));
        }
    }

    double predict(std::span<const double> row) const override
    {
        double v = base_;
        for (const auto& t : trees_) {
            v += params_.learning_rate * t.predict(row);
        }
        return v;
    }

    LearnerSpec spec() const override { return params_; }
    std::size_t n_features() const override { return p_; }

    nlohmann::json state_to_json() const override
    {
        nlohmann::json trees = nlohmann::json::array();
        for (const auto& t : trees_) {
            trees.push_back(t.to_json());
        }
        return {{"n_features", p_}, {"base", base_}, {"trees", trees}};
    }

private:
    BoostedTreesParams params_;
    std::size_t p_;
    double base_ = 0.0;
    std::vector<RegressionTree> trees_;
};

} // namespace

LearnerKind kind_of(const LearnerSpec& spec)
{
    return std::visit(Overloaded{
                          [](const KnnParams&) { return LearnerKind::knn; },
                          [](const BaggedTreesParams&) { return LearnerKind::bagged_trees; },
                          [](const BoostedTreesParams&) { return LearnerKind::boosted_trees; },
                      },
                      spec);
}

void validate(const LearnerSpec& spec)
{
    std::visit(Overloaded{
                   [](const KnnParams& p) {
                       if (p.k < 1) {
                           throw InvalidArgument("knn: k must be >= 1");
                       }
                   },
                   [](const BaggedTreesParams& p) {
                       if (p.n_trees < 1 || p.max_depth < -1 || p.min_samples_leaf < 1) {
                           throw InvalidArgument("bagged_trees: need n_trees >= 1, max_depth >= -1, min_samples_leaf >= 1");
                       }
                   },
                   [](const BoostedTreesParams& p) {
                       if (p.n_trees < 1 || p.max_depth < 0 || p.min_samples_leaf < 1 || !(p.learning_rate >= 0.0)
                           || p.learning_rate > 1.0) {
                           throw InvalidArgument(
                               "boosted_trees: need n_trees >= 1, max_depth >= 0, min_samples_leaf >= 1, learning_rate in [0, 1]");
                       }
                   },
               },
               spec);
}

nlohmann::json spec_to_json(const LearnerSpec& spec)
{
    return std::visit(Overloaded{
                          [](const KnnParams& p) { return nlohmann::json{{"kind", "knn"}, {"k", p.k}}; },
                          [](const BaggedTreesParams& p) {
                              return nlohmann::json{{"kind", "bagged_trees"},
                                                    {"n_trees", p.n_trees},
                                                    {"max_depth", depth_json(p.max_depth)},
                                                    {"features", rule_name(p.features)},
                                                    {"min_samples_leaf", p.min_samples_leaf}};
                          },
                          [](const BoostedTreesParams& p) {
                              return nlohmann::json{{"kind", "boosted_trees"},
                                                    {"n_trees", p.n_trees},
                                                    {"learning_rate", p.learning_rate},
                                                    {"max_depth", p.max_depth},
                                                    {"min_samples_leaf", p.min_samples_leaf}};
                          },
                      },
                      spec);
}

std::string describe(const LearnerSpec& spec)
{
    auto j = spec_to_json(spec);
    std::string out = j.at("kind").get<std::string>() + "(";
    bool first = true;
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (it.key() == "kind") {
            continue;
        }
        out += (first ? "" : ",") + it.key() + "=" + (it->is_string() ? it->get<std::string>() : it->dump());
        first = false;
    }
    return out + ")";
}

LearnerSpec spec_from_json(const nlohmann::json& j)
{
    LearnerSpec spec;
    try {
        switch (parse_learner_kind(j.at("kind").get<std::string>())) {
        case LearnerKind::knn: {
            KnnParams p;
            p.k = j.value("k", p.k);
            spec = p;
            break;
        }
        case LearnerKind::bagged_trees: {
            BaggedTreesParams p;
            p.n_trees = j.value("n_trees", p.n_trees);
            if (j.contains("max_depth")) {
                p.max_depth = parse_depth(j.at("max_depth"));
            }
            if (j.contains("features")) {
                p.features = parse_rule(j.at("features").get<std::string>());
            }
            p.min_samples_leaf = j.value("min_samples_leaf", p.min_samples_leaf);
            spec = p;
            break;
        }
        case LearnerKind::boosted_trees: {
            BoostedTreesParams p;
            p.n_trees = j.value("n_trees", p.n_trees);
            p.learning_rate = j.value("learning_rate", p.learning_rate);
            p.max_depth = j.value("max_depth", p.max_depth);
            p.min_samples_leaf = j.value("min_samples_leaf", p.min_samples_leaf);
            spec = p;
            break;
        }
        }
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument(std::string("learner spec: ") + e.what());
    }
    validate(spec);
    return spec;
}

std::vector<LearnerSpec> default_grid(LearnerKind kind)
{
    std::vector<LearnerSpec> grid;
    switch (kind) {
    case LearnerKind::knn:
        for (int k : {1, 5, 10, 25}) {
            grid.push_back(KnnParams{k});
        }
        break;
    case LearnerKind::bagged_trees:
        for (int trees : {100, 300}) {
            for (int depth : {8, 16, -1}) {
                for (auto rule : {FeatureRule::sqrt, FeatureRule::third}) {
                    grid.push_back(BaggedTreesParams{trees, depth, rule, 5});
                }
            }
        }
        break;
    case LearnerKind::boosted_trees:
        for (int trees : {200, 500}) {
            for (double lr : {0.05, 0.1}) {
                for (int depth : {3, 6}) {
                    grid.push_back(BoostedTreesParams{trees, lr, depth, 5});
                }
            }
        }
        break;
    }
    return grid;
}

std::vector<LearnerSpec> expand_grid(const nlohmann::json& j)
{
    if (!j.is_object() || !j.contains("kind")) {
        throw InvalidArgument("learner grid must be an object with a 'kind'");
    }
    const auto kind = j.at("kind").get<std::string>();
    std::vector<std::pair<std::string, nlohmann::json>> axes;
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (it.key() != "kind") {
            axes.emplace_back(it.key(), it->is_array() ? *it : nlohmann::json::array({*it}));
        }
    }
    std::vector<nlohmann::json> combos{nlohmann::json{{"kind", kind}}};
    for (const auto& [key, values] : axes) {
        if (values.empty()) {
            throw InvalidArgument("learner grid axis '" + key + "' is empty");
        }
        std::vector<nlohmann::json> next;
        for (const auto& c : combos) {
            for (const auto& v : values) {
                auto e = c;
                e[key] = v;
                next.push_back(std::move(e));
            }
        }
        combos = std::move(next);
    }
    std::vector<LearnerSpec> out;
    for (const auto& c : combos) {
        out.push_back(spec_from_json(c));
    }
    return out;
}

std::unique_ptr<Regressor> train_base(const LearnerSpec& spec, const FeatureMatrix& X, std::span<const double> y,
                                      std::uint64_t seed)
{
    validate(spec);
    if (X.rows() < 2) {
        throw InvalidArgument("train_base: need at least two rows");
    }
    if (y.size() != X.rows()) {
        throw InvalidArgument("train_base: response length differs from row count");
    }
    for (double v : y) {
        if (!std::isfinite(v)) {
            throw InvalidArgument("train_base: non-finite response");
        }
    }
    return std::visit(Overloaded{
                          [&](const KnnParams& p) -> std::unique_ptr<Regressor> {
                              return std::make_unique<KnnModel>(p, X, y);
                          },
                          [&](const BaggedTreesParams& p) -> std::unique_ptr<Regressor> {
                              return std::make_unique<BaggedTreesModel>(p, X, y, seed);
                          },
                          [&](const BoostedTreesParams& p) -> std::unique_ptr<Regressor> {
                              return std::make_unique<BoostedTreesModel>(p, X, y, seed);
                          },
                      },
                      spec);
}

nlohmann::json regressor_to_json(const Regressor& model)
{
    return {{"spec", spec_to_json(model.spec())}, {"state", model.state_to_json()}};
}

std::unique_ptr<Regressor> regressor_from_json(const nlohmann::json& j)
{
    try {
        const auto spec = spec_from_json(j.at("spec"));
        const auto& state = j.at("state");
        return std::visit(Overloaded{
                              [&](const KnnParams& p) -> std::unique_ptr<Regressor> {
                                  return std::make_unique<KnnModel>(p, state);
                              },
                              [&](const BaggedTreesParams& p) -> std::unique_ptr<Regressor> {
                                  return std::make_unique<BaggedTreesModel>(p, state);
                              },
                              [&](const BoostedTreesParams& p) -> std::unique_ptr<Regressor> {
                                  return std::make_unique<BoostedTreesModel>(p, state);
                              },
                          },
                          spec);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("model JSON: ") + e.what());
    }
}

std::vector<int> fold_assignment(std::size_t n, int k, std::uint64_t seed)
{
    if (k < 2) {
        throw InvalidArgument("cross-validation needs k >= 2");
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto rng = make_engine(seed, {0xf01d5});
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<int> fold(n);
    for (std::size_t pos = 0; pos < n; ++pos) {
        fold[order[pos]] = static_cast<int>(pos % static_cast<std::size_t>(k));
    }
    return fold;
}

std::vector<double> cv_predict(const LearnerSpec& spec, const FeatureMatrix& X, std::span<const double> y, int k,
                               std::uint64_t seed)
{
    if (k < 2) {
        throw InvalidArgument("cross-validation needs k >= 2");
    }
    if (X.rows() < static_cast<std::size_t>(k)) {
        throw InvalidArgument("cross-validation needs at least k rows");
    }
    const auto folds = fold_assignment(X.rows(), k, seed);
    std::vector<double> oof(X.rows(), 0.0);
    for (int f = 0; f < k; ++f) {
        std::vector<std::size_t> train_rows, test_rows;
        for (std::size_t i = 0; i < folds.size(); ++i) {
            (folds[i] == f ? test_rows : train_rows).push_back(i);
        }
        const auto Xtr = X.select_rows(train_rows);
        std::vector<double> ytr;
        ytr.reserve(train_rows.size());
        for (auto r : train_rows) {
            ytr.push_back(y[r]);
        }
        const auto model = train_base(spec, Xtr, ytr, derive_seed(seed, {static_cast<std::uint64_t>(f)}));
        for (auto r : test_rows) {
            oof[r] = model->predict(X.row(r));
        }
    }
    return oof;
}

GridSearchResult grid_search(std::span<const LearnerSpec> grid, const FeatureMatrix& X, std::span<const double> y,
                             int k, std::uint64_t seed)
{
    if (grid.empty()) {
        throw InvalidArgument("grid search over an empty grid");
    }
    GridSearchResult result{grid.front(), 0, {}};
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < grid.size(); ++c) {
        const auto oof = cv_predict(grid[c], X, y, k, seed);
        double sse = 0.0;
        for (std::size_t i = 0; i < oof.size(); ++i) {
            sse += (oof[i] - y[i]) * (oof[i] - y[i]);
        }
        const double rmse = std::sqrt(sse / static_cast<double>(oof.size()));
        result.cv_rmse.push_back(rmse);
        if (rmse < best) {
            best = rmse;
            result.best = grid[c];
            result.best_index = c;
        }
    }
    return result;
}

} // namespace agbmap
