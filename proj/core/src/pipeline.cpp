#include "agbmap/pipeline.hpp"

#include "agbmap/agreement.hpp"
#include "agbmap/carbon.hpp"
#include "agbmap/csv.hpp"
#include "agbmap/ensemble.hpp"
#include "agbmap/error.hpp"
#include "agbmap/footprint.hpp"
#include "agbmap/grid_io.hpp"
#include "agbmap/rng.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <numeric>
#include <ostream>
#include <sstream>

#ifndef AGBMAP_VERSION
#define AGBMAP_VERSION "0.0.0"
#endif

namespace agbmap {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view version() { return AGBMAP_VERSION; }

// ---------------------------------------------------------------------------
// Stages

namespace {
constexpr std::array<Stage, 9> kStages{Stage::ingest, Stage::extract, Stage::fit,    Stage::predict, Stage::assess,
                                       Stage::agree,  Stage::diff,    Stage::stocks, Stage::rescale};
}

std::string_view to_string(Stage s)
{
    switch (s) {
    case Stage::ingest:
        return "ingest";
    case Stage::extract:
        return "extract";
    case Stage::fit:
        return "fit";
    case Stage::predict:
        return "predict";
    case Stage::assess:
        return "assess";
    case Stage::agree:
        return "agree";
    case Stage::diff:
        return "diff";
    case Stage::stocks:
        return "stocks";
    case Stage::rescale:
        return "rescale";
    }
    return "unknown";
}

Stage parse_stage(std::string_view text)
{
    for (auto s : kStages) {
        if (text == to_string(s)) {
            return s;
        }
    }
    throw InvalidArgument("unknown stage '" + std::string(text) + "'");
}

std::vector<Stage> all_stages() { return {kStages.begin(), kStages.end()}; }

std::vector<Stage> parse_stage_list(std::string_view text)
{
    if (text == "all") {
        return all_stages();
    }
    std::set<Stage> picked;
    std::size_t start = 0;
    while (start <= text.size()) {
        const auto comma = text.find(',', start);
        auto item = text.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
        while (!item.empty() && item.front() == ' ') {
            item.remove_prefix(1);
        }
        while (!item.empty() && item.back() == ' ') {
            item.remove_suffix(1);
        }
        if (!item.empty()) {
            picked.insert(parse_stage(item));
        }
        if (comma == std::string_view::npos) {
            break;
        }
        start = comma + 1;
    }
    if (picked.empty()) {
        throw InvalidArgument("no stages given");
    }
    return {picked.begin(), picked.end()};
}

std::vector<Stage> dependencies(Stage s)
{
    switch (s) {
    case Stage::ingest:
        return {};
    case Stage::extract:
        return {Stage::ingest};
    case Stage::fit:
        return {Stage::extract};
    case Stage::predict:
        return {Stage::fit};
    case Stage::assess:
        return {Stage::fit, Stage::extract};
    case Stage::agree:
    case Stage::diff:
    case Stage::rescale:
        return {Stage::predict};
    case Stage::stocks:
        return {Stage::predict, Stage::ingest};
    }
    return {};
}

// ---------------------------------------------------------------------------
// Config

namespace {

int parse_year_key(const std::string& key)
{
    try {
        std::size_t used = 0;
        const int y = std::stoi(key, &used);
        if (used == key.size()) {
            return y;
        }
    } catch (const std::exception&) {
    }
    throw InvalidArgument("config: '" + key + "' is not a year");
}

const std::set<std::string> kTopKeys{"seed",        "paths",   "features",       "allometries",   "holdout_panel",
                                     "map_years",   "scales_km", "removed_classes", "folds",      "train_fraction",
                                     "learners",    "agreement_year", "rescale",  "region_area_ha", "output_dir"};

} // namespace

fs::path PipelineConfig::resolve(const fs::path& p) const { return p.is_absolute() ? p : base_dir / p; }

PipelineConfig PipelineConfig::from_json(const json& j, const fs::path& base_dir)
{
    if (!j.is_object()) {
        throw InvalidArgument("config must be a JSON object");
    }
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!kTopKeys.count(it.key())) {
            throw InvalidArgument("config: unknown key '" + it.key() + "'");
        }
    }
    PipelineConfig c;
    c.base_dir = base_dir;
    try {
        if (!j.contains("seed") || !j.at("seed").is_number_integer()) {
            throw InvalidArgument("config: integer 'seed' is required");
        }
        c.seed = j.at("seed").get<std::uint64_t>();

        const auto& p = j.at("paths");
        c.trees = p.at("trees").get<std::string>();
        c.plots = p.at("plots").get<std::string>();
        c.carbon_fractions = p.at("carbon_fractions").get<std::string>();
        c.elevation = p.at("elevation").get<std::string>();
        for (auto it = p.at("landcover").begin(); it != p.at("landcover").end(); ++it) {
            c.landcover[parse_year_key(it.key())] = it->get<std::string>();
        }

        c.features = j.at("features").get<std::vector<std::string>>();
        if (c.features.empty()) {
            throw InvalidArgument("config: 'features' is empty");
        }
        for (auto it = p.at("predictors").begin(); it != p.at("predictors").end(); ++it) {
            auto& layers = c.predictors[parse_year_key(it.key())];
            for (const auto& f : c.features) {
                if (!it->contains(f)) {
                    throw InvalidArgument("config: predictors for " + it.key() + " lack feature '" + f + "'");
                }
                layers.push_back(it->at(f).get<std::string>());
            }
            if (it->size() != c.features.size()) {
                throw InvalidArgument("config: predictors for " + it.key() + " list layers not named in 'features'");
            }
        }
        if (c.predictors.empty()) {
            throw InvalidArgument("config: no predictor years");
        }

        if (j.contains("allometries")) {
            c.allometries.clear();
            for (const auto& a : j.at("allometries")) {
                const auto al = parse_allometry(a.get<std::string>());
                if (std::find(c.allometries.begin(), c.allometries.end(), al) == c.allometries.end()) {
                    c.allometries.push_back(al);
                }
            }
            if (c.allometries.empty()) {
                throw InvalidArgument("config: 'allometries' is empty");
            }
        }
        if (j.contains("holdout_panel")) {
            const auto& h = j.at("holdout_panel");
            if (h.is_string()) {
                if (h.get<std::string>() != "random") {
                    throw InvalidArgument("config: holdout_panel must be 1..5 or \"random\"");
                }
            } else {
                const int v = h.get<int>();
                if (v < 1 || v > 5) {
                    throw InvalidArgument("config: holdout_panel must be 1..5 or \"random\"");
                }
                c.holdout_panel = v;
            }
        }
        if (j.contains("map_years")) {
            c.map_years = j.at("map_years").get<std::vector<int>>();
        } else {
            for (const auto& [y, _] : c.predictors) {
                c.map_years.push_back(y);
            }
        }
        std::sort(c.map_years.begin(), c.map_years.end());
        c.map_years.erase(std::unique(c.map_years.begin(), c.map_years.end()), c.map_years.end());
        if (c.map_years.empty()) {
            throw InvalidArgument("config: 'map_years' is empty");
        }

        c.scales_km = j.contains("scales_km") ? j.at("scales_km").get<std::vector<double>>() : default_scale_sweep_km();
        if (c.scales_km.empty()) {
            throw InvalidArgument("config: 'scales_km' is empty");
        }
        for (double s : c.scales_km) {
            if (!(s > 0.0) || !std::isfinite(s)) {
                throw InvalidArgument("config: scales must be positive");
            }
        }
        if (j.contains("removed_classes")) {
            const auto v = j.at("removed_classes").get<std::vector<int>>();
            c.removed_classes = {v.begin(), v.end()};
        }
        c.folds = j.value("folds", c.folds);
        if (c.folds < 2) {
            throw InvalidArgument("config: folds must be >= 2");
        }
        c.train_fraction = j.value("train_fraction", c.train_fraction);
        if (!(c.train_fraction > 0.0 && c.train_fraction < 1.0)) {
            throw InvalidArgument("config: train_fraction must lie in (0,1)");
        }
        if (j.contains("learners")) {
            for (const auto& g : j.at("learners")) {
                // An object is expanded as a grid; an array lists candidates explicitly.
                if (g.is_array()) {
                    std::vector<LearnerSpec> grid;
                    for (const auto& s : g) {
                        grid.push_back(spec_from_json(s));
                    }
                    if (grid.empty()) {
                        throw InvalidArgument("config: empty learner candidate list");
                    }
                    c.learner_grids.push_back(std::move(grid));
                } else {
                    c.learner_grids.push_back(expand_grid(g));
                }
            }
            if (c.learner_grids.empty()) {
                throw InvalidArgument("config: 'learners' is empty");
            }
        } else {
            for (auto k : {LearnerKind::knn, LearnerKind::bagged_trees, LearnerKind::boosted_trees}) {
                c.learner_grids.push_back(default_grid(k));
            }
        }
        c.agreement_year = j.value("agreement_year", c.map_years.back());
        if (j.contains("rescale")) {
            const auto& r = j.at("rescale");
            c.rescale_year = r.value("year", c.map_years.back());
            c.rescale_sample = r.value("n_sample", c.rescale_sample);
            c.rescale_train_fraction = r.value("train_fraction", c.rescale_train_fraction);
        } else {
            c.rescale_year = c.map_years.back();
        }
        if (c.rescale_sample < 4 || !(c.rescale_train_fraction > 0.0 && c.rescale_train_fraction <= 1.0)) {
            throw InvalidArgument("config: rescale needs n_sample >= 4 and train_fraction in (0,1]");
        }
        if (j.contains("region_area_ha") && !j.at("region_area_ha").is_null()) {
            c.region_area_ha = j.at("region_area_ha").get<double>();
            if (!(*c.region_area_ha > 0.0)) {
                throw InvalidArgument("config: region_area_ha must be positive");
            }
        }
        c.output_dir = j.value("output_dir", std::string("out"));
    } catch (const json::exception& e) {
        throw InvalidArgument(std::string("config: ") + e.what());
    }
    return c;
}

PipelineConfig PipelineConfig::load(const fs::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw InvalidArgument("cannot open config " + path.string());
    }
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw InvalidArgument(path.string() + ": " + e.what());
    }
    return from_json(j, path.parent_path().empty() ? fs::path(".") : path.parent_path());
}

json PipelineConfig::to_json() const
{
    json landcover_j = json::object();
    for (const auto& [y, path] : landcover) {
        landcover_j[std::to_string(y)] = path.generic_string();
    }
    json predictors_j = json::object();
    for (const auto& [y, layers] : predictors) {
        json l = json::object();
        for (std::size_t k = 0; k < features.size(); ++k) {
            l[features[k]] = layers[k].generic_string();
        }
        predictors_j[std::to_string(y)] = l;
    }
    json learners = json::array();
    for (const auto& grid : learner_grids) {
        json g = json::array();
        for (const auto& s : grid) {
            g.push_back(spec_to_json(s));
        }
        learners.push_back(g);
    }
    json allos = json::array();
    for (auto a : allometries) {
        allos.push_back(to_string(a));
    }
    return {{"seed", seed},
            {"paths",
             {{"trees", trees.generic_string()},
              {"plots", plots.generic_string()},
              {"carbon_fractions", carbon_fractions.generic_string()},
              {"elevation", elevation.generic_string()},
              {"landcover", landcover_j},
              {"predictors", predictors_j}}},
            {"features", features},
            {"allometries", allos},
            {"holdout_panel", holdout_panel ? json(*holdout_panel) : json("random")},
            {"map_years", map_years},
            {"scales_km", scales_km},
            {"removed_classes", removed_classes},
            {"folds", folds},
            {"train_fraction", train_fraction},
            {"learners", learners},
            {"agreement_year", agreement_year},
            {"rescale", {{"year", rescale_year}, {"n_sample", rescale_sample}, {"train_fraction", rescale_train_fraction}}},
            {"region_area_ha", region_area_ha ? json(*region_area_ha) : json(nullptr)}};
}

namespace {

std::vector<fs::path> input_files(const PipelineConfig& c)
{
    std::vector<fs::path> files{c.trees, c.plots, c.carbon_fractions, c.elevation};
    for (const auto& [_, p] : c.landcover) {
        files.push_back(p);
    }
    for (const auto& [_, layers] : c.predictors) {
        files.insert(files.end(), layers.begin(), layers.end());
    }
    return files;
}

} // namespace

std::vector<Finding> validate(const PipelineConfig& c)
{
    std::vector<Finding> out;
    bool files_ok = true;
    for (const auto& f : input_files(c)) {
        if (!fs::is_regular_file(c.resolve(f))) {
            out.push_back({"missing file", c.resolve(f).string()});
            files_ok = false;
        }
    }
    for (int code : c.removed_classes) {
        if (code < 1 || code > 8) {
            out.push_back({"class code", "removed class " + std::to_string(code) + " is not a landcover code 1..8"});
        }
    }
    for (int y : c.map_years) {
        if (!c.predictors.count(y)) {
            out.push_back({"config", "map year " + std::to_string(y) + " has no predictor layers"});
        }
        if (!c.landcover.count(y)) {
            out.push_back({"config", "map year " + std::to_string(y) + " has no landcover grid"});
        }
    }
    const auto has_year = [&](int y) { return std::find(c.map_years.begin(), c.map_years.end(), y) != c.map_years.end(); };
    if (!has_year(c.agreement_year)) {
        out.push_back({"config", "agreement_year " + std::to_string(c.agreement_year) + " is not a map year"});
    }
    if (!has_year(c.rescale_year)) {
        out.push_back({"config", "rescale year " + std::to_string(c.rescale_year) + " is not a map year"});
    }
    if (!files_ok) {
        return out;
    }

    // Every grid must share the first predictor layer's geometry.
    std::optional<GridGeometry> ref;
    std::string ref_name;
    const auto check = [&](const fs::path& p) {
        try {
            const auto g = read_grid(c.resolve(p));
            if (!ref) {
                ref = g.geometry();
                ref_name = p.generic_string();
            } else if (!aligned(*ref, g.geometry())) {
                out.push_back({"alignment", p.generic_string() + " is not aligned with " + ref_name});
            }
            return std::optional<Grid>(g);
        } catch (const Error& e) {
            out.push_back({"config", p.generic_string() + ": " + e.what()});
            return std::optional<Grid>();
        }
    };
    for (const auto& [_, layers] : c.predictors) {
        for (const auto& l : layers) {
            check(l);
        }
    }
    check(c.elevation);
    for (const auto& [y, p] : c.landcover) {
        if (const auto g = check(p)) {
            for (std::size_t i = 0; i < g->size(); ++i) {
                if (g->valid(i) && g->value(i) != std::round(g->value(i))) {
                    out.push_back({"class code", p.generic_string() + " holds non-integer class values"});
                    break;
                }
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Hashing

std::string sha256_hex(std::string_view data)
{
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1) {
        throw Error("SHA-256 digest failed");
    }
    std::ostringstream s;
    for (unsigned int i = 0; i < len; ++i) {
        s << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
    }
    return s.str();
}

std::string sha256_file(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot read " + path.string());
    }
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return sha256_hex(bytes);
}

std::string config_hash(const PipelineConfig& c)
{
    std::string material = c.to_json().dump();
    for (const auto& f : input_files(c)) {
        material += '\n' + f.generic_string() + '=' + sha256_file(c.resolve(f));
    }
    return sha256_hex(material);
}

// ---------------------------------------------------------------------------
// Manifest

const StageRecord* RunManifest::find(Stage s) const
{
    for (const auto& r : stages) {
        if (r.stage == s) {
            return &r;
        }
    }
    return nullptr;
}

json RunManifest::to_json() const
{
    json st = json::array();
    for (const auto& r : stages) {
        st.push_back({{"stage", to_string(r.stage)}, {"cache_hit", r.cache_hit}, {"seconds", r.seconds}, {"outputs", r.outputs}});
    }
    return {{"config_hash", config_hash}, {"version", version}, {"stages", st}};
}

RunManifest RunManifest::from_json(const json& j)
{
    try {
        RunManifest m;
        m.config_hash = j.at("config_hash").get<std::string>();
        m.version = j.at("version").get<std::string>();
        for (const auto& s : j.at("stages")) {
            StageRecord r;
            r.stage = parse_stage(s.at("stage").get<std::string>());
            r.cache_hit = s.value("cache_hit", false);
            r.seconds = s.value("seconds", 0.0);
            r.outputs = s.at("outputs").get<std::map<std::string, std::string>>();
            m.stages.push_back(std::move(r));
        }
        return m;
    } catch (const json::exception& e) {
        throw FormatError(std::string("manifest: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// Stage implementations

namespace {

struct PlotRow {
    PlotRecord plot;
    std::string set;
};

void write_plot_table(const fs::path& path, const std::vector<PlotRow>& rows)
{
    std::ofstream out(path);
    CsvWriter w(out);
    w.row({"plot_id", "x_m", "y_m", "inventory_year", "panel", "forested_fraction", "max_canopy_height_m", "agb_crm",
           "agb_nsvb", "set"});
    for (const auto& r : rows) {
        const auto& p = r.plot;
        w.field(p.plot_id)
            .field(p.location.x)
            .field(p.location.y)
            .field(p.inventory_year)
            .field(p.panel)
            .field(p.forested_fraction)
            .field(p.max_canopy_height_m)
            .field(p.agb_crm)
            .field(p.agb_nsvb)
            .field(r.set);
        w.end_row();
    }
}

std::vector<PlotRow> read_plot_table(const fs::path& path)
{
    const auto t = CsvTable::read(path);
    const auto c_id = t.column("plot_id"), c_x = t.column("x_m"), c_y = t.column("y_m"),
               c_year = t.column("inventory_year"), c_panel = t.column("panel"), c_ff = t.column("forested_fraction"),
               c_h = t.column("max_canopy_height_m"), c_crm = t.column("agb_crm"), c_nsvb = t.column("agb_nsvb"),
               c_set = t.column("set");
    std::vector<PlotRow> rows;
    for (std::size_t r = 0; r < t.rows(); ++r) {
        PlotRow row;
        row.plot.plot_id = t.cell(r, c_id);
        row.plot.location = {t.number(r, c_x), t.number(r, c_y)};
        row.plot.inventory_year = static_cast<int>(t.integer(r, c_year));
        row.plot.panel = static_cast<int>(t.integer(r, c_panel));
        row.plot.forested_fraction = t.number(r, c_ff);
        row.plot.max_canopy_height_m = t.optional_number(r, c_h);
        row.plot.agb_crm = t.number(r, c_crm);
        row.plot.agb_nsvb = t.number(r, c_nsvb);
        row.set = t.cell(r, c_set);
        rows.push_back(std::move(row));
    }
    return rows;
}

void write_json(const fs::path& path, const json& j) { std::ofstream(path) << j.dump(2) << '\n'; }

json read_json(const fs::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot read " + path.string());
    }
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

/// Predictor year nearest to `year`; ties go to the earlier year.
int nearest_year(const std::map<int, std::vector<fs::path>>& predictors, int year)
{
    int best = predictors.begin()->first;
    for (const auto& [y, _] : predictors) {
        if (std::abs(y - year) < std::abs(best - year)) {
            best = y;
        }
    }
    return best;
}

struct Context {
    const PipelineConfig& cfg;
    fs::path out;
    std::map<int, std::vector<Grid>> layer_cache;

    const std::vector<Grid>& layers(int year)
    {
        auto it = layer_cache.find(year);
        if (it == layer_cache.end()) {
            std::vector<Grid> grids;
            for (const auto& p : cfg.predictors.at(year)) {
                grids.push_back(read_grid(cfg.resolve(p)));
            }
            for (std::size_t k = 1; k < grids.size(); ++k) {
                require_aligned(grids[0], grids[k], "predictor stack");
            }
            it = layer_cache.emplace(year, std::move(grids)).first;
        }
        return it->second;
    }

    std::uint64_t seed(std::uint64_t stream) const { return derive_seed(cfg.seed, {stream}); }

    fs::path stage_dir(Stage s) const
    {
        const auto d = out / std::string(to_string(s));
        fs::create_directories(d);
        return d;
    }

    std::string rel(const fs::path& p) const { return fs::relative(p, out).generic_string(); }

    fs::path map_path(Allometry a, int year) const
    {
        return out / "predict" / ("agb_" + std::string(to_string(a)) + "_" + std::to_string(year) + ".bin");
    }

    bool has(Allometry a) const
    {
        return std::find(cfg.allometries.begin(), cfg.allometries.end(), a) != cfg.allometries.end();
    }
};

using Outputs = std::vector<fs::path>;

Outputs stage_ingest(Context& ctx)
{
    const auto dir = ctx.stage_dir(Stage::ingest);
    auto trees = load_trees(ctx.cfg.resolve(ctx.cfg.trees));
    auto plots = load_plots(ctx.cfg.resolve(ctx.cfg.plots));
    attach_plot_agb(plots.records, trees.records);

    std::vector<PlotRow> all;
    for (const auto& p : plots.records) {
        all.push_back({p, "all"});
    }
    write_plot_table(dir / "plots_all.csv", all);

    const auto selected = select_single_inventory(plots.records, ctx.seed(1));
    const auto part = split_by_panel(selected, ctx.cfg.holdout_panel, ctx.seed(2));
    const auto dev = filter_model_dev(part.model_development);

    std::vector<PlotRow> rows;
    for (const auto& p : dev.records) {
        rows.push_back({p, "development"});
    }
    for (const auto& p : part.map_assessment) {
        rows.push_back({p, "assessment"});
    }
    write_plot_table(dir / "plots_selected.csv", rows);

    std::vector<std::string> warnings = trees.warnings;
    warnings.insert(warnings.end(), plots.warnings.begin(), plots.warnings.end());
    warnings.insert(warnings.end(), dev.warnings.begin(), dev.warnings.end());
    write_json(dir / "ingest.json", {{"n_trees", trees.records.size()},
                                     {"n_plot_measurements", plots.records.size()},
                                     {"n_selected", selected.size()},
                                     {"holdout_panel", part.holdout_panel},
                                     {"n_development_candidates", part.model_development.size()},
                                     {"n_development", dev.records.size()},
                                     {"n_assessment", part.map_assessment.size()},
                                     {"warnings", warnings}});
    return {dir / "plots_all.csv", dir / "plots_selected.csv", dir / "ingest.json"};
}

struct FeatureRow {
    PlotRow plot;
    int predictor_year = 0;
    std::vector<double> features;
};

std::vector<FeatureRow> read_features(const Context& ctx)
{
    const auto t = CsvTable::read(ctx.out / "extract" / "features.csv");
    const auto c_id = t.column("plot_id"), c_year = t.column("inventory_year"), c_py = t.column("predictor_year"),
               c_set = t.column("set"), c_x = t.column("x_m"), c_y = t.column("y_m"), c_crm = t.column("agb_crm"),
               c_nsvb = t.column("agb_nsvb");
    std::vector<std::size_t> c_f;
    for (const auto& f : ctx.cfg.features) {
        c_f.push_back(t.column(f));
    }
    std::vector<FeatureRow> rows;
    for (std::size_t r = 0; r < t.rows(); ++r) {
        FeatureRow row;
        row.plot.plot.plot_id = t.cell(r, c_id);
        row.plot.plot.inventory_year = static_cast<int>(t.integer(r, c_year));
        row.plot.plot.location = {t.number(r, c_x), t.number(r, c_y)};
        row.plot.plot.agb_crm = t.number(r, c_crm);
        row.plot.plot.agb_nsvb = t.number(r, c_nsvb);
        row.plot.set = t.cell(r, c_set);
        row.predictor_year = static_cast<int>(t.integer(r, c_py));
        for (auto c : c_f) {
            row.features.push_back(t.number(r, c));
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

Outputs stage_extract(Context& ctx)
{
    const auto dir = ctx.stage_dir(Stage::extract);
    const auto plots = read_plot_table(ctx.out / "ingest" / "plots_selected.csv");
    std::ofstream out(dir / "features.csv");
    CsvWriter w(out);
    for (const auto* h : {"plot_id", "inventory_year", "predictor_year", "set", "x_m", "y_m", "agb_crm", "agb_nsvb"}) {
        w.field(h);
    }
    for (const auto& f : ctx.cfg.features) {
        w.field(f);
    }
    w.end_row();

    std::vector<std::string> dropped;
    std::map<std::string, std::size_t> counts;
    for (const auto& row : plots) {
        const auto& p = row.plot;
        const int year = nearest_year(ctx.cfg.predictors, p.inventory_year);
        const auto& layers = ctx.layers(year);
        const auto weights = pixel_overlap_weights(PlotFootprint(p.location), layers.front().geometry());
        std::vector<double> values;
        for (const auto& g : layers) {
            const auto v = extract_weighted_mean(g, weights);
            if (!v) {
                break;
            }
            values.push_back(*v);
        }
        if (values.size() != layers.size()) {
            dropped.push_back(p.plot_id + " (" + std::to_string(p.inventory_year) + "): no valid predictor cells");
            continue;
        }
        ++counts[row.set];
        w.field(p.plot_id).field(p.inventory_year).field(year).field(row.set).field(p.location.x).field(p.location.y);
        w.field(p.agb_crm).field(p.agb_nsvb);
        for (double v : values) {
            w.field(v);
        }
        w.end_row();
    }
    write_json(dir / "extract.json", {{"rows", counts}, {"dropped", dropped}});
    return {dir / "features.csv", dir / "extract.json"};
}

json metrics_json(const MetricsReport& m)
{
    return {{"n", m.n},      {"rmse", m.rmse},         {"mae", m.mae},         {"me", m.me},
            {"r2", opt(m.r2)}, {"pct_rmse", opt(m.pct_rmse)}, {"pct_mae", opt(m.pct_mae)}, {"dr", opt(m.dr)}};
}

Outputs stage_fit(Context& ctx)
{
    const auto dir = ctx.stage_dir(Stage::fit);
    std::vector<FeatureRow> dev;
    for (auto& r : read_features(ctx)) {
        if (r.plot.set == "development") {
            dev.push_back(std::move(r));
        }
    }
    const std::size_t n = dev.size();
    if (n < static_cast<std::size_t>(2 * ctx.cfg.folds)) {
        throw InvalidArgument("fit: only " + std::to_string(n) + " development plots");
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto rng = make_engine(ctx.seed(3));
    std::shuffle(order.begin(), order.end(), rng);
    const auto n_train = static_cast<std::size_t>(std::llround(ctx.cfg.train_fraction * static_cast<double>(n)));
    const std::span<const std::size_t> train_idx(order.data(), n_train);
    const std::span<const std::size_t> test_idx(order.data() + n_train, n - n_train);

    const auto matrix = [&](std::span<const std::size_t> idx) {
        FeatureMatrix X(ctx.cfg.features, idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i) {
            std::copy(dev[idx[i]].features.begin(), dev[idx[i]].features.end(), X.row(i).begin());
        }
        return X;
    };
    const auto Xtr = matrix(train_idx);
    const auto Xte = matrix(test_idx);

    Outputs outputs;
    std::ofstream tm(dir / "test_metrics.csv");
    CsvWriter tw(tm);
    tw.row({"allometry", "model", "n", "rmse", "mae", "me", "r2"});

    for (std::size_t ai = 0; ai < ctx.cfg.allometries.size(); ++ai) {
        const auto a = ctx.cfg.allometries[ai];
        const auto target = [&](std::span<const std::size_t> idx) {
            std::vector<double> y;
            for (auto i : idx) {
                y.push_back(dev[i].plot.plot.agb(a));
            }
            return y;
        };
        const auto ytr = target(train_idx);
        const auto yte = target(test_idx);
        const double ybar = std::accumulate(ytr.begin(), ytr.end(), 0.0) / static_cast<double>(ytr.size());

        EnsembleOptions opts{ctx.cfg.learner_grids, ctx.cfg.folds, derive_seed(ctx.cfg.seed, {4, ai})};
        auto training = train_ensemble(Xtr, ytr, opts);
        const auto& model = training.model;

        json searches = json::array();
        for (std::size_t l = 0; l < training.searches.size(); ++l) {
            const auto& s = training.searches[l];
            json cands = json::array();
            for (std::size_t c = 0; c < s.cv_rmse.size(); ++c) {
                cands.push_back({{"spec", spec_to_json(ctx.cfg.learner_grids[l][c])}, {"cv_rmse", s.cv_rmse[c]}});
            }
            searches.push_back({{"best", spec_to_json(s.best)}, {"best_index", s.best_index}, {"candidates", cands}});
        }

        json test = nullptr;
        json base_test = json::array();
        const auto name = std::string(to_string(a));
        if (!yte.empty()) {
            const auto pred = model.predict(Xte);
            const auto m = basic_metrics(PairedSample(yte, pred), ybar);
            test = metrics_json(m);
            tw.field(name).field("ensemble").field(m.n).field(m.rmse).field(m.mae).field(m.me).field(m.r2);
            tw.end_row();
            for (std::size_t b = 0; b < model.n_base(); ++b) {
                std::vector<double> pb(yte.size());
                for (std::size_t i = 0; i < yte.size(); ++i) {
                    pb[i] = model.base(b).predict(Xte.row(i));
                }
                const auto mb = basic_metrics(PairedSample(yte, pb), ybar);
                const auto label = describe(model.base(b).spec());
                base_test.push_back({{"model", label}, {"metrics", metrics_json(mb)}});
                tw.field(name).field(label).field(mb.n).field(mb.rmse).field(mb.mae).field(mb.me).field(mb.r2);
                tw.end_row();
            }
        }

        write_json(dir / ("model_" + name + ".json"),
                   {{"target", name}, {"ybar_train", ybar}, {"n_train", ytr.size()}, {"ensemble", model.to_json()}});
        write_json(dir / ("fit_" + name + ".json"),
                   {{"target", name},
                    {"n_train", ytr.size()},
                    {"n_test", yte.size()},
                    {"grid_search", searches},
                    {"stack",
                     {{"intercept", model.stack().intercept},
                      {"coefficients", model.stack().coefficients},
                      {"collinear", model.stack().collinear}}},
                    {"test", test},
                    {"base_test", base_test}});
        outputs.push_back(dir / ("model_" + name + ".json"));
        outputs.push_back(dir / ("fit_" + name + ".json"));
    }
    outputs.push_back(dir / "test_metrics.csv");
    return outputs;
}

struct LoadedModel {
    EnsembleModel model;
    double ybar_train = 0.0;
};

LoadedModel load_model(const Context& ctx, Allometry a)
{
    const auto j = read_json(ctx.out / "fit" / ("model_" + std::string(to_string(a)) + ".json"));
    return {EnsembleModel::from_json(j.at("ensemble")), j.at("ybar_train").get<double>()};
}

Outputs stage_predict(Context& ctx)
{
    const auto dir = ctx.stage_dir(Stage::predict);
    Outputs outputs;
    for (auto a : ctx.cfg.allometries) {
        const auto m = load_model(ctx, a);
        for (int year : ctx.cfg.map_years) {
            const auto raw = predict_grid(m.model, ctx.layers(year));
            const auto lc = read_grid(ctx.cfg.resolve(ctx.cfg.landcover.at(year)));
            auto masked = mask_landcover(raw, lc, ctx.cfg.removed_classes);
            masked.set_units("Mg/ha");
            const auto path = ctx.map_path(a, year);
            write_grid(masked, path, GridFormat::binary);
            outputs.push_back(path);
        }
    }
    return outputs;
}

std::string scale_label(double km)
{
    return km <= kPassthroughSpacingKm ? std::string("Plot:Pixel") : format_double(km) + " km";
}

BBox region_of(Context& ctx) { return ctx.layers(ctx.cfg.map_years.front()).front().geometry().extent(); }

Outputs stage_assess(Context& ctx)
{
    const auto dir = ctx.stage_dir(Stage::assess);
    std::vector<FeatureRow> rows;
    for (auto& r : read_features(ctx)) {
        if (r.plot.set == "assessment") {
            rows.push_back(std::move(r));
        }
    }
    if (rows.size() < 2) {
        throw InvalidArgument("assess: fewer than two assessment plots");
    }
    const auto region = region_of(ctx);
    Outputs outputs;
    json ks = json::object();
    for (auto a : ctx.cfg.allometries) {
        const auto name = std::string(to_string(a));
        const auto m = load_model(ctx, a);
        LocatedPairs data;
        std::vector<double> row_values(ctx.cfg.features.size());
        for (const auto& r : rows) {
            // Predict every overlapped pixel, then take the area-weighted mean.
            const auto& layers = ctx.layers(r.predictor_year);
            const auto weights = pixel_overlap_weights(PlotFootprint(r.plot.plot.location), layers.front().geometry());
            double sw = 0.0, swv = 0.0;
            for (const auto& cw : weights) {
                const auto i = layers.front().index(cw.col, cw.row);
                bool ok = true;
                for (std::size_t k = 0; k < layers.size() && ok; ++k) {
                    ok = layers[k].valid(i);
                    if (ok) {
                        row_values[k] = layers[k].value(i);
                    }
                }
                if (ok) {
                    const double v = static_cast<float>(m.model.predict(row_values));
                    sw += cw.weight;
                    swv += cw.weight * v;
                }
            }
            if (!(sw > 0.0)) {
                continue;
            }
            data.pairs.ids.push_back(r.plot.plot.plot_id);
            data.pairs.y.push_back(r.plot.plot.agb(a));
            data.pairs.yhat.push_back(swv / sw);
            data.locations.push_back(r.plot.plot.location);
        }
        data.pairs.validate();

        {
            std::ofstream out(dir / ("pairs_" + name + ".csv"));
            CsvWriter w(out);
            w.row({"plot_id", "x_m", "y_m", "reference", "prediction"});
            for (std::size_t i = 0; i < data.pairs.size(); ++i) {
                w.field(data.pairs.ids[i])
                    .field(data.locations[i].x)
                    .field(data.locations[i].y)
                    .field(data.pairs.y[i])
                    .field(data.pairs.yhat[i]);
                w.end_row();
            }
        }

        const auto scales = multiscale_assessment(data, ctx.cfg.scales_km, m.ybar_train, region);
        std::ofstream out(dir / ("assessment_" + name + ".csv"));
        CsvWriter w(out);
        w.row({"Scale", "n", "PPH", "MAE", "% MAE", "RMSE", "% RMSE", "ME", "R2", "d_r"});
        json sj = json::array();
        for (const auto& s : scales) {
            w.field(scale_label(s.scale_km)).field(s.n).field(s.pph);
            if (s.metrics) {
                const auto& mm = *s.metrics;
                w.field(mm.mae).field(mm.pct_mae).field(mm.rmse).field(mm.pct_rmse).field(mm.me).field(mm.r2).field(mm.dr);
            } else {
                for (int k = 0; k < 7; ++k) {
                    w.empty();
                }
            }
            w.end_row();
            sj.push_back({{"scale_km", s.scale_km},
                          {"label", scale_label(s.scale_km)},
                          {"n", s.n},
                          {"pph", opt(s.pph)},
                          {"metrics", s.metrics ? metrics_json(*s.metrics) : json(nullptr)}});
        }
        {
            std::ofstream hx(dir / ("hex_aggregates_" + name + ".csv"));
            CsvWriter hw(hx);
            hw.row({"scale_km", "hex_id", "n", "y_mean", "yhat_mean"});
            for (const auto& s : scales) {
                for (const auto& h : s.aggregates) {
                    hw.field(s.scale_km).field(to_string(h.hex_id)).field(h.n_members).field(h.y_mean).field(h.yhat_mean);
                    hw.end_row();
                }
            }
        }
        write_json(dir / ("assessment_" + name + ".json"),
                   {{"target", name}, {"ybar_train", m.ybar_train}, {"scales", sj}});

        std::ofstream ecdf_out(dir / ("ecdf_" + name + ".csv"));
        CsvWriter ew(ecdf_out);
        ew.row({"source", "value", "F"});
        for (const auto& [label, values] : {std::pair{"reference", &data.pairs.y}, std::pair{"prediction", &data.pairs.yhat}}) {
            for (const auto& [v, f] : Ecdf(*values).table()) {
                ew.field(label).field(v).field(f);
                ew.end_row();
            }
        }
        ks[name] = {{"D", ks_statistic(data.pairs.y, data.pairs.yhat)}, {"n_reference", data.pairs.size()},
                    {"n_prediction", data.pairs.size()}};

        for (const auto* prefix : {"pairs_", "assessment_", "hex_aggregates_", "ecdf_"}) {
            outputs.push_back(dir / (prefix + name + ".csv"));
        }
        outputs.push_back(dir / ("assessment_" + name + ".json"));
    }
    write_json(dir / "ks.json", ks);
    outputs.push_back(dir / "ks.json");
    return outputs;
}

void require_both(const Context& ctx, Stage s)
{
    if (!ctx.has(Allometry::crm) || !ctx.has(Allometry::nsvb)) {
        throw InvalidArgument(std::string(to_string(s)) + ": needs both crm and nsvb allometries");
    }
}

json acd_json(const std::optional<AcDecomposition>& d)
{
    if (!d) {
        return nullptr;
    }
    return {{"ac", d->ac}, {"ac_s", d->ac_s}, {"ac_u", d->ac_u}, {"ssd", d->ssd}, {"spd_u", d->spd_u},
            {"denominator", d->denominator}};
}

Outputs stage_agree(Context& ctx)
{
    require_both(ctx, Stage::agree);
    const auto dir = ctx.stage_dir(Stage::agree);
    const int year = ctx.cfg.agreement_year;
    const auto crm = read_grid(ctx.map_path(Allometry::crm, year));
    const auto nsvb = read_grid(ctx.map_path(Allometry::nsvb, year));
    require_aligned(crm, nsvb, "agree");
    LocatedPairs data;
    for (int r = 0; r < crm.nrows(); ++r) {
        for (int c = 0; c < crm.ncols(); ++c) {
            const auto i = crm.index(c, r);
            if (crm.valid(i) && nsvb.valid(i)) {
                data.pairs.y.push_back(crm.value(i));
                data.pairs.yhat.push_back(nsvb.value(i));
                data.locations.push_back(crm.geometry().cell_center(c, r));
            }
        }
    }
    if (data.pairs.size() < 2) {
        throw InvalidArgument("agree: fewer than two jointly valid cells");
    }
    const auto rows = multiscale_agreement(data, ctx.cfg.scales_km, crm.geometry().extent());
    std::ofstream out(dir / "agreement.csv");
    CsvWriter w(out);
    w.row({"scale_km", "n", "AC", "ACs", "ACu"});
    json rj = json::array();
    for (const auto& r : rows) {
        w.field(r.scale_km).field(r.n);
        if (r.ac) {
            w.field(r.ac->ac).field(r.ac->ac_s).field(r.ac->ac_u);
        } else {
            w.empty().empty().empty();
        }
        w.end_row();
        rj.push_back({{"scale_km", r.scale_km}, {"n", r.n}, {"decomposition", acd_json(r.ac)}});
    }
    write_json(dir / "agreement.json", {{"year", year}, {"y", "crm"}, {"yhat", "nsvb"}, {"scales", rj}});
    return {dir / "agreement.csv", dir / "agreement.json"};
}

json summary_json(const Grid& g)
{
    const auto s = summarize(g);
    return {{"n_valid", s.n_valid}, {"mean", opt(s.mean)}, {"min", opt(s.min)}, {"max", opt(s.max)}, {"sum", opt(s.sum)}};
}

Outputs stage_diff(Context& ctx)
{
    const auto dir = ctx.stage_dir(Stage::diff);
    Outputs outputs;
    json summary = json::object();
    const auto put = [&](const Grid& g, const std::string& file) {
        write_grid(g, dir / file, GridFormat::binary);
        outputs.push_back(dir / file);
        summary[file] = summary_json(g);
    };
    const bool both = ctx.has(Allometry::crm) && ctx.has(Allometry::nsvb);
    if (both) {
        for (int year : ctx.cfg.map_years) {
            const auto ys = std::to_string(year);
            const auto crm = read_grid(ctx.map_path(Allometry::crm, year));
            const auto nsvb = read_grid(ctx.map_path(Allometry::nsvb, year));
            put(difference(nsvb, crm), "agb_diff_" + ys + ".bin");
            const auto pr_crm = percent_rank(crm);
            const auto pr_nsvb = percent_rank(nsvb);
            put(pr_crm, "pct_rank_crm_" + ys + ".bin");
            put(pr_nsvb, "pct_rank_nsvb_" + ys + ".bin");
            put(difference(pr_nsvb, pr_crm), "pct_rank_diff_" + ys + ".bin");
        }
    }
    if (ctx.cfg.map_years.size() >= 2) {
        const int first = ctx.cfg.map_years.front();
        const int last = ctx.cfg.map_years.back();
        std::map<Allometry, Grid> change;
        for (auto a : ctx.cfg.allometries) {
            change[a] = difference(read_grid(ctx.map_path(a, last)), read_grid(ctx.map_path(a, first)));
            put(change[a], "change_" + std::string(to_string(a)) + ".bin");
        }
        if (both) {
            put(difference(change[Allometry::nsvb], change[Allometry::crm]), "change_diff.bin");
        }
    }
    write_json(dir / "diff.json", summary);
    outputs.push_back(dir / "diff.json");
    return outputs;
}

Outputs stage_stocks(Context& ctx)
{
    const auto dir = ctx.stage_dir(Stage::stocks);
    const auto plots = read_plot_table(ctx.out / "ingest" / "plots_all.csv");
    const auto fractions = load_carbon_fractions(ctx.cfg.resolve(ctx.cfg.carbon_fractions));

    struct Row {
        StockEstimate est;
        std::string basis;
        double fraction = 1.0;
    };
    std::vector<Row> rows;
    // design and model AGB/AGC per allometry and year, for the Table-style output
    std::map<std::tuple<Allometry, StockQuantity, int, StockMethod>, StockEstimate> table;

    for (auto a : ctx.cfg.allometries) {
        for (int year : ctx.cfg.map_years) {
            const auto map = read_grid(ctx.map_path(a, year));
            const double extent_ha = map.geometry().area_ha();
            const double region_ha = ctx.cfg.region_area_ha.value_or(extent_ha);
            auto full = model_stock(map, year, a, AreaBasis::full_extent);
            full.total_mt *= region_ha / extent_ha;
            full.region_area_ha = region_ha;
            const auto valid = model_stock(map, year, a, AreaBasis::valid_cells);

            double fraction = kCrmCarbonFraction;
            if (a == Allometry::nsvb) {
                const auto it = fractions.find(year);
                if (it == fractions.end()) {
                    throw InvalidArgument("stocks: no carbon fractions for " + std::to_string(year));
                }
                fraction = weighted_carbon_fraction(it->second);
            }

            std::vector<PlotRecord> year_plots;
            for (const auto& p : plots) {
                if (p.plot.inventory_year == year) {
                    year_plots.push_back(p.plot);
                }
            }
            std::vector<std::pair<StockEstimate, std::string>> agb{{full, "region"}, {valid, "valid_cells"}};
            if (!year_plots.empty()) {
                agb.emplace_back(design_stock(year_plots, region_ha, year, a), "region");
            }
            for (const auto& [e, basis] : agb) {
                const auto agc = agb_to_agc(e, fraction);
                rows.push_back({e, basis, 1.0});
                rows.push_back({agc, basis, fraction});
                if (basis == "region") {
                    table[{a, StockQuantity::agb, year, e.method}] = e;
                    table[{a, StockQuantity::agc, year, e.method}] = agc;
                }
            }
        }
    }

    {
        std::ofstream out(dir / "stocks.csv");
        CsvWriter w(out);
        w.row({"method", "allometry", "quantity", "year", "area_basis", "total_mt", "area_ha", "carbon_fraction"});
        for (const auto& r : rows) {
            w.field(to_string(r.est.method))
                .field(to_string(r.est.allometry))
                .field(to_string(r.est.quantity))
                .field(r.est.year)
                .field(r.basis)
                .field(r.est.total_mt)
                .field(r.est.region_area_ha);
            if (r.est.quantity == StockQuantity::agc) {
                w.field(r.fraction);
            } else {
                w.empty();
            }
            w.end_row();
        }
    }

    // Table layout: one row per (allometry, quantity, year or change); design,
    // model and design minus model.
    std::ofstream out(dir / "stocks_table.csv");
    CsvWriter w(out);
    w.row({"allometry", "quantity", "year", "design_mt", "model_mt", "design_minus_model_mt"});
    json tj = json::array();
    const auto find = [&](Allometry a, StockQuantity q, int y, StockMethod m) -> const StockEstimate* {
        const auto it = table.find({a, q, y, m});
        return it == table.end() ? nullptr : &it->second;
    };
    const auto emit = [&](Allometry a, StockQuantity q, const std::string& label, std::optional<double> d,
                          std::optional<double> m) {
        std::optional<double> diff;
        if (d && m) {
            diff = *d - *m;
        }
        w.field(to_string(a)).field(to_string(q)).field(label).field(d).field(m).field(diff);
        w.end_row();
        tj.push_back({{"allometry", to_string(a)},
                      {"quantity", to_string(q)},
                      {"year", label},
                      {"design_mt", opt(d)},
                      {"model_mt", opt(m)},
                      {"design_minus_model_mt", opt(diff)}});
    };
    for (auto a : ctx.cfg.allometries) {
        for (auto q : {StockQuantity::agb, StockQuantity::agc}) {
            for (int year : ctx.cfg.map_years) {
                const auto* d = find(a, q, year, StockMethod::design);
                const auto* m = find(a, q, year, StockMethod::model);
                emit(a, q, std::to_string(year), d ? std::optional(d->total_mt) : std::nullopt,
                     m ? std::optional(m->total_mt) : std::nullopt);
            }
            if (ctx.cfg.map_years.size() >= 2) {
                const int y0 = ctx.cfg.map_years.front();
                const int y1 = ctx.cfg.map_years.back();
                std::optional<double> dd, dm;
                if (const auto *l = find(a, q, y1, StockMethod::design), *e = find(a, q, y0, StockMethod::design); l && e) {
                    dd = stock_change(*l, *e);
                }
                if (const auto *l = find(a, q, y1, StockMethod::model), *e = find(a, q, y0, StockMethod::model); l && e) {
                    dm = stock_change(*l, *e);
                }
                emit(a, q, "change", dd, dm);
            }
        }
    }
    write_json(dir / "stocks.json",
               {{"table", tj},
                {"design_estimator", "simple expansion: mean plot density times region area (not post-stratified)"},
                {"model_estimator", "mean valid-cell density times region area; valid_cells rows use valid-cell area"},
                {"crm_carbon_fraction", kCrmCarbonFraction}});
    return {dir / "stocks.csv", dir / "stocks_table.csv", dir / "stocks.json"};
}

Outputs stage_rescale(Context& ctx)
{
    require_both(ctx, Stage::rescale);
    const auto dir = ctx.stage_dir(Stage::rescale);
    const int year = ctx.cfg.rescale_year;
    const auto nsvb = read_grid(ctx.map_path(Allometry::nsvb, year));
    const auto crm = read_grid(ctx.map_path(Allometry::crm, year));
    const auto elev = read_grid(ctx.cfg.resolve(ctx.cfg.elevation));
    const auto fit = rescale_fit(nsvb, crm, elev, ctx.cfg.rescale_sample, ctx.cfg.rescale_train_fraction, ctx.seed(5));

    std::ofstream out(dir / "rescale.csv");
    CsvWriter w(out);
    w.row({"term", "value"});
    const std::vector<std::pair<std::string, std::optional<double>>> terms{
        {"intercept", fit.beta0},   {"crm", fit.beta1},         {"elevation", fit.beta2},
        {"test_rmse", fit.test_rmse}, {"test_mae", fit.test_mae}, {"test_me", fit.test_me},
        {"test_r2", fit.test_r2},   {"n_train", static_cast<double>(fit.n_train)},
        {"n_test", static_cast<double>(fit.n_test)}};
    for (const auto& [t, v] : terms) {
        w.field(t).field(v);
        w.end_row();
    }
    write_json(dir / "rescale.json", {{"year", year},
                                      {"beta0", fit.beta0},
                                      {"beta1", fit.beta1},
                                      {"beta2", fit.beta2},
                                      {"test_rmse", opt(fit.test_rmse)},
                                      {"test_mae", opt(fit.test_mae)},
                                      {"test_me", opt(fit.test_me)},
                                      {"test_r2", opt(fit.test_r2)},
                                      {"n_train", fit.n_train},
                                      {"n_test", fit.n_test}});
    return {dir / "rescale.csv", dir / "rescale.json"};
}

Outputs run_stage(Stage s, Context& ctx)
{
    switch (s) {
    case Stage::ingest:
        return stage_ingest(ctx);
    case Stage::extract:
        return stage_extract(ctx);
    case Stage::fit:
        return stage_fit(ctx);
    case Stage::predict:
        return stage_predict(ctx);
    case Stage::assess:
        return stage_assess(ctx);
    case Stage::agree:
        return stage_agree(ctx);
    case Stage::diff:
        return stage_diff(ctx);
    case Stage::stocks:
        return stage_stocks(ctx);
    case Stage::rescale:
        return stage_rescale(ctx);
    }
    return {};
}

bool intact(const fs::path& out, const StageRecord& r)
{
    if (r.outputs.empty()) {
        return false;
    }
    for (const auto& [rel, hash] : r.outputs) {
        const auto p = out / rel;
        if (!fs::is_regular_file(p) || sha256_file(p) != hash) {
            return false;
        }
    }
    return true;
}

} // namespace

RunManifest run(const PipelineConfig& config, std::span<const Stage> stages, const RunOptions& options)
{
    if (stages.empty()) {
        throw InvalidArgument("run: no stages requested");
    }
    const std::set<Stage> requested(stages.begin(), stages.end());
    const auto out = config.out();
    fs::create_directories(out);
    const auto manifest_path = out / "manifest.json";
    const auto hash = config_hash(config);

    std::optional<RunManifest> previous;
    if (fs::exists(manifest_path)) {
        previous = RunManifest::from_json(read_json(manifest_path));
    }
    const bool same_config = previous && previous->config_hash == hash;

    // Upstream stages outside the request must come from an intact cache.
    for (auto s : requested) {
        for (auto d : dependencies(s)) {
            if (requested.count(d)) {
                continue;
            }
            if (previous && !same_config) {
                throw Error("config hash mismatch against cache in " + out.string() + ": stage '"
                            + std::string(to_string(s)) + "' needs cached '" + std::string(to_string(d))
                            + "' produced under a different config");
            }
            const StageRecord* rec = previous ? previous->find(d) : nullptr;
            if (!rec || !intact(out, *rec)) {
                throw Error("missing upstream artifact: stage '" + std::string(to_string(s)) + "' needs '"
                            + std::string(to_string(d)) + "' outputs in " + out.string());
            }
        }
    }

    RunManifest manifest;
    manifest.config_hash = hash;
    manifest.version = std::string(version());
    if (same_config) {
        for (const auto& r : previous->stages) {
            if (!requested.count(r.stage)) {
                manifest.stages.push_back(r);
            }
        }
    }

    Context ctx{config, out, {}};
    std::set<Stage> recomputed;
    for (auto s : kStages) {
        if (!requested.count(s)) {
            continue;
        }
        const StageRecord* prev = same_config ? previous->find(s) : nullptr;
        bool upstream_changed = false;
        for (auto d : dependencies(s)) {
            upstream_changed = upstream_changed || recomputed.count(d) > 0;
        }
        StageRecord rec;
        rec.stage = s;
        if (!options.force && prev && !upstream_changed && intact(out, *prev)) {
            rec.cache_hit = true;
            rec.outputs = prev->outputs;
            if (options.log) {
                *options.log << "[" << to_string(s) << "] cache hit\n";
            }
        } else {
            const auto t0 = std::chrono::steady_clock::now();
            const auto files = run_stage(s, ctx);
            rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            for (const auto& f : files) {
                rec.outputs[ctx.rel(f)] = sha256_file(f);
            }
            recomputed.insert(s);
            if (options.log) {
                *options.log << "[" << to_string(s) << "] " << std::fixed << std::setprecision(2) << rec.seconds
                             << " s, " << files.size() << " outputs\n";
                options.log->unsetf(std::ios::floatfield);
            }
        }
        manifest.stages.push_back(std::move(rec));
        // Write after every stage so a failure later keeps finished work cached.
        std::sort(manifest.stages.begin(), manifest.stages.end(),
                  [](const StageRecord& a, const StageRecord& b) { return a.stage < b.stage; });
        write_json(manifest_path, manifest.to_json());
    }
    return manifest;
}

// ---------------------------------------------------------------------------
// Report

namespace {

std::string fixed2(const json& v)
{
    if (v.is_null()) {
        return "";
    }
    std::ostringstream s;
    s << std::fixed << std::setprecision(2) << v.get<double>();
    return s.str();
}

} // namespace

fs::path write_report(const PipelineConfig& config, const ReportOptions& options)
{
    const auto out = config.out();
    const auto dir = out / "report";
    fs::create_directories(dir);
    std::ostringstream md;
    json rj = json::object();
    md << "# agbmap run report\n\n";

    const auto manifest_path = out / "manifest.json";
    if (fs::exists(manifest_path)) {
        const auto m = RunManifest::from_json(read_json(manifest_path));
        md << "Config hash `" << m.config_hash << "`, version " << m.version << ".\n\n";
        rj["config_hash"] = m.config_hash;
    }

    for (auto a : config.allometries) {
        const auto name = std::string(to_string(a));
        const auto path = out / "assess" / ("assessment_" + name + ".json");
        if (!fs::exists(path)) {
            continue;
        }
        const auto j = read_json(path);
        rj["assessment"][name] = j;
        md << "## Map accuracy (" << name << ")\n\n"
           << "| Scale | n | PPH | MAE | % MAE | RMSE | % RMSE | ME | R2 | d_r |\n"
           << "|---|---|---|---|---|---|---|---|---|---|\n";
        for (const auto& s : j.at("scales")) {
            md << "| " << s.at("label").get<std::string>() << " | " << s.at("n").get<std::size_t>() << " | "
               << fixed2(s.at("pph"));
            const auto& mm = s.at("metrics");
            for (const auto* k : {"mae", "pct_mae", "rmse", "pct_rmse", "me", "r2", "dr"}) {
                md << " | " << (mm.is_null() ? "" : fixed2(mm.at(k)));
            }
            md << " |\n";
        }
        md << '\n';
    }
    if (fs::exists(out / "assess" / "ks.json")) {
        const auto ks = read_json(out / "assess" / "ks.json");
        rj["ks"] = ks;
        md << "## Distribution comparison\n\n";
        for (auto it = ks.begin(); it != ks.end(); ++it) {
            md << "- " << it.key() << ": KS D = " << it->at("D").get<double>() << '\n';
        }
        md << '\n';
    }
    if (fs::exists(out / "agree" / "agreement.json")) {
        const auto j = read_json(out / "agree" / "agreement.json");
        rj["agreement"] = j;
        md << "## NSVB vs CRM map agreement (" << j.at("year").get<int>() << ")\n\n"
           << "| Scale (km) | n | AC | ACs | ACu |\n|---|---|---|---|---|\n";
        for (const auto& s : j.at("scales")) {
            const auto& d = s.at("decomposition");
            md << "| " << (s.at("scale_km").get<double>() == 0.0 ? std::string("pixel") : format_double(s.at("scale_km").get<double>()))
               << " | " << s.at("n").get<std::size_t>() << " | " << (d.is_null() ? "" : fixed2(d.at("ac"))) << " | "
               << (d.is_null() ? "" : fixed2(d.at("ac_s"))) << " | " << (d.is_null() ? "" : fixed2(d.at("ac_u")))
               << " |\n";
        }
        md << '\n';
    }
    if (fs::exists(out / "stocks" / "stocks.json")) {
        const auto j = read_json(out / "stocks" / "stocks.json");
        rj["stocks"] = j;
        md << "## Stocks (Mt)\n\n"
           << "| Allometry | Quantity | Year | Design | Model | Design - Model |\n|---|---|---|---|---|---|\n";
        for (const auto& r : j.at("table")) {
            md << "| " << r.at("allometry").get<std::string>() << " | " << r.at("quantity").get<std::string>() << " | "
               << r.at("year").get<std::string>() << " | " << fixed2(r.at("design_mt")) << " | "
               << fixed2(r.at("model_mt")) << " | " << fixed2(r.at("design_minus_model_mt")) << " |\n";
        }
        md << "\nDesign-based totals use a " << j.at("design_estimator").get<std::string>() << ".\n\n";
    }
    if (fs::exists(out / "rescale" / "rescale.json")) {
        const auto j = read_json(out / "rescale" / "rescale.json");
        rj["rescale"] = j;
        md << "## CRM to NSVB rescaling\n\n"
           << "NSVB = " << j.at("beta0").get<double>() << " + " << j.at("beta1").get<double>() << " * CRM + "
           << j.at("beta2").get<double>() << " * elevation; test RMSE " << fixed2(j.at("test_rmse")) << ", R2 "
           << fixed2(j.at("test_r2")) << ".\n\n";
    }
    if (options.cap) {
        const double cap = *options.cap;
        json capped = json::array();
        for (int year : config.map_years) {
            for (const auto& stem : {"agb_diff_", "pct_rank_diff_"}) {
                const auto src = out / "diff" / (stem + std::to_string(year) + ".bin");
                if (fs::exists(src)) {
                    const auto dst = dir / (stem + std::to_string(year) + "_capped.asc");
                    write_grid(cap_values(read_grid(src), cap), dst, GridFormat::ascii);
                    capped.push_back(fs::relative(dst, out).generic_string());
                }
            }
        }
        rj["capped_maps"] = {{"cap", cap}, {"files", capped}};
        md << "Display copies of the difference maps capped at +/- " << format_double(cap) << " are in report/.\n";
    }
    write_json(dir / "report.json", rj);
    std::ofstream(dir / "report.md") << md.str();
    return dir / "report.md";
}

} // namespace agbmap
