#pragma once

#include "agbmap/inventory.hpp"
#include "agbmap/learners.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace agbmap {

/// Library version string.
std::string_view version();

enum class Stage { ingest, extract, fit, predict, assess, agree, diff, stocks, rescale };

std::string_view to_string(Stage s);
Stage parse_stage(std::string_view text);
/// Comma-separated stage names, or "all".
std::vector<Stage> parse_stage_list(std::string_view text);
/// Every stage in dependency order.
std::vector<Stage> all_stages();
/// Direct upstream stages.
std::vector<Stage> dependencies(Stage s);

/// Everything a run needs. Relative paths resolve against `base_dir`.
struct PipelineConfig {
    std::filesystem::path base_dir;
    std::uint64_t seed = 0;

    std::filesystem::path trees;
    std::filesystem::path plots;
    std::filesystem::path carbon_fractions;
    std::filesystem::path elevation;
    std::map<int, std::filesystem::path> landcover;               // year -> grid
    std::map<int, std::vector<std::filesystem::path>> predictors; // year -> one grid per feature

    std::vector<std::string> features;
    std::vector<Allometry> allometries{Allometry::crm, Allometry::nsvb};
    std::optional<int> holdout_panel; // empty: seeded random panel
    std::vector<int> map_years;
    std::vector<double> scales_km;
    std::set<int> removed_classes{1, 2, 5, 8};
    int folds = 5;
    double train_fraction = 0.8;
    std::vector<std::vector<LearnerSpec>> learner_grids;
    int agreement_year = 0;
    int rescale_year = 0;
    std::size_t rescale_sample = 1000000;
    double rescale_train_fraction = 0.8;
    std::optional<double> region_area_ha; // empty: full grid extent
    std::filesystem::path output_dir;

    /// Parses a config document. Throws InvalidArgument on schema errors
    /// (missing seed, unknown keys' types, bad values).
    static PipelineConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
    static PipelineConfig load(const std::filesystem::path& path);

    /// Canonical form (sorted keys, paths as given, output_dir omitted).
    nlohmann::json to_json() const;

    std::filesystem::path resolve(const std::filesystem::path& p) const;
    std::filesystem::path out() const { return resolve(output_dir); }
};

struct Finding {
    std::string kind; // "missing file", "alignment", "class code", "config"
    std::string message;
};

/// Checks paths, class codes, years and grid alignment; empty means valid.
std::vector<Finding> validate(const PipelineConfig& config);

/// SHA-256 of the canonical config plus the contents of every input file.
std::string config_hash(const PipelineConfig& config);
std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::filesystem::path& path);

struct StageRecord {
    Stage stage = Stage::ingest;
    bool cache_hit = false;
    double seconds = 0.0;
    std::map<std::string, std::string> outputs; // path relative to output dir -> sha256
};

struct RunManifest {
    std::string config_hash;
    std::string version;
    std::vector<StageRecord> stages;

    const StageRecord* find(Stage s) const;
    nlohmann::json to_json() const;
    static RunManifest from_json(const nlohmann::json& j);
};

struct RunOptions {
    /// Recompute requested stages even when cached outputs are intact.
    bool force = false;
    /// Progress lines; null for silence.
    std::ostream* log = nullptr;
};

/// Runs `stages` in dependency order, writing outputs and manifest.json under the
/// output directory. Upstream stages that are not requested must be present in
/// the manifest with intact outputs; a manifest written for a different config
/// hash is an error in that case. Requested stages whose outputs are intact
/// and whose upstreams were not recomputed are cache hits.
RunManifest run(const PipelineConfig& config, std::span<const Stage> stages, const RunOptions& options = {});

struct ReportOptions {
    /// Clamp difference maps to +/- cap in the report's display copies.
    std::optional<double> cap;
};

/// Collects available stage outputs into report/report.md and report/report.json.
std::filesystem::path write_report(const PipelineConfig& config, const ReportOptions& options = {});

} // namespace agbmap
