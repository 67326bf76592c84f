// Command-line entry point: synthetic data, pipeline stages, reports.

#include "agbmap/error.hpp"
#include "agbmap/pipeline.hpp"
#include "agbmap/synth.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

namespace {

namespace fs = std::filesystem;

constexpr int kOk = 0;
constexpr int kInvalid = 1;
constexpr int kRuntime = 2;

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
};

void add_common(CLI::App* cmd, Common& c)
{
    cmd->add_option("--config", c.config, "Pipeline config (JSON)")->required();
    cmd->add_option("--seed", c.seed, "Override the config seed");
    cmd->add_option("--out", c.out, "Override the output directory");
}

agbmap::PipelineConfig load(const Common& c)
{
    auto cfg = agbmap::PipelineConfig::load(c.config);
    if (c.seed) {
        cfg.seed = *c.seed;
    }
    if (!c.out.empty()) {
        cfg.output_dir = fs::absolute(c.out);
    }
    return cfg;
}

bool report_findings(const agbmap::PipelineConfig& cfg)
{
    const auto findings = agbmap::validate(cfg);
    for (const auto& f : findings) {
        std::cerr << f.kind << ": " << f.message << '\n';
    }
    return findings.empty();
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Forest biomass map modeling, assessment and carbon accounting"};
    app.set_version_flag("--version", std::string(agbmap::version()));
    app.require_subcommand(1);

    agbmap::SynthOptions synth;
    std::string synth_out;
    auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic dataset and config");
    synth_cmd->add_option("--out", synth_out, "Destination directory")->required();
    synth_cmd->add_option("--seed", synth.seed, "Generator seed");
    synth_cmd->add_option("--plots", synth.n_plots, "Number of plots");
    synth_cmd->add_option("--cols", synth.ncols, "Grid columns");
    synth_cmd->add_option("--rows", synth.nrows, "Grid rows");
    synth_cmd->add_option("--cellsize", synth.cellsize, "Cell size (m)");
    synth_cmd->add_option("--plot-noise", synth.plot_noise_sd, "Plot reference noise sd (Mg/ha)");

    Common run_opts;
    std::string stages = "all";
    bool force = false;
    auto* run_cmd = app.add_subcommand("run", "Run pipeline stages");
    add_common(run_cmd, run_opts);
    run_cmd->add_option("--stages", stages, "Comma-separated stages or 'all'");
    run_cmd->add_flag("--force", force, "Recompute cached stages");

    std::map<agbmap::Stage, Common> stage_opts;
    std::map<agbmap::Stage, CLI::App*> stage_cmds;
    for (auto s : agbmap::all_stages()) {
        auto* cmd = app.add_subcommand(std::string(agbmap::to_string(s)), "Run the " + std::string(agbmap::to_string(s)) + " stage");
        add_common(cmd, stage_opts[s]);
        cmd->add_flag("--force", force, "Recompute even if cached");
        stage_cmds[s] = cmd;
    }

    Common report_opts;
    std::optional<double> cap;
    auto* report_cmd = app.add_subcommand("report", "Summarize stage outputs");
    add_common(report_cmd, report_opts);
    report_cmd->add_option("--cap", cap, "Cap difference maps at +/- this value in display copies");

    Common validate_opts;
    auto* validate_cmd = app.add_subcommand("validate", "Check a config");
    add_common(validate_cmd, validate_opts);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kInvalid;
    }

    bool running = false; // past config validation: every failure is a runtime error
    try {
        if (*synth_cmd) {
            agbmap::write_synthetic_dataset(synth_out, synth);
            std::cout << "wrote " << (fs::path(synth_out) / "config.json").string() << '\n';
            return kOk;
        }
        if (*validate_cmd) {
            const auto cfg = load(validate_opts);
            if (!report_findings(cfg)) {
                return kInvalid;
            }
            std::cout << "config is valid\n";
            return kOk;
        }
        if (*report_cmd) {
            const auto cfg = load(report_opts);
            running = true;
            std::cout << agbmap::write_report(cfg, {cap}).string() << '\n';
            return kOk;
        }

        std::vector<agbmap::Stage> selected;
        const Common* common = nullptr;
        if (*run_cmd) {
            selected = agbmap::parse_stage_list(stages);
            common = &run_opts;
        } else {
            for (auto& [s, cmd] : stage_cmds) {
                if (*cmd) {
                    selected = {s};
                    common = &stage_opts[s];
                }
            }
        }
        const auto cfg = load(*common);
        if (!report_findings(cfg)) {
            return kInvalid;
        }
        agbmap::RunOptions opts;
        opts.force = force;
        opts.log = &std::cerr;
        running = true;
        agbmap::run(cfg, selected, opts);
        return kOk;
    } catch (const agbmap::InvalidArgument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return running ? kRuntime : kInvalid;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kRuntime;
    }
}
