#include "mfce/experiment.hpp"
#include "mfce/models_pde.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>

namespace {

int cmd_estimate(const std::string& config_path, std::int64_t seed_override,
                 const std::string& out_override) {
    mfce::ExperimentConfig config = mfce::parse_config_file(config_path);
    if (seed_override >= 0) config.seed = static_cast<std::uint64_t>(seed_override);
    if (!out_override.empty()) config.output_dir = out_override;
    mfce::ExperimentOutcome outcome = mfce::run_experiment(config);
    std::printf("p_hat = %.6e over %d repetition(s)%s\n", outcome.report.p_hat,
                config.repetitions,
                outcome.report.has_scv
                    ? (" (empirical SCV " + std::to_string(outcome.report.empirical_scv) + ")")
                          .c_str()
                    : "");
    std::printf("wrote %s/runs.csv and %s/report.json\n", config.output_dir.c_str(),
                config.output_dir.c_str());
    if (outcome.budget_exhausted) {
        for (const mfce::SingleRun& run : outcome.runs)
            if (run.failed) std::fprintf(stderr, "repetition failed: %s\n", run.error.c_str());
        return 2;
    }
    return 0;
}

int cmd_compare(const std::vector<std::string>& config_paths, const std::string& out_path) {
    std::vector<mfce::ExperimentConfig> configs;
    configs.reserve(config_paths.size());
    for (const std::string& p : config_paths) configs.push_back(mfce::parse_config_file(p));
    mfce::compare(configs, out_path);
    std::printf("wrote %s\n", out_path.c_str());
    return 0;
}

int cmd_pod_build(const std::string& config_path, const std::string& out_path) {
    mfce::ExperimentConfig config = mfce::parse_config_file(config_path);
    if (config.problem_kind != mfce::ExperimentConfig::ProblemKind::Pde)
        throw mfce::ConfigError("problem.type", "pod build requires a pde problem");
    config.pde.pod_file.clear(); // force a fresh build
    mfce::BuiltProblem built = mfce::build_problem(config);
    const auto& hier = dynamic_cast<const mfce::PdeHierarchy&>(*built.hierarchy);
    mfce::save_pod(hier.pod(), out_path);
    std::printf("wrote %s (q=%d, d_max=%d, %zu surrogate level(s), floor %.6g)\n",
                out_path.c_str(), hier.assembly().problem().q(), hier.pod().dims.back(),
                hier.pod().dims.size(), hier.pod().stability_floor);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Rare-event probability estimation with cross-entropy importance sampling"};
    app.require_subcommand(1);

    std::string config_path, out_path;
    std::int64_t seed_override = -1;
    std::vector<std::string> config_paths;

    CLI::App* estimate = app.add_subcommand("estimate", "Run one experiment config");
    estimate->add_option("--config", config_path, "JSON config path")->required();
    estimate->add_option("--seed", seed_override, "Override the config seed");
    estimate->add_option("--out", out_path, "Override the output directory");

    CLI::App* cmp = app.add_subcommand("compare", "Run several configs on one problem");
    cmp->add_option("--configs", config_paths, "JSON config paths")->required()->expected(-2);
    std::string compare_out = "compare.csv";
    cmp->add_option("--out", compare_out, "Output CSV path");

    CLI::App* pod = app.add_subcommand("pod", "POD hierarchy utilities");
    CLI::App* pod_build = pod->add_subcommand("build", "Precompute the PDE hierarchy");
    std::string pod_config, pod_out;
    pod_build->add_option("--config", pod_config, "JSON config path")->required();
    pod_build->add_option("--out", pod_out, "Output POD file")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (estimate->parsed()) return cmd_estimate(config_path, seed_override, out_path);
        if (cmp->parsed()) return cmd_compare(config_paths, compare_out);
        if (pod->parsed() && pod_build->parsed()) return cmd_pod_build(pod_config, pod_out);
    } catch (const mfce::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 1;
}
