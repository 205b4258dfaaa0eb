#ifndef MFCE_EXPERIMENT_HPP
#define MFCE_EXPERIMENT_HPP

#include "mfce/ce_engine.hpp"
#include "mfce/estimators.hpp"
#include "mfce/families.hpp"
#include "mfce/models_analytic.hpp"
#include "mfce/models_pde.hpp"

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace mfce {

struct AnalyticSpec {
    int p = 3;
    Vec w;
    Vec mu_mean;
    std::vector<double> alphas;
    Vec u;
};

struct PdeSpec {
    ADRProblem problem;
    Vec mu_mean;
    int snapshots = 120;
    std::uint64_t snapshot_seed = 7;
    std::string pod_file; // optional precomputed hierarchy
};

struct ExperimentConfig {
    enum class ProblemKind { Analytic, Pde };
    enum class Algorithm { Standard, Preconditioned, Multifidelity };

    ProblemKind problem_kind = ProblemKind::Analytic;
    AnalyticSpec analytic;
    PdeSpec pde;
    std::optional<double> reference_p;

    Algorithm algorithm = Algorithm::Standard;
    CEConfig engine;
    std::vector<int> levels; // surrogate cost ranks / POD dims, ex the hifi marker
    int repetitions = 1;
    std::uint64_t seed = 0;
    std::string output_dir = "out";

    std::string problem_fingerprint; // canonical problem JSON, for compare()

    std::string algorithm_name() const;
    std::string levels_label() const; // "8|16|32|hifi"
};

/// Parses and validates a config; errors carry the dotted key path.
ExperimentConfig parse_config_file(const std::string& path);
ExperimentConfig parse_config_json(const std::string& json_text);

/// Problem instantiation shared by estimate/compare and the test suites.
struct BuiltProblem {
    std::shared_ptr<const ScoreHierarchy> hierarchy;
    std::shared_ptr<GaussianFamily> family;
    std::optional<double> reference_p;
    std::shared_ptr<const ADRAssembly> assembly; // PDE only
};

BuiltProblem build_problem(const ExperimentConfig& config);

/// One repetition's outcome in reporting form.
struct SingleRun {
    double p_hat = 0.0;
    int m_final = 0;
    double wall_clock_s = 0.0;
    long hf_evals = 0;
    std::vector<long> evals_per_level;  // by hierarchy level 1..K+1
    std::vector<int> iters_per_level;   // accepted update iterations
    CEState trace;                      // final-level trace for preconditioned
    PhaseTimings timings;
    bool failed = false;
    std::string error;
};

SingleRun execute_repetition(const ExperimentConfig& config, const BuiltProblem& problem,
                             std::uint64_t repetition, bool keep_batches = false);

struct ExperimentOutcome {
    EstimateReport report;
    std::vector<SingleRun> runs;
    bool budget_exhausted = false;
};

/// Runs all repetitions, writes `runs.csv` and `report.json` under
/// config.output_dir, and returns the aggregate.
ExperimentOutcome run_experiment(const ExperimentConfig& config);

/// Cross-algorithm comparison on a shared problem; writes `compare.csv`.
void compare(const std::vector<ExperimentConfig>& configs, const std::string& out_path);

/// runs.csv header for a given 𝒦 label list (stable schema).
std::string runs_csv_header(const std::vector<std::string>& level_labels);

std::vector<std::string> level_labels(const ExperimentConfig& config);

} // namespace mfce

#endif
