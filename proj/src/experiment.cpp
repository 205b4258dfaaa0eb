#include "mfce/experiment.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <mutex>
#include <numbers>
#include <sstream>

namespace mfce {

using nlohmann::json;

namespace {

json load_json(const std::string& text) {
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError("<root>", std::string("invalid JSON: ") + e.what());
    }
}

double get_number(const json& j, const std::string& path, const char* key, double fallback,
                  bool required = false) {
    if (!j.contains(key)) {
        if (required) throw ConfigError(path + key, "missing required key");
        return fallback;
    }
    if (!j[key].is_number()) throw ConfigError(path + key, "expected a number");
    return j[key].get<double>();
}

Vec get_vector(const json& j, const std::string& path, const char* key, int expected_size) {
    if (!j.contains(key)) throw ConfigError(path + key, "missing required key");
    if (!j[key].is_array()) throw ConfigError(path + key, "expected an array");
    Vec v(j[key].size());
    int i = 0;
    for (const auto& e : j[key]) {
        if (!e.is_number()) throw ConfigError(path + key, "expected numeric entries");
        v[i++] = e.get<double>();
    }
    if (expected_size >= 0 && v.size() != expected_size)
        throw ConfigError(path + key, "expected " + std::to_string(expected_size) + " entries");
    return v;
}

CEConfig parse_engine(const json& j) {
    CEConfig cfg;
    if (!j.contains("engine") || !j["engine"].is_object())
        throw ConfigError("engine", "missing required object");
    const json& e = j["engine"];
    cfg.m = static_cast<int>(get_number(e, "engine.", "m", cfg.m));
    cfg.rho = get_number(e, "engine.", "rho", cfg.rho);
    cfg.delta = get_number(e, "engine.", "delta", cfg.delta);
    cfg.beta = get_number(e, "engine.", "beta", cfg.beta);
    cfg.gamma_star = get_number(e, "engine.", "gamma_star", 0.0, /*required=*/true);
    cfg.floor = get_number(e, "engine.", "floor", cfg.floor);
    cfg.m_max = static_cast<int>(get_number(e, "engine.", "m_max", cfg.m_max));
    if (e.contains("alpha_substitution")) {
        if (!e["alpha_substitution"].is_boolean())
            throw ConfigError("engine.alpha_substitution", "expected a boolean");
        cfg.alpha_substitution = e["alpha_substitution"].get<bool>();
    }
    if (e.contains("precond_m_inherit")) {
        if (!e["precond_m_inherit"].is_boolean())
            throw ConfigError("engine.precond_m_inherit", "expected a boolean");
        cfg.precond_m_inherit = e["precond_m_inherit"].get<bool>();
    }
    if (cfg.m < 1) throw ConfigError("engine.m", "must be >= 1");
    if (!(cfg.rho > 0.0 && cfg.rho < 1.0)) throw ConfigError("engine.rho", "must lie in (0,1)");
    if (!(cfg.delta > 0.0)) throw ConfigError("engine.delta", "must be positive");
    if (!(cfg.beta > 1.0)) throw ConfigError("engine.beta", "must exceed 1");
    if (!(cfg.floor > 0.0)) throw ConfigError("engine.floor", "must be positive");
    if (cfg.m_max < cfg.m) throw ConfigError("engine.m_max", "must be >= engine.m");
    return cfg;
}

void parse_levels(const json& j, ExperimentConfig& cfg) {
    if (!j.contains("levels") || !j["levels"].is_array() || j["levels"].empty())
        throw ConfigError("levels", "missing required non-empty array");
    const auto& arr = j["levels"];
    for (std::size_t i = 0; i + 1 < arr.size(); ++i) {
        if (!arr[i].is_number_integer())
            throw ConfigError("levels", "surrogate entries must be integers");
        cfg.levels.push_back(arr[i].get<int>());
    }
    const auto& last = arr.back();
    if (!last.is_string() || last.get<std::string>() != "hifi")
        throw ConfigError("levels", "last entry must be the \"hifi\" marker");
    for (std::size_t i = 1; i < cfg.levels.size(); ++i)
        if (cfg.levels[i] <= cfg.levels[i - 1])
            throw ConfigError("levels", "must be strictly increasing");
}

} // namespace

std::string ExperimentConfig::algorithm_name() const {
    switch (algorithm) {
    case Algorithm::Standard: return "standard";
    case Algorithm::Preconditioned: return "preconditioned";
    case Algorithm::Multifidelity: return "multifidelity";
    }
    return "?";
}

std::string ExperimentConfig::levels_label() const {
    std::string out;
    for (int d : levels) out += std::to_string(d) + "|";
    out += "hifi";
    return out;
}

std::vector<std::string> level_labels(const ExperimentConfig& config) {
    std::vector<std::string> labels;
    for (int d : config.levels) labels.push_back(std::to_string(d));
    labels.emplace_back("hifi");
    return labels;
}

ExperimentConfig parse_config_json(const std::string& text) {
    json j = load_json(text);
    ExperimentConfig cfg;

    if (!j.contains("problem") || !j["problem"].is_object())
        throw ConfigError("problem", "missing required object");
    const json& prob = j["problem"];
    if (!prob.contains("type") || !prob["type"].is_string())
        throw ConfigError("problem.type", "expected \"analytic\" or \"pde\"");
    std::string type = prob["type"].get<std::string>();

    if (type == "analytic") {
        cfg.problem_kind = ExperimentConfig::ProblemKind::Analytic;
        AnalyticSpec& a = cfg.analytic;
        a.p = static_cast<int>(get_number(prob, "problem.", "p", 3));
        if (a.p < 1) throw ConfigError("problem.p", "must be >= 1");
        a.w = get_vector(prob, "problem.", "w", a.p);
        a.mu_mean = prob.contains("mu_mean") ? get_vector(prob, "problem.", "mu_mean", a.p)
                                             : Vec(Vec::Zero(a.p));
        if (prob.contains("alphas")) {
            if (!prob["alphas"].is_array()) throw ConfigError("problem.alphas", "expected array");
            for (const auto& e : prob["alphas"]) a.alphas.push_back(e.get<double>());
        }
        a.u = prob.contains("u") ? get_vector(prob, "problem.", "u", a.p)
                                 : Vec(Vec::Ones(a.p));
    } else if (type == "pde") {
        cfg.problem_kind = ExperimentConfig::ProblemKind::Pde;
        PdeSpec& s = cfg.pde;
        s.problem.nx = static_cast<int>(get_number(prob, "problem.", "nx", 32));
        s.problem.ny = static_cast<int>(get_number(prob, "problem.", "ny", 16));
        s.problem.kappa1 = get_number(prob, "problem.", "kappa1", 0.03);
        s.problem.a0 = get_number(prob, "problem.", "a0", 0.5);
        s.problem.kappa2 = get_number(prob, "problem.", "kappa2", 0.25);
        s.problem.p = static_cast<int>(get_number(prob, "problem.", "p", 5));
        try {
            s.problem.validate();
        } catch (const Error& e) {
            throw ConfigError("problem", e.what());
        }
        if (prob.contains("mu_mean")) {
            s.mu_mean = get_vector(prob, "problem.", "mu_mean", s.problem.p);
        } else {
            s.mu_mean = Vec::Zero(s.problem.p);
            s.mu_mean[0] = 0.8;
            s.mu_mean[1] = 0.15;
            s.mu_mean[2] = 17.0 * std::numbers::pi / 18.0;
        }
        s.snapshots = static_cast<int>(get_number(prob, "problem.", "snapshots", 120));
        s.snapshot_seed =
            static_cast<std::uint64_t>(get_number(prob, "problem.", "snapshot_seed", 7));
        if (prob.contains("pod_file")) s.pod_file = prob["pod_file"].get<std::string>();
    } else {
        throw ConfigError("problem.type", "expected \"analytic\" or \"pde\"");
    }
    if (prob.contains("reference_p")) cfg.reference_p = prob["reference_p"].get<double>();
    cfg.problem_fingerprint = prob.dump();

    if (!j.contains("algorithm") || !j["algorithm"].is_string())
        throw ConfigError("algorithm", "expected \"standard\", \"preconditioned\" or "
                                       "\"multifidelity\"");
    std::string alg = j["algorithm"].get<std::string>();
    if (alg == "standard") cfg.algorithm = ExperimentConfig::Algorithm::Standard;
    else if (alg == "preconditioned") cfg.algorithm = ExperimentConfig::Algorithm::Preconditioned;
    else if (alg == "multifidelity") cfg.algorithm = ExperimentConfig::Algorithm::Multifidelity;
    else throw ConfigError("algorithm", "unknown algorithm \"" + alg + "\"");

    cfg.engine = parse_engine(j);
    parse_levels(j, cfg);

    if (cfg.problem_kind == ExperimentConfig::ProblemKind::Analytic &&
        cfg.levels.size() != cfg.analytic.alphas.size())
        throw ConfigError("levels", "surrogate level count must match problem.alphas length");

    cfg.repetitions = static_cast<int>(get_number(j, "", "repetitions", 1));
    if (cfg.repetitions < 1) throw ConfigError("repetitions", "must be >= 1");
    cfg.seed = static_cast<std::uint64_t>(get_number(j, "", "seed", 0));
    if (j.contains("output_dir")) cfg.output_dir = j["output_dir"].get<std::string>();
    return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("<file>", "cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_json(ss.str());
}

BuiltProblem build_problem(const ExperimentConfig& config) {
    BuiltProblem built;
    if (config.problem_kind == ExperimentConfig::ProblemKind::Analytic) {
        const AnalyticSpec& a = config.analytic;
        LinearGaussianProblem prob;
        prob.w = a.w;
        prob.mu = {a.mu_mean, Mat::Identity(a.p, a.p)};
        prob.gamma_star = config.engine.gamma_star;
        prob.alphas = a.alphas;
        prob.u = a.u;
        auto hier = std::make_shared<AnalyticHierarchy>(prob);
        built.reference_p =
            config.reference_p ? config.reference_p : std::optional(prob.analytic_probability());
        built.hierarchy = hier;
        built.family = std::make_shared<GaussianFamily>(prob.mu, config.engine.floor);
        return built;
    }

    const PdeSpec& s = config.pde;
    auto assembly = std::make_shared<const ADRAssembly>(s.problem);
    GaussianParams mu{s.mu_mean, Mat::Identity(s.problem.p, s.problem.p)};
    PODHierarchy pod;
    if (!s.pod_file.empty() && std::filesystem::exists(s.pod_file)) {
        pod = load_pod(s.pod_file, *assembly);
        if (pod.dims != config.levels)
            throw ConfigError("problem.pod_file", "dimension set differs from levels");
    } else {
        RandomStream snap_stream = derive_substream(s.snapshot_seed, std::array<std::uint64_t, 1>{
                                                                         0x506f64ULL});
        std::vector<Vec> params = gaussian_sample(mu, snap_stream, s.snapshots);
        pod = build_pod(*assembly, params, config.levels);
    }
    built.assembly = assembly;
    built.hierarchy = std::make_shared<PdeHierarchy>(assembly, std::move(pod));
    built.reference_p = config.reference_p;
    built.family = std::make_shared<GaussianFamily>(mu, config.engine.floor);
    return built;
}

SingleRun execute_repetition(const ExperimentConfig& config, const BuiltProblem& problem,
                             std::uint64_t repetition, bool keep_batches) {
    SingleRun run;
    const ScoreHierarchy& hier = *problem.hierarchy;
    const GaussianFamily& family = *problem.family;
    CEConfig engine = config.engine;
    engine.seed = config.seed;
    RandomStream root =
        derive_substream(config.seed, std::array<std::uint64_t, 1>{repetition});
    try {
        switch (config.algorithm) {
        case ExperimentConfig::Algorithm::Standard: {
            auto r = run_standard_ce(engine, family, hier, root, std::nullopt, keep_batches);
            run.p_hat = r.p_hat;
            run.m_final = r.m_final;
            run.trace = std::move(r.trace);
            run.timings = std::move(r.timings);
            run.evals_per_level = run.trace.evals;
            run.iters_per_level = run.trace.iters_per_level;
            break;
        }
        case ExperimentConfig::Algorithm::Multifidelity: {
            auto r = run_multifidelity_ce(engine, family, hier, root, std::nullopt, keep_batches);
            run.p_hat = r.p_hat;
            run.m_final = r.m_final;
            run.trace = std::move(r.trace);
            run.timings = std::move(r.timings);
            run.evals_per_level = run.trace.evals;
            run.iters_per_level = run.trace.iters_per_level;
            break;
        }
        case ExperimentConfig::Algorithm::Preconditioned: {
            auto r = run_preconditioned_ce(engine, family, hier, root, std::nullopt, keep_batches);
            run.p_hat = r.p_hat;
            run.m_final = r.m_final;
            run.timings = std::move(r.timings);
            run.evals_per_level.assign(static_cast<std::size_t>(hier.level_count()) + 1, 0);
            run.iters_per_level.assign(static_cast<std::size_t>(hier.level_count()) + 1, 0);
            for (const CEState& t : r.level_traces) {
                for (std::size_t l = 0; l < t.evals.size(); ++l)
                    run.evals_per_level[l] += t.evals[l];
                for (std::size_t l = 0; l < t.iters_per_level.size(); ++l)
                    run.iters_per_level[l] += t.iters_per_level[l];
            }
            run.trace = std::move(r.level_traces.back());
            break;
        }
        }
        run.hf_evals = run.evals_per_level.back();
        run.wall_clock_s = run.timings.total_s;
    } catch (const Error& e) {
        run.failed = true;
        run.error = e.what();
    }
    return run;
}

namespace {

std::string format_double(double v) {
    std::ostringstream ss;
    ss.precision(17);
    ss << v;
    return ss.str();
}

json report_to_json(const ExperimentConfig& config, const EstimateReport& report,
                    const std::vector<SingleRun>& runs) {
    json j;
    j["algorithm"] = config.algorithm_name();
    j["levels"] = config.levels_label();
    j["seed"] = config.seed;
    j["repetitions"] = config.repetitions;
    j["p_hat"] = report.p_hat;
    j["m_final"] = report.m_final;
    if (report.has_scv) j["empirical_scv"] = report.empirical_scv;
    json evals = json::object();
    for (const auto& [level, count] : report.per_level_evals)
        evals[std::to_string(level)] = count;
    j["per_level_evals"] = evals;
    json wall = json::object();
    for (const auto& [phase, secs] : report.wall_clock_s) wall[phase] = secs;
    j["wall_clock_s"] = wall;
    json trace = json::array();
    for (std::size_t i = 0; i < report.gammas.size(); ++i) {
        json rec;
        rec["gamma"] = report.gammas[i];
        rec["alpha"] = report.alphas[i];
        rec["rho"] = report.rhos[i];
        rec["level"] = report.levels[i];
        trace.push_back(rec);
    }
    j["trace_summary"] = trace;
    json rr = json::array();
    for (const SingleRun& run : runs) {
        json r;
        r["p_hat"] = run.p_hat;
        r["m_final"] = run.m_final;
        r["wall_clock_s"] = run.wall_clock_s;
        r["hf_evals"] = run.hf_evals;
        r["J"] = run.trace.J;
        r["jmax"] = run.trace.jmax;
        if (run.failed) r["error"] = run.error;
        rr.push_back(r);
    }
    j["runs"] = rr;
    return j;
}

} // namespace

std::string runs_csv_header(const std::vector<std::string>& labels) {
    std::string h = "algorithm,m,levels,seed,p_hat,scv,wall_clock_s,hf_evals,";
    for (std::size_t i = 0; i < labels.size(); ++i) {
        h += "iters_d" + labels[i];
        if (i + 1 < labels.size()) h += ",";
    }
    return h;
}

ExperimentOutcome run_experiment(const ExperimentConfig& config) {
    BuiltProblem problem = build_problem(config);
    ExperimentOutcome outcome;
    outcome.runs.resize(static_cast<std::size_t>(config.repetitions));
    parallel_for(static_cast<std::size_t>(config.repetitions), [&](std::size_t rep) {
        outcome.runs[rep] = execute_repetition(config, problem, rep);
    });
    for (const SingleRun& run : outcome.runs)
        if (run.failed) outcome.budget_exhausted = true;

    // Aggregate report.
    EstimateReport& report = outcome.report;
    std::vector<double> estimates;
    for (const SingleRun& run : outcome.runs)
        if (!run.failed) estimates.push_back(run.p_hat);
    if (!estimates.empty()) {
        KahanSum mean;
        for (double p : estimates) mean.add(p);
        report.p_hat = mean.value() / static_cast<double>(estimates.size());
    }
    if (problem.reference_p && estimates.size() >= 2) {
        report.empirical_scv = empirical_scv(estimates, *problem.reference_p);
        report.has_scv = true;
    }
    const SingleRun* first_ok = nullptr;
    for (const SingleRun& run : outcome.runs)
        if (!run.failed) {
            first_ok = &run;
            break;
        }
    if (first_ok) {
        report.m_final = first_ok->m_final;
        for (std::size_t l = 1; l < first_ok->evals_per_level.size(); ++l) {
            long total = 0;
            for (const SingleRun& run : outcome.runs)
                if (!run.failed) total += run.evals_per_level[l];
            report.per_level_evals[static_cast<int>(l)] = total;
        }
        double sampling = 0, update = 0, final_is = 0, scoring = 0;
        for (const SingleRun& run : outcome.runs) {
            sampling += run.timings.sampling_s;
            update += run.timings.update_s;
            final_is += run.timings.final_is_s;
            for (double s : run.timings.scoring_s) scoring += s;
        }
        report.wall_clock_s = {{"sampling", sampling},
                               {"scoring", scoring},
                               {"update", update},
                               {"final_is", final_is}};
        for (const IterationRecord& rec : first_ok->trace.iters) {
            report.gammas.push_back(rec.gamma);
            report.alphas.push_back(rec.alpha);
            report.rhos.push_back(rec.rho);
            report.levels.push_back(rec.level);
        }
    }

    // Files.
    std::filesystem::create_directories(config.output_dir);
    std::vector<std::string> labels = level_labels(config);
    std::ofstream csv(std::filesystem::path(config.output_dir) / "runs.csv");
    csv << runs_csv_header(labels) << "\n";
    for (std::size_t rep = 0; rep < outcome.runs.size(); ++rep) {
        const SingleRun& run = outcome.runs[rep];
        double scv_term = std::numeric_limits<double>::quiet_NaN();
        if (problem.reference_p && !run.failed) {
            double rel = (run.p_hat - *problem.reference_p) / *problem.reference_p;
            scv_term = rel * rel;
        }
        csv << config.algorithm_name() << "," << config.engine.m << ","
            << config.levels_label() << "," << rep << "," << format_double(run.p_hat) << ","
            << format_double(scv_term) << "," << format_double(run.wall_clock_s) << ","
            << run.hf_evals;
        for (std::size_t l = 1; l < run.iters_per_level.size(); ++l)
            csv << "," << run.iters_per_level[l];
        csv << "\n";
    }
    csv.close();

    std::ofstream js(std::filesystem::path(config.output_dir) / "report.json");
    js << report_to_json(config, report, outcome.runs).dump(2) << "\n";
    return outcome;
}

void compare(const std::vector<ExperimentConfig>& configs, const std::string& out_path) {
    if (configs.size() < 2)
        throw IncompatibleComparisonError("compare: need at least 2 configs");
    for (std::size_t i = 1; i < configs.size(); ++i)
        if (configs[i].problem_fingerprint != configs[0].problem_fingerprint)
            throw IncompatibleComparisonError("compare: configs target different problems");

    std::vector<std::string> labels = level_labels(configs[0]);
    for (const ExperimentConfig& c : configs)
        if (level_labels(c) != labels)
            throw IncompatibleComparisonError("compare: configs use different level sets");

    std::ofstream csv(out_path);
    csv << "algorithm,m,levels,scv,mean_wall_clock_s,mean_hf_evals,";
    for (std::size_t i = 0; i < labels.size(); ++i) {
        csv << "iters_d" + labels[i];
        if (i + 1 < labels.size()) csv << ",";
    }
    csv << "\n";

    for (const ExperimentConfig& config : configs) {
        ExperimentOutcome outcome = run_experiment(config);
        double wall = 0.0;
        double hf = 0.0;
        std::vector<double> iters(labels.size(), 0.0);
        int ok = 0;
        for (const SingleRun& run : outcome.runs) {
            if (run.failed) continue;
            ++ok;
            wall += run.wall_clock_s;
            hf += static_cast<double>(run.hf_evals);
            for (std::size_t l = 1; l < run.iters_per_level.size() && l - 1 < iters.size(); ++l)
                iters[l - 1] += run.iters_per_level[l];
        }
        double denom = ok > 0 ? static_cast<double>(ok) : 1.0;
        csv << config.algorithm_name() << "," << config.engine.m << ","
            << config.levels_label() << ","
            << (outcome.report.has_scv ? format_double(outcome.report.empirical_scv) : "nan")
            << "," << format_double(wall / denom) << "," << format_double(hf / denom);
        for (double it : iters) csv << "," << format_double(it / denom);
        csv << "\n";
    }
}

} // namespace mfce
