#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mfce/ce_engine.hpp"
#include "mfce/models_analytic.hpp"

#include <array>
#include <cmath>
#include <functional>

using namespace mfce;

namespace {

RandomStream stream(std::uint64_t seed, std::uint64_t tag = 0) {
    return derive_substream(seed, std::array<std::uint64_t, 1>{tag});
}

class StubHierarchy : public ScoreHierarchy {
public:
    using Fn = std::function<ScoreBound(const Vec&, int)>;
    StubHierarchy(int levels, Fn fn) : levels_(levels), fn_(std::move(fn)) {}
    int level_count() const override { return levels_; }
    ScoreBound eval_level(const Vec& x, int level) const override { return fn_(x, level); }
    int cost_rank(int level) const override { return level; }
    double error_constant() const override { return 1.0; }

private:
    int levels_;
    Fn fn_;
};

LinearGaussianProblem line_problem(int p, double gamma_star, std::vector<double> alphas = {}) {
    LinearGaussianProblem prob;
    prob.w = Vec::Zero(p);
    prob.w[0] = 1.0;
    prob.mu = {Vec::Zero(p), Mat::Identity(p, p)};
    prob.gamma_star = gamma_star;
    prob.alphas = std::move(alphas);
    prob.u = Vec::Ones(p);
    return prob;
}

// The floor matches the optimal tail width of the linear-gaussian benchmark;
// it keeps fitted proposals from collapsing, which would skew the estimates
// at these modest sample sizes.
CEConfig base_config(double gamma_star, int m = 2000) {
    CEConfig cfg;
    cfg.m = m;
    cfg.gamma_star = gamma_star;
    cfg.floor = 5e-2;
    return cfg;
}

// Independent eta_bar scan: every breakpoint, double loop, no sorting.
double eta_bar_oracle(const std::vector<double>& scores, double alpha, double gamma_b,
                      double gamma_u) {
    std::vector<double> cands{gamma_b, gamma_u};
    for (double s : scores) {
        cands.push_back(s);
        cands.push_back(s - alpha);
    }
    double best = 0.0;
    for (double g : cands) {
        if (g < gamma_b || g > gamma_u) continue;
        int n = 0;
        for (double s : scores)
            if (s >= g && s <= g + alpha) ++n;
        best = std::max(best, static_cast<double>(n) / scores.size());
    }
    return best;
}

} // namespace

TEST_CASE("alpha_hat takes the scaled maximum bound") {
    SampleBatch b;
    b.bounds = {0.1, 0.3, 0.2};
    CHECK(alpha_hat(b, 1.0) == 0.3);
    CHECK(alpha_hat(b, 2.0) == 0.6);
    b.bounds = {0.0, 0.0};
    CHECK(alpha_hat(b, 1.0) == 0.0);
}

TEST_CASE("relaxed threshold") {
    CHECK(relaxed_threshold(2.0, 0.1, 1.76) == doctest::Approx(1.8).epsilon(1e-12));
    CHECK(relaxed_threshold(1.5, 0.05, 1.76) == doctest::Approx(1.4).epsilon(1e-12));
    // alpha = 0 recovers the unrelaxed event threshold.
    CHECK(relaxed_threshold(2.0, 0.0, 1.76) == 1.76);
    CHECK(relaxed_threshold(1.5, 0.0, 1.76) == 1.5);
    CHECK_THROWS_AS(relaxed_threshold(1.0, -0.1, 2.0), InvalidParameterError);
}

TEST_CASE("varpi worked example") {
    std::vector<double> scores{0.0, 0.5, 1.0, 1.5, 2.0};
    CHECK(varpi(scores, 0.25, 1.0) == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("varpi signals refinement when the upper tail is empty") {
    std::vector<double> scores{0.0, 0.1, 0.2};
    CHECK(varpi(scores, 0.25, 1.0) == -std::numeric_limits<double>::infinity());
}

TEST_CASE("varpi with exact scores counts the point interval") {
    std::vector<double> scores{0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0};
    // t = 3 of m = 8 scores are >= 4.5.
    CHECK(varpi(scores, 0.0, 4.5) == doctest::Approx(3.0 / 8 - 1.0 / 8).epsilon(1e-12));
}

TEST_CASE("varpi against the breakpoint-scan oracle on random data") {
    auto rng = stream(21);
    int positives = 0;
    for (int rep = 0; rep < 3000; ++rep) {
        int m = 3 + static_cast<int>(rng.uniform() * 40);
        std::vector<double> scores(static_cast<std::size_t>(m));
        for (double& s : scores) s = std::floor(rng.normal() * 4.0) / 2.0;
        double alpha = 0.5 * rng.uniform();
        double gamma_bar = rng.normal();
        double got = varpi(scores, alpha, gamma_bar);

        double md = static_cast<double>(m);
        auto count_ge = [&](double t) {
            int n = 0;
            for (double s : scores)
                if (s >= t) ++n;
            return static_cast<double>(n);
        };
        double rho_lo = count_ge(gamma_bar + alpha) / md;
        double rho_hi = count_ge(gamma_bar - alpha) / md;
        if (rho_hi == 0.0) {
            CHECK(got == -std::numeric_limits<double>::infinity());
            continue;
        }
        if (rho_lo == 0.0) {
            CHECK(got <= 0.0);
            continue;
        }
        std::vector<double> sorted = scores;
        std::sort(sorted.begin(), sorted.end());
        auto quant = [&](double rho) {
            long idx = std::clamp(static_cast<long>(std::floor((1.0 - rho) * md + 1e-9)), 0L,
                                  static_cast<long>(m - 1));
            return sorted[static_cast<std::size_t>(idx)];
        };
        double expect = rho_lo - eta_bar_oracle(scores, alpha, quant(rho_hi), quant(rho_lo));
        CHECK(got == doctest::Approx(expect).epsilon(1e-12));

        // Positivity certifies quantile feasibility at rho_lo.
        if (got > 0.0 && rho_lo < 1.0) {
            ++positives;
            CHECK(empirical_quantile(scores, rho_lo) >= gamma_bar + alpha);
            CHECK(empirical_quantile(scores, rho_lo) >= gamma_bar);
        }
    }
    CHECK(positives > 100); // the sweep must actually exercise the positive branch
}

TEST_CASE("jmax bound") {
    CHECK(jmax_bound(1.76, 1.0, 0.0, 0.01) == 77);
    CHECK(jmax_bound(2.0, 2.5, 0.0, 0.01) == 1);
    CHECK(jmax_bound(2.0, 1.0, 0.5, 0.1) == 6);
    CHECK_THROWS_AS(jmax_bound(1.0, 0.0, 0.0, 0.0), InvalidParameterError);
}

TEST_CASE("select_level keeps an exact surrogate with enough mass above the target") {
    // Level 1 scores are exact (bound 0); two samples sit above gamma_bar.
    GaussianFamily family({Vec::Zero(1), Mat::Identity(1, 1)}, 1e-6);
    StubHierarchy hier(2, [](const Vec& x, int) -> ScoreBound { return {x[0], 0.0}; });
    CEConfig cfg = base_config(10.0, 5);

    detail::ScoredBatch batch;
    for (double v : {0.0, 1.0, 2.0, 3.0, 4.0}) {
        batch.points.push_back(Vec::Constant(1, v));
        batch.scores.push_back(v);
        batch.bounds.push_back(0.0);
    }
    batch.level = 1;
    CEState state;
    state.evals.assign(3, 0);
    state.iters_per_level.assign(3, 0);
    PhaseTimings timings;
    timings.scoring_s.assign(3, 0.0);
    double rho = 0.8;
    int k = 1;
    std::optional<double> v;
    RandomStream draw = stream(1);
    // gamma_prev = 2.49 makes gamma_bar = min(10, 2.49 + 0.01) = 2.5.
    detail::select_level(cfg, family, hier, family.nominal(), draw, batch, rho, k, 0.0, 2.49,
                         state, timings, v);
    CHECK(k == 1);
    CHECK(rho == doctest::Approx(0.4));
    CHECK(v.has_value());
    CHECK(*v > 0.0);
    CHECK(empirical_quantile(batch.scores, rho) >= 2.5);
}

TEST_CASE("select_level refines past a systematically low surrogate") {
    // Level 1 under-estimates by far more than its bound window reaches.
    GaussianFamily family({Vec::Zero(1), Mat::Identity(1, 1)}, 1e-6);
    StubHierarchy hier(2, [](const Vec& x, int level) -> ScoreBound {
        if (level == 1) return {x[0] - 5.0, 0.2};
        return {x[0], 0.0};
    });
    CEConfig cfg = base_config(1.0, 5);

    detail::ScoredBatch batch;
    for (double val : {0.5, 1.2, 2.0, 3.0, 4.0}) {
        batch.points.push_back(Vec::Constant(1, val));
        auto sb = hier.eval_level(batch.points.back(), 1);
        batch.scores.push_back(sb.score);
        batch.bounds.push_back(sb.bound);
    }
    batch.level = 1;
    CEState state;
    state.evals.assign(3, 0);
    state.iters_per_level.assign(3, 0);
    PhaseTimings timings;
    timings.scoring_s.assign(3, 0.0);
    double rho = 0.4;
    int k = 1;
    std::optional<double> v;
    RandomStream draw = stream(2);
    detail::select_level(cfg, family, hier, family.nominal(), draw, batch, rho, k, 0.2, 0.8,
                         state, timings, v);
    CHECK(k == 2); // never decreased, moved to the exact level
    CHECK(batch.level == 2);
    CHECK(state.evals[2] == 5); // re-scored once at the new level
    CHECK(empirical_quantile(batch.scores, rho) >= std::min(cfg.gamma_star, 0.8 + 0.2 * 2 + 0.01));
}

TEST_CASE("standard CE hits the analytic gaussian tail") {
    auto prob = line_problem(1, 3.0);
    AnalyticHierarchy hier(prob);
    CEConfig cfg = base_config(3.0);
    GaussianFamily family(prob.mu, cfg.floor);
    const double truth = normal_tail(3.0); // 1.3499e-3
    CHECK(truth == doctest::Approx(1.3499e-3).epsilon(1e-4));

    std::vector<double> estimates;
    for (std::uint64_t s = 0; s < 10; ++s) {
        cfg.seed = 100 + s;
        auto r = run_standard_ce(cfg, family, hier, stream(cfg.seed));
        estimates.push_back(r.p_hat);
        CHECK(r.trace.J <= r.trace.jmax);
        // Quantile nesting along the trace.
        for (std::size_t j = 1; j < r.trace.iters.size(); ++j)
            CHECK(r.trace.iters[j].gamma >=
                  std::min(cfg.gamma_star, r.trace.iters[j - 1].gamma + cfg.delta) - 1e-12);
    }
    double mean = 0;
    for (double p : estimates) mean += p;
    mean /= estimates.size();
    double var = 0;
    for (double p : estimates) var += (p - mean) * (p - mean);
    var /= (estimates.size() - 1);
    double se = std::sqrt(var / estimates.size());
    CHECK(std::abs(mean - truth) < 3.0 * se);
}

TEST_CASE("same seed, same trace") {
    auto prob = line_problem(2, 2.5);
    AnalyticHierarchy hier(prob);
    CEConfig cfg = base_config(2.5, 500);
    GaussianFamily family(prob.mu, cfg.floor);
    cfg.seed = 7;
    auto a = run_standard_ce(cfg, family, hier, stream(7));
    auto b = run_standard_ce(cfg, family, hier, stream(7));
    CHECK(traces_identical(a.trace, b.trace));
    CHECK(a.p_hat == b.p_hat);
    CHECK(a.nu_final.mean == b.nu_final.mean);
    CHECK(a.nu_final.cov == b.nu_final.cov);
}

TEST_CASE("target below the initial quantile exits immediately") {
    auto prob = line_problem(1, 0.5);
    AnalyticHierarchy hier(prob);
    CEConfig cfg = base_config(0.5, 1000);
    GaussianFamily family(prob.mu, cfg.floor);
    auto r = run_standard_ce(cfg, family, hier, stream(3));
    CHECK(r.trace.J == 1);
    CHECK(r.trace.iters.size() == 1);
    CHECK(r.p_hat == doctest::Approx(normal_tail(0.5)).epsilon(0.15));
}

TEST_CASE("preconditioned with K=0 is bit-identical to standard") {
    auto prob = line_problem(2, 2.8);
    AnalyticHierarchy hier(prob);
    CEConfig cfg = base_config(2.8, 800);
    GaussianFamily family(prob.mu, cfg.floor);
    auto std_run = run_standard_ce(cfg, family, hier, stream(42));
    auto pre_run = run_preconditioned_ce(cfg, family, hier, stream(42));
    REQUIRE(pre_run.level_traces.size() == 1);
    CHECK(traces_identical(std_run.trace, pre_run.final_trace()));
    CHECK(std_run.p_hat == pre_run.p_hat);
}

TEST_CASE("multifidelity with K=0 is bit-identical to standard") {
    auto prob = line_problem(2, 2.8);
    AnalyticHierarchy hier(prob);
    CEConfig cfg = base_config(2.8, 800);
    GaussianFamily family(prob.mu, cfg.floor);
    auto std_run = run_standard_ce(cfg, family, hier, stream(42));
    auto mf_run = run_multifidelity_ce(cfg, family, hier, stream(42));
    CHECK(traces_identical(std_run.trace, mf_run.trace));
    CHECK(std_run.p_hat == mf_run.p_hat);
    CHECK(std_run.trace.evals == mf_run.trace.evals);
}

TEST_CASE("preconditioned skips a surrogate bounded below the target") {
    // Level 1 cannot reach gamma_star = 3; the level must be abandoned by the
    // k-increment rule rather than loop forever.
    StubHierarchy hier(2, [](const Vec& x, int level) -> ScoreBound {
        if (level == 1) return {std::min(x[0], 2.0), 0.0};
        return {x[0], 0.0};
    });
    GaussianParams mu{Vec::Zero(1), Mat::Identity(1, 1)};
    CEConfig cfg = base_config(3.0, 1000);
    GaussianFamily family(mu, cfg.floor);
    auto r = run_preconditioned_ce(cfg, family, hier, stream(11));
    REQUIRE(r.level_traces.size() == 2);
    CHECK(r.level_aborted[0]);
    CHECK_FALSE(r.level_aborted[1]);
    CHECK(r.p_hat == doctest::Approx(normal_tail(3.0)).epsilon(0.5));
}

TEST_CASE("preconditioned and standard agree statistically on a 2-level hierarchy") {
    auto prob = line_problem(2, 3.0, {0.4, 0.15});
    AnalyticHierarchy hier(prob);
    CEConfig cfg = base_config(3.0, 1500);
    cfg.alpha_substitution = true;
    GaussianFamily family(prob.mu, cfg.floor);
    std::vector<double> std_p, pre_p;
    for (std::uint64_t s = 0; s < 20; ++s) {
        std_p.push_back(run_standard_ce(cfg, family, hier, stream(300 + s)).p_hat);
        pre_p.push_back(run_preconditioned_ce(cfg, family, hier, stream(300 + s)).p_hat);
    }
    auto ci = [](const std::vector<double>& v) {
        double mean = 0;
        for (double x : v) mean += x;
        mean /= v.size();
        double var = 0;
        for (double x : v) var += (x - mean) * (x - mean);
        var /= (v.size() - 1);
        double half = 1.96 * std::sqrt(var / v.size());
        return std::pair{mean - half, mean + half};
    };
    auto [lo1, hi1] = ci(std_p);
    auto [lo2, hi2] = ci(pre_p);
    CHECK(lo1 <= hi2);
    CHECK(lo2 <= hi1);
}

TEST_CASE("multifidelity beats standard on high-fidelity evaluations") {
    auto prob = line_problem(3, 3.2, {0.4, 0.1});
    AnalyticHierarchy hier(prob);
    CEConfig cfg = base_config(3.2);
    cfg.alpha_substitution = true;
    GaussianFamily family(prob.mu, cfg.floor);
    const double truth = normal_tail(3.2);

    std::vector<double> estimates;
    for (std::uint64_t s = 0; s < 10; ++s) {
        auto mf = run_multifidelity_ce(cfg, family, hier, stream(500 + s));
        auto st = run_standard_ce(cfg, family, hier, stream(500 + s));
        estimates.push_back(mf.p_hat);
        CHECK(mf.trace.evals.back() < st.trace.evals.back());
        CHECK(mf.trace.J <= mf.trace.jmax);
        // Error-bound sequence never increases along accepted iterations.
        for (std::size_t j = 1; j < mf.trace.iters.size(); ++j)
            CHECK(mf.trace.iters[j].alpha <= mf.trace.iters[j - 1].alpha + 1e-12);
        // Levels recorded are valid and nondecreasing in cost.
        for (const auto& rec : mf.trace.iters) {
            CHECK(rec.level >= 1);
            CHECK(rec.level <= hier.level_count());
        }
    }
    double mean = 0;
    for (double p : estimates) mean += p;
    mean /= estimates.size();
    double var = 0;
    for (double p : estimates) var += (p - mean) * (p - mean);
    var /= (estimates.size() - 1);
    CHECK(std::abs(mean - truth) < 3.0 * std::sqrt(var / estimates.size()));
}

TEST_CASE("final-step screening only calls the high-fidelity model in the band") {
    // Surrogate = truth + 0.05 with certified bound 0.05. Counting top-level
    // evaluations against the retained final batch pins the screening rule.
    StubHierarchy hier(2, [](const Vec& x, int level) -> ScoreBound {
        if (level == 1) return {x[0] + 0.05, 0.05};
        return {x[0], 0.0};
    });
    GaussianParams mu{Vec::Zero(1), Mat::Identity(1, 1)};
    CEConfig cfg = base_config(2.2, 1500);
    GaussianFamily family(mu, cfg.floor);
    auto r = run_multifidelity_ce(cfg, family, hier, stream(77), std::nullopt,
                                  /*keep_batches=*/true);
    REQUIRE(!r.trace.batches.empty());
    const BatchSnapshot& last = r.trace.batches.back();
    REQUIRE(last.level == 1); // exited on the surrogate level
    long in_band = 0;
    for (std::size_t i = 0; i < last.scores.size(); ++i) {
        double band = last.bounds[i]; // c = 1
        bool certain = last.scores[i] >= cfg.gamma_star + band ||
                       last.scores[i] < cfg.gamma_star - band;
        if (!certain) ++in_band;
    }
    // Top-level calls = screening band + the final estimation batch.
    CHECK(r.trace.evals.back() == in_band + r.m_final);
    CHECK(in_band > 0); // the band actually exercised the mixed case
    CHECK(in_band < static_cast<long>(last.scores.size()));
}

TEST_CASE("exact surrogate screening never touches the high-fidelity model early") {
    StubHierarchy hier(2, [](const Vec& x, int level) -> ScoreBound {
        if (level == 1) return {x[0], 1e-13};
        return {x[0], 0.0};
    });
    GaussianParams mu{Vec::Zero(1), Mat::Identity(1, 1)};
    CEConfig cfg = base_config(2.0, 1000);
    GaussianFamily family(mu, cfg.floor);
    auto r = run_multifidelity_ce(cfg, family, hier, stream(78));
    // Up to the final estimate, everything ran on the surrogate.
    CHECK(r.trace.evals.back() <= r.m_final + 2);
}

TEST_CASE("config validation") {
    CEConfig cfg = base_config(1.0);
    cfg.rho = 1.5;
    CHECK_THROWS_AS(cfg.validate(), InvalidParameterError);
    cfg = base_config(1.0);
    cfg.delta = 0.0;
    CHECK_THROWS_AS(cfg.validate(), InvalidParameterError);
    cfg = base_config(1.0);
    cfg.beta = 1.0;
    CHECK_THROWS_AS(cfg.validate(), InvalidParameterError);
}
