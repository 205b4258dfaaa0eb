#ifndef MFCE_CE_ENGINE_HPP
#define MFCE_CE_ENGINE_HPP

#include "mfce/common.hpp"
#include "mfce/core.hpp"
#include "mfce/quantile.hpp"
#include "mfce/random.hpp"

#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

namespace mfce {

/// Free parameters shared by the three cross-entropy engines.
struct CEConfig {
    int m = 2000;                    // initial sample size
    double rho = 0.2;                // initial quantile parameter
    double delta = 1e-2;             // minimal quantile increase
    double beta = 1.25;              // sample growth factor
    double gamma_star = 0.0;         // target score threshold
    double floor = 5e-5;             // covariance eigenvalue floor
    int m_max = 1000000;             // sample cap for the adaptation loop
    bool alpha_substitution = false; // use the current iterate's error bound in gamma_tilde
    bool precond_m_inherit = false;  // pre-conditioned runs carry m across levels
    std::uint64_t seed = 0;

    void validate() const;
};

/// c * max_i eps(z_i) over the batch; zero for a top-level batch.
double alpha_hat(const SampleBatch& batch, double c);
double alpha_hat(std::span<const double> bounds, double c);

/// Threshold of the relaxed event set: min(gamma_k - 2 alpha, gamma_star + alpha).
double relaxed_threshold(double gamma_k, double alpha, double gamma_star);

/// Level-selection criterion rho_lower - eta_bar. Positive values certify that
/// the current surrogate can reach gamma_bar with a nonzero quantile
/// parameter. Returns -inf when no score reaches gamma_bar - alpha, and a
/// value <= 0 whenever refinement is needed.
double varpi(std::span<const double> scores, double alpha, double gamma_bar);

/// Worst-case iteration count ceil((gamma_star - gamma0 - alpha0)/delta) + 1,
/// clamped to at least 1.
int jmax_bound(double gamma_star, double gamma0, double alpha0, double delta);

/// Retained per-iteration sample data (diagnostics only).
struct BatchSnapshot {
    std::vector<Vec> points;
    std::vector<double> scores;
    std::vector<double> bounds;
    int level = 0;
};

struct IterationRecord {
    int j = 0;
    int level = 0;
    double rho = 0.0;
    int m = 0;
    double gamma = 0.0;
    double alpha = 0.0;
    std::optional<double> varpi;
};

/// Full trace of one engine run: per-iteration records, evaluation counters
/// per level, and the iteration-bound bookkeeping. Wall-clock data lives
/// outside so traces of identical runs compare bit-equal.
struct CEState {
    std::vector<IterationRecord> iters;
    int J = 0;
    double gamma0 = 0.0;
    double alpha0 = 0.0;
    int jmax = 0;
    std::vector<long> evals;          // index by level, slot 0 unused
    std::vector<int> iters_per_level; // accepted update iterations (j >= 1)
    bool keep_batches = false;
    std::vector<BatchSnapshot> batches;

    std::vector<double> gamma_history() const {
        std::vector<double> g;
        g.reserve(iters.size());
        for (const auto& r : iters) g.push_back(r.gamma);
        return g;
    }
    std::vector<double> alpha_history() const {
        std::vector<double> a;
        a.reserve(iters.size());
        for (const auto& r : iters) a.push_back(r.alpha);
        return a;
    }
};

/// Exact (bitwise) comparison of the recorded run, ignoring retained batches.
bool traces_identical(const CEState& a, const CEState& b);

struct PhaseTimings {
    double sampling_s = 0.0;
    double update_s = 0.0;
    double final_is_s = 0.0;
    std::vector<double> scoring_s; // per level, slot 0 unused
    double total_s = 0.0;
};

template <class Family>
struct RunResult {
    typename Family::Params nu_final;
    CEState trace;
    double p_hat = 0.0;
    int m_final = 0;
    PhaseTimings timings;
};

template <class Family>
struct PrecondResult {
    typename Family::Params nu_final;
    std::vector<CEState> level_traces; // one per level 1..K+1
    std::vector<bool> level_aborted;
    double p_hat = 0.0;
    int m_final = 0;
    PhaseTimings timings;

    const CEState& final_trace() const { return level_traces.back(); }
};

namespace detail {

class StopWatch {
public:
    explicit StopWatch(double& acc)
        : acc_(acc), t0_(std::chrono::steady_clock::now()) {}
    ~StopWatch() {
        acc_ += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
    }

private:
    double& acc_;
    std::chrono::steady_clock::time_point t0_;
};

struct ScoredBatch {
    std::vector<Vec> points;
    std::vector<double> scores;
    std::vector<double> bounds;
    int level = 0;
};

inline void score_from(const ScoreHierarchy& hier, int level, ScoredBatch& batch,
                       std::size_t begin, CEState& state, PhaseTimings& timings) {
    batch.scores.resize(batch.points.size());
    batch.bounds.resize(batch.points.size());
    batch.level = level;
    std::size_t n = batch.points.size() - begin;
    StopWatch sw(timings.scoring_s[static_cast<std::size_t>(level)]);
    parallel_for(n, [&](std::size_t off) {
        ScoreBound sb = hier.eval_level(batch.points[begin + off], level);
        batch.scores[begin + off] = sb.score;
        batch.bounds[begin + off] = sb.bound;
    });
    state.evals[static_cast<std::size_t>(level)] += static_cast<long>(n);
}

inline void rescore_all(const ScoreHierarchy& hier, int level, ScoredBatch& batch,
                        CEState& state, PhaseTimings& timings) {
    score_from(hier, level, batch, 0, state, timings);
}

/// Indicator-masked likelihood-ratio weights, rescaled by the largest log
/// ratio among members. The CE update is invariant under a common positive
/// rescaling, and the shift avoids overflow of mu/nu far in the tails.
template <class Family>
std::vector<double> masked_weights(const Family& family,
                                   const typename Family::Density& mu_d,
                                   const typename Family::Density& nu_d,
                                   const std::vector<Vec>& points,
                                   const std::vector<char>& member) {
    const double neg_inf = -std::numeric_limits<double>::infinity();
    std::vector<double> lw(points.size(), neg_inf);
    double shift = neg_inf;
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (!member[i]) continue;
        lw[i] = family.log_ratio(mu_d, nu_d, points[i]);
        if (lw[i] > shift) shift = lw[i];
    }
    std::vector<double> w(points.size(), 0.0);
    if (shift == neg_inf) return w; // all-zero; the update reports degeneracy
    for (std::size_t i = 0; i < points.size(); ++i)
        if (member[i]) w[i] = std::exp(lw[i] - shift);
    return w;
}

inline void snapshot_if_kept(CEState& state, const ScoredBatch& batch) {
    if (!state.keep_batches) return;
    state.batches.push_back({batch.points, batch.scores, batch.bounds, batch.level});
}

inline void record_iteration(CEState& state, int j, int level, double rho, int m, double gamma,
                             double alpha, std::optional<double> varpi_val) {
    state.iters.push_back({j, level, rho, m, gamma, alpha, varpi_val});
    if (j >= 1) state.iters_per_level[static_cast<std::size_t>(level)] += 1;
}

/// Grows the batch in place: draws from `nu`, scores at batch.level.
template <class Family>
auto make_grower(const Family& family, const typename Family::Params& nu,
                 const ScoreHierarchy& hier, RandomStream& draw_stream, ScoredBatch& batch,
                 CEState& state, PhaseTimings& timings) {
    return [&family, &nu, &hier, &draw_stream, &batch, &state, &timings](int n) {
        std::size_t begin = batch.points.size();
        {
            StopWatch sw(timings.sampling_s);
            std::vector<Vec> extra = family.sample(nu, draw_stream, n);
            batch.points.insert(batch.points.end(), extra.begin(), extra.end());
        }
        score_from(hier, batch.level, batch, begin, state, timings);
    };
}

constexpr std::uint64_t kDrawTag = 1;
constexpr std::uint64_t kPrecondTag = 2;

/// Algorithm core shared by the standard engine and the pre-conditioned
/// engine's per-level runs: the plain CE iteration with the score fixed to
/// one hierarchy level. With `abort_on_growth`, a needed sample growth ends
/// the run instead (the level-increment rule of the pre-conditioned method).
/// Returns true when the run was aborted that way.
template <class Family>
bool run_algorithm1(const CEConfig& cfg, const Family& family, const ScoreHierarchy& hier,
                    int level, typename Family::Params& nu, RandomStream root,
                    bool abort_on_growth, bool do_final_estimate, int m_init, CEState& state,
                    PhaseTimings& timings, double& p_hat, int& m_final) {
    StopWatch total(timings.total_s);
    const typename Family::Density mu_d = family.density(family.nominal());
    typename Family::Density nu_d = family.density(nu);

    ScoredBatch batch;
    RandomStream draw = root.child(kDrawTag).child(0);
    {
        StopWatch sw(timings.sampling_s);
        batch.points = family.sample(nu, draw, m_init);
    }
    score_from(hier, level, batch, 0, state, timings);

    double rho = cfg.rho;
    double gamma = empirical_quantile(batch.scores, rho);
    state.gamma0 = gamma;
    state.alpha0 = 0.0; // this algorithm never consults error bounds
    state.jmax = jmax_bound(cfg.gamma_star, gamma, 0.0, cfg.delta);
    record_iteration(state, 0, level, rho, static_cast<int>(batch.points.size()), gamma, 0.0,
                     std::nullopt);
    snapshot_if_kept(state, batch);

    int j = 0;
    bool aborted = false;
    while (gamma < cfg.gamma_star) {
        ++j;
        std::vector<char> member(batch.points.size());
        double threshold = std::min(gamma, cfg.gamma_star);
        for (std::size_t i = 0; i < batch.points.size(); ++i)
            member[i] = batch.scores[i] >= threshold ? 1 : 0;
        {
            StopWatch sw(timings.update_s);
            nu = family.ce_update(batch.points,
                                  masked_weights(family, mu_d, nu_d, batch.points, member));
        }
        nu_d = family.density(nu);

        int m_cur = static_cast<int>(batch.points.size());
        draw = root.child(kDrawTag).child(static_cast<std::uint64_t>(j));
        {
            StopWatch sw(timings.sampling_s);
            batch.points = family.sample(nu, draw, m_cur);
        }
        score_from(hier, level, batch, 0, state, timings);

        double gamma_bar = std::min(cfg.gamma_star, gamma + cfg.delta);
        auto grow = make_grower(family, nu, hier, draw, batch, state, timings);
        int cap = abort_on_growth ? m_cur : cfg.m_max;
        try {
            AdaptResult ar = adapt_rho_m([&] { return std::span<const double>(batch.scores); },
                                         rho, gamma_bar, cfg.beta, cap, grow);
            rho = ar.rho;
        } catch (const BudgetExhaustedError&) {
            if (!abort_on_growth) throw;
            aborted = true;
        }
        gamma = empirical_quantile(batch.scores, rho);
        record_iteration(state, j, level, rho, static_cast<int>(batch.points.size()), gamma, 0.0,
                         std::nullopt);
        snapshot_if_kept(state, batch);
        if (aborted) break;
    }

    if (aborted) {
        state.J = j;
        return true;
    }

    // Final update over the original event set.
    std::vector<char> member(batch.points.size());
    for (std::size_t i = 0; i < batch.points.size(); ++i)
        member[i] = batch.scores[i] >= cfg.gamma_star ? 1 : 0;
    {
        StopWatch sw(timings.update_s);
        nu = family.ce_update(batch.points,
                              masked_weights(family, mu_d, nu_d, batch.points, member));
    }
    nu_d = family.density(nu);
    state.J = j + 1;
    m_final = static_cast<int>(batch.points.size());

    if (do_final_estimate) {
        StopWatch sw(timings.final_is_s);
        draw = root.child(kDrawTag).child(static_cast<std::uint64_t>(j + 1));
        ScoredBatch est;
        {
            StopWatch sw2(timings.sampling_s);
            est.points = family.sample(nu, draw, m_final);
        }
        score_from(hier, hier.top_level(), est, 0, state, timings);
        KahanSum sum;
        for (std::size_t i = 0; i < est.points.size(); ++i)
            if (est.scores[i] >= cfg.gamma_star)
                sum.add(family.ratio(mu_d, nu_d, est.points[i]));
        p_hat = sum.value() / static_cast<double>(est.points.size());
    }
    return false;
}

/// Algorithm-5 adaptation: joint (m, rho, k) selection for the multifidelity
/// engine. On exit the quantile condition holds at the selected level and the
/// batch's error bound does not exceed the previous iteration's.
template <class Family>
void select_level(const CEConfig& cfg, const Family& family, const ScoreHierarchy& hier,
                  const typename Family::Params& nu, RandomStream& draw_stream,
                  ScoredBatch& batch, double& rho, int& k, double alpha_prev, double gamma_prev,
                  CEState& state, PhaseTimings& timings, std::optional<double>& varpi_out) {
    const double c = hier.error_constant();
    const int top = hier.top_level();
    while (true) {
        double alpha = alpha_hat(batch.bounds, c);
        double gamma_tilde = cfg.alpha_substitution ? gamma_prev + 2.0 * alpha + cfg.delta
                                                    : gamma_prev + 2.0 * alpha_prev + cfg.delta;
        double gamma_bar = std::min(cfg.gamma_star + alpha, gamma_tilde);
        bool delta_gamma = empirical_quantile(batch.scores, rho) >= gamma_bar;
        bool delta_error = alpha <= alpha_prev;
        if (delta_gamma && delta_error) return;

        if (k == top) {
            auto grow = make_grower(family, nu, hier, draw_stream, batch, state, timings);
            AdaptResult ar = adapt_rho_m([&] { return std::span<const double>(batch.scores); },
                                         rho, gamma_bar, cfg.beta, cfg.m_max, grow);
            rho = ar.rho;
            continue;
        }
        if (delta_error) {
            double v = varpi(batch.scores, alpha, gamma_bar);
            varpi_out = v;
            if (v > 0.0) {
                auto grow = make_grower(family, nu, hier, draw_stream, batch, state, timings);
                AdaptResult ar = adapt_rho_m(
                    [&] { return std::span<const double>(batch.scores); }, rho, gamma_bar,
                    cfg.beta, cfg.m_max, grow);
                rho = ar.rho;
                continue;
            }
        }
        // Refine: next level in the hierarchy; the current points are
        // re-scored there and rho keeps its incoming value.
        k += 1;
        rescore_all(hier, k, batch, state, timings);
    }
}

} // namespace detail

/// Algorithm of Homem-de-Mello and Rubinstein: plain CE iteration driven by
/// the high-fidelity score.
template <class Family>
RunResult<Family> run_standard_ce(const CEConfig& cfg, const Family& family,
                                  const ScoreHierarchy& hier, RandomStream root,
                                  std::optional<typename Family::Params> nu0 = std::nullopt,
                                  bool keep_batches = false) {
    cfg.validate();
    RunResult<Family> result;
    result.trace.keep_batches = keep_batches;
    result.trace.evals.assign(static_cast<std::size_t>(hier.level_count()) + 1, 0);
    result.trace.iters_per_level.assign(static_cast<std::size_t>(hier.level_count()) + 1, 0);
    result.timings.scoring_s.assign(static_cast<std::size_t>(hier.level_count()) + 1, 0.0);
    result.nu_final = nu0 ? *nu0 : family.nominal();
    detail::run_algorithm1(cfg, family, hier, hier.top_level(), result.nu_final, root,
                           /*abort_on_growth=*/false, /*do_final_estimate=*/true, cfg.m,
                           result.trace, result.timings, result.p_hat, result.m_final);
    return result;
}

/// Pre-conditioned CE: one plain CE run per hierarchy level, each initialized
/// with the previous level's output. At surrogate levels the sample-growth
/// branch is replaced by moving to the next level.
template <class Family>
PrecondResult<Family> run_preconditioned_ce(const CEConfig& cfg, const Family& family,
                                            const ScoreHierarchy& hier, RandomStream root,
                                            std::optional<typename Family::Params> nu0 =
                                                std::nullopt,
                                            bool keep_batches = false) {
    cfg.validate();
    PrecondResult<Family> result;
    result.timings.scoring_s.assign(static_cast<std::size_t>(hier.level_count()) + 1, 0.0);
    result.nu_final = nu0 ? *nu0 : family.nominal();
    const int top = hier.top_level();
    int m_init = cfg.m;
    for (int k = 1; k <= top; ++k) {
        CEState trace;
        trace.keep_batches = keep_batches;
        trace.evals.assign(static_cast<std::size_t>(hier.level_count()) + 1, 0);
        trace.iters_per_level.assign(static_cast<std::size_t>(hier.level_count()) + 1, 0);
        RandomStream level_root =
            k == top ? root : root.child(detail::kPrecondTag).child(static_cast<std::uint64_t>(k));
        bool aborted = detail::run_algorithm1(
            cfg, family, hier, k, result.nu_final, level_root,
            /*abort_on_growth=*/k != top, /*do_final_estimate=*/k == top, m_init, trace,
            result.timings, result.p_hat, result.m_final);
        if (cfg.precond_m_inherit && !trace.iters.empty())
            m_init = trace.iters.back().m;
        result.level_traces.push_back(std::move(trace));
        result.level_aborted.push_back(aborted);
    }
    return result;
}

/// The surrogate-selecting CE engine: relaxed event sets built from certified
/// error bounds, with the approximation level chosen per iteration.
template <class Family>
RunResult<Family> run_multifidelity_ce(const CEConfig& cfg, const Family& family,
                                       const ScoreHierarchy& hier, RandomStream root,
                                       std::optional<typename Family::Params> nu0 = std::nullopt,
                                       bool keep_batches = false) {
    cfg.validate();
    using detail::ScoredBatch;
    using detail::StopWatch;

    RunResult<Family> result;
    CEState& state = result.trace;
    state.keep_batches = keep_batches;
    state.evals.assign(static_cast<std::size_t>(hier.level_count()) + 1, 0);
    state.iters_per_level.assign(static_cast<std::size_t>(hier.level_count()) + 1, 0);
    result.timings.scoring_s.assign(static_cast<std::size_t>(hier.level_count()) + 1, 0.0);
    StopWatch total(result.timings.total_s);

    const double c = hier.error_constant();
    const int top = hier.top_level();
    const typename Family::Density mu_d = family.density(family.nominal());
    typename Family::Params nu = nu0 ? *nu0 : family.nominal();
    typename Family::Density nu_d = family.density(nu);

    ScoredBatch batch;
    RandomStream draw = root.child(detail::kDrawTag).child(0);
    {
        StopWatch sw(result.timings.sampling_s);
        batch.points = family.sample(nu, draw, cfg.m);
    }
    int k = 1;
    detail::score_from(hier, k, batch, 0, state, result.timings);

    double rho = cfg.rho;
    double gamma = empirical_quantile(batch.scores, rho);
    double alpha = alpha_hat(batch.bounds, c);
    state.gamma0 = gamma;
    state.alpha0 = alpha;
    state.jmax = jmax_bound(cfg.gamma_star, gamma, alpha, cfg.delta);
    detail::record_iteration(state, 0, k, rho, static_cast<int>(batch.points.size()), gamma,
                             alpha, std::nullopt);
    detail::snapshot_if_kept(state, batch);

    int j = 0;
    const int hard_cap = 100 * state.jmax + 1000;
    while (gamma < cfg.gamma_star + alpha) {
        ++j;
        if (j > hard_cap)
            throw Error("run_multifidelity_ce: iteration cap exceeded; quantile stalled");

        double threshold = relaxed_threshold(gamma, alpha, cfg.gamma_star);
        std::vector<char> member(batch.points.size());
        for (std::size_t i = 0; i < batch.points.size(); ++i)
            member[i] = batch.scores[i] >= threshold ? 1 : 0;
        {
            StopWatch sw(result.timings.update_s);
            nu = family.ce_update(batch.points,
                                  detail::masked_weights(family, mu_d, nu_d, batch.points,
                                                         member));
        }
        nu_d = family.density(nu);

        int m_cur = static_cast<int>(batch.points.size());
        draw = root.child(detail::kDrawTag).child(static_cast<std::uint64_t>(j));
        {
            StopWatch sw(result.timings.sampling_s);
            batch.points = family.sample(nu, draw, m_cur);
        }
        detail::score_from(hier, k, batch, 0, state, result.timings);

        std::optional<double> varpi_val;
        detail::select_level(cfg, family, hier, nu, draw, batch, rho, k, alpha, gamma, state,
                             result.timings, varpi_val);
        gamma = empirical_quantile(batch.scores, rho);
        alpha = alpha_hat(batch.bounds, c);
        detail::record_iteration(state, j, k, rho, static_cast<int>(batch.points.size()), gamma,
                                 alpha, varpi_val);
        detail::snapshot_if_kept(state, batch);
    }

    // Final update over A, deciding membership by certified screening; the
    // high-fidelity score is consulted only inside the uncertainty band.
    std::vector<char> member(batch.points.size());
    for (std::size_t i = 0; i < batch.points.size(); ++i) {
        double band = c * batch.bounds[i];
        if (batch.scores[i] >= cfg.gamma_star + band) {
            member[i] = 1;
        } else if (batch.scores[i] < cfg.gamma_star - band) {
            member[i] = 0;
        } else {
            double phi;
            {
                StopWatch sw(result.timings.scoring_s[static_cast<std::size_t>(top)]);
                phi = hier.eval_level(batch.points[i], top).score;
            }
            state.evals[static_cast<std::size_t>(top)] += 1;
            member[i] = phi >= cfg.gamma_star ? 1 : 0;
        }
    }
    {
        StopWatch sw(result.timings.update_s);
        nu = family.ce_update(batch.points,
                              detail::masked_weights(family, mu_d, nu_d, batch.points, member));
    }
    nu_d = family.density(nu);
    state.J = j + 1;
    result.m_final = static_cast<int>(batch.points.size());

    {
        StopWatch sw(result.timings.final_is_s);
        draw = root.child(detail::kDrawTag).child(static_cast<std::uint64_t>(j + 1));
        ScoredBatch est;
        {
            StopWatch sw2(result.timings.sampling_s);
            est.points = family.sample(nu, draw, result.m_final);
        }
        detail::score_from(hier, top, est, 0, state, result.timings);
        KahanSum sum;
        for (std::size_t i = 0; i < est.points.size(); ++i)
            if (est.scores[i] >= cfg.gamma_star)
                sum.add(family.ratio(mu_d, nu_d, est.points[i]));
        result.p_hat = sum.value() / static_cast<double>(est.points.size());
    }
    result.nu_final = nu;
    return result;
}

} // namespace mfce

#endif
