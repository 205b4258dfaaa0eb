#ifndef MFCE_MODELS_ANALYTIC_HPP
#define MFCE_MODELS_ANALYTIC_HPP

#include "mfce/core.hpp"
#include "mfce/families.hpp"

#include <vector>

namespace mfce {

/// Oracle benchmark: linear score w.x under a Gaussian input law, so the rare
/// event probability has a closed form, plus a synthetic surrogate hierarchy
/// with exact error bounds.
///
/// Level K+1 evaluates w.x with bound 0. Level k <= K evaluates
/// w.x + alphas[k-1] * cos(u.x) with the constant bound alphas[k-1]; the
/// perturbation is deterministic, so repeated evaluation of one point is
/// consistent, and the certified-bound contract holds with c = 1 by
/// construction.
struct LinearGaussianProblem {
    Vec w;                      // score direction
    GaussianParams mu;          // input law
    double gamma_star = 0.0;
    std::vector<double> alphas; // strictly decreasing surrogate bound magnitudes
    Vec u;                      // perturbation direction

    void validate() const;

    /// Exact tail probability P(w.X >= gamma_star) for identity-covariance mu
    /// scaled by any covariance: complementary normal CDF at the standardized
    /// threshold.
    double analytic_probability() const;
    double analytic_probability(double threshold) const;
};

class AnalyticHierarchy : public ScoreHierarchy {
public:
    explicit AnalyticHierarchy(LinearGaussianProblem problem);

    int level_count() const override;
    ScoreBound eval_level(const Vec& x, int level) const override;
    int cost_rank(int level) const override;
    double error_constant() const override { return 1.0; }

    const LinearGaussianProblem& problem() const { return problem_; }

private:
    LinearGaussianProblem problem_;
};

/// Complementary standard normal CDF.
double normal_tail(double z);

} // namespace mfce

#endif
