#ifndef MFCE_ESTIMATORS_HPP
#define MFCE_ESTIMATORS_HPP

#include "mfce/common.hpp"

#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace mfce {

/// Naive Monte-Carlo estimator: hit fraction of the indicator.
double mc_estimate(std::span<const Vec> points, const std::function<bool(const Vec&)>& indicator);

/// Importance-sampling estimator from precomputed likelihood ratios
/// mu(z_i)/nu(z_i); compensated summation keeps tiny-probability sums stable.
double is_estimate(std::span<const double> ratios, std::span<const char> in_event);

/// Mean of (p_hat_r - p_ref)^2 / p_ref^2 over repeated estimates.
double empirical_scv(std::span<const double> estimates, double p_ref);

/// SCV predicted for the proposal built on a relaxed set:
/// (p_nest_extra + p_rel_extra) / (m * p_A). With p_rel_extra = 0 this is the
/// plain nested-set formula.
double theoretical_scv(int m, double p_A, double p_rel_extra, double p_nest_extra);

/// Aggregated output of one experiment (cli-facing summary).
struct EstimateReport {
    double p_hat = 0.0;
    int m_final = 0;
    double empirical_scv = 0.0;
    bool has_scv = false;
    std::map<int, long> per_level_evals;
    std::map<std::string, double> wall_clock_s;
    // gamma / alpha / rho / level per iteration of the last repetition
    std::vector<double> gammas, alphas, rhos;
    std::vector<int> levels;
};

} // namespace mfce

#endif
