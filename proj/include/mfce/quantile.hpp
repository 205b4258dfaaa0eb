#ifndef MFCE_QUANTILE_HPP
#define MFCE_QUANTILE_HPP

#include "mfce/common.hpp"

#include <functional>
#include <optional>
#include <span>

namespace mfce {

/// Empirical (1-rho)-quantile: max{s : #{scores_i < s}/m <= 1-rho}. The
/// returned value is always a member of the input multiset and nonincreasing
/// in rho. Requires rho in (0,1).
double empirical_quantile(std::span<const double> scores, double rho);

/// Largest rho on the grid {1/m,...,(m-1)/m} whose quantile is >= gamma_bar,
/// or nullopt when even rho = 1/m falls short.
std::optional<double> largest_feasible_rho(std::span<const double> scores, double gamma_bar);

struct AdaptResult {
    double rho;
    int m;
    bool grew = false;
};

/// Joint (rho, m) adaptation: if the current rho already meets gamma_bar the
/// input is returned unchanged; otherwise rho is lowered to the largest
/// feasible grid value, and when none exists the sample is grown by factor
/// beta through `grow(n_additional)` until one does. Throws
/// BudgetExhaustedError once ceil(beta*m) would exceed m_max, reporting the
/// gap gamma_bar - best achievable quantile.
///
/// `scores` must view the current score array after every `grow` call.
AdaptResult adapt_rho_m(const std::function<std::span<const double>()>& scores, double rho,
                        double gamma_bar, double beta, int m_max,
                        const std::function<void(int)>& grow);

} // namespace mfce

#endif
