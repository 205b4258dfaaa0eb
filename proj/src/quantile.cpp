#include "mfce/quantile.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace mfce {

namespace {

// Comparison slack for count <= (1-rho)*m; keeps grid values of rho exact.
constexpr double kGridTol = 1e-9;

double quantile_sorted(const std::vector<double>& sorted, double rho) {
    auto m = static_cast<double>(sorted.size());
    auto idx = static_cast<long>(std::floor((1.0 - rho) * m + kGridTol));
    idx = std::clamp(idx, 0L, static_cast<long>(sorted.size()) - 1L);
    return sorted[static_cast<std::size_t>(idx)];
}

} // namespace

double empirical_quantile(std::span<const double> scores, double rho) {
    if (scores.empty())
        throw InvalidParameterError("empirical_quantile: empty scores");
    if (!(rho > 0.0 && rho < 1.0))
        throw InvalidParameterError("empirical_quantile: rho must lie in (0,1)");
    std::vector<double> sorted(scores.begin(), scores.end());
    std::sort(sorted.begin(), sorted.end());
    return quantile_sorted(sorted, rho);
}

std::optional<double> largest_feasible_rho(std::span<const double> scores, double gamma_bar) {
    if (scores.empty())
        throw InvalidParameterError("largest_feasible_rho: empty scores");
    std::size_t m = scores.size();
    if (m < 2) return std::nullopt;
    std::vector<double> sorted(scores.begin(), scores.end());
    std::sort(sorted.begin(), sorted.end());
    // quantile at rho = i/m is sorted[m-i]; feasibility means sorted[j] >=
    // gamma_bar at j = m-i, so the largest feasible rho has the smallest j >= 1.
    auto it = std::lower_bound(sorted.begin(), sorted.end(), gamma_bar);
    if (it == sorted.end()) return std::nullopt;
    std::size_t j = std::max<std::size_t>(1, static_cast<std::size_t>(it - sorted.begin()));
    return static_cast<double>(m - j) / static_cast<double>(m);
}

AdaptResult adapt_rho_m(const std::function<std::span<const double>()>& scores, double rho,
                        double gamma_bar, double beta, int m_max,
                        const std::function<void(int)>& grow) {
    if (!(beta > 1.0))
        throw InvalidParameterError("adapt_rho_m: beta must exceed 1");
    AdaptResult result{rho, static_cast<int>(scores().size()), false};
    while (true) {
        std::span<const double> s = scores();
        result.m = static_cast<int>(s.size());
        if (empirical_quantile(s, result.rho) >= gamma_bar) return result;
        if (auto best = largest_feasible_rho(s, gamma_bar)) {
            result.rho = *best;
            return result;
        }
        int target = static_cast<int>(std::ceil(beta * result.m));
        if (target > m_max) {
            double best_quantile = *std::max_element(s.begin(), s.end());
            throw BudgetExhaustedError(
                "adapt_rho_m: sample cap reached before quantile target; gap = " +
                    std::to_string(gamma_bar - best_quantile),
                gamma_bar - best_quantile);
        }
        grow(target - result.m);
        result.grew = true;
    }
}

} // namespace mfce
