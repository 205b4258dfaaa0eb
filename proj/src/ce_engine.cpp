#include "mfce/ce_engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace mfce {

void CEConfig::validate() const {
    if (m < 1) throw InvalidParameterError("CEConfig: m must be >= 1");
    if (!(rho > 0.0 && rho < 1.0)) throw InvalidParameterError("CEConfig: rho must lie in (0,1)");
    if (!(delta > 0.0)) throw InvalidParameterError("CEConfig: delta must be positive");
    if (!(beta > 1.0)) throw InvalidParameterError("CEConfig: beta must exceed 1");
    if (!(floor > 0.0)) throw InvalidParameterError("CEConfig: floor must be positive");
    if (m_max < m) throw InvalidParameterError("CEConfig: m_max must be >= m");
    if (!std::isfinite(gamma_star)) throw InvalidParameterError("CEConfig: gamma_star not finite");
}

double alpha_hat(std::span<const double> bounds, double c) {
    if (bounds.empty()) throw InvalidParameterError("alpha_hat: empty bounds");
    double mx = 0.0;
    for (double b : bounds) mx = std::max(mx, b);
    return c * mx;
}

double alpha_hat(const SampleBatch& batch, double c) {
    return alpha_hat(std::span<const double>(batch.bounds), c);
}

double relaxed_threshold(double gamma_k, double alpha, double gamma_star) {
    if (alpha < 0.0) throw InvalidParameterError("relaxed_threshold: alpha must be >= 0");
    return std::min(gamma_k - 2.0 * alpha, gamma_star + alpha);
}

namespace {

constexpr double kGridTol = 1e-9;

// Quantile on a sorted array, accepting rho in (0, 1]; rho = 1 returns the
// minimum. Used for the plug-in estimators, whose tail fractions may hit 1.
double quantile_sorted_closed(const std::vector<double>& sorted, double rho) {
    auto m = static_cast<double>(sorted.size());
    auto idx = static_cast<long>(std::floor((1.0 - rho) * m + kGridTol));
    idx = std::clamp(idx, 0L, static_cast<long>(sorted.size()) - 1L);
    return sorted[static_cast<std::size_t>(idx)];
}

} // namespace

double varpi(std::span<const double> scores, double alpha, double gamma_bar) {
    if (scores.empty()) throw InvalidParameterError("varpi: empty scores");
    if (alpha < 0.0) throw InvalidParameterError("varpi: alpha must be >= 0");
    const auto m = static_cast<double>(scores.size());
    std::vector<double> sorted(scores.begin(), scores.end());
    std::sort(sorted.begin(), sorted.end());

    auto count_ge = [&](double t) {
        return static_cast<double>(sorted.end() -
                                   std::lower_bound(sorted.begin(), sorted.end(), t));
    };
    double rho_lower = count_ge(gamma_bar + alpha) / m;
    double rho_upper = count_ge(gamma_bar - alpha) / m;
    if (rho_upper == 0.0) return -std::numeric_limits<double>::infinity();
    if (rho_lower == 0.0) return 0.0;

    double gamma_b = quantile_sorted_closed(sorted, rho_upper);
    double gamma_u = quantile_sorted_closed(sorted, rho_lower);

    // eta_bar: largest fraction of scores inside a window [g, g+alpha] with g
    // in [gamma_b, gamma_u]. The window count only changes when g crosses a
    // score or a score minus alpha, so scanning those breakpoints plus the
    // interval ends is exhaustive.
    std::vector<double> candidates{gamma_b, gamma_u};
    for (double s : sorted) {
        if (s >= gamma_b && s <= gamma_u) candidates.push_back(s);
        double shifted = s - alpha;
        if (shifted >= gamma_b && shifted <= gamma_u) candidates.push_back(shifted);
    }
    auto count_window = [&](double g) {
        auto lo = std::lower_bound(sorted.begin(), sorted.end(), g);
        auto hi = std::upper_bound(sorted.begin(), sorted.end(), g + alpha);
        return static_cast<double>(hi - lo);
    };
    double eta_bar = 0.0;
    for (double g : candidates) eta_bar = std::max(eta_bar, count_window(g) / m);
    return rho_lower - eta_bar;
}

int jmax_bound(double gamma_star, double gamma0, double alpha0, double delta) {
    if (!(delta > 0.0)) throw InvalidParameterError("jmax_bound: delta must be positive");
    if (alpha0 < 0.0) throw InvalidParameterError("jmax_bound: alpha0 must be >= 0");
    double ratio = (gamma_star - gamma0 - alpha0) / delta;
    int j = static_cast<int>(std::ceil(ratio - kGridTol)) + 1;
    return std::max(1, j);
}

bool traces_identical(const CEState& a, const CEState& b) {
    if (a.J != b.J || a.jmax != b.jmax) return false;
    if (a.gamma0 != b.gamma0 || a.alpha0 != b.alpha0) return false;
    if (a.evals != b.evals || a.iters_per_level != b.iters_per_level) return false;
    if (a.iters.size() != b.iters.size()) return false;
    for (std::size_t i = 0; i < a.iters.size(); ++i) {
        const IterationRecord& x = a.iters[i];
        const IterationRecord& y = b.iters[i];
        if (x.j != y.j || x.level != y.level || x.m != y.m) return false;
        if (x.rho != y.rho || x.gamma != y.gamma || x.alpha != y.alpha) return false;
        if (x.varpi.has_value() != y.varpi.has_value()) return false;
        if (x.varpi && *x.varpi != *y.varpi) return false;
    }
    return true;
}

} // namespace mfce
