#include "mfce/models_analytic.hpp"

#include <cmath>

namespace mfce {

double normal_tail(double z) {
    return 0.5 * std::erfc(z / std::sqrt(2.0));
}

void LinearGaussianProblem::validate() const {
    if (w.size() == 0 || w.norm() == 0.0)
        throw InvalidParameterError("LinearGaussianProblem: w must be nonzero");
    if (mu.mean.size() != w.size())
        throw InvalidParameterError("LinearGaussianProblem: dimension mismatch");
    if (u.size() != w.size())
        throw InvalidParameterError("LinearGaussianProblem: u dimension mismatch");
    for (std::size_t k = 1; k < alphas.size(); ++k)
        if (!(alphas[k] < alphas[k - 1]))
            throw InvalidParameterError("LinearGaussianProblem: alphas must strictly decrease");
    for (double a : alphas)
        if (!(a > 0.0))
            throw InvalidParameterError("LinearGaussianProblem: alphas must be positive");
}

double LinearGaussianProblem::analytic_probability(double threshold) const {
    // w.X is normal with mean w.mu and variance w' Sigma w.
    double mean = w.dot(mu.mean);
    double sd = std::sqrt(w.dot(mu.cov * w));
    return normal_tail((threshold - mean) / sd);
}

double LinearGaussianProblem::analytic_probability() const {
    return analytic_probability(gamma_star);
}

AnalyticHierarchy::AnalyticHierarchy(LinearGaussianProblem problem)
    : problem_(std::move(problem)) {
    problem_.validate();
}

int AnalyticHierarchy::level_count() const {
    return static_cast<int>(problem_.alphas.size()) + 1;
}

ScoreBound AnalyticHierarchy::eval_level(const Vec& x, int level) const {
    if (level < 1 || level > level_count())
        throw InvalidParameterError("AnalyticHierarchy: level out of range");
    double phi = problem_.w.dot(x);
    if (level == level_count()) return {phi, 0.0};
    double a = problem_.alphas[static_cast<std::size_t>(level - 1)];
    return {phi + a * std::cos(problem_.u.dot(x)), a};
}

int AnalyticHierarchy::cost_rank(int level) const {
    if (level < 1 || level > level_count())
        throw InvalidParameterError("AnalyticHierarchy: level out of range");
    return level;
}

} // namespace mfce
