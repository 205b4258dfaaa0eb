#include "mfce/estimators.hpp"

namespace mfce {

double mc_estimate(std::span<const Vec> points, const std::function<bool(const Vec&)>& indicator) {
    if (points.empty()) throw InvalidParameterError("mc_estimate: empty sample");
    long hits = 0;
    for (const Vec& x : points)
        if (indicator(x)) ++hits;
    return static_cast<double>(hits) / static_cast<double>(points.size());
}

double is_estimate(std::span<const double> ratios, std::span<const char> in_event) {
    if (ratios.empty() || ratios.size() != in_event.size())
        throw InvalidParameterError("is_estimate: ratios/indicator mismatch");
    KahanSum sum;
    for (std::size_t i = 0; i < ratios.size(); ++i)
        if (in_event[i]) sum.add(ratios[i]);
    return sum.value() / static_cast<double>(ratios.size());
}

double empirical_scv(std::span<const double> estimates, double p_ref) {
    if (estimates.size() < 2)
        throw InvalidParameterError("empirical_scv: need at least 2 estimates");
    if (!(p_ref > 0.0)) throw InvalidParameterError("empirical_scv: p_ref must be positive");
    KahanSum sum;
    for (double p : estimates) {
        double rel = (p - p_ref) / p_ref;
        sum.add(rel * rel);
    }
    return sum.value() / static_cast<double>(estimates.size());
}

double theoretical_scv(int m, double p_A, double p_rel_extra, double p_nest_extra) {
    if (m < 1) throw InvalidParameterError("theoretical_scv: m must be >= 1");
    if (!(p_A > 0.0)) throw InvalidParameterError("theoretical_scv: p_A must be positive");
    if (p_rel_extra < 0.0 || p_nest_extra < 0.0)
        throw InvalidParameterError("theoretical_scv: extras must be >= 0");
    return (p_nest_extra + p_rel_extra) / (static_cast<double>(m) * p_A);
}

} // namespace mfce
