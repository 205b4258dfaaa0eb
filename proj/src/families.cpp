#include "mfce/families.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <numbers>

namespace mfce {

namespace {

void check_gaussian(const GaussianParams& params) {
    if (params.mean.size() == 0)
        throw InvalidParameterError("gaussian: empty mean");
    if (params.cov.rows() != params.mean.size() || params.cov.cols() != params.mean.size())
        throw InvalidParameterError("gaussian: covariance shape mismatch");
}

} // namespace

GaussianDensity::GaussianDensity(const GaussianParams& params) : params_(params) {
    check_gaussian(params);
    llt_.compute(params.cov);
    if (llt_.info() != Eigen::Success)
        throw InvalidParameterError("gaussian: covariance not positive definite");
    double log_det = 0.0;
    for (int i = 0; i < params.cov.rows(); ++i)
        log_det += 2.0 * std::log(llt_.matrixL()(i, i));
    log_norm_ = -0.5 * (params.dim() * std::log(2.0 * std::numbers::pi) + log_det);
}

double GaussianDensity::log_pdf(const Vec& x) const {
    if (x.size() != params_.mean.size())
        throw InvalidParameterError("gaussian: point dimension mismatch");
    Vec d = x - params_.mean;
    Vec y = llt_.matrixL().solve(d);
    return log_norm_ - 0.5 * y.squaredNorm();
}

double gaussian_log_density(const GaussianParams& params, const Vec& x) {
    return GaussianDensity(params).log_pdf(x);
}

std::vector<Vec> gaussian_sample(const GaussianParams& params, RandomStream& stream, int m) {
    check_gaussian(params);
    if (m < 1) throw InvalidParameterError("gaussian_sample: m must be >= 1");
    Eigen::LLT<Mat> llt(params.cov);
    if (llt.info() != Eigen::Success)
        throw InvalidParameterError("gaussian_sample: covariance not positive definite");
    Mat chol = llt.matrixL();
    int p = params.dim();
    std::vector<Vec> out;
    out.reserve(static_cast<std::size_t>(m));
    Vec n(p);
    for (int i = 0; i < m; ++i) {
        for (int d = 0; d < p; ++d) n[d] = stream.normal();
        out.push_back(params.mean + chol * n);
    }
    return out;
}

Mat floor_eigenvalues(const Mat& sym, double floor) {
    Eigen::SelfAdjointEigenSolver<Mat> eig(sym);
    if (eig.info() != Eigen::Success)
        throw InvalidParameterError("floor_eigenvalues: eigendecomposition failed");
    Vec lam = eig.eigenvalues();
    for (int i = 0; i < lam.size(); ++i)
        if (lam[i] < floor) lam[i] = floor;
    Mat out = eig.eigenvectors() * lam.asDiagonal() * eig.eigenvectors().transpose();
    return 0.5 * (out + out.transpose());
}

GaussianParams gaussian_ce_update(const std::vector<Vec>& points,
                                  const std::vector<double>& weights, double floor) {
    if (points.empty() || points.size() != weights.size())
        throw InvalidParameterError("gaussian_ce_update: points/weights mismatch");
    if (floor <= 0.0)
        throw InvalidParameterError("gaussian_ce_update: floor must be positive");
    double total = 0.0;
    for (double w : weights) {
        if (w < 0.0 || !std::isfinite(w))
            throw InvalidParameterError("gaussian_ce_update: weights must be finite and >= 0");
        total += w;
    }
    if (total <= 0.0)
        throw DegenerateUpdateError("gaussian_ce_update: all weights zero");

    int p = static_cast<int>(points.front().size());
    Vec mean = Vec::Zero(p);
    for (std::size_t i = 0; i < points.size(); ++i)
        if (weights[i] > 0.0) mean += weights[i] * points[i];
    mean /= total;

    Mat cov = Mat::Zero(p, p);
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (weights[i] <= 0.0) continue;
        Vec d = points[i] - mean;
        cov.noalias() += weights[i] * (d * d.transpose());
    }
    cov /= total;
    return {mean, floor_eigenvalues(cov, floor)};
}

CategoricalParams categorical_ce_update(const std::vector<Vec>& support,
                                        const std::vector<double>& weights) {
    if (support.empty() || support.size() != weights.size())
        throw InvalidParameterError("categorical_ce_update: support/weights mismatch");
    double total = 0.0;
    for (double w : weights) {
        if (w < 0.0 || !std::isfinite(w))
            throw InvalidParameterError("categorical_ce_update: weights must be finite and >= 0");
        total += w;
    }
    if (total <= 0.0)
        throw DegenerateUpdateError("categorical_ce_update: all weights zero");
    CategoricalParams out;
    out.support = support;
    out.probs.resize(weights.size());
    for (std::size_t i = 0; i < weights.size(); ++i) out.probs[i] = weights[i] / total;
    return out;
}

int categorical_index(const CategoricalParams& params, const Vec& x) {
    for (std::size_t i = 0; i < params.support.size(); ++i)
        if (params.support[i] == x) return static_cast<int>(i);
    throw InvalidParameterError("categorical: point not in support");
}

double likelihood_ratio(const GaussianParams& mu, const GaussianParams& nu, const Vec& x) {
    double log_ratio = gaussian_log_density(mu, x) - gaussian_log_density(nu, x);
    double r = std::exp(log_ratio);
    if (r > 0.0 && !std::isfinite(r))
        throw DominationViolationError("likelihood_ratio: ratio overflow");
    return r;
}

double likelihood_ratio(const CategoricalParams& mu, const CategoricalParams& nu, const Vec& x) {
    int i = categorical_index(mu, x);
    double num = mu.probs[static_cast<std::size_t>(i)];
    double den = nu.probs[static_cast<std::size_t>(categorical_index(nu, x))];
    if (den == 0.0 && num > 0.0)
        throw DominationViolationError("likelihood_ratio: proposal vanishes where mu does not");
    return den == 0.0 ? 0.0 : num / den;
}

std::vector<Vec> CategoricalFamily::sample(const Params& params, RandomStream& stream,
                                           int m) const {
    if (m < 1) throw InvalidParameterError("categorical sample: m must be >= 1");
    std::vector<Vec> out;
    out.reserve(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) {
        double u = stream.uniform();
        double acc = 0.0;
        std::size_t pick = params.probs.size() - 1;
        for (std::size_t s = 0; s < params.probs.size(); ++s) {
            acc += params.probs[s];
            if (u < acc) {
                pick = s;
                break;
            }
        }
        out.push_back(params.support[pick]);
    }
    return out;
}

CategoricalFamily::Params CategoricalFamily::ce_update(const std::vector<Vec>& points,
                                                       const std::vector<double>& weights) const {
    // Aggregate per-sample weights onto the nominal support, then normalize.
    std::vector<double> mass(nominal_.support.size(), 0.0);
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (weights[i] <= 0.0) continue;
        mass[static_cast<std::size_t>(categorical_index(nominal_, points[i]))] += weights[i];
    }
    return categorical_ce_update(nominal_.support, mass);
}

} // namespace mfce
