#ifndef MFCE_FAMILIES_HPP
#define MFCE_FAMILIES_HPP

#include "mfce/common.hpp"
#include "mfce/random.hpp"

#include <Eigen/Cholesky>

#include <vector>

namespace mfce {

/// Parameters of one member of the p-dimensional Gaussian proposal family.
struct GaussianParams {
    Vec mean;
    Mat cov;

    int dim() const { return static_cast<int>(mean.size()); }
};

/// log nu^theta(x) for a Gaussian proposal. Throws InvalidParameterError if
/// the covariance is not positive definite.
double gaussian_log_density(const GaussianParams& params, const Vec& x);

/// Draws m points; deterministic given the stream.
std::vector<Vec> gaussian_sample(const GaussianParams& params, RandomStream& stream, int m);

/// Weighted maximum-likelihood update: mean is the weighted average of the
/// points, covariance the weighted outer-product average about it, normalized
/// by the total weight. Eigenvalues of the covariance are clamped from below
/// at `floor` before reassembly. Throws DegenerateUpdateError when no weight
/// is strictly positive.
GaussianParams gaussian_ce_update(const std::vector<Vec>& points,
                                  const std::vector<double>& weights, double floor);

/// Clamps the eigenvalues of a symmetric matrix at `floor` and reassembles.
Mat floor_eigenvalues(const Mat& sym, double floor);

struct CategoricalParams {
    std::vector<Vec> support;
    std::vector<double> probs;
};

/// Exact maximizer of the weighted log-likelihood over the simplex: the
/// normalized weights. Throws DegenerateUpdateError on all-zero weights.
CategoricalParams categorical_ce_update(const std::vector<Vec>& support,
                                        const std::vector<double>& weights);

/// Cached-factorization evaluator of one Gaussian density.
class GaussianDensity {
public:
    explicit GaussianDensity(const GaussianParams& params);
    double log_pdf(const Vec& x) const;
    const GaussianParams& params() const { return params_; }

private:
    GaussianParams params_;
    Eigen::LLT<Mat> llt_;
    double log_norm_;
};

/// mu(x) / nu(x) computed as a difference of log densities.
double likelihood_ratio(const GaussianParams& mu, const GaussianParams& nu, const Vec& x);

/// Categorical variant. Direct probability division, exact when the proposal
/// probabilities are exact multiples of the nominal ones. Throws
/// DominationViolationError where nu vanishes but mu does not.
double likelihood_ratio(const CategoricalParams& mu, const CategoricalParams& nu, const Vec& x);

/// Index of the support point equal to x (coordinate-wise exact match).
int categorical_index(const CategoricalParams& params, const Vec& x);

/// Proposal-family adapter used by the CE engines.
class GaussianFamily {
public:
    using Params = GaussianParams;
    using Density = GaussianDensity;

    GaussianFamily(GaussianParams nominal, double cov_floor)
        : nominal_(std::move(nominal)), floor_(cov_floor) {}

    const Params& nominal() const { return nominal_; }
    double cov_floor() const { return floor_; }

    std::vector<Vec> sample(const Params& params, RandomStream& stream, int m) const {
        return gaussian_sample(params, stream, m);
    }

    Params ce_update(const std::vector<Vec>& points, const std::vector<double>& weights) const {
        return gaussian_ce_update(points, weights, floor_);
    }

    Density density(const Params& params) const { return Density(params); }

    /// mu(x)/nu(x) through cached log densities; exponentiated at the end.
    double ratio(const Density& num, const Density& den, const Vec& x) const {
        return std::exp(num.log_pdf(x) - den.log_pdf(x));
    }

    double log_ratio(const Density& num, const Density& den, const Vec& x) const {
        return num.log_pdf(x) - den.log_pdf(x);
    }

    bool params_equal(const Params& a, const Params& b) const {
        return a.mean == b.mean && a.cov == b.cov;
    }

private:
    GaussianParams nominal_;
    double floor_;
};

class CategoricalFamily {
public:
    using Params = CategoricalParams;

    /// Density evaluator; categorical needs no factorization cache.
    class Density {
    public:
        explicit Density(Params params) : params_(std::move(params)) {}
        double pdf(const Vec& x) const {
            return params_.probs[static_cast<std::size_t>(categorical_index(params_, x))];
        }
        double log_pdf(const Vec& x) const { return std::log(pdf(x)); }
        const Params& params() const { return params_; }

    private:
        Params params_;
    };

    explicit CategoricalFamily(Params nominal) : nominal_(std::move(nominal)) {}

    const Params& nominal() const { return nominal_; }

    std::vector<Vec> sample(const Params& params, RandomStream& stream, int m) const;

    Params ce_update(const std::vector<Vec>& points, const std::vector<double>& weights) const;

    Density density(const Params& params) const { return Density(params); }

    // Direct division keeps the zero-variance proposal exact.
    double ratio(const Density& num, const Density& den, const Vec& x) const {
        double d = den.pdf(x);
        double n = num.pdf(x);
        if (d == 0.0 && n > 0.0)
            throw DominationViolationError("categorical proposal vanishes where mu does not");
        return d == 0.0 ? 0.0 : n / d;
    }

    double log_ratio(const Density& num, const Density& den, const Vec& x) const {
        return std::log(ratio(num, den, x));
    }

    bool params_equal(const Params& a, const Params& b) const {
        return a.probs == b.probs;
    }

private:
    Params nominal_;
};

} // namespace mfce

#endif
