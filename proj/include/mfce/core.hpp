#ifndef MFCE_CORE_HPP
#define MFCE_CORE_HPP

#include "mfce/common.hpp"

#include <cstddef>
#include <vector>

namespace mfce {

struct ScoreBound {
    double score = 0.0;
    double bound = 0.0;
};

/// Ordered hierarchy of score models phi^(1) .. phi^(K+1).
///
/// Level K+1 is the high-fidelity score and has bound == 0. Lower levels
/// return certified error bounds: |phi(x) - phi^(k)(x)| <= error_constant() *
/// bound at every x. Implementations are pure functions of (x, level) and must
/// be callable concurrently for distinct points.
class ScoreHierarchy {
public:
    virtual ~ScoreHierarchy() = default;

    /// Total number of levels, K+1.
    virtual int level_count() const = 0;

    /// Score and certified error bound at `level` in [1, level_count()].
    virtual ScoreBound eval_level(const Vec& x, int level) const = 0;

    /// Strictly increasing per-level cost proxy (the hierarchy's d_k).
    virtual int cost_rank(int level) const = 0;

    /// Constant c that maps field-error bounds to score-error bounds.
    virtual double error_constant() const = 0;

    double evaluate(const Vec& x, int level) const { return eval_level(x, level).score; }
    double bound(const Vec& x, int level) const { return eval_level(x, level).bound; }
    int top_level() const { return level_count(); }
};

/// One batch of parameter points with their scores at a single hierarchy
/// level, per-point bounds, and log likelihood ratios log mu - log nu.
struct SampleBatch {
    std::vector<Vec> points;
    std::vector<double> scores;
    std::vector<double> bounds;
    std::vector<double> log_weights;
    int level_used = 0;

    std::size_t size() const { return points.size(); }

    void validate(int top_level) const {
        std::size_t m = points.size();
        if (m < 1) throw InvalidParameterError("SampleBatch: empty batch");
        if (scores.size() != m || bounds.size() != m || log_weights.size() != m)
            throw InvalidParameterError("SampleBatch: length mismatch");
        if (level_used == top_level)
            for (double b : bounds)
                if (b != 0.0)
                    throw InvalidParameterError("SampleBatch: nonzero bound at top level");
    }
};

} // namespace mfce

#endif
