#ifndef MFCE_COMMON_HPP
#define MFCE_COMMON_HPP

#include <Eigen/Dense>

#include <cstdlib>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace mfce {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

class InvalidParameterError : public Error {
public:
    using Error::Error;
};

/// Weighted parameter update received no usable weight mass. The caller is
/// expected to enlarge the sample size and retry.
class DegenerateUpdateError : public Error {
public:
    using Error::Error;
};

/// Sample-growth loop hit the configured cap before the target quantile was
/// reachable. `gap` is the remaining distance gamma_bar - best quantile.
class BudgetExhaustedError : public Error {
public:
    BudgetExhaustedError(const std::string& what, double gap)
        : Error(what), gap(gap) {}
    double gap;
};

class DominationViolationError : public Error {
public:
    using Error::Error;
};

class RankDeficientError : public Error {
public:
    using Error::Error;
};

class SingularSystemError : public Error {
public:
    using Error::Error;
};

class IncompatibleComparisonError : public Error {
public:
    using Error::Error;
};

/// Configuration validation failure; `key` is the dotted path of the bad entry.
class ConfigError : public Error {
public:
    ConfigError(const std::string& key, const std::string& what)
        : Error(key + ": " + what), key(key) {}
    std::string key;
};

/// Compensated (Kahan) accumulator for sums of many tiny terms.
class KahanSum {
public:
    void add(double x) {
        double y = x - comp_;
        double t = sum_ + y;
        comp_ = (t - sum_) - y;
        sum_ = t;
    }
    double value() const { return sum_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

/// Number of worker threads: MFCE_THREADS if set, else hardware concurrency.
inline unsigned worker_count() {
    if (const char* env = std::getenv("MFCE_THREADS")) {
        long n = std::atol(env);
        if (n >= 1) return static_cast<unsigned>(n);
    }
    unsigned hc = std::thread::hardware_concurrency();
    return hc > 0 ? hc : 1;
}

/// Runs fn(i) for i in [0, n). Each index writes only its own outputs, so the
/// result is identical for any thread count.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
    unsigned workers = worker_count();
    if (workers <= 1 || n < 2 * workers) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    std::size_t chunk = (n + workers - 1) / workers;
    for (unsigned w = 0; w < workers; ++w) {
        std::size_t lo = w * chunk;
        std::size_t hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &fn] {
            for (std::size_t i = lo; i < hi; ++i) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

} // namespace mfce

#endif
