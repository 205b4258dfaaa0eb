#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mfce/quantile.hpp"
#include "mfce/random.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

using namespace mfce;

namespace {

// Definitional oracle: tries every sample value as the candidate supremum.
double quantile_brute_force(const std::vector<double>& scores, double rho) {
    double m = static_cast<double>(scores.size());
    double best = -std::numeric_limits<double>::infinity();
    bool found = false;
    for (double s : scores) {
        long below = 0;
        for (double t : scores)
            if (t < s) ++below;
        if (static_cast<double>(below) <= (1.0 - rho) * m + 1e-9 && (!found || s > best)) {
            best = s;
            found = true;
        }
    }
    REQUIRE(found);
    return best;
}

RandomStream stream(std::uint64_t tag) {
    return derive_substream(99, std::array<std::uint64_t, 1>{tag});
}

} // namespace

TEST_CASE("quantile matches the definitional scan on the worked examples") {
    std::vector<double> s{1, 2, 3, 4, 5};
    CHECK(empirical_quantile(s, 0.4) == 4.0);
    CHECK(empirical_quantile(s, 0.2) == 5.0);
    std::vector<double> flat(17, 3.25);
    CHECK(empirical_quantile(flat, 0.9) == 3.25);
    CHECK(empirical_quantile(flat, 0.05) == 3.25);
}

TEST_CASE("quantile equals the brute-force oracle on random score sets") {
    auto rng = stream(0);
    for (int rep = 0; rep < 10000; ++rep) {
        int m = 1 + static_cast<int>(rng.uniform() * 30);
        std::vector<double> scores(static_cast<std::size_t>(m));
        for (double& v : scores)
            v = std::floor(rng.uniform() * 10.0) / 2.0; // plenty of ties
        double rho = 0.05 + 0.9 * rng.uniform();
        double got = empirical_quantile(scores, rho);
        CHECK(got == quantile_brute_force(scores, rho));
        CHECK(std::count(scores.begin(), scores.end(), got) > 0);
    }
}

TEST_CASE("quantile is nonincreasing in rho") {
    auto rng = stream(1);
    for (int rep = 0; rep < 500; ++rep) {
        std::vector<double> scores(40);
        for (double& v : scores) v = rng.normal();
        double r1 = 0.05 + 0.4 * rng.uniform();
        double r2 = r1 + 0.5 * rng.uniform();
        if (r2 >= 1.0) r2 = 0.99;
        CHECK(empirical_quantile(scores, r1) >= empirical_quantile(scores, r2));
    }
}

TEST_CASE("surrogate sandwich: bounded score noise moves the quantile by at most the bound") {
    auto rng = stream(2);
    for (int rep = 0; rep < 500; ++rep) {
        int m = 5 + static_cast<int>(rng.uniform() * 60);
        double alpha = 0.5 * rng.uniform();
        std::vector<double> hi(static_cast<std::size_t>(m)), lo(hi.size());
        for (int i = 0; i < m; ++i) {
            hi[static_cast<std::size_t>(i)] = rng.normal();
            lo[static_cast<std::size_t>(i)] =
                hi[static_cast<std::size_t>(i)] + alpha * (2.0 * rng.uniform() - 1.0);
        }
        double rho = 0.05 + 0.9 * rng.uniform();
        CHECK(std::abs(empirical_quantile(hi, rho) - empirical_quantile(lo, rho)) <=
              alpha + 1e-12);
    }
}

TEST_CASE("largest feasible rho: examples and grid-scan oracle") {
    std::vector<double> s{1, 2, 3, 4, 5};
    CHECK(largest_feasible_rho(s, 4.0) == 0.4);
    CHECK(largest_feasible_rho(s, 0.5) == 0.8); // (m-1)/m
    CHECK_FALSE(largest_feasible_rho(s, 6.0).has_value());

    auto rng = stream(3);
    for (int rep = 0; rep < 2000; ++rep) {
        int m = 2 + static_cast<int>(rng.uniform() * 25);
        std::vector<double> scores(static_cast<std::size_t>(m));
        for (double& v : scores) v = std::floor(rng.uniform() * 8.0);
        double gamma_bar = std::floor(rng.uniform() * 9.0) - 0.5;
        auto got = largest_feasible_rho(scores, gamma_bar);
        // Exhaustive scan over the grid, largest first.
        std::optional<double> expect;
        for (int i = m - 1; i >= 1; --i) {
            double rho = static_cast<double>(i) / m;
            if (empirical_quantile(scores, rho) >= gamma_bar) {
                expect = rho;
                break;
            }
        }
        CHECK(got == expect);
    }
}

TEST_CASE("adapt: condition pre-satisfied leaves rho and m unchanged") {
    std::vector<double> scores{1, 2, 3, 4, 5};
    int grow_calls = 0;
    auto r = adapt_rho_m([&] { return std::span<const double>(scores); }, 0.4, 3.5, 1.25, 100,
                         [&](int) { ++grow_calls; });
    CHECK(r.rho == 0.4);
    CHECK(r.m == 5);
    CHECK_FALSE(r.grew);
    CHECK(grow_calls == 0);
}

TEST_CASE("adapt: terminates once the sampler reaches the target") {
    std::vector<double> scores{1.0, 2.0, 3.0};
    auto r = adapt_rho_m([&] { return std::span<const double>(scores); }, 0.5, 2.5, 1.25, 10000,
                         [&](int n) {
                             for (int i = 0; i < n; ++i)
                                 scores.push_back(i == 0 ? 2.6 : 1.0);
                         });
    CHECK(empirical_quantile(scores, r.rho) >= 2.5);
    CHECK(r.m == static_cast<int>(scores.size()));
}

TEST_CASE("adapt: grows when no grid point reaches the target") {
    // Stub sampler: every growth round appends one score above the target.
    std::vector<double> scores{1.0, 2.0, 3.0};
    auto r = adapt_rho_m([&] { return std::span<const double>(scores); }, 0.5, 3.5, 1.25, 10000,
                         [&](int n) {
                             for (int i = 0; i < n; ++i)
                                 scores.push_back(i == 0 ? 3.6 : 1.0);
                         });
    CHECK(empirical_quantile(scores, r.rho) >= 3.5);
    CHECK(r.grew);
    CHECK(r.m == static_cast<int>(scores.size()));
}

TEST_CASE("adapt: unreachable target exhausts the budget and reports the gap") {
    std::vector<double> scores{1.0, 1.5, 2.0};
    auto grow = [&](int n) {
        for (int i = 0; i < n; ++i) scores.push_back(1.9); // bounded below gamma_bar - 0.1
    };
    try {
        adapt_rho_m([&] { return std::span<const double>(scores); }, 0.5, 2.1, 1.25, 10000, grow);
        FAIL("expected BudgetExhaustedError");
    } catch (const BudgetExhaustedError& e) {
        CHECK(e.gap == doctest::Approx(0.1).epsilon(1e-9));
    }
}

TEST_CASE("rho outside (0,1) is rejected") {
    std::vector<double> s{1.0, 2.0};
    CHECK_THROWS_AS(empirical_quantile(s, 0.0), InvalidParameterError);
    CHECK_THROWS_AS(empirical_quantile(s, 1.0), InvalidParameterError);
}
