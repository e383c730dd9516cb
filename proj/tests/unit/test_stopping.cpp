#include <doctest.h>

#include <cmath>
#include <random>

#include "seqal/error.hpp"
#include "seqal/numerics.hpp"
#include "seqal/shrinkage.hpp"
#include "seqal/stopping.hpp"
#include "../support/oracles.hpp"

using namespace seqal;

TEST_CASE("shrunk inverse on diagonal information") {
    const SymMatrix f = SymMatrix::diagonal(Vector{4.0, 10.0});
    const SymMatrix all = shrunk_inverse(f, Indicators{1, 1});
    CHECK(all(0, 0) == doctest::Approx(0.25));
    CHECK(all(1, 1) == doctest::Approx(0.1));
    CHECK(all(0, 1) == 0.0);
    const SymMatrix masked = shrunk_inverse(f, Indicators{1, 0});
    CHECK(masked(0, 0) == doctest::Approx(0.25));
    CHECK(masked(1, 1) == 0.0);
    try {
        shrunk_inverse(f, Indicators{0, 0});
        FAIL("expected NoSelectedVariables");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::NoSelectedVariables);
    }
    CHECK_THROWS_AS(shrunk_inverse(SymMatrix{{1.0, 1.0}, {1.0, 1.0}}, Indicators{1, 1}), Error);
}

TEST_CASE("shrunk inverse equals the partitioned-inverse formula") {
    std::mt19937_64 rng(101);
    std::uniform_int_distribution<int> coin(0, 1);
    int cases = 0;
    for (std::size_t p = 1; p <= 6; ++p) {
        for (int rep = 0; rep < 40; ++rep) {
            const SymMatrix f = oracle::random_spd(p, rng);
            std::vector<int> ind(p);
            int any = 0;
            for (auto& v : ind) any += (v = coin(rng));
            if (!any) ind[rep % p] = 1;
            const auto ours = oracle::to_grid(shrunk_inverse(f, ind));
            const auto ref = oracle::partitioned_shrunk_inverse(f, ind);
            CHECK(oracle::max_rel_diff(ours, ref) <= 1e-8);
            ++cases;
        }
    }
    CHECK(cases == 240);
}

TEST_CASE("nu_n by substitution") {
    const SymMatrix f = SymMatrix::diagonal(Vector{4.0, 10.0});
    CHECK(nu_n(f, Indicators{1, 1}, 2) == doctest::Approx(0.5));
    CHECK(nu_n(f, Indicators{0, 1}, 10) == doctest::Approx(1.0));
    CHECK(nu_n(f, Indicators{1, 1}, 16, GrowthFunction{0.5}) == doctest::Approx(4.0 * 0.25));
}

TEST_CASE("nu_n matches the eigen oracle on the explicitly masked inverse") {
    std::mt19937_64 rng(7);
    for (int rep = 0; rep < 30; ++rep) {
        const SymMatrix f = oracle::random_spd(4, rng);
        const std::vector<int> ind{1, rep % 2, 1, (rep / 2) % 2};
        const auto masked = oracle::partitioned_shrunk_inverse(f, ind);
        const double ref = 37.0 * oracle::bisection_eigenvalues(masked).front();
        CHECK(nu_n(f, ind, 37) == doctest::Approx(ref).epsilon(1e-9));
    }
}

TEST_CASE("nu_n is invariant to duplicating the data") {
    std::mt19937_64 rng(8);
    const SymMatrix f = oracle::random_spd(3, rng);
    SymMatrix f3 = f;
    f3 *= 3.0;
    const Indicators ind{1, 0, 1};
    CHECK(nu_n(f3, ind, 300) == doctest::Approx(nu_n(f, ind, 100)).epsilon(1e-12));
}

TEST_CASE("should_stop by substitution") {
    StoppingConfig cfg;
    const StoppingState a = should_stop(0.5, 100, 2, cfg);
    CHECK(a.a_n_sq == doctest::Approx(5.991464547).epsilon(1e-8));
    CHECK(a.threshold == doctest::Approx(100.0 * 0.09 / 5.991464547).epsilon(1e-8));
    CHECK(a.threshold == doctest::Approx(1.5021).epsilon(1e-4));
    CHECK(a.stopped);
    REQUIRE(a.kappa.has_value());
    CHECK(*a.kappa == doctest::Approx(0.09 * 100.0 / (5.991464547 * 0.5)).epsilon(1e-8));

    const StoppingState b = should_stop(2.0, 100, 2, cfg);
    CHECK_FALSE(b.stopped);
    CHECK_FALSE(b.kappa.has_value());

    cfg.d = 1e-9;
    CHECK_FALSE(should_stop(0.5, 100, 2, cfg).stopped);

    try {
        should_stop(0.5, 100, 0, StoppingConfig{});
        FAIL("expected ZeroSupport");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::ZeroSupport);
    }
}

TEST_CASE("kappa identities") {
    CHECK(kappa(100, 0.3, 2.0, 100 * 0.09 / 2.0) == doctest::Approx(1.0));
    CHECK(kappa(50, 0.6, 3.0, 1.7) == doctest::Approx(4.0 * kappa(50, 0.3, 3.0, 1.7)));
}

TEST_CASE("stopping config validation and n0 default") {
    StoppingConfig cfg;
    CHECK(cfg.effective_n0(4) == 20);
    CHECK(cfg.effective_n0(15) == 30);
    cfg.n0 = 7;
    CHECK(cfg.effective_n0(4) == 7);
    CHECK_THROWS_AS(cfg.validate(8), Error);
    cfg = StoppingConfig{};
    cfg.d = -1.0;
    CHECK_THROWS_AS(cfg.validate(4), Error);
    cfg = StoppingConfig{};
    cfg.alpha = 1.0;
    CHECK_THROWS_AS(cfg.validate(4), Error);
}

TEST_CASE("growth function identifiers") {
    CHECK(GrowthFunction::parse("n").exponent == 1.0);
    CHECK(GrowthFunction::parse("n^0.9").exponent == doctest::Approx(0.9));
    CHECK(GrowthFunction::parse("n^0.9").id() == "n^0.9");
    CHECK(GrowthFunction{}.id() == "n");
    CHECK(GrowthFunction{}(12) == 12.0);
    CHECK_THROWS_AS(GrowthFunction::parse("log n"), Error);
    CHECK_THROWS_AS(GrowthFunction::parse("n^-1"), Error);
}

TEST_CASE("ellipsoid membership") {
    std::mt19937_64 rng(19);
    const SymMatrix f = oracle::random_spd(4, rng, 2.0);
    const Indicators ind{1, 1, 0, 1};
    const Vector b{0.7, -1.2, 0.0, 0.4};
    const SymMatrix prec = selected_precision(f, ind);
    const std::size_t n = 50;
    const double d = 0.3;
    const double nu = nu_n(f, ind, n);

    CHECK(ellipsoid_contains(b, b, prec, nu, n, d, ind));
    Vector off = b;
    off[2] = 1e-9;
    CHECK_FALSE(ellipsoid_contains(off, b, prec, nu, n, d, ind));

    // boundary points along random directions: S/n = d^2/nu exactly, by direct quadratic form
    std::normal_distribution<double> g(0.0, 1.0);
    const std::vector<std::size_t> sel{0, 1, 3};
    for (int rep = 0; rep < 50; ++rep) {
        Vector dir(3);
        for (double& v : dir) v = g(rng);
        double q = 0.0;
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 3; ++j) q += dir[i] * prec(i, j) * dir[j];
        const double t = std::sqrt(static_cast<double>(n) * d * d / nu / q);
        Vector z = b;
        for (std::size_t k = 0; k < 3; ++k) z[sel[k]] += t * (1.0 - 1e-12) * dir[k];
        CHECK(ellipsoid_contains(z, b, prec, nu, n, d, ind));
        for (std::size_t k = 0; k < 3; ++k) z[sel[k]] = b[sel[k]] + t * (1.0 + 1e-9) * dir[k];
        CHECK_FALSE(ellipsoid_contains(z, b, prec, nu, n, d, ind));
    }
}

TEST_CASE("maximum semi-axis equals d when nu is the largest masked eigenvalue") {
    std::mt19937_64 rng(29);
    for (int rep = 0; rep < 20; ++rep) {
        const SymMatrix f = oracle::random_spd(5, rng);
        const Indicators ind{1, 0, 1, 1, rep % 2};
        const std::size_t n = 120;
        const double nu = nu_n(f, ind, n);
        const SymMatrix prec = selected_precision(f, ind);
        CHECK(ellipsoid_max_semi_axis(prec, nu, n, 0.3) == doctest::Approx(0.3).epsilon(1e-9));
        // any nu at or below the threshold gives a semi-axis no longer than d
        const double smaller = ellipsoid_max_semi_axis(prec, nu * 1.5, n, 0.3);
        CHECK(smaller <= 0.3);
    }
}
