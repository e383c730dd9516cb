#include <doctest.h>

#include <algorithm>
#include <map>
#include <numeric>
#include <random>

#include "seqal/error.hpp"
#include "seqal/glm.hpp"
#include "seqal/selection.hpp"
#include "../support/oracles.hpp"

using namespace seqal;

namespace {

Matrix gaussian_rows(std::size_t n, std::size_t p, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    Matrix x(n, p);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < p; ++j) x(i, j) = g(rng);
    return x;
}

std::vector<std::size_t> iota_n(std::size_t n) {
    std::vector<std::size_t> v(n);
    std::iota(v.begin(), v.end(), std::size_t{0});
    return v;
}

// Adjusted Rand index between two labelings.
double adjusted_rand(const std::vector<int>& a, const std::vector<int>& b) {
    std::map<std::pair<int, int>, double> joint;
    std::map<int, double> ra, rb;
    for (std::size_t i = 0; i < a.size(); ++i) {
        joint[{a[i], b[i]}] += 1.0;
        ra[a[i]] += 1.0;
        rb[b[i]] += 1.0;
    }
    auto c2 = [](double v) { return v * (v - 1.0) / 2.0; };
    double index = 0.0, sa = 0.0, sb = 0.0;
    for (auto& [k, v] : joint) index += c2(v);
    for (auto& [k, v] : ra) sa += c2(v);
    for (auto& [k, v] : rb) sb += c2(v);
    const double expected = sa * sb / c2(static_cast<double>(a.size()));
    return (index - expected) / (0.5 * (sa + sb) - expected);
}

}  // namespace

TEST_CASE("d-score closed-form cases") {
    Matrix x{{1.0, 0.0}, {0.0, 0.0}};
    const std::vector<std::size_t> c{0, 1};
    const auto s = d_scores(x, c, SymMatrix::identity(2), Vector{0.0, 0.0});
    CHECK(s[0].d_score == doctest::Approx(1.25));
    CHECK(s[1].d_score == 1.0);
    CHECK(s[0].pool_index == 0);

    const SymMatrix f = SymMatrix::diagonal(Vector{2.0, 3.0});
    CHECK(d_scores(x, std::vector<std::size_t>{1}, f, Vector{0.4, -0.2})[0].d_score == doctest::Approx(6.0));
    CHECK_THROWS_AS(d_scores(x, c, SymMatrix{{1.0, 1.0}, {1.0, 1.0}}, Vector{0.0, 0.0}), Error);
}

TEST_CASE("d-scores match full determinant recomputation") {
    std::mt19937_64 rng(41);
    for (std::size_t p = 2; p <= 8; p += 2) {
        const Matrix x = gaussian_rows(50, p, p);
        const SymMatrix f = oracle::random_spd(p, rng, 1.0);
        Vector b(p);
        for (std::size_t j = 0; j < p; ++j) b[j] = 0.3 * (static_cast<double>(j) - 1.0);
        const auto cand = iota_n(50);
        const auto ours = d_scores(x, cand, f, b);
        std::vector<double> brute(50);
        for (std::size_t i = 0; i < 50; ++i) {
            brute[i] = oracle::brute_d_score(f, x.row(i), b);
            CHECK(ours[i].d_score == doctest::Approx(brute[i]).epsilon(1e-9));
        }
        auto order_of = [](const std::vector<double>& v) {
            auto idx = iota_n(v.size());
            std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t c) { return v[a] > v[c]; });
            return idx;
        };
        std::vector<double> lemma(50), ratio(50);
        for (std::size_t i = 0; i < 50; ++i) {
            lemma[i] = ours[i].d_score;
            ratio[i] = ours[i].d_score / ours[0].d_score;
        }
        CHECK(order_of(lemma) == order_of(brute));
        CHECK(order_of(ratio) == order_of(lemma));
    }
}

TEST_CASE("uncertainty set counting and ties") {
    std::vector<Candidate> scored;
    for (std::size_t i = 0; i < 10; ++i) scored.push_back({i, static_cast<double>(i % 4), 0.0});
    CHECK(uncertainty_set(scored, 0.25).size() == 3);
    CHECK(uncertainty_set(scored, 0.25) == std::vector<std::size_t>{3, 7, 2});
    const auto all = uncertainty_set(scored, 1.0);
    CHECK(all.size() == 10);
    CHECK(all == std::vector<std::size_t>{3, 7, 2, 6, 1, 5, 9, 0, 4, 8});

    std::vector<Candidate> flat;
    for (std::size_t i = 0; i < 30; ++i) flat.push_back({29 - i, 1.0, 0.0});
    CHECK(uncertainty_set(flat, 0.1) == std::vector<std::size_t>{0, 1, 2});
    CHECK(uncertainty_set(flat, 1e-6).size() == 1);
    CHECK_THROWS_AS(uncertainty_set(std::vector<Candidate>{}, 0.5), Error);
}

TEST_CASE("select_next prefers the exact target and breaks ties by index") {
    Matrix x{{1.0, 1.0}, {2.0, 0.0}, {1.0, -1.0}, {0.5, 0.5}};
    const std::vector<std::size_t> u{0, 1, 2, 3};
    const Pick hit = select_next(u, x, Vector{1.0, 1.0}, 0.5);
    CHECK(hit.pool_index == 2);
    CHECK(hit.u_score == 0.0);
    CHECK(hit.d_rank == 3);

    const std::vector<std::size_t> shuffled{3, 1, 2, 0};
    const Pick tie = select_next(shuffled, x, Vector{0.0, 0.0}, 0.3);
    CHECK(tie.pool_index == 0);
    CHECK(tie.u_score == doctest::Approx(0.2));
    CHECK(tie.d_rank == 4);

    try {
        select_next(std::vector<std::size_t>{}, x, Vector{0.0, 0.0}, 0.5);
        FAIL("expected EmptyUncertaintySet");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::EmptyUncertaintySet);
    }
}

TEST_CASE("two-stage selection equals the exhaustive scan") {
    std::mt19937_64 rng(55);
    for (int rep = 0; rep < 40; ++rep) {
        const std::size_t p = 2 + rep % 3;
        const std::size_t n = 30 + static_cast<std::size_t>(rep) * 4;
        const Matrix x = gaussian_rows(n, p, 1000 + static_cast<std::uint64_t>(rep));
        const SymMatrix f = oracle::random_spd(p, rng, 1.0);
        Vector b(p);
        std::normal_distribution<double> g(0.0, 1.0);
        for (double& v : b) v = g(rng);
        const std::vector<std::size_t> cand = iota_n(n);
        for (double rho : {0.05, 0.1, 0.3, 1.0}) {
            SelectionConfig cfg;
            cfg.rho = rho;
            cfg.p_target = 0.5;
            const Pick pick = select_from(x, cand, f, b, cfg);
            CHECK(pick.pool_index == oracle::exhaustive_select(x, cand, f, b, rho, 0.5));
        }
    }
}

TEST_CASE("selection config validation") {
    SelectionConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.rho = 0.0;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg.rho = 1.2;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = SelectionConfig{};
    cfg.p_target = 1.0;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = SelectionConfig{};
    cfg.cluster_prefilter = ClusterPrefilterConfig{0, 10};
    CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("k-means separates distant blobs") {
    Matrix x(200, 2);
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<int> truth(200);
    for (std::size_t i = 0; i < 200; ++i) {
        truth[i] = i < 100 ? 0 : 1;
        const double shift = truth[i] ? 10.0 : 0.0;
        x(i, 0) = shift + g(rng);
        x(i, 1) = g(rng);
    }
    const auto rows = iota_n(200);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const KMeansResult km = kmeans(x, rows, 2, seed);
        CHECK(adjusted_rand(km.assignment, truth) == doctest::Approx(1.0));
    }
}

TEST_CASE("k-means saturation, determinism and errors") {
    const Matrix x = gaussian_rows(25, 3, 9);
    const auto rows = iota_n(25);
    const KMeansResult all = kmeans(x, rows, 25, 1);
    std::vector<int> sorted = all.assignment;
    std::sort(sorted.begin(), sorted.end());
    CHECK(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end());

    const KMeansResult a = kmeans(x, rows, 4, 77);
    const KMeansResult b = kmeans(x, rows, 4, 77);
    CHECK(a.assignment == b.assignment);
    CHECK(a.centroids == b.centroids);
    CHECK(a.iterations <= 50);
    CHECK_THROWS_AS(kmeans(x, rows, 0, 1), Error);
    CHECK_THROWS_AS(kmeans(x, rows, 26, 1), Error);
}

TEST_CASE("prefilter picks from the winning cluster and skips labeled rows") {
    const Matrix x = gaussian_rows(400, 3, 12);
    const auto rows = iota_n(400);
    const ClusterPrefilter pf(x, rows, 8, 5);
    std::vector<std::uint8_t> avail(400, 1);
    SelectionConfig cfg;
    cfg.rho = 0.2;
    const SymMatrix f = SymMatrix::identity(3);
    const Vector b{0.5, -0.5, 0.2};
    const Pick first = pf.select(x, avail, f, b, cfg);
    CHECK(first.pool_index < 400);
    avail[first.pool_index] = 0;
    const Pick second = pf.select(x, avail, f, b, cfg);
    CHECK(second.pool_index != first.pool_index);
    std::fill(avail.begin(), avail.end(), 0);
    CHECK_THROWS_AS(pf.select(x, avail, f, b, cfg), Error);
}
