#include "dibom/expressivity.hpp"
#include <array>

#include <doctest.h>

#include <cmath>

using namespace dibom;

namespace {

FBEConfig small_config(std::uint64_t seed) {
    FBEConfig cfg;
    cfg.k = 5;
    cfg.m = 3;
    cfg.restarts = 2;
    cfg.inner_iters = 8;
    cfg.seed = seed;
    cfg.threads = 2;
    return cfg;
}

} // namespace

TEST_CASE("fixed unitary has low expressivity") {
    AnsatzBuilder fixed = [](int n, int, std::uint64_t) { return Circuit{n, {}}; };
    FBEConfig cfg = small_config(0);
    cfg.k = 8;
    cfg.m = 5;
    const FBEResult r = fbe_upper_bound(fixed, 2, 1, cfg);
    // a parameter-free identity cannot chase the sampled unitaries; typical
    // Haar overlap magnitudes at d = 4 sit near 0.4
    CHECK(r.estimate < 0.6);
    for (double s : r.scores) {
        CHECK(s >= 0.0);
        CHECK(s <= 1.0 + 1e-9);
    }
}

TEST_CASE("full general-unitary ansatz reaches expressivity one") {
    FBEConfig cfg;
    cfg.k = 4;
    cfg.m = 4;
    cfg.restarts = 2;
    cfg.inner_iters = 400;
    cfg.seed = 0;
    cfg.threads = 2;
    const FBEResult r = fbe_upper_bound(general_unitary_ansatz(), 2, 1, cfg);
    CHECK(r.estimate >= 0.98);
}

TEST_CASE("estimate is the minimum of the per-unitary scores") {
    const FBEResult r = fbe_upper_bound(dibom_ansatz(), 2, 3, small_config(3));
    REQUIRE(!r.scores.empty());
    double min_score = r.scores[0];
    for (double s : r.scores) min_score = std::min(min_score, s);
    CHECK(r.estimate == min_score);
    CHECK(r.scores[r.argmin] == min_score);
}

TEST_CASE("bound tightening invariants") {
    // more unitaries (fixed stream prefix) never raise the estimate
    FBEConfig small_k = small_config(7);
    small_k.k = 4;
    FBEConfig big_k = small_config(7);
    big_k.k = 9;
    const FBEResult a = fbe_upper_bound(dibom_ansatz(), 2, 3, small_k);
    const FBEResult b = fbe_upper_bound(dibom_ansatz(), 2, 3, big_k);
    for (int i = 0; i < small_k.k; ++i) CHECK(a.scores[i] == b.scores[i]); // prefix stable
    CHECK(b.estimate <= a.estimate + 1e-12);

    // more restarts never lower any score
    FBEConfig few = small_config(9);
    few.restarts = 1;
    FBEConfig many = small_config(9);
    many.restarts = 3;
    const FBEResult fa = fbe_upper_bound(dibom_ansatz(), 2, 3, few);
    const FBEResult fb = fbe_upper_bound(dibom_ansatz(), 2, 3, many);
    for (int i = 0; i < few.k; ++i) CHECK(fb.scores[i] >= fa.scores[i] - 1e-12);

    // more inner iterations never lower any score
    FBEConfig short_run = small_config(11);
    short_run.inner_iters = 3;
    FBEConfig long_run = small_config(11);
    long_run.inner_iters = 12;
    const FBEResult sa = fbe_upper_bound(dibom_ansatz(), 2, 3, short_run);
    const FBEResult sb = fbe_upper_bound(dibom_ansatz(), 2, 3, long_run);
    for (int i = 0; i < short_run.k; ++i) CHECK(sb.scores[i] >= sa.scores[i] - 1e-12);
}

TEST_CASE("determinism and thread independence") {
    FBEConfig cfg = small_config(13);
    const FBEResult a = fbe_upper_bound(dibom_ansatz(), 2, 3, cfg);
    const FBEResult b = fbe_upper_bound(dibom_ansatz(), 2, 3, cfg);
    CHECK(a.estimate == b.estimate);
    cfg.threads = 1;
    const FBEResult c = fbe_upper_bound(dibom_ansatz(), 2, 3, cfg);
    CHECK(a.estimate == c.estimate);
    for (int i = 0; i < cfg.k; ++i) CHECK(a.scores[i] == c.scores[i]);
}

TEST_CASE("frontier") {
    const std::vector<int> grid = {3};
    const std::vector<FrontierPoint> points = frontier(3, grid, small_config(1));
    REQUIRE(points.size() == 3); // zero anchor + L=3 + analytic 13449 anchor
    CHECK(points.front().analytic);
    CHECK(points.front().params == 0);
    CHECK(points.front().fbe == 0.0);
    CHECK(points.back().analytic);
    CHECK(points.back().params == 13449);
    CHECK(points.back().fbe == 1.0);
    const FrontierPoint& mid = points[1];
    CHECK(mid.L == 3);
    CHECK(mid.params == 21); // two product layers (9 each) + one generalized CZ (3)
    CHECK(mid.fbe >= 0.0);
    CHECK(mid.fbe <= 1.0);
    CHECK(mid.log10_params == doctest::Approx(std::log10(21.0)));
}

TEST_CASE("estimates grow with depth after median smoothing") {
    FBEConfig cfg;
    cfg.k = 6;
    cfg.m = 3;
    cfg.restarts = 2;
    cfg.inner_iters = 15;
    cfg.seed = 2;
    cfg.threads = 2;
    std::vector<double> estimates;
    for (int L : {1, 3, 5, 7, 9})
        estimates.push_back(fbe_upper_bound(dibom_ansatz(), 2, L, cfg).estimate);
    // 3-point median smoothing absorbs estimator noise
    std::vector<double> smoothed;
    for (std::size_t i = 1; i + 1 < estimates.size(); ++i) {
        std::array<double, 3> w{estimates[i - 1], estimates[i], estimates[i + 1]};
        std::sort(w.begin(), w.end());
        smoothed.push_back(w[1]);
    }
    for (std::size_t i = 1; i < smoothed.size(); ++i) CHECK(smoothed[i] >= smoothed[i - 1] - 1e-9);
}

TEST_CASE("config validation") {
    FBEConfig bad;
    bad.k = 0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    FBEConfig bad2;
    bad2.inner_iters = 0;
    CHECK_THROWS_AS(bad2.validate(), std::invalid_argument);
}
