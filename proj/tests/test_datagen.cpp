#include "dibom/datagen.hpp"
#include "dibom/serialize.hpp"

#include <doctest.h>

#include <cmath>
#include <set>

using namespace dibom;

TEST_CASE("gen_dataset labels follow the hidden unitary") {
    for (IntrinsicKind kind : {IntrinsicKind::SingleQubitOnQ2, IntrinsicKind::GCZLayer,
                               IntrinsicKind::SingleQubitTimesGCZ, IntrinsicKind::ProductThenGCZ,
                               IntrinsicKind::HaarRandom}) {
        Dataset ds = gen_dataset({kind, 1}, 2, 8, 42);
        CHECK(ds.size() == 8);
        for (const auto& [in, label] : ds.pairs) {
            CHECK(std::abs(in.amps.norm() - 1.0) < 1e-12);
            const Vec expected = ds.provenance.intrinsic_unitary * in.amps;
            CHECK((expected - label.amps).cwiseAbs().maxCoeff() < 1e-12);
        }
    }
    // AlternatingStack intrinsic honors its layer count
    Dataset deep = gen_dataset({IntrinsicKind::AlternatingStack, 4}, 2, 3, 1);
    CHECK(unitarity_defect(deep.provenance.intrinsic_unitary) < 1e-10);

    // identical seeds give identical datasets
    Dataset a = gen_dataset({IntrinsicKind::HaarRandom, 1}, 2, 5, 7);
    Dataset b = gen_dataset({IntrinsicKind::HaarRandom, 1}, 2, 5, 7);
    for (std::size_t i = 0; i < a.size(); ++i)
        CHECK((a.pairs[i].first.amps - b.pairs[i].first.amps).norm() == 0.0);

    CHECK_THROWS_AS(gen_dataset({IntrinsicKind::HaarRandom, 1}, 2, 0, 0), std::invalid_argument);
    CHECK_THROWS_AS(gen_dataset({IntrinsicKind::SingleQubitOnQ2, 1}, 1, 4, 0), std::invalid_argument);
}

TEST_CASE("teleportation task dataset") {
    Dataset ds = gen_dataset({IntrinsicKind::TeleportationTask, 1}, 1, 6, 11);
    CHECK(ds.n_in == 3);
    CHECK(ds.n_out == 1);
    for (const auto& [in, label] : ds.pairs) {
        // input must be exactly |psi> x |00>
        Vec zz = Vec::Zero(4);
        zz(0) = 1.0;
        Vec expected = Vec::Zero(8);
        expected(0) = label.amps(0);
        expected(4) = label.amps(1);
        CHECK((in.amps - expected).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("split") {
    Dataset ds = gen_dataset({IntrinsicKind::HaarRandom, 1}, 2, 20, 7);
    auto [train, test] = split(ds, 0.5, 11);
    CHECK(train.size() == 10);
    CHECK(test.size() == 10);

    // union equals the original multiset, intersection empty
    auto key = [](const PureState& s) {
        return std::make_pair(std::real(s.amps(0)), std::imag(s.amps(1)));
    };
    std::set<std::pair<double, double>> orig, seen;
    for (const auto& p : ds.pairs) orig.insert(key(p.first));
    for (const auto& p : train.pairs) {
        CHECK(!seen.count(key(p.first)));
        seen.insert(key(p.first));
    }
    for (const auto& p : test.pairs) {
        CHECK(!seen.count(key(p.first)));
        seen.insert(key(p.first));
    }
    CHECK(seen == orig);

    // deterministic partition
    auto [train2, test2] = split(ds, 0.5, 11);
    for (std::size_t i = 0; i < train.size(); ++i)
        CHECK((train.pairs[i].first.amps - train2.pairs[i].first.amps).norm() == 0.0);

    CHECK_THROWS_AS(split(ds, 0.01, 1), std::invalid_argument); // empty train side
    CHECK_THROWS_AS(split(ds, 1.0, 1), std::invalid_argument);
}

TEST_CASE("corrupt") {
    Dataset ds = gen_dataset({IntrinsicKind::HaarRandom, 1}, 2, 10, 3);

    Dataset same = corrupt(ds, {0.0, 9});
    for (std::size_t i = 0; i < ds.size(); ++i)
        CHECK((same.pairs[i].first.amps - ds.pairs[i].first.amps).norm() == 0.0);

    Dataset all = corrupt(ds, {1.0, 9});
    int changed_all = 0;
    for (std::size_t i = 0; i < ds.size(); ++i)
        if ((all.pairs[i].first.amps - ds.pairs[i].first.amps).norm() > 1e-12) ++changed_all;
    CHECK(changed_all == 10);

    // floor(0.3 * 10) = 3 replacements, exactly
    Dataset some = corrupt(ds, {0.3, 9});
    int changed = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const bool in_changed = (some.pairs[i].first.amps - ds.pairs[i].first.amps).norm() > 1e-12;
        const bool label_changed = (some.pairs[i].second.amps - ds.pairs[i].second.amps).norm() > 1e-12;
        CHECK(in_changed == label_changed);
        if (in_changed) ++changed;
        CHECK(some.pairs[i].first.n == ds.n_in);
        CHECK(some.pairs[i].second.n == ds.n_out);
    }
    CHECK(changed == 3);
    CHECK(some.size() == ds.size());
    CHECK(some.provenance.corruption_ratio == 0.3);

    // fake labels are independent of fake inputs (not V * input)
    bool any_decorrelated = false;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        if ((some.pairs[i].first.amps - ds.pairs[i].first.amps).norm() <= 1e-12) continue;
        const Vec would_be = ds.provenance.intrinsic_unitary * some.pairs[i].first.amps;
        if ((would_be - some.pairs[i].second.amps).cwiseAbs().maxCoeff() > 1e-6) any_decorrelated = true;
    }
    CHECK(any_decorrelated);
}

TEST_CASE("product form samples") {
    // n = 1 is an ordinary Haar qubit
    auto single = product_form_samples(1, 5, 13);
    for (const PureState& s : single) CHECK(std::abs(s.amps.norm() - 1.0) < 1e-12);

    // every single-qubit marginal is pure, so every bipartition has
    // Schmidt rank 1
    auto states = product_form_samples(4, 10, 13);
    for (const PureState& s : states) {
        CHECK(std::abs(s.amps.norm() - 1.0) < 1e-12);
        const Mat proj = s.projector();
        for (int q = 0; q < 4; ++q) {
            const int keep[1] = {q};
            const Mat marginal = partial_trace_mat(proj, 4, keep);
            const double purity = std::real((marginal * marginal).trace());
            CHECK(std::abs(purity - 1.0) < 1e-10);
        }
    }

    // product-form datasets keep the label rule
    Dataset ds = gen_dataset({IntrinsicKind::ProductThenGCZ, 1}, 3, 6, 5, true);
    for (const auto& [in, label] : ds.pairs) {
        const Vec expected = ds.provenance.intrinsic_unitary * in.amps;
        CHECK((expected - label.amps).cwiseAbs().maxCoeff() < 1e-12);
    }
    CHECK(ds.provenance.product_form);
}
