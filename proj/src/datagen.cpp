#include "dibom/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace dibom {

namespace {

void require(bool ok, const char* msg) {
    if (!ok) throw std::invalid_argument(msg);
}

std::array<double, 3> random_alpha(Rng& rng) {
    return {rng.uniform(-M_PI, M_PI), rng.uniform(-M_PI, M_PI), rng.uniform(-M_PI, M_PI)};
}

GeneralizedCZLayer random_gcz(int n, Rng& rng) {
    GeneralizedCZLayer layer;
    layer.betas.resize(pair_count(n));
    for (double& b : layer.betas) b = rng.uniform(0.0, 1.0);
    return layer;
}

PureState product_state(int n, Rng& rng) {
    Vec v = Vec::Ones(1);
    for (int q = 0; q < n; ++q) {
        Vec single(2);
        single << cplx(rng.normal(), rng.normal()), cplx(rng.normal(), rng.normal());
        single /= single.norm();
        Vec next(v.size() * 2);
        for (Eigen::Index i = 0; i < v.size(); ++i) {
            next(2 * i) = v(i) * single(0);
            next(2 * i + 1) = v(i) * single(1);
        }
        v = std::move(next);
    }
    return PureState(n, std::move(v));
}

} // namespace

Mat intrinsic_unitary(const IntrinsicSpec& spec, int n, std::uint64_t seed) {
    Rng rng = Rng(seed).derive(0x76);
    switch (spec.kind) {
        case IntrinsicKind::SingleQubitOnQ2: {
            require(n >= 2, "intrinsic_unitary: SingleQubitOnQ2 needs n >= 2");
            const int qs[1] = {1};
            return embed(rotation_unitary(random_alpha(rng)), qs, n);
        }
        case IntrinsicKind::GCZLayer:
            return layer_unitary(Layer{random_gcz(n, rng)}, n);
        case IntrinsicKind::SingleQubitTimesGCZ: {
            require(n >= 2, "intrinsic_unitary: SingleQubitTimesGCZ needs n >= 2");
            const Mat gcz = layer_unitary(Layer{random_gcz(n, rng)}, n);
            const int qs[1] = {1};
            const Mat sq = embed(rotation_unitary(random_alpha(rng)), qs, n);
            return sq * gcz; // generalized CZ acts first
        }
        case IntrinsicKind::ProductThenGCZ: {
            ProductRotationLayer prod;
            prod.alphas.resize(n);
            for (auto& a : prod.alphas) a = random_alpha(rng);
            const Mat p = layer_unitary(Layer{prod}, n);
            const Mat gcz = layer_unitary(Layer{random_gcz(n, rng)}, n);
            return gcz * p; // product layer acts first
        }
        case IntrinsicKind::DIBoMShape:
        case IntrinsicKind::AlternatingStack: {
            require(spec.L >= 1, "intrinsic_unitary: need L >= 1");
            return circuit_unitary(build_dibom(n, spec.L, derive_seed(seed, 0x5a)));
        }
        case IntrinsicKind::HaarRandom:
            return haar_unitary(dim_of(n), rng);
        case IntrinsicKind::TeleportationTask:
            return Mat::Identity(2, 2);
    }
    throw std::invalid_argument("intrinsic_unitary: unknown kind");
}

Dataset gen_dataset(const IntrinsicSpec& spec, int n, int num_samples, std::uint64_t seed,
                    bool product_form) {
    require(num_samples >= 1, "gen_dataset: need at least one sample");
    Dataset ds;
    ds.provenance.spec = spec;
    ds.provenance.seed = seed;
    ds.provenance.product_form = product_form;

    Rng state_rng = Rng(seed).derive(0x1d);
    if (spec.kind == IntrinsicKind::TeleportationTask) {
        require(n == 1 || n == 3, "gen_dataset: teleportation task carries one payload qubit");
        ds.n_in = 3;
        ds.n_out = 1;
        ds.provenance.intrinsic_unitary = intrinsic_unitary(spec, 1, seed);
        for (int i = 0; i < num_samples; ++i) {
            PureState psi = haar_state(1, state_rng);
            Vec in = Vec::Zero(8); // |psi> x |00>: qubit 0 is the most significant
            in(0) = psi.amps(0);
            in(4) = psi.amps(1);
            ds.pairs.emplace_back(PureState(3, std::move(in)), std::move(psi));
        }
        return ds;
    }

    require(n >= 1, "gen_dataset: need at least one qubit");
    ds.n_in = n;
    ds.n_out = n;
    const Mat v = intrinsic_unitary(spec, n, seed);
    ds.provenance.intrinsic_unitary = v;
    for (int i = 0; i < num_samples; ++i) {
        PureState in = product_form ? product_state(n, state_rng) : haar_state(n, state_rng);
        Vec label = v * in.amps;
        ds.pairs.emplace_back(std::move(in), PureState(n, std::move(label)));
    }
    return ds;
}

std::pair<Dataset, Dataset> split(const Dataset& ds, double train_fraction, std::uint64_t seed) {
    require(train_fraction > 0.0 && train_fraction < 1.0, "split: fraction must be in (0,1)");
    const std::size_t n = ds.size();
    const std::size_t n_train = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(n)));
    require(n_train >= 1 && n_train < n, "split: degenerate split");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng = Rng(seed).derive(0x3b);
    for (std::size_t i = n; i > 1; --i)
        std::swap(order[i - 1], order[rng.uniform_index(i)]);

    Dataset train = ds, test = ds;
    train.pairs.clear();
    test.pairs.clear();
    for (std::size_t i = 0; i < n; ++i)
        (i < n_train ? train : test).pairs.push_back(ds.pairs[order[i]]);
    return {std::move(train), std::move(test)};
}

Dataset corrupt(const Dataset& ds, const CorruptionConfig& config) {
    require(config.ratio >= 0.0 && config.ratio <= 1.0, "corrupt: ratio must be in [0,1]");
    Dataset out = ds;
    out.provenance.corruption_ratio = config.ratio;
    const std::size_t n = ds.size();
    const std::size_t n_fake = static_cast<std::size_t>(std::floor(config.ratio * static_cast<double>(n)));
    if (n_fake == 0) return out;

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng = Rng(config.seed).derive(0xc0);
    for (std::size_t i = n; i > 1; --i)
        std::swap(order[i - 1], order[rng.uniform_index(i)]);

    // fake input and fake label are drawn independently
    for (std::size_t i = 0; i < n_fake; ++i) {
        const std::size_t idx = order[i];
        out.pairs[idx].first = haar_state(ds.n_in, rng);
        out.pairs[idx].second = haar_state(ds.n_out, rng);
    }
    return out;
}

std::vector<PureState> product_form_samples(int n, int num_samples, std::uint64_t seed) {
    require(n >= 1 && num_samples >= 1, "product_form_samples: bad arguments");
    Rng rng = Rng(seed).derive(0x1d);
    std::vector<PureState> out;
    out.reserve(num_samples);
    for (int i = 0; i < num_samples; ++i) out.push_back(product_state(n, rng));
    return out;
}

} // namespace dibom
