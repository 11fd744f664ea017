#pragma once

// Synthetic datasets generated by hidden intrinsic unitaries.

#include "dibom/network.hpp"

#include <cstdint>
#include <utility>

namespace dibom {

/// Structure of the hidden unitary V that turns inputs into labels.
enum class IntrinsicKind {
    SingleQubitOnQ2,     // single-qubit unitary on the second qubit
    GCZLayer,            // one generalized-CZ layer
    SingleQubitTimesGCZ, // single-qubit (second qubit) times generalized CZ
    ProductThenGCZ,      // product-rotation layer, then generalized CZ
    DIBoMShape,          // alternating stack with L layers, random parameters
    AlternatingStack,    // same stack, L supplied by the caller
    HaarRandom,          // Haar-random 2^n x 2^n unitary
    TeleportationTask,   // (|psi> x |00>, |psi>) pairs; V is the identity channel
};

struct IntrinsicSpec {
    IntrinsicKind kind = IntrinsicKind::HaarRandom;
    int L = 1;
};

struct CorruptionConfig {
    double ratio = 0.0;
    std::uint64_t seed = 0;
};

struct Provenance {
    IntrinsicSpec spec;
    std::uint64_t seed = 0;
    double corruption_ratio = 0.0;
    bool product_form = false;
    Mat intrinsic_unitary; // hidden from training; kept for diagnostics
};

struct Dataset {
    int n_in = 0;
    int n_out = 0;
    std::vector<std::pair<PureState, PureState>> pairs;
    Provenance provenance;

    std::size_t size() const { return pairs.size(); }
};

/// The hidden unitary for a spec (2^n x 2^n; identity channel for the
/// teleportation task).
Mat intrinsic_unitary(const IntrinsicSpec& spec, int n, std::uint64_t seed);

/// Haar-random inputs (product-form when requested) with labels V|in>.
/// The teleportation task emits 3-qubit inputs |psi> x |00> with 1-qubit
/// labels |psi> regardless of product_form.
Dataset gen_dataset(const IntrinsicSpec& spec, int n, int num_samples, std::uint64_t seed,
                    bool product_form = false);

/// Seeded disjoint partition; throws if either side would be empty.
std::pair<Dataset, Dataset> split(const Dataset& ds, double train_fraction, std::uint64_t seed);

/// Replaces floor(ratio * N) seeded-chosen pairs with independent Haar
/// (input, label) pairs of the same dimensions.
Dataset corrupt(const Dataset& ds, const CorruptionConfig& config);

/// Inputs that are tensor products of independent Haar single-qubit states.
std::vector<PureState> product_form_samples(int n, int num_samples, std::uint64_t seed);

} // namespace dibom
