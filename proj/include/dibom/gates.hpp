#pragma once

// Parametrized layer types and their unitaries.

#include "dibom/linalg.hpp"

#include <array>
#include <utility>
#include <variant>
#include <vector>

namespace dibom {

/// exp(i sum_a alpha[a] sigma_a) on one qubit, identity elsewhere.
/// The sigma_0 (global phase) generator is omitted: density-matrix
/// conjugation is phase-invariant, so three parameters suffice.
struct SingleQubitRotation {
    int target = 0;
    std::array<double, 3> alpha{0.0, 0.0, 0.0};
};

/// Tensor product of per-qubit rotations, one alpha triple per qubit.
struct ProductRotationLayer {
    std::vector<std::array<double, 3>> alphas;
};

/// exp(-i pi sum_{j<k} beta_jk |11><11|_jk); beta = 1 is a CZ on (j,k),
/// beta = 0 the identity. Betas are unconstrained reals, stored in
/// lexicographic pair order (0,1), (0,2), ..., (n-2,n-1).
struct GeneralizedCZLayer {
    std::vector<double> betas;
};

/// Parameter-free CZ gates on a fixed pair set.
struct FixedCZLayer {
    enum class Connectivity { Linear, AllToAll };
    Connectivity connectivity = Connectivity::AllToAll;
    std::vector<std::pair<int, int>> pairs;

    static FixedCZLayer make(int n, Connectivity c = Connectivity::AllToAll);
};

/// Hadamard on every qubit.
struct HadamardLayer {};

/// exp(i sum_w coeffs[w] P_w) over all 4^n Pauli words.
struct GeneralUnitaryLayer {
    std::vector<double> coeffs;
};

using Layer = std::variant<SingleQubitRotation, ProductRotationLayer, GeneralizedCZLayer,
                           FixedCZLayer, HadamardLayer, GeneralUnitaryLayer>;

/// Flat index of the unordered pair (j,k), j<k, among n qubits.
int pair_index(int j, int k, int n);
int pair_count(int n);

/// The layer's 2^n x 2^n unitary. Throws on a parameter-shape mismatch.
Mat layer_unitary(const Layer& layer, int n);

/// U rho U^dagger.
DensityMatrix apply(const Layer& layer, const DensityMatrix& rho);

/// Number of trainable parameters in the layer.
long layer_param_count(const Layer& layer, int n);
bool layer_is_trainable(const Layer& layer);

void layer_get_params(const Layer& layer, std::vector<double>& out);
/// Reads layer_param_count values starting at `offset`.
void layer_set_params(Layer& layer, std::span<const double> params, std::size_t offset);

/// 2x2 rotation unitary exp(i sum alpha_a sigma_a).
Mat rotation_unitary(const std::array<double, 3>& alpha);

/// Inverse of rotation_unitary for special-unitary U: returns alpha with
/// exp(i sum alpha_a sigma_a) = U. Requires |det U - 1| <= 1e-8.
std::array<double, 3> su2_log(const Mat& u);

} // namespace dibom
