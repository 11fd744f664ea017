#pragma once

// Dense complex linear algebra for multi-qubit operators.
//
// Index convention used everywhere in this project: qubit 0 is the most
// significant bit of a computational-basis index, i.e. for n qubits the
// basis state |b_0 b_1 ... b_{n-1}> has index sum_q b_q * 2^(n-1-q).
// Kronecker products follow the same convention: kron(A, B) puts A on the
// more significant qubits.

#include "dibom/rng.hpp"

#include <Eigen/Dense>

#include <complex>
#include <span>
#include <vector>

namespace dibom {

using cplx = std::complex<double>;
using Mat = Eigen::MatrixXcd;
using Vec = Eigen::VectorXcd;

inline int dim_of(int n_qubits) { return 1 << n_qubits; }
inline int bit_of(int basis, int qubit, int n) { return (basis >> (n - 1 - qubit)) & 1; }

const Mat& pauli(int which); // 0..3: I, X, Y, Z
Mat identity(int dim);

/// Pure n-qubit state; amplitudes must be unit-norm within 1e-10.
struct PureState {
    int n = 0;
    Vec amps;

    PureState() = default;
    PureState(int n_qubits, Vec amplitudes);

    /// Computational basis state |index>.
    static PureState basis(int n_qubits, int index);
    Mat projector() const; // |psi><psi|
};

/// Density operator; Hermitian within 1e-10, trace 1 within 1e-10.
/// PSD is checked only by validate() (it needs an eigensolve).
struct DensityMatrix {
    int n = 0;
    Mat rho;

    DensityMatrix() = default;
    DensityMatrix(int n_qubits, Mat matrix);
    static DensityMatrix from_pure(const PureState& psi);
    static DensityMatrix maximally_mixed(int n_qubits);

    /// Full invariant check including min eigenvalue >= -1e-9.
    void validate() const;
};

Mat kron(const Mat& a, const Mat& b);

/// Tensor product of a list of square operators, left factor most significant.
Mat kron_all(std::span<const Mat> ops);

/// Reduced state on the qubits in `keep` (output qubit p = keep[p]).
/// Throws on an empty keep set, out-of-range or repeated indices.
DensityMatrix partial_trace(const DensityMatrix& rho, std::span<const int> keep);
Mat partial_trace_mat(const Mat& m, int n, std::span<const int> keep);

/// exp(i * scale * H) via the spectral decomposition of Hermitian H.
Mat hermitian_exp(const Mat& h, double scale);

/// PSD square root; eigenvalues in [-1e-9, 0) are clipped to 0,
/// below -1e-9 is an error.
Mat matrix_sqrt_psd(const Mat& rho);

/// Hermitian logarithm of a unitary: returns H with U = exp(iH),
/// eigenphases in (-pi, pi].
Mat unitary_log(const Mat& u);

PureState haar_state(int n_qubits, Rng& rng);
Mat haar_unitary(int dim, Rng& rng);

/// Uhlmann fidelity [tr sqrt(sqrt(rho) sigma sqrt(rho))]^2, clamped to [0,1].
double fidelity(const DensityMatrix& rho, const DensityMatrix& sigma);

Mat commutator(const Mat& a, const Mat& b);

double hermiticity_defect(const Mat& m); // max |m - m^dagger|
double unitarity_defect(const Mat& u);   // max |u^dagger u - I|
double max_abs_diff(const Mat& a, const Mat& b);

/// Embeds an operator acting on `qubits` (in the given order) into the
/// n-qubit space, identity elsewhere.
Mat embed(const Mat& op, std::span<const int> qubits, int n);

/// n-qubit Pauli word; `word` is a base-4 index, digit for qubit 0 most
/// significant. Built entry-wise (each word has one nonzero per row).
Mat pauli_word(int n, long word);

/// Coefficients c_w = tr(H P_w) / 2^n of a Hermitian operator in the
/// Pauli-word basis; real parts returned (imaginary parts are round-off).
std::vector<double> pauli_coefficients(const Mat& h, int n);

/// sum_w coeffs[w] * P_w.
Mat from_pauli_coefficients(std::span<const double> coeffs, int n);

} // namespace dibom
