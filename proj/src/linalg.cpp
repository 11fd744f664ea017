#include "dibom/linalg.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dibom {

namespace {

constexpr double kNormTol = 1e-10;
constexpr double kHermTol = 1e-10;
constexpr double kTraceTol = 1e-10;
constexpr double kPsdTol = 1e-9;

void require(bool ok, const char* msg) {
    if (!ok) throw std::invalid_argument(msg);
}

} // namespace

const Mat& pauli(int which) {
    static const Mat p0 = [] { Mat m(2, 2); m << 1, 0, 0, 1; return m; }();
    static const Mat p1 = [] { Mat m(2, 2); m << 0, 1, 1, 0; return m; }();
    static const Mat p2 = [] { Mat m(2, 2); m << 0, cplx(0, -1), cplx(0, 1), 0; return m; }();
    static const Mat p3 = [] { Mat m(2, 2); m << 1, 0, 0, -1; return m; }();
    switch (which) {
        case 0: return p0;
        case 1: return p1;
        case 2: return p2;
        case 3: return p3;
        default: throw std::invalid_argument("pauli index must be 0..3");
    }
}

Mat identity(int dim) { return Mat::Identity(dim, dim); }

PureState::PureState(int n_qubits, Vec amplitudes) : n(n_qubits), amps(std::move(amplitudes)) {
    require(n >= 1, "PureState: need at least one qubit");
    require(amps.size() == dim_of(n), "PureState: amplitude vector has wrong length");
    require(amps.allFinite(), "PureState: non-finite amplitude");
    require(std::abs(amps.squaredNorm() - 1.0) <= kNormTol, "PureState: not normalized");
}

PureState PureState::basis(int n_qubits, int index) {
    Vec v = Vec::Zero(dim_of(n_qubits));
    v(index) = 1.0;
    return PureState(n_qubits, std::move(v));
}

Mat PureState::projector() const { return amps * amps.adjoint(); }

DensityMatrix::DensityMatrix(int n_qubits, Mat matrix) : n(n_qubits), rho(std::move(matrix)) {
    require(n >= 1, "DensityMatrix: need at least one qubit");
    const int d = dim_of(n);
    require(rho.rows() == d && rho.cols() == d, "DensityMatrix: wrong dimensions");
    require(rho.allFinite(), "DensityMatrix: non-finite entry");
    require(hermiticity_defect(rho) <= kHermTol, "DensityMatrix: not Hermitian");
    require(std::abs(rho.trace() - cplx(1.0)) <= kTraceTol, "DensityMatrix: trace != 1");
}

DensityMatrix DensityMatrix::from_pure(const PureState& psi) {
    return DensityMatrix(psi.n, psi.projector());
}

DensityMatrix DensityMatrix::maximally_mixed(int n_qubits) {
    const int d = dim_of(n_qubits);
    return DensityMatrix(n_qubits, Mat::Identity(d, d) / static_cast<double>(d));
}

void DensityMatrix::validate() const {
    Eigen::SelfAdjointEigenSolver<Mat> es(rho, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -kPsdTol)
        throw std::invalid_argument("DensityMatrix: negative eigenvalue beyond tolerance");
}

Mat kron(const Mat& a, const Mat& b) {
    Mat out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

Mat kron_all(std::span<const Mat> ops) {
    Mat out = Mat::Identity(1, 1);
    for (const Mat& op : ops) out = kron(out, op);
    return out;
}

Mat partial_trace_mat(const Mat& m, int n, std::span<const int> keep) {
    require(!keep.empty(), "partial_trace: empty keep set");
    std::vector<bool> seen(n, false);
    for (int q : keep) {
        require(q >= 0 && q < n, "partial_trace: qubit index out of range");
        require(!seen[q], "partial_trace: repeated qubit index");
        seen[q] = true;
    }
    std::vector<int> traced;
    for (int q = 0; q < n; ++q)
        if (!seen[q]) traced.push_back(q);

    const int k = static_cast<int>(keep.size());
    const int t = static_cast<int>(traced.size());
    const int dk = 1 << k;
    const int dt = 1 << t;

    // basis index with keep-bits a and traced-bits s
    auto compose = [&](int a, int s) {
        int idx = 0;
        for (int p = 0; p < k; ++p)
            if ((a >> (k - 1 - p)) & 1) idx |= 1 << (n - 1 - keep[p]);
        for (int p = 0; p < t; ++p)
            if ((s >> (t - 1 - p)) & 1) idx |= 1 << (n - 1 - traced[p]);
        return idx;
    };

    Mat out = Mat::Zero(dk, dk);
    for (int a = 0; a < dk; ++a)
        for (int b = 0; b < dk; ++b) {
            cplx acc = 0.0;
            for (int s = 0; s < dt; ++s) acc += m(compose(a, s), compose(b, s));
            out(a, b) = acc;
        }
    return out;
}

DensityMatrix partial_trace(const DensityMatrix& rho, std::span<const int> keep) {
    Mat out = partial_trace_mat(rho.rho, rho.n, keep);
    return DensityMatrix(static_cast<int>(keep.size()), std::move(out));
}

Mat hermitian_exp(const Mat& h, double scale) {
    require(h.rows() == h.cols(), "hermitian_exp: matrix not square");
    require(hermiticity_defect(h) <= kHermTol * std::max(1.0, h.cwiseAbs().maxCoeff()),
            "hermitian_exp: input not Hermitian");
    Eigen::SelfAdjointEigenSolver<Mat> es(h);
    const auto& w = es.eigenvalues();
    Vec phases(w.size());
    for (Eigen::Index i = 0; i < w.size(); ++i)
        phases(i) = std::exp(cplx(0.0, scale * w(i)));
    return es.eigenvectors() * phases.asDiagonal() * es.eigenvectors().adjoint();
}

Mat matrix_sqrt_psd(const Mat& rho) {
    require(rho.rows() == rho.cols(), "matrix_sqrt_psd: matrix not square");
    require(hermiticity_defect(rho) <= kHermTol * std::max(1.0, rho.cwiseAbs().maxCoeff()),
            "matrix_sqrt_psd: input not Hermitian");
    Eigen::SelfAdjointEigenSolver<Mat> es(rho);
    Eigen::VectorXd w = es.eigenvalues();
    // eigenvalues at round-off scale are exact zeros of a rank-deficient
    // input; clipping them keeps sqrt noise out of the null space
    const double clip = std::max(w.maxCoeff(), 0.0) * 1e-13;
    for (Eigen::Index i = 0; i < w.size(); ++i) {
        if (w(i) < -kPsdTol) throw std::invalid_argument("matrix_sqrt_psd: negative eigenvalue beyond tolerance");
        w(i) = w(i) <= clip ? 0.0 : std::sqrt(w(i));
    }
    return es.eigenvectors() * w.asDiagonal().toDenseMatrix().cast<cplx>() * es.eigenvectors().adjoint();
}

Mat unitary_log(const Mat& u) {
    require(u.rows() == u.cols(), "unitary_log: matrix not square");
    require(unitarity_defect(u) <= 1e-8, "unitary_log: input not unitary");
    // U is normal, so its Schur form is diagonal with an orthonormal basis.
    Eigen::ComplexSchur<Mat> schur(u);
    const Mat& q = schur.matrixU();
    Eigen::VectorXd phases(u.rows());
    for (Eigen::Index i = 0; i < u.rows(); ++i) phases(i) = std::arg(schur.matrixT()(i, i));
    return q * phases.asDiagonal().toDenseMatrix().cast<cplx>() * q.adjoint();
}

PureState haar_state(int n_qubits, Rng& rng) {
    require(n_qubits >= 1, "haar_state: need at least one qubit");
    Vec v(dim_of(n_qubits));
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = cplx(rng.normal(), rng.normal());
    v /= v.norm();
    return PureState(n_qubits, std::move(v));
}

Mat haar_unitary(int dim, Rng& rng) {
    require(dim >= 2, "haar_unitary: dimension must be >= 2");
    Mat g(dim, dim);
    for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j) g(i, j) = cplx(rng.normal(), rng.normal());
    Eigen::HouseholderQR<Mat> qr(g);
    Mat q = qr.householderQ();
    Mat r = qr.matrixQR().triangularView<Eigen::Upper>();
    // fix the phase gauge so the distribution is Haar rather than QR-dependent
    for (int i = 0; i < dim; ++i) {
        const cplx d = r(i, i);
        q.col(i) *= (std::abs(d) > 0.0) ? d / std::abs(d) : cplx(1.0);
    }
    return q;
}

double fidelity(const DensityMatrix& rho, const DensityMatrix& sigma) {
    require(rho.n == sigma.n, "fidelity: dimension mismatch");
    // when either state is pure the fidelity is the exact overlap tr(rho sigma)
    const double purity_rho = std::real((rho.rho * rho.rho).trace());
    const double purity_sigma = std::real((sigma.rho * sigma.rho).trace());
    if (purity_rho > 1.0 - 1e-12 || purity_sigma > 1.0 - 1e-12)
        return std::clamp(std::real((rho.rho * sigma.rho).trace()), 0.0, 1.0);
    const Mat s = matrix_sqrt_psd(rho.rho);
    const Mat inner = matrix_sqrt_psd((s * sigma.rho * s).eval());
    const double f = std::real(inner.trace());
    return std::clamp(f * f, 0.0, 1.0);
}

Mat commutator(const Mat& a, const Mat& b) {
    require(a.rows() == a.cols() && b.rows() == b.cols(), "commutator: matrices not square");
    require(a.rows() == b.rows(), "commutator: dimension mismatch");
    return a * b - b * a;
}

double hermiticity_defect(const Mat& m) {
    return (m - m.adjoint().eval()).cwiseAbs().maxCoeff();
}

double unitarity_defect(const Mat& u) {
    return (u.adjoint() * u - Mat::Identity(u.cols(), u.cols())).cwiseAbs().maxCoeff();
}

double max_abs_diff(const Mat& a, const Mat& b) { return (a - b).cwiseAbs().maxCoeff(); }

Mat embed(const Mat& op, std::span<const int> qubits, int n) {
    const int k = static_cast<int>(qubits.size());
    require(op.rows() == (1 << k) && op.cols() == (1 << k), "embed: operator size mismatch");
    std::vector<bool> seen(n, false);
    for (int q : qubits) {
        require(q >= 0 && q < n, "embed: qubit index out of range");
        require(!seen[q], "embed: repeated qubit index");
        seen[q] = true;
    }
    std::vector<int> rest;
    for (int q = 0; q < n; ++q)
        if (!seen[q]) rest.push_back(q);
    const int t = static_cast<int>(rest.size());
    const int dk = 1 << k;
    const int dt = 1 << t;

    auto compose = [&](int a, int s) {
        int idx = 0;
        for (int p = 0; p < k; ++p)
            if ((a >> (k - 1 - p)) & 1) idx |= 1 << (n - 1 - qubits[p]);
        for (int p = 0; p < t; ++p)
            if ((s >> (t - 1 - p)) & 1) idx |= 1 << (n - 1 - rest[p]);
        return idx;
    };

    Mat out = Mat::Zero(1 << n, 1 << n);
    for (int a = 0; a < dk; ++a)
        for (int b = 0; b < dk; ++b) {
            const cplx v = op(a, b);
            if (v == cplx(0.0)) continue;
            for (int s = 0; s < dt; ++s) out(compose(a, s), compose(b, s)) = v;
        }
    return out;
}

Mat pauli_word(int n, long word) {
    require(n >= 1 && word >= 0 && word < (1L << (2 * n)), "pauli_word: index out of range");
    const int d = dim_of(n);
    // per-qubit Pauli digits, qubit 0 most significant
    std::vector<int> digit(n);
    long w = word;
    for (int q = n - 1; q >= 0; --q) {
        digit[q] = static_cast<int>(w & 3);
        w >>= 2;
    }
    Mat out = Mat::Zero(d, d);
    for (int row = 0; row < d; ++row) {
        int col = 0;
        cplx factor = 1.0;
        for (int q = 0; q < n; ++q) {
            const int b = bit_of(row, q, n);
            int cb = b;
            switch (digit[q]) {
                case 0: break;
                case 1: cb = 1 - b; break;
                case 2: cb = 1 - b; factor *= (b == 0) ? cplx(0, -1) : cplx(0, 1); break;
                case 3: if (b == 1) factor = -factor; break;
            }
            if (cb) col |= 1 << (n - 1 - q);
        }
        out(row, col) = factor;
    }
    return out;
}

std::vector<double> pauli_coefficients(const Mat& h, int n) {
    const int d = dim_of(n);
    require(h.rows() == d && h.cols() == d, "pauli_coefficients: size mismatch");
    const long words = 1L << (2 * n);
    std::vector<double> coeffs(words);
    for (long w = 0; w < words; ++w) {
        const Mat p = pauli_word(n, w);
        coeffs[w] = std::real((h * p).trace()) / static_cast<double>(d);
    }
    return coeffs;
}

Mat from_pauli_coefficients(std::span<const double> coeffs, int n) {
    require(static_cast<long>(coeffs.size()) == (1L << (2 * n)),
            "from_pauli_coefficients: wrong coefficient count");
    const int d = dim_of(n);
    Mat out = Mat::Zero(d, d);
    for (long w = 0; w < static_cast<long>(coeffs.size()); ++w) {
        if (coeffs[w] == 0.0) continue;
        out += coeffs[w] * pauli_word(n, w);
    }
    return out;
}

} // namespace dibom
