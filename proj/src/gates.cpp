#include "dibom/gates.hpp"

#include <cmath>
#include <stdexcept>

namespace dibom {

namespace {

void require(bool ok, const char* msg) {
    if (!ok) throw std::invalid_argument(msg);
}

Mat hadamard_2x2() {
    Mat h(2, 2);
    const double s = 1.0 / std::sqrt(2.0);
    h << s, s, s, -s;
    return h;
}

} // namespace

int pair_count(int n) { return n * (n - 1) / 2; }

int pair_index(int j, int k, int n) {
    require(0 <= j && j < k && k < n, "pair_index: need 0 <= j < k < n");
    return j * n - j * (j + 1) / 2 + (k - j - 1);
}

FixedCZLayer FixedCZLayer::make(int n, Connectivity c) {
    FixedCZLayer layer;
    layer.connectivity = c;
    if (c == Connectivity::Linear) {
        for (int q = 0; q + 1 < n; ++q) layer.pairs.emplace_back(q, q + 1);
    } else {
        for (int j = 0; j < n; ++j)
            for (int k = j + 1; k < n; ++k) layer.pairs.emplace_back(j, k);
    }
    return layer;
}

Mat rotation_unitary(const std::array<double, 3>& alpha) {
    const double theta = std::sqrt(alpha[0] * alpha[0] + alpha[1] * alpha[1] + alpha[2] * alpha[2]);
    if (theta == 0.0) return Mat::Identity(2, 2);
    Mat axis = Mat::Zero(2, 2);
    for (int a = 0; a < 3; ++a) axis += (alpha[a] / theta) * pauli(a + 1);
    return std::cos(theta) * Mat::Identity(2, 2) + cplx(0, 1) * std::sin(theta) * axis;
}

std::array<double, 3> su2_log(const Mat& u) {
    require(u.rows() == 2 && u.cols() == 2, "su2_log: need a 2x2 matrix");
    require(unitarity_defect(u) <= 1e-8, "su2_log: input not unitary");
    require(std::abs(u.determinant() - cplx(1.0)) <= 1e-8, "su2_log: input not special-unitary");
    const double c = std::real(u.trace()) / 2.0; // cos(theta)
    std::array<double, 3> s_vec{};               // sin(theta) * axis
    for (int a = 0; a < 3; ++a)
        s_vec[a] = std::real((u * pauli(a + 1)).trace() / cplx(0.0, 2.0));
    const double s_norm =
        std::sqrt(s_vec[0] * s_vec[0] + s_vec[1] * s_vec[1] + s_vec[2] * s_vec[2]);
    if (s_norm < 1e-15) {
        // U = +-I; pick the z axis for the -I branch
        if (c > 0.0) return {0.0, 0.0, 0.0};
        return {0.0, 0.0, M_PI};
    }
    // atan2 keeps full precision near theta = pi where acos degrades
    const double theta = std::atan2(s_norm, c);
    return {theta * s_vec[0] / s_norm, theta * s_vec[1] / s_norm, theta * s_vec[2] / s_norm};
}

namespace {

Mat unitary_single(const SingleQubitRotation& g, int n) {
    require(g.target >= 0 && g.target < n, "SingleQubitRotation: target out of range");
    const int qubits[1] = {g.target};
    return embed(rotation_unitary(g.alpha), qubits, n);
}

Mat unitary_product(const ProductRotationLayer& g, int n) {
    require(static_cast<int>(g.alphas.size()) == n, "ProductRotationLayer: need one alpha triple per qubit");
    Mat out = Mat::Identity(1, 1);
    for (int q = 0; q < n; ++q) out = kron(out, rotation_unitary(g.alphas[q]));
    return out;
}

Vec gcz_diagonal(const GeneralizedCZLayer& g, int n) {
    require(static_cast<int>(g.betas.size()) == pair_count(n), "GeneralizedCZLayer: wrong beta count");
    for (double b : g.betas) require(std::isfinite(b), "GeneralizedCZLayer: non-finite beta");
    const int d = dim_of(n);
    Vec diag(d);
    for (int b = 0; b < d; ++b) {
        double phase = 0.0;
        for (int j = 0; j < n; ++j) {
            if (!bit_of(b, j, n)) continue;
            for (int k = j + 1; k < n; ++k)
                if (bit_of(b, k, n)) phase += g.betas[pair_index(j, k, n)];
        }
        diag(b) = std::exp(cplx(0.0, -M_PI * phase));
    }
    return diag;
}

Mat unitary_gcz(const GeneralizedCZLayer& g, int n) {
    return gcz_diagonal(g, n).asDiagonal();
}

Mat unitary_fixed_cz(const FixedCZLayer& g, int n) {
    const int d = dim_of(n);
    Vec diag = Vec::Ones(d);
    for (auto [j, k] : g.pairs) {
        require(0 <= j && j < k && k < n, "FixedCZLayer: invalid pair");
        for (int b = 0; b < d; ++b)
            if (bit_of(b, j, n) && bit_of(b, k, n)) diag(b) = -diag(b);
    }
    return diag.asDiagonal();
}

Mat unitary_hadamard(int n) {
    Mat out = Mat::Identity(1, 1);
    const Mat h = hadamard_2x2();
    for (int q = 0; q < n; ++q) out = kron(out, h);
    return out;
}

Mat unitary_general(const GeneralUnitaryLayer& g, int n) {
    require(static_cast<long>(g.coeffs.size()) == (1L << (2 * n)),
            "GeneralUnitaryLayer: need 4^n coefficients");
    for (double c : g.coeffs) require(std::isfinite(c), "GeneralUnitaryLayer: non-finite coefficient");
    return hermitian_exp(from_pauli_coefficients(g.coeffs, n), 1.0);
}

} // namespace

Mat layer_unitary(const Layer& layer, int n) {
    return std::visit(
        [n](const auto& g) -> Mat {
            using T = std::decay_t<decltype(g)>;
            if constexpr (std::is_same_v<T, SingleQubitRotation>) return unitary_single(g, n);
            else if constexpr (std::is_same_v<T, ProductRotationLayer>) return unitary_product(g, n);
            else if constexpr (std::is_same_v<T, GeneralizedCZLayer>) return unitary_gcz(g, n);
            else if constexpr (std::is_same_v<T, FixedCZLayer>) return unitary_fixed_cz(g, n);
            else if constexpr (std::is_same_v<T, HadamardLayer>) return unitary_hadamard(n);
            else return unitary_general(g, n);
        },
        layer);
}

DensityMatrix apply(const Layer& layer, const DensityMatrix& rho) {
    const Mat u = layer_unitary(layer, rho.n);
    return DensityMatrix(rho.n, u * rho.rho * u.adjoint());
}

long layer_param_count(const Layer& layer, int n) {
    return std::visit(
        [n](const auto& g) -> long {
            using T = std::decay_t<decltype(g)>;
            if constexpr (std::is_same_v<T, SingleQubitRotation>) return 3;
            else if constexpr (std::is_same_v<T, ProductRotationLayer>) return 3L * n;
            else if constexpr (std::is_same_v<T, GeneralizedCZLayer>) return pair_count(n);
            else if constexpr (std::is_same_v<T, GeneralUnitaryLayer>) return 1L << (2 * n);
            else return 0;
        },
        layer);
}

bool layer_is_trainable(const Layer& layer) {
    return !std::holds_alternative<FixedCZLayer>(layer) && !std::holds_alternative<HadamardLayer>(layer);
}

void layer_get_params(const Layer& layer, std::vector<double>& out) {
    std::visit(
        [&out](const auto& g) {
            using T = std::decay_t<decltype(g)>;
            if constexpr (std::is_same_v<T, SingleQubitRotation>) {
                out.insert(out.end(), g.alpha.begin(), g.alpha.end());
            } else if constexpr (std::is_same_v<T, ProductRotationLayer>) {
                for (const auto& a : g.alphas) out.insert(out.end(), a.begin(), a.end());
            } else if constexpr (std::is_same_v<T, GeneralizedCZLayer>) {
                out.insert(out.end(), g.betas.begin(), g.betas.end());
            } else if constexpr (std::is_same_v<T, GeneralUnitaryLayer>) {
                out.insert(out.end(), g.coeffs.begin(), g.coeffs.end());
            }
        },
        layer);
}

void layer_set_params(Layer& layer, std::span<const double> params, std::size_t offset) {
    std::visit(
        [&](auto& g) {
            using T = std::decay_t<decltype(g)>;
            if constexpr (std::is_same_v<T, SingleQubitRotation>) {
                for (int a = 0; a < 3; ++a) g.alpha[a] = params[offset + a];
            } else if constexpr (std::is_same_v<T, ProductRotationLayer>) {
                for (std::size_t q = 0; q < g.alphas.size(); ++q)
                    for (int a = 0; a < 3; ++a) g.alphas[q][a] = params[offset + 3 * q + a];
            } else if constexpr (std::is_same_v<T, GeneralizedCZLayer>) {
                for (std::size_t i = 0; i < g.betas.size(); ++i) g.betas[i] = params[offset + i];
            } else if constexpr (std::is_same_v<T, GeneralUnitaryLayer>) {
                for (std::size_t i = 0; i < g.coeffs.size(); ++i) g.coeffs[i] = params[offset + i];
            }
        },
        layer);
}

} // namespace dibom
