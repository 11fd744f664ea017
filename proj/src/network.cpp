#include "dibom/network.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dibom {

namespace {

void require(bool ok, const char* msg) {
    if (!ok) throw std::invalid_argument(msg);
}

std::array<double, 3> h_rotation() {
    // exp(i (pi/2) (sigma_x + sigma_z)/sqrt(2)) = i H; the phase is
    // irrelevant under conjugation.
    const double c = M_PI / (2.0 * std::sqrt(2.0));
    return {c, 0.0, c};
}

} // namespace

Mat circuit_unitary(const Circuit& c) {
    Mat u = Mat::Identity(dim_of(c.n), dim_of(c.n));
    for (const Layer& layer : c.layers) u = layer_unitary(layer, c.n) * u;
    return u;
}

std::vector<Mat> circuit_layer_unitaries(const Circuit& c) {
    std::vector<Mat> us;
    us.reserve(c.layers.size());
    for (const Layer& layer : c.layers) us.push_back(layer_unitary(layer, c.n));
    return us;
}

Mat forward_mat(const std::vector<Mat>& layer_unitaries, const Mat& rho) {
    Mat out = rho;
    for (const Mat& u : layer_unitaries) out = u * out * u.adjoint();
    return out;
}

DensityMatrix forward(const Circuit& c, const DensityMatrix& rho_in) {
    require(c.n == rho_in.n, "forward: dimension mismatch");
    return DensityMatrix(c.n, forward_mat(circuit_layer_unitaries(c), rho_in.rho));
}

long circuit_param_count(const Circuit& c) {
    long total = 0;
    for (const Layer& layer : c.layers) total += layer_param_count(layer, c.n);
    return total;
}

std::vector<double> circuit_get_params(const Circuit& c) {
    std::vector<double> out;
    out.reserve(circuit_param_count(c));
    for (const Layer& layer : c.layers) layer_get_params(layer, out);
    return out;
}

void circuit_set_params(Circuit& c, std::span<const double> params) {
    require(static_cast<long>(params.size()) == circuit_param_count(c),
            "circuit_set_params: wrong parameter count");
    std::size_t offset = 0;
    for (Layer& layer : c.layers) {
        layer_set_params(layer, params, offset);
        offset += layer_param_count(layer, c.n);
    }
}

std::vector<int> ConditionalModel::surviving_qubits() const {
    std::vector<int> out;
    for (int q = 0; q < n_total(); ++q)
        if (std::find(measured.begin(), measured.end(), q) == measured.end()) out.push_back(q);
    return out;
}

void ConditionalModel::validate() const {
    require(n_input >= 0 && n_ancilla >= 0 && n_total() >= 1, "ConditionalModel: bad register sizes");
    require(pre_circuit.n == n_total(), "ConditionalModel: pre-circuit size mismatch");
    std::vector<bool> seen(n_total(), false);
    for (int q : measured) {
        require(q >= 0 && q < n_total(), "ConditionalModel: measured qubit out of range");
        require(!seen[q], "ConditionalModel: repeated measured qubit");
        seen[q] = true;
    }
    const std::size_t outcomes = std::size_t{1} << measured.size();
    require(branches.size() == outcomes, "ConditionalModel: branch missing for an outcome");
    for (const Circuit& b : branches)
        require(b.n == n_surviving(), "ConditionalModel: branch circuit size mismatch");
}

namespace {

/// Unnormalized post-measurement block <i|rho|i> on the surviving qubits.
Mat measurement_block(const Mat& rho, int n, const std::vector<int>& measured,
                      const std::vector<int>& surviving, int outcome) {
    const int s = static_cast<int>(surviving.size());
    const int k = static_cast<int>(measured.size());
    const int ds = 1 << s;
    auto compose = [&](int b) {
        int idx = 0;
        for (int p = 0; p < k; ++p)
            if ((outcome >> (k - 1 - p)) & 1) idx |= 1 << (n - 1 - measured[p]);
        for (int p = 0; p < s; ++p)
            if ((b >> (s - 1 - p)) & 1) idx |= 1 << (n - 1 - surviving[p]);
        return idx;
    };
    Mat out(ds, ds);
    for (int a = 0; a < ds; ++a)
        for (int b = 0; b < ds; ++b) out(a, b) = rho(compose(a), compose(b));
    return out;
}

Mat ancilla_extend(const Mat& rho, int extra_qubits) {
    if (extra_qubits == 0) return rho;
    Mat zero = Mat::Zero(1 << extra_qubits, 1 << extra_qubits);
    zero(0, 0) = 1.0;
    return kron(rho, zero);
}

} // namespace

DensityMatrix conditional_forward(const ConditionalModel& m, const DensityMatrix& rho_in) {
    m.validate();
    Mat rho;
    if (rho_in.n == m.n_input) {
        rho = ancilla_extend(rho_in.rho, m.n_ancilla);
    } else if (rho_in.n == m.n_total()) {
        rho = rho_in.rho; // ancilla already part of the input
    } else {
        throw std::invalid_argument("conditional_forward: input qubit count mismatch");
    }

    rho = forward_mat(circuit_layer_unitaries(m.pre_circuit), rho);

    const std::vector<int> surviving = m.surviving_qubits();
    const int ds = 1 << m.n_surviving();
    Mat out = Mat::Zero(ds, ds);
    for (std::size_t i = 0; i < m.branches.size(); ++i) {
        Mat block = measurement_block(rho, m.n_total(), m.measured, surviving, static_cast<int>(i));
        out += forward_mat(circuit_layer_unitaries(m.branches[i]), block);
    }
    return DensityMatrix(m.n_surviving(), std::move(out));
}

DensityMatrix dissipative_forward(const DissipativeSpec& spec, const Mat& u, const DensityMatrix& rho_in) {
    require(rho_in.n == spec.n_in, "dissipative_forward: input qubit count mismatch");
    require(spec.n_out >= 1, "dissipative_forward: need at least one output qubit");
    const int total = spec.n_total();
    require(u.rows() == dim_of(total) && u.cols() == dim_of(total),
            "dissipative_forward: unitary size mismatch");
    Mat joint = ancilla_extend(rho_in.rho, spec.n_hidden + spec.n_out);
    joint = u * joint * u.adjoint();
    std::vector<int> keep;
    for (int q = spec.n_in + spec.n_hidden; q < total; ++q) keep.push_back(q);
    return DensityMatrix(spec.n_out, partial_trace_mat(joint, total, keep));
}

DensityMatrix dissipative_forward(const DissipativeSpec& spec, const GeneralUnitaryLayer& layer,
                                  const DensityMatrix& rho_in) {
    return dissipative_forward(spec, layer_unitary(Layer{layer}, spec.n_total()), rho_in);
}

std::int64_t count_parameters(const ModelKind& kind, int n, int L) {
    const std::int64_t product_layers = (L + 1) / 2;
    const std::int64_t cz_layers = L / 2;
    switch (kind.tag) {
        case ModelKind::Tag::DIBoM:
            return product_layers * 3 * n + cz_layers * pair_count(n);
        case ModelKind::Tag::HardwareEfficient:
            return product_layers * 3 * n;
        case ModelKind::Tag::IsingBornMachine:
            return pair_count(n) + 3 * n;
        case ModelKind::Tag::DissipativeQNN: {
            const int total = kind.dissipative.n_total();
            return (std::int64_t{1} << (2 * total)) - 1;
        }
    }
    throw std::invalid_argument("count_parameters: unknown model kind");
}

namespace {

ProductRotationLayer random_product_layer(int n, Rng& rng) {
    ProductRotationLayer layer;
    layer.alphas.resize(n);
    for (int q = 0; q < n; ++q)
        for (int a = 0; a < 3; ++a) layer.alphas[q][a] = rng.uniform(-M_PI, M_PI);
    return layer;
}

GeneralizedCZLayer random_gcz_layer(int n, Rng& rng) {
    GeneralizedCZLayer layer;
    layer.betas.resize(pair_count(n));
    for (double& b : layer.betas) b = rng.uniform(0.0, 1.0);
    return layer;
}

} // namespace

Circuit build_dibom(int n, int L, std::uint64_t seed) {
    require(n >= 1, "build_dibom: need at least one qubit");
    require(L >= 1, "build_dibom: need at least one layer");
    Rng rng(seed);
    Circuit c;
    c.n = n;
    for (int l = 0; l < L; ++l) {
        if (l % 2 == 0) c.layers.emplace_back(random_product_layer(n, rng));
        else c.layers.emplace_back(random_gcz_layer(n, rng));
    }
    return c;
}

Circuit build_hardware_efficient(int n, int L, std::uint64_t seed, FixedCZLayer::Connectivity connectivity) {
    require(n >= 1 && L >= 1, "build_hardware_efficient: bad shape");
    Rng rng(seed);
    Circuit c;
    c.n = n;
    for (int l = 0; l < L; ++l) {
        if (l % 2 == 0) c.layers.emplace_back(random_product_layer(n, rng));
        else c.layers.emplace_back(FixedCZLayer::make(n, connectivity));
    }
    return c;
}

Circuit build_ising_born_machine(int n, std::uint64_t seed) {
    require(n >= 1, "build_ising_born_machine: need at least one qubit");
    Rng rng(seed);
    Circuit c;
    c.n = n;
    c.layers.emplace_back(HadamardLayer{});
    c.layers.emplace_back(random_gcz_layer(n, rng));
    c.layers.emplace_back(random_product_layer(n, rng));
    return c;
}

GeneralUnitaryLayer build_general_unitary_layer(int n, std::uint64_t seed, double coeff_scale) {
    Rng rng(seed);
    GeneralUnitaryLayer layer;
    layer.coeffs.resize(std::size_t{1} << (2 * n));
    for (double& c : layer.coeffs) c = rng.uniform(-coeff_scale, coeff_scale);
    layer.coeffs[0] = 0.0; // identity word is a global phase
    return layer;
}

Mat generic_circuit_unitary(const GenericCircuit& c) {
    Mat u = Mat::Identity(dim_of(c.n), dim_of(c.n));
    for (const auto& layer : c.layers) {
        for (const GenericGate& gate : layer) {
            Mat g = std::visit(
                [&](const auto& x) -> Mat {
                    using T = std::decay_t<decltype(x)>;
                    if constexpr (std::is_same_v<T, RotationGate>) {
                        const int qs[1] = {x.qubit};
                        return embed(rotation_unitary(x.alpha), qs, c.n);
                    } else if constexpr (std::is_same_v<T, CzGate>) {
                        GeneralizedCZLayer cz;
                        cz.betas.assign(pair_count(c.n), 0.0);
                        cz.betas[pair_index(std::min(x.a, x.b), std::max(x.a, x.b), c.n)] = 1.0;
                        return layer_unitary(Layer{cz}, c.n);
                    } else {
                        const int qs[1] = {x.qubit};
                        return embed(x.u, qs, c.n);
                    }
                },
                gate);
            u = g * u;
        }
    }
    return u;
}

Circuit circuit_to_dibom(const GenericCircuit& c) {
    require(c.n >= 1, "circuit_to_dibom: need at least one qubit");
    Circuit out;
    out.n = c.n;
    for (const auto& layer : c.layers) {
        ProductRotationLayer prod;
        prod.alphas.assign(c.n, {0.0, 0.0, 0.0});
        GeneralizedCZLayer cz;
        cz.betas.assign(pair_count(c.n), 0.0);
        bool any_cz = false;
        std::vector<bool> used(c.n, false);
        auto claim = [&](int q) {
            require(q >= 0 && q < c.n, "circuit_to_dibom: qubit out of range");
            require(!used[q], "circuit_to_dibom: overlapping gates in a layer");
            used[q] = true;
        };
        for (const GenericGate& gate : layer) {
            std::visit(
                [&](const auto& x) {
                    using T = std::decay_t<decltype(x)>;
                    if constexpr (std::is_same_v<T, RotationGate>) {
                        claim(x.qubit);
                        prod.alphas[x.qubit] = x.alpha;
                    } else if constexpr (std::is_same_v<T, CzGate>) {
                        require(x.a != x.b, "circuit_to_dibom: CZ needs two distinct qubits");
                        claim(x.a);
                        claim(x.b);
                        cz.betas[pair_index(std::min(x.a, x.b), std::max(x.a, x.b), c.n)] = 1.0;
                        any_cz = true;
                    } else {
                        claim(x.qubit);
                        prod.alphas[x.qubit] = su2_log(x.u); // throws on non-SU(2): unsupported gate
                    }
                },
                gate);
        }
        out.layers.emplace_back(std::move(prod));
        if (any_cz) out.layers.emplace_back(std::move(cz));
        else out.layers.emplace_back(GeneralizedCZLayer{std::vector<double>(pair_count(c.n), 0.0)});
    }
    // drop a trailing identity CZ layer so an odd stack stays odd
    if (!out.layers.empty()) {
        if (const auto* cz = std::get_if<GeneralizedCZLayer>(&out.layers.back())) {
            const bool all_zero = std::all_of(cz->betas.begin(), cz->betas.end(),
                                              [](double b) { return b == 0.0; });
            if (all_zero) out.layers.pop_back();
        }
    }
    return out;
}

ConditionalModel teleport_model() {
    ConditionalModel m;
    m.n_input = 1;
    m.n_ancilla = 2;
    m.pre_circuit.n = 3;
    m.measured = {0, 1};

    auto h = [](int q) { return Layer{SingleQubitRotation{q, h_rotation()}}; };
    auto cz = [](int j, int k) {
        GeneralizedCZLayer layer;
        layer.betas.assign(pair_count(3), 0.0);
        layer.betas[pair_index(j, k, 3)] = 1.0;
        return Layer{layer};
    };
    // EPR pair on (1,2): H1, then CNOT(1->2) = H2 CZ12 H2;
    // Bell rotation on (0,1): CNOT(0->1) = H1 CZ01 H1, then H0.
    m.pre_circuit.layers = {h(1), h(2), cz(1, 2), h(2), h(1), cz(0, 1), h(1), h(0)};

    auto branch = [](std::array<double, 3> alpha) {
        Circuit b;
        b.n = 1;
        b.layers = {Layer{SingleQubitRotation{0, alpha}}};
        return b;
    };
    const double half_pi = M_PI / 2.0;
    m.branches = {
        branch({0.0, 0.0, 0.0}),     // outcome 00: identity
        branch({half_pi, 0.0, 0.0}), // outcome 01: X
        branch({0.0, 0.0, half_pi}), // outcome 10: Z
        branch({0.0, half_pi, 0.0}), // outcome 11: ZX (= i sigma_y)
    };
    return m;
}

int TrainableModel::n_in() const {
    return kind.tag == ModelKind::Tag::DissipativeQNN ? kind.dissipative.n_in : circuit.n;
}

int TrainableModel::n_out() const {
    return kind.tag == ModelKind::Tag::DissipativeQNN ? kind.dissipative.n_out : circuit.n;
}

TrainableModel make_model(const ModelKind& kind, int n, int L, std::uint64_t seed) {
    TrainableModel model;
    model.kind = kind;
    switch (kind.tag) {
        case ModelKind::Tag::DIBoM:
            model.circuit = build_dibom(n, L, seed);
            break;
        case ModelKind::Tag::HardwareEfficient:
            model.circuit = build_hardware_efficient(n, L, seed);
            break;
        case ModelKind::Tag::IsingBornMachine:
            model.circuit = build_ising_born_machine(n, seed);
            break;
        case ModelKind::Tag::DissipativeQNN: {
            model.circuit.n = kind.dissipative.n_total();
            model.circuit.layers = {Layer{build_general_unitary_layer(model.circuit.n, seed)}};
            break;
        }
    }
    return model;
}

DensityMatrix model_forward(const TrainableModel& model, const DensityMatrix& rho_in) {
    if (model.kind.tag == ModelKind::Tag::DissipativeQNN)
        return dissipative_forward(model.kind.dissipative, circuit_unitary(model.circuit), rho_in);
    return forward(model.circuit, rho_in);
}

std::string model_kind_name(ModelKind::Tag tag) {
    switch (tag) {
        case ModelKind::Tag::DIBoM: return "dibom";
        case ModelKind::Tag::HardwareEfficient: return "hardware_efficient";
        case ModelKind::Tag::IsingBornMachine: return "ising_born_machine";
        case ModelKind::Tag::DissipativeQNN: return "dissipative";
    }
    return "unknown";
}

} // namespace dibom
