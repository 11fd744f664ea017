#pragma once

// Model assembly and forward passes: layer stacks, baselines, and the
// measure-and-correct conditional block.

#include "dibom/gates.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>

namespace dibom {

struct Circuit {
    int n = 0;
    std::vector<Layer> layers;
};

/// Ordered product of the layer unitaries (last layer leftmost).
Mat circuit_unitary(const Circuit& c);
std::vector<Mat> circuit_layer_unitaries(const Circuit& c);

DensityMatrix forward(const Circuit& c, const DensityMatrix& rho_in);
Mat forward_mat(const std::vector<Mat>& layer_unitaries, const Mat& rho);

long circuit_param_count(const Circuit& c);
std::vector<double> circuit_get_params(const Circuit& c);
void circuit_set_params(Circuit& c, std::span<const double> params);

/// Measure-and-correct structure: a circuit on m+a qubits (the a ancilla
/// start in |0>), a computational-basis measurement of `measured`, and one
/// branch circuit on the surviving qubits per outcome. The first entry of
/// `measured` is the most significant bit of the outcome index.
struct ConditionalModel {
    int n_input = 0;   // m
    int n_ancilla = 0; // a
    Circuit pre_circuit;
    std::vector<int> measured;
    std::vector<Circuit> branches; // size 2^|measured|

    int n_total() const { return n_input + n_ancilla; }
    int n_surviving() const { return n_total() - static_cast<int>(measured.size()); }
    std::vector<int> surviving_qubits() const;
    void validate() const;
};

/// Tensors in the ancilla (when rho_in is on m qubits; an (m+a)-qubit input
/// is used as-is), runs the pre-circuit, forms the unnormalized
/// post-measurement states tr_measured(rho (|i><i| x I)), pushes each
/// through its branch and sums. The measurement channel makes the output
/// trace 1 by construction.
DensityMatrix conditional_forward(const ConditionalModel& m, const DensityMatrix& rho_in);

struct DissipativeSpec {
    int n_in = 0;
    int n_hidden = 0;
    int n_out = 0;
    int n_total() const { return n_in + n_hidden + n_out; }
};

/// tr_{in,hid}( U (rho_in x |0...0><0...0|) U^dagger ) with U given by the
/// layer; register order is input, hidden, output.
DensityMatrix dissipative_forward(const DissipativeSpec& spec, const GeneralUnitaryLayer& layer,
                                  const DensityMatrix& rho_in);
DensityMatrix dissipative_forward(const DissipativeSpec& spec, const Mat& u, const DensityMatrix& rho_in);

struct ModelKind {
    enum class Tag { DIBoM, HardwareEfficient, IsingBornMachine, DissipativeQNN };
    Tag tag = Tag::DIBoM;
    DissipativeSpec dissipative; // payload for DissipativeQNN
};

std::int64_t count_parameters(const ModelKind& kind, int n, int L);

/// Alternating product-rotation / generalized-CZ stack, product rotation
/// first; odd L ends on an extra product-rotation layer. Initial parameters
/// are seeded: alpha uniform in [-pi, pi], beta uniform in [0, 1].
Circuit build_dibom(int n, int L, std::uint64_t seed);

/// Same stack with the generalized-CZ layers replaced by fixed CZ layers.
Circuit build_hardware_efficient(int n, int L, std::uint64_t seed,
                                 FixedCZLayer::Connectivity connectivity = FixedCZLayer::Connectivity::AllToAll);

/// Hadamard layer, generalized-CZ layer, product-rotation layer (the final
/// measurement is dropped for the state-learning task).
Circuit build_ising_born_machine(int n, std::uint64_t seed);

GeneralUnitaryLayer build_general_unitary_layer(int n, std::uint64_t seed, double coeff_scale = 0.1);

// --- universality reduction -------------------------------------------------

/// Single-qubit rotation gate inside a generic circuit layer.
struct RotationGate {
    int qubit = 0;
    std::array<double, 3> alpha{0.0, 0.0, 0.0};
};
struct CzGate {
    int a = 0;
    int b = 0;
};
/// Raw single-qubit gate; must be special-unitary (see circuit_to_dibom).
struct UnitaryGate {
    int qubit = 0;
    Mat u; // 2x2
};
using GenericGate = std::variant<RotationGate, CzGate, UnitaryGate>;

struct GenericCircuit {
    int n = 0;
    std::vector<std::vector<GenericGate>> layers; // disjoint qubits per layer
};

Mat generic_circuit_unitary(const GenericCircuit& c);

/// Splits every input layer into a product-rotation layer (identity-filled)
/// followed by a generalized-CZ layer (beta = 1 on the CZ pairs, 0
/// elsewhere); a trailing all-zero CZ layer is dropped. The result's total
/// unitary equals the input's exactly and the layer count is at most
/// doubled. Throws on overlapping qubits or a non-special raw unitary.
Circuit circuit_to_dibom(const GenericCircuit& c);

/// The fixed 3-qubit teleportation instance: qubit 0 carries the payload,
/// qubits 1-2 are ancilla; the pre-circuit builds the EPR pair and the
/// Bell-basis rotation, qubits {0,1} are measured and the four branches
/// apply the Pauli corrections.
ConditionalModel teleport_model();

// --- uniform trainable wrapper ----------------------------------------------

/// A circuit plus the space it acts on. Plain models conjugate the input
/// directly; dissipative models embed the input next to |0> hidden/output
/// registers and trace afterwards.
struct TrainableModel {
    ModelKind kind;
    Circuit circuit;

    int n_in() const;
    int n_out() const;
};

TrainableModel make_model(const ModelKind& kind, int n, int L, std::uint64_t seed);
DensityMatrix model_forward(const TrainableModel& model, const DensityMatrix& rho_in);

std::string model_kind_name(ModelKind::Tag tag);

} // namespace dibom
