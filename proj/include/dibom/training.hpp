#pragma once

// Loss functions, analytic commutator gradients, closed-form K-updates,
// and the training loops.
//
// The gradient engine works on operator pairs (A_x, B_x) on the training
// space with objective C = (1/(w N)) sum_x tr(F(A_x) B_x), where F pushes
// A_x through the layer stack. The per-layer gradient kernel is
// M^l = [F^l(A_x), B^l(B_x)] with F^l the input operator propagated up
// through layer l and B^l the target operator pulled back to just above
// layer l; then dC/deps = (i/(w N)) sum_x sum_l tr(M^l K^l). The global
// loss uses A = |in><in|, B = |label><label| (dissipative models embed and
// pad these); the local loss reuses the same kernel with
// A = sum_y |in_y><in_y| x I and B = |label><label|, w = n.

#include "dibom/datagen.hpp"
#include "dibom/network.hpp"

#include <span>
#include <stdexcept>

namespace dibom {

/// Training aborted on a non-finite loss.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class LossKind { Global, Local };
enum class TrainMethod { Simultaneous, LayerByLayer, Nesterov };

struct TrainingConfig {
    double lambda = 0.5;   // regularization weight
    double epsilon = 0.1;  // update step scale, halved on rejected steps
    int max_iters = 1000;
    TrainMethod method = TrainMethod::Simultaneous;
    LossKind loss = LossKind::Global;
    std::uint64_t seed = 0;
    double convergence_tol = 1e-6;
    double eta = 0.1;          // Nesterov learning rate
    double fd_epsilon = 1e-5;  // finite-difference probe (Nesterov gradients)
    int max_halvings = 20;
    bool random_layer_order = false; // layer-by-layer schedule

    void validate() const;
};

/// Per-layer Hermitian generator and its expansion in the layer family's
/// generator basis (sigma coefficients, beta-projector coefficients, or
/// Pauli-word coefficients; always real).
struct GradientUpdate {
    Mat generator;
    std::vector<double> coefficients;
};

struct TraceRow {
    int iter = 0;
    double train_loss = 0.0;
    double test_loss = 0.0; // NaN when no test set was given
    double wall_ms = 0.0;
};

struct TrainTrace {
    std::vector<TraceRow> rows;
    double final_train_loss() const;
    double final_test_loss() const;
    /// First iteration with train loss < threshold, or last iter + 1.
    int iters_to_threshold(double threshold) const;
    /// Longest run of consecutive iterations with |delta loss| < flat_tol
    /// while the loss is still above loss_floor.
    int longest_flat_run(double flat_tol = 1e-5, double loss_floor = 0.1) const;
};

// --- losses -------------------------------------------------------------

/// 1 - mean_x <label_x| model(in_x) |label_x|>. Throws on an empty dataset.
double global_loss(const TrainableModel& model, const Dataset& ds);

/// Mixed-label variant, 1 - mean_x F(model(in_x), label_x).
double global_loss_mixed(const TrainableModel& model, std::span<const DensityMatrix> inputs,
                         std::span<const DensityMatrix> labels);

/// 1 - (1/nN) sum_x sum_y <in_y| tr_noty( U^dag |label><label| U ) |in_y>,
/// the reversed-input local cost. Inputs must be product states.
double local_loss(const TrainableModel& model, const Dataset& ds);

double loss_value(const TrainableModel& model, LossKind kind, const Dataset& ds);

// --- gradient kernel ------------------------------------------------------

/// M^l for one sample (l is 1-based). For the local kind the sample input
/// must be a product state.
Mat compute_M(const TrainableModel& model, const PureState& input, const PureState& label,
              LossKind kind, int l);

/// Analytic dC/deps for the simultaneous direction {K^l}; `directions` is
/// aligned with the circuit's layers (empty matrix = layer does not move).
double directional_derivative(const TrainableModel& model, const Dataset& ds, LossKind kind,
                              std::span<const Mat> directions);

/// C evaluated with every layer unitary replaced by exp(i eps K^l) U^l.
/// Backs the finite-difference verification of directional_derivative.
double objective_with_direction(const TrainableModel& model, const Dataset& ds, LossKind kind,
                                std::span<const Mat> directions, double eps);

// --- closed-form K-updates -------------------------------------------------

// Each takes the per-sample M^l values for one layer; `weight` is 1 for the
// global loss and n for the local loss (the effective sample count is
// weight * m_values.size()).

/// K = i tr_rest(sum_x M) / (N lambda) embedded on the target qubit.
GradientUpdate k_update_single(std::span<const Mat> m_values, int n, int target_qubit, double lambda,
                               double weight = 1.0);

/// K = i sum_j tr_{[n] minus j}(sum_x M) / (N lambda), one commuting
/// single-qubit generator per qubit.
GradientUpdate k_update_product(std::span<const Mat> m_values, int n, double lambda,
                                double weight = 1.0);

/// K = sum_{j<k} K_jk |11><11|_jk with
/// K_jk = i <11| tr_{[n] minus jk}(sum_x M) |11> / (2 N lambda).
GradientUpdate k_update_gcz(std::span<const Mat> m_values, int n, double lambda,
                            double weight = 1.0);

/// Full-space generator K = i 2^(n-1) sum_x M / (N lambda), the exact
/// maximizer of the regularized ascent objective.
GradientUpdate k_update_general(std::span<const Mat> m_values, int n, double lambda,
                                double weight = 1.0);

/// Writes exp(i eps K) U back into the layer's own parameters (beta shift
/// for generalized-CZ layers, SU(2) logs for rotation layers, Hermitian log
/// for general layers).
void apply_update_to_layer(Layer& layer, const GradientUpdate& update, double eps, int n);

// --- training loops ---------------------------------------------------------

struct StepResult {
    double loss_before = 0.0;
    double loss_after = 0.0;
    bool accepted = false;
    double eps_used = 0.0;
};

/// One K-update step over the given trainable layer indices with the
/// accept-if-improved epsilon-halving rule.
StepResult train_step_scoped(TrainableModel& model, const Dataset& ds, const TrainingConfig& config,
                             std::span<const int> layer_scope);

/// One simultaneous step; returns the stepped model and its train loss.
std::pair<TrainableModel, double> train_step(const TrainableModel& model, const Dataset& ds,
                                             const TrainingConfig& config);

struct TrainResult {
    TrainableModel model;
    TrainTrace trace;
};

TrainResult train(const TrainableModel& model, const Dataset& train_ds, const Dataset* test_ds,
                  const TrainingConfig& config);

/// Backward difference (L(y) - L(y - eps)) / eps in the flat parameter
/// coordinate `coord`.
double finite_diff_grad(const TrainableModel& model, const Dataset& ds, LossKind kind,
                        std::size_t coord, double eps);
/// Central-difference variant (verification oracle).
double finite_diff_grad_central(const TrainableModel& model, const Dataset& ds, LossKind kind,
                                std::size_t coord, double eps);

// --- conditional models (measure-and-correct) --------------------------------

double conditional_loss(const ConditionalModel& model, const Dataset& ds);

/// dC/deps through the measurement channel for directions on the
/// pre-circuit layers and on each branch's layers.
double conditional_directional_derivative(const ConditionalModel& model, const Dataset& ds,
                                          std::span<const Mat> pre_directions,
                                          const std::vector<std::vector<Mat>>& branch_directions);
double conditional_objective_with_direction(const ConditionalModel& model, const Dataset& ds,
                                            std::span<const Mat> pre_directions,
                                            const std::vector<std::vector<Mat>>& branch_directions,
                                            double eps);

struct ConditionalTrainResult {
    ConditionalModel model;
    TrainTrace trace;
};

/// K-update training through the measurement channel; pre-measurement
/// layers get K_1 generators, each branch's layers get K_2 generators.
ConditionalTrainResult train_conditional(const ConditionalModel& model, const Dataset& train_ds,
                                         const Dataset* test_ds, const TrainingConfig& config,
                                         bool train_pre = true, bool train_branches = true);

// --- swap test ---------------------------------------------------------------

/// Simulates the Hadamard / controlled-SWAP / Hadamard circuit and returns
/// the ancilla-zero probability: exact circuit value for shots = 0, the
/// sampled fraction of zeros otherwise.
double swap_test_estimate(const PureState& phi, const DensityMatrix& rho, long shots, Rng& rng);

} // namespace dibom
