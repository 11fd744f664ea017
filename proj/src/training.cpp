#include "dibom/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

namespace dibom {

namespace {

void require(bool ok, const char* msg) {
    if (!ok) throw std::invalid_argument(msg);
}

cplx trace_of_product(const Mat& a, const Mat& b) {
    return a.transpose().cwiseProduct(b).sum();
}

double checked_loss(double loss) {
    if (!std::isfinite(loss)) throw NumericalError("non-finite loss");
    if (loss < -1e-6) throw NumericalError("loss below zero beyond round-off");
    return std::max(loss, 0.0);
}

Mat hadamard_2x2() {
    Mat h(2, 2);
    const double s = 1.0 / std::sqrt(2.0);
    h << s, s, s, -s;
    return h;
}

// Operator pairs (A_x, B_x) on the model's training space.
struct TrainingOps {
    std::vector<Mat> inputs;
    std::vector<Mat> targets;
    double weight = 1.0; // effective N = weight * inputs.size()
};

Mat zero_padded_input(const Mat& rho, int extra) {
    if (extra == 0) return rho;
    Mat zero = Mat::Zero(1 << extra, 1 << extra);
    zero(0, 0) = 1.0;
    return kron(rho, zero);
}

/// sum_y |in_y><in_y| x I for a product-form input state.
Mat local_input_operator(const PureState& in) {
    const int n = in.n;
    const Mat proj = in.projector();
    Mat acc = Mat::Zero(proj.rows(), proj.cols());
    for (int y = 0; y < n; ++y) {
        const int keep[1] = {y};
        Mat marginal = partial_trace_mat(proj, n, keep);
        const double purity = std::real(trace_of_product(marginal, marginal));
        if (purity < 1.0 - 1e-8)
            throw std::invalid_argument("local loss requires product-form inputs");
        acc += embed(marginal, keep, n);
    }
    return acc;
}

TrainingOps make_training_ops(const TrainableModel& model, LossKind kind, const Dataset& ds) {
    require(!ds.pairs.empty(), "empty dataset");
    require(ds.n_in == model.n_in() && ds.n_out == model.n_out(),
            "dataset and model dimensions do not match");
    TrainingOps ops;
    ops.inputs.reserve(ds.size());
    ops.targets.reserve(ds.size());
    const bool dissipative = model.kind.tag == ModelKind::Tag::DissipativeQNN;
    if (kind == LossKind::Local) {
        require(!dissipative, "local loss requires a plain circuit model");
        ops.weight = static_cast<double>(model.circuit.n);
        for (const auto& [in, label] : ds.pairs) {
            ops.inputs.push_back(local_input_operator(in));
            ops.targets.push_back(label.projector());
        }
        return ops;
    }
    for (const auto& [in, label] : ds.pairs) {
        if (dissipative) {
            const auto& spec = model.kind.dissipative;
            ops.inputs.push_back(zero_padded_input(in.projector(), spec.n_hidden + spec.n_out));
            // <label| tr_{in,hid}(rho) |label> = tr(rho (I x |label><label|))
            ops.targets.push_back(kron(identity(dim_of(spec.n_in + spec.n_hidden)), label.projector()));
        } else {
            ops.inputs.push_back(in.projector());
            ops.targets.push_back(label.projector());
        }
    }
    return ops;
}

double objective_c(const std::vector<Mat>& layer_us, const TrainingOps& ops) {
    Mat u = Mat::Identity(ops.inputs.front().rows(), ops.inputs.front().cols());
    for (const Mat& lu : layer_us) u = lu * u;
    double acc = 0.0;
    for (std::size_t x = 0; x < ops.inputs.size(); ++x) {
        const Mat out = u * ops.inputs[x] * u.adjoint();
        acc += std::real(trace_of_product(out, ops.targets[x]));
    }
    return acc / (ops.weight * static_cast<double>(ops.inputs.size()));
}

/// M^l = [F^l, B^l] for l = 1..L (returned 0-based).
std::vector<Mat> m_chain(const std::vector<Mat>& us, const Mat& a, const Mat& b) {
    const std::size_t L = us.size();
    std::vector<Mat> fwd(L + 1);
    fwd[0] = a;
    for (std::size_t l = 1; l <= L; ++l) fwd[l] = us[l - 1] * fwd[l - 1] * us[l - 1].adjoint();
    Mat back = b;
    std::vector<Mat> out(L);
    for (std::size_t l = L; l >= 1; --l) {
        out[l - 1] = fwd[l] * back - back * fwd[l];
        back = us[l - 1].adjoint() * back * us[l - 1];
    }
    return out;
}

GradientUpdate update_for_layer(const Layer& layer, std::span<const Mat> ms, int n, double lambda,
                                double weight) {
    return std::visit(
        [&](const auto& g) -> GradientUpdate {
            using T = std::decay_t<decltype(g)>;
            if constexpr (std::is_same_v<T, SingleQubitRotation>)
                return k_update_single(ms, n, g.target, lambda, weight);
            else if constexpr (std::is_same_v<T, ProductRotationLayer>)
                return k_update_product(ms, n, lambda, weight);
            else if constexpr (std::is_same_v<T, GeneralizedCZLayer>)
                return k_update_gcz(ms, n, lambda, weight);
            else if constexpr (std::is_same_v<T, GeneralUnitaryLayer>)
                return k_update_general(ms, n, lambda, weight);
            else
                throw std::logic_error("update_for_layer: layer has no parameters");
        },
        layer);
}

Mat m_values_sum(std::span<const Mat> ms) {
    require(!ms.empty(), "k-update: need at least one M value");
    Mat acc = ms[0];
    for (std::size_t i = 1; i < ms.size(); ++i) acc += ms[i];
    return acc;
}

} // namespace

void TrainingConfig::validate() const {
    require(lambda > 0.0, "TrainingConfig: lambda must be positive");
    require(epsilon > 0.0, "TrainingConfig: epsilon must be positive");
    require(convergence_tol > 0.0, "TrainingConfig: convergence_tol must be positive");
    require(max_iters >= 0, "TrainingConfig: max_iters must be non-negative");
    require(max_halvings >= 0, "TrainingConfig: max_halvings must be non-negative");
    require(eta > 0.0, "TrainingConfig: eta must be positive");
    require(fd_epsilon > 0.0, "TrainingConfig: fd_epsilon must be positive");
}

double TrainTrace::final_train_loss() const { return rows.empty() ? 0.0 : rows.back().train_loss; }

double TrainTrace::final_test_loss() const { return rows.empty() ? 0.0 : rows.back().test_loss; }

int TrainTrace::iters_to_threshold(double threshold) const {
    for (const TraceRow& row : rows)
        if (row.train_loss < threshold) return row.iter;
    return rows.empty() ? 0 : rows.back().iter + 1;
}

int TrainTrace::longest_flat_run(double flat_tol, double loss_floor) const {
    int best = 0;
    int run = 0;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const bool flat = std::abs(rows[i].train_loss - rows[i - 1].train_loss) < flat_tol &&
                          rows[i].train_loss > loss_floor;
        run = flat ? run + 1 : 0;
        best = std::max(best, run);
    }
    return best;
}

double global_loss(const TrainableModel& model, const Dataset& ds) {
    const TrainingOps ops = make_training_ops(model, LossKind::Global, ds);
    return checked_loss(1.0 - objective_c(circuit_layer_unitaries(model.circuit), ops));
}

double global_loss_mixed(const TrainableModel& model, std::span<const DensityMatrix> inputs,
                         std::span<const DensityMatrix> labels) {
    require(!inputs.empty() && inputs.size() == labels.size(), "empty dataset");
    double acc = 0.0;
    for (std::size_t x = 0; x < inputs.size(); ++x)
        acc += fidelity(model_forward(model, inputs[x]), labels[x]);
    return checked_loss(1.0 - acc / static_cast<double>(inputs.size()));
}

double local_loss(const TrainableModel& model, const Dataset& ds) {
    const TrainingOps ops = make_training_ops(model, LossKind::Local, ds);
    return checked_loss(1.0 - objective_c(circuit_layer_unitaries(model.circuit), ops));
}

double loss_value(const TrainableModel& model, LossKind kind, const Dataset& ds) {
    return kind == LossKind::Global ? global_loss(model, ds) : local_loss(model, ds);
}

Mat compute_M(const TrainableModel& model, const PureState& input, const PureState& label,
              LossKind kind, int l) {
    const std::vector<Mat> us = circuit_layer_unitaries(model.circuit);
    require(l >= 1 && l <= static_cast<int>(us.size()), "compute_M: layer index out of range");
    Mat a, b;
    if (kind == LossKind::Local) {
        require(model.kind.tag != ModelKind::Tag::DissipativeQNN,
                "local loss requires a plain circuit model");
        a = local_input_operator(input);
        b = label.projector();
    } else if (model.kind.tag == ModelKind::Tag::DissipativeQNN) {
        const auto& spec = model.kind.dissipative;
        a = zero_padded_input(input.projector(), spec.n_hidden + spec.n_out);
        b = kron(identity(dim_of(spec.n_in + spec.n_hidden)), label.projector());
    } else {
        a = input.projector();
        b = label.projector();
    }
    return m_chain(us, a, b)[l - 1];
}

double directional_derivative(const TrainableModel& model, const Dataset& ds, LossKind kind,
                              std::span<const Mat> directions) {
    const TrainingOps ops = make_training_ops(model, kind, ds);
    const std::vector<Mat> us = circuit_layer_unitaries(model.circuit);
    require(directions.size() == us.size(), "directional_derivative: direction count mismatch");
    cplx acc = 0.0;
    for (std::size_t x = 0; x < ops.inputs.size(); ++x) {
        const std::vector<Mat> ms = m_chain(us, ops.inputs[x], ops.targets[x]);
        for (std::size_t l = 0; l < us.size(); ++l) {
            if (directions[l].size() == 0) continue;
            acc += trace_of_product(ms[l], directions[l]);
        }
    }
    return std::real(cplx(0.0, 1.0) * acc) / (ops.weight * static_cast<double>(ops.inputs.size()));
}

double objective_with_direction(const TrainableModel& model, const Dataset& ds, LossKind kind,
                                std::span<const Mat> directions, double eps) {
    const TrainingOps ops = make_training_ops(model, kind, ds);
    std::vector<Mat> us = circuit_layer_unitaries(model.circuit);
    require(directions.size() == us.size(), "objective_with_direction: direction count mismatch");
    for (std::size_t l = 0; l < us.size(); ++l) {
        if (directions[l].size() == 0) continue;
        us[l] = hermitian_exp(directions[l], eps) * us[l];
    }
    return objective_c(us, ops);
}

GradientUpdate k_update_single(std::span<const Mat> m_values, int n, int target_qubit, double lambda,
                               double weight) {
    require(lambda > 0.0, "k_update_single: lambda must be positive");
    require(target_qubit >= 0 && target_qubit < n, "k_update_single: target out of range");
    const double n_eff = weight * static_cast<double>(m_values.size());
    const int keep[1] = {target_qubit};
    const Mat m2 = partial_trace_mat(m_values_sum(m_values), n, keep);
    const Mat k2 = (cplx(0.0, 1.0) / (n_eff * lambda)) * m2;
    GradientUpdate upd;
    upd.generator = embed(k2, keep, n);
    upd.coefficients.resize(3);
    for (int a = 0; a < 3; ++a)
        upd.coefficients[a] = std::real(trace_of_product(k2, pauli(a + 1))) / 2.0;
    return upd;
}

GradientUpdate k_update_product(std::span<const Mat> m_values, int n, double lambda, double weight) {
    require(lambda > 0.0, "k_update_product: lambda must be positive");
    const double n_eff = weight * static_cast<double>(m_values.size());
    const Mat m_sum = m_values_sum(m_values);
    GradientUpdate upd;
    upd.generator = Mat::Zero(dim_of(n), dim_of(n));
    upd.coefficients.resize(3 * n);
    for (int q = 0; q < n; ++q) {
        const int keep[1] = {q};
        const Mat k2 = (cplx(0.0, 1.0) / (n_eff * lambda)) * partial_trace_mat(m_sum, n, keep);
        upd.generator += embed(k2, keep, n);
        for (int a = 0; a < 3; ++a)
            upd.coefficients[3 * q + a] = std::real(trace_of_product(k2, pauli(a + 1))) / 2.0;
    }
    return upd;
}

GradientUpdate k_update_gcz(std::span<const Mat> m_values, int n, double lambda, double weight) {
    require(lambda > 0.0, "k_update_gcz: lambda must be positive");
    const double n_eff = weight * static_cast<double>(m_values.size());
    const Mat m_sum = m_values_sum(m_values);
    GradientUpdate upd;
    upd.generator = Mat::Zero(dim_of(n), dim_of(n));
    upd.coefficients.resize(pair_count(n));
    Mat proj11 = Mat::Zero(4, 4);
    proj11(3, 3) = 1.0;
    for (int j = 0; j < n; ++j) {
        for (int k = j + 1; k < n; ++k) {
            const int keep[2] = {j, k};
            const Mat m4 = partial_trace_mat(m_sum, n, keep);
            // anti-Hermitian contraction times i is real
            const double c = std::real(cplx(0.0, 1.0) * m4(3, 3)) / (2.0 * n_eff * lambda);
            upd.coefficients[pair_index(j, k, n)] = c;
            upd.generator += c * embed(proj11, keep, n);
        }
    }
    return upd;
}

GradientUpdate k_update_general(std::span<const Mat> m_values, int n, double lambda, double weight) {
    require(lambda > 0.0, "k_update_general: lambda must be positive");
    const double n_eff = weight * static_cast<double>(m_values.size());
    const double scale = static_cast<double>(1 << (n - 1)) / (n_eff * lambda);
    GradientUpdate upd;
    upd.generator = cplx(0.0, 1.0) * scale * m_values_sum(m_values);
    upd.coefficients = pauli_coefficients(upd.generator, n);
    return upd;
}

void apply_update_to_layer(Layer& layer, const GradientUpdate& update, double eps, int n) {
    std::visit(
        [&](auto& g) {
            using T = std::decay_t<decltype(g)>;
            if constexpr (std::is_same_v<T, SingleQubitRotation>) {
                const std::array<double, 3> step{eps * update.coefficients[0], eps * update.coefficients[1],
                                                 eps * update.coefficients[2]};
                g.alpha = su2_log(rotation_unitary(step) * rotation_unitary(g.alpha));
            } else if constexpr (std::is_same_v<T, ProductRotationLayer>) {
                for (std::size_t q = 0; q < g.alphas.size(); ++q) {
                    const std::array<double, 3> step{eps * update.coefficients[3 * q],
                                                     eps * update.coefficients[3 * q + 1],
                                                     eps * update.coefficients[3 * q + 2]};
                    g.alphas[q] = su2_log(rotation_unitary(step) * rotation_unitary(g.alphas[q]));
                }
            } else if constexpr (std::is_same_v<T, GeneralizedCZLayer>) {
                for (std::size_t i = 0; i < g.betas.size(); ++i)
                    g.betas[i] -= eps * update.coefficients[i] / M_PI;
            } else if constexpr (std::is_same_v<T, GeneralUnitaryLayer>) {
                const Mat u_new = hermitian_exp(update.generator, eps) * layer_unitary(Layer{g}, n);
                g.coeffs = pauli_coefficients(unitary_log(u_new), n);
            } else {
                throw std::logic_error("apply_update_to_layer: layer has no parameters");
            }
        },
        layer);
}

namespace {

std::vector<int> trainable_layer_indices(const Circuit& c) {
    std::vector<int> idx;
    for (std::size_t l = 0; l < c.layers.size(); ++l)
        if (layer_is_trainable(c.layers[l]) && layer_param_count(c.layers[l], c.n) > 0)
            idx.push_back(static_cast<int>(l));
    return idx;
}

StepResult k_update_step(TrainableModel& model, const TrainingOps& ops, const TrainingConfig& config,
                         std::span<const int> scope) {
    const std::vector<Mat> us = circuit_layer_unitaries(model.circuit);
    const double c_old = objective_c(us, ops);
    StepResult result;
    result.loss_before = checked_loss(1.0 - c_old);
    result.loss_after = result.loss_before;
    if (scope.empty()) return result;

    const std::size_t n_samples = ops.inputs.size();
    std::vector<std::vector<Mat>> per_layer(scope.size());
    for (auto& v : per_layer) v.reserve(n_samples);
    for (std::size_t x = 0; x < n_samples; ++x) {
        std::vector<Mat> ms = m_chain(us, ops.inputs[x], ops.targets[x]);
        for (std::size_t s = 0; s < scope.size(); ++s) per_layer[s].push_back(std::move(ms[scope[s]]));
    }

    // The local loss keeps its 1/n only in the objective; M_local feeds the
    // same K = i tr_rest(sum M)/(N lambda) closed forms as the global loss.
    std::vector<GradientUpdate> updates(scope.size());
    for (std::size_t s = 0; s < scope.size(); ++s)
        updates[s] = update_for_layer(model.circuit.layers[scope[s]], per_layer[s], model.circuit.n,
                                      config.lambda, 1.0);

    double eps = config.epsilon;
    for (int attempt = 0; attempt <= config.max_halvings; ++attempt) {
        Circuit candidate = model.circuit;
        for (std::size_t s = 0; s < scope.size(); ++s)
            apply_update_to_layer(candidate.layers[scope[s]], updates[s], eps, candidate.n);
        const double c_new = objective_c(circuit_layer_unitaries(candidate), ops);
        const double loss_new = checked_loss(1.0 - c_new);
        if (c_new > c_old) {
            model.circuit = std::move(candidate);
            result.loss_after = loss_new;
            result.accepted = true;
            result.eps_used = eps;
            return result;
        }
        eps /= 2.0;
    }
    return result; // no improving step found; parameters unchanged
}

} // namespace

StepResult train_step_scoped(TrainableModel& model, const Dataset& ds, const TrainingConfig& config,
                             std::span<const int> layer_scope) {
    config.validate();
    const TrainingOps ops = make_training_ops(model, config.loss, ds);
    return k_update_step(model, ops, config, layer_scope);
}

std::pair<TrainableModel, double> train_step(const TrainableModel& model, const Dataset& ds,
                                             const TrainingConfig& config) {
    TrainableModel stepped = model;
    const std::vector<int> scope = trainable_layer_indices(stepped.circuit);
    const StepResult r = train_step_scoped(stepped, ds, config, scope);
    return {std::move(stepped), r.loss_after};
}

namespace {

TrainResult train_nesterov(TrainableModel model, const Dataset& train_ds, const Dataset* test_ds,
                           const TrainingConfig& config) {
    const auto t0 = std::chrono::steady_clock::now();
    auto wall_ms = [&t0] {
        return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    };
    TrainResult result;
    result.model = std::move(model);
    auto loss_at = [&](const std::vector<double>& params) {
        TrainableModel probe = result.model;
        circuit_set_params(probe.circuit, params);
        return loss_value(probe, config.loss, train_ds);
    };
    auto test_loss_of = [&](const TrainableModel& m) {
        return test_ds ? loss_value(m, config.loss, *test_ds) : std::nan("");
    };

    std::vector<double> y_cur = circuit_get_params(result.model.circuit);
    std::vector<double> y_prev = y_cur;
    double loss = loss_value(result.model, config.loss, train_ds);
    result.trace.rows.push_back({0, loss, test_loss_of(result.model), wall_ms()});

    const std::size_t p = y_cur.size();
    std::vector<double> x(p), grad(p);
    for (int k = 1; k <= config.max_iters && loss >= config.convergence_tol && p > 0; ++k) {
        const double momentum = static_cast<double>(k - 1) / static_cast<double>(k + 2);
        for (std::size_t i = 0; i < p; ++i) x[i] = y_cur[i] + momentum * (y_cur[i] - y_prev[i]);
        const double loss_x = loss_at(x);
        for (std::size_t i = 0; i < p; ++i) {
            std::vector<double> shifted = x;
            shifted[i] -= config.fd_epsilon;
            grad[i] = (loss_x - loss_at(shifted)) / config.fd_epsilon;
        }
        y_prev = y_cur;
        for (std::size_t i = 0; i < p; ++i) y_cur[i] = x[i] - config.eta * grad[i];
        circuit_set_params(result.model.circuit, y_cur);
        loss = loss_value(result.model, config.loss, train_ds);
        result.trace.rows.push_back({k, loss, test_loss_of(result.model), wall_ms()});
    }
    return result;
}

} // namespace

TrainResult train(const TrainableModel& model, const Dataset& train_ds, const Dataset* test_ds,
                  const TrainingConfig& config) {
    config.validate();
    if (config.method == TrainMethod::Nesterov) return train_nesterov(model, train_ds, test_ds, config);

    const auto t0 = std::chrono::steady_clock::now();
    auto wall_ms = [&t0] {
        return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    };

    TrainResult result;
    result.model = model;
    const TrainingOps ops = make_training_ops(result.model, config.loss, train_ds);
    const TrainingOps* test_ops = nullptr;
    TrainingOps test_ops_storage;
    if (test_ds) {
        test_ops_storage = make_training_ops(result.model, config.loss, *test_ds);
        test_ops = &test_ops_storage;
    }
    auto test_loss_of = [&](const TrainableModel& m) {
        if (!test_ops) return std::nan("");
        return checked_loss(1.0 - objective_c(circuit_layer_unitaries(m.circuit), *test_ops));
    };

    const std::vector<int> trainable = trainable_layer_indices(result.model.circuit);
    double loss = checked_loss(1.0 - objective_c(circuit_layer_unitaries(result.model.circuit), ops));
    result.trace.rows.push_back({0, loss, test_loss_of(result.model), wall_ms()});

    Rng order_rng = Rng(config.seed).derive(0x0d);
    std::size_t round_robin = 0;
    for (int iter = 1; iter <= config.max_iters && loss >= config.convergence_tol; ++iter) {
        std::vector<int> scope;
        if (config.method == TrainMethod::Simultaneous || trainable.empty()) {
            scope = trainable;
        } else if (config.random_layer_order) {
            scope = {trainable[order_rng.uniform_index(trainable.size())]};
        } else {
            scope = {trainable[round_robin % trainable.size()]};
            ++round_robin;
        }
        const StepResult r = k_update_step(result.model, ops, config, scope);
        loss = r.loss_after;
        result.trace.rows.push_back({iter, loss, test_loss_of(result.model), wall_ms()});
    }
    return result;
}

double finite_diff_grad(const TrainableModel& model, const Dataset& ds, LossKind kind,
                        std::size_t coord, double eps) {
    require(eps > 0.0, "finite_diff_grad: eps must be positive");
    std::vector<double> params = circuit_get_params(model.circuit);
    require(coord < params.size(), "finite_diff_grad: coordinate out of range");
    auto loss_at = [&](double value) {
        TrainableModel probe = model;
        std::vector<double> p = params;
        p[coord] = value;
        circuit_set_params(probe.circuit, p);
        return loss_value(probe, kind, ds);
    };
    return (loss_at(params[coord]) - loss_at(params[coord] - eps)) / eps;
}

double finite_diff_grad_central(const TrainableModel& model, const Dataset& ds, LossKind kind,
                                std::size_t coord, double eps) {
    require(eps > 0.0, "finite_diff_grad_central: eps must be positive");
    std::vector<double> params = circuit_get_params(model.circuit);
    require(coord < params.size(), "finite_diff_grad_central: coordinate out of range");
    auto loss_at = [&](double value) {
        TrainableModel probe = model;
        std::vector<double> p = params;
        p[coord] = value;
        circuit_set_params(probe.circuit, p);
        return loss_value(probe, kind, ds);
    };
    return (loss_at(params[coord] + eps) - loss_at(params[coord] - eps)) / (2.0 * eps);
}

// --- conditional models -------------------------------------------------------

namespace {

struct CondOps {
    std::vector<Mat> inputs;  // on the full pre-measurement space
    std::vector<Mat> targets; // on the surviving qubits
};

CondOps make_cond_ops(const ConditionalModel& model, const Dataset& ds) {
    model.validate();
    require(!ds.pairs.empty(), "empty dataset");
    require(ds.n_out == model.n_surviving(), "dataset labels do not match the surviving qubits");
    CondOps ops;
    for (const auto& [in, label] : ds.pairs) {
        if (in.n == model.n_input) {
            ops.inputs.push_back(zero_padded_input(in.projector(), model.n_ancilla));
        } else if (in.n == model.n_total()) {
            ops.inputs.push_back(in.projector());
        } else {
            throw std::invalid_argument("dataset inputs do not match the model registers");
        }
        ops.targets.push_back(label.projector());
    }
    return ops;
}

struct CondUnitaries {
    std::vector<Mat> pre;
    std::vector<std::vector<Mat>> branches;
};

CondUnitaries cond_unitaries(const ConditionalModel& model) {
    CondUnitaries us;
    us.pre = circuit_layer_unitaries(model.pre_circuit);
    us.branches.reserve(model.branches.size());
    for (const Circuit& b : model.branches) us.branches.push_back(circuit_layer_unitaries(b));
    return us;
}

Mat cond_measurement_block(const Mat& rho, const ConditionalModel& model,
                           const std::vector<int>& surviving, int outcome) {
    const int n = model.n_total();
    const int s = static_cast<int>(surviving.size());
    const int k = static_cast<int>(model.measured.size());
    const int ds = 1 << s;
    auto compose = [&](int b) {
        int idx = 0;
        for (int p = 0; p < k; ++p)
            if ((outcome >> (k - 1 - p)) & 1) idx |= 1 << (n - 1 - model.measured[p]);
        for (int p = 0; p < s; ++p)
            if ((b >> (s - 1 - p)) & 1) idx |= 1 << (n - 1 - surviving[p]);
        return idx;
    };
    Mat out(ds, ds);
    for (int a = 0; a < ds; ++a)
        for (int b = 0; b < ds; ++b) out(a, b) = rho(compose(a), compose(b));
    return out;
}

double cond_objective(const ConditionalModel& model, const CondUnitaries& us, const CondOps& ops) {
    const std::vector<int> surviving = model.surviving_qubits();
    double acc = 0.0;
    for (std::size_t x = 0; x < ops.inputs.size(); ++x) {
        Mat rho = forward_mat(us.pre, ops.inputs[x]);
        for (std::size_t i = 0; i < us.branches.size(); ++i) {
            const Mat block = cond_measurement_block(rho, model, surviving, static_cast<int>(i));
            acc += std::real(trace_of_product(forward_mat(us.branches[i], block), ops.targets[x]));
        }
    }
    return acc / static_cast<double>(ops.inputs.size());
}

/// Backward target for the pre-circuit: sum_i |i><i|_measured x V_i^dag B V_i.
Mat cond_pre_target(const ConditionalModel& model, const CondUnitaries& us,
                    const std::vector<int>& surviving, const Mat& target) {
    const int n = model.n_total();
    Mat acc = Mat::Zero(dim_of(n), dim_of(n));
    const int k = static_cast<int>(model.measured.size());
    for (std::size_t i = 0; i < us.branches.size(); ++i) {
        Mat pulled = target;
        for (auto it = us.branches[i].rbegin(); it != us.branches[i].rend(); ++it)
            pulled = it->adjoint() * pulled * (*it);
        Mat outcome_proj = Mat::Zero(1 << k, 1 << k);
        outcome_proj(static_cast<int>(i), static_cast<int>(i)) = 1.0;
        acc += embed(outcome_proj, model.measured, n) * embed(pulled, surviving, n);
    }
    return acc;
}

struct CondGradients {
    std::vector<std::vector<Mat>> pre;                  // [layer][sample]
    std::vector<std::vector<std::vector<Mat>>> branch;  // [branch][layer][sample]
};

CondGradients cond_m_values(const ConditionalModel& model, const CondUnitaries& us, const CondOps& ops) {
    const std::vector<int> surviving = model.surviving_qubits();
    CondGradients g;
    g.pre.resize(us.pre.size());
    g.branch.resize(us.branches.size());
    for (std::size_t i = 0; i < us.branches.size(); ++i) g.branch[i].resize(us.branches[i].size());

    for (std::size_t x = 0; x < ops.inputs.size(); ++x) {
        const Mat pre_target = cond_pre_target(model, us, surviving, ops.targets[x]);
        std::vector<Mat> pre_ms = m_chain(us.pre, ops.inputs[x], pre_target);
        for (std::size_t l = 0; l < pre_ms.size(); ++l) g.pre[l].push_back(std::move(pre_ms[l]));

        const Mat rho1 = forward_mat(us.pre, ops.inputs[x]);
        for (std::size_t i = 0; i < us.branches.size(); ++i) {
            if (us.branches[i].empty()) continue;
            const Mat block = cond_measurement_block(rho1, model, surviving, static_cast<int>(i));
            std::vector<Mat> ms = m_chain(us.branches[i], block, ops.targets[x]);
            for (std::size_t l = 0; l < ms.size(); ++l) g.branch[i][l].push_back(std::move(ms[l]));
        }
    }
    return g;
}

} // namespace

double conditional_loss(const ConditionalModel& model, const Dataset& ds) {
    const CondOps ops = make_cond_ops(model, ds);
    return checked_loss(1.0 - cond_objective(model, cond_unitaries(model), ops));
}

double conditional_directional_derivative(const ConditionalModel& model, const Dataset& ds,
                                          std::span<const Mat> pre_directions,
                                          const std::vector<std::vector<Mat>>& branch_directions) {
    const CondOps ops = make_cond_ops(model, ds);
    const CondUnitaries us = cond_unitaries(model);
    require(pre_directions.size() == us.pre.size(), "direction count mismatch (pre)");
    require(branch_directions.size() == us.branches.size(), "direction count mismatch (branches)");
    const CondGradients g = cond_m_values(model, us, ops);
    cplx acc = 0.0;
    for (std::size_t l = 0; l < us.pre.size(); ++l) {
        if (pre_directions[l].size() == 0) continue;
        for (const Mat& m : g.pre[l]) acc += trace_of_product(m, pre_directions[l]);
    }
    for (std::size_t i = 0; i < us.branches.size(); ++i) {
        require(branch_directions[i].size() == us.branches[i].size(),
                "direction count mismatch (branch layers)");
        for (std::size_t l = 0; l < us.branches[i].size(); ++l) {
            if (branch_directions[i][l].size() == 0) continue;
            for (const Mat& m : g.branch[i][l]) acc += trace_of_product(m, branch_directions[i][l]);
        }
    }
    return std::real(cplx(0.0, 1.0) * acc) / static_cast<double>(ops.inputs.size());
}

double conditional_objective_with_direction(const ConditionalModel& model, const Dataset& ds,
                                            std::span<const Mat> pre_directions,
                                            const std::vector<std::vector<Mat>>& branch_directions,
                                            double eps) {
    const CondOps ops = make_cond_ops(model, ds);
    CondUnitaries us = cond_unitaries(model);
    for (std::size_t l = 0; l < us.pre.size(); ++l)
        if (pre_directions[l].size() != 0) us.pre[l] = hermitian_exp(pre_directions[l], eps) * us.pre[l];
    for (std::size_t i = 0; i < us.branches.size(); ++i)
        for (std::size_t l = 0; l < us.branches[i].size(); ++l)
            if (branch_directions[i][l].size() != 0)
                us.branches[i][l] = hermitian_exp(branch_directions[i][l], eps) * us.branches[i][l];
    return cond_objective(model, us, ops);
}

ConditionalTrainResult train_conditional(const ConditionalModel& model, const Dataset& train_ds,
                                         const Dataset* test_ds, const TrainingConfig& config,
                                         bool train_pre, bool train_branches) {
    config.validate();
    const auto t0 = std::chrono::steady_clock::now();
    auto wall_ms = [&t0] {
        return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    };

    ConditionalTrainResult result;
    result.model = model;
    const CondOps ops = make_cond_ops(result.model, train_ds);
    auto test_loss_of = [&](const ConditionalModel& m) {
        return test_ds ? conditional_loss(m, *test_ds) : std::nan("");
    };

    double loss = checked_loss(1.0 - cond_objective(result.model, cond_unitaries(result.model), ops));
    result.trace.rows.push_back({0, loss, test_loss_of(result.model), wall_ms()});

    for (int iter = 1; iter <= config.max_iters && loss >= config.convergence_tol; ++iter) {
        const CondUnitaries us = cond_unitaries(result.model);
        const double c_old = 1.0 - loss;
        const CondGradients g = cond_m_values(result.model, us, ops);

        std::vector<std::pair<int, GradientUpdate>> pre_updates;
        if (train_pre) {
            for (std::size_t l = 0; l < result.model.pre_circuit.layers.size(); ++l) {
                const Layer& layer = result.model.pre_circuit.layers[l];
                if (!layer_is_trainable(layer) || layer_param_count(layer, result.model.n_total()) == 0)
                    continue;
                pre_updates.emplace_back(static_cast<int>(l),
                                         update_for_layer(layer, g.pre[l], result.model.n_total(),
                                                          config.lambda, 1.0));
            }
        }
        std::vector<std::vector<std::pair<int, GradientUpdate>>> branch_updates(result.model.branches.size());
        if (train_branches) {
            for (std::size_t i = 0; i < result.model.branches.size(); ++i) {
                for (std::size_t l = 0; l < result.model.branches[i].layers.size(); ++l) {
                    const Layer& layer = result.model.branches[i].layers[l];
                    if (!layer_is_trainable(layer) ||
                        layer_param_count(layer, result.model.n_surviving()) == 0)
                        continue;
                    branch_updates[i].emplace_back(
                        static_cast<int>(l), update_for_layer(layer, g.branch[i][l],
                                                              result.model.n_surviving(), config.lambda, 1.0));
                }
            }
        }

        double eps = config.epsilon;
        bool accepted = false;
        for (int attempt = 0; attempt <= config.max_halvings && !accepted; ++attempt) {
            ConditionalModel candidate = result.model;
            for (const auto& [l, upd] : pre_updates)
                apply_update_to_layer(candidate.pre_circuit.layers[l], upd, eps, candidate.n_total());
            for (std::size_t i = 0; i < branch_updates.size(); ++i)
                for (const auto& [l, upd] : branch_updates[i])
                    apply_update_to_layer(candidate.branches[i].layers[l], upd, eps,
                                          candidate.n_surviving());
            const double c_new = cond_objective(candidate, cond_unitaries(candidate), ops);
            const double loss_new = checked_loss(1.0 - c_new);
            if (c_new > c_old) {
                result.model = std::move(candidate);
                loss = loss_new;
                accepted = true;
            } else {
                eps /= 2.0;
            }
        }
        result.trace.rows.push_back({iter, loss, test_loss_of(result.model), wall_ms()});
        if (!accepted && pre_updates.empty() &&
            std::all_of(branch_updates.begin(), branch_updates.end(),
                        [](const auto& v) { return v.empty(); }))
            break; // nothing trainable
    }
    return result;
}

double swap_test_estimate(const PureState& phi, const DensityMatrix& rho, long shots, Rng& rng) {
    require(phi.n == rho.n, "swap_test_estimate: qubit counts differ");
    require(shots >= 0, "swap_test_estimate: shots must be non-negative");
    const int n = phi.n;
    const int total = 2 * n + 1; // ancilla + |phi> register + rho register
    const int d = dim_of(total);

    Mat anc = Mat::Zero(2, 2);
    anc(0, 0) = 1.0;
    Mat joint = kron(kron(anc, phi.projector()), rho.rho);

    const int anc_qubit[1] = {0};
    const Mat h_full = embed(hadamard_2x2(), anc_qubit, total);

    // controlled swap of the two registers as a basis permutation
    auto cswap_index = [&](int b) {
        if (!(b >> (total - 1))) return b; // ancilla clear
        int out = b & (1 << (total - 1));
        for (int q = 0; q < n; ++q) {
            const int b1 = bit_of(b, 1 + q, total);
            const int b2 = bit_of(b, 1 + n + q, total);
            if (b2) out |= 1 << (total - 1 - (1 + q));
            if (b1) out |= 1 << (total - 1 - (1 + n + q));
        }
        return out;
    };
    Mat cswap = Mat::Zero(d, d);
    for (int b = 0; b < d; ++b) cswap(cswap_index(b), b) = 1.0;

    joint = h_full * joint * h_full.adjoint();
    joint = cswap * joint * cswap.adjoint();
    joint = h_full * joint * h_full.adjoint();

    double p0 = 0.0;
    for (int b = 0; b < d / 2; ++b) p0 += std::real(joint(b, b)); // ancilla bit clear
    p0 = std::clamp(p0, 0.0, 1.0);
    if (shots == 0) return p0;

    long zeros = 0;
    for (long s = 0; s < shots; ++s)
        if (rng.uniform() < p0) ++zeros;
    return static_cast<double>(zeros) / static_cast<double>(shots);
}

} // namespace dibom
