#include "dibom/experiments.hpp"
#include "dibom/training.hpp"

#include <doctest.h>

#include <cmath>

using namespace dibom;

namespace {

Mat random_hermitian(int dim, Rng& rng) {
    Mat m(dim, dim);
    for (int r = 0; r < dim; ++r)
        for (int c = 0; c < dim; ++c) m(r, c) = cplx(rng.normal(), rng.normal());
    return ((m + m.adjoint()) / 2.0).eval();
}

/// Commutator-shaped sample kernel: anti-Hermitian and traceless, like the
/// M values produced from forward/backward chains.
Mat random_m_value(int dim, Rng& rng) {
    return commutator(random_hermitian(dim, rng), random_hermitian(dim, rng));
}

TrainableModel aligned_model(const Dataset& ds, int L) {
    TrainableModel m;
    m.kind.tag = ModelKind::Tag::DIBoM;
    m.circuit = aligned_dibom(ds.provenance, ds.n_in, L);
    return m;
}

/// Family-consistent random direction for one layer.
Mat random_direction(const Layer& layer, int n, Rng& rng) {
    if (const auto* sq = std::get_if<SingleQubitRotation>(&layer)) {
        const int qs[1] = {sq->target};
        return embed(random_hermitian(2, rng), qs, n);
    }
    if (std::holds_alternative<ProductRotationLayer>(layer)) {
        Mat k = Mat::Zero(dim_of(n), dim_of(n));
        for (int q = 0; q < n; ++q) {
            const int qs[1] = {q};
            k += embed(random_hermitian(2, rng), qs, n);
        }
        return k;
    }
    if (std::holds_alternative<GeneralizedCZLayer>(layer)) {
        Mat k = Mat::Zero(dim_of(n), dim_of(n));
        Mat proj = Mat::Zero(4, 4);
        proj(3, 3) = 1.0;
        for (int j = 0; j < n; ++j)
            for (int kk = j + 1; kk < n; ++kk) {
                const int qs[2] = {j, kk};
                k += rng.normal() * embed(proj, qs, n);
            }
        return k;
    }
    return random_hermitian(dim_of(n), rng);
}

} // namespace

TEST_CASE("global loss") {
    Dataset ds = gen_dataset({IntrinsicKind::SingleQubitTimesGCZ, 1}, 2, 8, 5);

    // the aligned model realizes the intrinsic exactly
    CHECK(global_loss(aligned_model(ds, 3), ds) < 1e-12);

    // identity model on an orthogonal-label dataset has loss 1
    Dataset flip;
    flip.n_in = 1;
    flip.n_out = 1;
    flip.provenance.intrinsic_unitary = pauli(1);
    flip.pairs = {{PureState::basis(1, 0), PureState::basis(1, 1)},
                  {PureState::basis(1, 1), PureState::basis(1, 0)}};
    TrainableModel id_model;
    id_model.kind.tag = ModelKind::Tag::DIBoM;
    id_model.circuit = Circuit{1, {}};
    CHECK(global_loss(id_model, flip) == doctest::Approx(1.0));

    // direct per-sample evaluation oracle
    TrainableModel model = make_model(ModelKind{ModelKind::Tag::DIBoM, {}}, 2, 4, 9);
    double oracle = 0.0;
    for (const auto& [in, label] : ds.pairs) {
        DensityMatrix out = model_forward(model, DensityMatrix::from_pure(in));
        oracle += std::real((label.amps.adjoint() * out.rho * label.amps)(0));
    }
    oracle = 1.0 - oracle / static_cast<double>(ds.size());
    CHECK(std::abs(global_loss(model, ds) - oracle) < 1e-12);

    // the mixed-label variant agrees on pure labels
    std::vector<DensityMatrix> ins, labels;
    for (const auto& [in, label] : ds.pairs) {
        ins.push_back(DensityMatrix::from_pure(in));
        labels.push_back(DensityMatrix::from_pure(label));
    }
    CHECK(std::abs(global_loss_mixed(model, ins, labels) - global_loss(model, ds)) < 1e-8);

    CHECK_THROWS_AS(global_loss(model, Dataset{2, 2, {}, {}}), std::invalid_argument);
}

TEST_CASE("local loss") {
    Dataset ds = gen_dataset({IntrinsicKind::ProductThenGCZ, 1}, 3, 6, 5, true);

    CHECK(local_loss(aligned_model(ds, 2), ds) < 1e-12);

    // single-qubit case coincides with the global loss
    Dataset ds1 = gen_dataset({IntrinsicKind::HaarRandom, 1}, 1, 6, 3, true);
    TrainableModel m1 = make_model(ModelKind{ModelKind::Tag::DIBoM, {}}, 1, 1, 2);
    CHECK(std::abs(local_loss(m1, ds1) - global_loss(m1, ds1)) < 1e-12);

    // per-qubit partial-trace expansion oracle on the reversed state
    TrainableModel model = make_model(ModelKind{ModelKind::Tag::DIBoM, {}}, 3, 2, 8);
    const Mat u = circuit_unitary(model.circuit);
    double oracle = 0.0;
    for (const auto& [in, label] : ds.pairs) {
        const Mat reversed = u.adjoint() * label.projector() * u;
        for (int y = 0; y < 3; ++y) {
            const int keep[1] = {y};
            const Mat marg_in = partial_trace_mat(in.projector(), 3, keep);
            const Mat marg_rev = partial_trace_mat(reversed, 3, keep);
            oracle += std::real((marg_in * marg_rev).trace());
        }
    }
    oracle = 1.0 - oracle / (3.0 * static_cast<double>(ds.size()));
    CHECK(std::abs(local_loss(model, ds) - oracle) < 1e-10);

    // non-product input is rejected
    Dataset entangled = gen_dataset({IntrinsicKind::HaarRandom, 1}, 2, 4, 5, false);
    TrainableModel m2 = make_model(ModelKind{ModelKind::Tag::DIBoM, {}}, 2, 2, 2);
    CHECK_THROWS_AS(local_loss(m2, entangled), std::invalid_argument);
}

TEST_CASE("compute_M basics") {
    // L = 1 with U = I collapses to [rho_0, |phi><phi|]
    Dataset ds = gen_dataset({IntrinsicKind::HaarRandom, 1}, 2, 3, 5);
    TrainableModel id_model;
    id_model.kind.tag = ModelKind::Tag::DIBoM;
    ProductRotationLayer idp;
    idp.alphas.assign(2, {0.0, 0.0, 0.0});
    id_model.circuit = Circuit{2, {Layer{idp}}};
    const auto& [in, label] = ds.pairs[0];
    const Mat m = compute_M(id_model, in, label, LossKind::Global, 1);
    CHECK(max_abs_diff(m, commutator(in.projector(), label.projector())) < 1e-12);

    // anti-Hermitian within 1e-10
    TrainableModel model = make_model(ModelKind{ModelKind::Tag::DIBoM, {}}, 2, 4, 9);
    for (int l = 1; l <= 4; ++l) {
        const Mat ml = compute_M(model, in, label, LossKind::Global, l);
        CHECK((ml + ml.adjoint().eval()).cwiseAbs().maxCoeff() < 1e-10);
    }
}

TEST_CASE("analytic gradient matches central finite differences") {
    Rng rng(77);
    Dataset ds = gen_dataset({IntrinsicKind::HaarRandom, 1}, 3, 5, 2);
    const double fd_eps = 1e-6;

    auto check_circuit = [&](Circuit circuit) {
        TrainableModel model;
        model.kind.tag = ModelKind::Tag::DIBoM;
        model.circuit = std::move(circuit);
        std::vector<Mat> dirs;
        for (const Layer& layer : model.circuit.layers)
            dirs.push_back(random_direction(layer, 3, rng));
        const double analytic = directional_derivative(model, ds, LossKind::Global, dirs);
        const double fd = (objective_with_direction(model, ds, LossKind::Global, dirs, fd_eps) -
                           objective_with_direction(model, ds, LossKind::Global, dirs, -fd_eps)) /
                          (2.0 * fd_eps);
        CHECK(std::abs(analytic - fd) / std::max({std::abs(analytic), std::abs(fd), 1e-12}) < 1e-6);
    };

    for (int trial = 0; trial < 4; ++trial) {
        check_circuit(build_dibom(3, 3, 100 + trial));
        Circuit single;
        single.n = 3;
        single.layers = {Layer{SingleQubitRotation{int(rng.uniform_index(3)),
                                                   {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0),
                                                    rng.uniform(-1.0, 1.0)}}}};
        check_circuit(single);
        Circuit general;
        general.n = 3;
        general.layers = {Layer{build_general_unitary_layer(3, 200 + trial)}};
        check_circuit(general);
    }

    // local loss gradient through the reversed chain
    Dataset pds = gen_dataset({IntrinsicKind::ProductThenGCZ, 1}, 3, 5, 2, true);
    TrainableModel model = make_model(ModelKind{ModelKind::Tag::DIBoM, {}}, 3, 2, 31);
    std::vector<Mat> dirs;
    for (const Layer& layer : model.circuit.layers) dirs.push_back(random_direction(layer, 3, rng));
    const double analytic = directional_derivative(model, pds, LossKind::Local, dirs);
    const double fd = (objective_with_direction(model, pds, LossKind::Local, dirs, fd_eps) -
                       objective_with_direction(model, pds, LossKind::Local, dirs, -fd_eps)) /
                      (2.0 * fd_eps);
    CHECK(std::abs(analytic - fd) / std::max(std::abs(fd), 1e-12) < 1e-6);
}

TEST_CASE("k_update closed forms") {
    Rng rng(55);
    const int n = 3;
    std::vector<Mat> zero_ms = {Mat::Zero(8, 8), Mat::Zero(8, 8)};
    CHECK(k_update_single(zero_ms, n, 1, 0.5).generator.cwiseAbs().maxCoeff() == 0.0);
    CHECK(k_update_product(zero_ms, n, 0.5).generator.cwiseAbs().maxCoeff() == 0.0);
    CHECK(k_update_gcz(zero_ms, n, 0.5).generator.cwiseAbs().maxCoeff() == 0.0);
    CHECK(k_update_general(zero_ms, n, 0.5).generator.cwiseAbs().maxCoeff() == 0.0);

    // anti-Hermitian sample Ms, as produced by commutators
    std::vector<Mat> ms;
    for (int x = 0; x < 4; ++x) ms.push_back(random_m_value(8, rng));

    // doubling lambda halves K exactly
    const GradientUpdate k1 = k_update_single(ms, n, 0, 0.5);
    const GradientUpdate k2 = k_update_single(ms, n, 0, 1.0);
    CHECK(max_abs_diff(k1.generator, (2.0 * k2.generator).eval()) < 1e-12);
    const GradientUpdate g1 = k_update_general(ms, n, 0.5);
    const GradientUpdate g2 = k_update_general(ms, n, 1.0);
    CHECK(max_abs_diff(g1.generator, (2.0 * g2.generator).eval()) < 1e-12);

    // every K is Hermitian
    for (const GradientUpdate& u :
         {k_update_single(ms, n, 1, 0.5), k_update_product(ms, n, 0.5), k_update_gcz(ms, n, 0.5),
          k_update_general(ms, n, 0.5)}) {
        CHECK(hermiticity_defect(u.generator) < 1e-10);
        for (double c : u.coefficients) CHECK(std::isfinite(c));
    }

    // gcz coefficients are real contractions of anti-Hermitian Ms
    const GradientUpdate gcz = k_update_gcz(ms, n, 0.5);
    for (int j = 0; j < n; ++j)
        for (int k = j + 1; k < n; ++k) {
            const int keep[2] = {j, k};
            const Mat m4 = partial_trace_mat((ms[0] + ms[1] + ms[2] + ms[3]).eval(), n, keep);
            CHECK(std::abs(std::imag(cplx(0, 1) * m4(3, 3))) < 1e-10);
        }

    // n = 1: product and general reduce to the single-qubit form
    std::vector<Mat> ms1;
    for (int x = 0; x < 3; ++x) ms1.push_back(random_m_value(2, rng));
    const Mat ks = k_update_single(ms1, 1, 0, 0.5).generator;
    CHECK(max_abs_diff(k_update_product(ms1, 1, 0.5).generator, ks) < 1e-12);
    CHECK(max_abs_diff(k_update_general(ms1, 1, 0.5).generator, ks) < 1e-12);
}

TEST_CASE("k_update_single maximizes the regularized objective") {
    // C_2(K) = i tr(sum M K)/N - lambda sum_a K_a^2 over single-qubit K
    Rng rng(61);
    const int n = 2;
    std::vector<Mat> ms;
    for (int x = 0; x < 3; ++x) ms.push_back(random_m_value(4, rng));
    const double lambda = 0.5;
    const GradientUpdate best = k_update_single(ms, n, 0, lambda);

    Mat m_sum = Mat::Zero(4, 4);
    for (const Mat& m : ms) m_sum += m;
    auto c2_of = [&](const Mat& k_full, const std::vector<double>& coeffs) {
        double quad = 0.0;
        for (double c : coeffs) quad += c * c;
        const double lin = std::real(cplx(0, 1) * (m_sum * k_full).trace()) / double(ms.size());
        return lin - lambda * quad;
    };
    const double best_c2 = c2_of(best.generator, best.coefficients);
    double norm = 0.0;
    for (double c : best.coefficients) norm += c * c;
    norm = std::sqrt(norm);

    for (int trial = 0; trial < 1000; ++trial) {
        // random single-qubit K of the same coefficient norm
        std::array<double, 3> c{rng.normal(), rng.normal(), rng.normal()};
        double cn = std::sqrt(c[0] * c[0] + c[1] * c[1] + c[2] * c[2]);
        for (double& v : c) v *= norm / cn;
        Mat k2 = Mat::Zero(2, 2);
        for (int a = 0; a < 3; ++a) k2 += c[a] * pauli(a + 1);
        const int qs[1] = {0};
        CHECK(c2_of(embed(k2, qs, n), {c[0], c[1], c[2]}) <= best_c2 + 1e-12);
    }
}

TEST_CASE("k_update family closure") {
    Rng rng(67);
    const int n = 3;
    std::vector<Mat> ms;
    for (int x = 0; x < 4; ++x) ms.push_back(random_m_value(8, rng));
    const double eps = 0.37;

    // product layers stay Kronecker-factorizable
    ProductRotationLayer prod;
    prod.alphas.resize(n);
    for (auto& t : prod.alphas)
        for (auto& a : t) a = rng.uniform(-M_PI, M_PI);
    const Mat before = layer_unitary(Layer{prod}, n);
    const GradientUpdate kp = k_update_product(ms, n, 0.5);
    Layer updated = prod;
    apply_update_to_layer(updated, kp, eps, n);
    const Mat stepped = layer_unitary(updated, n);
    CHECK(max_abs_diff(stepped, hermitian_exp(kp.generator, eps) * before) < 1e-10);

    // generalized-CZ layers stay inside the beta family
    GeneralizedCZLayer gcz;
    gcz.betas = {rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0)};
    const Mat gcz_before = layer_unitary(Layer{gcz}, n);
    const GradientUpdate kg = k_update_gcz(ms, n, 0.5);
    Layer gcz_updated = gcz;
    apply_update_to_layer(gcz_updated, kg, eps, n);
    CHECK(std::holds_alternative<GeneralizedCZLayer>(gcz_updated));
    CHECK(max_abs_diff(layer_unitary(gcz_updated, n), hermitian_exp(kg.generator, eps) * gcz_before) <
          1e-12);

    // general layers refit through the Hermitian log
    GeneralUnitaryLayer gen = build_general_unitary_layer(n, 5);
    const Mat gen_before = layer_unitary(Layer{gen}, n);
    const GradientUpdate kgen = k_update_general(ms, n, 0.5);
    Layer gen_updated = gen;
    apply_update_to_layer(gen_updated, kgen, eps, n);
    CHECK(max_abs_diff(layer_unitary(gen_updated, n), hermitian_exp(kgen.generator, eps) * gen_before) <
          1e-9);
}

TEST_CASE("k_update_general is an ascent direction") {
    // step-halving verification oracle: C(s + eps) >= C(s) for small eps
    Rng rng(71);
    for (int trial = 0; trial < 5; ++trial) {
        Dataset ds = gen_dataset({IntrinsicKind::HaarRandom, 1}, 2, 5, 400 + trial);
        TrainableModel model;
        model.kind.tag = ModelKind::Tag::DIBoM;
        model.circuit = Circuit{2, {Layer{build_general_unitary_layer(2, 500 + trial)}}};
        std::vector<Mat> ms;
        for (const auto& [in, label] : ds.pairs)
            ms.push_back(compute_M(model, in, label, LossKind::Global, 1));
        const GradientUpdate upd = k_update_general(ms, 2, 0.5);
        const std::vector<Mat> dirs = {upd.generator};
        const double c0 = objective_with_direction(model, ds, LossKind::Global, dirs, 0.0);
        double eps = 0.1;
        bool improved = false;
        for (int h = 0; h < 20 && !improved; ++h, eps /= 2.0)
            improved = objective_with_direction(model, ds, LossKind::Global, dirs, eps) >= c0;
        const double k_norm = upd.generator.norm();
        CHECK((improved || k_norm < 1e-9));
    }
}

TEST_CASE("train_step") {
    Dataset ds = gen_dataset({IntrinsicKind::SingleQubitTimesGCZ, 1}, 2, 8, 5);
    TrainingConfig cfg;

    // at the optimum the step leaves the model unchanged and K vanishes
    TrainableModel opt = aligned_model(ds, 3);
    auto [stepped, loss] = train_step(opt, ds, cfg);
    CHECK(loss < 1e-12);
    std::vector<double> before = circuit_get_params(opt.circuit);
    std::vector<double> after = circuit_get_params(stepped.circuit);
    for (std::size_t i = 0; i < before.size(); ++i) CHECK(std::abs(before[i] - after[i]) < 1e-10);
    for (const auto& [in, label] : ds.pairs)
        CHECK(compute_M(opt, in, label, LossKind::Global, 2).cwiseAbs().maxCoeff() < 1e-9);

    // single-parameter model: step direction matches the descent direction
    TrainableModel single;
    single.kind.tag = ModelKind::Tag::DIBoM;
    single.circuit = Circuit{2, {Layer{GeneralizedCZLayer{{0.37}}}}};
    const double grad = finite_diff_grad_central(single, ds, LossKind::Global, 0, 1e-6);
    auto [stepped1, loss1] = train_step(single, ds, cfg);
    const double delta = circuit_get_params(stepped1.circuit)[0] - 0.37;
    if (std::abs(grad) > 1e-8) CHECK(delta * grad < 0.0);
    CHECK(loss1 <= global_loss(single, ds) + 1e-15);

    // loss sequence is non-increasing over a run
    TrainableModel model = make_model(ModelKind{ModelKind::Tag::DIBoM, {}}, 2, 3, 4);
    cfg.max_iters = 40;
    cfg.convergence_tol = 1e-15;
    TrainResult result = train(model, ds, nullptr, cfg);
    for (std::size_t i = 1; i < result.trace.rows.size(); ++i)
        CHECK(result.trace.rows[i].train_loss <= result.trace.rows[i - 1].train_loss + 1e-15);
}

TEST_CASE("train loop variants") {
    Dataset full = gen_dataset({IntrinsicKind::SingleQubitTimesGCZ, 1}, 2, 16, 5);
    auto [train_ds, test_ds] = split(full, 0.5, 3);
    TrainingConfig cfg;
    cfg.max_iters = 150;
    cfg.convergence_tol = 1e-10;

    // zero-layer model yields a constant trace
    TrainableModel empty;
    empty.kind.tag = ModelKind::Tag::DIBoM;
    empty.circuit = Circuit{2, {}};
    TrainResult r0 = train(empty, train_ds, &test_ds, cfg);
    for (const TraceRow& row : r0.trace.rows) CHECK(row.train_loss == r0.trace.rows[0].train_loss);

    // simultaneous training converges on the structured task
    TrainableModel model = make_model(ModelKind{ModelKind::Tag::DIBoM, {}}, 2, 3, 1);
    TrainResult sim = train(model, train_ds, &test_ds, cfg);
    CHECK(sim.trace.final_train_loss() < 1e-3);

    // layer-by-layer is never better on the matched run
    TrainingConfig lbl_cfg = cfg;
    lbl_cfg.method = TrainMethod::LayerByLayer;
    TrainResult lbl = train(model, train_ds, &test_ds, lbl_cfg);
    CHECK(lbl.trace.final_train_loss() >= sim.trace.final_train_loss() - 1e-12);

    // deterministic: identical runs give bit-identical loss sequences
    TrainResult sim2 = train(model, train_ds, &test_ds, cfg);
    REQUIRE(sim2.trace.rows.size() == sim.trace.rows.size());
    for (std::size_t i = 0; i < sim.trace.rows.size(); ++i) {
        CHECK(sim.trace.rows[i].train_loss == sim2.trace.rows[i].train_loss);
        CHECK(sim.trace.rows[i].test_loss == sim2.trace.rows[i].test_loss);
    }

    // losses stay within [0, 1 + 1e-9]
    for (const TraceRow& row : sim.trace.rows) {
        CHECK(row.train_loss >= 0.0);
        CHECK(row.train_loss <= 1.0 + 1e-9);
        CHECK(row.test_loss <= 1.0 + 1e-9);
    }

    // the randomized layer schedule stays monotone and deterministic
    TrainingConfig rnd_cfg = lbl_cfg;
    rnd_cfg.random_layer_order = true;
    rnd_cfg.max_iters = 40;
    TrainResult rnd1 = train(model, train_ds, &test_ds, rnd_cfg);
    TrainResult rnd2 = train(model, train_ds, &test_ds, rnd_cfg);
    for (std::size_t i = 1; i < rnd1.trace.rows.size(); ++i)
        CHECK(rnd1.trace.rows[i].train_loss <= rnd1.trace.rows[i - 1].train_loss + 1e-15);
    for (std::size_t i = 0; i < rnd1.trace.rows.size(); ++i)
        CHECK(rnd1.trace.rows[i].train_loss == rnd2.trace.rows[i].train_loss);

    // Nesterov mode runs in flat parameter coordinates
    TrainingConfig nes = cfg;
    nes.method = TrainMethod::Nesterov;
    nes.max_iters = 30;
    nes.eta = 0.2;
    TrainResult rn = train(model, train_ds, &test_ds, nes);
    CHECK(rn.trace.rows.size() == 31);
    CHECK(rn.trace.final_train_loss() < rn.trace.rows[0].train_loss);

    // non-finite parameters abort with the numerical error
    TrainableModel broken = model;
    std::vector<double> params = circuit_get_params(broken.circuit);
    params[0] = std::nan("");
    circuit_set_params(broken.circuit, params);
    CHECK_THROWS_AS(global_loss(broken, train_ds), NumericalError);

    TrainingConfig bad;
    bad.lambda = 0.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("finite_diff_grad") {
    Dataset ds = gen_dataset({IntrinsicKind::SingleQubitTimesGCZ, 1}, 2, 8, 5);

    // constant region: zero gradient at the optimum
    TrainableModel opt = aligned_model(ds, 3);
    CHECK(std::abs(finite_diff_grad(opt, ds, LossKind::Global, 0, 1e-6)) < 1e-5);

    // backward difference approaches the central one as eps shrinks
    TrainableModel model = make_model(ModelKind{ModelKind::Tag::DIBoM, {}}, 2, 3, 4);
    const double central = finite_diff_grad_central(model, ds, LossKind::Global, 2, 1e-6);
    const double backward_coarse = finite_diff_grad(model, ds, LossKind::Global, 2, 1e-3);
    const double backward_fine = finite_diff_grad(model, ds, LossKind::Global, 2, 1e-6);
    CHECK(std::abs(backward_fine - central) < std::abs(backward_coarse - central) + 1e-9);
    CHECK(std::abs(backward_fine - central) < 1e-4);

    // beta coordinate: the analytic tr(M K) form matches the central
    // difference (moving beta by delta applies K = -pi |11><11|)
    TrainableModel single;
    single.kind.tag = ModelKind::Tag::DIBoM;
    single.circuit = Circuit{2, {Layer{GeneralizedCZLayer{{0.4}}}}};
    Mat proj = Mat::Zero(4, 4);
    proj(3, 3) = 1.0;
    std::vector<Mat> dirs = {(-M_PI * proj).eval()};
    const double analytic_dc = directional_derivative(single, ds, LossKind::Global, dirs);
    const double fd_loss = finite_diff_grad_central(single, ds, LossKind::Global, 0, 1e-6);
    CHECK(std::abs(-analytic_dc - fd_loss) / std::max(std::abs(fd_loss), 1e-12) < 1e-6);

    CHECK_THROWS_AS(finite_diff_grad(model, ds, LossKind::Global, 999, 1e-6), std::invalid_argument);
}

TEST_CASE("conditional training") {
    Dataset ds = gen_dataset({IntrinsicKind::TeleportationTask, 1}, 1, 12, 7);
    TrainingConfig cfg;
    cfg.max_iters = 50;

    // with exact branches frozen and the pre-circuit at the optimum the
    // loss stays put
    ConditionalModel exact = teleport_model();
    const double loss0 = conditional_loss(exact, ds);
    CHECK(loss0 < 1e-9);
    ConditionalTrainResult frozen = train_conditional(exact, ds, nullptr, cfg, true, false);
    CHECK(frozen.trace.final_train_loss() < 1e-6);

    // loss is monotone and within bounds
    ConditionalModel learner = teleport_training_model(3, true);
    ConditionalTrainResult run = train_conditional(learner, ds, nullptr, cfg);
    for (std::size_t i = 1; i < run.trace.rows.size(); ++i) {
        CHECK(run.trace.rows[i].train_loss <= run.trace.rows[i - 1].train_loss + 1e-15);
        CHECK(run.trace.rows[i].train_loss >= 0.0);
        CHECK(run.trace.rows[i].train_loss <= 1.0 + 1e-9);
    }

    // conditional gradient matches finite differences
    Rng rng(17);
    std::vector<Mat> pre_dirs;
    for (const Layer& layer : learner.pre_circuit.layers)
        pre_dirs.push_back(random_direction(layer, 3, rng));
    std::vector<std::vector<Mat>> branch_dirs(4);
    for (auto& v : branch_dirs) v.push_back(random_hermitian(2, rng));
    const double analytic = conditional_directional_derivative(learner, ds, pre_dirs, branch_dirs);
    const double eps = 1e-6;
    const double fd =
        (conditional_objective_with_direction(learner, ds, pre_dirs, branch_dirs, eps) -
         conditional_objective_with_direction(learner, ds, pre_dirs, branch_dirs, -eps)) /
        (2.0 * eps);
    CHECK(std::abs(analytic - fd) / std::max(std::abs(fd), 1e-12) < 1e-5);
}

TEST_CASE("conditional training with permuted measured qubits") {
    // measured = {2, 0}: the first listed qubit is the most significant
    // outcome bit; gradients must agree with finite differences under the
    // permuted bookkeeping too
    ConditionalModel m;
    m.n_input = 2;
    m.n_ancilla = 1;
    m.measured = {2, 0};
    m.pre_circuit = build_dibom(3, 3, 41);
    for (int i = 0; i < 4; ++i) {
        Circuit b;
        b.n = 1;
        Rng r(derive_seed(41, 0x50 + i));
        b.layers = {Layer{SingleQubitRotation{
            0, {r.uniform(-M_PI, M_PI), r.uniform(-M_PI, M_PI), r.uniform(-M_PI, M_PI)}}}};
        m.branches.push_back(std::move(b));
    }

    Dataset ds;
    ds.n_in = 2;
    ds.n_out = 1;
    Rng srng(43);
    for (int i = 0; i < 5; ++i)
        ds.pairs.emplace_back(haar_state(2, srng), haar_state(1, srng));

    CHECK(conditional_loss(m, ds) >= 0.0);
    DensityMatrix out = conditional_forward(m, DensityMatrix::from_pure(ds.pairs[0].first));
    CHECK(std::abs(out.rho.trace() - cplx(1.0)) < 1e-9);

    Rng rng(47);
    std::vector<Mat> pre_dirs;
    for (const Layer& layer : m.pre_circuit.layers) pre_dirs.push_back(random_direction(layer, 3, rng));
    std::vector<std::vector<Mat>> branch_dirs(4);
    for (auto& v : branch_dirs) v.push_back(random_hermitian(2, rng));
    const double analytic = conditional_directional_derivative(m, ds, pre_dirs, branch_dirs);
    const double eps = 1e-6;
    const double fd = (conditional_objective_with_direction(m, ds, pre_dirs, branch_dirs, eps) -
                       conditional_objective_with_direction(m, ds, pre_dirs, branch_dirs, -eps)) /
                      (2.0 * eps);
    CHECK(std::abs(analytic - fd) / std::max(std::abs(fd), 1e-12) < 1e-5);

    // training still descends
    TrainingConfig cfg;
    cfg.max_iters = 60;
    ConditionalTrainResult run = train_conditional(m, ds, nullptr, cfg);
    CHECK(run.trace.final_train_loss() <= run.trace.rows[0].train_loss);
}

TEST_CASE("swap test") {
    Rng rng(23);
    PureState phi = haar_state(2, rng);
    CHECK(swap_test_estimate(phi, DensityMatrix::from_pure(phi), 0, rng) ==
          doctest::Approx(1.0).epsilon(1e-10));

    DensityMatrix zero = DensityMatrix::from_pure(PureState::basis(1, 0));
    PureState one = PureState::basis(1, 1);
    CHECK(swap_test_estimate(one, zero, 0, rng) == doctest::Approx(0.5).epsilon(1e-10));

    // exact mode equals (1 + <phi|rho|phi>)/2
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 1 + int(rng.uniform_index(2));
        PureState p = haar_state(n, rng);
        Mat mix = 0.7 * haar_state(n, rng).projector() + 0.3 * haar_state(n, rng).projector();
        DensityMatrix rho(n, std::move(mix));
        const double direct = (1.0 + std::real((p.amps.adjoint() * rho.rho * p.amps)(0))) / 2.0;
        CHECK(std::abs(swap_test_estimate(p, rho, 0, rng) - direct) < 1e-10);
    }

    // sampling concentrates around the exact value
    PureState a = haar_state(2, rng);
    DensityMatrix b = DensityMatrix::from_pure(haar_state(2, rng));
    const double p0 = swap_test_estimate(a, b, 0, rng);
    const long shots = 20000;
    const double est = swap_test_estimate(a, b, shots, rng);
    const double se = std::sqrt(p0 * (1.0 - p0) / double(shots));
    CHECK(std::abs(est - p0) < 4.0 * se);

    CHECK_THROWS_AS(swap_test_estimate(a, zero, 0, rng), std::invalid_argument);
}

TEST_CASE("trace metrics") {
    TrainTrace trace;
    trace.rows = {{0, 0.5, 0.5, 0.0}, {1, 0.5, 0.5, 1.0}, {2, 0.49999999, 0.5, 2.0},
                  {3, 0.2, 0.2, 3.0},  {4, 0.009, 0.01, 4.0}};
    CHECK(trace.iters_to_threshold(1e-2) == 4);
    CHECK(trace.iters_to_threshold(1e-9) == 5);
    CHECK(trace.longest_flat_run() == 2);
    CHECK(trace.final_train_loss() == 0.009);
}
