#include "dibom/expressivity.hpp"

#include "dibom/training.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <mutex>
#include <stdexcept>
#include <thread>

namespace dibom {

namespace {

void require(bool ok, const char* msg) {
    if (!ok) throw std::invalid_argument(msg);
}

/// Score s(theta) = (1/m) sum_j |<A(theta) phi_j, u_j>| with per-layer
/// prefix/suffix caching so single-layer probes are cheap.
class ScoreEvaluator {
public:
    ScoreEvaluator(Circuit circuit, std::vector<Vec> phis, std::vector<Vec> targets)
        : circuit_(std::move(circuit)), phis_(std::move(phis)), targets_(std::move(targets)) {
        offsets_.reserve(circuit_.layers.size());
        long off = 0;
        for (const Layer& layer : circuit_.layers) {
            offsets_.push_back(off);
            off += layer_param_count(layer, circuit_.n);
        }
        total_params_ = off;
    }

    long param_count() const { return total_params_; }
    const Circuit& circuit() const { return circuit_; }

    double score(const std::vector<double>& theta) {
        set_theta(theta);
        double acc = 0.0;
        for (std::size_t j = 0; j < phis_.size(); ++j) {
            Vec v = phis_[j];
            for (const Mat& u : unitaries_) v = u * v;
            acc += std::abs(cplx(v.adjoint() * targets_[j]));
        }
        return acc / static_cast<double>(phis_.size());
    }

    /// Central finite-difference gradient; probes rebuild only the layer
    /// that owns the coordinate.
    std::vector<double> gradient(const std::vector<double>& theta, double fd_eps) {
        set_theta(theta);
        const std::size_t L = circuit_.layers.size();
        // prefix[l] = layers 1..l applied to phi_j; suffix[l] = targets pulled
        // back through layers L..l+1
        std::vector<std::vector<Vec>> prefix(L + 1), suffix(L + 1);
        prefix[0] = phis_;
        for (std::size_t l = 1; l <= L; ++l) {
            prefix[l].reserve(phis_.size());
            for (const Vec& v : prefix[l - 1]) prefix[l].push_back(unitaries_[l - 1] * v);
        }
        suffix[L] = targets_;
        for (std::size_t l = L; l >= 1; --l) {
            suffix[l - 1].reserve(targets_.size());
            for (const Vec& w : suffix[l]) suffix[l - 1].push_back(unitaries_[l - 1].adjoint() * w);
        }

        std::vector<double> grad(total_params_, 0.0);
        std::vector<double> probe = theta;
        for (std::size_t l = 0; l < L; ++l) {
            const long count = layer_param_count(circuit_.layers[l], circuit_.n);
            for (long p = 0; p < count; ++p) {
                const long c = offsets_[l] + p;
                const double saved = probe[c];
                probe[c] = saved + fd_eps;
                const double up = layer_score(l, probe, prefix[l], suffix[l + 1]);
                probe[c] = saved - fd_eps;
                const double down = layer_score(l, probe, prefix[l], suffix[l + 1]);
                probe[c] = saved;
                grad[c] = (up - down) / (2.0 * fd_eps);
            }
        }
        return grad;
    }

private:
    void set_theta(const std::vector<double>& theta) {
        circuit_set_params(circuit_, theta);
        unitaries_ = circuit_layer_unitaries(circuit_);
    }

    double layer_score(std::size_t l, const std::vector<double>& theta,
                       const std::vector<Vec>& pre, const std::vector<Vec>& post) {
        Layer layer = circuit_.layers[l];
        layer_set_params(layer, theta, static_cast<std::size_t>(offsets_[l]));
        const Mat u = layer_unitary(layer, circuit_.n);
        double acc = 0.0;
        for (std::size_t j = 0; j < pre.size(); ++j)
            acc += std::abs(cplx((u * pre[j]).adjoint() * post[j]));
        return acc / static_cast<double>(pre.size());
    }

    Circuit circuit_;
    std::vector<Vec> phis_;
    std::vector<Vec> targets_;
    std::vector<long> offsets_;
    long total_params_ = 0;
    std::vector<Mat> unitaries_;
};

double maximize_score(ScoreEvaluator& eval, std::vector<double> theta, const FBEConfig& config) {
    double best = eval.score(theta);
    if (eval.param_count() == 0) return best;
    for (int iter = 0; iter < config.inner_iters; ++iter) {
        const std::vector<double> grad = eval.gradient(theta, config.fd_eps);
        double norm = 0.0;
        for (double g : grad) norm += g * g;
        if (std::sqrt(norm) < 1e-10) break;
        double step = config.step;
        bool improved = false;
        for (int attempt = 0; attempt < 6 && !improved; ++attempt) {
            std::vector<double> trial = theta;
            for (std::size_t c = 0; c < trial.size(); ++c) trial[c] += step * grad[c];
            const double s = eval.score(trial);
            if (s > best) {
                best = s;
                theta = std::move(trial);
                improved = true;
            } else {
                step /= 2.0;
            }
        }
        if (!improved) break; // greedy: never accept a worse score
    }
    return best;
}

} // namespace

void FBEConfig::validate() const {
    require(k >= 1 && m >= 1 && restarts >= 1 && inner_iters >= 1, "FBEConfig: counts must be >= 1");
    require(step > 0.0 && fd_eps > 0.0, "FBEConfig: step sizes must be positive");
    require(threads >= 1, "FBEConfig: threads must be >= 1");
}

AnsatzBuilder dibom_ansatz() {
    return [](int n, int L, std::uint64_t seed) { return build_dibom(n, L, seed); };
}

AnsatzBuilder hardware_efficient_ansatz() {
    return [](int n, int L, std::uint64_t seed) { return build_hardware_efficient(n, L, seed); };
}

AnsatzBuilder ising_born_machine_ansatz() {
    return [](int n, int, std::uint64_t seed) { return build_ising_born_machine(n, seed); };
}

AnsatzBuilder general_unitary_ansatz() {
    return [](int n, int, std::uint64_t seed) {
        Circuit c;
        c.n = n;
        c.layers = {Layer{build_general_unitary_layer(n, seed)}};
        return c;
    };
}

FBEResult fbe_upper_bound(const AnsatzBuilder& architecture, int n, int L, const FBEConfig& config) {
    config.validate();
    require(static_cast<bool>(architecture), "fbe_upper_bound: missing architecture builder");

    // shared state sample, independent of k
    Rng state_rng = Rng(config.seed).derive(0x57a7e);
    std::vector<Vec> phis;
    phis.reserve(config.m);
    for (int j = 0; j < config.m; ++j) phis.push_back(haar_state(n, state_rng).amps);

    FBEResult result;
    result.scores.assign(config.k, 0.0);

    std::atomic<int> next{0};
    std::exception_ptr worker_error;
    std::mutex error_mutex;
    auto worker_body = [&] {
        for (int i = next.fetch_add(1); i < config.k; i = next.fetch_add(1)) {
            Rng u_rng(derive_seed(config.seed, 0x1000u + static_cast<std::uint64_t>(i)));
            const Mat u = haar_unitary(dim_of(n), u_rng);
            std::vector<Vec> targets;
            targets.reserve(phis.size());
            for (const Vec& phi : phis) targets.push_back(u * phi);

            double best = 0.0;
            for (int r = 0; r < config.restarts; ++r) {
                const std::uint64_t init_seed =
                    derive_seed(config.seed, 0x2000000u + static_cast<std::uint64_t>(i) * 1000u +
                                                 static_cast<std::uint64_t>(r));
                ScoreEvaluator eval(architecture(n, L, init_seed), phis, targets);
                const double s = maximize_score(eval, circuit_get_params(eval.circuit()), config);
                if (!std::isfinite(s)) throw NumericalError("fbe: non-finite objective");
                best = std::max(best, s);
            }
            result.scores[i] = best;
        }
    };
    auto worker = [&] {
        try {
            worker_body();
        } catch (...) {
            std::scoped_lock lock(error_mutex);
            if (!worker_error) worker_error = std::current_exception();
            next.store(config.k); // stop remaining work
        }
    };

    if (config.threads <= 1 || config.k == 1) {
        worker_body();
    } else {
        std::vector<std::thread> pool;
        const int nthreads = std::min(config.threads, config.k);
        pool.reserve(nthreads);
        for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
        if (worker_error) std::rethrow_exception(worker_error);
    }

    result.argmin = 0;
    for (int i = 1; i < config.k; ++i)
        if (result.scores[i] < result.scores[result.argmin]) result.argmin = i;
    result.estimate = result.scores[result.argmin];
    return result;
}

std::vector<FrontierPoint> frontier(int n, std::span<const int> layer_grid, const FBEConfig& config,
                                    const AnsatzBuilder& architecture) {
    require(!layer_grid.empty(), "frontier: empty layer grid");
    std::vector<FrontierPoint> points;

    FrontierPoint zero;
    zero.params = 0;
    zero.log10_params = -std::numeric_limits<double>::infinity();
    zero.fbe = 0.0;
    zero.analytic = true;
    points.push_back(zero);

    for (int L : layer_grid) {
        const auto t0 = std::chrono::steady_clock::now();
        FrontierPoint p;
        p.L = L;
        p.params = count_parameters(ModelKind{ModelKind::Tag::DIBoM, {}}, n, L);
        p.log10_params = std::log10(static_cast<double>(std::max<std::int64_t>(p.params, 1)));
        p.fbe = fbe_upper_bound(architecture, n, L, config).estimate;
        p.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        points.push_back(p);
    }

    if (n == 3) {
        FrontierPoint one;
        one.L = 2241;
        one.params = 13449;
        one.log10_params = std::log10(13449.0);
        one.fbe = 1.0;
        one.analytic = true;
        points.push_back(one);
    }
    return points;
}

} // namespace dibom
