#pragma once

// Fidelity-based expressivity (FBE): a sampled minimax upper bound on
// min_{U,phi} max_theta |<phi| A(theta)^dag U |phi>|.

#include "dibom/network.hpp"

#include <functional>

namespace dibom {

struct FBEConfig {
    int k = 100;         // random unitaries
    int m = 10;          // random pure states, shared across unitaries
    int restarts = 3;
    int inner_iters = 25;
    std::uint64_t seed = 0;
    double step = 0.05;  // ascent step on theta
    double fd_eps = 1e-4;
    int threads = 1;

    void validate() const;
};

struct FBEResult {
    double estimate = 0.0;        // min_i of the maximized scores
    std::vector<double> scores;   // maximized s_i per unitary
    int argmin = 0;
};

/// Builds one member of the architecture family with seeded initial
/// parameters; the flat parameter vector of the returned circuit is theta.
using AnsatzBuilder = std::function<Circuit(int n, int L, std::uint64_t seed)>;

AnsatzBuilder dibom_ansatz();
AnsatzBuilder hardware_efficient_ansatz();
AnsatzBuilder ising_born_machine_ansatz();
AnsatzBuilder general_unitary_ansatz();

/// For each of k Haar unitaries, maximizes
/// s_i(theta) = (1/m) sum_j |<phi_j| A(theta)^dag U_i phi_j>| by greedy
/// finite-difference ascent over restarts, then returns min_i. Greedy
/// acceptance makes the result monotone non-decreasing in inner_iters;
/// per-index random streams make it stable under extending k or restarts
/// and independent of the thread schedule.
FBEResult fbe_upper_bound(const AnsatzBuilder& architecture, int n, int L, const FBEConfig& config);

struct FrontierPoint {
    int L = 0;               // 0 for analytic anchor rows
    std::int64_t params = 0;
    double log10_params = 0.0;
    double fbe = 0.0;
    double seconds = 0.0;
    bool analytic = false;
};

/// FBE against parameter count over a layer grid, with the analytic
/// anchors (0 params, FBE 0) and, for n = 3, (13449 params, FBE 1).
std::vector<FrontierPoint> frontier(int n, std::span<const int> layer_grid, const FBEConfig& config,
                                    const AnsatzBuilder& architecture = dibom_ansatz());

} // namespace dibom
