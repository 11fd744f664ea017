#pragma once

// Experiment runners: each figure-class experiment is driven by a config
// document and emits CSV artifacts plus a meta.json that echoes everything
// needed to reproduce the run.

#include "dibom/expressivity.hpp"
#include "dibom/serialize.hpp"

#include <filesystem>

namespace dibom {

inline constexpr const char* kArtifactVersion = "1.0.0";

/// Config document rejected before any compute starts (CLI exit code 2).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct RunContext {
    std::filesystem::path out_dir = "runs";
    int threads = 1;
    bool fast = false;
};

/// Shipped preset for an experiment kind (explicit seeds and iteration
/// budgets; the source figures leave these unstated).
json default_config(const std::string& experiment);

/// Schema check: version, experiment kind, required blocks, value ranges.
void validate_config(const json& config);

/// Validates, dispatches on config["experiment"], writes outputs + meta.json.
void run_from_config(const json& config, const RunContext& ctx);

void run_train(const json& config, const RunContext& ctx);
void run_compare(const json& config, const RunContext& ctx);
void run_fbe(const json& config, const RunContext& ctx);
void run_landscape(const json& config, const RunContext& ctx);
void run_teleport(const json& config, const RunContext& ctx);
void run_corruption(const json& config, const RunContext& ctx);
void run_barren(const json& config, const RunContext& ctx);
void run_params(const json& config, const RunContext& ctx);
void run_dataset_gen(const json& config, const RunContext& ctx);

// --- building blocks shared with the test suites ------------------------------

Dataset dataset_from_config(const json& dataset_config);
TrainingConfig training_config_from_json(const json& training_config);
TrainableModel model_from_config(const json& model_config, std::uint64_t seed);

/// The hidden unitary as a layer stack (empty when the intrinsic is not
/// layer-structured, e.g. Haar-random).
std::vector<Layer> intrinsic_layers(const IntrinsicSpec& spec, int n, std::uint64_t seed);

/// DIBoM whose parameters reproduce the dataset's intrinsic unitary
/// exactly: intrinsic layers are slotted into an identity-initialized
/// alternating stack. Throws ConfigError when L has too few slots or the
/// intrinsic is not layer-structured.
Circuit aligned_dibom(const Provenance& prov, int n, int L);

/// Trainable teleportation learner: product-rotation / generalized-CZ /
/// product-rotation pre-circuit on 3 qubits, qubits {0,1} measured, and
/// one trainable single-qubit branch per outcome; the ablated variant has
/// empty branches (zero branch parameters).
ConditionalModel teleport_training_model(std::uint64_t seed, bool with_control);

} // namespace dibom
