#include "dibom/experiments.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

namespace dibom {

namespace {

using clock_type = std::chrono::steady_clock;

double seconds_since(clock_type::time_point t0) {
    return std::chrono::duration<double>(clock_type::now() - t0).count();
}

/// Runs fn(0..count-1) across a worker pool. Every unit of work is
/// independent and writes to its own slot, so results do not depend on the
/// schedule; callers assemble outputs in index order afterwards.
void parallel_indexed(std::size_t count, int threads, const std::function<void(std::size_t)>& fn) {
    if (threads <= 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) {
            try {
                fn(i);
            } catch (...) {
                std::scoped_lock lock(error_mutex);
                if (!error) error = std::current_exception();
                next.store(count);
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    const std::size_t n_workers = std::min<std::size_t>(threads, count);
    pool.reserve(n_workers);
    for (std::size_t t = 0; t < n_workers; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

std::string format_g(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

void config_require(bool ok, const std::string& msg) {
    if (!ok) throw ConfigError("config error: " + msg);
}

const json& need(const json& j, const char* key) {
    config_require(j.is_object() && j.contains(key), std::string("missing field '") + key + "'");
    return j.at(key);
}

template <typename T>
T need_as(const json& j, const char* key) {
    try {
        return need(j, key).get<T>();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception&) {
        throw ConfigError(std::string("config error: field '") + key + "' has the wrong type");
    }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
    if (!j.is_object() || !j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const std::exception&) {
        throw ConfigError(std::string("config error: field '") + key + "' has the wrong type");
    }
}

void write_meta(const RunContext& ctx, const json& config, json extra, double wall_seconds) {
    json meta;
    meta["schema_version"] = 1;
    meta["artifact_version"] = kArtifactVersion;
    meta["experiment"] = config.at("experiment");
    meta["config"] = config;
    meta["threads"] = ctx.threads;
    meta["fast_profile"] = ctx.fast;
    meta["wall_seconds"] = wall_seconds;
    meta["outputs"] = std::move(extra);
    save_json(meta, ctx.out_dir / "meta.json");
}

std::vector<std::uint64_t> seeds_from(const json& config) {
    auto seeds = need_as<std::vector<std::uint64_t>>(config, "seeds");
    config_require(!seeds.empty(), "'seeds' must be non-empty");
    return seeds;
}

} // namespace

TrainingConfig training_config_from_json(const json& t) {
    TrainingConfig cfg;
    cfg.lambda = get_or(t, "lambda", cfg.lambda);
    cfg.epsilon = get_or(t, "epsilon", cfg.epsilon);
    cfg.max_iters = get_or(t, "max_iters", cfg.max_iters);
    cfg.convergence_tol = get_or(t, "convergence_tol", cfg.convergence_tol);
    cfg.eta = get_or(t, "eta", cfg.eta);
    cfg.fd_epsilon = get_or(t, "fd_epsilon", cfg.fd_epsilon);
    cfg.max_halvings = get_or(t, "max_halvings", cfg.max_halvings);
    cfg.random_layer_order = get_or(t, "random_layer_order", cfg.random_layer_order);
    const std::string method = get_or<std::string>(t, "method", "simultaneous");
    if (method == "simultaneous") cfg.method = TrainMethod::Simultaneous;
    else if (method == "layer_by_layer") cfg.method = TrainMethod::LayerByLayer;
    else if (method == "nesterov") cfg.method = TrainMethod::Nesterov;
    else throw ConfigError("config error: unknown training method '" + method + "'");
    const std::string loss = get_or<std::string>(t, "loss", "global");
    if (loss == "global") cfg.loss = LossKind::Global;
    else if (loss == "local") cfg.loss = LossKind::Local;
    else throw ConfigError("config error: unknown loss kind '" + loss + "'");
    try {
        cfg.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config error: ") + e.what());
    }
    return cfg;
}

Dataset dataset_from_config(const json& d) {
    IntrinsicSpec spec;
    try {
        spec.kind = intrinsic_kind_from_name(need_as<std::string>(d, "intrinsic"));
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config error: ") + e.what());
    }
    spec.L = get_or(d, "L", 1);
    const int n = need_as<int>(d, "n");
    const int num = need_as<int>(d, "num_samples");
    const auto seed = need_as<std::uint64_t>(d, "seed");
    const bool product_form = get_or(d, "product_form", false);
    try {
        return gen_dataset(spec, n, num, seed, product_form);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config error: ") + e.what());
    }
}

TrainableModel model_from_config(const json& m, std::uint64_t seed) {
    const std::string kind = need_as<std::string>(m, "kind");
    if (kind == "dissipative") {
        ModelKind k;
        k.tag = ModelKind::Tag::DissipativeQNN;
        k.dissipative.n_in = need_as<int>(m, "n_in");
        k.dissipative.n_hidden = get_or(m, "n_hidden", 0);
        k.dissipative.n_out = get_or(m, "n_out", k.dissipative.n_in);
        return make_model(k, k.dissipative.n_total(), 1, seed);
    }
    ModelKind k;
    try {
        k.tag = model_tag_from_name(kind);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config error: ") + e.what());
    }
    return make_model(k, need_as<int>(m, "n"), get_or(m, "L", 1), seed);
}

std::vector<Layer> intrinsic_layers(const IntrinsicSpec& spec, int n, std::uint64_t seed) {
    Rng rng = Rng(seed).derive(0x76);
    auto random_alpha = [&rng] {
        return std::array<double, 3>{rng.uniform(-M_PI, M_PI), rng.uniform(-M_PI, M_PI),
                                     rng.uniform(-M_PI, M_PI)};
    };
    auto random_gcz = [&rng, n] {
        GeneralizedCZLayer layer;
        layer.betas.resize(pair_count(n));
        for (double& b : layer.betas) b = rng.uniform(0.0, 1.0);
        return layer;
    };
    switch (spec.kind) {
        case IntrinsicKind::SingleQubitOnQ2:
            return {Layer{SingleQubitRotation{1, random_alpha()}}};
        case IntrinsicKind::GCZLayer:
            return {Layer{random_gcz()}};
        case IntrinsicKind::SingleQubitTimesGCZ: {
            GeneralizedCZLayer gcz = random_gcz();
            SingleQubitRotation sq{1, random_alpha()};
            return {Layer{gcz}, Layer{sq}};
        }
        case IntrinsicKind::ProductThenGCZ: {
            ProductRotationLayer prod;
            prod.alphas.resize(n);
            for (auto& a : prod.alphas) a = random_alpha();
            GeneralizedCZLayer gcz = random_gcz();
            return {Layer{prod}, Layer{gcz}};
        }
        case IntrinsicKind::DIBoMShape:
        case IntrinsicKind::AlternatingStack:
            return build_dibom(n, spec.L, derive_seed(seed, 0x5a)).layers;
        case IntrinsicKind::HaarRandom:
        case IntrinsicKind::TeleportationTask:
            return {};
    }
    return {};
}

Circuit aligned_dibom(const Provenance& prov, int n, int L) {
    const std::vector<Layer> source = intrinsic_layers(prov.spec, n, prov.seed);
    if (source.empty())
        throw ConfigError("config error: intrinsic is not layer-structured; cannot align a model to it");

    Circuit c;
    c.n = n;
    for (int l = 0; l < L; ++l) {
        if (l % 2 == 0) {
            ProductRotationLayer prod;
            prod.alphas.assign(n, {0.0, 0.0, 0.0});
            c.layers.emplace_back(std::move(prod));
        } else {
            c.layers.emplace_back(GeneralizedCZLayer{std::vector<double>(pair_count(n), 0.0)});
        }
    }

    int slot = 0;
    for (const Layer& layer : source) {
        const bool wants_product = !std::holds_alternative<GeneralizedCZLayer>(layer);
        while (slot < L && (slot % 2 == 0) != wants_product) ++slot;
        if (slot >= L)
            throw ConfigError("config error: aligned model needs more layers than L provides");
        if (const auto* sq = std::get_if<SingleQubitRotation>(&layer)) {
            std::get<ProductRotationLayer>(c.layers[slot]).alphas[sq->target] = sq->alpha;
        } else if (const auto* prod = std::get_if<ProductRotationLayer>(&layer)) {
            std::get<ProductRotationLayer>(c.layers[slot]) = *prod;
        } else if (const auto* gcz = std::get_if<GeneralizedCZLayer>(&layer)) {
            std::get<GeneralizedCZLayer>(c.layers[slot]) = *gcz;
        } else {
            throw ConfigError("config error: intrinsic contains a layer the stack cannot host");
        }
        ++slot;
    }
    return c;
}

ConditionalModel teleport_training_model(std::uint64_t seed, bool with_control) {
    ConditionalModel m;
    m.n_input = 1;
    m.n_ancilla = 2;
    m.measured = {0, 1};
    m.pre_circuit.n = 3;
    Rng rng(derive_seed(seed, 0x7e1e));
    auto random_alpha = [&rng] {
        return std::array<double, 3>{rng.uniform(-M_PI, M_PI), rng.uniform(-M_PI, M_PI),
                                     rng.uniform(-M_PI, M_PI)};
    };
    // single-qubit rotation / generalized CZ / single-qubit rotation: the
    // diagonal entangler cannot route the payload onto the output qubit, so
    // only the correction branches can close the protocol
    GeneralizedCZLayer gcz;
    gcz.betas = {rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0)};
    m.pre_circuit.layers = {Layer{SingleQubitRotation{2, random_alpha()}}, Layer{gcz},
                            Layer{SingleQubitRotation{0, random_alpha()}}};
    for (int i = 0; i < 4; ++i) {
        Circuit branch;
        branch.n = 1;
        if (with_control) branch.layers = {Layer{SingleQubitRotation{0, random_alpha()}}};
        m.branches.push_back(std::move(branch));
    }
    return m;
}

// --- config validation ---------------------------------------------------------

namespace {

const std::set<std::string>& known_experiments() {
    static const std::set<std::string> kinds = {"train",  "compare",  "fbe",    "landscape", "teleport",
                                                "corrupt", "barren",  "params", "dataset_gen"};
    return kinds;
}

void validate_dataset_block(const json& d) {
    need(d, "intrinsic");
    need(d, "n");
    need(d, "num_samples");
    need(d, "seed");
    config_require(need_as<int>(d, "num_samples") >= 1, "'num_samples' must be >= 1");
    try {
        intrinsic_kind_from_name(need_as<std::string>(d, "intrinsic"));
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config error: ") + e.what());
    }
}

void validate_split_fields(const json& d) {
    const double fraction = get_or(d, "train_fraction", 0.5);
    config_require(fraction > 0.0 && fraction < 1.0, "'train_fraction' must be in (0,1)");
    config_require(d.contains("split_seed"), "missing field 'split_seed'");
}

} // namespace

void validate_config(const json& config) {
    config_require(config.is_object(), "config must be a JSON object");
    config_require(need_as<int>(config, "schema_version") == 1, "unsupported schema_version");
    const std::string experiment = need_as<std::string>(config, "experiment");
    config_require(known_experiments().count(experiment) == 1,
                   "unknown experiment '" + experiment + "'");

    if (experiment == "train" || experiment == "compare" || experiment == "corrupt" ||
        experiment == "teleport" || experiment == "landscape") {
        validate_dataset_block(need(config, "dataset"));
    }
    if (experiment == "train" || experiment == "compare" || experiment == "corrupt" ||
        experiment == "teleport" || experiment == "barren") {
        training_config_from_json(need(config, "training"));
        seeds_from(config);
    }
    if (experiment == "train" || experiment == "compare" || experiment == "corrupt") {
        validate_split_fields(need(config, "dataset"));
        need(config, "model");
    }
    if (experiment == "compare") {
        const auto kinds = need_as<std::vector<std::string>>(config, "kinds");
        config_require(!kinds.empty(), "'kinds' must be non-empty");
        for (const std::string& k : kinds) {
            try {
                model_tag_from_name(k);
            } catch (const std::invalid_argument& e) {
                throw ConfigError(std::string("config error: ") + e.what());
            }
        }
    }
    if (experiment == "fbe") {
        need(config, "n");
        const auto ls = need_as<std::vector<int>>(config, "L_list");
        config_require(!ls.empty(), "'L_list' must be non-empty");
        const auto archs = need_as<std::vector<std::string>>(config, "architectures");
        config_require(!archs.empty(), "'architectures' must be non-empty");
        need(need(config, "fbe"), "seed");
    }
    if (experiment == "landscape") {
        need(config, "model");
        need(config, "coord1");
        need(config, "coord2");
        config_require(get_or(config, "resolution", 21) >= 2, "'resolution' must be >= 2");
        const std::string source = get_or<std::string>(config, "model_source", "aligned");
        config_require(source == "aligned" || source == "random" || source == "trained",
                       "'model_source' must be aligned|random|trained");
    }
    if (experiment == "corrupt") {
        const auto ratios = need_as<std::vector<double>>(config, "ratios");
        config_require(!ratios.empty(), "'ratios' must be non-empty");
        for (double r : ratios)
            config_require(r >= 0.0 && r <= 1.0, "corruption ratios must be in [0,1]");
        need(config, "corruption_seed");
    }
    if (experiment == "barren") {
        const auto ns = need_as<std::vector<int>>(config, "n_list");
        config_require(!ns.empty(), "'n_list' must be non-empty");
        need(config, "data_seed");
        need(config, "split_seed");
        need(config, "num_samples");
    }
    if (experiment == "params") {
        const auto rows = need_as<std::vector<json>>(config, "rows");
        config_require(!rows.empty(), "'rows' must be non-empty");
        for (const json& r : rows) {
            need(r, "n");
            need(r, "L");
        }
    }
    if (experiment == "dataset_gen") {
        validate_dataset_block(need(config, "dataset"));
        need(config, "filename");
    }
}

// --- runners --------------------------------------------------------------------

namespace {

struct SplitData {
    Dataset train;
    Dataset test;
    std::uint64_t dataset_hash = 0;
};

SplitData load_split(const json& config) {
    const json& d = config.at("dataset");
    Dataset full = dataset_from_config(d);
    const std::string bytes = dataset_to_json(full).dump();
    auto [train, test] = split(full, get_or(d, "train_fraction", 0.5),
                               need_as<std::uint64_t>(d, "split_seed"));
    return {std::move(train), std::move(test), content_hash(bytes)};
}

} // namespace

void run_train(const json& config, const RunContext& ctx) {
    const auto t0 = clock_type::now();
    SplitData data = load_split(config);
    const TrainingConfig base_cfg = training_config_from_json(config.at("training"));
    const std::vector<std::uint64_t> seeds = seeds_from(config);

    std::vector<json> rows(seeds.size());
    parallel_indexed(seeds.size(), ctx.threads, [&](std::size_t i) {
        const std::uint64_t seed = seeds[i];
        TrainingConfig cfg = base_cfg;
        cfg.seed = seed;
        TrainableModel model = model_from_config(config.at("model"), derive_seed(seed, 0x40d31));
        const TrainResult result = train(model, data.train, &data.test, cfg);
        const std::string name = "trace_seed" + std::to_string(seed) + ".csv";
        write_text_file(ctx.out_dir / name, trace_to_csv(result.trace));
        save_json(model_to_json(result.model), ctx.out_dir / ("model_seed" + std::to_string(seed) + ".json"));
        rows[i] = {{"seed", seed},
                   {"file", name},
                   {"final_train_loss", result.trace.final_train_loss()},
                   {"final_test_loss", result.trace.final_test_loss()}};
    });

    json outputs;
    outputs["dataset_hash"] = data.dataset_hash;
    outputs["traces"] = rows;
    write_meta(ctx, config, std::move(outputs), seconds_since(t0));
}

void run_compare(const json& config, const RunContext& ctx) {
    const auto t0 = clock_type::now();
    SplitData data = load_split(config);
    const TrainingConfig base_cfg = training_config_from_json(config.at("training"));
    const int n = need_as<int>(config.at("model"), "n");
    const int L = get_or(config.at("model"), "L", 5);
    const auto kinds = need_as<std::vector<std::string>>(config, "kinds");

    const std::vector<std::uint64_t> seeds = seeds_from(config);
    std::vector<std::pair<std::string, std::uint64_t>> units;
    for (const std::string& kind : kinds)
        for (const std::uint64_t seed : seeds) units.emplace_back(kind, seed);

    std::vector<json> rows(units.size());
    parallel_indexed(units.size(), ctx.threads, [&](std::size_t i) {
        const auto& [kind, seed] = units[i];
        TrainingConfig cfg = base_cfg;
        cfg.seed = seed;
        json mcfg;
        if (kind == "dissipative") mcfg = {{"kind", "dissipative"}, {"n_in", n}, {"n_out", n}};
        else mcfg = {{"kind", kind}, {"n", n}, {"L", L}};
        TrainableModel model = model_from_config(mcfg, derive_seed(seed, 0xc0a));
        const TrainResult result = train(model, data.train, &data.test, cfg);
        const std::string name = "compare_" + kind + "_seed" + std::to_string(seed) + ".csv";
        write_text_file(ctx.out_dir / name, trace_to_csv(result.trace));
        rows[i] = {{"kind", kind},
                   {"seed", seed},
                   {"file", name},
                   {"dataset_hash", data.dataset_hash},
                   {"final_train_loss", result.trace.final_train_loss()},
                   {"final_test_loss", result.trace.final_test_loss()}};
    });

    json outputs;
    outputs["dataset_hash"] = data.dataset_hash;
    outputs["traces"] = rows;

    // parameter-count table
    std::ostringstream table;
    table << "kind,n,L,params\n";
    auto emit = [&table](const std::string& kind, int nn, int ll, std::int64_t params) {
        table << kind << ',' << nn << ',' << ll << ',' << params << '\n';
    };
    for (const std::string& kind : kinds) {
        ModelKind k;
        k.tag = model_tag_from_name(kind);
        if (k.tag == ModelKind::Tag::DissipativeQNN) k.dissipative = {n, 0, n};
        emit(kind, n, L, count_parameters(k, n, L));
    }
    const json& anchor = config.contains("params_table") ? config.at("params_table") : json::object();
    const int an = get_or(anchor, "n", 3);
    const int aL = get_or(anchor, "L", 2241);
    emit("dibom", an, aL, count_parameters(ModelKind{ModelKind::Tag::DIBoM, {}}, an, aL));
    write_text_file(ctx.out_dir / "params_table.csv", table.str());
    outputs["params_table"] = "params_table.csv";
    write_meta(ctx, config, std::move(outputs), seconds_since(t0));
}

namespace {

AnsatzBuilder ansatz_by_name(const std::string& name) {
    if (name == "dibom") return dibom_ansatz();
    if (name == "hardware_efficient") return hardware_efficient_ansatz();
    if (name == "ising_born_machine") return ising_born_machine_ansatz();
    if (name == "general_unitary") return general_unitary_ansatz();
    throw ConfigError("config error: unknown architecture '" + name + "'");
}

std::int64_t ansatz_param_count(const std::string& name, int n, int L) {
    ModelKind k;
    if (name == "general_unitary") return (std::int64_t{1} << (2 * n)) - 1;
    k.tag = model_tag_from_name(name);
    return count_parameters(k, n, L);
}

} // namespace

void run_fbe(const json& config, const RunContext& ctx) {
    const auto t0 = clock_type::now();
    const int n = need_as<int>(config, "n");
    const auto l_list = need_as<std::vector<int>>(config, "L_list");
    const auto archs = need_as<std::vector<std::string>>(config, "architectures");

    const json& f = config.at("fbe");
    FBEConfig fbe_cfg;
    fbe_cfg.k = get_or(f, "k", 100);
    fbe_cfg.m = get_or(f, "m", 10);
    fbe_cfg.restarts = get_or(f, "restarts", 3);
    fbe_cfg.inner_iters = get_or(f, "inner_iters", 100);
    fbe_cfg.seed = need_as<std::uint64_t>(f, "seed");
    fbe_cfg.step = get_or(f, "step", 0.05);
    fbe_cfg.threads = ctx.threads;
    if (ctx.fast) {
        fbe_cfg.k = std::min(fbe_cfg.k, 20);
        fbe_cfg.m = std::min(fbe_cfg.m, 5);
    }
    fbe_cfg.validate();

    json outputs;
    outputs["fbe_profile"] = {{"k", fbe_cfg.k},       {"m", fbe_cfg.m},
                              {"restarts", fbe_cfg.restarts}, {"inner_iters", fbe_cfg.inner_iters},
                              {"seed", fbe_cfg.seed}, {"reduced_profile", ctx.fast}};
    for (const std::string& arch : archs) {
        std::ostringstream csv;
        csv << "L,params,fbe,seconds\n";
        for (int L : l_list) {
            const auto row_t0 = clock_type::now();
            const FBEResult r = fbe_upper_bound(ansatz_by_name(arch), n, L, fbe_cfg);
            csv << L << ',' << ansatz_param_count(arch, n, L) << ',' << format_g(r.estimate) << ','
                << format_g(seconds_since(row_t0)) << '\n';
        }
        const std::string name = "fbe_" + arch + ".csv";
        write_text_file(ctx.out_dir / name, csv.str());
        outputs["fbe_" + arch] = name;
    }

    if (get_or(config, "frontier", false)) {
        const std::vector<FrontierPoint> points = frontier(n, l_list, fbe_cfg);
        std::ostringstream csv;
        csv << "L,params,fbe,seconds,analytic\n";
        for (const FrontierPoint& p : points)
            csv << p.L << ',' << p.params << ',' << format_g(p.fbe) << ',' << format_g(p.seconds)
                << ',' << (p.analytic ? 1 : 0) << '\n';
        write_text_file(ctx.out_dir / "frontier.csv", csv.str());
        outputs["frontier"] = "frontier.csv";
    }
    write_meta(ctx, config, std::move(outputs), seconds_since(t0));
}

void run_landscape(const json& config, const RunContext& ctx) {
    const auto t0 = clock_type::now();
    const json& d = config.at("dataset");
    Dataset ds = dataset_from_config(d);
    const json& mcfg = config.at("model");
    const std::string source = get_or<std::string>(config, "model_source", "aligned");

    TrainableModel model;
    if (source == "aligned") {
        model.kind.tag = ModelKind::Tag::DIBoM;
        model.circuit = aligned_dibom(ds.provenance, ds.n_in, get_or(mcfg, "L", 5));
    } else if (source == "random") {
        model = model_from_config(mcfg, get_or<std::uint64_t>(config, "model_seed", 0));
    } else {
        model = model_from_config(mcfg, get_or<std::uint64_t>(config, "model_seed", 0));
        const TrainingConfig cfg = training_config_from_json(need(config, "training"));
        model = train(model, ds, nullptr, cfg).model;
    }

    std::vector<double> params = circuit_get_params(model.circuit);
    const auto c1 = need_as<std::size_t>(config, "coord1");
    const auto c2 = need_as<std::size_t>(config, "coord2");
    config_require(c1 < params.size() && c2 < params.size() && c1 != c2,
                   "landscape coordinates out of range");
    const int resolution = get_or(config, "resolution", 21);
    const double span1 = get_or(config, "p1_span", M_PI);
    const double span2 = get_or(config, "p2_span", 1.0);
    const double center1 = params[c1];
    const double center2 = params[c2];

    std::ostringstream csv;
    csv << "p1,p2,loss\n";
    const LossKind loss_kind =
        get_or<std::string>(config, "loss", "global") == "local" ? LossKind::Local : LossKind::Global;
    for (int i = 0; i < resolution; ++i) {
        const double p1 = center1 - span1 + 2.0 * span1 * i / (resolution - 1);
        for (int j = 0; j < resolution; ++j) {
            const double p2 = center2 - span2 + 2.0 * span2 * j / (resolution - 1);
            std::vector<double> probe = params;
            probe[c1] = p1;
            probe[c2] = p2;
            TrainableModel m = model;
            circuit_set_params(m.circuit, probe);
            csv << format_g(p1) << ',' << format_g(p2) << ',' << format_g(loss_value(m, loss_kind, ds))
                << '\n';
        }
    }
    write_text_file(ctx.out_dir / "landscape.csv", csv.str());
    json outputs;
    outputs["landscape"] = "landscape.csv";
    outputs["optimum"] = {{"p1", center1}, {"p2", center2}};
    write_meta(ctx, config, std::move(outputs), seconds_since(t0));
}

void run_teleport(const json& config, const RunContext& ctx) {
    const auto t0 = clock_type::now();
    SplitData data = load_split(config);
    const TrainingConfig base_cfg = training_config_from_json(config.at("training"));

    const std::vector<std::uint64_t> seeds = seeds_from(config);
    std::vector<std::pair<std::uint64_t, bool>> units;
    for (const std::uint64_t seed : seeds)
        for (const bool with_control : {true, false}) units.emplace_back(seed, with_control);

    std::vector<json> rows(units.size());
    parallel_indexed(units.size(), ctx.threads, [&](std::size_t i) {
        const auto& [seed, with_control] = units[i];
        TrainingConfig cfg = base_cfg;
        cfg.seed = seed;
        ConditionalModel model = teleport_training_model(derive_seed(seed, 0x7e1), with_control);
        const ConditionalTrainResult result = train_conditional(model, data.train, &data.test, cfg);
        const std::string tag = with_control ? "with_control" : "without_control";
        const std::string name = "teleport_" + tag + "_seed" + std::to_string(seed) + ".csv";
        write_text_file(ctx.out_dir / name, trace_to_csv(result.trace));
        long branch_params = 0;
        for (const Circuit& b : result.model.branches) branch_params += circuit_param_count(b);
        rows[i] = {{"seed", seed},
                   {"variant", tag},
                   {"file", name},
                   {"branch_parameters", branch_params},
                   {"final_train_loss", result.trace.final_train_loss()},
                   {"final_test_loss", result.trace.final_test_loss()}};
    });

    json outputs;
    outputs["dataset_hash"] = data.dataset_hash;
    outputs["runs"] = rows;
    write_meta(ctx, config, std::move(outputs), seconds_since(t0));
}

void run_corruption(const json& config, const RunContext& ctx) {
    const auto t0 = clock_type::now();
    SplitData data = load_split(config);
    const TrainingConfig base_cfg = training_config_from_json(config.at("training"));
    const auto ratios = need_as<std::vector<double>>(config, "ratios");
    const auto corruption_seed = need_as<std::uint64_t>(config, "corruption_seed");

    const std::vector<std::uint64_t> seeds = seeds_from(config);
    std::vector<std::pair<std::size_t, std::uint64_t>> units;
    for (std::size_t ri = 0; ri < ratios.size(); ++ri)
        for (const std::uint64_t seed : seeds) units.emplace_back(ri, seed);

    std::vector<std::string> lines(units.size());
    parallel_indexed(units.size(), ctx.threads, [&](std::size_t i) {
        const auto& [ri, seed] = units[i];
        TrainingConfig cfg = base_cfg;
        cfg.seed = seed;
        CorruptionConfig cc;
        cc.ratio = ratios[ri];
        cc.seed = derive_seed(corruption_seed, seed * 1000 + ri);
        const Dataset corrupted = corrupt(data.train, cc);
        TrainableModel model = model_from_config(config.at("model"), derive_seed(seed, 0xc02));
        const TrainResult result = train(model, corrupted, &data.test, cfg);
        std::ostringstream line;
        line << format_g(ratios[ri]) << ',' << seed << ','
             << format_g(result.trace.final_train_loss()) << ','
             << format_g(loss_value(result.model, cfg.loss, data.test)) << '\n';
        lines[i] = line.str();
    });

    std::ostringstream csv;
    csv << "ratio,seed,final_train_loss,clean_test_loss\n";
    for (const std::string& line : lines) csv << line;
    write_text_file(ctx.out_dir / "corruption.csv", csv.str());
    json outputs;
    outputs["dataset_hash"] = data.dataset_hash;
    outputs["corruption"] = "corruption.csv";

    if (config.contains("layer_sweep") && get_or(config.at("layer_sweep"), "enabled", false)) {
        const json& sweep = config.at("layer_sweep");
        const double ratio = get_or(sweep, "ratio", 0.2);
        const auto l_list = need_as<std::vector<int>>(sweep, "L_list");
        std::ostringstream sweep_csv;
        sweep_csv << "L,seed,final_train_loss,clean_test_loss\n";
        for (std::size_t li = 0; li < l_list.size(); ++li) {
            for (const std::uint64_t seed : seeds_from(config)) {
                TrainingConfig cfg = base_cfg;
                cfg.seed = seed;
                CorruptionConfig cc;
                cc.ratio = ratio;
                cc.seed = derive_seed(corruption_seed, 0xd00d + seed * 1000 + li);
                const Dataset corrupted = corrupt(data.train, cc);
                json mcfg = config.at("model");
                mcfg["L"] = l_list[li];
                TrainableModel model = model_from_config(mcfg, derive_seed(seed, 0xc03));
                const TrainResult result = train(model, corrupted, &data.test, cfg);
                sweep_csv << l_list[li] << ',' << seed << ','
                          << format_g(result.trace.final_train_loss()) << ','
                          << format_g(loss_value(result.model, cfg.loss, data.test)) << '\n';
            }
        }
        write_text_file(ctx.out_dir / "corruption_layers.csv", sweep_csv.str());
        outputs["corruption_layers"] = "corruption_layers.csv";
    }
    write_meta(ctx, config, std::move(outputs), seconds_since(t0));
}

void run_barren(const json& config, const RunContext& ctx) {
    const auto t0 = clock_type::now();
    const auto n_list = need_as<std::vector<int>>(config, "n_list");
    const int L = get_or(config, "L", 2);
    const int num_samples = need_as<int>(config, "num_samples");
    const auto data_seed = need_as<std::uint64_t>(config, "data_seed");
    const auto split_seed = need_as<std::uint64_t>(config, "split_seed");
    const TrainingConfig base_cfg = training_config_from_json(config.at("training"));
    const double threshold = get_or(config, "threshold", 1e-2);

    const std::vector<std::uint64_t> seeds = seeds_from(config);
    struct Unit {
        int n;
        LossKind kind;
        std::uint64_t seed;
    };
    std::vector<Unit> units;
    std::map<int, std::pair<Dataset, Dataset>> datasets;
    for (const int n : n_list) {
        const Dataset full = gen_dataset({IntrinsicKind::ProductThenGCZ, 1}, n, num_samples,
                                         derive_seed(data_seed, static_cast<std::uint64_t>(n)), true);
        datasets.emplace(n, split(full, 0.5, split_seed));
        for (const LossKind kind : {LossKind::Local, LossKind::Global})
            for (const std::uint64_t seed : seeds) units.push_back({n, kind, seed});
    }

    std::vector<std::string> metric_lines(units.size());
    std::vector<json> rows(units.size());
    parallel_indexed(units.size(), ctx.threads, [&](std::size_t i) {
        const Unit& unit = units[i];
        const auto& [train_ds, test_ds] = datasets.at(unit.n);
        TrainingConfig cfg = base_cfg;
        cfg.seed = unit.seed;
        cfg.loss = unit.kind;
        TrainableModel model = make_model(ModelKind{ModelKind::Tag::DIBoM, {}}, unit.n, L,
                                          derive_seed(unit.seed, 0xba2 + unit.n));
        const TrainResult result = train(model, train_ds, &test_ds, cfg);
        const std::string kind_name = unit.kind == LossKind::Local ? "local" : "global";
        const std::string name = "barren_n" + std::to_string(unit.n) + "_" + kind_name + "_seed" +
                                 std::to_string(unit.seed) + ".csv";
        write_text_file(ctx.out_dir / name, trace_to_csv(result.trace));
        std::ostringstream line;
        line << unit.n << ',' << kind_name << ',' << unit.seed << ','
             << format_g(result.trace.final_train_loss()) << ','
             << result.trace.iters_to_threshold(threshold) << ','
             << result.trace.longest_flat_run() << '\n';
        metric_lines[i] = line.str();
        rows[i] = {{"n", unit.n}, {"loss", kind_name}, {"seed", unit.seed}, {"file", name}};
    });

    std::ostringstream metrics;
    metrics << "n,loss_kind,seed,final_train_loss,iters_to_threshold,longest_flat_run\n";
    for (const std::string& line : metric_lines) metrics << line;
    json outputs;
    outputs["traces"] = rows;
    write_text_file(ctx.out_dir / "plateau_metrics.csv", metrics.str());
    outputs["plateau_metrics"] = "plateau_metrics.csv";
    write_meta(ctx, config, std::move(outputs), seconds_since(t0));
}

void run_params(const json& config, const RunContext& ctx) {
    const auto t0 = clock_type::now();
    const auto rows = need_as<std::vector<json>>(config, "rows");
    const auto kinds = get_or<std::vector<std::string>>(
        config, "kinds", {"dibom", "hardware_efficient", "ising_born_machine", "dissipative"});

    std::ostringstream csv;
    csv << "kind,n,L,params\n";
    for (const json& row : rows) {
        const int n = need_as<int>(row, "n");
        const int L = need_as<int>(row, "L");
        for (const std::string& kind : kinds) {
            ModelKind k;
            k.tag = model_tag_from_name(kind);
            if (k.tag == ModelKind::Tag::DissipativeQNN) k.dissipative = {n, 0, n};
            csv << kind << ',' << n << ',' << L << ',' << count_parameters(k, n, L) << '\n';
        }
    }
    if (get_or(config, "anchor", true))
        csv << "dibom,3,2241," << count_parameters(ModelKind{ModelKind::Tag::DIBoM, {}}, 3, 2241) << '\n';
    write_text_file(ctx.out_dir / "params_table.csv", csv.str());
    json outputs;
    outputs["params_table"] = "params_table.csv";
    write_meta(ctx, config, std::move(outputs), seconds_since(t0));
}

void run_dataset_gen(const json& config, const RunContext& ctx) {
    const auto t0 = clock_type::now();
    Dataset ds = dataset_from_config(config.at("dataset"));
    const json& d = config.at("dataset");
    if (get_or(d, "corruption_ratio", 0.0) > 0.0) {
        CorruptionConfig cc;
        cc.ratio = d.at("corruption_ratio").get<double>();
        cc.seed = get_or<std::uint64_t>(d, "corruption_seed", 0);
        ds = corrupt(ds, cc);
    }
    const std::string filename = need_as<std::string>(config, "filename");
    const json doc = dataset_to_json(ds);
    save_json(doc, ctx.out_dir / filename);
    json outputs;
    outputs["dataset"] = filename;
    outputs["dataset_hash"] = content_hash(doc.dump());
    write_meta(ctx, config, std::move(outputs), seconds_since(t0));
}

void run_from_config(const json& config, const RunContext& ctx) {
    validate_config(config);
    const std::string experiment = config.at("experiment").get<std::string>();
    std::filesystem::create_directories(ctx.out_dir);
    if (experiment == "train") run_train(config, ctx);
    else if (experiment == "compare") run_compare(config, ctx);
    else if (experiment == "fbe") run_fbe(config, ctx);
    else if (experiment == "landscape") run_landscape(config, ctx);
    else if (experiment == "teleport") run_teleport(config, ctx);
    else if (experiment == "corrupt") run_corruption(config, ctx);
    else if (experiment == "barren") run_barren(config, ctx);
    else if (experiment == "params") run_params(config, ctx);
    else run_dataset_gen(config, ctx);
}

json default_config(const std::string& experiment) {
    json dataset = {{"intrinsic", "single_qubit_times_gcz"}, {"L", 2},         {"n", 2},
                    {"num_samples", 20},                     {"seed", 7},      {"product_form", false},
                    {"train_fraction", 0.5},                 {"split_seed", 11}};
    json training = {{"lambda", 0.5},          {"epsilon", 0.1},  {"max_iters", 300},
                     {"method", "simultaneous"}, {"loss", "global"}, {"convergence_tol", 1e-12}};
    json config = {{"schema_version", 1}, {"experiment", experiment}};

    if (experiment == "train") {
        config["model"] = {{"kind", "dibom"}, {"n", 2}, {"L", 5}};
        config["dataset"] = dataset;
        config["training"] = training;
        config["seeds"] = {0, 1, 2, 3, 4};
    } else if (experiment == "compare") {
        // L = 3 keeps the separation structural: a single fixed CZ cannot
        // match a generic generalized-CZ phase, while two of them span the
        // full controlled-phase family
        config["model"] = {{"kind", "dibom"}, {"n", 2}, {"L", 3}};
        config["kinds"] = {"dibom", "dissipative", "hardware_efficient", "ising_born_machine"};
        config["dataset"] = dataset;
        training["max_iters"] = 500;
        config["training"] = training;
        config["seeds"] = {0, 1, 2, 3, 4};
        config["params_table"] = {{"n", 3}, {"L", 2241}};
    } else if (experiment == "fbe") {
        config["n"] = 3;
        config["L_list"] = {3, 9, 15, 21};
        config["architectures"] = {"dibom", "hardware_efficient"};
        config["fbe"] = {{"k", 100}, {"m", 10}, {"restarts", 3}, {"inner_iters", 25}, {"seed", 0}};
        config["frontier"] = true;
    } else if (experiment == "landscape") {
        config["model"] = {{"kind", "dibom"}, {"n", 2}, {"L", 5}};
        config["dataset"] = dataset;
        config["model_source"] = "aligned";
        config["coord1"] = 10; // second product layer, qubit 1, first alpha component
        config["coord2"] = 6;  // first generalized-CZ layer, beta_01
        config["resolution"] = 41;
        config["p1_span"] = M_PI;
        config["p2_span"] = 1.0;
    } else if (experiment == "teleport") {
        config["dataset"] = {{"intrinsic", "teleportation_task"}, {"L", 1},    {"n", 1},
                             {"num_samples", 20},                 {"seed", 7}, {"train_fraction", 0.5},
                             {"split_seed", 11}};
        training["max_iters"] = 2000;
        config["training"] = training;
        config["seeds"] = {0, 1, 2, 3, 4};
    } else if (experiment == "corrupt") {
        config["model"] = {{"kind", "dibom"}, {"n", 2}, {"L", 5}};
        json corrupt_dataset = dataset;
        corrupt_dataset["num_samples"] = 40;
        config["dataset"] = corrupt_dataset;
        config["training"] = training;
        config["ratios"] = {0.0, 0.2, 0.4, 0.6};
        config["seeds"] = {0, 1, 2};
        config["corruption_seed"] = 5;
        config["layer_sweep"] = {{"enabled", false}, {"ratio", 0.2}, {"L_list", {3, 5, 7}}};
    } else if (experiment == "barren") {
        config["n_list"] = {2, 3, 4, 5};
        config["L"] = 2;
        config["num_samples"] = 20;
        config["data_seed"] = 7;
        config["split_seed"] = 11;
        training["max_iters"] = 500;
        config["training"] = training;
        config["seeds"] = {0, 1, 2, 3, 4};
        config["threshold"] = 1e-2;
    } else if (experiment == "params") {
        config["rows"] = json::array();
        for (int n = 2; n <= 6; ++n) config["rows"].push_back({{"n", n}, {"L", 5}});
        config["kinds"] = {"dibom", "hardware_efficient", "ising_born_machine", "dissipative"};
        config["anchor"] = true;
    } else if (experiment == "dataset_gen") {
        config["dataset"] = dataset;
        config["filename"] = "dataset.json";
    } else {
        throw ConfigError("config error: unknown experiment '" + experiment + "'");
    }
    return config;
}

} // namespace dibom
