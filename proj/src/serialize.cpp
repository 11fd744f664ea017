#include "dibom/serialize.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace dibom {

namespace {

json complex_to_json(const cplx& z) { return json::array({z.real(), z.imag()}); }

cplx complex_from_json(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

json vec_to_json(const Vec& v) {
    json out = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(complex_to_json(v(i)));
    return out;
}

Vec vec_from_json(const json& j) {
    Vec v(j.size());
    for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = complex_from_json(j.at(i));
    return v;
}

json mat_to_json(const Mat& m) {
    json out = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(complex_to_json(m(r, c)));
        out.push_back(std::move(row));
    }
    return out;
}

Mat mat_from_json(const json& j) {
    const auto rows = static_cast<Eigen::Index>(j.size());
    if (rows == 0) return Mat();
    const auto cols = static_cast<Eigen::Index>(j.at(0).size());
    Mat m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c)
            m(r, c) = complex_from_json(j.at(static_cast<std::size_t>(r)).at(static_cast<std::size_t>(c)));
    return m;
}

std::string format_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

} // namespace

json layer_to_json(const Layer& layer) {
    return std::visit(
        [](const auto& g) -> json {
            using T = std::decay_t<decltype(g)>;
            json j;
            if constexpr (std::is_same_v<T, SingleQubitRotation>) {
                j["type"] = "single_qubit_rotation";
                j["target"] = g.target;
                j["alpha"] = g.alpha;
            } else if constexpr (std::is_same_v<T, ProductRotationLayer>) {
                j["type"] = "product_rotation";
                j["alphas"] = g.alphas;
            } else if constexpr (std::is_same_v<T, GeneralizedCZLayer>) {
                j["type"] = "generalized_cz";
                j["betas"] = g.betas;
            } else if constexpr (std::is_same_v<T, FixedCZLayer>) {
                j["type"] = "fixed_cz";
                j["connectivity"] =
                    g.connectivity == FixedCZLayer::Connectivity::Linear ? "linear" : "all_to_all";
                j["pairs"] = json::array();
                for (auto [a, b] : g.pairs) j["pairs"].push_back(json::array({a, b}));
            } else if constexpr (std::is_same_v<T, HadamardLayer>) {
                j["type"] = "hadamard";
            } else {
                j["type"] = "general_unitary";
                j["coeffs"] = g.coeffs;
            }
            return j;
        },
        layer);
}

Layer layer_from_json(const json& j) {
    const std::string type = j.at("type").get<std::string>();
    if (type == "single_qubit_rotation") {
        SingleQubitRotation g;
        g.target = j.at("target").get<int>();
        g.alpha = j.at("alpha").get<std::array<double, 3>>();
        return g;
    }
    if (type == "product_rotation") {
        ProductRotationLayer g;
        g.alphas = j.at("alphas").get<std::vector<std::array<double, 3>>>();
        return g;
    }
    if (type == "generalized_cz") {
        GeneralizedCZLayer g;
        g.betas = j.at("betas").get<std::vector<double>>();
        return g;
    }
    if (type == "fixed_cz") {
        FixedCZLayer g;
        g.connectivity = j.at("connectivity").get<std::string>() == "linear"
                             ? FixedCZLayer::Connectivity::Linear
                             : FixedCZLayer::Connectivity::AllToAll;
        for (const auto& p : j.at("pairs")) g.pairs.emplace_back(p.at(0).get<int>(), p.at(1).get<int>());
        return g;
    }
    if (type == "hadamard") return HadamardLayer{};
    if (type == "general_unitary") {
        GeneralUnitaryLayer g;
        g.coeffs = j.at("coeffs").get<std::vector<double>>();
        return g;
    }
    throw std::invalid_argument("layer_from_json: unknown layer type '" + type + "'");
}

json circuit_to_json(const Circuit& c) {
    json j;
    j["n"] = c.n;
    j["layers"] = json::array();
    for (const Layer& layer : c.layers) j["layers"].push_back(layer_to_json(layer));
    return j;
}

Circuit circuit_from_json(const json& j) {
    Circuit c;
    c.n = j.at("n").get<int>();
    for (const auto& lj : j.at("layers")) c.layers.push_back(layer_from_json(lj));
    return c;
}

std::string model_tag_name(ModelKind::Tag tag) { return model_kind_name(tag); }

ModelKind::Tag model_tag_from_name(const std::string& name) {
    if (name == "dibom") return ModelKind::Tag::DIBoM;
    if (name == "hardware_efficient") return ModelKind::Tag::HardwareEfficient;
    if (name == "ising_born_machine") return ModelKind::Tag::IsingBornMachine;
    if (name == "dissipative") return ModelKind::Tag::DissipativeQNN;
    throw std::invalid_argument("unknown model kind '" + name + "'");
}

json model_to_json(const TrainableModel& model) {
    json j;
    j["schema_version"] = 1;
    j["kind"] = model_tag_name(model.kind.tag);
    j["n"] = model.circuit.n;
    j["L"] = model.circuit.layers.size();
    if (model.kind.tag == ModelKind::Tag::DissipativeQNN) {
        j["dissipative"] = {{"n_in", model.kind.dissipative.n_in},
                            {"n_hidden", model.kind.dissipative.n_hidden},
                            {"n_out", model.kind.dissipative.n_out}};
    }
    j["circuit"] = circuit_to_json(model.circuit);
    return j;
}

TrainableModel model_from_json(const json& j) {
    TrainableModel model;
    model.kind.tag = model_tag_from_name(j.at("kind").get<std::string>());
    if (model.kind.tag == ModelKind::Tag::DissipativeQNN) {
        const json& d = j.at("dissipative");
        model.kind.dissipative = {d.at("n_in").get<int>(), d.at("n_hidden").get<int>(),
                                  d.at("n_out").get<int>()};
    }
    model.circuit = circuit_from_json(j.at("circuit"));
    if (j.contains("L") && j.at("L").get<std::size_t>() != model.circuit.layers.size())
        throw std::invalid_argument("model document: L does not match the layer list");
    return model;
}

json conditional_to_json(const ConditionalModel& model) {
    json j;
    j["schema_version"] = 1;
    j["n_input"] = model.n_input;
    j["n_ancilla"] = model.n_ancilla;
    j["pre_circuit"] = circuit_to_json(model.pre_circuit);
    j["measured"] = model.measured;
    j["branches"] = json::array();
    for (const Circuit& b : model.branches) j["branches"].push_back(circuit_to_json(b));
    return j;
}

ConditionalModel conditional_from_json(const json& j) {
    ConditionalModel model;
    model.n_input = j.at("n_input").get<int>();
    model.n_ancilla = j.at("n_ancilla").get<int>();
    model.pre_circuit = circuit_from_json(j.at("pre_circuit"));
    model.measured = j.at("measured").get<std::vector<int>>();
    for (const auto& bj : j.at("branches")) model.branches.push_back(circuit_from_json(bj));
    model.validate();
    return model;
}

std::string intrinsic_kind_name(IntrinsicKind kind) {
    switch (kind) {
        case IntrinsicKind::SingleQubitOnQ2: return "single_qubit_on_q2";
        case IntrinsicKind::GCZLayer: return "gcz_layer";
        case IntrinsicKind::SingleQubitTimesGCZ: return "single_qubit_times_gcz";
        case IntrinsicKind::ProductThenGCZ: return "product_then_gcz";
        case IntrinsicKind::DIBoMShape: return "dibom_shape";
        case IntrinsicKind::AlternatingStack: return "alternating_stack";
        case IntrinsicKind::HaarRandom: return "haar_random";
        case IntrinsicKind::TeleportationTask: return "teleportation_task";
    }
    return "unknown";
}

IntrinsicKind intrinsic_kind_from_name(const std::string& name) {
    if (name == "single_qubit_on_q2") return IntrinsicKind::SingleQubitOnQ2;
    if (name == "gcz_layer") return IntrinsicKind::GCZLayer;
    if (name == "single_qubit_times_gcz") return IntrinsicKind::SingleQubitTimesGCZ;
    if (name == "product_then_gcz") return IntrinsicKind::ProductThenGCZ;
    if (name == "dibom_shape") return IntrinsicKind::DIBoMShape;
    if (name == "alternating_stack") return IntrinsicKind::AlternatingStack;
    if (name == "haar_random") return IntrinsicKind::HaarRandom;
    if (name == "teleportation_task") return IntrinsicKind::TeleportationTask;
    throw std::invalid_argument("unknown intrinsic kind '" + name + "'");
}

json dataset_to_json(const Dataset& ds) {
    json j;
    j["schema_version"] = 1;
    j["n_in"] = ds.n_in;
    j["n_out"] = ds.n_out;
    j["provenance"] = {{"intrinsic", intrinsic_kind_name(ds.provenance.spec.kind)},
                       {"L", ds.provenance.spec.L},
                       {"seed", ds.provenance.seed},
                       {"corruption_ratio", ds.provenance.corruption_ratio},
                       {"product_form", ds.provenance.product_form},
                       {"intrinsic_unitary", mat_to_json(ds.provenance.intrinsic_unitary)}};
    j["pairs"] = json::array();
    for (const auto& [in, label] : ds.pairs)
        j["pairs"].push_back({{"input", vec_to_json(in.amps)}, {"label", vec_to_json(label.amps)}});
    return j;
}

Dataset dataset_from_json(const json& j) {
    Dataset ds;
    ds.n_in = j.at("n_in").get<int>();
    ds.n_out = j.at("n_out").get<int>();
    const json& prov = j.at("provenance");
    ds.provenance.spec.kind = intrinsic_kind_from_name(prov.at("intrinsic").get<std::string>());
    ds.provenance.spec.L = prov.at("L").get<int>();
    ds.provenance.seed = prov.at("seed").get<std::uint64_t>();
    ds.provenance.corruption_ratio = prov.at("corruption_ratio").get<double>();
    ds.provenance.product_form = prov.at("product_form").get<bool>();
    ds.provenance.intrinsic_unitary = mat_from_json(prov.at("intrinsic_unitary"));
    for (const auto& pj : j.at("pairs"))
        ds.pairs.emplace_back(PureState(ds.n_in, vec_from_json(pj.at("input"))),
                              PureState(ds.n_out, vec_from_json(pj.at("label"))));
    return ds;
}

std::string trace_to_csv(const TrainTrace& trace) {
    std::ostringstream out;
    out << "iter,train_loss,test_loss,wall_ms\n";
    for (const TraceRow& row : trace.rows) {
        out << row.iter << ',' << format_double(row.train_loss) << ','
            << (std::isnan(row.test_loss) ? std::string("nan") : format_double(row.test_loss)) << ',';
        char wall[32];
        std::snprintf(wall, sizeof(wall), "%.3f", row.wall_ms);
        out << wall << '\n';
    }
    return out.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
        f << content;
    }
    std::filesystem::rename(tmp, path);
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream out;
    out << f.rdbuf();
    return out.str();
}

void save_json(const json& j, const std::filesystem::path& path) {
    write_text_file(path, j.dump(2) + "\n");
}

json load_json(const std::filesystem::path& path) { return json::parse(read_text_file(path)); }

std::uint64_t content_hash(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

} // namespace dibom
