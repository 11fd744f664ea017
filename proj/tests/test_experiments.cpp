#include "dibom/experiments.hpp"
#include "dibom/training.hpp"

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace dibom;

namespace {

struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& name)
        : path(std::filesystem::temp_directory_path() / ("dibom_test_" + name)) {
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
};

/// CSV body with the given comma-separated columns dropped (wall-clock
/// columns are excluded from byte-identity comparisons).
std::string without_columns(const std::string& csv, const std::vector<std::string>& drop) {
    std::istringstream in(csv);
    std::ostringstream out;
    std::string header;
    std::getline(in, header);
    std::vector<std::string> names;
    std::vector<bool> keep;
    {
        std::istringstream hs(header);
        std::string col;
        while (std::getline(hs, col, ',')) {
            names.push_back(col);
            keep.push_back(std::find(drop.begin(), drop.end(), col) == drop.end());
        }
    }
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string cell;
        bool first = true;
        for (std::size_t i = 0; std::getline(ls, cell, ','); ++i) {
            if (i < keep.size() && !keep[i]) continue;
            if (!first) out << ',';
            out << cell;
            first = false;
        }
        out << '\n';
    }
    return out.str();
}

} // namespace

TEST_CASE("config validation") {
    for (const std::string& kind :
         {"train", "compare", "fbe", "landscape", "teleport", "corrupt", "barren", "params",
          "dataset_gen"})
        CHECK_NOTHROW(validate_config(default_config(kind)));

    json bad = default_config("train");
    bad["experiment"] = "mystery";
    CHECK_THROWS_AS(validate_config(bad), ConfigError);

    json no_seeds = default_config("train");
    no_seeds.erase("seeds");
    CHECK_THROWS_AS(validate_config(no_seeds), ConfigError);

    json bad_ratio = default_config("corrupt");
    bad_ratio["ratios"] = {0.2, 1.5};
    CHECK_THROWS_AS(validate_config(bad_ratio), ConfigError);

    json bad_version = default_config("params");
    bad_version["schema_version"] = 2;
    CHECK_THROWS_AS(validate_config(bad_version), ConfigError);

    json bad_training = default_config("train");
    bad_training["training"]["lambda"] = -1.0;
    CHECK_THROWS_AS(validate_config(bad_training), ConfigError);

    json bad_intrinsic = default_config("train");
    bad_intrinsic["dataset"]["intrinsic"] = "nope";
    CHECK_THROWS_AS(validate_config(bad_intrinsic), ConfigError);
}

TEST_CASE("aligned dibom reproduces the intrinsic exactly") {
    for (IntrinsicKind kind : {IntrinsicKind::SingleQubitOnQ2, IntrinsicKind::GCZLayer,
                               IntrinsicKind::SingleQubitTimesGCZ, IntrinsicKind::ProductThenGCZ}) {
        Dataset ds = gen_dataset({kind, 1}, 2, 4, 21);
        Circuit aligned = aligned_dibom(ds.provenance, 2, 5);
        CHECK(max_abs_diff(circuit_unitary(aligned), ds.provenance.intrinsic_unitary) < 1e-12);
    }
    // stacked intrinsics need enough slots
    Dataset deep = gen_dataset({IntrinsicKind::AlternatingStack, 4}, 2, 4, 21);
    CHECK(max_abs_diff(circuit_unitary(aligned_dibom(deep.provenance, 2, 4)),
                       deep.provenance.intrinsic_unitary) < 1e-12);
    CHECK_THROWS_AS(aligned_dibom(deep.provenance, 2, 2), ConfigError);
    Dataset haar = gen_dataset({IntrinsicKind::HaarRandom, 1}, 2, 4, 21);
    CHECK_THROWS_AS(aligned_dibom(haar.provenance, 2, 5), ConfigError);
}

TEST_CASE("run_train outputs and determinism") {
    TempDir dir("train");
    json config = default_config("train");
    config["seeds"] = {0};
    config["training"]["max_iters"] = 40;
    RunContext ctx{dir.path, 1, false};
    run_from_config(config, ctx);

    CHECK(std::filesystem::exists(dir.path / "trace_seed0.csv"));
    CHECK(std::filesystem::exists(dir.path / "model_seed0.json"));
    const json meta = load_json(dir.path / "meta.json");
    CHECK(meta.at("experiment") == "train");
    CHECK(meta.at("config").dump() == config.dump());
    CHECK(meta.at("outputs").at("traces").size() == 1);

    const std::string first = read_text_file(dir.path / "trace_seed0.csv");
    CHECK(first.rfind("iter,train_loss,test_loss,wall_ms\n", 0) == 0);

    // rerun: loss columns byte-identical (wall_ms is wall-clock)
    run_from_config(config, ctx);
    const std::string second = read_text_file(dir.path / "trace_seed0.csv");
    CHECK(without_columns(first, {"wall_ms"}) == without_columns(second, {"wall_ms"}));

    // a threaded rerun over several seeds matches the serial one
    json multi = config;
    multi["seeds"] = {0, 1, 2};
    run_from_config(multi, RunContext{dir.path, 2, false});
    std::vector<std::string> threaded;
    for (int s = 0; s < 3; ++s)
        threaded.push_back(read_text_file(dir.path / ("trace_seed" + std::to_string(s) + ".csv")));
    run_from_config(multi, RunContext{dir.path, 1, false});
    for (int s = 0; s < 3; ++s) {
        const std::string serial =
            read_text_file(dir.path / ("trace_seed" + std::to_string(s) + ".csv"));
        CHECK(without_columns(threaded[s], {"wall_ms"}) == without_columns(serial, {"wall_ms"}));
    }
}

TEST_CASE("run_landscape places the minimum at the aligned optimum") {
    TempDir dir("landscape");
    json config = default_config("landscape");
    config["resolution"] = 7;
    RunContext ctx{dir.path, 1, false};
    run_from_config(config, ctx);

    std::ifstream csv(dir.path / "landscape.csv");
    std::string header;
    std::getline(csv, header);
    CHECK(header == "p1,p2,loss");
    const json meta = load_json(dir.path / "meta.json");
    const double p1_opt = meta.at("outputs").at("optimum").at("p1").get<double>();
    const double p2_opt = meta.at("outputs").at("optimum").at("p2").get<double>();

    double best_loss = 1e9, best_p1 = 0, best_p2 = 0, corner_min = 1e9;
    double p1_lo = 1e9, p1_hi = -1e9, p2_lo = 1e9, p2_hi = -1e9;
    std::vector<std::array<double, 3>> rows;
    std::string line;
    while (std::getline(csv, line)) {
        std::istringstream ls(line);
        std::string a, b, c;
        std::getline(ls, a, ',');
        std::getline(ls, b, ',');
        std::getline(ls, c, ',');
        const double p1 = std::stod(a), p2 = std::stod(b), loss = std::stod(c);
        rows.push_back({p1, p2, loss});
        CHECK(loss >= 0.0);
        CHECK(loss <= 1.0 + 1e-9);
        if (loss < best_loss) {
            best_loss = loss;
            best_p1 = p1;
            best_p2 = p2;
        }
        p1_lo = std::min(p1_lo, p1);
        p1_hi = std::max(p1_hi, p1);
        p2_lo = std::min(p2_lo, p2);
        p2_hi = std::max(p2_hi, p2);
    }
    for (const auto& [p1, p2, loss] : rows)
        if ((p1 == p1_lo || p1 == p1_hi) && (p2 == p2_lo || p2 == p2_hi))
            corner_min = std::min(corner_min, loss);
    CHECK(best_p1 == doctest::Approx(p1_opt).epsilon(1e-12));
    CHECK(best_p2 == doctest::Approx(p2_opt).epsilon(1e-12));
    CHECK(best_loss < 1e-10);
    CHECK(best_loss < corner_min);
}

TEST_CASE("run_params emits the anchor row") {
    TempDir dir("params");
    RunContext ctx{dir.path, 1, false};
    run_from_config(default_config("params"), ctx);
    const std::string table = read_text_file(dir.path / "params_table.csv");
    CHECK(table.rfind("kind,n,L,params\n", 0) == 0);
    CHECK(table.find("dibom,3,2241,13449\n") != std::string::npos);
    CHECK(table.find("dibom,2,5,20\n") != std::string::npos);
    CHECK(table.find("dissipative,2,5,255\n") != std::string::npos);
}

TEST_CASE("run_dataset_gen writes a loadable dataset") {
    TempDir dir("dataset");
    json config = default_config("dataset_gen");
    config["dataset"]["num_samples"] = 4;
    RunContext ctx{dir.path, 1, false};
    run_from_config(config, ctx);
    Dataset ds = dataset_from_json(load_json(dir.path / "dataset.json"));
    CHECK(ds.size() == 4);
    const json meta = load_json(dir.path / "meta.json");
    CHECK(meta.at("outputs").contains("dataset_hash"));
}

TEST_CASE("run_compare shares the dataset and emits the params table") {
    TempDir dir("compare");
    json config = default_config("compare");
    config["seeds"] = {0};
    config["training"]["max_iters"] = 10;
    RunContext ctx{dir.path, 1, false};
    run_from_config(config, ctx);
    const json meta = load_json(dir.path / "meta.json");
    const json& traces = meta.at("outputs").at("traces");
    CHECK(traces.size() == 4);
    const auto shared = meta.at("outputs").at("dataset_hash").get<std::uint64_t>();
    for (const json& t : traces) {
        CHECK(t.at("dataset_hash").get<std::uint64_t>() == shared);
        CHECK(std::filesystem::exists(dir.path / t.at("file").get<std::string>()));
    }
    const std::string table = read_text_file(dir.path / "params_table.csv");
    CHECK(table.find("dibom,3,2241,13449\n") != std::string::npos);
}

TEST_CASE("run_barren emits plateau metrics") {
    TempDir dir("barren");
    json config = default_config("barren");
    config["n_list"] = {2};
    config["seeds"] = {0};
    config["training"]["max_iters"] = 30;
    RunContext ctx{dir.path, 1, false};
    run_from_config(config, ctx);
    const std::string metrics = read_text_file(dir.path / "plateau_metrics.csv");
    CHECK(metrics.rfind("n,loss_kind,seed,final_train_loss,iters_to_threshold,longest_flat_run\n", 0) ==
          0);
    CHECK(metrics.find("2,local,0,") != std::string::npos);
    CHECK(metrics.find("2,global,0,") != std::string::npos);
    CHECK(std::filesystem::exists(dir.path / "barren_n2_local_seed0.csv"));
}

TEST_CASE("run_teleport records the ablation metadata") {
    TempDir dir("teleport");
    json config = default_config("teleport");
    config["seeds"] = {0};
    config["training"]["max_iters"] = 40;
    RunContext ctx{dir.path, 1, false};
    run_from_config(config, ctx);
    const json meta = load_json(dir.path / "meta.json");
    bool saw_with = false, saw_without = false;
    for (const json& run : meta.at("outputs").at("runs")) {
        if (run.at("variant") == "with_control") {
            saw_with = true;
            CHECK(run.at("branch_parameters").get<long>() == 12);
        } else {
            saw_without = true;
            CHECK(run.at("branch_parameters").get<long>() == 0);
        }
    }
    CHECK(saw_with);
    CHECK(saw_without);
}

TEST_CASE("run_corruption sweeps ratios") {
    TempDir dir("corrupt");
    json config = default_config("corrupt");
    config["seeds"] = {0};
    config["ratios"] = {0.0, 0.5};
    config["training"]["max_iters"] = 20;
    RunContext ctx{dir.path, 1, false};
    run_from_config(config, ctx);
    const std::string csv = read_text_file(dir.path / "corruption.csv");
    CHECK(csv.rfind("ratio,seed,final_train_loss,clean_test_loss\n", 0) == 0);
    CHECK(csv.find("\n0.5,0,") != std::string::npos);
}

TEST_CASE("run_fbe fast profile is disclosed") {
    TempDir dir("fbe");
    json config = default_config("fbe");
    config["L_list"] = {3};
    config["architectures"] = {"dibom"};
    config["fbe"]["k"] = 4;
    config["fbe"]["m"] = 3;
    config["fbe"]["inner_iters"] = 5;
    config["frontier"] = false;
    RunContext ctx{dir.path, 2, true};
    run_from_config(config, ctx);
    const json meta = load_json(dir.path / "meta.json");
    CHECK(meta.at("fast_profile") == true);
    CHECK(meta.at("outputs").at("fbe_profile").at("reduced_profile") == true);
    const std::string csv = read_text_file(dir.path / "fbe_dibom.csv");
    CHECK(csv.rfind("L,params,fbe,seconds\n", 0) == 0);
}

TEST_CASE("cli binary") {
#ifdef DIBOM_CLI_PATH
    TempDir dir("cli");
    const std::string cli = DIBOM_CLI_PATH;
    const std::string out = (dir.path / "run").string();
    CHECK(std::system((cli + " params --out-dir " + out + " > /dev/null 2>&1").c_str()) == 0);
    CHECK(std::filesystem::exists(dir.path / "run" / "params_table.csv"));

    // invalid config file: exit code 2
    const std::filesystem::path bad = dir.path / "bad.json";
    write_text_file(bad, "{\"schema_version\": 1, \"experiment\": \"mystery\"}\n");
    const int rc = std::system((cli + " train --config " + bad.string() + " > /dev/null 2>&1").c_str());
    CHECK(WEXITSTATUS(rc) == 2);

    // print-config emits a valid schema
    const int rc2 =
        std::system((cli + " barren --print-config > " + (dir.path / "cfg.json").string()).c_str());
    CHECK(rc2 == 0);
    CHECK_NOTHROW(validate_config(load_json(dir.path / "cfg.json")));
#endif
}
