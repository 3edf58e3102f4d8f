#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "gridsafe/dataset_io.hpp"
#include "gridsafe/hetero.hpp"
#include "test_util.hpp"

using namespace gridsafe;

TEST_CASE("embed_grid: case9 node census") {
    Grid g = testutil::case9();
    HeteroGraph h = embed_grid(g);
    CHECK(h.nodes.at("bus").count() == 9);
    CHECK(h.nodes.at("generator").count() == 2);
    CHECK(h.nodes.at("slack").count() == 1);
    CHECK(h.nodes.at("load").count() == 3);
    CHECK(h.nodes.at("line").count() == 9);
    CHECK(h.nodes.at("transformer").count() == 0);
    CHECK(h.nodes.at("capacitor").count() == 0);
}

TEST_CASE("embed_grid: shunts become capacitor nodes wired to their bus") {
    Grid g = testutil::case30();  // shunts at buses 5 and 24
    HeteroGraph h = embed_grid(g);
    CHECK(h.nodes.at("capacitor").count() == 2);
    int cap_edges = 0;
    for (const auto& e : h.edges)
        if (e.type_b == "capacitor") {
            ++cap_edges;
            CHECK(e.type_a == "bus");
        }
    CHECK(cap_edges == 2);
}

TEST_CASE("embed_grid: every edge endpoint references an existing node") {
    for (const char* name : {"case9", "case30", "case118"}) {
        Grid g = load_case(name);
        HeteroGraph h = embed_grid(g);
        for (const auto& e : h.edges) {
            CHECK(e.index_a >= 0);
            CHECK(e.index_a < h.nodes.at(e.type_a).count());
            CHECK(e.index_b >= 0);
            CHECK(e.index_b < h.nodes.at(e.type_b).count());
        }
        // no duplicate unordered pairs
        std::set<std::tuple<std::string, int, std::string, int>> seen;
        for (const auto& e : h.edges) {
            auto key = std::make_tuple(e.type_a, e.index_a, e.type_b, e.index_b);
            CHECK(seen.insert(key).second);
        }
        // branch-like nodes connect exactly two buses, devices exactly one
        for (const char* t : {"line", "transformer"}) {
            std::vector<int> deg(h.nodes.at(t).count(), 0);
            for (const auto& e : h.edges)
                if (e.type_b == t) ++deg[e.index_b];
            for (int d : deg) CHECK(d == 2);
        }
        for (const char* t : {"generator", "slack", "load", "capacitor"}) {
            std::vector<int> deg(h.nodes.at(t).count(), 0);
            for (const auto& e : h.edges)
                if (e.type_b == t) ++deg[e.index_b];
            for (int d : deg) CHECK(d == 1);
        }
    }
}

TEST_CASE("embedding is lossless for admittance assembly") {
    for (const char* name : {"case9", "case30", "case118"}) {
        CAPTURE(name);
        Grid g = load_case(name);
        HeteroGraph h = embed_grid(g);
        Grid back = topology_from_embedding(h);
        Eigen::MatrixXcd Y1(build_admittance(g).Y);
        Eigen::MatrixXcd Y2(build_admittance(back).Y);
        double worst = 0.0;
        for (int r = 0; r < Y1.rows(); ++r)
            for (int c = 0; c < Y1.cols(); ++c)
                worst = std::max(worst, std::abs(Y1(r, c) - Y2(r, c)) /
                                            std::max(1.0, std::abs(Y1(r, c))));
        CHECK(worst < 1e-14);
    }
}

TEST_CASE("attach_labels: round trip and sizing") {
    Grid g = testutil::case9();
    PFResult pf = solve_powerflow(g);
    HeteroGraph h = attach_labels(embed_grid(g), pf.solution);
    CHECK(h.labeled);
    CHECK(h.label_count() == 24);  // 2 * (9 + 2 + 1)

    GridSolution back = solution_from_labels(h);
    CHECK(back == pf.solution);

    // attaching a solution of the wrong size must fail
    Grid g30 = testutil::case30();
    PFResult pf30 = solve_powerflow(g30);
    CHECK_THROWS_AS(attach_labels(embed_grid(g), pf30.solution), DimensionError);
}

TEST_CASE("feature schema: golden case9 embedding") {
    Grid g = testutil::case9();
    HeteroGraph h = embed_grid(g);
    Json j = hetero_to_json(h);

    const std::string golden_path = std::string(GRIDSAFE_GOLDEN_DIR) + "/case9_embed.json";
    std::ifstream in(golden_path);
    REQUIRE_MESSAGE(in.good(), "golden file missing: " << golden_path);
    Json golden = Json::parse(in);
    CHECK(j == golden);
}

TEST_CASE("dataset export/import round trip") {
    Grid g = testutil::case9();
    MutationSpec spec;
    spec.seed = 11;
    MutationSpec line_spec = spec;
    line_spec.scenario = Scenario::LineOutage;
    Dataset ds = generate_dataset(g, Task::PF, spec, line_spec, 10, 5);

    const std::string dir = (std::filesystem::temp_directory_path() / "gridsafe_ds_rt").string();
    std::filesystem::remove_all(dir);
    const std::string digest = export_dataset(ds, dir);
    CHECK(digest == dataset_digest(ds));

    Dataset back = import_dataset(dir);
    CHECK(back.task == ds.task);
    CHECK(back.case_name == ds.case_name);
    CHECK(back.base_grid == ds.base_grid);
    REQUIRE(back.train.size() == ds.train.size());
    REQUIRE(back.test.size() == ds.test.size());
    for (std::size_t i = 0; i < ds.train.size(); ++i) {
        CHECK(back.train[i].draw_index == ds.train[i].draw_index);
        CHECK(back.train[i].grid == ds.train[i].grid);
        CHECK(back.train[i].solution == ds.train[i].solution);
        CHECK(back.train[i].metadata == ds.train[i].metadata);
    }
    for (std::size_t i = 0; i < ds.test.size(); ++i) {
        CHECK(back.test[i].grid == ds.test[i].grid);
        CHECK(back.test[i].solution == ds.test[i].solution);
    }
}

TEST_CASE("dataset import: corruption is detected via the digest") {
    Grid g = testutil::case9();
    MutationSpec spec;
    spec.seed = 21;
    Dataset ds = generate_dataset(g, Task::PF, spec, spec, 3, 2);
    const std::string dir =
        (std::filesystem::temp_directory_path() / "gridsafe_ds_corrupt").string();
    std::filesystem::remove_all(dir);
    export_dataset(ds, dir);

    // flip one byte in an entry
    const std::string path = dir + "/train.jsonl";
    std::string text = read_file(path);
    auto pos = text.find("\"mult\":");
    REQUIRE(pos != std::string::npos);
    text[pos + 8] = text[pos + 8] == '1' ? '2' : '1';
    std::ofstream(path, std::ios::binary) << text;

    CHECK_THROWS_WITH_AS(import_dataset(dir), doctest::Contains("digest"), SchemaError);
}

TEST_CASE("dataset digest is reproducible across generation runs and workers") {
    Grid g = testutil::case9();
    MutationSpec spec;
    spec.seed = 31;
    GenerateOptions w1;
    w1.workers = 1;
    GenerateOptions w8;
    w8.workers = 8;
    Dataset a = generate_dataset(g, Task::PF, spec, spec, 12, 4, w1);
    Dataset b = generate_dataset(g, Task::PF, spec, spec, 12, 4, w8);
    CHECK(dataset_digest(a) == dataset_digest(b));

    MutationSpec other = spec;
    other.seed = 32;
    Dataset c = generate_dataset(g, Task::PF, other, other, 12, 4, w1);
    CHECK(dataset_digest(a) != dataset_digest(c));
}
