#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "eagle/errors.hpp"
#include "eagle/explain.hpp"
#include "eagle/train.hpp"

using namespace eagle;
namespace fs = std::filesystem;

namespace {

std::string temp_path(const std::string& name) {
    return (fs::temp_directory_path() / ("eagle_explain_" + name)).string();
}

struct Fixture {
    SupplyGraph graph;
    SplitBundle bundle;
    Checkpoint ckpt;

    Fixture() {
        SyntheticConfig cfg;
        cfg.n_regions = 4;
        cfg.n_days = 60;
        cfg.base_volume = 4;
        OrderTable table = generate_synthetic(cfg, 11);
        graph = build_graph(table);
        bundle = build_bundle(table, graph.index);

        ModelConfig model;
        model.d_model = 8;
        model.encoder_layers = 1;
        model.encoder_heads = 2;
        model.gat_layers = 2;
        model.gat_heads = 2;
        model.head_hidden = 8;
        TrainConfig tc;
        tc.epochs = 1;
        tc.seeds = {0};
        ckpt = train(bundle, graph, model, tc, 0).checkpoint;
    }
};

Fixture& fixture() {
    static Fixture fx;
    return fx;
}

}  // namespace

TEST_CASE("receiver and sender attributions conserve total attention mass") {
    Fixture& fx = fixture();
    RiskGraph recv = aggregate_risk(fx.ckpt, fx.bundle, fx.graph, Split::test, false);
    RiskGraph send = aggregate_risk(fx.ckpt, fx.bundle, fx.graph, Split::test, true);

    CHECK(recv.snapshots_aggregated ==
          static_cast<int64_t>(fx.bundle.split(Split::test).size()));
    CHECK_FALSE(recv.sender_attribution);
    CHECK(send.sender_attribution);

    // both attributions distribute the same per-edge mass, only to different ends
    double recv_total = 0, send_total = 0;
    for (double x : recv.raw_risk) {
        CHECK(x >= 0.0);
        recv_total += x;
    }
    for (double x : send.raw_risk) send_total += x;
    CHECK(recv_total == doctest::Approx(send_total).epsilon(1e-9));
    CHECK(recv.raw_risk != send.raw_risk);

    // per receiver, each head hands out at most mass 1 per snapshot
    double cap = static_cast<double>(recv.snapshots_aggregated) *
                 fx.ckpt.model_config.gat_layers * fx.ckpt.model_config.gat_heads;
    for (double x : recv.raw_risk) CHECK(x <= cap + 1e-9);
}

TEST_CASE("normalization spans [0, 1] and preserves the raw ranking") {
    Fixture& fx = fixture();
    RiskGraph risk = aggregate_risk(fx.ckpt, fx.bundle, fx.graph);
    double lo = 2.0, hi = -1.0;
    for (double x : risk.normalized_risk) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    CHECK(lo == doctest::Approx(0.0));
    CHECK(hi == doctest::Approx(1.0));
    for (size_t a = 0; a < risk.raw_risk.size(); ++a)
        for (size_t b = 0; b < risk.raw_risk.size(); ++b)
            if (risk.raw_risk[a] < risk.raw_risk[b])
                CHECK(risk.normalized_risk[a] < risk.normalized_risk[b] + 1e-15);
}

TEST_CASE("risk export round trips through the JSON format") {
    Fixture& fx = fixture();
    RiskGraph risk = aggregate_risk(fx.ckpt, fx.bundle, fx.graph);
    std::string path = temp_path("risk.json");
    export_risk(risk, fx.graph, "json", path);
    std::vector<double> back = load_risk_scores(path);
    REQUIRE(back.size() == risk.normalized_risk.size());
    for (size_t i = 0; i < back.size(); ++i)
        CHECK(back[i] == doctest::Approx(risk.normalized_risk[i]).epsilon(1e-12));
    std::remove(path.c_str());
}

TEST_CASE("dot and graphml exports carry per-node risk") {
    Fixture& fx = fixture();
    RiskGraph risk = aggregate_risk(fx.ckpt, fx.bundle, fx.graph);

    std::string dot_path = temp_path("risk.dot");
    export_risk(risk, fx.graph, "dot", dot_path);
    std::ifstream din(dot_path);
    std::string dot((std::istreambuf_iterator<char>(din)), std::istreambuf_iterator<char>());
    CHECK(dot.find("digraph risk") != std::string::npos);
    CHECK(dot.find("risk=\"") != std::string::npos);

    std::string gml_path = temp_path("risk.graphml");
    export_risk(risk, fx.graph, "graphml", gml_path);
    std::ifstream gin(gml_path);
    std::string gml((std::istreambuf_iterator<char>(gin)), std::istreambuf_iterator<char>());
    size_t nodes = 0;
    for (size_t p = gml.find("<node "); p != std::string::npos; p = gml.find("<node ", p + 1))
        ++nodes;
    CHECK(nodes == risk.raw_risk.size());

    std::remove(dot_path.c_str());
    std::remove(gml_path.c_str());
}

TEST_CASE("export and aggregation reject invalid requests") {
    Fixture& fx = fixture();
    RiskGraph risk = aggregate_risk(fx.ckpt, fx.bundle, fx.graph);

    CHECK_THROWS_AS(export_risk(risk, fx.graph, "csv", temp_path("x")), Error);
    try {
        export_risk(risk, fx.graph, "csv", temp_path("x"));
    } catch (const Error& e) {
        CHECK(e.exit_code() == 2);  // usage
    }
    RiskGraph empty;
    CHECK_THROWS_AS(export_risk(empty, fx.graph, "json", temp_path("x")), Error);
    CHECK_THROWS_AS(load_risk_scores(temp_path("does_not_exist.json")), Error);

    SUBCASE("empty split") {
        SplitBundle all_train = fx.bundle;
        for (auto& s : all_train.snapshots) s.split_tag = Split::train;
        CHECK_THROWS_WITH_AS(aggregate_risk(fx.ckpt, all_train, fx.graph, Split::val),
                             doctest::Contains("empty"), Error);
    }
    SUBCASE("node count mismatch") {
        Checkpoint c = fx.ckpt;
        c.n_nodes += 1;
        CHECK_THROWS_WITH_AS(aggregate_risk(c, fx.bundle, fx.graph),
                             doctest::Contains("mismatch"), Error);
    }
}
