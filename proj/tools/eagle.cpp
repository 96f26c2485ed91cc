#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include <CLI11.hpp>
#include <json.hpp>

#include "eagle/audit.hpp"
#include "eagle/digest.hpp"
#include "eagle/errors.hpp"
#include "eagle/explain.hpp"
#include "eagle/graph.hpp"
#include "eagle/metrics.hpp"
#include "eagle/model.hpp"
#include "eagle/orders.hpp"
#include "eagle/pipeline.hpp"
#include "eagle/snapshots.hpp"
#include "eagle/tensor.hpp"
#include "eagle/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace eagle;

namespace {

struct GlobalOpts {
    bool json_out = false;
    int threads = 1;
    int precision = 64;
};

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

ModelConfig load_model_config(const std::string& path) {
    if (path.empty()) return ModelConfig{};
    json j = json::parse(slurp(path));
    ModelConfig m = j.contains("model") ? ModelConfig::from_json(j["model"].dump())
                                        : ModelConfig::from_json(j.dump());
    m.validate();
    return m;
}

TrainConfig load_train_config(const std::string& path) {
    if (path.empty()) return TrainConfig{};
    json j = json::parse(slurp(path));
    TrainConfig t = j.contains("train") ? TrainConfig::from_json(j["train"].dump())
                                        : TrainConfig::from_json(j.dump());
    t.validate();
    return t;
}

Split split_from_string(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "val") return Split::val;
    if (s == "test") return Split::test;
    throw usage_error("unknown split '" + s + "' (expected train|val|test)");
}

void do_ingest(const std::string& csv, const std::string& schema_path, const std::string& out_dir,
               const GlobalOpts& g) {
    SchemaConfig schema =
        schema_path.empty() ? SchemaConfig::dataco_default() : SchemaConfig::from_json_file(schema_path);
    std::ifstream in(csv, std::ios::binary);
    if (!in) throw io_error("cannot open csv: " + csv);
    OrderTable table = parse_orders(in, schema);
    AuditReport audit = audit_features(schema, default_feature_manifest(schema));
    fs::create_directories(out_dir);
    save_order_table(table, out_dir + "/orders.csv");
    std::ofstream(out_dir + "/audit.json") << audit.to_json();
    IngestStats stats = ingest_stats(table);
    std::ofstream(out_dir + "/ingest_stats.json") << stats.to_json();
    if (g.json_out) {
        std::cout << stats.to_json() << "\n";
    } else {
        std::cout << "ingested " << stats.row_count << " orders over " << stats.day_span
                  << " days (" << table.dropped_rows << " dropped) -> " << out_dir << "\n";
    }
}

void do_synth(const std::string& config_path, uint64_t seed, const std::string& out_dir,
              const GlobalOpts& g) {
    SyntheticConfig cfg;
    if (!config_path.empty()) cfg = SyntheticConfig::from_json(slurp(config_path));
    OrderTable table = generate_synthetic(cfg, seed);
    SchemaConfig schema = SchemaConfig::synthetic_default();
    AuditReport audit = audit_features(schema, default_feature_manifest(schema));
    fs::create_directories(out_dir);
    save_order_table(table, out_dir + "/orders.csv");
    std::ofstream(out_dir + "/audit.json") << audit.to_json();
    IngestStats stats = ingest_stats(table);
    std::ofstream(out_dir + "/ingest_stats.json") << stats.to_json();
    if (g.json_out) std::cout << stats.to_json() << "\n";
    else
        std::cout << "generated " << stats.row_count << " synthetic orders over " << stats.day_span
                  << " days -> " << out_dir << "\n";
}

void do_graph(const std::string& orders_dir, const std::string& out_path, const GlobalOpts& g) {
    OrderTable table = load_order_table(orders_dir + "/orders.csv");
    SupplyGraph graph = build_graph(table);
    graph.save(out_path);
    if (g.json_out) {
        json j = {{"nodes", graph.index.count()},
                  {"edges", graph.edges.edge_count()},
                  {"lanes", graph.edges.lane_count()},
                  {"path", out_path}};
        std::cout << j.dump(2) << "\n";
    } else {
        std::cout << "graph: N=" << graph.index.count() << " E=" << graph.edges.edge_count()
                  << " lanes=" << graph.edges.lane_count() << " -> " << out_path << "\n";
    }
}

void do_graph_stats(const std::string& graph_path, const GlobalOpts& g) {
    SupplyGraph graph = SupplyGraph::load(graph_path);
    std::vector<int64_t> in_deg(graph.index.count(), 0), out_deg(graph.index.count(), 0);
    for (size_t e = 0; e < graph.edges.src.size(); ++e) {
        out_deg[static_cast<size_t>(graph.edges.src[e])]++;
        in_deg[static_cast<size_t>(graph.edges.dst[e])]++;
    }
    std::map<int64_t, int64_t> deg_hist;
    for (int32_t v = 0; v < graph.index.count(); ++v) deg_hist[in_deg[v] + out_deg[v]]++;
    if (g.json_out) {
        json j = {{"nodes", graph.index.count()},
                  {"edges", graph.edges.edge_count()},
                  {"lanes", graph.edges.lane_count()}};
        j["degree_distribution"] = json::object();
        for (auto& [d, c] : deg_hist) j["degree_distribution"][std::to_string(d)] = c;
        std::cout << j.dump(2) << "\n";
    } else {
        std::cout << "N=" << graph.index.count() << " E=" << graph.edges.edge_count()
                  << " lanes=" << graph.edges.lane_count() << "\n";
        std::cout << "degree distribution (degree: nodes):\n";
        for (auto& [d, c] : deg_hist) std::cout << "  " << d << ": " << c << "\n";
    }
}

void do_snapshots(const std::string& orders_dir, const std::string& graph_path, int window,
                  int stride, int horizon, const std::string& out_path, const GlobalOpts& g) {
    OrderTable table = load_order_table(orders_dir + "/orders.csv");
    SupplyGraph graph = SupplyGraph::load(graph_path);
    SplitBundle bundle = build_bundle(table, graph.index, window, stride, horizon);
    save_bundle(bundle, out_path);
    if (g.json_out) {
        json j = {{"snapshots", static_cast<int64_t>(bundle.snapshots.size())},
                  {"train", bundle.count(Split::train).snapshots},
                  {"val", bundle.count(Split::val).snapshots},
                  {"test", bundle.count(Split::test).snapshots},
                  {"path", out_path}};
        std::cout << j.dump(2) << "\n";
    } else {
        std::cout << "snapshots: " << bundle.snapshots.size() << " ("
                  << bundle.count(Split::train).snapshots << "/" << bundle.count(Split::val).snapshots
                  << "/" << bundle.count(Split::test).snapshots << ") -> " << out_path << "\n";
    }
}

void do_snapshot_stats(const std::string& bundle_path, const GlobalOpts& g) {
    SplitBundle bundle = load_bundle(bundle_path);
    auto rate = [](const SplitCounts& c) {
        int64_t n = c.positives + c.negatives;
        return n == 0 ? 0.0 : static_cast<double>(c.positives) / static_cast<double>(n);
    };
    const char* names[3] = {"train", "val", "test"};
    if (g.json_out) {
        json j;
        for (int s = 0; s < 3; ++s) {
            const auto& c = bundle.counts[static_cast<size_t>(s)];
            j[names[s]] = {{"snapshots", c.snapshots},
                           {"positives", c.positives},
                           {"negatives", c.negatives},
                           {"positive_rate", rate(c)}};
        }
        std::cout << j.dump(2) << "\n";
    } else {
        std::cout << "split counts: " << bundle.count(Split::train).snapshots << "/"
                  << bundle.count(Split::val).snapshots << "/" << bundle.count(Split::test).snapshots
                  << "\n";
        for (int s = 0; s < 3; ++s) {
            const auto& c = bundle.counts[static_cast<size_t>(s)];
            std::cout << "  " << names[s] << ": " << c.positives << " positive / "
                      << c.negatives << " negative (rate " << rate(c) << ")\n";
        }
    }
}

void do_train(const std::string& bundle_path, const std::string& graph_path,
              const std::string& config_path, uint64_t seed, const std::string& out_path,
              const std::string& history_path, const GlobalOpts& g) {
    SplitBundle bundle = load_bundle(bundle_path);
    SupplyGraph graph = SupplyGraph::load(graph_path);
    ModelConfig model = load_model_config(config_path);
    TrainConfig tc = load_train_config(config_path);
    TrainResult result = train(bundle, graph, model, tc, seed);
    result.checkpoint.save(out_path);
    if (!history_path.empty()) write_history_csv(result.history, history_path);
    if (g.json_out) {
        json j = {{"seed", seed},
                  {"best_epoch", result.checkpoint.best_epoch},
                  {"best_val_auc", result.checkpoint.best_val_auc},
                  {"checkpoint", out_path},
                  {"checkpoint_digest", digest_file(out_path)}};
        std::cout << j.dump(2) << "\n";
    } else {
        std::cout << "seed " << seed << ": best epoch " << result.checkpoint.best_epoch
                  << " val AUC " << result.checkpoint.best_val_auc << " -> " << out_path << "\n";
    }
}

void do_eval(const std::string& ckpt_path, const std::string& bundle_path,
             const std::string& graph_path, const std::string& split_name, double threshold,
             bool have_threshold, const GlobalOpts& g) {
    Checkpoint ckpt = Checkpoint::load(ckpt_path);
    SplitBundle bundle = load_bundle(bundle_path);
    SupplyGraph graph = SupplyGraph::load(graph_path);
    if (!have_threshold)
        threshold = calibrate_threshold(predict(ckpt, bundle, graph, Split::val));
    auto preds = predict(ckpt, bundle, graph, split_from_string(split_name));
    Metrics m = compute_metrics(preds, threshold);
    if (g.json_out) {
        json j = {{"split", split_name},       {"threshold", threshold},
                  {"f1_macro", m.f1_macro},    {"auc_roc", m.auc_roc},
                  {"mae_days", m.mae_days},    {"zero_baseline_mae", m.zero_baseline_mae}};
        std::cout << j.dump(2) << "\n";
    } else {
        std::cout << split_name << " @ theta=" << threshold << ": F1=" << m.f1_macro
                  << " AUC=" << m.auc_roc << " MAE=" << m.mae_days
                  << " (zero baseline " << m.zero_baseline_mae << ")\n";
    }
}

void do_ablate(const std::string& bundle_path, const std::string& graph_path,
               const std::string& config_path, const std::string& variant,
               const std::string& out_path, const GlobalOpts& g) {
    SplitBundle bundle = load_bundle(bundle_path);
    SupplyGraph graph = SupplyGraph::load(graph_path);
    ModelConfig model = load_model_config(config_path);
    TrainConfig tc = load_train_config(config_path);
    MetricsReport report =
        run_ablation(bundle, graph, model, tc, ablation_from_string(variant), g.threads);
    if (!out_path.empty()) std::ofstream(out_path) << report.to_json();
    if (g.json_out) std::cout << report.to_json() << "\n";
    else
        std::cout << report.variant << ": F1=" << report.f1_mean << "+-" << report.f1_std
                  << " AUC=" << report.auc_mean << " MAE=" << report.mae_mean << "\n";
}

void do_report(const std::string& runs_dir, const std::string& bundle_path,
               const std::string& graph_path, const std::string& out_path, const GlobalOpts& g) {
    SplitBundle bundle = load_bundle(bundle_path);
    SupplyGraph graph = SupplyGraph::load(graph_path);
    std::vector<std::string> ckpts;
    for (const auto& entry : fs::directory_iterator(runs_dir))
        if (entry.path().extension() == ".bin" &&
            entry.path().filename().string().rfind("ckpt", 0) == 0)
            ckpts.push_back(entry.path().string());
    std::sort(ckpts.begin(), ckpts.end());
    if (ckpts.size() < 2) throw data_error("report: need at least 2 checkpoints in " + runs_dir);
    MetricsReport report;
    for (const auto& path : ckpts) {
        Checkpoint ckpt = Checkpoint::load(path);
        report.variant = to_string(ckpt.model_config.ablation);
        double theta = calibrate_threshold(predict(ckpt, bundle, graph, Split::val));
        Metrics m = compute_metrics(predict(ckpt, bundle, graph, Split::test), theta);
        SeedResult s;
        s.seed = ckpt.seed;
        s.f1_macro = m.f1_macro;
        s.auc_roc = m.auc_roc;
        s.mae_days = m.mae_days;
        s.threshold = theta;
        s.best_epoch = ckpt.best_epoch;
        report.seeds.push_back(s);
        report.zero_baseline_mae = m.zero_baseline_mae;
    }
    auto mean_std = [&](auto getter, double& mean_out, double& std_out) {
        double sum = 0;
        for (const auto& s : report.seeds) sum += getter(s);
        mean_out = sum / static_cast<double>(report.seeds.size());
        double sq = 0;
        for (const auto& s : report.seeds) sq += (getter(s) - mean_out) * (getter(s) - mean_out);
        std_out = std::sqrt(sq / static_cast<double>(report.seeds.size() - 1));
    };
    mean_std([](const SeedResult& s) { return s.f1_macro; }, report.f1_mean, report.f1_std);
    mean_std([](const SeedResult& s) { return s.auc_roc; }, report.auc_mean, report.auc_std);
    mean_std([](const SeedResult& s) { return s.mae_days; }, report.mae_mean, report.mae_std);
    std::ofstream(out_path) << report.to_json();
    if (g.json_out) std::cout << report.to_json() << "\n";
    else
        std::cout << ckpts.size() << " runs: F1=" << report.f1_mean << "+-" << report.f1_std
                  << " AUC=" << report.auc_mean << " MAE=" << report.mae_mean << " -> " << out_path
                  << "\n";
}

void do_explain(const std::string& ckpt_path, const std::string& bundle_path,
                const std::string& graph_path, const std::string& split_name,
                const std::string& format, bool sender, const std::string& out_path,
                const GlobalOpts& g) {
    Checkpoint ckpt = Checkpoint::load(ckpt_path);
    SplitBundle bundle = load_bundle(bundle_path);
    SupplyGraph graph = SupplyGraph::load(graph_path);
    RiskGraph risk = aggregate_risk(ckpt, bundle, graph, split_from_string(split_name), sender);
    export_risk(risk, graph, format, out_path);
    if (g.json_out) {
        json j = {{"snapshots_aggregated", risk.snapshots_aggregated},
                  {"format", format},
                  {"path", out_path}};
        std::cout << j.dump(2) << "\n";
    } else {
        std::cout << "risk over " << risk.snapshots_aggregated << " snapshots -> " << out_path
                  << " (" << format << ")\n";
    }
}

void do_end_to_end(const std::string& config_path, const std::string& preset,
                   const std::string& csv, const std::string& out_dir, const GlobalOpts& g) {
    PipelineConfig cfg;
    if (!preset.empty()) {
        if (preset != "paper") throw usage_error("unknown preset '" + preset + "'");
        if (csv.empty()) throw usage_error("--preset paper requires --csv <dataset>");
        cfg = PipelineConfig::paper_preset(csv);
    } else if (!config_path.empty()) {
        cfg = PipelineConfig::from_json_file(config_path);
    }  // defaults: synthetic input with paper hyperparameters
    std::string dir = out_dir;
    if (dir.empty()) {
        const char* env = std::getenv("EAGLE_CACHE_DIR");
        dir = env ? env : "eagle_out";
    }
    PipelineResult result = end_to_end(cfg, dir, g.threads);
    if (g.json_out) {
        json j = json::parse(result.report.to_json());
        j["stages_executed"] = result.stages_executed;
        j["out_dir"] = dir;
        std::cout << j.dump(2) << "\n";
    } else {
        std::cout << "stages executed:";
        if (result.stages_executed.empty()) std::cout << " (all cached)";
        for (const auto& s : result.stages_executed) std::cout << " " << s;
        std::cout << "\nF1=" << result.report.f1_mean << "+-" << result.report.f1_std
                  << " AUC=" << result.report.auc_mean << " MAE=" << result.report.mae_mean
                  << " -> " << dir << "\n";
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"delivery-delay prediction over dynamic supply graphs"};
    app.require_subcommand(1);
    GlobalOpts g;
    app.add_flag("--json", g.json_out, "machine-readable output on stdout");
    app.add_option("--threads", g.threads, "seed-level parallelism bound")->check(CLI::PositiveNumber);
    app.add_option("--precision", g.precision, "float width for forward math")
        ->check(CLI::IsMember({32, 64}));

    std::string csv, schema, out, orders_dir, graph_path, bundle_path, ckpt_path, config_path;
    std::string history_path, split_name = "test", format = "json", variant, runs_dir, preset;
    uint64_t seed = 0;
    int window = 14, stride = 1, horizon = 14;
    double threshold = 0.5;
    bool sender = false;

    auto* ingest = app.add_subcommand("ingest", "parse a raw order CSV into the canonical table");
    ingest->add_option("--csv", csv)->required();
    ingest->add_option("--schema", schema);
    ingest->add_option("--out", out)->required();

    auto* synth = app.add_subcommand("synth", "generate a synthetic order table");
    synth->add_option("--config", config_path);
    synth->add_option("--seed", seed);
    synth->add_option("--out", out)->required();

    auto* graph_cmd = app.add_subcommand("graph", "build the supply graph from an order table");
    graph_cmd->add_option("--orders", orders_dir);
    graph_cmd->add_option("--out", out);
    auto* graph_stats = graph_cmd->add_subcommand("stats", "print graph statistics");
    graph_stats->add_option("--graph", graph_path)->required();

    auto* snaps = app.add_subcommand("snapshots", "build windowed snapshots and splits");
    snaps->add_option("--orders", orders_dir);
    snaps->add_option("--graph", graph_path);
    snaps->add_option("--window", window);
    snaps->add_option("--stride", stride);
    snaps->add_option("--horizon", horizon);
    snaps->add_option("--out", out);
    auto* snap_stats = snaps->add_subcommand("stats", "print split counts and positive rates");
    snap_stats->add_option("--bundle", bundle_path)->required();

    auto* train_cmd = app.add_subcommand("train", "train one seed");
    train_cmd->add_option("--bundle", bundle_path)->required();
    train_cmd->add_option("--graph", graph_path)->required();
    train_cmd->add_option("--config", config_path);
    train_cmd->add_option("--seed", seed);
    train_cmd->add_option("--out", out)->required();
    train_cmd->add_option("--history", history_path);

    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a split");
    eval_cmd->add_option("--ckpt", ckpt_path)->required();
    eval_cmd->add_option("--bundle", bundle_path)->required();
    eval_cmd->add_option("--graph", graph_path)->required();
    eval_cmd->add_option("--split", split_name);
    auto* thr_opt = eval_cmd->add_option("--threshold", threshold);

    auto* ablate = app.add_subcommand("ablate", "train and evaluate an ablation variant");
    ablate->add_option("--variant", variant)->required()->check(CLI::IsMember({"A1", "A2", "A3", "full"}));
    ablate->add_option("--bundle", bundle_path)->required();
    ablate->add_option("--graph", graph_path)->required();
    ablate->add_option("--config", config_path);
    ablate->add_option("--out", out);

    auto* report = app.add_subcommand("report", "aggregate checkpoints into a metrics report");
    report->add_option("--runs", runs_dir)->required();
    report->add_option("--bundle", bundle_path)->required();
    report->add_option("--graph", graph_path)->required();
    report->add_option("--out", out)->required();

    auto* explain = app.add_subcommand("explain", "export attention-derived hub risk");
    explain->add_option("--ckpt", ckpt_path)->required();
    explain->add_option("--bundle", bundle_path)->required();
    explain->add_option("--graph", graph_path)->required();
    explain->add_option("--split", split_name);
    explain->add_option("--format", format)->check(CLI::IsMember({"json", "dot", "graphml"}));
    explain->add_flag("--sender", sender, "attribute risk to sending nodes");
    explain->add_option("--out", out)->required();

    auto* e2e = app.add_subcommand("end-to-end", "run the full cached pipeline");
    e2e->add_option("--config", config_path);
    e2e->add_option("--preset", preset);
    e2e->add_option("--csv", csv);
    e2e->add_option("--out", out);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : static_cast<int>(ErrorClass::usage);
    }

    try {
        ad::set_precision(g.precision == 32 ? ad::Precision::f32 : ad::Precision::f64);
        if (*ingest) do_ingest(csv, schema, out, g);
        else if (*synth) do_synth(config_path, seed, out, g);
        else if (*graph_cmd) {
            if (*graph_stats) do_graph_stats(graph_path, g);
            else {
                if (orders_dir.empty() || out.empty())
                    throw usage_error("graph requires --orders and --out");
                do_graph(orders_dir, out, g);
            }
        } else if (*snaps) {
            if (*snap_stats) do_snapshot_stats(bundle_path, g);
            else {
                if (orders_dir.empty() || graph_path.empty() || out.empty())
                    throw usage_error("snapshots requires --orders, --graph and --out");
                do_snapshots(orders_dir, graph_path, window, stride, horizon, out, g);
            }
        } else if (*train_cmd) {
            do_train(bundle_path, graph_path, config_path, seed, out, history_path, g);
        } else if (*eval_cmd) {
            do_eval(ckpt_path, bundle_path, graph_path, split_name, threshold, thr_opt->count() > 0,
                    g);
        } else if (*ablate) {
            do_ablate(bundle_path, graph_path, config_path, variant, out, g);
        } else if (*report) {
            do_report(runs_dir, bundle_path, graph_path, out, g);
        } else if (*explain) {
            do_explain(ckpt_path, bundle_path, graph_path, split_name, format, sender, out, g);
        } else if (*e2e) {
            do_end_to_end(config_path, preset, csv, out, g);
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
