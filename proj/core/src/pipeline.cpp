#include "eagle/pipeline.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "eagle/audit.hpp"
#include "eagle/digest.hpp"
#include "eagle/errors.hpp"

namespace eagle {

namespace fs = std::filesystem;
using nlohmann::json;

std::string PipelineConfig::to_json() const {
    json j;
    if (!csv_path.empty()) {
        j["csv"] = csv_path;
        if (!schema_path.empty()) j["schema"] = schema_path;
    } else {
        j["synthetic"] = json::parse(synthetic.to_json());
        j["synthetic_seed"] = synthetic_seed;
    }
    j["window"] = window;
    j["stride"] = stride;
    j["horizon"] = horizon;
    j["model"] = json::parse(model.to_json());
    j["train"] = json::parse(train.to_json());
    return j.dump(2);
}

PipelineConfig PipelineConfig::from_json(const std::string& json_text) {
    json j = json::parse(json_text);
    PipelineConfig c;
    c.csv_path = j.value("csv", "");
    c.schema_path = j.value("schema", "");
    if (j.contains("synthetic")) c.synthetic = SyntheticConfig::from_json(j.at("synthetic").dump());
    c.synthetic_seed = j.value("synthetic_seed", c.synthetic_seed);
    c.window = j.value("window", c.window);
    c.stride = j.value("stride", c.stride);
    c.horizon = j.value("horizon", c.horizon);
    if (j.contains("model")) c.model = ModelConfig::from_json(j.at("model").dump());
    if (j.contains("train")) c.train = TrainConfig::from_json(j.at("train").dump());
    return c;
}

PipelineConfig PipelineConfig::from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open pipeline config: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return from_json(ss.str());
    } catch (const json::exception& e) {
        throw data_error("malformed pipeline config " + path + ": " + e.what());
    }
}

PipelineConfig PipelineConfig::paper_preset(const std::string& csv_path) {
    PipelineConfig c;  // model/train defaults already carry the paper values
    c.csv_path = csv_path;
    return c;
}

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& body) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot write " + path);
    out << body;
}

// Content-keyed stage runner over the manifest.
class StageRunner {
public:
    StageRunner(const std::string& out_dir, json& manifest, json prev_manifest,
                std::vector<std::string>& executed)
        : out_dir_(out_dir), manifest_(manifest), prev_(std::move(prev_manifest)),
          executed_(executed) {}

    template <typename Fn>
    void run(const std::string& name, const std::string& key,
             const std::vector<std::string>& outputs, Fn&& fn) {
        bool cached = false;
        if (prev_.contains("stages") && prev_["stages"].contains(name) &&
            prev_["stages"][name]["key"] == key) {
            cached = true;
            for (const auto& out : outputs) {
                std::string path = out_dir_ + "/" + out;
                if (!fs::exists(path)) {
                    cached = false;
                    break;
                }
                std::string recorded = prev_["stages"][name]["outputs"].value(out, "");
                if (digest_file(path) != recorded)
                    throw data_error("digest mismatch for cached artifact '" + out +
                                     "' of stage '" + name + "'; remove it or the manifest");
            }
        }
        json entry;
        entry["key"] = key;
        if (cached) {
            entry["outputs"] = prev_["stages"][name]["outputs"];
            entry["cached"] = true;
            entry["seconds"] = 0.0;
        } else {
            auto start = std::chrono::steady_clock::now();
            try {
                fn();
            } catch (const Error&) {
                throw;
            } catch (const std::exception& e) {
                throw data_error("stage '" + name + "' failed: " + e.what());
            }
            double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
                              .count();
            entry["outputs"] = json::object();
            for (const auto& out : outputs)
                entry["outputs"][out] = digest_file(out_dir_ + "/" + out);
            entry["cached"] = false;
            entry["seconds"] = secs;
            executed_.push_back(name);
        }
        manifest_["stages"][name] = entry;
    }

private:
    std::string out_dir_;
    json& manifest_;
    json prev_;
    std::vector<std::string>& executed_;
};

}  // namespace

PipelineResult end_to_end(const PipelineConfig& config, const std::string& out_dir, int threads) {
    fs::create_directories(out_dir);
    std::string manifest_path = out_dir + "/manifest.json";
    json prev = json::object();
    if (fs::exists(manifest_path)) {
        try {
            prev = json::parse(read_file(manifest_path));
        } catch (const json::exception&) {
            prev = json::object();  // unreadable manifest: rebuild everything
        }
    }

    std::string config_json = config.to_json();
    json manifest;
    manifest["config_digest"] = digest_bytes(config_json);
    manifest["seeds"] = config.train.seeds;
    manifest["inputs"] = json::object();

    PipelineResult result;
    StageRunner runner(out_dir, manifest, prev, result.stages_executed);

    SchemaConfig schema;
    std::string input_key;
    if (!config.csv_path.empty()) {
        schema = config.schema_path.empty() ? SchemaConfig::dataco_default()
                                            : SchemaConfig::from_json_file(config.schema_path);
        input_key = digest_file(config.csv_path);
        manifest["inputs"]["csv"] = input_key;
    } else {
        schema = SchemaConfig::synthetic_default();
        input_key = digest_bytes(config.synthetic.to_json() + "#" +
                                 std::to_string(config.synthetic_seed));
        manifest["inputs"]["synthetic"] = input_key;
    }
    std::string schema_key = digest_bytes(schema.to_json());

    // ingest
    runner.run("ingest", input_key + schema_key, {"orders.csv", "ingest_stats.json"}, [&] {
        OrderTable table;
        if (!config.csv_path.empty()) {
            std::ifstream in(config.csv_path, std::ios::binary);
            if (!in) throw io_error("cannot open csv: " + config.csv_path);
            table = parse_orders(in, schema);
        } else {
            table = generate_synthetic(config.synthetic, config.synthetic_seed);
        }
        save_order_table(table, out_dir + "/orders.csv");
        write_file(out_dir + "/ingest_stats.json", ingest_stats(table).to_json());
    });
    std::string orders_digest = digest_file(out_dir + "/orders.csv");

    // graph
    runner.run("graph", orders_digest, {"graph.json"}, [&] {
        OrderTable table = load_order_table(out_dir + "/orders.csv");
        build_graph(table).save(out_dir + "/graph.json");
    });
    std::string graph_digest = digest_file(out_dir + "/graph.json");

    // snapshots
    std::string snap_key = orders_digest + graph_digest + schema_key +
                           std::to_string(config.window) + "/" + std::to_string(config.stride) +
                           "/" + std::to_string(config.horizon);
    runner.run("snapshots", snap_key, {"bundle.bin", "audit.json"}, [&] {
        OrderTable table = load_order_table(out_dir + "/orders.csv");
        SupplyGraph graph = SupplyGraph::load(out_dir + "/graph.json");
        SplitBundle bundle =
            build_bundle(table, graph.index, config.window, config.stride, config.horizon);
        // Attach the empirical feature/label correlation to the audit report.
        AuditReport audit = audit_features(schema, default_feature_manifest(schema));
        audit.max_abs_feature_label_corr = max_feature_label_correlation(bundle);
        write_file(out_dir + "/audit.json", audit.to_json());
        save_bundle(bundle, out_dir + "/bundle.bin");
    });
    std::string bundle_digest = digest_file(out_dir + "/bundle.bin");

    // train + eval
    std::vector<std::string> train_outputs = {"report.json"};
    for (uint64_t seed : config.train.seeds) {
        train_outputs.push_back("ckpt_seed" + std::to_string(seed) + ".bin");
        train_outputs.push_back("history_seed" + std::to_string(seed) + ".csv");
    }
    std::string train_key = bundle_digest + digest_bytes(config.model.to_json()) +
                            digest_bytes(config.train.to_json());
    runner.run("train", train_key, train_outputs, [&] {
        SplitBundle bundle = load_bundle(out_dir + "/bundle.bin");
        SupplyGraph graph = SupplyGraph::load(out_dir + "/graph.json");
        std::vector<TrainResult> runs;
        MetricsReport report =
            run_experiment(bundle, graph, config.model, config.train, threads, &runs);
        for (size_t i = 0; i < runs.size(); ++i) {
            uint64_t seed = config.train.seeds[i];
            runs[i].checkpoint.save(out_dir + "/ckpt_seed" + std::to_string(seed) + ".bin");
            write_history_csv(runs[i].history,
                              out_dir + "/history_seed" + std::to_string(seed) + ".csv");
        }
        write_file(out_dir + "/report.json", report.to_json());
    });

    // explain (first seed's checkpoint)
    std::string first_ckpt = "ckpt_seed" + std::to_string(config.train.seeds[0]) + ".bin";
    std::string explain_key = digest_file(out_dir + "/" + first_ckpt) + bundle_digest;
    runner.run("explain", explain_key, {"risk.json"}, [&] {
        SplitBundle bundle = load_bundle(out_dir + "/bundle.bin");
        SupplyGraph graph = SupplyGraph::load(out_dir + "/graph.json");
        Checkpoint ckpt = Checkpoint::load(out_dir + "/" + first_ckpt);
        RiskGraph risk = aggregate_risk(ckpt, bundle, graph, Split::test);
        export_risk(risk, graph, "json", out_dir + "/risk.json");
    });

    write_file(manifest_path, manifest.dump(2));

    {
        json report_json = json::parse(read_file(out_dir + "/report.json"));
        MetricsReport& r = result.report;
        r.variant = report_json.value("variant", "full");
        r.f1_mean = report_json["aggregate"]["f1_mean"].get<double>();
        r.f1_std = report_json["aggregate"]["f1_std"].get<double>();
        r.auc_mean = report_json["aggregate"]["auc_mean"].get<double>();
        r.auc_std = report_json["aggregate"]["auc_std"].get<double>();
        r.mae_mean = report_json["aggregate"]["mae_mean"].get<double>();
        r.mae_std = report_json["aggregate"]["mae_std"].get<double>();
        r.zero_baseline_mae = report_json["aggregate"]["zero_baseline_mae"].get<double>();
        for (const auto& s : report_json["seeds"]) {
            SeedResult sr;
            sr.seed = s["seed"].get<uint64_t>();
            sr.f1_macro = s["f1_macro"].get<double>();
            sr.auc_roc = s["auc_roc"].get<double>();
            sr.mae_days = s["mae_days"].get<double>();
            sr.threshold = s["threshold"].get<double>();
            sr.best_epoch = s["best_epoch"].get<int32_t>();
            r.seeds.push_back(sr);
        }
        result.risk.normalized_risk = load_risk_scores(out_dir + "/risk.json");
    }
    return result;
}

}  // namespace eagle
