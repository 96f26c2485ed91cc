#include "eagle/train.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <thread>

#include <json.hpp>

#include "eagle/errors.hpp"
#include "eagle/optim.hpp"

namespace eagle {

using nlohmann::json;

void TrainConfig::validate() const {
    if (lr <= 0.0) throw data_error("train config: lr must be positive");
    if (epochs < 1) throw data_error("train config: epochs must be >= 1");
    if (seeds.empty()) throw data_error("train config: at least one seed required");
}

std::string TrainConfig::to_json() const {
    json j;
    j["lr"] = lr;
    j["lr_min"] = lr_min;
    j["weight_decay"] = weight_decay;
    j["clip_norm"] = clip_norm;
    j["epochs"] = epochs;
    j["early_stop_patience"] = early_stop_patience;
    j["seeds"] = seeds;
    return j.dump(2);
}

TrainConfig TrainConfig::from_json(const std::string& json_text) {
    json j = json::parse(json_text);
    TrainConfig c;
    c.lr = j.value("lr", c.lr);
    c.lr_min = j.value("lr_min", c.lr_min);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.clip_norm = j.value("clip_norm", c.clip_norm);
    c.epochs = j.value("epochs", c.epochs);
    c.early_stop_patience = j.value("early_stop_patience", c.early_stop_patience);
    if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<uint64_t>>();
    c.validate();
    return c;
}

namespace {

std::vector<PredictionRow> predict_with(const ModelParams& params, const ModelConfig& config,
                                        const SplitBundle& bundle, const GraphTensors& graph,
                                        Split split) {
    std::vector<PredictionRow> rows;
    bool has_mag = config.ablation != Ablation::A3_single_task;
    for (const auto* snap : bundle.split(split)) {
        ForwardResult out = forward(*snap, graph, params, config, /*training=*/false, nullptr);
        for (int32_t v = 0; v < snap->n_nodes; ++v) {
            PredictionRow r;
            r.snapshot_t = snap->t;
            r.node = v;
            r.score = out.p_hat.values()[static_cast<size_t>(v)];
            r.has_magnitude = has_mag;
            if (has_mag) r.magnitude = out.d_hat.values()[static_cast<size_t>(v)];
            r.y_class = snap->y_class[static_cast<size_t>(v)];
            r.y_reg = snap->y_reg[static_cast<size_t>(v)];
            rows.push_back(r);
        }
    }
    return rows;
}

}  // namespace

TrainResult train(const SplitBundle& bundle, const SupplyGraph& graph,
                  const ModelConfig& model_config, const TrainConfig& train_config,
                  uint64_t seed) {
    model_config.validate();
    train_config.validate();
    if (graph.index.count() != bundle.n_nodes)
        throw data_error("train: graph node count does not match bundle");

    GraphTensors gt = GraphTensors::from_graph(graph);
    ModelParams params = init_params(model_config, bundle.train_positive_rate(), seed);
    auto param_list = params.all();
    AdamW optimizer(param_list, {.weight_decay = train_config.weight_decay});

    auto train_snaps = bundle.split(Split::train);
    int64_t steps_per_epoch = static_cast<int64_t>(train_snaps.size());
    int64_t total_steps = steps_per_epoch * train_config.epochs;

    std::mt19937_64 shuffle_rng(seed * 0x9e3779b97f4a7c15ULL + 1);
    std::mt19937_64 dropout_rng(seed * 0xbf58476d1ce4e5b9ULL + 2);

    TrainResult result;
    result.checkpoint.model_config = model_config;
    result.checkpoint.train_config = train_config;
    result.checkpoint.seed = seed;
    result.checkpoint.n_nodes = bundle.n_nodes;
    result.checkpoint.feat_mean = bundle.feat_mean;
    result.checkpoint.feat_std = bundle.feat_std;

    double best_auc = -1.0;
    int32_t best_epoch = 0;
    ModelParams best_params = params.clone();
    int64_t step = 0;
    std::vector<size_t> order(train_snaps.size());
    std::iota(order.begin(), order.end(), 0);

    for (int32_t epoch = 1; epoch <= train_config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double loss_sum = 0.0;
        for (size_t oi : order) {
            const Snapshot& snap = *train_snaps[oi];
            for (auto& p : param_list) p.zero_grad();
            ForwardResult out =
                forward(snap, gt, params, model_config, /*training=*/true, &dropout_rng);
            ad::Tensor loss = multitask_loss(out, snap, model_config);
            double loss_val = loss.item();
            if (!std::isfinite(loss_val))
                throw numeric_error("train: non-finite loss at epoch " + std::to_string(epoch) +
                                    ", snapshot t=" + std::to_string(snap.t));
            ad::backward(loss);
            clip_global_norm(param_list, train_config.clip_norm);
            optimizer.step(param_list, cosine_lr(step, total_steps, train_config.lr,
                                                 train_config.lr_min));
            loss_sum += loss_val;
            ++step;
        }
        auto val_preds = predict_with(params, model_config, bundle, gt, Split::val);
        double val_auc = auc_roc(val_preds);
        result.history.push_back({epoch, loss_sum / static_cast<double>(steps_per_epoch),
                                  val_auc});
        if (val_auc > best_auc) {
            best_auc = val_auc;
            best_epoch = epoch;
            best_params = params.clone();
        } else if (epoch - best_epoch >= train_config.early_stop_patience) {
            break;
        }
    }

    result.checkpoint.best_epoch = best_epoch;
    result.checkpoint.best_val_auc = best_auc;
    result.checkpoint.params = std::move(best_params);
    return result;
}

std::vector<PredictionRow> predict(const Checkpoint& checkpoint, const SplitBundle& bundle,
                                   const SupplyGraph& graph, Split split) {
    if (checkpoint.n_nodes != bundle.n_nodes)
        throw data_error("predict: checkpoint trained for " + std::to_string(checkpoint.n_nodes) +
                         " nodes but bundle has " + std::to_string(bundle.n_nodes));
    if (checkpoint.feat_mean != bundle.feat_mean || checkpoint.feat_std != bundle.feat_std)
        throw data_error("predict: checkpoint and bundle standardization stats differ");
    GraphTensors gt = GraphTensors::from_graph(graph);
    return predict_with(checkpoint.params, checkpoint.model_config, bundle, gt, split);
}

namespace {

constexpr char kCkptMagic[8] = {'E', 'A', 'G', 'L', 'C', 'K', 'P', 'T'};
constexpr uint32_t kCkptVersion = 1;

void put_string(std::ostream& out, const std::string& s) {
    uint64_t n = s.size();
    out.write(reinterpret_cast<const char*>(&n), sizeof(n));
    out.write(s.data(), static_cast<std::streamsize>(n));
}

std::string get_string(std::istream& in) {
    uint64_t n;
    in.read(reinterpret_cast<char*>(&n), sizeof(n));
    if (!in) throw data_error("checkpoint format error: truncated file");
    std::string s(n, '\0');
    in.read(s.data(), static_cast<std::streamsize>(n));
    if (!in) throw data_error("checkpoint format error: truncated file");
    return s;
}

}  // namespace

void Checkpoint::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot write checkpoint: " + path);
    out.write(kCkptMagic, 8);
    out.write(reinterpret_cast<const char*>(&kCkptVersion), sizeof(kCkptVersion));
    json header;
    header["model_config"] = json::parse(model_config.to_json());
    header["train_config"] = json::parse(train_config.to_json());
    header["seed"] = seed;
    header["best_epoch"] = best_epoch;
    header["best_val_auc"] = best_val_auc;
    header["n_nodes"] = n_nodes;
    header["feat_mean"] = feat_mean;
    header["feat_std"] = feat_std;
    put_string(out, header.dump());
    uint64_t count = params.tensors.size();
    out.write(reinterpret_cast<const char*>(&count), sizeof(count));
    for (const auto& [name, t] : params.tensors) {
        put_string(out, name);
        uint64_t rank = t.shape().size();
        out.write(reinterpret_cast<const char*>(&rank), sizeof(rank));
        for (size_t d : t.shape()) {
            uint64_t dd = d;
            out.write(reinterpret_cast<const char*>(&dd), sizeof(dd));
        }
        out.write(reinterpret_cast<const char*>(t.values().data()),
                  static_cast<std::streamsize>(t.size() * sizeof(double)));
    }
    if (!out) throw io_error("failed writing checkpoint: " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open checkpoint: " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kCkptMagic, 8) != 0)
        throw data_error("checkpoint format error: bad magic in " + path);
    uint32_t version;
    in.read(reinterpret_cast<char*>(&version), sizeof(version));
    if (!in || version != kCkptVersion)
        throw data_error("checkpoint format error: unsupported version");
    Checkpoint c;
    json header = json::parse(get_string(in));
    c.model_config = ModelConfig::from_json(header.at("model_config").dump());
    c.train_config = TrainConfig::from_json(header.at("train_config").dump());
    c.seed = header.at("seed").get<uint64_t>();
    c.best_epoch = header.at("best_epoch").get<int32_t>();
    c.best_val_auc = header.at("best_val_auc").get<double>();
    c.n_nodes = header.at("n_nodes").get<int32_t>();
    for (size_t i = 0; i < kNodeFeatureDim; ++i) {
        c.feat_mean[i] = header.at("feat_mean").at(i).get<double>();
        c.feat_std[i] = header.at("feat_std").at(i).get<double>();
    }
    uint64_t count;
    in.read(reinterpret_cast<char*>(&count), sizeof(count));
    if (!in) throw data_error("checkpoint format error: truncated file");
    for (uint64_t i = 0; i < count; ++i) {
        std::string name = get_string(in);
        uint64_t rank;
        in.read(reinterpret_cast<char*>(&rank), sizeof(rank));
        if (!in) throw data_error("checkpoint format error: truncated file");
        std::vector<size_t> shape(rank);
        size_t n = 1;
        for (auto& d : shape) {
            uint64_t dd;
            in.read(reinterpret_cast<char*>(&dd), sizeof(dd));
            if (!in) throw data_error("checkpoint format error: truncated file");
            d = dd;
            n *= d;
        }
        std::vector<double> values(n);
        in.read(reinterpret_cast<char*>(values.data()),
                static_cast<std::streamsize>(n * sizeof(double)));
        if (!in) throw data_error("checkpoint format error: truncated file");
        c.params.add(name, ad::Tensor::from(std::move(shape), std::move(values), true));
    }
    return c;
}

void write_history_csv(const std::vector<EpochStats>& history, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot write history csv: " + path);
    out << "epoch,train_loss,val_auc\n";
    char buf[96];
    for (const auto& h : history) {
        std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g\n", h.epoch, h.train_loss, h.val_auc);
        out << buf;
    }
}

namespace {

void aggregate(MetricsReport& report) {
    auto mean_std = [&](auto getter, double& mean_out, double& std_out) {
        double sum = 0;
        for (const auto& s : report.seeds) sum += getter(s);
        mean_out = sum / static_cast<double>(report.seeds.size());
        if (report.seeds.size() < 2) {
            std_out = 0;
            return;
        }
        double sq = 0;
        for (const auto& s : report.seeds) {
            double d = getter(s) - mean_out;
            sq += d * d;
        }
        std_out = std::sqrt(sq / static_cast<double>(report.seeds.size() - 1));
    };
    mean_std([](const SeedResult& s) { return s.f1_macro; }, report.f1_mean, report.f1_std);
    mean_std([](const SeedResult& s) { return s.auc_roc; }, report.auc_mean, report.auc_std);
    mean_std([](const SeedResult& s) { return s.mae_days; }, report.mae_mean, report.mae_std);
}

}  // namespace

MetricsReport run_experiment(const SplitBundle& bundle, const SupplyGraph& graph,
                             const ModelConfig& model_config, const TrainConfig& train_config,
                             int threads, std::vector<TrainResult>* out_runs) {
    train_config.validate();
    if (train_config.seeds.size() < 2)
        throw data_error("run_experiment: at least 2 seeds required for std reporting");
    size_t n_seeds = train_config.seeds.size();
    std::vector<TrainResult> runs(n_seeds);
    std::vector<std::exception_ptr> failures(n_seeds);

    auto run_one = [&](size_t i) {
        try {
            runs[i] = train(bundle, graph, model_config, train_config, train_config.seeds[i]);
        } catch (...) {
            failures[i] = std::current_exception();
        }
    };
    int workers = std::max(1, std::min<int>(threads, static_cast<int>(n_seeds)));
    if (workers == 1) {
        for (size_t i = 0; i < n_seeds; ++i) run_one(i);
    } else {
        std::vector<std::thread> pool;
        std::atomic<size_t> next{0};
        for (int w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (size_t i = next.fetch_add(1); i < n_seeds; i = next.fetch_add(1)) run_one(i);
            });
        for (auto& th : pool) th.join();
    }
    for (auto& f : failures)
        if (f) std::rethrow_exception(f);

    MetricsReport report;
    report.variant = to_string(model_config.ablation);
    for (size_t i = 0; i < n_seeds; ++i) {
        const auto& ckpt = runs[i].checkpoint;
        auto val_preds = predict(ckpt, bundle, graph, Split::val);
        double theta = calibrate_threshold(val_preds);
        auto test_preds = predict(ckpt, bundle, graph, Split::test);
        Metrics m = compute_metrics(test_preds, theta);
        SeedResult s;
        s.seed = train_config.seeds[i];
        s.f1_macro = m.f1_macro;
        s.auc_roc = m.auc_roc;
        s.mae_days = m.mae_days;
        s.threshold = theta;
        s.best_epoch = ckpt.best_epoch;
        s.history = runs[i].history;
        report.zero_baseline_mae = m.zero_baseline_mae;
        report.seeds.push_back(std::move(s));
    }
    aggregate(report);
    if (out_runs) *out_runs = std::move(runs);
    return report;
}

MetricsReport run_ablation(const SplitBundle& bundle, const SupplyGraph& graph,
                           const ModelConfig& base_config, const TrainConfig& train_config,
                           Ablation variant, int threads) {
    ModelConfig config = base_config;
    config.ablation = variant;
    return run_experiment(bundle, graph, config, train_config, threads);
}

std::string MetricsReport::to_json() const {
    json j;
    j["variant"] = variant;
    j["seeds"] = json::array();
    for (const auto& s : seeds) {
        json js;
        js["seed"] = s.seed;
        js["f1_macro"] = s.f1_macro;
        js["auc_roc"] = s.auc_roc;
        js["mae_days"] = s.mae_days;
        js["threshold"] = s.threshold;
        js["best_epoch"] = s.best_epoch;
        j["seeds"].push_back(js);
    }
    j["aggregate"] = {{"f1_mean", f1_mean},   {"f1_std", f1_std},   {"auc_mean", auc_mean},
                      {"auc_std", auc_std},   {"mae_mean", mae_mean}, {"mae_std", mae_std},
                      {"zero_baseline_mae", zero_baseline_mae}};
    return j.dump(2);
}

}  // namespace eagle
