#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "eagle/metrics.hpp"
#include "eagle/model.hpp"
#include "eagle/snapshots.hpp"

namespace eagle {

struct TrainConfig {
    double lr = 3e-4;
    double lr_min = 1e-5;
    double weight_decay = 1e-4;
    double clip_norm = 1.0;
    int32_t epochs = 40;
    int32_t early_stop_patience = 10;
    std::vector<uint64_t> seeds = {0, 1, 2, 3};

    void validate() const;
    std::string to_json() const;
    static TrainConfig from_json(const std::string& json_text);
};

struct EpochStats {
    int32_t epoch = 0;  // 1-based
    double train_loss = 0.0;
    double val_auc = 0.0;
};

struct Checkpoint {
    ModelConfig model_config;
    TrainConfig train_config;
    uint64_t seed = 0;
    int32_t best_epoch = 0;
    double best_val_auc = 0.0;
    int32_t n_nodes = 0;
    std::array<double, kNodeFeatureDim> feat_mean{};
    std::array<double, kNodeFeatureDim> feat_std{};
    ModelParams params;

    void save(const std::string& path) const;
    static Checkpoint load(const std::string& path);
};

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<EpochStats> history;
};

// One optimizer step per snapshot (full-graph batch), seed-shuffled order per
// epoch, cosine lr over the epoch budget, best-val-AUC checkpointing with
// early stopping.
TrainResult train(const SplitBundle& bundle, const SupplyGraph& graph,
                  const ModelConfig& model_config, const TrainConfig& train_config,
                  uint64_t seed);

std::vector<PredictionRow> predict(const Checkpoint& checkpoint, const SplitBundle& bundle,
                                   const SupplyGraph& graph, Split split);

struct SeedResult {
    uint64_t seed = 0;
    double f1_macro = 0.0;
    double auc_roc = 0.0;
    double mae_days = 0.0;
    double threshold = 0.0;
    int32_t best_epoch = 0;
    std::vector<EpochStats> history;
};

struct MetricsReport {
    std::string variant = "full";
    std::vector<SeedResult> seeds;
    double f1_mean = 0, f1_std = 0;
    double auc_mean = 0, auc_std = 0;
    double mae_mean = 0, mae_std = 0;
    double zero_baseline_mae = 0;

    std::string to_json() const;
};

void write_history_csv(const std::vector<EpochStats>& history, const std::string& path);

// Trains every seed, calibrates the threshold on validation, evaluates on
// test, aggregates mean +- sample std. threads bounds seed-level parallelism.
MetricsReport run_experiment(const SplitBundle& bundle, const SupplyGraph& graph,
                             const ModelConfig& model_config, const TrainConfig& train_config,
                             int threads = 1,
                             std::vector<TrainResult>* out_runs = nullptr);

MetricsReport run_ablation(const SplitBundle& bundle, const SupplyGraph& graph,
                           const ModelConfig& base_config, const TrainConfig& train_config,
                           Ablation variant, int threads = 1);

}  // namespace eagle
