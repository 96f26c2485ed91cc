#pragma once

#include <cstdint>
#include <vector>

#include "eagle/snapshots.hpp"

namespace eagle {

// One (snapshot, node) evaluation row.
struct PredictionRow {
    int32_t snapshot_t = 0;
    int32_t node = 0;
    double score = 0.0;      // p_hat
    double magnitude = 0.0;  // d_hat; meaningless when has_magnitude == false
    bool has_magnitude = true;
    uint8_t y_class = 0;
    double y_reg = 0.0;
};

struct Metrics {
    double f1_macro = 0.0;
    double auc_roc = 0.0;
    double mae_days = 0.0;
    double zero_baseline_mae = 0.0;
};

// Unweighted mean of per-class F1 (positive + negative) at threshold theta;
// a class with precision + recall == 0 contributes F1 = 0.
double macro_f1(const std::vector<PredictionRow>& preds, double theta);

// Rank-statistic (Mann-Whitney) AUC with midrank tie handling.
// Throws if labels are single-class.
double auc_roc(const std::vector<PredictionRow>& preds);

// argmax macro-F1 over {0, 1, midpoints of adjacent sorted unique scores};
// ties break toward the smallest theta.
double calibrate_threshold(const std::vector<PredictionRow>& val_preds);

Metrics compute_metrics(const std::vector<PredictionRow>& preds, double theta);

}  // namespace eagle
