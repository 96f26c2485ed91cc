#include "eagle/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "eagle/errors.hpp"

namespace eagle {

double macro_f1(const std::vector<PredictionRow>& preds, double theta) {
    if (preds.empty()) throw data_error("macro_f1: no predictions");
    // class 1 = positive, class 0 = negative
    double f1_sum = 0.0;
    for (int cls = 0; cls < 2; ++cls) {
        int64_t tp = 0, fp = 0, fn = 0;
        for (const auto& r : preds) {
            bool pred_pos = r.score > theta;
            bool pred_cls = cls == 1 ? pred_pos : !pred_pos;
            bool is_cls = cls == 1 ? r.y_class == 1 : r.y_class == 0;
            if (pred_cls && is_cls) ++tp;
            else if (pred_cls && !is_cls) ++fp;
            else if (!pred_cls && is_cls) ++fn;
        }
        double denom = 2.0 * tp + fp + fn;
        f1_sum += denom > 0 ? 2.0 * tp / denom : 0.0;
    }
    return f1_sum / 2.0;
}

double auc_roc(const std::vector<PredictionRow>& preds) {
    int64_t pos = 0, neg = 0;
    for (const auto& r : preds) (r.y_class ? pos : neg)++;
    if (pos == 0 || neg == 0)
        throw data_error("auc_roc: undefined for single-class labels");
    std::vector<size_t> order(preds.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return preds[a].score < preds[b].score; });
    // Midranks for ties.
    double rank_sum_pos = 0.0;
    size_t i = 0;
    while (i < order.size()) {
        size_t j = i;
        while (j < order.size() && preds[order[j]].score == preds[order[i]].score) ++j;
        double midrank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
        for (size_t k = i; k < j; ++k)
            if (preds[order[k]].y_class) rank_sum_pos += midrank;
        i = j;
    }
    double p = static_cast<double>(pos), n = static_cast<double>(neg);
    return (rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n);
}

double calibrate_threshold(const std::vector<PredictionRow>& val_preds) {
    int64_t pos = 0, neg = 0;
    for (const auto& r : val_preds) (r.y_class ? pos : neg)++;
    if (pos == 0 || neg == 0)
        throw data_error("calibrate_threshold: validation labels are single-class");
    std::vector<double> scores;
    scores.reserve(val_preds.size());
    for (const auto& r : val_preds) scores.push_back(r.score);
    std::sort(scores.begin(), scores.end());
    scores.erase(std::unique(scores.begin(), scores.end()), scores.end());
    std::vector<double> candidates{0.0, 1.0};
    for (size_t i = 0; i + 1 < scores.size(); ++i)
        candidates.push_back(0.5 * (scores[i] + scores[i + 1]));
    std::sort(candidates.begin(), candidates.end());
    double best_theta = candidates.front(), best_f1 = -1.0;
    for (double theta : candidates) {
        double f1 = macro_f1(val_preds, theta);
        if (f1 > best_f1) {  // strict: ties keep the smallest theta
            best_f1 = f1;
            best_theta = theta;
        }
    }
    return best_theta;
}

Metrics compute_metrics(const std::vector<PredictionRow>& preds, double theta) {
    if (preds.empty()) throw data_error("compute_metrics: no predictions");
    Metrics m;
    m.f1_macro = macro_f1(preds, theta);
    m.auc_roc = auc_roc(preds);
    double abs_err = 0.0, abs_y = 0.0;
    for (const auto& r : preds) {
        double pred = r.has_magnitude ? r.magnitude : 0.0;
        abs_err += std::abs(pred - r.y_reg);
        abs_y += std::abs(r.y_reg);
    }
    m.mae_days = abs_err / static_cast<double>(preds.size());
    m.zero_baseline_mae = abs_y / static_cast<double>(preds.size());
    return m;
}

}  // namespace eagle
