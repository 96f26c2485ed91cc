#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "eagle/graph.hpp"
#include "eagle/orders.hpp"

namespace eagle {

constexpr int kNodeFeatureDim = 5;  // volume, sched mean, sched std, discount, prev delay

enum class Split : uint8_t { train = 0, val = 1, test = 2 };

// One (start day t) training unit: N x T x 5 features, labels from the
// disjoint future window.
struct Snapshot {
    int32_t t = 0;
    int32_t n_nodes = 0;
    int32_t window = 0;                 // T
    std::vector<double> node_features;  // N*T*5, row-major (node, day, feature)
    std::vector<uint8_t> y_class;       // N
    std::vector<double> y_reg;          // N, non-negative
    Split split_tag = Split::train;

    double& feat(int32_t node, int32_t day, int32_t f) {
        return node_features[static_cast<size_t>((node * window + day) * kNodeFeatureDim + f)];
    }
    double feat(int32_t node, int32_t day, int32_t f) const {
        return node_features[static_cast<size_t>((node * window + day) * kNodeFeatureDim + f)];
    }
    bool operator==(const Snapshot&) const = default;
};

struct SplitCounts {
    int64_t snapshots = 0;
    int64_t positives = 0;
    int64_t negatives = 0;
    bool operator==(const SplitCounts&) const = default;
};

struct SplitBundle {
    int32_t n_nodes = 0;
    int32_t window = 14;
    int32_t horizon = 14;
    std::vector<Snapshot> snapshots;           // ordered by t; split tags contiguous
    std::vector<double> baseline_mu;           // N, train-only per-node delay baseline
    std::array<double, kNodeFeatureDim> feat_mean{};
    std::array<double, kNodeFeatureDim> feat_std{};
    std::array<SplitCounts, 3> counts{};

    const SplitCounts& count(Split s) const { return counts[static_cast<size_t>(s)]; }
    std::vector<const Snapshot*> split(Split s) const;
    double train_positive_rate() const;
    bool operator==(const SplitBundle&) const = default;
};

// Sliding feature windows [t, t+T) with label windows [t+T, t+T+horizon);
// one snapshot per start day where both windows fit.
std::vector<Snapshot> build_snapshots(const OrderTable& table, const NodeIndex& index,
                                      int32_t T = 14, int32_t stride = 1, int32_t horizon = 14);

// Contiguous chronological split; floors for train/val, remainder to test,
// minimally rebalanced so no split is empty.
std::array<int64_t, 3> split_sizes(int64_t n, double train_frac = 0.70, double val_frac = 0.15);
void chronological_split(std::vector<Snapshot>& snapshots, double train_frac = 0.70,
                         double val_frac = 0.15);

std::vector<double> compute_baselines(const std::vector<Snapshot>& snapshots,
                                      const OrderTable& table, const NodeIndex& index,
                                      int32_t horizon);

void assign_labels(Snapshot& snapshot, const OrderTable& table, const NodeIndex& index,
                   const std::vector<double>& mu, int32_t horizon);

// Z-score on train-split stats; identical transform applied to val/test.
void standardize(SplitBundle& bundle);

// Full pipeline: snapshots -> split -> baselines -> labels -> standardize.
SplitBundle build_bundle(const OrderTable& table, const NodeIndex& index, int32_t T = 14,
                         int32_t stride = 1, int32_t horizon = 14);

struct SyntheticConfig {
    int32_t n_regions = 6;
    int32_t n_days = 120;
    double base_delay_rate = 0.08;      // baseline per-order delay probability
    double seasonal_amplitude = 0.4;    // weekly order-volume modulation, [0,1)
    std::map<std::string, double> hub_risk_map;  // region -> delay-propensity multiplier
    int32_t base_volume = 6;            // mean orders per lane per day

    static SyntheticConfig from_json(const std::string& json_text);
    std::string to_json() const;
};

// Deterministic per (config, seed); weekly volume seasonality plus a slowly
// mixing per-region congestion state so past delays carry signal.
OrderTable generate_synthetic(const SyntheticConfig& config, uint64_t seed);

void save_bundle(const SplitBundle& bundle, const std::string& path);
SplitBundle load_bundle(const std::string& path);

// Max |corr| between any window-mean node feature and the binary label over
// train samples (feeds the audit report).
double max_feature_label_correlation(const SplitBundle& bundle);

}  // namespace eagle
