#pragma once

#include <string>
#include <vector>

#include "eagle/graph.hpp"
#include "eagle/snapshots.hpp"
#include "eagle/train.hpp"

namespace eagle {

// Per-node attention mass aggregated across snapshots, layers and heads.
struct RiskGraph {
    std::vector<double> raw_risk;         // per node
    std::vector<double> normalized_risk;  // min-max over nodes; all zeros if degenerate
    int64_t snapshots_aggregated = 0;
    bool sender_attribution = false;

    std::string to_json(const SupplyGraph& graph) const;
    std::string to_dot(const SupplyGraph& graph) const;
    std::string to_graphml(const SupplyGraph& graph) const;
};

// Sums attention over non-self-loop edges into each edge's receiving node
// (or sending node when attribute_to_sender), across all layers/heads of
// every snapshot in the split, then min-max normalizes.
RiskGraph aggregate_risk(const Checkpoint& checkpoint, const SplitBundle& bundle,
                         const SupplyGraph& graph, Split split = Split::test,
                         bool attribute_to_sender = false);

void export_risk(const RiskGraph& risk, const SupplyGraph& graph, const std::string& format,
                 const std::string& path);

// Round-trip loader for the canonical JSON format (normalized scores only).
std::vector<double> load_risk_scores(const std::string& path);

}  // namespace eagle
