#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "eagle/orders.hpp"

namespace eagle {

enum class NodeRole { origin = 0, destination = 1 };

constexpr int kEdgeFeatureDim = 7;

// Bijective map (region, role) <-> node id, ordered by (role, region).
struct NodeIndex {
    struct Node {
        std::string region;
        NodeRole role;
        bool operator==(const Node&) const = default;
    };
    std::vector<Node> nodes;  // index == node id

    int32_t count() const { return static_cast<int32_t>(nodes.size()); }
    int32_t id_of(const std::string& region, NodeRole role) const;  // -1 if absent
    bool operator==(const NodeIndex&) const = default;
};

struct EdgeList {
    std::vector<int32_t> src;
    std::vector<int32_t> dst;
    int64_t edge_count() const { return static_cast<int64_t>(src.size()); }
    int64_t lane_count() const { return edge_count() / 2; }
    bool operator==(const EdgeList&) const = default;
};

// E x 7 per directed edge: transit_mean, transit_std, flow_volume, 4 mode fractions.
struct EdgeFeatures {
    std::vector<std::array<double, kEdgeFeatureDim>> rows;
    bool operator==(const EdgeFeatures&) const = default;
};

struct SupplyGraph {
    NodeIndex index;
    EdgeList edges;
    EdgeFeatures features;
    bool operator==(const SupplyGraph&) const = default;

    std::string to_json() const;
    static SupplyGraph from_json(const std::string& json_text);
    void save(const std::string& path) const;
    static SupplyGraph load(const std::string& path);
    std::string to_dot() const;
    std::string to_graphml() const;
};

NodeIndex build_node_index(const OrderTable& table);
EdgeList build_edges(const OrderTable& table, const NodeIndex& index);
EdgeFeatures compute_edge_features(const OrderTable& table, const NodeIndex& index,
                                   const EdgeList& edges);
SupplyGraph build_graph(const OrderTable& table);

}  // namespace eagle
