#include "eagle/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "eagle/errors.hpp"

namespace eagle {

using nlohmann::json;

int32_t NodeIndex::id_of(const std::string& region, NodeRole role) const {
    Node key{region, role};
    auto it = std::lower_bound(nodes.begin(), nodes.end(), key,
                               [](const Node& a, const Node& b) {
                                   if (a.role != b.role) return a.role < b.role;
                                   return a.region < b.region;
                               });
    if (it == nodes.end() || !(*it == key)) return -1;
    return static_cast<int32_t>(it - nodes.begin());
}

NodeIndex build_node_index(const OrderTable& table) {
    if (table.orders.empty()) throw data_error("build_node_index: empty order table");
    std::set<std::string> origins, dests;
    for (const auto& o : table.orders) {
        origins.insert(o.origin_region);
        dests.insert(o.dest_region);
    }
    NodeIndex index;
    for (const auto& r : origins) index.nodes.push_back({r, NodeRole::origin});
    for (const auto& r : dests) index.nodes.push_back({r, NodeRole::destination});
    if (index.count() < 2)
        throw data_error("degenerate graph: fewer than 2 distinct nodes");
    return index;
}

EdgeList build_edges(const OrderTable& table, const NodeIndex& index) {
    std::set<std::pair<int32_t, int32_t>> lanes;
    for (const auto& o : table.orders) {
        int32_t u = index.id_of(o.origin_region, NodeRole::origin);
        int32_t v = index.id_of(o.dest_region, NodeRole::destination);
        if (u < 0 || v < 0) throw data_error("order references region missing from node index");
        if (u != v) lanes.insert({u, v});
    }
    // Each undirected lane materializes as two directed edges, ordered by (src, dst).
    std::set<std::pair<int32_t, int32_t>> directed;
    for (auto [u, v] : lanes) {
        directed.insert({u, v});
        directed.insert({v, u});
    }
    EdgeList edges;
    for (auto [s, d] : directed) {
        edges.src.push_back(s);
        edges.dst.push_back(d);
    }
    return edges;
}

EdgeFeatures compute_edge_features(const OrderTable& table, const NodeIndex& index,
                                   const EdgeList& edges) {
    struct LaneStats {
        int64_t count = 0;
        double sum = 0, sumsq = 0;
        std::array<int64_t, 4> modes{0, 0, 0, 0};
    };
    std::map<std::pair<int32_t, int32_t>, LaneStats> stats;  // key: (min,max) node pair
    for (const auto& o : table.orders) {
        int32_t u = index.id_of(o.origin_region, NodeRole::origin);
        int32_t v = index.id_of(o.dest_region, NodeRole::destination);
        if (u == v) continue;
        auto key = std::minmax(u, v);
        auto& s = stats[{key.first, key.second}];
        s.count++;
        s.sum += o.scheduled_days;
        s.sumsq += static_cast<double>(o.scheduled_days) * o.scheduled_days;
        s.modes[static_cast<size_t>(o.shipping_mode)]++;
    }
    EdgeFeatures feats;
    feats.rows.reserve(static_cast<size_t>(edges.edge_count()));
    for (int64_t e = 0; e < edges.edge_count(); ++e) {
        auto key = std::minmax(edges.src[static_cast<size_t>(e)], edges.dst[static_cast<size_t>(e)]);
        const LaneStats& s = stats.at({key.first, key.second});
        std::array<double, kEdgeFeatureDim> row{};
        double n = static_cast<double>(s.count);
        double mean = s.sum / n;
        double var = std::max(0.0, s.sumsq / n - mean * mean);  // population variance
        row[0] = mean;
        row[1] = std::sqrt(var);
        row[2] = n;
        for (size_t m = 0; m < 4; ++m) row[3 + m] = static_cast<double>(s.modes[m]) / n;
        feats.rows.push_back(row);
    }
    return feats;
}

SupplyGraph build_graph(const OrderTable& table) {
    SupplyGraph g;
    g.index = build_node_index(table);
    g.edges = build_edges(table, g.index);
    g.features = compute_edge_features(table, g.index, g.edges);
    return g;
}

std::string SupplyGraph::to_json() const {
    json j;
    j["nodes"] = json::array();
    for (size_t i = 0; i < index.nodes.size(); ++i)
        j["nodes"].push_back({{"id", i},
                              {"region", index.nodes[i].region},
                              {"role", index.nodes[i].role == NodeRole::origin ? "origin"
                                                                               : "destination"}});
    j["src"] = edges.src;
    j["dst"] = edges.dst;
    j["edge_features"] = json::array();
    for (const auto& row : features.rows) j["edge_features"].push_back(row);
    j["lane_count"] = edges.lane_count();
    return j.dump(2);
}

SupplyGraph SupplyGraph::from_json(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw data_error(std::string("malformed graph json: ") + e.what());
    }
    SupplyGraph g;
    for (const auto& n : j.at("nodes"))
        g.index.nodes.push_back({n.at("region").get<std::string>(),
                                 n.at("role").get<std::string>() == "origin"
                                     ? NodeRole::origin
                                     : NodeRole::destination});
    g.edges.src = j.at("src").get<std::vector<int32_t>>();
    g.edges.dst = j.at("dst").get<std::vector<int32_t>>();
    for (const auto& row : j.at("edge_features")) {
        std::array<double, kEdgeFeatureDim> r{};
        for (size_t i = 0; i < kEdgeFeatureDim; ++i) r[i] = row.at(i).get<double>();
        g.features.rows.push_back(r);
    }
    return g;
}

void SupplyGraph::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw io_error("cannot write graph file: " + path);
    out << to_json();
}

SupplyGraph SupplyGraph::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open graph file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str());
}

std::string SupplyGraph::to_dot() const {
    std::ostringstream out;
    out << "digraph supply {\n";
    for (size_t i = 0; i < index.nodes.size(); ++i)
        out << "  n" << i << " [label=\"" << index.nodes[i].region << "\"];\n";
    for (size_t e = 0; e < edges.src.size(); ++e)
        out << "  n" << edges.src[e] << " -> n" << edges.dst[e] << ";\n";
    out << "}\n";
    return out.str();
}

std::string SupplyGraph::to_graphml() const {
    std::ostringstream out;
    out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
        << "<graphml xmlns=\"http://graphml.graphdrawing.org/xmlns\">\n"
        << "  <key id=\"region\" for=\"node\" attr.name=\"region\" attr.type=\"string\"/>\n"
        << "  <graph edgedefault=\"directed\">\n";
    for (size_t i = 0; i < index.nodes.size(); ++i)
        out << "    <node id=\"n" << i << "\"><data key=\"region\">" << index.nodes[i].region
            << "</data></node>\n";
    for (size_t e = 0; e < edges.src.size(); ++e)
        out << "    <edge source=\"n" << edges.src[e] << "\" target=\"n" << edges.dst[e]
            << "\"/>\n";
    out << "  </graph>\n</graphml>\n";
    return out.str();
}

}  // namespace eagle
