#include "eagle/explain.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "eagle/errors.hpp"

namespace eagle {

using nlohmann::json;

RiskGraph aggregate_risk(const Checkpoint& checkpoint, const SplitBundle& bundle,
                         const SupplyGraph& graph, Split split, bool attribute_to_sender) {
    if (checkpoint.n_nodes != bundle.n_nodes)
        throw data_error("aggregate_risk: checkpoint/bundle node count mismatch");
    auto snaps = bundle.split(split);
    if (snaps.empty()) throw data_error("aggregate_risk: split is empty");

    GraphTensors gt = GraphTensors::from_graph(graph);
    size_t n = static_cast<size_t>(gt.n_nodes);
    RiskGraph risk;
    risk.sender_attribution = attribute_to_sender;
    risk.raw_risk.assign(n, 0.0);
    for (const auto* snap : snaps) {
        ForwardResult out = forward(*snap, gt, checkpoint.params, checkpoint.model_config);
        for (const auto& layer : out.attention)
            for (const auto& head : layer)
                for (size_t e = 0; e < static_cast<size_t>(gt.n_real_edges); ++e) {
                    int32_t node = attribute_to_sender ? gt.src[e] : gt.dst[e];
                    risk.raw_risk[static_cast<size_t>(node)] += head[e];
                }
        risk.snapshots_aggregated++;
    }
    double lo = *std::min_element(risk.raw_risk.begin(), risk.raw_risk.end());
    double hi = *std::max_element(risk.raw_risk.begin(), risk.raw_risk.end());
    risk.normalized_risk.assign(n, 0.0);
    if (hi > lo)  // all-equal raw scores normalize to all zeros
        for (size_t v = 0; v < n; ++v)
            risk.normalized_risk[v] = (risk.raw_risk[v] - lo) / (hi - lo);
    return risk;
}

std::string RiskGraph::to_json(const SupplyGraph& graph) const {
    json j;
    j["snapshots_aggregated"] = snapshots_aggregated;
    j["sender_attribution"] = sender_attribution;
    j["nodes"] = json::array();
    for (size_t v = 0; v < raw_risk.size(); ++v)
        j["nodes"].push_back({{"id", v},
                              {"region", graph.index.nodes[v].region},
                              {"role", graph.index.nodes[v].role == NodeRole::origin
                                           ? "origin"
                                           : "destination"},
                              {"raw_risk", raw_risk[v]},
                              {"normalized_risk", normalized_risk[v]}});
    j["src"] = graph.edges.src;
    j["dst"] = graph.edges.dst;
    return j.dump(2);
}

std::string RiskGraph::to_dot(const SupplyGraph& graph) const {
    std::ostringstream out;
    out << "digraph risk {\n";
    for (size_t v = 0; v < raw_risk.size(); ++v)
        out << "  n" << v << " [label=\"" << graph.index.nodes[v].region << "\" risk=\""
            << normalized_risk[v] << "\"];\n";
    for (size_t e = 0; e < graph.edges.src.size(); ++e)
        out << "  n" << graph.edges.src[e] << " -> n" << graph.edges.dst[e] << ";\n";
    out << "}\n";
    return out.str();
}

std::string RiskGraph::to_graphml(const SupplyGraph& graph) const {
    std::ostringstream out;
    out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
        << "<graphml xmlns=\"http://graphml.graphdrawing.org/xmlns\">\n"
        << "  <key id=\"risk\" for=\"node\" attr.name=\"risk\" attr.type=\"double\"/>\n"
        << "  <graph edgedefault=\"directed\">\n";
    for (size_t v = 0; v < raw_risk.size(); ++v)
        out << "    <node id=\"n" << v << "\"><data key=\"risk\">" << normalized_risk[v]
            << "</data></node>\n";
    for (size_t e = 0; e < graph.edges.src.size(); ++e)
        out << "    <edge source=\"n" << graph.edges.src[e] << "\" target=\"n"
            << graph.edges.dst[e] << "\"/>\n";
    out << "  </graph>\n</graphml>\n";
    return out.str();
}

void export_risk(const RiskGraph& risk, const SupplyGraph& graph, const std::string& format,
                 const std::string& path) {
    if (risk.raw_risk.empty()) throw data_error("export_risk: empty risk graph");
    std::string body;
    if (format == "json") body = risk.to_json(graph);
    else if (format == "dot") body = risk.to_dot(graph);
    else if (format == "graphml") body = risk.to_graphml(graph);
    else throw usage_error("export_risk: unknown format '" + format + "'");
    std::ofstream out(path);
    if (!out) throw io_error("cannot write risk file: " + path);
    out << body;
    if (!out) throw io_error("failed writing risk file: " + path);
}

std::vector<double> load_risk_scores(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open risk file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    json j = json::parse(ss.str());
    std::vector<double> scores;
    for (const auto& node : j.at("nodes"))
        scores.push_back(node.at("normalized_risk").get<double>());
    return scores;
}

}  // namespace eagle
