#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "eagle/graph.hpp"
#include "eagle/snapshots.hpp"
#include "eagle/tensor.hpp"

namespace eagle {

enum class Ablation { full, A1_no_temporal, A2_no_edge, A3_single_task };
std::string to_string(Ablation a);
Ablation ablation_from_string(const std::string& s);

struct ModelConfig {
    int32_t T = 14;
    int32_t patch_len = 7;
    int32_t d_node = kNodeFeatureDim;
    int32_t d_model = 64;
    int32_t encoder_layers = 2;
    int32_t encoder_heads = 2;
    int32_t gat_layers = 2;
    int32_t gat_heads = 4;
    int32_t d_edge = kEdgeFeatureDim;
    int32_t head_hidden = 32;
    double task_lambda = 0.7;
    double pos_weight = 5.0;
    double huber_delta = 1.0;
    double dropout_rate = 0.1;
    double leaky_slope = 0.2;
    Ablation ablation = Ablation::full;

    int32_t n_patches() const { return T / patch_len; }
    void validate() const;
    std::string to_json() const;
    static ModelConfig from_json(const std::string& json_text);
};

// All learnable weights as an ordered list of named tensors. Creation order is
// fixed, so a given (config, seed) reproduces identical parameter bytes.
struct ModelParams {
    std::vector<std::pair<std::string, ad::Tensor>> tensors;
    std::map<std::string, size_t> by_name;

    ad::Tensor& at(const std::string& name);
    const ad::Tensor& at(const std::string& name) const;
    void add(const std::string& name, ad::Tensor t);
    std::vector<ad::Tensor> all() const;
    ModelParams clone() const;  // deep copy of values (fresh leaves)
};

// Glorot-uniform weights from a seeded generator; classification output bias
// set to log(pi+ / (1 - pi+)).
ModelParams init_params(const ModelConfig& config, double train_positive_rate, uint64_t seed);

// Graph in the layout the model consumes: self-loops appended after the E
// directed edges, self-loop edge features all-zero.
struct GraphTensors {
    int32_t n_nodes = 0;
    int64_t n_real_edges = 0;          // without self-loops
    std::vector<int32_t> src, dst;     // length E + N
    ad::Tensor edge_features;          // (E + N) x d_edge
    static GraphTensors from_graph(const SupplyGraph& graph);
};

struct ForwardResult {
    ad::Tensor p_hat;       // (N) probabilities
    ad::Tensor d_hat;       // (N) non-negative; undefined under A3
    // attention[layer][head] is alpha over the E+N edges of GraphTensors.
    std::vector<std::vector<std::vector<double>>> attention;
};

// Per-node temporal embedding H (N x d_model) from the patch encoder (or the
// static time-mean projection under A1).
ad::Tensor encode_temporal(const Snapshot& snapshot, const ModelParams& params,
                           const ModelConfig& config, bool training,
                           std::mt19937_64* dropout_rng);

struct EgatOut {
    ad::Tensor z;                                  // N x d_model
    std::vector<std::vector<double>> head_alphas;  // per head, over E+N edges
};
EgatOut egat_layer(const ad::Tensor& h, const GraphTensors& graph, const ModelParams& params,
                   const ModelConfig& config, int32_t layer);

ForwardResult forward(const Snapshot& snapshot, const GraphTensors& graph,
                      const ModelParams& params, const ModelConfig& config,
                      bool training = false, std::mt19937_64* dropout_rng = nullptr);

// lambda * weighted BCE + (1 - lambda) * Huber (BCE alone under A3).
ad::Tensor multitask_loss(const ForwardResult& out, const Snapshot& snapshot,
                          const ModelConfig& config);

}  // namespace eagle
