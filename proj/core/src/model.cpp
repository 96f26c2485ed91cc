#include "eagle/model.hpp"

#include <cmath>

#include <json.hpp>

#include "eagle/errors.hpp"

namespace eagle {

using ad::Tensor;
using nlohmann::json;

std::string to_string(Ablation a) {
    switch (a) {
        case Ablation::full: return "full";
        case Ablation::A1_no_temporal: return "A1";
        case Ablation::A2_no_edge: return "A2";
        case Ablation::A3_single_task: return "A3";
    }
    return "?";
}

Ablation ablation_from_string(const std::string& s) {
    if (s == "full") return Ablation::full;
    if (s == "A1") return Ablation::A1_no_temporal;
    if (s == "A2") return Ablation::A2_no_edge;
    if (s == "A3") return Ablation::A3_single_task;
    throw usage_error("unknown ablation variant: " + s + " (expected full|A1|A2|A3)");
}

void ModelConfig::validate() const {
    if (T <= 0 || patch_len <= 0 || T % patch_len != 0)
        throw data_error("model config: T must be divisible by patch_len");
    if (d_model % gat_heads != 0 || d_model % encoder_heads != 0)
        throw data_error("model config: d_model must be divisible by head counts");
    if (task_lambda < 0.0 || task_lambda > 1.0)
        throw data_error("model config: lambda must be in [0,1]");
    if (pos_weight <= 0.0) throw data_error("model config: pos_weight must be positive");
}

std::string ModelConfig::to_json() const {
    json j;
    j["T"] = T;
    j["patch_len"] = patch_len;
    j["d_node"] = d_node;
    j["d_model"] = d_model;
    j["encoder_layers"] = encoder_layers;
    j["encoder_heads"] = encoder_heads;
    j["gat_layers"] = gat_layers;
    j["gat_heads"] = gat_heads;
    j["d_edge"] = d_edge;
    j["head_hidden"] = head_hidden;
    j["lambda"] = task_lambda;
    j["pos_weight"] = pos_weight;
    j["huber_delta"] = huber_delta;
    j["dropout"] = dropout_rate;
    j["leaky_slope"] = leaky_slope;
    j["ablation"] = to_string(ablation);
    return j.dump(2);
}

ModelConfig ModelConfig::from_json(const std::string& json_text) {
    json j = json::parse(json_text);
    ModelConfig c;
    c.T = j.value("T", c.T);
    c.patch_len = j.value("patch_len", c.patch_len);
    c.d_node = j.value("d_node", c.d_node);
    c.d_model = j.value("d_model", c.d_model);
    c.encoder_layers = j.value("encoder_layers", c.encoder_layers);
    c.encoder_heads = j.value("encoder_heads", c.encoder_heads);
    c.gat_layers = j.value("gat_layers", c.gat_layers);
    c.gat_heads = j.value("gat_heads", c.gat_heads);
    c.d_edge = j.value("d_edge", c.d_edge);
    c.head_hidden = j.value("head_hidden", c.head_hidden);
    c.task_lambda = j.value("lambda", c.task_lambda);
    c.pos_weight = j.value("pos_weight", c.pos_weight);
    c.huber_delta = j.value("huber_delta", c.huber_delta);
    c.dropout_rate = j.value("dropout", c.dropout_rate);
    c.leaky_slope = j.value("leaky_slope", c.leaky_slope);
    if (j.contains("ablation")) c.ablation = ablation_from_string(j.at("ablation"));
    c.validate();
    return c;
}

ad::Tensor& ModelParams::at(const std::string& name) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw data_error("model params: no tensor named " + name);
    return tensors[it->second].second;
}

const ad::Tensor& ModelParams::at(const std::string& name) const {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw data_error("model params: no tensor named " + name);
    return tensors[it->second].second;
}

void ModelParams::add(const std::string& name, ad::Tensor t) {
    by_name[name] = tensors.size();
    tensors.emplace_back(name, std::move(t));
}

std::vector<ad::Tensor> ModelParams::all() const {
    std::vector<ad::Tensor> out;
    for (const auto& [name, t] : tensors) out.push_back(t);
    return out;
}

ModelParams ModelParams::clone() const {
    ModelParams copy;
    for (const auto& [name, t] : tensors)
        copy.add(name, Tensor::from(t.shape(), t.values(), true));
    return copy;
}

namespace {

Tensor glorot(std::vector<size_t> shape, std::mt19937_64& rng) {
    size_t fan_in = shape.size() == 2 ? shape[0] : shape.back();
    size_t fan_out = shape.size() == 2 ? shape[1] : shape.back();
    double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> uni(-limit, limit);
    std::vector<double> v(
        [&] { size_t n = 1; for (size_t d : shape) n *= d; return n; }());
    for (double& x : v) x = uni(rng);
    return Tensor::from(std::move(shape), std::move(v), true);
}

Tensor small_normal(std::vector<size_t> shape, std::mt19937_64& rng, double std_dev = 0.02) {
    std::normal_distribution<double> gauss(0.0, std_dev);
    std::vector<double> v(
        [&] { size_t n = 1; for (size_t d : shape) n *= d; return n; }());
    for (double& x : v) x = gauss(rng);
    return Tensor::from(std::move(shape), std::move(v), true);
}

Tensor zeros_p(std::vector<size_t> shape) { return Tensor::zeros(std::move(shape), true); }
Tensor ones_p(std::vector<size_t> shape) { return Tensor::full(std::move(shape), 1.0, true); }

}  // namespace

ModelParams init_params(const ModelConfig& config, double train_positive_rate, uint64_t seed) {
    config.validate();
    if (!(train_positive_rate > 0.0 && train_positive_rate < 1.0))
        throw data_error("init_params: train positive rate must be in (0,1), got " +
                         std::to_string(train_positive_rate));
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
    size_t d = static_cast<size_t>(config.d_model);
    ModelParams p;

    if (config.ablation == Ablation::A1_no_temporal) {
        p.add("static.w", glorot({static_cast<size_t>(config.d_node), d}, rng));
        p.add("static.b", zeros_p({d}));
    } else {
        p.add("patch.w", glorot({static_cast<size_t>(config.patch_len), d}, rng));
        p.add("patch.b", zeros_p({d}));
        p.add("patch.pos", small_normal({static_cast<size_t>(config.n_patches()), d}, rng));
        for (int32_t l = 0; l < config.encoder_layers; ++l) {
            std::string pre = "enc" + std::to_string(l) + ".";
            p.add(pre + "ln1_g", ones_p({d}));
            p.add(pre + "ln1_b", zeros_p({d}));
            for (const char* name : {"wq", "wk", "wv", "wo"}) {
                p.add(pre + name, glorot({d, d}, rng));
                p.add(pre + "b" + std::string(1, name[1]), zeros_p({d}));
            }
            p.add(pre + "ln2_g", ones_p({d}));
            p.add(pre + "ln2_b", zeros_p({d}));
            p.add(pre + "ff1_w", glorot({d, 2 * d}, rng));
            p.add(pre + "ff1_b", zeros_p({2 * d}));
            p.add(pre + "ff2_w", glorot({2 * d, d}, rng));
            p.add(pre + "ff2_b", zeros_p({d}));
        }
    }

    size_t dh = d / static_cast<size_t>(config.gat_heads);
    bool edge_aware = config.ablation != Ablation::A2_no_edge;
    for (int32_t l = 0; l < config.gat_layers; ++l)
        for (int32_t k = 0; k < config.gat_heads; ++k) {
            std::string pre = "gat" + std::to_string(l) + ".h" + std::to_string(k) + ".";
            p.add(pre + "W", glorot({d, dh}, rng));
            if (edge_aware) p.add(pre + "We", glorot({static_cast<size_t>(config.d_edge), dh}, rng));
            size_t cat_dim = edge_aware ? 3 * dh : 2 * dh;
            p.add(pre + "a", glorot({cat_dim, 1}, rng));
        }

    size_t hh = static_cast<size_t>(config.head_hidden);
    p.add("cls.w1", glorot({d, hh}, rng));
    p.add("cls.b1", zeros_p({hh}));
    p.add("cls.w2", glorot({hh, 1}, rng));
    double prior_bias = std::log(train_positive_rate / (1.0 - train_positive_rate));
    p.add("cls.b2", Tensor::from({1}, {prior_bias}, true));
    if (config.ablation != Ablation::A3_single_task) {
        p.add("reg.w1", glorot({d, hh}, rng));
        p.add("reg.b1", zeros_p({hh}));
        p.add("reg.w2", glorot({hh, 1}, rng));
        p.add("reg.b2", zeros_p({1}));
    }
    return p;
}

GraphTensors GraphTensors::from_graph(const SupplyGraph& graph) {
    GraphTensors g;
    g.n_nodes = graph.index.count();
    g.n_real_edges = graph.edges.edge_count();
    g.src = graph.edges.src;
    g.dst = graph.edges.dst;
    for (int32_t v = 0; v < g.n_nodes; ++v) {
        g.src.push_back(v);
        g.dst.push_back(v);
    }
    size_t rows = g.src.size();
    std::vector<double> feats(rows * kEdgeFeatureDim, 0.0);
    for (size_t e = 0; e < static_cast<size_t>(g.n_real_edges); ++e)
        for (size_t f = 0; f < kEdgeFeatureDim; ++f)
            feats[e * kEdgeFeatureDim + f] = graph.features.rows[e][f];
    g.edge_features = Tensor::from({rows, kEdgeFeatureDim}, std::move(feats));
    return g;
}

Tensor encode_temporal(const Snapshot& snapshot, const ModelParams& params,
                       const ModelConfig& config, bool training, std::mt19937_64* dropout_rng) {
    size_t n = static_cast<size_t>(snapshot.n_nodes);
    size_t d = static_cast<size_t>(config.d_model);
    size_t dnode = static_cast<size_t>(config.d_node);

    if (config.ablation == Ablation::A1_no_temporal) {
        // Time-mean of each channel, projected linearly.
        std::vector<double> means(n * dnode, 0.0);
        for (size_t v = 0; v < n; ++v)
            for (size_t c = 0; c < dnode; ++c) {
                double s = 0;
                for (int32_t day = 0; day < snapshot.window; ++day)
                    s += snapshot.feat(static_cast<int32_t>(v), day, static_cast<int32_t>(c));
                means[v * dnode + c] = s / snapshot.window;
            }
        Tensor x = Tensor::from({n, dnode}, std::move(means));
        return ad::add(ad::matmul(x, params.at("static.w")), params.at("static.b"));
    }

    if (snapshot.window != config.T)
        throw data_error("encode_temporal: snapshot window does not match config T");
    size_t np = static_cast<size_t>(config.n_patches());
    size_t p_len = static_cast<size_t>(config.patch_len);
    size_t batch = n * dnode;       // channel-independent sequences
    size_t m = batch * np;          // total tokens

    std::vector<double> patches(m * p_len);
    std::vector<int32_t> pos_idx(m);
    for (size_t v = 0; v < n; ++v)
        for (size_t c = 0; c < dnode; ++c)
            for (size_t pi = 0; pi < np; ++pi) {
                size_t row = (v * dnode + c) * np + pi;
                pos_idx[row] = static_cast<int32_t>(pi);
                for (size_t k = 0; k < p_len; ++k)
                    patches[row * p_len + k] =
                        snapshot.feat(static_cast<int32_t>(v),
                                      static_cast<int32_t>(pi * p_len + k),
                                      static_cast<int32_t>(c));
            }

    Tensor tokens = ad::add(ad::matmul(Tensor::from({m, p_len}, std::move(patches)),
                                       params.at("patch.w")),
                            params.at("patch.b"));
    tokens = ad::add(tokens, ad::gather_rows(params.at("patch.pos"), pos_idx));

    double rate = training ? config.dropout_rate : 0.0;
    for (int32_t l = 0; l < config.encoder_layers; ++l) {
        std::string pre = "enc" + std::to_string(l) + ".";
        Tensor x1 = ad::layer_norm(tokens, params.at(pre + "ln1_g"), params.at(pre + "ln1_b"));
        Tensor q = ad::add(ad::matmul(x1, params.at(pre + "wq")), params.at(pre + "bq"));
        Tensor k = ad::add(ad::matmul(x1, params.at(pre + "wk")), params.at(pre + "bk"));
        Tensor v = ad::add(ad::matmul(x1, params.at(pre + "wv")), params.at(pre + "bv"));
        Tensor att = ad::batched_attention(q, k, v, batch, np,
                                           static_cast<size_t>(config.encoder_heads));
        att = ad::add(ad::matmul(att, params.at(pre + "wo")), params.at(pre + "bo"));
        if (rate > 0) att = ad::dropout(att, rate, *dropout_rng);
        tokens = ad::add(tokens, att);
        Tensor x2 = ad::layer_norm(tokens, params.at(pre + "ln2_g"), params.at(pre + "ln2_b"));
        Tensor ff = ad::matmul(ad::gelu(ad::add(ad::matmul(x2, params.at(pre + "ff1_w")),
                                                params.at(pre + "ff1_b"))),
                               params.at(pre + "ff2_w"));
        ff = ad::add(ff, params.at(pre + "ff2_b"));
        if (rate > 0) ff = ad::dropout(ff, rate, *dropout_rng);
        tokens = ad::add(tokens, ff);
    }

    // Mean over all N_p * d_node token embeddings per node.
    return ad::mean(ad::reshape(tokens, {n, dnode * np, d}), 1);
}

EgatOut egat_layer(const Tensor& h, const GraphTensors& graph, const ModelParams& params,
                   const ModelConfig& config, int32_t layer) {
    size_t n = static_cast<size_t>(graph.n_nodes);
    if (h.shape()[0] != n) throw data_error("egat_layer: node count mismatch");
    size_t m = graph.src.size();
    bool edge_aware = config.ablation != Ablation::A2_no_edge;

    EgatOut out;
    std::vector<Tensor> head_outputs;
    for (int32_t k = 0; k < config.gat_heads; ++k) {
        std::string pre = "gat" + std::to_string(layer) + ".h" + std::to_string(k) + ".";
        Tensor wh = ad::matmul(h, params.at(pre + "W"));
        Tensor hu = ad::gather_rows(wh, graph.dst);  // receiver
        Tensor hv = ad::gather_rows(wh, graph.src);  // sender
        Tensor cat = edge_aware
                         ? ad::concat({hu, hv, ad::matmul(graph.edge_features,
                                                          params.at(pre + "We"))}, 1)
                         : ad::concat({hu, hv}, 1);
        Tensor score = ad::reshape(
            ad::leaky_relu(ad::matmul(cat, params.at(pre + "a")), config.leaky_slope), {m});
        Tensor alpha = ad::segment_softmax(score, graph.dst, n);
        out.head_alphas.push_back(alpha.values());
        Tensor msg = ad::mul(ad::reshape(alpha, {m, 1}), hv);
        head_outputs.push_back(ad::scatter_sum(msg, graph.dst, n));
    }
    out.z = ad::elu(ad::concat(head_outputs, 1));
    return out;
}

ForwardResult forward(const Snapshot& snapshot, const GraphTensors& graph,
                      const ModelParams& params, const ModelConfig& config, bool training,
                      std::mt19937_64* dropout_rng) {
    if (snapshot.n_nodes != graph.n_nodes)
        throw data_error("forward: snapshot and graph disagree on node count");
    size_t n = static_cast<size_t>(snapshot.n_nodes);

    Tensor z = encode_temporal(snapshot, params, config, training, dropout_rng);
    ForwardResult result;
    for (int32_t l = 0; l < config.gat_layers; ++l) {
        EgatOut layer_out = egat_layer(z, graph, params, config, l);
        z = layer_out.z;
        result.attention.push_back(std::move(layer_out.head_alphas));
    }

    Tensor cls_hidden = ad::relu(ad::add(ad::matmul(z, params.at("cls.w1")), params.at("cls.b1")));
    Tensor logits = ad::add(ad::matmul(cls_hidden, params.at("cls.w2")), params.at("cls.b2"));
    result.p_hat = ad::sigmoid(ad::reshape(logits, {n}));
    if (config.ablation != Ablation::A3_single_task) {
        Tensor reg_hidden =
            ad::relu(ad::add(ad::matmul(z, params.at("reg.w1")), params.at("reg.b1")));
        Tensor reg_out = ad::add(ad::matmul(reg_hidden, params.at("reg.w2")), params.at("reg.b2"));
        result.d_hat = ad::softplus(ad::reshape(reg_out, {n}));
    }
    return result;
}

Tensor multitask_loss(const ForwardResult& out, const Snapshot& snapshot,
                      const ModelConfig& config) {
    size_t n = static_cast<size_t>(snapshot.n_nodes);
    for (double x : out.p_hat.values())
        if (!std::isfinite(x)) throw numeric_error("loss: non-finite classification output");
    std::vector<double> yv(n), yr(snapshot.y_reg);
    for (size_t i = 0; i < n; ++i) yv[i] = snapshot.y_class[i];
    Tensor y = Tensor::from({n}, std::move(yv));
    Tensor ones = Tensor::full({n}, 1.0);

    Tensor p = ad::clamp(out.p_hat, 1e-7, 1.0 - 1e-7);
    Tensor pos_term = ad::scale(ad::mul(y, ad::log(p)), config.pos_weight);
    Tensor neg_term = ad::mul(ad::sub(ones, y), ad::log(ad::sub(ones, p)));
    Tensor bce = ad::scale(ad::mean_all(ad::add(pos_term, neg_term)), -1.0);

    if (config.ablation == Ablation::A3_single_task) return bce;

    for (double x : out.d_hat.values())
        if (!std::isfinite(x)) throw numeric_error("loss: non-finite regression output");
    Tensor target = Tensor::from({n}, std::move(yr));
    Tensor hub = ad::mean_all(ad::huber(out.d_hat, target, config.huber_delta));
    return ad::add(ad::scale(bce, config.task_lambda),
                   ad::scale(hub, 1.0 - config.task_lambda));
}

}  // namespace eagle
