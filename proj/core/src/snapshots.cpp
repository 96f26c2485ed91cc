#include "eagle/snapshots.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "eagle/errors.hpp"

namespace eagle {
namespace {

using nlohmann::json;

// Per (day, node) order aggregates; an order touches both its origin-role
// and destination-role node.
struct DayNodeAgg {
    int32_t span = 0;
    int32_t n = 0;
    std::vector<double> count, sched_sum, sched_sumsq, disc_sum, delay_sum;

    DayNodeAgg(const OrderTable& table, const NodeIndex& index) {
        span = table.day_span();
        n = index.count();
        size_t cells = static_cast<size_t>(span) * static_cast<size_t>(n);
        count.assign(cells, 0.0);
        sched_sum.assign(cells, 0.0);
        sched_sumsq.assign(cells, 0.0);
        disc_sum.assign(cells, 0.0);
        delay_sum.assign(cells, 0.0);
        for (const auto& o : table.orders) {
            int32_t nodes[2] = {index.id_of(o.origin_region, NodeRole::origin),
                                index.id_of(o.dest_region, NodeRole::destination)};
            for (int32_t v : nodes) {
                if (v < 0) throw data_error("order references region missing from node index");
                size_t c = static_cast<size_t>(o.order_day) * static_cast<size_t>(n) +
                           static_cast<size_t>(v);
                count[c] += 1.0;
                sched_sum[c] += o.scheduled_days;
                sched_sumsq[c] += static_cast<double>(o.scheduled_days) * o.scheduled_days;
                disc_sum[c] += o.discount_rate;
                delay_sum[c] += o.delay_days;
            }
        }
    }

    size_t cell(int32_t day, int32_t node) const {
        return static_cast<size_t>(day) * static_cast<size_t>(n) + static_cast<size_t>(node);
    }

    // Mean delay over orders touching `node` in [from, to); 0 if no orders.
    double window_mean_delay(int32_t node, int32_t from, int32_t to) const {
        double c = 0, s = 0;
        for (int32_t d = from; d < to && d < span; ++d) {
            size_t idx = cell(d, node);
            c += count[idx];
            s += delay_sum[idx];
        }
        return c > 0 ? s / c : 0.0;
    }
};

}  // namespace

std::vector<const Snapshot*> SplitBundle::split(Split s) const {
    std::vector<const Snapshot*> out;
    for (const auto& snap : snapshots)
        if (snap.split_tag == s) out.push_back(&snap);
    return out;
}

double SplitBundle::train_positive_rate() const {
    const auto& c = count(Split::train);
    return static_cast<double>(c.positives) / static_cast<double>(c.positives + c.negatives);
}

std::vector<Snapshot> build_snapshots(const OrderTable& table, const NodeIndex& index,
                                      int32_t T, int32_t stride, int32_t horizon) {
    int32_t span = table.day_span();
    if (span < T + horizon)
        throw data_error("insufficient data: day span " + std::to_string(span) +
                         " < minimum " + std::to_string(T + horizon) +
                         " (window + horizon)");
    DayNodeAgg agg(table, index);
    int32_t n = index.count();
    std::vector<Snapshot> snaps;
    for (int32_t t = 0; t + T + horizon <= span; t += stride) {
        Snapshot s;
        s.t = t;
        s.n_nodes = n;
        s.window = T;
        s.node_features.assign(static_cast<size_t>(n) * T * kNodeFeatureDim, 0.0);
        for (int32_t v = 0; v < n; ++v) {
            for (int32_t d = 0; d < T; ++d) {
                size_t c = agg.cell(t + d, v);
                double cnt = agg.count[c];
                if (cnt == 0) continue;
                double mean_sched = agg.sched_sum[c] / cnt;
                double var = std::max(0.0, agg.sched_sumsq[c] / cnt - mean_sched * mean_sched);
                s.feat(v, d, 0) = cnt;
                s.feat(v, d, 1) = mean_sched;
                s.feat(v, d, 2) = std::sqrt(var);
                s.feat(v, d, 3) = agg.disc_sum[c] / cnt;
                s.feat(v, d, 4) = agg.delay_sum[c] / cnt;
            }
        }
        s.y_class.assign(static_cast<size_t>(n), 0);
        s.y_reg.assign(static_cast<size_t>(n), 0.0);
        snaps.push_back(std::move(s));
    }
    return snaps;
}

std::array<int64_t, 3> split_sizes(int64_t n, double train_frac, double val_frac) {
    if (n < 3) throw data_error("cannot split " + std::to_string(n) + " snapshots three ways");
    int64_t tr = static_cast<int64_t>(std::floor(train_frac * static_cast<double>(n)));
    int64_t va = static_cast<int64_t>(std::floor(val_frac * static_cast<double>(n)));
    int64_t te = n - tr - va;
    std::array<int64_t, 3> sizes{tr, va, te};
    // Minimal rebalance: empty splits borrow one from the largest split.
    for (int i = 0; i < 3; ++i) {
        if (sizes[static_cast<size_t>(i)] > 0) continue;
        size_t largest = 0;
        for (size_t k = 1; k < 3; ++k)
            if (sizes[k] > sizes[largest]) largest = k;
        sizes[largest] -= 1;
        sizes[static_cast<size_t>(i)] += 1;
    }
    for (int64_t s : sizes)
        if (s <= 0) throw data_error("empty split after rebalancing");
    return sizes;
}

void chronological_split(std::vector<Snapshot>& snapshots, double train_frac, double val_frac) {
    auto sizes = split_sizes(static_cast<int64_t>(snapshots.size()), train_frac, val_frac);
    for (size_t i = 0; i < snapshots.size(); ++i) {
        int64_t k = static_cast<int64_t>(i);
        snapshots[i].split_tag = k < sizes[0]              ? Split::train
                                 : k < sizes[0] + sizes[1] ? Split::val
                                                           : Split::test;
    }
}

std::vector<double> compute_baselines(const std::vector<Snapshot>& snapshots,
                                      const OrderTable& table, const NodeIndex& index,
                                      int32_t horizon) {
    DayNodeAgg agg(table, index);
    int32_t n = index.count();
    std::vector<double> mu(static_cast<size_t>(n), 0.0);
    int64_t train_windows = 0;
    for (const auto& s : snapshots) {
        if (s.split_tag != Split::train) continue;
        ++train_windows;
        for (int32_t v = 0; v < n; ++v)
            mu[static_cast<size_t>(v)] +=
                agg.window_mean_delay(v, s.t + s.window, s.t + s.window + horizon);
    }
    if (train_windows > 0)
        for (double& m : mu) m /= static_cast<double>(train_windows);
    return mu;
}

namespace {

void assign_labels_with(Snapshot& snapshot, const DayNodeAgg& agg,
                        const std::vector<double>& mu, int32_t horizon) {
    int32_t n = agg.n;
    for (int32_t v = 0; v < n; ++v) {
        double d_next = agg.window_mean_delay(v, snapshot.t + snapshot.window,
                                              snapshot.t + snapshot.window + horizon);
        double m = mu[static_cast<size_t>(v)];
        snapshot.y_reg[static_cast<size_t>(v)] = d_next;
        // Relative label; for cold-start nodes (mu == 0) this reduces to d > 0.
        snapshot.y_class[static_cast<size_t>(v)] = d_next > m ? 1 : 0;
    }
}

}  // namespace

void assign_labels(Snapshot& snapshot, const OrderTable& table, const NodeIndex& index,
                   const std::vector<double>& mu, int32_t horizon) {
    DayNodeAgg agg(table, index);
    assign_labels_with(snapshot, agg, mu, horizon);
}

void standardize(SplitBundle& bundle) {
    size_t per_feat_count = 0;
    std::array<double, kNodeFeatureDim> sum{}, sumsq{};
    for (const auto& s : bundle.snapshots) {
        if (s.split_tag != Split::train) continue;
        for (size_t i = 0; i < s.node_features.size(); ++i) {
            size_t f = i % kNodeFeatureDim;
            sum[f] += s.node_features[i];
            sumsq[f] += s.node_features[i] * s.node_features[i];
        }
        per_feat_count += s.node_features.size() / kNodeFeatureDim;
    }
    if (per_feat_count == 0) throw data_error("standardize: no train snapshots");
    for (size_t f = 0; f < kNodeFeatureDim; ++f) {
        double mean = sum[f] / static_cast<double>(per_feat_count);
        double var = std::max(0.0, sumsq[f] / static_cast<double>(per_feat_count) - mean * mean);
        bundle.feat_mean[f] = mean;
        bundle.feat_std[f] = std::max(std::sqrt(var), 1e-8);
    }
    for (auto& s : bundle.snapshots)
        for (size_t i = 0; i < s.node_features.size(); ++i) {
            size_t f = i % kNodeFeatureDim;
            s.node_features[i] = (s.node_features[i] - bundle.feat_mean[f]) / bundle.feat_std[f];
        }
}

SplitBundle build_bundle(const OrderTable& table, const NodeIndex& index, int32_t T,
                         int32_t stride, int32_t horizon) {
    SplitBundle bundle;
    bundle.n_nodes = index.count();
    bundle.window = T;
    bundle.horizon = horizon;
    bundle.snapshots = build_snapshots(table, index, T, stride, horizon);
    chronological_split(bundle.snapshots);
    bundle.baseline_mu = compute_baselines(bundle.snapshots, table, index, horizon);
    DayNodeAgg agg(table, index);
    for (auto& s : bundle.snapshots) assign_labels_with(s, agg, bundle.baseline_mu, horizon);
    for (const auto& s : bundle.snapshots) {
        auto& c = bundle.counts[static_cast<size_t>(s.split_tag)];
        c.snapshots++;
        for (uint8_t y : s.y_class) (y ? c.positives : c.negatives)++;
    }
    standardize(bundle);
    return bundle;
}

SyntheticConfig SyntheticConfig::from_json(const std::string& json_text) {
    json j = json::parse(json_text);
    SyntheticConfig c;
    c.n_regions = j.value("n_regions", c.n_regions);
    c.n_days = j.value("n_days", c.n_days);
    c.base_delay_rate = j.value("base_delay_rate", c.base_delay_rate);
    c.seasonal_amplitude = j.value("seasonal_amplitude", c.seasonal_amplitude);
    c.base_volume = j.value("base_volume", c.base_volume);
    if (j.contains("hub_risk_map"))
        for (auto& [k, v] : j.at("hub_risk_map").items()) c.hub_risk_map[k] = v.get<double>();
    return c;
}

std::string SyntheticConfig::to_json() const {
    json j;
    j["n_regions"] = n_regions;
    j["n_days"] = n_days;
    j["base_delay_rate"] = base_delay_rate;
    j["seasonal_amplitude"] = seasonal_amplitude;
    j["base_volume"] = base_volume;
    j["hub_risk_map"] = hub_risk_map;
    return j.dump(2);
}

OrderTable generate_synthetic(const SyntheticConfig& config, uint64_t seed) {
    if (config.n_days < 28)
        throw data_error("synthetic config: n_days must be >= 28");
    if (config.n_regions < 2 || config.base_delay_rate < 0.0 || config.base_delay_rate > 1.0 ||
        config.seasonal_amplitude < 0.0 || config.seasonal_amplitude >= 1.0 ||
        config.base_volume < 1)
        throw data_error("synthetic config: parameter out of range");

    std::mt19937_64 rng(seed);
    int32_t k = config.n_regions;
    std::vector<std::string> regions;
    for (int32_t i = 0; i < k; ++i) regions.push_back("R" + std::to_string(i));
    auto risk_mult = [&](int32_t r) {
        auto it = config.hub_risk_map.find(regions[static_cast<size_t>(r)]);
        return it == config.hub_risk_map.end() ? 1.0 : it->second;
    };

    // Static lane properties.
    struct Lane {
        int32_t from, to, sched;
        double weight;
        std::array<double, 4> mode_probs;
    };
    std::vector<Lane> lanes;
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    for (int32_t i = 0; i < k; ++i)
        for (int32_t j = 0; j < k; ++j) {
            if (i == j) continue;
            Lane lane;
            lane.from = i;
            lane.to = j;
            lane.sched = 2 + static_cast<int32_t>(rng() % 5);
            lane.weight = 0.5 + 1.5 * uni(rng);
            double a = 0.2 + uni(rng), b = 0.2 + uni(rng), c = 0.2 + uni(rng), d = 0.2 + uni(rng);
            double tot = a + b + c + d;
            lane.mode_probs = {a / tot, b / tot, c / tot, d / tot};
            lanes.push_back(lane);
        }

    // Per-region congestion follows a local level + slowly drifting trend, so
    // the end-of-window level and its direction carry more signal about the
    // next window than the window mean does.
    std::vector<double> congestion(static_cast<size_t>(k), 0.0);
    std::vector<double> trend(static_cast<size_t>(k), 0.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    OrderTable table;
    table.shipping_modes = SchemaConfig::synthetic_default().shipping_modes;
    int64_t order_seq = 0;
    for (int32_t day = 0; day < config.n_days; ++day) {
        for (int32_t r = 0; r < k; ++r) {
            size_t ri = static_cast<size_t>(r);
            trend[ri] = 0.96 * trend[ri] + 0.035 * gauss(rng);
            congestion[ri] = 0.93 * congestion[ri] + trend[ri] + 0.18 * gauss(rng);
        }
        double season = 1.0 + config.seasonal_amplitude * std::sin(2.0 * M_PI * day / 7.0);
        for (const auto& lane : lanes) {
            double lam = config.base_volume * season * lane.weight / static_cast<double>(k - 1);
            std::poisson_distribution<int> pois(lam);
            int n_orders = pois(rng);
            for (int q = 0; q < n_orders; ++q) {
                OrderRecord o;
                char buf[16];
                std::snprintf(buf, sizeof(buf), "S%08lld", static_cast<long long>(order_seq++));
                o.order_id = buf;
                o.order_day = day;
                o.origin_region = regions[static_cast<size_t>(lane.from)];
                o.dest_region = regions[static_cast<size_t>(lane.to)];
                o.scheduled_days = lane.sched + static_cast<int32_t>(rng() % 2);
                o.discount_rate = 0.3 * uni(rng);
                double roll = uni(rng);
                double acc = 0;
                o.shipping_mode = 3;
                for (int m = 0; m < 4; ++m) {
                    acc += lane.mode_probs[static_cast<size_t>(m)];
                    if (roll < acc) {
                        o.shipping_mode = m;
                        break;
                    }
                }
                double c_mix = 0.65 * congestion[static_cast<size_t>(lane.to)] +
                               0.35 * congestion[static_cast<size_t>(lane.from)];
                double p = config.base_delay_rate * risk_mult(lane.to) *
                               (0.15 + 2.2 / (1.0 + std::exp(-1.6 * c_mix))) +
                           0.004 * (o.scheduled_days - 2);
                p = std::clamp(p, 0.0, 0.95);
                if (config.base_delay_rate == 0.0) p = 0.0;
                if (uni(rng) < p) {
                    int extra = 1;
                    double grow = 0.3 + 0.3 / (1.0 + std::exp(-c_mix));
                    while (uni(rng) < grow && extra < 10) ++extra;
                    o.real_days = o.scheduled_days + extra;
                } else {
                    o.real_days = std::max(0, o.scheduled_days - (uni(rng) < 0.2 ? 1 : 0));
                }
                o.delay_days = std::max(0.0, static_cast<double>(o.real_days - o.scheduled_days));
                table.orders.push_back(std::move(o));
            }
        }
    }
    table.raw_rows = static_cast<int64_t>(table.orders.size());
    table.dropped_rows = 0;
    std::sort(table.orders.begin(), table.orders.end(),
              [](const OrderRecord& a, const OrderRecord& b) {
                  if (a.order_day != b.order_day) return a.order_day < b.order_day;
                  return a.order_id < b.order_id;
              });
    return table;
}

namespace {

constexpr char kBundleMagic[8] = {'E', 'A', 'G', 'L', 'B', 'N', 'D', 'L'};
constexpr uint32_t kBundleVersion = 1;

template <typename T>
void put(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void get(std::istream& in, T& v) {
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw data_error("bundle format error: truncated file");
}

void put_vec(std::ostream& out, const std::vector<double>& v) {
    put(out, static_cast<uint64_t>(v.size()));
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(double)));
}

void get_vec(std::istream& in, std::vector<double>& v) {
    uint64_t n;
    get(in, n);
    v.resize(n);
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
    if (!in) throw data_error("bundle format error: truncated file");
}

}  // namespace

void save_bundle(const SplitBundle& bundle, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot write bundle: " + path);
    out.write(kBundleMagic, 8);
    put(out, kBundleVersion);
    put(out, bundle.n_nodes);
    put(out, bundle.window);
    put(out, bundle.horizon);
    put_vec(out, bundle.baseline_mu);
    for (double v : bundle.feat_mean) put(out, v);
    for (double v : bundle.feat_std) put(out, v);
    for (const auto& c : bundle.counts) {
        put(out, c.snapshots);
        put(out, c.positives);
        put(out, c.negatives);
    }
    put(out, static_cast<uint64_t>(bundle.snapshots.size()));
    for (const auto& s : bundle.snapshots) {
        put(out, s.t);
        put(out, static_cast<uint8_t>(s.split_tag));
        put_vec(out, s.node_features);
        put(out, static_cast<uint64_t>(s.y_class.size()));
        out.write(reinterpret_cast<const char*>(s.y_class.data()),
                  static_cast<std::streamsize>(s.y_class.size()));
        put_vec(out, s.y_reg);
    }
    if (!out) throw io_error("failed writing bundle: " + path);
}

SplitBundle load_bundle(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open bundle: " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kBundleMagic, 8) != 0)
        throw data_error("bundle format error: bad magic in " + path);
    uint32_t version;
    get(in, version);
    if (version != kBundleVersion)
        throw data_error("bundle format error: unsupported version " + std::to_string(version));
    SplitBundle bundle;
    get(in, bundle.n_nodes);
    get(in, bundle.window);
    get(in, bundle.horizon);
    get_vec(in, bundle.baseline_mu);
    for (double& v : bundle.feat_mean) get(in, v);
    for (double& v : bundle.feat_std) get(in, v);
    for (auto& c : bundle.counts) {
        get(in, c.snapshots);
        get(in, c.positives);
        get(in, c.negatives);
    }
    uint64_t n_snaps;
    get(in, n_snaps);
    for (uint64_t i = 0; i < n_snaps; ++i) {
        Snapshot s;
        get(in, s.t);
        uint8_t tag;
        get(in, tag);
        s.split_tag = static_cast<Split>(tag);
        get_vec(in, s.node_features);
        uint64_t ny;
        get(in, ny);
        s.y_class.resize(ny);
        in.read(reinterpret_cast<char*>(s.y_class.data()), static_cast<std::streamsize>(ny));
        if (!in) throw data_error("bundle format error: truncated file");
        get_vec(in, s.y_reg);
        s.n_nodes = bundle.n_nodes;
        s.window = bundle.window;
        bundle.snapshots.push_back(std::move(s));
    }
    // Recount and verify against the stored header.
    std::array<SplitCounts, 3> recount{};
    for (const auto& s : bundle.snapshots) {
        auto& c = recount[static_cast<size_t>(s.split_tag)];
        c.snapshots++;
        for (uint8_t y : s.y_class) (y ? c.positives : c.negatives)++;
    }
    if (recount != bundle.counts)
        throw data_error("bundle format error: stored counts disagree with contents");
    return bundle;
}

double max_feature_label_correlation(const SplitBundle& bundle) {
    double best = 0.0;
    for (int f = 0; f < kNodeFeatureDim; ++f) {
        double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
        int64_t n = 0;
        for (const auto& s : bundle.snapshots) {
            if (s.split_tag != Split::train) continue;
            for (int32_t v = 0; v < s.n_nodes; ++v) {
                double x = 0;
                for (int32_t d = 0; d < s.window; ++d) x += s.feat(v, d, f);
                x /= s.window;
                double y = s.y_class[static_cast<size_t>(v)];
                sx += x;
                sy += y;
                sxx += x * x;
                syy += y * y;
                sxy += x * y;
                ++n;
            }
        }
        if (n == 0) continue;
        double dn = static_cast<double>(n);
        double cov = sxy / dn - (sx / dn) * (sy / dn);
        double vx = sxx / dn - (sx / dn) * (sx / dn);
        double vy = syy / dn - (sy / dn) * (sy / dn);
        if (vx <= 0 || vy <= 0) continue;
        best = std::max(best, std::abs(cov / std::sqrt(vx * vy)));
    }
    return best;
}

}  // namespace eagle
