#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "eagle/errors.hpp"
#include "eagle/graph.hpp"
#include "eagle/orders.hpp"
#include "eagle/snapshots.hpp"

using namespace eagle;
namespace fs = std::filesystem;

namespace {

std::string temp_path(const std::string& name) {
    return (fs::temp_directory_path() / ("eagle_snap_" + name)).string();
}

int g_seq = 0;

OrderRecord order(int day, const std::string& origin, const std::string& dest, double delay,
                  int sched = 3, double disc = 0.0) {
    OrderRecord o;
    char buf[16];
    std::snprintf(buf, sizeof(buf), "H%06d", g_seq++);
    o.order_id = buf;
    o.order_day = day;
    o.origin_region = origin;
    o.dest_region = dest;
    o.scheduled_days = sched;
    o.discount_rate = disc;
    o.real_days = sched + static_cast<int>(delay);
    o.delay_days = delay;
    return o;
}

OrderTable finalize(std::vector<OrderRecord> orders) {
    OrderTable t;
    t.shipping_modes = {"m0", "m1", "m2", "m3"};
    t.orders = std::move(orders);
    t.raw_rows = static_cast<int64_t>(t.orders.size());
    return t;
}

SyntheticConfig small_synth() {
    SyntheticConfig cfg;
    cfg.n_regions = 4;
    cfg.n_days = 60;
    cfg.base_volume = 4;
    return cfg;
}

}  // namespace

TEST_CASE("window count is span - window - horizon + 1") {
    // one order per day keeps the day span exact
    std::vector<OrderRecord> orders;
    for (int d = 0; d < 42; ++d) orders.push_back(order(d, "A", "B", 0.0));
    OrderTable t = finalize(std::move(orders));
    NodeIndex idx = build_node_index(t);
    auto snaps = build_snapshots(t, idx, 14, 1, 14);
    CHECK(snaps.size() == 15);
    CHECK(snaps.front().t == 0);
    CHECK(snaps.back().t == 14);

    SUBCASE("stride thins the windows") {
        CHECK(build_snapshots(t, idx, 14, 7, 14).size() == 3);  // t = 0, 7, 14
    }
    SUBCASE("span shorter than window + horizon aborts") {
        std::vector<OrderRecord> few;
        for (int d = 0; d < 27; ++d) few.push_back(order(d, "A", "B", 0.0));
        OrderTable small = finalize(std::move(few));
        CHECK_THROWS_WITH_AS(build_snapshots(small, build_node_index(small), 14, 1, 14),
                             doctest::Contains("insufficient data"), Error);
    }
}

TEST_CASE("snapshot features match hand-computed day aggregates") {
    std::vector<OrderRecord> orders;
    for (int d = 0; d < 28; ++d) orders.push_back(order(d, "A", "B", 0.0));
    // day 1 at destination B: two extra orders with known stats
    orders.push_back(order(1, "C", "B", 2.0, 5, 0.3));
    orders.push_back(order(1, "C", "B", 4.0, 7, 0.3));
    OrderTable t = finalize(std::move(orders));
    NodeIndex idx = build_node_index(t);
    auto snaps = build_snapshots(t, idx, 14, 1, 14);
    REQUIRE_FALSE(snaps.empty());

    int32_t b = idx.id_of("B", NodeRole::destination);
    const Snapshot& s = snaps[0];
    // day 1 at B: scheduled {3, 5, 7}, discounts {0, .3, .3}, delays {0, 2, 4}
    CHECK(s.feat(b, 1, 0) == doctest::Approx(3.0));
    CHECK(s.feat(b, 1, 1) == doctest::Approx(5.0));
    CHECK(s.feat(b, 1, 2) == doctest::Approx(std::sqrt(8.0 / 3.0)));
    CHECK(s.feat(b, 1, 3) == doctest::Approx(0.2));
    CHECK(s.feat(b, 1, 4) == doctest::Approx(2.0));
    // a (day, node) cell with no orders stays all-zero
    int32_t a_dst = idx.id_of("A", NodeRole::destination);
    CHECK(a_dst == -1);
    int32_t c_org = idx.id_of("C", NodeRole::origin);
    CHECK(s.feat(c_org, 0, 0) == 0.0);
}

TEST_CASE("split sizes floor train/val and give the remainder to test") {
    CHECK(split_sizes(10) == std::array<int64_t, 3>{7, 1, 2});
    CHECK(split_sizes(1006) == std::array<int64_t, 3>{704, 150, 152});
    CHECK(split_sizes(100) == std::array<int64_t, 3>{70, 15, 15});
    // minimal rebalance keeps every split non-empty
    CHECK(split_sizes(3) == std::array<int64_t, 3>{1, 1, 1});
    CHECK(split_sizes(4) == std::array<int64_t, 3>{1, 1, 2});
    CHECK_THROWS_AS(split_sizes(2), Error);
}

TEST_CASE("chronological split tags are contiguous and ordered") {
    OrderTable t = generate_synthetic(small_synth(), 11);
    NodeIndex idx = build_node_index(t);
    auto snaps = build_snapshots(t, idx);
    chronological_split(snaps);
    Split prev = Split::train;
    for (const auto& s : snaps) {
        CHECK(static_cast<int>(s.split_tag) >= static_cast<int>(prev));
        prev = s.split_tag;
    }
    CHECK(snaps.front().split_tag == Split::train);
    CHECK(snaps.back().split_tag == Split::test);
}

TEST_CASE("baselines and labels follow the relative rule with strict inequality") {
    // lane A->B, one order per day; delays chosen so window means are exact
    std::vector<OrderRecord> orders;
    std::vector<double> delays = {0, 0, 2, 4, 0, 0, 0, 0};
    for (int d = 0; d < 8; ++d) orders.push_back(order(d, "A", "B", delays[static_cast<size_t>(d)]));
    OrderTable t = finalize(std::move(orders));
    NodeIndex idx = build_node_index(t);
    auto snaps = build_snapshots(t, idx, 2, 1, 2);
    REQUIRE(snaps.size() == 5);
    chronological_split(snaps);  // sizes 2/1/2

    auto mu = compute_baselines(snaps, t, idx, 2);
    int32_t b = idx.id_of("B", NodeRole::destination);
    // train label windows: days {2,3} mean 3, days {3,4} mean 2 -> mu = 2.5
    CHECK(mu[static_cast<size_t>(b)] == doctest::Approx(2.5));

    for (auto& s : snaps) assign_labels(s, t, idx, mu, 2);
    // t=0: d_next = 3 > 2.5 -> 1; t=1: d_next = 2 -> 0; t=2: d_next = 2 -> 0
    CHECK(snaps[0].y_class[static_cast<size_t>(b)] == 1);
    CHECK(snaps[0].y_reg[static_cast<size_t>(b)] == doctest::Approx(3.0));
    CHECK(snaps[1].y_class[static_cast<size_t>(b)] == 0);
    CHECK(snaps[2].y_class[static_cast<size_t>(b)] == 0);

    SUBCASE("d_next exactly equal to mu is negative") {
        std::vector<double> flat_mu(static_cast<size_t>(idx.count()), 3.0);
        Snapshot s = snaps[0];  // d_next at B is 3.0
        assign_labels(s, t, idx, flat_mu, 2);
        CHECK(s.y_class[static_cast<size_t>(b)] == 0);
    }
    SUBCASE("cold-start mu of zero reduces to any-delay") {
        std::vector<double> zero_mu(static_cast<size_t>(idx.count()), 0.0);
        Snapshot pos = snaps[0], neg = snaps[4];  // label windows {2,3} vs {6,7}
        assign_labels(pos, t, idx, zero_mu, 2);
        assign_labels(neg, t, idx, zero_mu, 2);
        CHECK(pos.y_class[static_cast<size_t>(b)] == 1);
        CHECK(neg.y_class[static_cast<size_t>(b)] == 0);
    }
}

TEST_CASE("standardization centers train features on train-only statistics") {
    OrderTable t = generate_synthetic(small_synth(), 11);
    NodeIndex idx = build_node_index(t);
    SplitBundle bundle = build_bundle(t, idx);

    for (int f = 0; f < kNodeFeatureDim; ++f) {
        double sum = 0, sumsq = 0;
        int64_t n = 0;
        for (const auto* s : bundle.split(Split::train)) {
            for (int32_t v = 0; v < s->n_nodes; ++v)
                for (int32_t d = 0; d < s->window; ++d) {
                    double x = s->feat(v, d, f);
                    sum += x;
                    sumsq += x * x;
                    ++n;
                }
        }
        double mean = sum / static_cast<double>(n);
        double var = sumsq / static_cast<double>(n) - mean * mean;
        CHECK(mean == doctest::Approx(0.0).epsilon(1e-9));
        CHECK(var == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("bundle counts are consistent with snapshot contents") {
    OrderTable t = generate_synthetic(small_synth(), 11);
    NodeIndex idx = build_node_index(t);
    SplitBundle bundle = build_bundle(t, idx);

    int64_t total = 0;
    for (const auto& c : bundle.counts) {
        total += c.snapshots;
        CHECK(c.positives + c.negatives == c.snapshots * bundle.n_nodes);
    }
    CHECK(total == static_cast<int64_t>(bundle.snapshots.size()));
    CHECK(bundle.train_positive_rate() > 0.0);
    CHECK(bundle.train_positive_rate() < 1.0);
    double corr = max_feature_label_correlation(bundle);
    CHECK(corr >= 0.0);
    CHECK(corr <= 1.0);
}

TEST_CASE("mutating data past the train horizon changes no train-visible state") {
    OrderTable base = generate_synthetic(small_synth(), 11);
    NodeIndex idx = build_node_index(base);
    SplitBundle clean = build_bundle(base, idx);

    // last train snapshot's label window ends here; later days are train-invisible
    int32_t cutoff = 0;
    for (const auto* s : clean.split(Split::train))
        cutoff = std::max(cutoff, s->t + s->window + clean.horizon);

    OrderTable mutated = base;
    bool touched = false;
    for (auto& o : mutated.orders)
        if (o.order_day >= cutoff) {
            o.delay_days += 5.0;
            o.real_days += 5;
            touched = true;
        }
    REQUIRE(touched);
    SplitBundle dirty = build_bundle(mutated, idx);

    CHECK(dirty.baseline_mu == clean.baseline_mu);
    CHECK(dirty.feat_mean == clean.feat_mean);
    CHECK(dirty.feat_std == clean.feat_std);
    auto ct = clean.split(Split::train), dt = dirty.split(Split::train);
    REQUIRE(ct.size() == dt.size());
    for (size_t i = 0; i < ct.size(); ++i) {
        CHECK(ct[i]->node_features == dt[i]->node_features);
        CHECK(ct[i]->y_class == dt[i]->y_class);
        CHECK(ct[i]->y_reg == dt[i]->y_reg);
    }
    // the mutation did land somewhere in the later splits
    bool changed = false;
    for (size_t i = 0; i < clean.snapshots.size(); ++i)
        if (clean.snapshots[i].y_reg != dirty.snapshots[i].y_reg) changed = true;
    CHECK(changed);
}

TEST_CASE("a delay impulse never reaches a window's features and labels at once") {
    std::vector<OrderRecord> base_orders;
    for (int d = 0; d < 40; ++d) base_orders.push_back(order(d, "A", "B", 0.0));
    OrderTable base = finalize(base_orders);
    NodeIndex idx = build_node_index(base);

    const int impulse_day = 20;
    std::vector<OrderRecord> spiked_orders = base_orders;
    spiked_orders.push_back(order(impulse_day, "A", "B", 9.0));
    OrderTable spiked = finalize(std::move(spiked_orders));

    auto clean = build_snapshots(base, idx, 14, 1, 14);
    auto hot = build_snapshots(spiked, idx, 14, 1, 14);
    REQUIRE(clean.size() == hot.size());
    std::vector<double> zero_mu(static_cast<size_t>(idx.count()), 0.0);
    for (auto& s : clean) assign_labels(s, base, idx, zero_mu, 14);
    for (auto& s : hot) assign_labels(s, spiked, idx, zero_mu, 14);

    for (size_t i = 0; i < clean.size(); ++i) {
        bool feat_changed = clean[i].node_features != hot[i].node_features;
        bool label_changed =
            clean[i].y_reg != hot[i].y_reg || clean[i].y_class != hot[i].y_class;
        int32_t t = clean[i].t;
        CHECK(feat_changed == (t <= impulse_day && impulse_day < t + 14));
        CHECK(label_changed == (t + 14 <= impulse_day && impulse_day < t + 28));
        CHECK_FALSE((feat_changed && label_changed));
    }
}

TEST_CASE("bundle survives a binary round trip") {
    OrderTable t = generate_synthetic(small_synth(), 11);
    SplitBundle bundle = build_bundle(t, build_node_index(t));
    std::string path = temp_path("roundtrip.bin");
    save_bundle(bundle, path);
    SplitBundle back = load_bundle(path);
    CHECK(back == bundle);
    std::remove(path.c_str());
}

TEST_CASE("corrupt bundles are rejected") {
    OrderTable t = generate_synthetic(small_synth(), 11);
    SplitBundle bundle = build_bundle(t, build_node_index(t));
    std::string path = temp_path("corrupt.bin");

    SUBCASE("truncated file") {
        save_bundle(bundle, path);
        fs::resize_file(path, fs::file_size(path) / 2);
        CHECK_THROWS_WITH_AS(load_bundle(path), doctest::Contains("truncated"), Error);
    }
    SUBCASE("header counts disagreeing with contents") {
        SplitBundle lying = bundle;
        lying.counts[0].positives += 1;
        lying.counts[0].negatives -= 1;
        save_bundle(lying, path);
        CHECK_THROWS_WITH_AS(load_bundle(path), doctest::Contains("counts disagree"), Error);
    }
    SUBCASE("bad magic") {
        std::ofstream out(path, std::ios::binary);
        out << "NOTABNDL garbage";
        out.close();
        CHECK_THROWS_WITH_AS(load_bundle(path), doctest::Contains("magic"), Error);
    }
    std::remove(path.c_str());
}

TEST_CASE("synthetic generation is deterministic per (config, seed)") {
    SyntheticConfig cfg = small_synth();
    OrderTable a = generate_synthetic(cfg, 11);
    OrderTable b = generate_synthetic(cfg, 11);
    CHECK(a == b);
    OrderTable c = generate_synthetic(cfg, 12);
    CHECK(a.orders != c.orders);
}

TEST_CASE("synthetic config validates ranges and round trips through JSON") {
    SyntheticConfig cfg = small_synth();
    cfg.hub_risk_map["R1"] = 1.8;
    SyntheticConfig back = SyntheticConfig::from_json(cfg.to_json());
    CHECK(back.n_regions == cfg.n_regions);
    CHECK(back.n_days == cfg.n_days);
    CHECK(back.hub_risk_map == cfg.hub_risk_map);

    SyntheticConfig bad = cfg;
    bad.n_days = 27;
    CHECK_THROWS_AS(generate_synthetic(bad, 0), Error);
    bad = cfg;
    bad.n_regions = 1;
    CHECK_THROWS_AS(generate_synthetic(bad, 0), Error);
    bad = cfg;
    bad.seasonal_amplitude = 1.0;
    CHECK_THROWS_AS(generate_synthetic(bad, 0), Error);
}

TEST_CASE("zero base delay rate produces an all-negative label set") {
    SyntheticConfig cfg = small_synth();
    cfg.base_delay_rate = 0.0;
    OrderTable t = generate_synthetic(cfg, 11);
    for (const auto& o : t.orders) CHECK(o.delay_days == 0.0);
}
