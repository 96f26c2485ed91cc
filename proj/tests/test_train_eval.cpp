#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "eagle/errors.hpp"
#include "eagle/metrics.hpp"
#include "eagle/optim.hpp"
#include "eagle/train.hpp"

using namespace eagle;
namespace fs = std::filesystem;

namespace {

std::string temp_path(const std::string& name) {
    return (fs::temp_directory_path() / ("eagle_train_" + name)).string();
}

struct Fixture {
    OrderTable table;
    SupplyGraph graph;
    SplitBundle bundle;
    ModelConfig model;
    TrainConfig train_cfg;

    Fixture() {
        SyntheticConfig cfg;
        cfg.n_regions = 4;
        cfg.n_days = 60;
        cfg.base_volume = 4;
        table = generate_synthetic(cfg, 11);
        graph = build_graph(table);
        bundle = build_bundle(table, graph.index);

        model.d_model = 8;
        model.encoder_layers = 1;
        model.encoder_heads = 2;
        model.gat_layers = 1;
        model.gat_heads = 2;
        model.head_hidden = 8;
        model.dropout_rate = 0.1;

        train_cfg.epochs = 2;
        train_cfg.early_stop_patience = 10;
        train_cfg.seeds = {0, 1};
    }
};

PredictionRow row(double score, uint8_t y, double y_reg = 0.0, double mag = 0.0,
                  bool has_mag = true) {
    PredictionRow r;
    r.score = score;
    r.y_class = y;
    r.y_reg = y_reg;
    r.magnitude = mag;
    r.has_magnitude = has_mag;
    return r;
}

}  // namespace

TEST_CASE("cosine schedule hits both endpoints and never increases") {
    const int64_t total = 101;
    CHECK(cosine_lr(0, total, 3e-4, 1e-5) == doctest::Approx(3e-4));
    CHECK(cosine_lr(total - 1, total, 3e-4, 1e-5) == doctest::Approx(1e-5));
    CHECK(cosine_lr(50, total, 3e-4, 1e-5) == doctest::Approx(0.5 * (3e-4 + 1e-5)));
    double prev = cosine_lr(0, total, 3e-4, 1e-5);
    for (int64_t s = 1; s < total; ++s) {
        double lr = cosine_lr(s, total, 3e-4, 1e-5);
        CHECK(lr <= prev + 1e-15);
        prev = lr;
    }
    CHECK(cosine_lr(5, 1, 3e-4, 1e-5) == doctest::Approx(3e-4));  // degenerate budget
}

TEST_CASE("global-norm clipping rescales to the budget and reports the pre-clip norm") {
    std::vector<ad::Tensor> params = {ad::Tensor::zeros({2}, true), ad::Tensor::zeros({1}, true)};
    params[0].impl()->ensure_grad();
    params[1].impl()->ensure_grad();
    params[0].impl()->g = {3.0, 0.0};
    params[1].impl()->g = {4.0};

    double norm = clip_global_norm(params, 1.0);
    CHECK(norm == doctest::Approx(5.0));
    double after = std::sqrt(params[0].grad()[0] * params[0].grad()[0] +
                             params[1].grad()[0] * params[1].grad()[0]);
    CHECK(after == doctest::Approx(1.0));
    CHECK(params[0].grad()[0] == doctest::Approx(0.6));

    // below the budget nothing changes
    params[0].impl()->g = {0.3, 0.0};
    params[1].impl()->g = {0.4};
    CHECK(clip_global_norm(params, 1.0) == doctest::Approx(0.5));
    CHECK(params[1].grad()[0] == doctest::Approx(0.4));
}

TEST_CASE("a single AdamW step matches the closed-form update") {
    std::vector<ad::Tensor> params = {ad::Tensor::from({1}, {1.0}, true)};
    params[0].impl()->ensure_grad();
    params[0].impl()->g = {0.5};
    AdamW opt(params, {.weight_decay = 0.1});
    opt.step(params, 0.1);

    double decayed = 1.0 - 0.1 * 0.1 * 1.0;
    double mhat = (0.1 * 0.5) / (1.0 - 0.9);          // bias-corrected first moment
    double vhat = (0.001 * 0.25) / (1.0 - 0.999);     // bias-corrected second moment
    double expected = decayed - 0.1 * mhat / (std::sqrt(vhat) + 1e-8);
    CHECK(params[0].values()[0] == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("macro F1 averages both class F1 scores at the given threshold") {
    std::vector<PredictionRow> preds = {row(0.9, 1), row(0.8, 0), row(0.3, 1), row(0.1, 0)};
    // theta 0.5: positive class tp=1 fp=1 fn=1 -> 0.5; negative mirror -> 0.5
    CHECK(macro_f1(preds, 0.5) == doctest::Approx(0.5));
    // theta 0.85: predicts only 0.9 positive -> perfect positive precision
    CHECK(macro_f1(preds, 0.85) ==
          doctest::Approx(0.5 * (2.0 / 3.0 + 2.0 * 2.0 / (2.0 * 2.0 + 1.0))));
    CHECK_THROWS_AS(macro_f1({}, 0.5), Error);
}

TEST_CASE("AUC matches hand-ranked cases and handles ties with midranks") {
    std::vector<PredictionRow> preds = {row(0.1, 0), row(0.4, 0), row(0.35, 1), row(0.8, 1)};
    CHECK(auc_roc(preds) == doctest::Approx(0.75));  // 3 of 4 pairs ordered correctly

    std::vector<PredictionRow> tied = {row(0.5, 1), row(0.5, 0), row(0.2, 0)};
    CHECK(auc_roc(tied) == doctest::Approx(0.75));  // one win, one tie at 0.5

    std::vector<PredictionRow> single = {row(0.5, 1), row(0.9, 1)};
    CHECK_THROWS_AS(auc_roc(single), Error);
    try {
        auc_roc(single);
    } catch (const Error& e) {
        CHECK(e.error_class() == ErrorClass::data);
    }
}

TEST_CASE("AUC is invariant under strictly monotone score transforms") {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::vector<PredictionRow> preds;
    for (int i = 0; i < 200; ++i) preds.push_back(row(uni(rng), uni(rng) < 0.3 ? 1 : 0));
    double base = auc_roc(preds);
    std::vector<PredictionRow> warped = preds;
    for (auto& r : warped) r.score = std::exp(3.0 * r.score) - 0.5;
    CHECK(auc_roc(warped) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("calibrated threshold is optimal against a dense grid") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::vector<PredictionRow> preds;
    for (int i = 0; i < 150; ++i) {
        uint8_t y = uni(rng) < 0.3 ? 1 : 0;
        preds.push_back(row(std::min(1.0, std::max(0.0, 0.3 * y + 0.6 * uni(rng))), y));
    }
    double theta = calibrate_threshold(preds);
    double best_grid = -1.0;
    for (int i = 0; i <= 10000; ++i)
        best_grid = std::max(best_grid, macro_f1(preds, i / 10000.0));
    CHECK(macro_f1(preds, theta) >= best_grid - 1e-9);
}

TEST_CASE("calibration tie-breaks toward the smallest threshold") {
    // both candidates {0, 1} score identically on fully tied scores
    std::vector<PredictionRow> preds = {row(0.5, 1), row(0.5, 0)};
    CHECK(calibrate_threshold(preds) == 0.0);
    std::vector<PredictionRow> single = {row(0.2, 1), row(0.8, 1)};
    CHECK_THROWS_AS(calibrate_threshold(single), Error);
}

TEST_CASE("predictions without a regression head fall back to the zero baseline") {
    std::vector<PredictionRow> preds = {row(0.9, 1, 2.0, 0.0, false),
                                        row(0.2, 0, 0.5, 0.0, false),
                                        row(0.7, 1, 1.0, 0.0, false),
                                        row(0.1, 0, 0.0, 0.0, false)};
    Metrics m = compute_metrics(preds, 0.5);
    CHECK(m.mae_days == m.zero_baseline_mae);  // exact, not approximate
    CHECK(m.zero_baseline_mae == doctest::Approx(3.5 / 4.0));
}

TEST_CASE("training is deterministic per seed") {
    Fixture fx;
    TrainResult a = train(fx.bundle, fx.graph, fx.model, fx.train_cfg, 0);
    TrainResult b = train(fx.bundle, fx.graph, fx.model, fx.train_cfg, 0);
    REQUIRE(a.history.size() == b.history.size());
    for (size_t i = 0; i < a.history.size(); ++i) {
        CHECK(a.history[i].train_loss == b.history[i].train_loss);
        CHECK(a.history[i].val_auc == b.history[i].val_auc);
    }
    REQUIRE(a.checkpoint.params.tensors.size() == b.checkpoint.params.tensors.size());
    for (size_t i = 0; i < a.checkpoint.params.tensors.size(); ++i)
        CHECK(a.checkpoint.params.tensors[i].second.values() ==
              b.checkpoint.params.tensors[i].second.values());

    TrainResult c = train(fx.bundle, fx.graph, fx.model, fx.train_cfg, 1);
    bool differ = false;
    for (size_t i = 0; i < a.checkpoint.params.tensors.size(); ++i)
        if (a.checkpoint.params.tensors[i].second.values() !=
            c.checkpoint.params.tensors[i].second.values())
            differ = true;
    CHECK(differ);
}

TEST_CASE("checkpointing keeps the best validation epoch and stops on patience") {
    Fixture fx;
    fx.train_cfg.epochs = 8;
    fx.train_cfg.early_stop_patience = 2;
    TrainResult r = train(fx.bundle, fx.graph, fx.model, fx.train_cfg, 0);
    REQUIRE_FALSE(r.history.empty());
    CHECK(r.history.size() <= 8);
    CHECK(r.history.back().epoch == static_cast<int32_t>(r.history.size()));

    double best = -1.0;
    int32_t best_epoch = 0;
    for (const auto& h : r.history)
        if (h.val_auc > best) {  // strict: earliest best epoch wins
            best = h.val_auc;
            best_epoch = h.epoch;
        }
    CHECK(r.checkpoint.best_epoch == best_epoch);
    CHECK(r.checkpoint.best_val_auc == doctest::Approx(best));
    if (r.history.size() < 8)
        CHECK(r.history.back().epoch - r.checkpoint.best_epoch >=
              fx.train_cfg.early_stop_patience);
}

TEST_CASE("checkpoint survives a binary round trip") {
    Fixture fx;
    TrainResult r = train(fx.bundle, fx.graph, fx.model, fx.train_cfg, 0);
    std::string path = temp_path("ckpt.bin");
    r.checkpoint.save(path);
    Checkpoint back = Checkpoint::load(path);

    CHECK(back.seed == r.checkpoint.seed);
    CHECK(back.best_epoch == r.checkpoint.best_epoch);
    CHECK(back.best_val_auc == r.checkpoint.best_val_auc);
    CHECK(back.n_nodes == r.checkpoint.n_nodes);
    CHECK(back.feat_mean == r.checkpoint.feat_mean);
    CHECK(back.feat_std == r.checkpoint.feat_std);
    REQUIRE(back.params.tensors.size() == r.checkpoint.params.tensors.size());
    for (size_t i = 0; i < back.params.tensors.size(); ++i) {
        CHECK(back.params.tensors[i].first == r.checkpoint.params.tensors[i].first);
        CHECK(back.params.tensors[i].second.values() ==
              r.checkpoint.params.tensors[i].second.values());
    }
    // loaded checkpoints predict identically
    auto p1 = predict(r.checkpoint, fx.bundle, fx.graph, Split::test);
    auto p2 = predict(back, fx.bundle, fx.graph, Split::test);
    REQUIRE(p1.size() == p2.size());
    for (size_t i = 0; i < p1.size(); ++i) CHECK(p1[i].score == p2[i].score);

    SUBCASE("truncated checkpoint is rejected") {
        fs::resize_file(path, fs::file_size(path) / 3);
        CHECK_THROWS_WITH_AS(Checkpoint::load(path), doctest::Contains("truncated"), Error);
    }
    SUBCASE("bad magic is rejected") {
        std::ofstream out(path, std::ios::binary);
        out << "WRONGMAG rest";
        out.close();
        CHECK_THROWS_WITH_AS(Checkpoint::load(path), doctest::Contains("magic"), Error);
    }
    std::remove(path.c_str());
}

TEST_CASE("predict refuses a bundle with different nodes or standardization") {
    Fixture fx;
    TrainResult r = train(fx.bundle, fx.graph, fx.model, fx.train_cfg, 0);

    SUBCASE("node count mismatch") {
        Checkpoint c = r.checkpoint;
        c.n_nodes += 1;
        CHECK_THROWS_WITH_AS(predict(c, fx.bundle, fx.graph, Split::test),
                             doctest::Contains("nodes"), Error);
    }
    SUBCASE("standardization stats mismatch") {
        Checkpoint c = r.checkpoint;
        c.feat_mean[0] += 0.5;
        CHECK_THROWS_WITH_AS(predict(c, fx.bundle, fx.graph, Split::test),
                             doctest::Contains("standardization"), Error);
    }
}

TEST_CASE("A3 regression MAE equals the zero baseline exactly") {
    Fixture fx;
    ModelConfig a3 = fx.model;
    a3.ablation = Ablation::A3_single_task;
    TrainResult r = train(fx.bundle, fx.graph, a3, fx.train_cfg, 0);
    auto preds = predict(r.checkpoint, fx.bundle, fx.graph, Split::test);
    Metrics m = compute_metrics(preds, 0.5);
    CHECK(m.mae_days == m.zero_baseline_mae);
    CHECK(m.zero_baseline_mae > 0.0);
}

TEST_CASE("run_experiment aggregates seeds with sample standard deviation") {
    Fixture fx;
    MetricsReport report = run_experiment(fx.bundle, fx.graph, fx.model, fx.train_cfg, 2);
    REQUIRE(report.seeds.size() == 2);
    CHECK(report.variant == "full");
    double mean = 0.5 * (report.seeds[0].f1_macro + report.seeds[1].f1_macro);
    double sd = std::abs(report.seeds[0].f1_macro - report.seeds[1].f1_macro) / std::sqrt(2.0);
    CHECK(report.f1_mean == doctest::Approx(mean).epsilon(1e-12));
    CHECK(report.f1_std == doctest::Approx(sd).epsilon(1e-9));
    CHECK(report.zero_baseline_mae > 0.0);
    CHECK(report.to_json().find("\"aggregate\"") != std::string::npos);

    TrainConfig one_seed = fx.train_cfg;
    one_seed.seeds = {0};
    CHECK_THROWS_WITH_AS(run_experiment(fx.bundle, fx.graph, fx.model, one_seed),
                         doctest::Contains("2 seeds"), Error);
}

TEST_CASE("history CSV lists one row per epoch") {
    std::vector<EpochStats> history = {{1, 0.9, 0.55}, {2, 0.7, 0.61}, {3, 0.6, 0.6}};
    std::string path = temp_path("history.csv");
    write_history_csv(history, path);
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    CHECK(line == "epoch,train_loss,val_auc");
    int rows = 0;
    while (std::getline(in, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 3);
    std::remove(path.c_str());
}
