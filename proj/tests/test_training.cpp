#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>

#include "bgslf/metrics.hpp"
#include "bgslf/model.hpp"
#include "bgslf/optimizer.hpp"
#include "bgslf/synth.hpp"
#include "bgslf/train.hpp"

using namespace bgslf;

TEST_CASE("masked MAE hand cases") {
    CHECK(masked_mae({1, 2, 4}, {1, 4, 0}, {1, 1, 0}).value == 1.0);
    CHECK(masked_mae({3, 7}, {3, 7}, {1, 1}).value == 0.0);
    MaskedMetric m = masked_mae({1, 2}, {9, 9}, {0, 0});
    CHECK(m.value == 0.0);
    CHECK(m.empty_mask);
}

TEST_CASE("masked RMSE and MAPE hand cases") {
    CHECK(masked_rmse({1, 2}, {1, 4}, {1, 1}).value == Catch::Approx(std::sqrt(2.0)).margin(1e-12));
    CHECK(masked_mape({2}, {1}, {1}).value == Catch::Approx(100.0).margin(1e-12));
    // zero target excluded from MAPE even when mask-true
    CHECK(masked_mape({2, 5}, {1, 0}, {1, 1}).value == Catch::Approx(100.0).margin(1e-12));
}

TEST_CASE("learning-rate schedule steps and floor") {
    LrSchedule s;
    CHECK(s.at(0) == 3e-3);
    CHECK(s.at(5) == 3e-3);
    CHECK(s.at(6) == Catch::Approx(3e-4).margin(1e-15));
    CHECK(s.at(18) == 3e-5);  // floor binds: 3e-6 < 3e-5
    CHECK_THROWS_AS(s.at(-1), std::invalid_argument);
}

TEST_CASE("first Adam step with unit gradient") {
    Adam adam;
    adam.reset({2});
    std::vector<double> w{0.0, 0.0}, g{1.0, 1.0};
    adam.step({&w}, {&g}, 0.1);
    // m_hat = 1, v_hat = 1 -> update = -0.1 / (1 + 1e-8)
    CHECK(w[0] == Catch::Approx(-0.0999999).margin(1e-6));
    CHECK(w[0] == w[1]);
}

TEST_CASE("zero gradient leaves parameters unchanged") {
    Adam adam;
    adam.reset({3});
    std::vector<double> w{1.0, -2.0, 0.5}, g{0.0, 0.0, 0.0};
    const std::vector<double> before = w;
    for (int i = 0; i < 5; ++i) adam.step({&w}, {&g}, 0.1);
    CHECK(w == before);
}

TEST_CASE("global-norm clipping rescales and reports the pre-clip norm") {
    std::vector<double> g{3.0, 4.0};  // norm 5
    CHECK(clip_global_norm({&g}, 1.0) == Catch::Approx(5.0).margin(1e-12));
    CHECK(g[0] == Catch::Approx(0.6).margin(1e-12));
    CHECK(g[1] == Catch::Approx(0.8).margin(1e-12));
    std::vector<double> small{0.1, 0.1};
    clip_global_norm({&small}, 5.0);
    CHECK(small == std::vector<double>{0.1, 0.1});
}

TEST_CASE("historical average is exact on a purely periodic series") {
    SynthResult sr = synth_periodic(3, 400, 20, 5, 0.0);
    MtsDataset ds = make_dataset(std::move(sr.series));
    MetricRow row = historical_average(ds, 20, "test");
    CHECK(row.mae < 1e-9);
    CHECK(row.rmse < 1e-9);
}

TEST_CASE("historical average metrics are identical across horizons by construction") {
    SynthResult sr = synth_diffusion(4, 500, 13, 0.1);
    MtsDataset ds = make_dataset(std::move(sr.series));
    MetricRow a = historical_average(ds, 25, "test");
    MetricRow b = historical_average(ds, 25, "test");
    CHECK(a.mae == b.mae);
    CHECK(a.rmse == b.rmse);
    CHECK(a.mape == b.mape);
}

TEST_CASE("scaling the dataset by 10 scales MAE/RMSE by 10 and keeps MAPE") {
    SynthResult sr = synth_diffusion(4, 500, 13, 0.1);
    SeriesBlock scaled = sr.series;
    for (double& v : scaled.values) v *= 10.0;
    // shift away from zero so MAPE has stable support in both versions
    for (double& v : sr.series.values) v += 100.0;
    for (double& v : scaled.values) v += 1000.0;
    MtsDataset d1 = make_dataset(std::move(sr.series));
    MtsDataset d2 = make_dataset(std::move(scaled));
    MetricRow r1 = historical_average(d1, 25, "test");
    MetricRow r2 = historical_average(d2, 25, "test");
    CHECK(r2.mae == Catch::Approx(10.0 * r1.mae).epsilon(1e-9));
    CHECK(r2.rmse == Catch::Approx(10.0 * r1.rmse).epsilon(1e-9));
    CHECK(r2.mape == Catch::Approx(r1.mape).epsilon(1e-9));
}

TEST_CASE("config JSON round trip and unknown-key rejection") {
    TrainConfig c;
    c.period = 50;
    c.hidden = 16;
    c.seed = 9;
    TrainConfig r = config_from_json(config_to_json(c));
    CHECK(r.period == 50);
    CHECK(r.hidden == 16);
    CHECK(r.seed == 9);
    nlohmann::json bad = {{"perios", 288}};
    CHECK_THROWS_WITH(config_from_json(bad), Catch::Matchers::ContainsSubstring("perios"));
    // absent keys take defaults
    TrainConfig d = config_from_json(nlohmann::json::object());
    CHECK(d.period == 288);
    CHECK(d.graphs == 2);
}

TEST_CASE("config validation rejects bad rates") {
    TrainConfig c;
    c.lr_decay = 1.5;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    TrainConfig c2;
    c2.alpha = -1.0;
    CHECK_THROWS_AS(c2.validate(), std::invalid_argument);
}

TEST_CASE("parameter count at N=207 stays under a million") {
    ModelConfig mc;
    mc.N = 207;
    mc.D = 1;
    mc.S = 59;  // ~70% of a month of 5-minute steps, differenced, over P=288
    mc.P = 288;
    BgslfModel m = BgslfModel::init(mc, 1);
    CHECK(m.count_parameters() < 1000000);
    CHECK(m.count_parameters() > 0);
}

TEST_CASE("parameter count is independent of batch size by construction") {
    ModelConfig mc;
    mc.N = 8;
    mc.D = 1;
    mc.S = 5;
    mc.P = 10;
    CHECK(BgslfModel::init(mc, 1).count_parameters() == BgslfModel::init(mc, 2).count_parameters());
}

TEST_CASE("checkpoint file round trip is bit-identical") {
    Checkpoint ck;
    ck.meta = {{"config", config_to_json(TrainConfig{})},
               {"model", {{"N", 3}, {"D", 1}, {"S", 2}}},
               {"normalization", {{"mean", {1.5}}, {"std", {2.0}}}},
               {"best_valid_mae", 0.25},
               {"epoch", 7}};
    CheckpointRecord r;
    r.name = "w";
    r.shape = {2, 3};
    r.values = {1.0f, -0.5f, 0.25f, 3.25f, 0.0f, -7.0f};
    ck.records.push_back(r);
    const std::string path = "/tmp/bgslf_test_ck.bgck";
    save_checkpoint(path, ck);
    Checkpoint rl = load_checkpoint(path);
    std::remove(path.c_str());
    CHECK(rl.version == 1);
    CHECK(rl.meta == ck.meta);
    REQUIRE(rl.records.size() == 1);
    CHECK(rl.records[0].shape == r.shape);
    CHECK(rl.records[0].values == r.values);
}

TEST_CASE("zero-epoch run returns a usable initialized checkpoint") {
    SynthResult sr = synth_diffusion(4, 400, 3, 0.05);
    MtsDataset ds = make_dataset(std::move(sr.series));
    TrainConfig cfg;
    cfg.period = 10;
    cfg.hidden = 8;
    cfg.mgn_hidden = 4;
    cfg.epochs = 0;
    cfg.t_in = 6;
    cfg.t_out = 6;
    cfg.batch_size = 16;
    TrainResult res = train(cfg, ds);
    CHECK(std::isfinite(res.best_valid_mae));
    CHECK(res.best.has_record("enc.reset.w0"));
    CHECK(res.best.has_record("buffer.segments"));
    RestoredModel rm = restore_model(res.best);
    const Tensor segments = segment_as_tensor(rm.segments);
    EvalResult ev = evaluate_split(rm.model, segments, ds, "valid", {6}, 6, 6, 16);
    CHECK(ev.overall_mae == res.best_valid_mae);
}

TEST_CASE("two short runs with the same seed are bit-identical") {
    SynthResult sr = synth_diffusion(4, 400, 21, 0.05);
    MtsDataset ds = make_dataset(std::move(sr.series));
    TrainConfig cfg;
    cfg.period = 10;
    cfg.hidden = 6;
    cfg.mgn_hidden = 4;
    cfg.epochs = 2;
    cfg.t_in = 4;
    cfg.t_out = 4;
    cfg.batch_size = 32;
    cfg.seed = 77;
    TrainResult a = train(cfg, ds);
    TrainResult b = train(cfg, ds);
    CHECK(a.epoch_train_loss == b.epoch_train_loss);
    CHECK(a.epoch_valid_mae == b.epoch_valid_mae);
}

TEST_CASE("training loss decreases on a learnable diffusion series") {
    SynthResult sr = synth_diffusion(4, 500, 11, 0.02);
    MtsDataset ds = make_dataset(std::move(sr.series));
    TrainConfig cfg;
    cfg.period = 10;
    cfg.hidden = 8;
    cfg.mgn_hidden = 4;
    cfg.epochs = 3;
    cfg.t_in = 6;
    cfg.t_out = 6;
    cfg.batch_size = 64;
    TrainResult res = train(cfg, ds);
    REQUIRE(res.epoch_train_loss.size() == 3);
    CHECK(res.epoch_train_loss.back() < res.epoch_train_loss.front());
}

TEST_CASE("evaluate rejects a dataset with the wrong node count") {
    SynthResult sr = synth_diffusion(4, 400, 3, 0.05);
    MtsDataset ds = make_dataset(std::move(sr.series));
    TrainConfig cfg;
    cfg.period = 10;
    cfg.hidden = 6;
    cfg.mgn_hidden = 4;
    cfg.epochs = 0;
    cfg.t_in = 4;
    cfg.t_out = 4;
    TrainResult res = train(cfg, ds);
    RestoredModel rm = restore_model(res.best);
    SynthResult other = synth_diffusion(6, 400, 3, 0.05);
    MtsDataset ds6 = make_dataset(std::move(other.series));
    CHECK_THROWS_AS(evaluate_split(rm.model, segment_as_tensor(rm.segments), ds6, "valid", {4}, 4, 4, 16), DataError);
}

TEST_CASE("horizon outside the decoder range is rejected") {
    SynthResult sr = synth_diffusion(4, 400, 3, 0.05);
    MtsDataset ds = make_dataset(std::move(sr.series));
    TrainConfig cfg;
    cfg.period = 10;
    cfg.hidden = 6;
    cfg.mgn_hidden = 4;
    cfg.epochs = 0;
    cfg.t_in = 4;
    cfg.t_out = 4;
    TrainResult res = train(cfg, ds);
    RestoredModel rm = restore_model(res.best);
    CHECK_THROWS_AS(evaluate_split(rm.model, segment_as_tensor(rm.segments), ds, "valid", {9}, 4, 4, 16),
                    std::invalid_argument);
}

TEST_CASE("synthetic diffusion ground truth is row-stochastic") {
    SynthResult sr = synth_diffusion(6, 200, 42);
    for (int64_t i = 0; i < 6; ++i) {
        double s = 0.0;
        for (int64_t j = 0; j < 6; ++j) s += sr.graph[static_cast<size_t>(i * 6 + j)];
        CHECK(s == Catch::Approx(1.0).margin(1e-9));
    }
}
