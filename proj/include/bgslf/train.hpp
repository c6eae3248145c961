#pragma once

// Joint training of MGN + SSU + DCGRU parameters: per batch the graph set is
// regenerated from current parameters, one graph is selected, and masked-MAE
// loss in normalized space is backpropagated through the forecaster and (via
// the selected graph) the graph learning module.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "bgslf/checkpoint.hpp"
#include "bgslf/data.hpp"
#include "bgslf/dcgru.hpp"
#include "bgslf/metrics.hpp"
#include "bgslf/mgn.hpp"
#include "bgslf/model.hpp"
#include "bgslf/optimizer.hpp"
#include "bgslf/selection.hpp"
#include "bgslf/ssu.hpp"
#include "bgslf/tensor.hpp"

namespace bgslf {

class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

struct TrainConfig {
    int64_t period = 288;
    int64_t graphs = 2;
    double alpha = 1.0;
    double eps = 0.05;
    int64_t hidden = 64;
    int64_t mgn_hidden = 16;
    int64_t kernel_width = 3;
    int64_t batch_size = 64;
    int64_t epochs = 200;
    double lr_initial = 3e-3;
    double lr_decay = 0.1;
    int64_t lr_decay_interval = 6;
    double lr_floor = 3e-5;
    double clip_norm = 5.0;
    uint64_t seed = 42;
    bool deterministic = true;
    std::string activation = "ssu";
    double teacher_forcing_ratio = 0.0;
    int64_t cl_decay_steps = 2000;
    bool zero_is_missing = false;
    int64_t t_in = 12;
    int64_t t_out = 12;

    void validate() const {
        if (period < 1) throw std::invalid_argument("period must be >= 1");
        if (graphs < 1) throw std::invalid_argument("graphs must be >= 1");
        if (!(alpha > 0.0)) throw std::invalid_argument("alpha must be positive");
        if (!(lr_initial > 0.0 && lr_floor > 0.0)) throw std::invalid_argument("learning rates must be positive");
        if (!(lr_decay > 0.0 && lr_decay < 1.0)) throw std::invalid_argument("lr_decay must be in (0,1)");
        if (batch_size < 1 || t_in < 1 || t_out < 1) throw std::invalid_argument("sizes must be positive");
        parse_activation(activation);
    }

    LrSchedule schedule() const { return {lr_initial, lr_decay, lr_decay_interval, lr_floor}; }
};

inline nlohmann::json config_to_json(const TrainConfig& c) {
    return {{"period", c.period},
            {"graphs", c.graphs},
            {"alpha", c.alpha},
            {"eps", c.eps},
            {"hidden", c.hidden},
            {"mgn_hidden", c.mgn_hidden},
            {"kernel_width", c.kernel_width},
            {"batch_size", c.batch_size},
            {"epochs", c.epochs},
            {"lr_initial", c.lr_initial},
            {"lr_decay", c.lr_decay},
            {"lr_decay_interval", c.lr_decay_interval},
            {"lr_floor", c.lr_floor},
            {"clip_norm", c.clip_norm},
            {"seed", c.seed},
            {"deterministic", c.deterministic},
            {"activation", c.activation},
            {"teacher_forcing_ratio", c.teacher_forcing_ratio},
            {"cl_decay_steps", c.cl_decay_steps},
            {"zero_is_missing", c.zero_is_missing},
            {"t_in", c.t_in},
            {"t_out", c.t_out}};
}

// Absent keys take defaults; unknown keys are rejected by name.
inline TrainConfig config_from_json(const nlohmann::json& j) {
    TrainConfig c;
    const nlohmann::json known = config_to_json(c);
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!known.contains(it.key()))
            throw std::invalid_argument("unknown config key \"" + it.key() + "\"");
    auto get = [&](const char* k, auto& out) {
        if (j.contains(k)) out = j.at(k).get<std::decay_t<decltype(out)>>();
    };
    get("period", c.period);
    get("graphs", c.graphs);
    get("alpha", c.alpha);
    get("eps", c.eps);
    get("hidden", c.hidden);
    get("mgn_hidden", c.mgn_hidden);
    get("kernel_width", c.kernel_width);
    get("batch_size", c.batch_size);
    get("epochs", c.epochs);
    get("lr_initial", c.lr_initial);
    get("lr_decay", c.lr_decay);
    get("lr_decay_interval", c.lr_decay_interval);
    get("lr_floor", c.lr_floor);
    get("clip_norm", c.clip_norm);
    get("seed", c.seed);
    get("deterministic", c.deterministic);
    get("activation", c.activation);
    get("teacher_forcing_ratio", c.teacher_forcing_ratio);
    get("cl_decay_steps", c.cl_decay_steps);
    get("zero_is_missing", c.zero_is_missing);
    get("t_in", c.t_in);
    get("t_out", c.t_out);
    c.validate();
    return c;
}

// ---------------------------------------------------------------------
// forward helpers
// ---------------------------------------------------------------------

// (S, N, D, P) segment values as a detached (S, N, D*P) tensor.
inline Tensor segment_as_tensor(const SegmentTensor& seg) {
    return Tensor::from({seg.S, seg.N, seg.D * seg.P}, seg.values);
}

// Graph set from current parameter values, off-tape.
inline std::vector<std::vector<double>> current_graphs(const BgslfModel& model, const Tensor& segments) {
    const TapedModel tm = model.make_detached();
    MgnOutput out = mgn_forward(segments, tm.mgn, model.cfg.R, model.activation(), model.ssu);
    std::vector<std::vector<double>> graphs;
    for (const auto& g : out.graphs) graphs.push_back(g.values());
    return graphs;
}

// Masked MAE in normalized space over all horizon steps, on the tape.
// Returns an empty optional-like flag via count.
struct BatchLoss {
    Tensor loss;
    int64_t observed = 0;
};

inline BatchLoss masked_mae_loss(const std::vector<Tensor>& preds, const SampleBatch& batch) {
    const int64_t step = batch.N * batch.D;
    int64_t observed = 0;
    for (uint8_t m : batch.target_mask) observed += m;
    BatchLoss out;
    out.observed = observed;
    if (observed == 0) return out;
    Tensor total;
    for (int64_t t = 0; t < batch.T_out; ++t) {
        std::vector<double> tgt(static_cast<size_t>(batch.B * step));
        std::vector<double> msk(static_cast<size_t>(batch.B * step));
        for (int64_t b = 0; b < batch.B; ++b)
            for (int64_t j = 0; j < step; ++j) {
                const size_t src = static_cast<size_t>((b * batch.T_out + t) * step + j);
                tgt[static_cast<size_t>(b * step + j)] = batch.targets[src];
                msk[static_cast<size_t>(b * step + j)] = batch.target_mask[src] ? 1.0 : 0.0;
            }
        Tensor target = Tensor::from({batch.B, batch.N, batch.D}, std::move(tgt));
        Tensor mask = Tensor::from({batch.B, batch.N, batch.D}, std::move(msk));
        Tensor term = sum_all(mul(abs(sub(preds[static_cast<size_t>(t)], target)), mask));
        total = (t == 0) ? term : add(total, term);
    }
    out.loss = scale(total, 1.0 / static_cast<double>(observed));
    return out;
}

// ---------------------------------------------------------------------
// evaluation
// ---------------------------------------------------------------------

struct EvalResult {
    std::map<int64_t, MetricRow> by_horizon;
    std::vector<int64_t> selection_counts;
    double overall_mae = 0.0;  // masked MAE over every horizon step, physical units
};

inline EvalResult evaluate_split(const BgslfModel& model, const Tensor& segments, const MtsDataset& ds,
                                 const std::string& split, const std::vector<int64_t>& horizons, int64_t t_in,
                                 int64_t t_out, int64_t batch_size) {
    if (model.cfg.N != ds.N() || model.cfg.D != ds.D())
        throw DataError("model expects N=" + std::to_string(model.cfg.N) + ", D=" + std::to_string(model.cfg.D) +
                        " but dataset has N=" + std::to_string(ds.N()) + ", D=" + std::to_string(ds.D()));
    for (int64_t h : horizons)
        if (h < 1 || h > t_out) throw std::invalid_argument("horizon " + std::to_string(h) + " outside 1.." +
                                                            std::to_string(t_out));
    const std::vector<std::vector<double>> graphs = current_graphs(model, segments);
    const std::vector<int64_t> starts = window_starts(ds, split, t_in, t_out);
    const TapedModel detached = model.make_detached();

    EvalResult res;
    res.selection_counts.assign(graphs.size(), 0);
    // accumulated per horizon step (physical units)
    std::map<int64_t, std::vector<double>> pred_h, tgt_h;
    std::map<int64_t, std::vector<uint8_t>> msk_h;
    std::vector<double> all_pred, all_tgt;
    std::vector<uint8_t> all_msk;

    for (size_t off = 0; off < starts.size(); off += static_cast<size_t>(batch_size)) {
        std::vector<int64_t> chunk(starts.begin() + static_cast<int64_t>(off),
                                   starts.begin() + static_cast<int64_t>(std::min(off + static_cast<size_t>(batch_size),
                                                                                  starts.size())));
        SampleBatch batch = gather_batch(ds, chunk, t_in, t_out);
        const SelectionResult sel = select_graph(batch, graphs);
        ++res.selection_counts[static_cast<size_t>(sel.index)];
        Tape tape;
        Tensor a = Tensor::from({ds.N(), ds.N()}, graphs[static_cast<size_t>(sel.index)]);
        std::vector<Tensor> preds = seq2seq_forward(tape, batch, a, detached.seq, model.cfg.hidden);
        const int64_t step = batch.N * batch.D;
        for (int64_t t = 0; t < t_out; ++t) {
            const auto& pv = preds[static_cast<size_t>(t)].values();
            for (int64_t b = 0; b < batch.B; ++b)
                for (int64_t n = 0; n < batch.N; ++n)
                    for (int64_t d = 0; d < batch.D; ++d) {
                        const size_t pi = static_cast<size_t>((b * batch.N + n) * batch.D + d);
                        const size_t ti = static_cast<size_t>((b * t_out + t) * step + n * batch.D + d);
                        const double pp = ds.to_physical(pv[pi], d);
                        const double tp = ds.to_physical(batch.targets[ti], d);
                        const uint8_t mk = batch.target_mask[ti];
                        for (int64_t h : horizons)
                            if (h - 1 == t) {
                                pred_h[h].push_back(pp);
                                tgt_h[h].push_back(tp);
                                msk_h[h].push_back(mk);
                            }
                        all_pred.push_back(pp);
                        all_tgt.push_back(tp);
                        all_msk.push_back(mk);
                    }
        }
    }
    for (int64_t h : horizons) {
        MetricRow row;
        row.mae = masked_mae(pred_h[h], tgt_h[h], msk_h[h]).value;
        row.rmse = masked_rmse(pred_h[h], tgt_h[h], msk_h[h]).value;
        row.mape = masked_mape(pred_h[h], tgt_h[h], msk_h[h]).value;
        res.by_horizon[h] = row;
    }
    res.overall_mae = masked_mae(all_pred, all_tgt, all_msk).value;
    return res;
}

// ---------------------------------------------------------------------
// checkpoint <-> model
// ---------------------------------------------------------------------

inline Checkpoint make_checkpoint(const BgslfModel& model, const SegmentTensor& seg, const MtsDataset& ds,
                                  const TrainConfig& cfg, double best_valid_mae, int64_t epoch) {
    Checkpoint ck;
    ck.meta = {{"config", config_to_json(cfg)},
               {"model", {{"N", model.cfg.N}, {"D", model.cfg.D}, {"S", model.cfg.S}}},
               {"normalization", {{"mean", ds.mean}, {"std", ds.stdev}}},
               {"best_valid_mae", best_valid_mae},
               {"epoch", epoch}};
    for (const auto& p : model.params) {
        CheckpointRecord r;
        r.name = p.name;
        r.shape = p.shape;
        r.values.assign(p.value.begin(), p.value.end());
        ck.records.push_back(std::move(r));
    }
    CheckpointRecord segr;
    segr.name = "buffer.segments";
    segr.shape = {seg.S, seg.N, seg.D, seg.P};
    segr.values.assign(seg.values.begin(), seg.values.end());
    ck.records.push_back(std::move(segr));
    return ck;
}

struct RestoredModel {
    BgslfModel model;
    SegmentTensor segments;
    TrainConfig config;
};

inline RestoredModel restore_model(const Checkpoint& ck) {
    RestoredModel r;
    r.config = config_from_json(ck.meta.at("config"));
    ModelConfig mc;
    mc.N = ck.meta.at("model").at("N").get<int64_t>();
    mc.D = ck.meta.at("model").at("D").get<int64_t>();
    mc.S = ck.meta.at("model").at("S").get<int64_t>();
    mc.P = r.config.period;
    mc.R = r.config.graphs;
    mc.hidden = r.config.hidden;
    mc.mgn_hidden = r.config.mgn_hidden;
    mc.kw = r.config.kernel_width;
    mc.alpha = r.config.alpha;
    mc.eps = r.config.eps;
    mc.activation = r.config.activation;
    r.model = BgslfModel::init(mc, 0);
    for (auto& p : r.model.params) {
        const CheckpointRecord& rec = ck.record(p.name);
        if (rec.shape != p.shape)
            throw std::runtime_error("checkpoint record '" + p.name + "' has shape mismatch");
        p.value.assign(rec.values.begin(), rec.values.end());
    }
    const CheckpointRecord& segr = ck.record("buffer.segments");
    r.segments.S = segr.shape[0];
    r.segments.N = segr.shape[1];
    r.segments.D = segr.shape[2];
    r.segments.P = segr.shape[3];
    r.segments.values.assign(segr.values.begin(), segr.values.end());
    return r;
}

// Quantize in-memory parameters to the checkpoint's f32 precision so that
// pre-save evaluation matches post-load evaluation bit for bit.
inline void quantize_params(BgslfModel& model) {
    for (auto& p : model.params)
        for (double& v : p.value) v = static_cast<double>(static_cast<float>(v));
}

// ---------------------------------------------------------------------
// training loop
// ---------------------------------------------------------------------

struct TrainResult {
    Checkpoint best;
    std::vector<double> epoch_train_loss;  // mean normalized masked MAE
    std::vector<double> epoch_valid_mae;   // physical units
    double best_valid_mae = 0.0;
    int64_t best_epoch = -1;
};

inline TrainResult train(const TrainConfig& cfg, const MtsDataset& ds, std::ostream* log = nullptr) {
    cfg.validate();
    const SegmentTensor seg = build_segment_tensor(ds, cfg.period);
    const Tensor segments = segment_as_tensor(seg);

    ModelConfig mc;
    mc.N = ds.N();
    mc.D = ds.D();
    mc.S = seg.S;
    mc.P = cfg.period;
    mc.R = cfg.graphs;
    mc.hidden = cfg.hidden;
    mc.mgn_hidden = cfg.mgn_hidden;
    mc.kw = cfg.kernel_width;
    mc.alpha = cfg.alpha;
    mc.eps = cfg.eps;
    mc.activation = cfg.activation;
    BgslfModel model = BgslfModel::init(mc, cfg.seed);

    Adam adam;
    {
        std::vector<size_t> sizes;
        for (const auto& p : model.params) sizes.push_back(p.value.size());
        adam.reset(sizes);
    }
    const LrSchedule sched = cfg.schedule();
    std::vector<int64_t> starts = window_starts(ds, "train", cfg.t_in, cfg.t_out);
    std::mt19937_64 tf_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);

    TrainResult result;
    double best = std::numeric_limits<double>::infinity();
    std::vector<Parameter> best_params = model.params;
    int64_t global_step = 0;

    auto valid_mae = [&]() {
        return evaluate_split(model, segments, ds, "valid", {cfg.t_out}, cfg.t_in, cfg.t_out, cfg.batch_size)
            .overall_mae;
    };

    if (cfg.epochs == 0) {
        // quantize first so the recorded metric matches the stored f32 state
        quantize_params(model);
        best = valid_mae();
        result.best_valid_mae = best;
        result.best_epoch = -1;
        result.best = make_checkpoint(model, seg, ds, cfg, best, -1);
        return result;
    }

    for (int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = sched.at(epoch);
        std::mt19937_64 shuffle_rng(cfg.seed * 1000003ULL + static_cast<uint64_t>(epoch));
        std::shuffle(starts.begin(), starts.end(), shuffle_rng);

        double loss_sum = 0.0;
        int64_t loss_batches = 0;
        for (size_t off = 0; off < starts.size(); off += static_cast<size_t>(cfg.batch_size)) {
            std::vector<int64_t> chunk(
                starts.begin() + static_cast<int64_t>(off),
                starts.begin() + static_cast<int64_t>(std::min(off + static_cast<size_t>(cfg.batch_size),
                                                               starts.size())));
            SampleBatch batch = gather_batch(ds, chunk, cfg.t_in, cfg.t_out);

            Tape tape;
            TapedModel tm = model.make_taped(tape);
            MgnOutput mgn = mgn_forward(segments, tm.mgn, cfg.graphs, model.activation(), model.ssu);
            std::vector<std::vector<double>> graph_values;
            for (const auto& g : mgn.graphs) graph_values.push_back(g.values());
            const SelectionResult sel = select_graph(batch, graph_values);
            const Tensor& a = mgn.graphs[static_cast<size_t>(sel.index)];

            double tf = cfg.teacher_forcing_ratio;
            if (tf > 0.0 && cfg.cl_decay_steps > 0) {
                const double k = static_cast<double>(cfg.cl_decay_steps);
                tf *= k / (k + std::exp(static_cast<double>(global_step) / k));
            }
            std::vector<Tensor> preds = seq2seq_forward(tape, batch, a, tm.seq, cfg.hidden, tf, &tf_rng);
            BatchLoss bl = masked_mae_loss(preds, batch);
            ++global_step;
            if (bl.observed == 0) continue;
            const double loss_val = bl.loss.item();
            if (!std::isfinite(loss_val))
                throw NumericError("non-finite training loss at epoch " + std::to_string(epoch) + ", batch offset " +
                                   std::to_string(off));
            loss_sum += loss_val;
            ++loss_batches;

            tape.backward(bl.loss);
            std::vector<std::vector<double>> grads(model.params.size());
            std::vector<std::vector<double>*> grad_ptrs, param_ptrs;
            for (size_t i = 0; i < model.params.size(); ++i) {
                grads[i] = tape.grad(tm.all[i]);
                for (double g : grads[i])
                    if (!std::isfinite(g))
                        throw NumericError("non-finite gradient for parameter '" + model.params[i].name +
                                           "' at epoch " + std::to_string(epoch));
                grad_ptrs.push_back(&grads[i]);
                param_ptrs.push_back(&model.params[i].value);
            }
            clip_global_norm(grad_ptrs, cfg.clip_norm);
            adam.step(param_ptrs, grad_ptrs, lr);
        }

        const double train_loss = loss_batches ? loss_sum / static_cast<double>(loss_batches) : 0.0;
        const double vmae = valid_mae();
        result.epoch_train_loss.push_back(train_loss);
        result.epoch_valid_mae.push_back(vmae);
        if (log)
            (*log) << epoch << ", " << lr << ", " << train_loss << ", " << vmae << "\n";
        if (vmae < best) {
            best = vmae;
            best_params = model.params;
            result.best_epoch = epoch;
        }
    }

    BgslfModel best_model = model;
    best_model.params = best_params;
    quantize_params(best_model);
    result.best_valid_mae = best;
    result.best = make_checkpoint(best_model, seg, ds, cfg, best, result.best_epoch);
    return result;
}

}  // namespace bgslf
