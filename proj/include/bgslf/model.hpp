#pragma once

// Trainable parameter store for the whole model: MGN weights, encoder and
// decoder DCGRU gates, and the output projection.

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "bgslf/dcgru.hpp"
#include "bgslf/mgn.hpp"
#include "bgslf/ssu.hpp"
#include "bgslf/tensor.hpp"

namespace bgslf {

struct Parameter {
    std::string name;
    Shape shape;
    std::vector<double> value;
};

struct ModelConfig {
    int64_t N = 0, D = 1;
    int64_t S = 0, P = 288;  // segment count and period of the cached segment tensor
    int64_t R = 2;
    int64_t hidden = 64;
    int64_t mgn_hidden = 16;
    int64_t kw = 3;
    double alpha = 1.0;
    double eps = 0.05;
    std::string activation = "ssu";
};

struct TapedModel {
    MgnTensors mgn;
    Seq2SeqTensors seq;
    std::vector<Tensor> all;  // same order as BgslfModel::params
};

class BgslfModel {
public:
    ModelConfig cfg;
    SsuConfig ssu;
    std::vector<Parameter> params;

    static BgslfModel init(const ModelConfig& cfg, uint64_t seed) {
        BgslfModel m;
        m.cfg = cfg;
        m.ssu = SsuConfig::make(cfg.alpha, cfg.eps);
        std::mt19937_64 rng(seed);
        const int64_t dp = cfg.D * cfg.P;
        const int64_t gin = cfg.D + cfg.hidden;

        m.add(rng, "mgn.conv.w", {cfg.R, cfg.S, 1, cfg.kw}, cfg.S * cfg.kw);
        m.add(rng, "mgn.conv.b", {cfg.R}, cfg.S * cfg.kw);
        m.add(rng, "mgn.fc1.w", {dp, cfg.mgn_hidden}, dp);
        m.add(rng, "mgn.fc1.b", {cfg.mgn_hidden}, dp);
        m.add(rng, "mgn.fc2.w", {cfg.mgn_hidden, cfg.N}, cfg.mgn_hidden);
        m.add(rng, "mgn.fc2.b", {cfg.N}, cfg.mgn_hidden);
        for (const char* side : {"enc", "dec"})
            for (const char* gate : {"reset", "candidate", "update"}) {
                const std::string base = std::string(side) + "." + gate + ".";
                m.add(rng, base + "w0", {gin, cfg.hidden}, gin);
                m.add(rng, base + "w1", {gin, cfg.hidden}, gin);
                m.add(rng, base + "w2", {gin, cfg.hidden}, gin);
                m.add(rng, base + "b", {cfg.hidden}, gin);
            }
        m.add(rng, "out.w", {cfg.hidden, cfg.D}, cfg.hidden);
        m.add(rng, "out.b", {cfg.D}, cfg.hidden);
        return m;
    }

    Parameter& param(const std::string& name) {
        for (auto& p : params)
            if (p.name == name) return p;
        throw std::invalid_argument("unknown parameter '" + name + "'");
    }
    const Parameter& param(const std::string& name) const {
        return const_cast<BgslfModel*>(this)->param(name);
    }

    int64_t count_parameters() const {
        int64_t n = 0;
        for (const auto& p : params) n += static_cast<int64_t>(p.value.size());
        return n;
    }

    GraphActivation activation() const { return parse_activation(cfg.activation); }

    // Mirror every parameter as a tape leaf for one forward/backward pass.
    TapedModel make_taped(Tape& tape) const {
        TapedModel t;
        t.all.reserve(params.size());
        for (const auto& p : params) t.all.push_back(tape.leaf(p.shape, p.value));
        wire(t);
        return t;
    }

    // Detached views over the current parameter values (inference only).
    TapedModel make_detached() const {
        TapedModel t;
        t.all.reserve(params.size());
        for (const auto& p : params) t.all.push_back(Tensor::from(p.shape, p.value));
        wire(t);
        return t;
    }

private:
    static void wire(TapedModel& t) {
        size_t i = 0;
        auto next = [&]() { return t.all[i++]; };
        t.mgn.conv_w = next();
        t.mgn.conv_b = next();
        t.mgn.fc1_w = next();
        t.mgn.fc1_b = next();
        t.mgn.fc2_w = next();
        t.mgn.fc2_b = next();
        for (DcgruCellTensors* cell : {&t.seq.encoder, &t.seq.decoder})
            for (GateTensors* g : {&cell->reset, &cell->candidate, &cell->update}) {
                g->w0 = next();
                g->w1 = next();
                g->w2 = next();
                g->b = next();
            }
        t.seq.out_w = next();
        t.seq.out_b = next();
    }

    void add(std::mt19937_64& rng, std::string name, Shape shape, int64_t fan_in) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<int64_t>(fan_in, 1)));
        std::uniform_real_distribution<double> unif(-bound, bound);
        Parameter p;
        p.name = std::move(name);
        p.shape = std::move(shape);
        p.value.resize(static_cast<size_t>(shape_numel(p.shape)));
        for (double& v : p.value) v = unif(rng);
        params.push_back(std::move(p));
    }
};

}  // namespace bgslf
