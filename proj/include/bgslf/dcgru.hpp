#pragma once

// Diffusion-convolutional GRU: one-step diffusion convolution inside GRU
// gating, arranged as an encoder-decoder sequence-to-sequence forecaster.

#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include "bgslf/data.hpp"
#include "bgslf/tensor.hpp"

namespace bgslf {

// Out-degree and in-degree row-normalized views of an adjacency matrix.
// In-degree normalization acts on A^T row-wise; rows with degree below the
// guard stay all-zero.
struct DegreeNormPair {
    Tensor out_norm;  // D_O^-1 A
    Tensor in_norm;   // D_I^-1 A (rows of A^T normalized)
};

inline DegreeNormPair degree_normalize(const Tensor& a, double guard = 1e-8) {
    for (double v : a.values())
        if (v < 0.0) throw std::invalid_argument("degree_normalize: adjacency entries must be nonnegative");
    DegreeNormPair p;
    p.out_norm = row_normalize(a, guard);
    p.in_norm = row_normalize(transpose(a), guard);
    return p;
}

struct GateTensors {
    Tensor w0, w1, w2;  // each (in, out)
    Tensor b;           // (out)
};

struct DcgruCellTensors {
    GateTensors reset, candidate, update;
};

// One-step diffusion convolution: X w0 + (D_O^-1 A X) w1 + (D_I^-1 A X) w2.
// X is (B, N, F_in) or (N, F_in).
inline Tensor diffusion_conv(const Tensor& x, const DegreeNormPair& a, const GateTensors& g) {
    Tensor local = matmul(x, g.w0);
    Tensor out_hop = matmul(matmul(a.out_norm, x), g.w1);
    Tensor in_hop = matmul(matmul(a.in_norm, x), g.w2);
    return add(add(add(local, out_hop), in_hop), g.b);
}

// Eq-style GRU gating with diffusion convolutions as the gate transforms.
inline Tensor dcgru_cell(const Tensor& x_t, const Tensor& h_prev, const DegreeNormPair& a,
                         const DcgruCellTensors& w) {
    const int axis = static_cast<int>(x_t.shape.size()) - 1;
    Tensor xh = concat(x_t, h_prev, axis);
    Tensor r = sigmoid(diffusion_conv(xh, a, w.reset));
    Tensor u = sigmoid(diffusion_conv(xh, a, w.update));
    Tensor xc = concat(x_t, mul(r, h_prev), axis);
    Tensor c = tanh(diffusion_conv(xc, a, w.candidate));
    // H_t = U ⊙ H_prev + (1 - U) ⊙ C
    return add(mul(u, h_prev), mul(add_scalar(neg(u), 1.0), c));
}

struct Seq2SeqTensors {
    DcgruCellTensors encoder;
    DcgruCellTensors decoder;
    Tensor out_w;  // (hidden, D)
    Tensor out_b;  // (D)
};

// Encoder consumes T_in steps; decoder starts from a zero go-symbol and
// feeds its own projections forward, or the ground truth with probability
// teacher_forcing_ratio. Returns one (B, N, D) prediction per horizon step.
inline std::vector<Tensor> seq2seq_forward(Tape& tape, const SampleBatch& batch, const Tensor& adjacency,
                                           const Seq2SeqTensors& w, int64_t hidden,
                                           double teacher_forcing_ratio = 0.0, std::mt19937_64* rng = nullptr) {
    const int64_t B = batch.B, N = batch.N, D = batch.D;
    const DegreeNormPair a = degree_normalize(adjacency);
    const int64_t step = N * D;

    Tensor h = Tensor::zeros({B, N, hidden});
    for (int64_t t = 0; t < batch.T_in; ++t) {
        // gather the t-th input step across the batch
        std::vector<double> vals(static_cast<size_t>(B * step));
        for (int64_t b = 0; b < B; ++b)
            std::copy(batch.inputs.begin() + (b * batch.T_in + t) * step,
                      batch.inputs.begin() + (b * batch.T_in + t + 1) * step, vals.begin() + b * step);
        Tensor x_t = Tensor::from({B, N, D}, std::move(vals));
        h = dcgru_cell(x_t, h, a, w.encoder);
    }

    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<Tensor> preds;
    Tensor prev = Tensor::zeros({B, N, D});
    for (int64_t t = 0; t < batch.T_out; ++t) {
        h = dcgru_cell(prev, h, a, w.decoder);
        Tensor pred = affine(h, w.out_w, w.out_b);
        preds.push_back(pred);
        if (teacher_forcing_ratio > 0.0 && rng && unif(*rng) < teacher_forcing_ratio) {
            std::vector<double> vals(static_cast<size_t>(B * step));
            for (int64_t b = 0; b < B; ++b)
                std::copy(batch.targets.begin() + (b * batch.T_out + t) * step,
                          batch.targets.begin() + (b * batch.T_out + t + 1) * step, vals.begin() + b * step);
            prev = Tensor::from({B, N, D}, std::move(vals));
        } else {
            prev = pred;
        }
    }
    (void)tape;
    return preds;
}

}  // namespace bgslf
