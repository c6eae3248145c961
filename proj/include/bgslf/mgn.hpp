#pragma once

// Multi-Graph Generation Network: conv2d over the segment tensor followed by
// two per-node fully connected layers, one head per graph, then the
// configured activation (SSU by default) to land entries in [0,1].

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "bgslf/ssu.hpp"
#include "bgslf/tensor.hpp"

namespace bgslf {

enum class GraphActivation { Ssu, Sigmoid, Tanh };

inline GraphActivation parse_activation(const std::string& s) {
    if (s == "ssu") return GraphActivation::Ssu;
    if (s == "sigmoid") return GraphActivation::Sigmoid;
    if (s == "tanh") return GraphActivation::Tanh;
    throw std::invalid_argument("unknown activation '" + s + "' (expected ssu, sigmoid, or tanh)");
}

struct MgnTensors {
    Tensor conv_w;  // (R, S, 1, kw)
    Tensor conv_b;  // (R)
    Tensor fc1_w;   // (D*P, h)
    Tensor fc1_b;   // (h)
    Tensor fc2_w;   // (h, N)
    Tensor fc2_b;   // (N)
};

// segments: constant tensor (S, N, D*P). Returns R taped graphs, each (N, N),
// plus the pre-activation logits for inspection.
struct MgnOutput {
    std::vector<Tensor> graphs;
    std::vector<Tensor> logits;
};

inline MgnOutput mgn_forward(const Tensor& segments, const MgnTensors& p, int64_t R, GraphActivation act,
                             const SsuConfig& ssu) {
    if (segments.shape.size() != 3)
        throw std::invalid_argument("mgn_forward: segment tensor must be (S, N, D*P), got " +
                                    shape_str(segments.shape));
    const int64_t S = segments.shape[0], N = segments.shape[1], DP = segments.shape[2];
    if (p.conv_w.shape != Shape{R, S, 1, p.conv_w.shape[3]})
        throw std::invalid_argument("mgn_forward: conv kernel shape " + shape_str(p.conv_w.shape) +
                                    " does not match (R,S,1,kw)=(" + std::to_string(R) + "," + std::to_string(S) +
                                    ",1,kw)");
    if (p.fc1_w.shape[0] != DP)
        throw std::invalid_argument("mgn_forward: fc1 input width " + std::to_string(p.fc1_w.shape[0]) +
                                    " != D*P=" + std::to_string(DP));
    if (p.fc2_w.shape[1] != N)
        throw std::invalid_argument("mgn_forward: fc2 output width " + std::to_string(p.fc2_w.shape[1]) +
                                    " != N=" + std::to_string(N));

    // 1 x kw kernel with same padding keeps the node axis untouched
    Tensor feat = relu(conv2d(segments, p.conv_w, p.conv_b));  // (R, N, DP)
    MgnOutput out;
    for (int64_t r = 0; r < R; ++r) {
        Tensor rows = slice0(feat, r);                       // (N, DP)
        Tensor hid = relu(affine(rows, p.fc1_w, p.fc1_b));   // (N, h)
        Tensor logits = affine(hid, p.fc2_w, p.fc2_b);       // (N, N)
        Tensor graph;
        switch (act) {
            case GraphActivation::Ssu: graph = ssu_forward(logits, ssu); break;
            case GraphActivation::Sigmoid: graph = sigmoid(logits); break;
            case GraphActivation::Tanh: graph = tanh(logits); break;
        }
        out.logits.push_back(logits);
        out.graphs.push_back(graph);
    }
    return out;
}

}  // namespace bgslf
