#pragma once

// Per-batch graph selection: collapse the input batch to a (T_in x N) sheet,
// form its node-correlation matrix X^T X, and pick the candidate graph with
// the largest Frobenius-cosine similarity. Selection itself is not
// differentiated; gradient reaches only the chosen graph through its use
// downstream.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "bgslf/data.hpp"

namespace bgslf {

struct SelectionResult {
    int64_t index = 0;                 // argmax, ties to the smallest index
    std::vector<double> scores;        // per graph, in [-1, 1]
    std::vector<double> correlation;   // X^T X, N*N row-major
    bool degenerate = false;           // correlation or every graph all-zero
};

// Sum the batch over sample and feature axes: (B, T_in, N, D) -> (T_in, N).
inline std::vector<double> collapse_batch(const SampleBatch& batch) {
    std::vector<double> sheet(static_cast<size_t>(batch.T_in * batch.N), 0.0);
    for (int64_t b = 0; b < batch.B; ++b)
        for (int64_t t = 0; t < batch.T_in; ++t)
            for (int64_t n = 0; n < batch.N; ++n)
                for (int64_t d = 0; d < batch.D; ++d)
                    sheet[static_cast<size_t>(t * batch.N + n)] +=
                        batch.inputs[static_cast<size_t>(((b * batch.T_in + t) * batch.N + n) * batch.D + d)];
    return sheet;
}

// Frobenius cosine; all-zero operands give 0 rather than an exception.
inline double cosine_frobenius(const std::vector<double>& m1, const std::vector<double>& m2) {
    if (m1.size() != m2.size()) throw std::invalid_argument("cosine_frobenius: size mismatch");
    double dot = 0.0, n1 = 0.0, n2 = 0.0;
    for (size_t i = 0; i < m1.size(); ++i) {
        dot += m1[i] * m2[i];
        n1 += m1[i] * m1[i];
        n2 += m2[i] * m2[i];
    }
    if (n1 == 0.0 || n2 == 0.0) return 0.0;
    return dot / (std::sqrt(n1) * std::sqrt(n2));
}

// graphs: R candidate adjacency matrices, each N*N row-major.
inline SelectionResult select_graph(const SampleBatch& batch, const std::vector<std::vector<double>>& graphs) {
    if (graphs.empty()) throw std::invalid_argument("select_graph: empty graph set");
    const int64_t N = batch.N, T = batch.T_in;
    const std::vector<double> sheet = collapse_batch(batch);
    SelectionResult res;
    res.correlation.assign(static_cast<size_t>(N * N), 0.0);
    for (int64_t i = 0; i < N; ++i)
        for (int64_t j = 0; j < N; ++j) {
            double acc = 0.0;
            for (int64_t t = 0; t < T; ++t)
                acc += sheet[static_cast<size_t>(t * N + i)] * sheet[static_cast<size_t>(t * N + j)];
            res.correlation[static_cast<size_t>(i * N + j)] = acc;
        }
    res.scores.resize(graphs.size());
    double best = -2.0;
    for (size_t r = 0; r < graphs.size(); ++r) {
        res.scores[r] = cosine_frobenius(res.correlation, graphs[r]);
        if (res.scores[r] > best) {
            best = res.scores[r];
            res.index = static_cast<int64_t>(r);
        }
    }
    if (best == 0.0) res.degenerate = true;
    return res;
}

}  // namespace bgslf
