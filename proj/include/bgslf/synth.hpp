#pragma once

// Synthetic data generators: a graph-diffusion process driven by a sparse
// random row-stochastic matrix, and per-node noisy sinusoids.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <random>
#include <stdexcept>
#include <vector>

#include "bgslf/data.hpp"

namespace bgslf {

struct SynthResult {
    SeriesBlock series;
    std::vector<double> graph;  // N*N ground truth (diffusion mode only)
};

// x_{t+1} = 0.9 W x_t + 0.1 x_t + noise(sigma), W sparse row-stochastic.
inline SynthResult synth_diffusion(int64_t n_nodes, int64_t n_steps, uint64_t seed, double noise_sigma = 0.01,
                                   int64_t neighbors = 3) {
    if (n_nodes < 2 || n_steps < 100)
        throw std::invalid_argument("synth_diffusion: need nodes >= 2 and steps >= 100");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    SynthResult out;
    out.graph.assign(static_cast<size_t>(n_nodes * n_nodes), 0.0);
    for (int64_t i = 0; i < n_nodes; ++i) {
        double rowsum = 0.0;
        for (int64_t k = 0; k < neighbors; ++k) {
            const int64_t j = static_cast<int64_t>(unif(rng) * static_cast<double>(n_nodes)) % n_nodes;
            const double w = 0.1 + unif(rng);
            out.graph[static_cast<size_t>(i * n_nodes + j)] += w;
            rowsum += w;
        }
        for (int64_t j = 0; j < n_nodes; ++j) out.graph[static_cast<size_t>(i * n_nodes + j)] /= rowsum;
    }

    out.series.T = n_steps;
    out.series.N = n_nodes;
    out.series.D = 1;
    out.series.values.resize(static_cast<size_t>(n_steps * n_nodes));
    out.series.mask.assign(static_cast<size_t>(n_steps * n_nodes), 1);
    std::vector<double> x(static_cast<size_t>(n_nodes));
    for (auto& v : x) v = gauss(rng);
    for (int64_t t = 0; t < n_steps; ++t) {
        for (int64_t n = 0; n < n_nodes; ++n) out.series.values[static_cast<size_t>(t * n_nodes + n)] = x[static_cast<size_t>(n)];
        std::vector<double> next(static_cast<size_t>(n_nodes), 0.0);
        for (int64_t i = 0; i < n_nodes; ++i) {
            double acc = 0.1 * x[static_cast<size_t>(i)];
            for (int64_t j = 0; j < n_nodes; ++j)
                acc += 0.9 * out.graph[static_cast<size_t>(i * n_nodes + j)] * x[static_cast<size_t>(j)];
            next[static_cast<size_t>(i)] = acc + noise_sigma * gauss(rng);
        }
        x = next;
    }
    return out;
}

// Per-node sinusoids with a shared period plus noise.
inline SynthResult synth_periodic(int64_t n_nodes, int64_t n_steps, int64_t period, uint64_t seed,
                                  double noise_sigma = 0.0) {
    if (n_nodes < 2 || n_steps < 100)
        throw std::invalid_argument("synth_periodic: need nodes >= 2 and steps >= 100");
    if (period < 2) throw std::invalid_argument("synth_periodic: period must be >= 2");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<double> phase(static_cast<size_t>(n_nodes)), amp(static_cast<size_t>(n_nodes));
    for (int64_t n = 0; n < n_nodes; ++n) {
        phase[static_cast<size_t>(n)] = 2.0 * M_PI * unif(rng);
        amp[static_cast<size_t>(n)] = 0.5 + unif(rng);
    }
    SynthResult out;
    out.series.T = n_steps;
    out.series.N = n_nodes;
    out.series.D = 1;
    out.series.values.resize(static_cast<size_t>(n_steps * n_nodes));
    out.series.mask.assign(static_cast<size_t>(n_steps * n_nodes), 1);
    for (int64_t t = 0; t < n_steps; ++t)
        for (int64_t n = 0; n < n_nodes; ++n) {
            const double base = amp[static_cast<size_t>(n)] *
                                std::sin(2.0 * M_PI * static_cast<double>(t % period) / static_cast<double>(period) +
                                         phase[static_cast<size_t>(n)]);
            out.series.values[static_cast<size_t>(t * n_nodes + n)] =
                base + (noise_sigma > 0.0 ? noise_sigma * gauss(rng) : 0.0);
        }
    return out;
}

inline void write_matrix_csv(const std::string& path, const std::vector<double>& m, int64_t rows, int64_t cols) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << std::setprecision(9);
    for (int64_t i = 0; i < rows; ++i) {
        for (int64_t j = 0; j < cols; ++j) out << (j ? "," : "") << m[static_cast<size_t>(i * cols + j)];
        out << "\n";
    }
}

}  // namespace bgslf
