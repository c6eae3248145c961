#pragma once

// Masked evaluation metrics and the Historical Average baseline.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "bgslf/data.hpp"

namespace bgslf {

struct MaskedMetric {
    double value = 0.0;
    bool empty_mask = false;  // no observed cells contributed
};

inline MaskedMetric masked_mae(const std::vector<double>& pred, const std::vector<double>& target,
                               const std::vector<uint8_t>& mask) {
    if (pred.size() != target.size() || pred.size() != mask.size())
        throw std::invalid_argument("masked_mae: size mismatch");
    double sum = 0.0;
    int64_t n = 0;
    for (size_t i = 0; i < pred.size(); ++i)
        if (mask[i]) {
            sum += std::fabs(pred[i] - target[i]);
            ++n;
        }
    if (n == 0) return {0.0, true};
    return {sum / static_cast<double>(n), false};
}

inline MaskedMetric masked_rmse(const std::vector<double>& pred, const std::vector<double>& target,
                                const std::vector<uint8_t>& mask) {
    if (pred.size() != target.size() || pred.size() != mask.size())
        throw std::invalid_argument("masked_rmse: size mismatch");
    double sum = 0.0;
    int64_t n = 0;
    for (size_t i = 0; i < pred.size(); ++i)
        if (mask[i]) {
            const double d = pred[i] - target[i];
            sum += d * d;
            ++n;
        }
    if (n == 0) return {0.0, true};
    return {std::sqrt(sum / static_cast<double>(n)), false};
}

// Reported as percent; cells with |target| < 1e-4 are excluded even when
// mask-true.
inline MaskedMetric masked_mape(const std::vector<double>& pred, const std::vector<double>& target,
                                const std::vector<uint8_t>& mask) {
    if (pred.size() != target.size() || pred.size() != mask.size())
        throw std::invalid_argument("masked_mape: size mismatch");
    double sum = 0.0;
    int64_t n = 0;
    for (size_t i = 0; i < pred.size(); ++i)
        if (mask[i] && std::fabs(target[i]) >= 1e-4) {
            sum += std::fabs(pred[i] - target[i]) / std::fabs(target[i]);
            ++n;
        }
    if (n == 0) return {0.0, true};
    return {100.0 * sum / static_cast<double>(n), false};
}

struct MetricRow {
    double mae = 0.0, rmse = 0.0, mape = 0.0;
};

// Historical Average: prediction for time t is the mean of observed training
// values at phase t mod period. Metrics are computed once over the whole
// split and are therefore identical across horizons.
inline MetricRow historical_average(const MtsDataset& ds, int64_t period, const std::string& split) {
    if (period < 1 || ds.t_train < period)
        throw std::invalid_argument("historical_average: training split shorter than one period");
    const int64_t N = ds.N(), D = ds.D(), w = N * D;
    std::vector<double> phase_sum(static_cast<size_t>(period * w), 0.0);
    std::vector<int64_t> phase_cnt(static_cast<size_t>(period * w), 0);
    for (int64_t t = 0; t < ds.t_train; ++t) {
        const int64_t p = t % period;
        for (int64_t j = 0; j < w; ++j) {
            const size_t i = static_cast<size_t>(t * w + j);
            if (!ds.raw.mask[i]) continue;
            phase_sum[static_cast<size_t>(p * w + j)] += ds.raw.values[i];
            ++phase_cnt[static_cast<size_t>(p * w + j)];
        }
    }
    const auto [begin, end] = ds.split_range(split);
    std::vector<double> pred, target;
    std::vector<uint8_t> mask;
    for (int64_t t = begin; t < end; ++t) {
        const int64_t p = t % period;
        for (int64_t j = 0; j < w; ++j) {
            const size_t ph = static_cast<size_t>(p * w + j);
            const size_t i = static_cast<size_t>(t * w + j);
            const double ha = phase_cnt[ph] > 0 ? phase_sum[ph] / static_cast<double>(phase_cnt[ph]) : 0.0;
            pred.push_back(ha);
            target.push_back(ds.raw.values[i]);
            mask.push_back(ds.raw.mask[i]);
        }
    }
    MetricRow row;
    row.mae = masked_mae(pred, target, mask).value;
    row.rmse = masked_rmse(pred, target, mask).value;
    row.mape = masked_mape(pred, target, mask).value;
    return row;
}

}  // namespace bgslf
