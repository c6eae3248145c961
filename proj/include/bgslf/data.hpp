#pragma once

// Multivariate time series loading, normalization, differencing, period
// segmentation, and sliding-window batching. Values are stored row-major as
// [t][n][d] with a parallel presence mask (true = observed).

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "bgslf/tensor.hpp"

namespace bgslf {

struct SeriesBlock {
    int64_t T = 0, N = 0, D = 0;
    std::vector<double> values;  // T*N*D
    std::vector<uint8_t> mask;   // T*N*D, 1 = observed

    int64_t idx(int64_t t, int64_t n, int64_t d) const { return (t * N + n) * D + d; }
};

struct MtsDataset {
    SeriesBlock raw;
    std::vector<double> norm;  // z-scored values, missing cells hold 0
    std::vector<double> mean;  // per feature d, fit on training split
    std::vector<double> stdev;
    int64_t t_train = 0, t_valid = 0, t_test = 0;

    int64_t T() const { return raw.T; }
    int64_t N() const { return raw.N; }
    int64_t D() const { return raw.D; }

    // split -> [begin, end) timestep range
    std::pair<int64_t, int64_t> split_range(const std::string& split) const {
        if (split == "train") return {0, t_train};
        if (split == "valid") return {t_train, t_train + t_valid};
        if (split == "test") return {t_train + t_valid, raw.T};
        throw std::invalid_argument("unknown split '" + split + "'");
    }

    double to_physical(double z, int64_t d) const { return z * stdev[static_cast<size_t>(d)] + mean[static_cast<size_t>(d)]; }
};

struct SampleBatch {
    int64_t B = 0, T_in = 0, T_out = 0, N = 0, D = 0;
    std::vector<double> inputs;        // B*T_in*N*D, z-scored, missing -> 0
    std::vector<double> targets;       // B*T_out*N*D, z-scored
    std::vector<uint8_t> target_mask;  // B*T_out*N*D
};

// Segments of the differenced training series, laid out (S, N, D, P).
struct SegmentTensor {
    int64_t S = 0, N = 0, D = 0, P = 0;
    std::vector<double> values;
};

class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// ---------------------------------------------------------------------
// loading
// ---------------------------------------------------------------------

// CSV: first row node identifiers (D=1), one timestep per subsequent row,
// empty cell or "nan" = missing.
inline SeriesBlock load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open CSV file: " + path);
    std::string line;
    if (!std::getline(in, line)) throw DataError("empty CSV file: " + path);
    int64_t n_cols = 1;
    for (char c : line)
        if (c == ',') ++n_cols;

    SeriesBlock b;
    b.N = n_cols;
    b.D = 1;
    int64_t row_no = 1;
    while (std::getline(in, line)) {
        ++row_no;
        if (line.empty() && in.eof()) break;
        std::stringstream ss(line);
        std::string cell;
        int64_t got = 0;
        while (std::getline(ss, cell, ',')) {
            ++got;
            if (got > n_cols) break;
            // trim
            size_t s = cell.find_first_not_of(" \t\r");
            size_t e = cell.find_last_not_of(" \t\r");
            std::string tok = (s == std::string::npos) ? "" : cell.substr(s, e - s + 1);
            double v = std::numeric_limits<double>::quiet_NaN();
            if (!tok.empty() && tok != "nan" && tok != "NaN" && tok != "NAN") {
                try {
                    size_t pos = 0;
                    v = std::stod(tok, &pos);
                    if (pos != tok.size()) throw std::invalid_argument(tok);
                } catch (const std::exception&) {
                    throw DataError("non-numeric cell '" + tok + "' at row " + std::to_string(row_no) + " in " + path);
                }
            }
            b.values.push_back(v);
            b.mask.push_back(std::isfinite(v) ? 1 : 0);
        }
        // a row ending in ',' has a trailing empty (missing) cell
        if (!line.empty() && line.back() == ',') {
            ++got;
            b.values.push_back(std::numeric_limits<double>::quiet_NaN());
            b.mask.push_back(0);
        }
        if (got != n_cols)
            throw DataError("ragged CSV row " + std::to_string(row_no) + ": expected " + std::to_string(n_cols) +
                            " cells, got " + std::to_string(got) + " in " + path);
        ++b.T;
    }
    return b;
}

// Binary container: magic "MTSB1", u32le T, N, D, then T*N*D f32le in
// [t][n][d] order. Non-finite = missing.
inline SeriesBlock load_binary(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open binary file: " + path);
    char magic[5];
    if (!in.read(magic, 5) || std::memcmp(magic, "MTSB1", 5) != 0)
        throw DataError("bad magic in binary container: " + path);
    uint32_t dims[3];
    if (!in.read(reinterpret_cast<char*>(dims), sizeof(dims)))
        throw DataError("truncated header in binary container: " + path);
    SeriesBlock b;
    b.T = dims[0];
    b.N = dims[1];
    b.D = dims[2];
    const int64_t n = b.T * b.N * b.D;
    std::vector<float> buf(static_cast<size_t>(n));
    if (!in.read(reinterpret_cast<char*>(buf.data()), n * static_cast<int64_t>(sizeof(float))))
        throw DataError("truncated payload in binary container: " + path);
    b.values.resize(static_cast<size_t>(n));
    b.mask.resize(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        b.values[static_cast<size_t>(i)] = buf[static_cast<size_t>(i)];
        b.mask[static_cast<size_t>(i)] = std::isfinite(buf[static_cast<size_t>(i)]) ? 1 : 0;
    }
    return b;
}

inline void save_binary(const std::string& path, const SeriesBlock& b) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write binary file: " + path);
    out.write("MTSB1", 5);
    uint32_t dims[3] = {static_cast<uint32_t>(b.T), static_cast<uint32_t>(b.N), static_cast<uint32_t>(b.D)};
    out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
    std::vector<float> buf(b.values.size());
    for (size_t i = 0; i < b.values.size(); ++i)
        buf[i] = b.mask[i] ? static_cast<float>(b.values[i]) : std::numeric_limits<float>::quiet_NaN();
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!out) throw DataError("write failure: " + path);
}

// ---------------------------------------------------------------------
// dataset assembly
// ---------------------------------------------------------------------

// Chronological 70/10/20 split (floor; remainder to test), then per-feature
// z-score statistics from non-missing training cells.
inline MtsDataset make_dataset(SeriesBlock raw, int64_t min_T = 2, bool zero_is_missing = false) {
    if (raw.T < min_T)
        throw DataError("series too short: T=" + std::to_string(raw.T) + ", need at least " + std::to_string(min_T));
    if (zero_is_missing) {
        for (size_t i = 0; i < raw.values.size(); ++i)
            if (raw.mask[i] && raw.values[i] == 0.0) raw.mask[i] = 0;
    }
    MtsDataset ds;
    ds.raw = std::move(raw);
    ds.t_train = (ds.raw.T * 7) / 10;
    ds.t_valid = ds.raw.T / 10;
    ds.t_test = ds.raw.T - ds.t_train - ds.t_valid;
    if (ds.t_train < 1) throw DataError("training split empty: T=" + std::to_string(ds.raw.T));

    const int64_t N = ds.raw.N, D = ds.raw.D;
    ds.mean.assign(static_cast<size_t>(D), 0.0);
    ds.stdev.assign(static_cast<size_t>(D), 0.0);
    for (int64_t d = 0; d < D; ++d) {
        double sum = 0.0, sq = 0.0;
        int64_t cnt = 0;
        for (int64_t t = 0; t < ds.t_train; ++t)
            for (int64_t n = 0; n < N; ++n) {
                const int64_t i = ds.raw.idx(t, n, d);
                if (!ds.raw.mask[static_cast<size_t>(i)]) continue;
                sum += ds.raw.values[static_cast<size_t>(i)];
                sq += ds.raw.values[static_cast<size_t>(i)] * ds.raw.values[static_cast<size_t>(i)];
                ++cnt;
            }
        if (cnt == 0) throw DataError("feature " + std::to_string(d) + " has no observed training cells");
        const double mean = sum / static_cast<double>(cnt);
        const double var = std::max(0.0, sq / static_cast<double>(cnt) - mean * mean);
        const double sd = std::sqrt(var);
        if (sd < 1e-8)
            throw DataError("feature " + std::to_string(d) +
                            " is (near-)constant on the training split; remove it before training");
        ds.mean[static_cast<size_t>(d)] = mean;
        ds.stdev[static_cast<size_t>(d)] = sd;
    }
    ds.norm.assign(ds.raw.values.size(), 0.0);
    for (int64_t t = 0; t < ds.raw.T; ++t)
        for (int64_t n = 0; n < N; ++n)
            for (int64_t d = 0; d < D; ++d) {
                const size_t i = static_cast<size_t>(ds.raw.idx(t, n, d));
                if (ds.raw.mask[i])
                    ds.norm[i] = (ds.raw.values[i] - ds.mean[static_cast<size_t>(d)]) / ds.stdev[static_cast<size_t>(d)];
            }
    return ds;
}

// Re-apply externally supplied normalization statistics (e.g. from a
// checkpoint) so evaluation matches the run that produced them.
inline void renormalize(MtsDataset& ds, const std::vector<double>& mean, const std::vector<double>& stdev) {
    if (static_cast<int64_t>(mean.size()) != ds.D() || static_cast<int64_t>(stdev.size()) != ds.D())
        throw DataError("normalization statistics have wrong feature count");
    ds.mean = mean;
    ds.stdev = stdev;
    std::fill(ds.norm.begin(), ds.norm.end(), 0.0);
    for (int64_t t = 0; t < ds.T(); ++t)
        for (int64_t n = 0; n < ds.N(); ++n)
            for (int64_t d = 0; d < ds.D(); ++d) {
                const size_t i = static_cast<size_t>(ds.raw.idx(t, n, d));
                if (ds.raw.mask[i]) ds.norm[i] = (ds.raw.values[i] - mean[static_cast<size_t>(d)]) / stdev[static_cast<size_t>(d)];
            }
}

// ---------------------------------------------------------------------
// difference and segmentation
// ---------------------------------------------------------------------

// out[t] = in[t+1] - in[t]; differences touching a missing cell are masked.
inline SeriesBlock diff(const SeriesBlock& in) {
    if (in.T < 2) throw DataError("diff: need T >= 2, got T=" + std::to_string(in.T));
    SeriesBlock out;
    out.T = in.T - 1;
    out.N = in.N;
    out.D = in.D;
    const int64_t w = in.N * in.D;
    out.values.resize(static_cast<size_t>(out.T * w));
    out.mask.resize(static_cast<size_t>(out.T * w));
    for (int64_t t = 0; t < out.T; ++t)
        for (int64_t j = 0; j < w; ++j) {
            const size_t a = static_cast<size_t>(t * w + j), b = static_cast<size_t>((t + 1) * w + j);
            const bool ok = in.mask[a] && in.mask[b];
            out.mask[a] = ok ? 1 : 0;
            out.values[a] = ok ? in.values[b] - in.values[a] : 0.0;
        }
    return out;
}

// S = floor(T/P) full segments from the start; trailing remainder dropped.
// Output layout (s, n, d, p): values[s][n][d][p] = in[s*P + p][n][d].
inline SegmentTensor segment(const SeriesBlock& in, int64_t P) {
    if (P < 1) throw DataError("segment: period must be >= 1");
    if (in.T < P)
        throw DataError("segment: series length " + std::to_string(in.T) + " is shorter than period " +
                        std::to_string(P) + "; use a smaller period");
    SegmentTensor seg;
    seg.S = in.T / P;
    seg.N = in.N;
    seg.D = in.D;
    seg.P = P;
    seg.values.assign(static_cast<size_t>(seg.S * seg.N * seg.D * P), 0.0);
    for (int64_t s = 0; s < seg.S; ++s)
        for (int64_t p = 0; p < P; ++p)
            for (int64_t n = 0; n < seg.N; ++n)
                for (int64_t d = 0; d < seg.D; ++d)
                    seg.values[static_cast<size_t>(((s * seg.N + n) * seg.D + d) * P + p)] =
                        in.values[static_cast<size_t>(in.idx(s * P + p, n, d))];
    return seg;
}

// Normalized differenced training series -> segment tensor for the MGN.
inline SegmentTensor build_segment_tensor(const MtsDataset& ds, int64_t P) {
    SeriesBlock train;
    train.T = ds.t_train;
    train.N = ds.N();
    train.D = ds.D();
    const size_t n = static_cast<size_t>(train.T * train.N * train.D);
    train.values.assign(ds.norm.begin(), ds.norm.begin() + static_cast<int64_t>(n));
    train.mask.assign(ds.raw.mask.begin(), ds.raw.mask.begin() + static_cast<int64_t>(n));
    return segment(diff(train), P);
}

// ---------------------------------------------------------------------
// windowing
// ---------------------------------------------------------------------

// Stride-1 windows fully inside the split; no leakage across boundaries.
inline std::vector<int64_t> window_starts(const MtsDataset& ds, const std::string& split, int64_t t_in, int64_t t_out) {
    const auto [begin, end] = ds.split_range(split);
    const int64_t len = end - begin;
    if (len < t_in + t_out)
        throw DataError("split '" + split + "' length " + std::to_string(len) + " is shorter than T_in+T_out=" +
                        std::to_string(t_in + t_out));
    std::vector<int64_t> starts;
    for (int64_t s = begin; s + t_in + t_out <= end; ++s) starts.push_back(s);
    return starts;
}

inline SampleBatch gather_batch(const MtsDataset& ds, const std::vector<int64_t>& starts, int64_t t_in, int64_t t_out) {
    SampleBatch b;
    b.B = static_cast<int64_t>(starts.size());
    b.T_in = t_in;
    b.T_out = t_out;
    b.N = ds.N();
    b.D = ds.D();
    const int64_t w = b.N * b.D;
    b.inputs.resize(static_cast<size_t>(b.B * t_in * w));
    b.targets.resize(static_cast<size_t>(b.B * t_out * w));
    b.target_mask.resize(static_cast<size_t>(b.B * t_out * w));
    for (int64_t k = 0; k < b.B; ++k) {
        const int64_t s = starts[static_cast<size_t>(k)];
        for (int64_t t = 0; t < t_in; ++t)
            std::copy(ds.norm.begin() + (s + t) * w, ds.norm.begin() + (s + t + 1) * w,
                      b.inputs.begin() + (k * t_in + t) * w);
        for (int64_t t = 0; t < t_out; ++t) {
            const int64_t src = (s + t_in + t) * w;
            std::copy(ds.norm.begin() + src, ds.norm.begin() + src + w, b.targets.begin() + (k * t_out + t) * w);
            std::copy(ds.raw.mask.begin() + src, ds.raw.mask.begin() + src + w,
                      b.target_mask.begin() + (k * t_out + t) * w);
        }
    }
    return b;
}

}  // namespace bgslf
