#include "expcast/timeseries.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>

#include "expcast/errors.hpp"

namespace expcast {

std::size_t ForecastInstance::last_source_row() const {
    return source_offset + lookback.size() + target.size() - 1;
}

namespace {

void check_uniform_spacing(const std::vector<std::int64_t>& ts) {
    if (ts.size() < 2) return;
    const std::int64_t step = ts[1] - ts[0];
    if (step <= 0) throw ValidationError("timestamps must be strictly increasing");
    for (std::size_t i = 2; i < ts.size(); ++i) {
        if (ts[i] - ts[i - 1] != step) {
            throw ValidationError("timestamps must have constant step; broken at position " +
                                  std::to_string(i));
        }
    }
}

void check_paired(const std::vector<double>& pred, const std::vector<double>& truth) {
    if (pred.size() != truth.size()) {
        throw ValidationError("metric length mismatch: pred has " + std::to_string(pred.size()) +
                              ", truth has " + std::to_string(truth.size()));
    }
    if (pred.empty()) throw ValidationError("metric inputs must be nonempty");
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (!std::isfinite(pred[i]) || !std::isfinite(truth[i])) {
            throw ValidationError("non-finite value at position " + std::to_string(i));
        }
    }
}

} // namespace

std::vector<ForecastInstance> make_windows(const SeriesTable& series,
                                           const WindowSpec& spec,
                                           std::size_t target_col,
                                           const std::vector<std::size_t>& covariate_cols,
                                           const std::string& id_prefix) {
    const std::size_t L = spec.lookback_len;
    const std::size_t H = spec.horizon_len;
    const std::size_t N = series.rows();
    if (L == 0 || H == 0) throw ValidationError("window lengths must be positive");
    if (spec.stride == 0) throw ValidationError("stride must be >= 1");
    if (N < L + H) {
        throw ValidationError("insufficient length: need " + std::to_string(L + H) +
                              " rows, have " + std::to_string(N));
    }
    if (target_col >= series.columns.size()) throw ValidationError("target column out of range");
    for (std::size_t c : covariate_cols) {
        if (c >= series.columns.size()) throw ValidationError("covariate column out of range");
    }
    check_uniform_spacing(series.timestamps);

    const std::size_t count = (N - L - H) / spec.stride + 1;
    std::vector<ForecastInstance> out;
    out.reserve(count);
    const auto& target_series = series.columns[target_col];

    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t start = i * spec.stride;
        ForecastInstance inst;
        char idbuf[32];
        std::snprintf(idbuf, sizeof(idbuf), "%s%05zu", id_prefix.c_str(), i);
        inst.id = idbuf;
        inst.source_offset = series.row_offset + start;
        inst.lookback.assign(target_series.begin() + start, target_series.begin() + start + L);
        inst.target.assign(target_series.begin() + start + L, target_series.begin() + start + L + H);
        inst.timestamps.assign(series.timestamps.begin() + start,
                               series.timestamps.begin() + start + L + H);
        if (!series.iso_timestamps.empty()) {
            inst.iso_timestamps.assign(series.iso_timestamps.begin() + start,
                                       series.iso_timestamps.begin() + start + L + H);
        }
        inst.dynamic_context.history_rows = L;
        for (std::size_t c : covariate_cols) {
            inst.dynamic_context.names.push_back(series.column_names.empty()
                                                     ? ("c" + std::to_string(c))
                                                     : series.column_names[c]);
        }
        inst.dynamic_context.rows.resize(L + H);
        for (std::size_t r = 0; r < L + H; ++r) {
            auto& row = inst.dynamic_context.rows[r];
            row.reserve(covariate_cols.size());
            for (std::size_t c : covariate_cols) row.push_back(series.columns[c][start + r]);
        }
        out.push_back(std::move(inst));
    }
    return out;
}

double mse(const std::vector<double>& pred, const std::vector<double>& truth) {
    check_paired(pred, truth);
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - truth[i];
        acc += d * d;
    }
    return acc / static_cast<double>(pred.size());
}

double mae(const std::vector<double>& pred, const std::vector<double>& truth) {
    check_paired(pred, truth);
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) acc += std::fabs(pred[i] - truth[i]);
    return acc / static_cast<double>(pred.size());
}

MetricPair compute_metrics(const std::vector<double>& pred, const std::vector<double>& truth) {
    return {mse(pred, truth), mae(pred, truth)};
}

std::vector<double> moving_average_forecast(const std::vector<double>& lookback,
                                            std::size_t horizon,
                                            std::size_t window) {
    if (window == 0) throw ValidationError("moving-average window must be >= 1");
    if (window > lookback.size()) {
        throw ValidationError("moving-average window " + std::to_string(window) +
                              " exceeds lookback length " + std::to_string(lookback.size()));
    }
    const double sum = std::accumulate(lookback.end() - static_cast<std::ptrdiff_t>(window),
                                       lookback.end(), 0.0);
    return std::vector<double>(horizon, sum / static_cast<double>(window));
}

} // namespace expcast
