#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace expcast {

// Column-oriented slice of a source table. Timestamps are epoch seconds;
// iso_timestamps keep the original rendering for prompts and reports.
struct SeriesTable {
    std::vector<std::int64_t> timestamps;
    std::vector<std::string> iso_timestamps;
    std::vector<std::string> column_names;           // excludes the timestamp column
    std::vector<std::vector<double>> columns;        // column-major, raw values
    std::size_t row_offset = 0;                      // row index of row 0 in the source file

    std::size_t rows() const { return timestamps.size(); }
};

// Per-timestep covariates for one window: L history rows followed by H future rows.
struct DynamicContext {
    std::vector<std::string> names;
    std::vector<std::vector<double>> rows;           // (L + H) x names.size()
    std::size_t history_rows = 0;                    // == L
};

// One (lookback, context, horizon) tuple; the unit of train/test iteration.
struct ForecastInstance {
    std::string id;
    std::vector<double> lookback;                    // length L, raw units
    DynamicContext dynamic_context;
    std::map<std::string, std::string> static_context;
    std::vector<double> target;                      // length H; empty for pure inference
    std::vector<std::int64_t> timestamps;            // L + H instants, uniform spacing
    std::vector<std::string> iso_timestamps;
    std::size_t source_offset = 0;                   // lookback start row in the source file

    bool has_target() const { return !target.empty(); }
    std::size_t last_source_row() const;             // last row this window reads (incl. target)
};

struct SplitSpec {
    std::size_t train_len = 0;
    std::size_t val_len = 0;
    std::size_t test_len = 0;
};

struct MetricPair {
    double mse = 0.0;
    double mae = 0.0;
};

struct WindowSpec {
    std::size_t lookback_len = 0;   // L
    std::size_t horizon_len = 0;    // H
    std::size_t stride = 1;
};

// Slices `series` into ⌊(N − L − H)/stride⌋ + 1 chronological windows.
// target_col indexes SeriesTable::columns; covariate_cols fill dynamic_context.
// Raw values are copied verbatim: no normalization.
std::vector<ForecastInstance> make_windows(const SeriesTable& series,
                                           const WindowSpec& spec,
                                           std::size_t target_col,
                                           const std::vector<std::size_t>& covariate_cols,
                                           const std::string& id_prefix = "w");

double mse(const std::vector<double>& pred, const std::vector<double>& truth);
double mae(const std::vector<double>& pred, const std::vector<double>& truth);
MetricPair compute_metrics(const std::vector<double>& pred, const std::vector<double>& truth);

// Flat forecast: mean of the last `window` lookback values repeated H times.
std::vector<double> moving_average_forecast(const std::vector<double>& lookback,
                                            std::size_t horizon,
                                            std::size_t window);

} // namespace expcast
