#pragma once

#include <map>
#include <string>
#include <vector>

#include "expcast/timeseries.hpp"

namespace expcast {

// Canonical dataset file: single-table CSV, header row, one ISO-8601
// timestamp column, raw numeric value columns.
struct DatasetSpec {
    std::string name;
    std::string path;
    std::string timestamp_column = "timestamp";
    std::string target_column;
    std::vector<std::string> covariate_columns;
    std::string frequency;              // informational ("1h", "15min", "1d")
    std::string preset = "short";       // "short" (168/24) or "long" (96/96)
    std::size_t lookback_len = 0;       // 0 -> preset default
    std::size_t horizon_len = 0;        // 0 -> preset default
    std::size_t stride = 0;             // 0 -> horizon (non-overlapping windows)
    SplitSpec split;                    // row counts per split slice
    std::map<std::string, std::string> static_context;
};

struct DatasetSplits {
    std::vector<ForecastInstance> train;
    std::vector<ForecastInstance> val;
    std::vector<ForecastInstance> test;
    std::size_t rows = 0;
    std::size_t test_target_start = 0;  // first source row any test target occupies
};

// Resolved L/H/stride after applying the short/long preset.
WindowSpec resolve_window_spec(const DatasetSpec& spec);

// Strict ISO-8601 parse ("YYYY-MM-DD", "YYYY-MM-DD HH:MM:SS", or with 'T').
std::int64_t parse_iso8601(const std::string& text);
std::string format_iso8601(std::int64_t epoch_seconds);

// Reads and validates the canonical CSV: header must contain every requested
// column; cells must be finite numbers; timestamps must increase with a
// constant step. Errors cite the 1-based file line.
SeriesTable read_csv_table(const std::string& path,
                           const std::string& timestamp_column,
                           const std::vector<std::string>& value_columns);

// Chronological split slicing. Split lengths count rows per slice in the
// standard convention where the val and test slices are prefixed with L extra
// lookback rows overlapping the previous split, so targets never overlap and
// train windows never read values from the test region.
DatasetSplits load_csv_dataset(const DatasetSpec& spec);

// Reshapes a native export (EPF/ETT style) into the canonical layout:
// timestamp column first (renamed "timestamp"), then target, then covariates.
struct IngestOptions {
    std::string input_path;
    std::string output_path;
    std::string timestamp_column;  // empty -> first column, whatever its header
    std::string target_column;
    std::vector<std::string> covariate_columns;
};
void ingest_csv(const IngestOptions& options);

} // namespace expcast
