#include "expcast/harness/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>

#include "expcast/errors.hpp"
#include "expcast/util.hpp"

namespace expcast {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    fields.push_back(cur);
    return fields;
}

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t");
    std::size_t e = s.find_last_not_of(" \t");
    if (b == std::string::npos) return "";
    return s.substr(b, e - b + 1);
}

} // namespace

WindowSpec resolve_window_spec(const DatasetSpec& spec) {
    WindowSpec w;
    if (spec.preset == "long") {
        w.lookback_len = 96;
        w.horizon_len = 96;
    } else if (spec.preset == "short" || spec.preset.empty()) {
        w.lookback_len = 168;
        w.horizon_len = 24;
    } else {
        throw ValidationError("unknown dataset preset: " + spec.preset);
    }
    if (spec.lookback_len > 0) w.lookback_len = spec.lookback_len;
    if (spec.horizon_len > 0) w.horizon_len = spec.horizon_len;
    w.stride = spec.stride > 0 ? spec.stride : w.horizon_len;
    return w;
}

std::int64_t parse_iso8601(const std::string& text) {
    int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
    int n = std::sscanf(text.c_str(), "%d-%d-%dT%d:%d:%d", &y, &mo, &d, &h, &mi, &s);
    if (n < 3) n = std::sscanf(text.c_str(), "%d-%d-%d %d:%d:%d", &y, &mo, &d, &h, &mi, &s);
    if (n < 3) throw ValidationError("not an ISO-8601 timestamp: '" + text + "'");
    std::tm tm{};
    tm.tm_year = y - 1900;
    tm.tm_mon = mo - 1;
    tm.tm_mday = d;
    tm.tm_hour = h;
    tm.tm_min = mi;
    tm.tm_sec = s;
    const std::time_t t = timegm(&tm);
    if (t == static_cast<std::time_t>(-1)) {
        throw ValidationError("timestamp out of range: '" + text + "'");
    }
    return static_cast<std::int64_t>(t);
}

std::string format_iso8601(std::int64_t epoch_seconds) {
    const std::time_t t = static_cast<std::time_t>(epoch_seconds);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02d", tm.tm_year + 1900,
                  tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec);
    return buf;
}

SeriesTable read_csv_table(const std::string& path,
                           const std::string& timestamp_column,
                           const std::vector<std::string>& value_columns) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open dataset file: " + path);

    std::string line;
    if (!std::getline(in, line)) throw ValidationError("dataset file is empty: " + path);
    const auto header = split_csv_line(line);

    auto column_index = [&](const std::string& name) -> std::size_t {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (trim(header[i]) == name) return i;
        }
        throw ValidationError("missing column '" + name + "' in " + path);
    };

    const std::size_t ts_idx = column_index(timestamp_column);
    std::vector<std::size_t> value_idx;
    for (const auto& name : value_columns) value_idx.push_back(column_index(name));

    SeriesTable table;
    table.column_names = value_columns;
    table.columns.resize(value_columns.size());

    std::size_t line_no = 1;
    std::int64_t prev_ts = 0;
    std::int64_t step = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != header.size()) {
            throw ValidationError(path + " line " + std::to_string(line_no) + ": expected " +
                                  std::to_string(header.size()) + " fields, found " +
                                  std::to_string(fields.size()));
        }
        const std::string ts_text = trim(fields[ts_idx]);
        std::int64_t ts;
        try {
            ts = parse_iso8601(ts_text);
        } catch (const ValidationError& ex) {
            throw ValidationError(path + " line " + std::to_string(line_no) + ": " + ex.what());
        }
        if (!table.timestamps.empty()) {
            if (ts <= prev_ts) {
                throw ValidationError(path + " line " + std::to_string(line_no) +
                                      ": timestamps not strictly increasing");
            }
            const std::int64_t d = ts - prev_ts;
            if (step == 0) {
                step = d;
            } else if (d != step) {
                throw ValidationError(path + " line " + std::to_string(line_no) +
                                      ": irregular timestamp step");
            }
        }
        prev_ts = ts;
        table.timestamps.push_back(ts);
        table.iso_timestamps.push_back(ts_text);
        for (std::size_t c = 0; c < value_idx.size(); ++c) {
            const std::string cell = trim(fields[value_idx[c]]);
            double v = 0.0;
            if (!parse_finite_double(cell, v)) {
                throw ValidationError(path + " line " + std::to_string(line_no) +
                                      ": missing or non-finite value '" + cell + "' in column '" +
                                      value_columns[c] + "'");
            }
            table.columns[c].push_back(v);
        }
    }
    if (table.timestamps.empty()) throw ValidationError("dataset has no data rows: " + path);
    return table;
}

namespace {

SeriesTable slice_table(const SeriesTable& src, std::size_t begin, std::size_t len) {
    SeriesTable out;
    out.row_offset = begin;
    out.column_names = src.column_names;
    out.timestamps.assign(src.timestamps.begin() + static_cast<std::ptrdiff_t>(begin),
                          src.timestamps.begin() + static_cast<std::ptrdiff_t>(begin + len));
    out.iso_timestamps.assign(src.iso_timestamps.begin() + static_cast<std::ptrdiff_t>(begin),
                              src.iso_timestamps.begin() + static_cast<std::ptrdiff_t>(begin + len));
    out.columns.resize(src.columns.size());
    for (std::size_t c = 0; c < src.columns.size(); ++c) {
        out.columns[c].assign(src.columns[c].begin() + static_cast<std::ptrdiff_t>(begin),
                              src.columns[c].begin() + static_cast<std::ptrdiff_t>(begin + len));
    }
    return out;
}

} // namespace

DatasetSplits load_csv_dataset(const DatasetSpec& spec) {
    if (spec.target_column.empty()) throw ValidationError("dataset spec has no target column");
    std::vector<std::string> value_columns = {spec.target_column};
    value_columns.insert(value_columns.end(), spec.covariate_columns.begin(),
                         spec.covariate_columns.end());
    const SeriesTable table = read_csv_table(spec.path, spec.timestamp_column, value_columns);
    const WindowSpec window = resolve_window_spec(spec);
    const std::size_t L = window.lookback_len;
    const std::size_t N = table.rows();
    const SplitSpec& split = spec.split;

    if (split.train_len + split.val_len + split.test_len == 0) {
        throw ValidationError("dataset split has no rows configured");
    }
    if (split.train_len > N) {
        throw ValidationError("train split wants " + std::to_string(split.train_len) +
                              " rows, file has " + std::to_string(N));
    }

    std::vector<std::size_t> covariate_cols;
    for (std::size_t c = 1; c < value_columns.size(); ++c) covariate_cols.push_back(c);

    DatasetSplits out;
    out.rows = N;

    auto window_split = [&](std::size_t begin, std::size_t len, const char* prefix) {
        if (len == 0) return std::vector<ForecastInstance>{};
        if (begin + len > N) {
            throw ValidationError(std::string(prefix) + " split needs rows up to " +
                                  std::to_string(begin + len) + ", file has " + std::to_string(N));
        }
        auto instances = make_windows(slice_table(table, begin, len), window, 0, covariate_cols,
                                      std::string(prefix) + "-");
        for (auto& inst : instances) {
            inst.static_context = spec.static_context;
            if (!spec.name.empty()) inst.static_context.emplace("dataset", spec.name);
            if (!spec.frequency.empty()) inst.static_context.emplace("frequency", spec.frequency);
            inst.static_context.emplace("target", spec.target_column);
        }
        return instances;
    };

    // Slices after the first carry an L-row lookback prefix from the previous
    // region, so window targets partition cleanly across splits.
    std::size_t content_end = split.train_len;
    out.train = window_split(0, split.train_len, "train");
    if (split.val_len > 0) {
        if (content_end < L) throw ValidationError("train split shorter than the lookback window");
        out.val = window_split(content_end - L, split.val_len, "val");
        content_end = content_end - L + split.val_len;
    }
    if (split.test_len > 0) {
        if (content_end < L) throw ValidationError("splits shorter than the lookback window");
        const std::size_t test_begin = content_end - L;
        out.test = window_split(test_begin, split.test_len, "test");
        out.test_target_start = test_begin + L;
    }
    return out;
}

void ingest_csv(const IngestOptions& options) {
    std::ifstream in(options.input_path);
    if (!in) throw ValidationError("cannot open input file: " + options.input_path);
    std::string line;
    if (!std::getline(in, line)) throw ValidationError("input file is empty: " + options.input_path);
    const auto header = split_csv_line(line);

    std::size_t ts_idx = 0;
    if (options.timestamp_column.empty()) {
        ts_idx = 0;  // unnamed leading index column, as in the public EPF exports
    } else {
        bool found = false;
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (trim(header[i]) == options.timestamp_column) {
                ts_idx = i;
                found = true;
                break;
            }
        }
        if (!found) {
            throw ValidationError("missing timestamp column '" + options.timestamp_column +
                                  "' in " + options.input_path);
        }
    }

    auto column_index = [&](const std::string& name) -> std::size_t {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (trim(header[i]) == name) return i;
        }
        throw ValidationError("missing column '" + name + "' in " + options.input_path);
    };
    if (options.target_column.empty()) throw ValidationError("ingest requires a target column");
    std::vector<std::size_t> keep = {column_index(options.target_column)};
    for (const auto& c : options.covariate_columns) keep.push_back(column_index(c));

    std::ofstream out(options.output_path, std::ios::trunc);
    if (!out) throw ValidationError("cannot open output file: " + options.output_path);
    out << "timestamp," << options.target_column;
    for (const auto& c : options.covariate_columns) out << "," << c;
    out << "\n";

    std::size_t line_no = 1;
    std::int64_t prev_ts = 0;
    bool first = true;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != header.size()) {
            throw ValidationError(options.input_path + " line " + std::to_string(line_no) +
                                  ": expected " + std::to_string(header.size()) +
                                  " fields, found " + std::to_string(fields.size()));
        }
        const std::string ts_text = trim(fields[ts_idx]);
        std::int64_t ts;
        try {
            ts = parse_iso8601(ts_text);
        } catch (const ValidationError& ex) {
            throw ValidationError(options.input_path + " line " + std::to_string(line_no) + ": " +
                                  ex.what());
        }
        if (!first && ts <= prev_ts) {
            throw ValidationError(options.input_path + " line " + std::to_string(line_no) +
                                  ": timestamps not strictly increasing");
        }
        first = false;
        prev_ts = ts;
        out << format_iso8601(ts);
        for (std::size_t idx : keep) {
            const std::string cell = trim(fields[idx]);
            double v = 0.0;
            if (!parse_finite_double(cell, v)) {
                throw ValidationError(options.input_path + " line " + std::to_string(line_no) +
                                      ": missing or non-finite value '" + cell + "'");
            }
            out << "," << cell;
        }
        out << "\n";
    }
}

} // namespace expcast
