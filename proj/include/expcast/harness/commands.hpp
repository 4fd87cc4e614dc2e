#pragma once

#include <string>
#include <vector>

#include "expcast/harness/config.hpp"
#include "expcast/harness/dataset.hpp"

namespace expcast {

void cmd_ingest(const IngestOptions& options);

// Builds memory from the train split and writes the memory file plus its
// manifest (<memory_path>.manifest.json).
void cmd_accumulate(const RunConfig& cfg);

// Runs the experience-conditioned test stream and writes the run report.
// When memory_out is nonempty the evolved store (updated confidences) is
// persisted there; the input memory file is never overwritten implicitly.
void cmd_forecast(const RunConfig& cfg, const std::string& memory_out = "");

// Recomputes and prints an MSE/MAE table from run reports; optional export.
void cmd_evaluate(const std::vector<std::string>& report_paths, const std::string& out_path = "");

struct AblationRow {
    std::string variant;
    double mse = 0.0;
    double mae = 0.0;
    std::size_t instances = 0;
    std::size_t total_bumps = 0;
};

// Runs the {no-pattern, no-wisdom, no-law, no-adapt, no-all} variant matrix,
// each against a fresh copy of the memory file.
std::vector<AblationRow> cmd_ablate(const RunConfig& cfg);

// Full argv interface. Exit codes: 0 success, 1 validation error,
// 2 transport error, 3 internal error.
int run_cli(int argc, const char* const* argv);

} // namespace expcast
