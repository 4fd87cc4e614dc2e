#pragma once

#include <memory>
#include <string>

#include <json.hpp>

#include "expcast/accumulation.hpp"
#include "expcast/harness/dataset.hpp"
#include "expcast/inference.hpp"
#include "expcast/llm/gateway.hpp"
#include "expcast/llm/http_backend.hpp"
#include "expcast/similarity.hpp"

namespace expcast {

struct BackendConfig {
    std::string kind = "mock";  // "mock" | "http"
    std::string mock_script;
    HttpBackendConfig http;
};

struct RunConfig {
    DatasetSpec dataset;
    SimilarityConfig similarity;
    bool dtw_tau_pinned = false;  // dtw_tau came from config; skip calibration
    AccumulationConfig accumulation;
    InferenceConfig inference;
    SamplingParams sampling;
    BackendConfig backend;
    std::uint64_t seed = 0;
    std::string memory_path = "memory.jsonl";
    std::string report_path = "report.jsonl";
};

RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);

// Fully-resolved snapshot embedded into every artifact (reproducibility stamp).
nlohmann::json run_config_to_json(const RunConfig& cfg);

// Backend/dataset prerequisites; throws ConfigError on violations.
void validate_run_config(const RunConfig& cfg);

std::unique_ptr<ChatBackend> make_backend(const RunConfig& cfg);

} // namespace expcast
