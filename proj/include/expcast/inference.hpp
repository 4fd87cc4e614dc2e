#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "expcast/llm/gateway.hpp"
#include "expcast/llm/prompts.hpp"
#include "expcast/memory.hpp"
#include "expcast/timeseries.hpp"

namespace expcast {

struct InferenceConfig {
    std::size_t k = 3;                 // retrieved items per memory kind
    std::size_t trajectory_count = 4;  // M independent reasoning paths
    std::size_t max_retries = 3;       // extra exploration rounds after violations
    double phi_pos_weight = 1.0;
    double phi_neg_weight = 1.0;
    std::size_t ma_window = 0;         // 0 -> horizon length
    double beta = 0.1;                 // confidence bonus weight in retrieval
    bool use_pattern = true;
    bool use_wisdom = true;
    bool use_law = true;
    bool use_adapt = true;
    bool parallel_samples = false;     // sample the M trajectories concurrently
    enum class Aggregate { select, mean } aggregate = Aggregate::select;
};

struct TrajectoryOutcome {
    int sample_index = 0;
    std::string rationale_text;
    std::vector<double> prediction;  // empty when unparseable
    double phi = 0.0;
    bool parsed = false;
};

struct ExplorationResult {
    std::vector<TrajectoryOutcome> trajectories;
    std::vector<double> prediction;
    int selected_index = -1;  // sample index of the argmax-phi trajectory
    bool fallback_ma = false; // no trajectory parsed; moving-average fallback emitted
    std::vector<RetrievedItem> patterns;
    std::vector<RetrievedItem> pos_wisdom;
    std::vector<RetrievedItem> neg_wisdom;
};

struct InstanceOutcome {
    std::string instance_id;
    std::vector<double> final_prediction;
    std::vector<double> truth;  // empty for pure inference
    double last_observation = 0.0;
    int selected_trajectory = -1;
    std::vector<double> phi_scores;
    std::size_t retries_used = 0;
    std::size_t exploration_rounds = 0;
    bool laws_satisfied = true;
    bool fallback_ma = false;
    double llm_loss = 0.0;
    double ma_loss = 0.0;
    bool losses_valid = false;
    std::vector<RetrievedItem> retrieved_patterns;  // audit: id + similarity
    std::vector<RetrievedItem> retrieved_wisdom;
    std::vector<std::uint64_t> confidence_bumped_ids;
    std::vector<LawViolation> final_violations;
};

// Cosine over hashed token-frequency vectors (fixed 4096-bucket space,
// lowercased word tokens). Exposed for the phi tests.
double hashed_token_cosine(const std::string& a, const std::string& b);

// phi = w_pos * max_sim(pos) - w_neg * max_sim(neg); empty pools contribute 0.
double score_trajectory_phi(const std::string& trajectory_text,
                            const std::vector<std::string>& pos_wisdom,
                            const std::vector<std::string>& neg_wisdom,
                            const InferenceConfig& cfg);

// Evaluates every law at every relevant position; empty iff compliant.
std::vector<LawViolation> check_laws(const std::vector<double>& prediction,
                                     double last_observation,
                                     const std::vector<GeneralLaw>& laws);

// One exploration round: M samples, parse (one re-prompt per parse failure),
// phi-score, argmax selection (ties to the lowest sample index).
ExplorationResult explore_and_select(const ForecastInstance& instance,
                                     const MemoryStore& memory,
                                     ChatBackend& backend,
                                     const InferenceConfig& cfg,
                                     const SamplingParams& sampling,
                                     const std::vector<LawViolation>& feedback = {});

// Exploration plus the rule-based reflection loop (at most 1 + max_retries
// rounds). Does not touch confidence.
InstanceOutcome reflect_loop(const ForecastInstance& instance,
                             const MemoryStore& memory,
                             ChatBackend& backend,
                             const InferenceConfig& cfg,
                             const SamplingParams& sampling);

// Computes llm/ma losses and, when the forecast strictly beats the
// moving-average baseline, bumps every contributing pattern/wisdom entry.
void adapt_confidence(InstanceOutcome& outcome,
                      const ForecastInstance& instance,
                      MemoryStore& memory,
                      const InferenceConfig& cfg);

struct RunReport {
    nlohmann::json config_snapshot;
    std::vector<InstanceOutcome> outcomes;
    std::size_t evaluated = 0;   // outcomes with ground truth included in aggregates
    std::size_t exclusions = 0;  // instances dropped due to per-instance failures
    std::size_t total_bumps = 0;
    double aggregate_mse = 0.0;
    double aggregate_mae = 0.0;
};

// Chronological test stream: reflect, then adapt; instance i sees every
// confidence bump from instances < i.
RunReport run_test_stream(const std::vector<ForecastInstance>& test_instances,
                          MemoryStore& memory,
                          ChatBackend& backend,
                          const InferenceConfig& cfg,
                          const SamplingParams& sampling,
                          nlohmann::json config_snapshot = nlohmann::json::object());

void write_run_report(const RunReport& report, const std::string& path);
RunReport read_run_report(const std::string& path);

} // namespace expcast
