#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "expcast/inference.hpp"
#include "expcast/llm/gateway.hpp"
#include "expcast/memory.hpp"
#include "expcast/timeseries.hpp"

namespace expcast {

// One training-time reasoning trajectory with its realized error.
struct TrajectoryRecord {
    std::string instance_id;
    std::size_t instance_index = 0;
    std::string rationale_text;
    std::vector<double> prediction;
    double error = 0.0;      // MAE vs ground truth
    bool positive = false;   // error < error_tau (strict); neg otherwise
};

struct AccumulationConfig {
    std::optional<double> error_tau;   // fixed threshold; unset -> quantile of sweep errors
    double error_tau_quantile = 0.5;
    std::size_t law_cluster_count = 5;
    std::size_t law_samples_per_cluster = 4;
    std::size_t dtw_tau_sample_pairs = 100;
    std::string summary_model;    // model for summarize/distill/induce/fuse calls
    std::string reasoning_model;  // model for the training forecast sweep
};

// Everything the accumulate phase resolved or skipped; persisted beside the
// memory file as the run's audit trail.
struct AccumulationManifest {
    nlohmann::json config_snapshot;
    double dtw_tau = 0.0;
    std::string dtw_tau_source;       // "config" | "median-pairwise-dtw" | "fallback"
    double error_tau = 0.0;
    std::string error_tau_source;     // "fixed" | "quantile(q)"
    std::size_t train_instances = 0;
    std::size_t pattern_count = 0;
    std::size_t wisdom_pos_count = 0;
    std::size_t wisdom_neg_count = 0;
    std::size_t law_count = 0;
    std::size_t skipped_summaries = 0;
    std::size_t skipped_trajectories = 0;
    std::size_t pos_trajectories = 0;
    std::size_t neg_trajectories = 0;
    std::string wisdom_batching = "kmeans-on-anchor-features";
    std::vector<std::string> rejected_laws;
    bool used_fallback_laws = false;
    std::size_t max_source_row = 0;      // highest source row any train window touches
    std::size_t test_target_start = 0;   // first source row owned by a test target
};

void write_manifest(const AccumulationManifest& manifest, const std::string& path);

// Deterministic sentence naming every feature field once, values at 4 decimals.
std::string textualize_features(const FeatureVector& fv);

// Compiles one structured law record ({"type":...}) into an executable law.
// Throws ParseError for unknown types or invalid parameters.
GeneralLaw compile_law(const nlohmann::json& record);

// Candidate law records embedded in a completion: one JSON object per line.
std::vector<nlohmann::json> extract_law_records(const std::string& reply_text);

// Interpolated q-quantile of a sample (q in [0, 1]).
double quantile(std::vector<double> values, double q);

// Median pairwise DTW over up to `sample_pairs` seeded random pairs of train
// lookbacks; falls back to 1.0 (with a warning) when no positive distance
// exists, since the scale must stay positive.
double calibrate_dtw_tau(const std::vector<ForecastInstance>& train,
                         std::size_t sample_pairs,
                         std::uint64_t seed);

// Phase 1: one pattern entry per train instance (summary of its target).
std::size_t abstract_patterns(const std::vector<ForecastInstance>& train,
                              MemoryStore& store,
                              ChatBackend& backend,
                              const SamplingParams& sampling,
                              AccumulationManifest& manifest);

// Phase 2: training forecast sweep (M=1, reflection off), error partition at
// error_tau, per-cluster distillation, filtered insertion.
std::vector<TrajectoryRecord> distill_wisdom(const std::vector<ForecastInstance>& train,
                                             MemoryStore& store,
                                             ChatBackend& backend,
                                             const SamplingParams& sampling,
                                             const AccumulationConfig& cfg,
                                             const InferenceConfig& inference_cfg,
                                             std::uint64_t seed,
                                             AccumulationManifest& manifest);

// Phase 3: feature clustering, textualization, law induction, compilation.
// Guarantees at least one law via the fallback range when nothing compiles.
std::size_t induce_laws(const std::vector<ForecastInstance>& train,
                        MemoryStore& store,
                        ChatBackend& backend,
                        const SamplingParams& sampling,
                        const AccumulationConfig& cfg,
                        std::uint64_t seed,
                        AccumulationManifest& manifest);

// Full accumulation pipeline: dtw_tau calibration, patterns, wisdom, laws.
AccumulationManifest accumulate_experience(const std::vector<ForecastInstance>& train,
                                           MemoryStore& store,
                                           ChatBackend& backend,
                                           const SamplingParams& sampling,
                                           const AccumulationConfig& cfg,
                                           const InferenceConfig& inference_cfg,
                                           std::uint64_t seed,
                                           bool calibrate_tau);

} // namespace expcast
