#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "expcast/llm/gateway.hpp"
#include "expcast/memory.hpp"
#include "expcast/timeseries.hpp"

namespace expcast {

// One retrieved memory item as it enters a prompt.
struct RetrievedItem {
    std::uint64_t id = 0;
    double similarity = 0.0;
    std::string text;
};

// One law violation: feeds the reflective feedback block and the run report.
struct LawViolation {
    std::uint64_t law_id = 0;
    LawType law_type = LawType::non_negativity;
    std::size_t index = 0;   // offending position in the prediction
    double value = 0.0;      // offending value
    std::string bound_text;  // human-readable bound
};

// Serialize a vector in the strict answer format. parse_answer inverts this
// at 4-decimal precision.
std::string serialize_answer(const std::vector<double>& values);

// Extracts the LAST well-formed <answer>...</answer> block and parses exactly
// `horizon` finite reals from it.
std::vector<double> parse_answer(const LlmReply& reply, std::size_t horizon);

// Deterministic morphology sentence derived from the window's features.
std::string describe_shape(const FeatureVector& fv);

PromptBundle build_forecast_prompt(const ForecastInstance& instance,
                                   const std::vector<RetrievedItem>& patterns,
                                   const std::vector<RetrievedItem>& pos_wisdom,
                                   const std::vector<RetrievedItem>& neg_wisdom,
                                   const std::vector<GeneralLaw>& laws,
                                   const FeatureVector& features,
                                   const std::vector<LawViolation>& violation_feedback = {});

PromptBundle build_summary_prompt(const std::vector<double>& target_window);

struct TrajectorySample {
    std::string rationale_text;
    double error = 0.0;
};

PromptBundle build_wisdom_prompt(const std::vector<TrajectorySample>& group, bool positive);

PromptBundle build_law_prompt(const std::vector<std::string>& textualized_samples);

PromptBundle build_fusion_prompt(const std::string& text_a, const std::string& text_b);

} // namespace expcast
