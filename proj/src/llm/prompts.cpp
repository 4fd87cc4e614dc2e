#include "expcast/llm/prompts.hpp"

#include <cmath>

#include "expcast/errors.hpp"
#include "expcast/util.hpp"

namespace expcast {

namespace {

std::string timestamp_label(const ForecastInstance& inst, std::size_t pos) {
    if (pos < inst.iso_timestamps.size()) return inst.iso_timestamps[pos];
    return "t" + std::to_string(pos);
}

std::string law_bound_text(const GeneralLaw& law, double last_observation) {
    switch (law.law_type) {
        case LawType::non_negativity:
            return "all values non-negative";
        case LawType::range:
            return "strictly bounded within [" + fmt4(law.range_lo) + ", " + fmt4(law.range_hi) + "]";
        case LawType::max_step:
            if (law.step_reference == StepReference::vs_last_observation) {
                return "first step within " + fmt4(law.step_limit) + " of the last observation " +
                       fmt4(last_observation);
            }
            return "consecutive steps within " + fmt4(law.step_limit) + " of each other";
    }
    return "";
}

} // namespace

std::string serialize_answer(const std::vector<double>& values) {
    return "<answer>" + join_fmt4(values) + "</answer>";
}

std::vector<double> parse_answer(const LlmReply& reply, std::size_t horizon) {
    const std::string& text = reply.rationale_text;
    static constexpr const char* kOpen = "<answer>";
    static constexpr const char* kClose = "</answer>";

    std::string content;
    bool found = false;
    std::size_t pos = 0;
    while (true) {
        const std::size_t s = text.find(kOpen, pos);
        if (s == std::string::npos) break;
        const std::size_t body = s + std::char_traits<char>::length(kOpen);
        const std::size_t e = text.find(kClose, body);
        if (e == std::string::npos) break;
        content = text.substr(body, e - body);
        found = true;
        pos = e + std::char_traits<char>::length(kClose);
    }
    if (!found) throw ParseError("no answer block in completion");

    std::vector<double> values;
    std::string token;
    auto flush = [&] {
        if (token.empty()) return;
        double v = 0.0;
        if (!parse_finite_double(token, v)) {
            throw ParseError("answer block contains a non-numeric or non-finite token: '" + token +
                             "'");
        }
        values.push_back(v);
        token.clear();
    };
    for (char c : content) {
        if (c == ',' || c == ' ' || c == '\t' || c == '\n' || c == '\r') {
            flush();
        } else {
            token.push_back(c);
        }
    }
    flush();

    if (values.size() != horizon) {
        throw ParseError("answer length mismatch: expected " + std::to_string(horizon) +
                         " values, found " + std::to_string(values.size()));
    }
    return values;
}

std::string describe_shape(const FeatureVector& fv) {
    const double sd = fv.stddev();
    if (sd == 0.0) return "Constant level with no variation.";
    const double slope = fv.slope();
    const double lag1 = fv.autocorr(1);

    std::string trend;
    if (slope > 0.05 * sd) {
        trend = "Rising";
    } else if (slope < -0.05 * sd) {
        trend = "Falling";
    } else {
        trend = std::fabs(lag1) < 0.3 ? "Choppy" : "Oscillating";
    }

    const double cv = sd / (std::fabs(fv.mean()) + 1e-9);
    const std::string vol = cv > 0.5 ? "high volatility" : (cv > 0.15 ? "moderate volatility"
                                                                      : "low volatility");
    const std::string persistence = std::fabs(lag1) >= 0.7
                                        ? "strong step-to-step persistence"
                                        : (std::fabs(lag1) >= 0.3 ? "some step-to-step persistence"
                                                                  : "weak step-to-step persistence");
    return trend + " trend with " + vol + " and " + persistence + ".";
}

PromptBundle build_forecast_prompt(const ForecastInstance& instance,
                                   const std::vector<RetrievedItem>& patterns,
                                   const std::vector<RetrievedItem>& pos_wisdom,
                                   const std::vector<RetrievedItem>& neg_wisdom,
                                   const std::vector<GeneralLaw>& laws,
                                   const FeatureVector& features,
                                   const std::vector<LawViolation>& violation_feedback) {
    const std::size_t L = instance.lookback.size();
    const std::size_t H = instance.dynamic_context.rows.size() >= L
                              ? instance.dynamic_context.rows.size() - L
                              : (instance.target.empty() ? 0 : instance.target.size());
    const std::size_t horizon = H > 0 ? H : instance.target.size();
    const double last_obs = instance.lookback.empty() ? 0.0 : instance.lookback.back();

    PromptBundle bundle;
    bundle.answer_contract = horizon;

    bundle.role_block =
        "You are an expert time series forecaster. Task: predict the next " +
        std::to_string(horizon) + " values of the target series for instance " + instance.id +
        ", given the preceding " + std::to_string(L) +
        " observations and known future covariates. Work in the raw units of the series; do not "
        "normalize.";
    if (!instance.static_context.empty()) {
        bundle.role_block += "\nStatic attributes:";
        for (const auto& [k, v] : instance.static_context) {
            bundle.role_block += " " + k + "=" + v + ";";
        }
    }

    // Memory section: retrieved patterns, polarity-labelled lessons, hard laws.
    std::string mem;
    if (!patterns.empty()) {
        mem += "Retrieved historical patterns:\n";
        for (std::size_t i = 0; i < patterns.size(); ++i) {
            mem += "[" + std::to_string(i + 1) + "] (similarity " + fmt4(patterns[i].similarity) +
                   ") " + patterns[i].text + "\n";
        }
    }
    if (!pos_wisdom.empty()) {
        mem += "Success lessons:\n";
        for (const auto& w : pos_wisdom) mem += "- (Good, id " + std::to_string(w.id) + ") " + w.text + "\n";
    }
    if (!neg_wisdom.empty()) {
        mem += "Failure lessons:\n";
        for (const auto& w : neg_wisdom) mem += "- (Bad, id " + std::to_string(w.id) + ") " + w.text + "\n";
    }
    if (!laws.empty()) {
        mem += "Hard constraints distilled from training data:\n";
        for (const auto& law : laws) {
            mem += "- law " + std::to_string(law.id) + ": " + law_bound_text(law, last_obs) + "\n";
        }
    }
    if (mem.empty()) mem = "No retrieved experience available.\n";
    bundle.memory_block = std::move(mem);

    // Context: the four fixed sub-blocks in order.
    std::string ctx;
    ctx += "(1) Historical data, " + std::to_string(L) + " observations:\n";
    for (std::size_t i = 0; i < L; ++i) {
        ctx += timestamp_label(instance, i) + " | target=" + fmt4(instance.lookback[i]);
        if (i < instance.dynamic_context.rows.size()) {
            const auto& row = instance.dynamic_context.rows[i];
            for (std::size_t c = 0; c < row.size(); ++c) {
                ctx += " | " + instance.dynamic_context.names[c] + "=" + fmt4(row[c]);
            }
        }
        ctx += "\n";
    }
    ctx += "(2) Known future covariates, " + std::to_string(horizon) + " steps:\n";
    for (std::size_t i = 0; i < horizon; ++i) {
        const std::size_t pos = L + i;
        ctx += timestamp_label(instance, pos);
        if (pos < instance.dynamic_context.rows.size()) {
            const auto& row = instance.dynamic_context.rows[pos];
            for (std::size_t c = 0; c < row.size(); ++c) {
                ctx += " | " + instance.dynamic_context.names[c] + "=" + fmt4(row[c]);
            }
        }
        ctx += "\n";
    }
    ctx += "(3) Statistical summary: mean (\u03bc) " + fmt4(features.mean()) +
           ", standard deviation (\u03c3) " + fmt4(features.stddev()) + ", trend slope " +
           fmt4(features.slope()) + ", lag-1 correlation " + fmt4(features.autocorr(1)) + "\n";
    ctx += "(4) Shape description: " + describe_shape(features) + "\n";
    bundle.context_block = std::move(ctx);

    if (!violation_feedback.empty()) {
        std::string fb = "The previous attempt failed quality control:\n";
        for (const auto& v : violation_feedback) {
            fb += "- law " + std::to_string(v.law_id) + " (" + to_string(v.law_type) + "): value " +
                  fmt4(v.value) + " at step " + std::to_string(v.index) + " violates " +
                  v.bound_text + "\n";
        }
        fb += "Hard constraints for this retry:\n";
        for (const auto& law : laws) {
            fb += "- law " + std::to_string(law.id) + ": " + law_bound_text(law, last_obs) + "\n";
        }
        fb += "Revise the forecast so every constraint holds.";
        bundle.feedback_block = std::move(fb);
    }
    return bundle;
}

PromptBundle build_summary_prompt(const std::vector<double>& target_window) {
    if (target_window.empty()) throw ValidationError("build_summary_prompt: empty window");
    PromptBundle bundle;
    bundle.role_block =
        "You are a time series analyst. Summarize the numerical window below into one compact "
        "natural-language description covering its trend evolution, volatility, and peak values.";
    bundle.memory_block = "Not applicable.\n";
    bundle.context_block = "Window values: " + join_fmt4(target_window) + "\nWindow length: " +
                           std::to_string(target_window.size()) + "\n";
    bundle.answer_contract = 0;
    return bundle;
}

PromptBundle build_wisdom_prompt(const std::vector<TrajectorySample>& group, bool positive) {
    if (group.empty()) throw ValidationError("build_wisdom_prompt: empty trajectory group");
    PromptBundle bundle;
    bundle.role_block = positive
                            ? "You are a forecasting coach. Distill one reusable lesson from the "
                              "following successful reasoning trajectories. State what made them "
                              "work and a rule for repeating it."
                            : "You are a forecasting coach. Distill one reusable lesson from the "
                              "following failed reasoning trajectories. Name the mistake pattern "
                              "and give a preventative rule.";
    bundle.memory_block = "Not applicable.\n";
    std::string ctx;
    for (std::size_t i = 0; i < group.size(); ++i) {
        ctx += "Trajectory " + std::to_string(i + 1) + " (error " + fmt4(group[i].error) + "):\n" +
               group[i].rationale_text + "\n---\n";
    }
    bundle.context_block = std::move(ctx);
    bundle.answer_contract = 0;
    return bundle;
}

PromptBundle build_law_prompt(const std::vector<std::string>& textualized_samples) {
    if (textualized_samples.empty()) throw ValidationError("build_law_prompt: no samples");
    PromptBundle bundle;
    bundle.role_block =
        "You are a data scientist inducing general laws from statistical profiles of a series. "
        "Emit each law as one single-line JSON record. Supported records: "
        R"({"type":"non_negativity"} | {"type":"range","lo":<num>,"hi":<num>} | )"
        R"({"type":"max_step","limit":<num>,"reference":"vs_last_observation"} | )"
        R"({"type":"max_step","limit":<num>,"reference":"vs_previous_prediction"}. )"
        "Text outside JSON records is ignored.";
    bundle.memory_block = "Not applicable.\n";
    std::string ctx;
    for (std::size_t i = 0; i < textualized_samples.size(); ++i) {
        ctx += "Sample " + std::to_string(i + 1) + ": " + textualized_samples[i] + "\n";
    }
    bundle.context_block = std::move(ctx);
    bundle.answer_contract = 0;
    return bundle;
}

PromptBundle build_fusion_prompt(const std::string& text_a, const std::string& text_b) {
    if (text_a.empty() || text_b.empty()) throw ValidationError("build_fusion_prompt: empty input");
    PromptBundle bundle;
    bundle.role_block =
        "Merge the two overlapping forecasting lessons below into one concise lesson. Keep every "
        "concrete threshold and preventative rule.";
    bundle.memory_block = "Not applicable.\n";
    bundle.context_block = "Text A:\n" + text_a + "\nText B:\n" + text_b + "\n";
    bundle.answer_contract = 0;
    return bundle;
}

} // namespace expcast
