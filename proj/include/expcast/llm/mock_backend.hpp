#pragma once

#include <atomic>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include <json.hpp>

#include "expcast/llm/gateway.hpp"

namespace expcast {

// Deterministic scripted backend. Replies are a pure function of the prompt
// bundle, the seed, and the sample index, so results do not depend on call
// order or concurrency.
//
// Script document (JSON):
//   {"mode":"sequence","replies":["...", ...]}
//   {"mode":"rules","rules":[{"when":{...},"reply":{...}}, ...]}
//
// Rule conditions (all AND-ed; omit "when" for a catch-all):
//   role_contains / memory_contains / context_contains / feedback_contains /
//   prompt_contains: substring match on the named block or the rendered prompt
//   prompt_matches: ECMAScript regex searched in the rendered prompt
//   feedback_present: bool
//   sample_index: exact match; sample_index_mod: [m, r] matches index % m == r
//
// Reply behaviors:
//   literal            text verbatim
//   answer             "values" rendered as a strict <answer> block
//   repeat_last        H copies of last history target (+ "offset")
//   extrapolate_linear continue the line through the last two history targets
//   drift              last history target + "rate" * (step+1)
//   echo_continuation  replay the numbers after the first "continuation:" in
//                      the memory block (the top-ranked retrieved pattern)
//   summary_echo       window summary that appends "continuation: <values>"
//   law_from_stats     one range-law JSON record spanning the min/max values
//                      named in the prompt (+/- "pad")
class MockBackend final : public ChatBackend {
public:
    MockBackend() = default;
    MockBackend(MockBackend&& other) noexcept
        : mode_(other.mode_),
          rules_(std::move(other.rules_)),
          sequence_(std::move(other.sequence_)),
          seq_pos_(other.seq_pos_.load()),
          calls_(other.calls_.load()) {}

    static MockBackend from_file(const std::string& path);
    static MockBackend from_json(const nlohmann::json& spec);

    LlmReply complete(const PromptBundle& bundle,
                      const SamplingParams& params,
                      int sample_index) override;
    std::string name() const override { return "mock"; }

    int call_count() const { return calls_.load(); }

private:
    struct Condition {
        std::optional<std::string> role_contains;
        std::optional<std::string> memory_contains;
        std::optional<std::string> context_contains;
        std::optional<std::string> feedback_contains;
        std::optional<std::string> prompt_contains;
        std::optional<std::regex> prompt_matches;
        std::optional<bool> feedback_present;
        std::optional<int> sample_index;
        std::optional<std::pair<int, int>> sample_index_mod;
    };
    struct Reply {
        std::string behavior;
        std::string text;
        std::vector<double> values;
        double offset = 0.0;
        double rate = 0.0;
        double pad = 0.0;
        std::string prefix;
    };
    struct Rule {
        Condition when;
        Reply reply;
    };

    enum class Mode { rules, sequence };

    bool matches(const Condition& c, const PromptBundle& bundle, const std::string& rendered,
                 int sample_index) const;
    std::string generate(const Reply& r, const PromptBundle& bundle) const;

    Mode mode_ = Mode::rules;
    std::vector<Rule> rules_;
    std::vector<std::string> sequence_;
    std::atomic<std::size_t> seq_pos_{0};
    mutable std::atomic<int> calls_{0};
};

} // namespace expcast
