#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>

namespace expcast {

struct SamplingParams {
    double temperature = 0.6;
    double top_p = 0.7;
    int max_tokens = 16384;
    std::optional<std::uint64_t> seed;  // honored by the mock backend only
    std::string model;                  // empty -> backend default
};

// The four assembled prompt sections plus the expected answer length.
// feedback_block is nonempty iff a reflective retry is in progress.
struct PromptBundle {
    std::string role_block;
    std::string memory_block;
    std::string context_block;
    std::string feedback_block;
    std::size_t answer_contract = 0;  // 0 for free-text prompts
};

struct TokenUsage {
    std::int64_t prompt_tokens = 0;
    std::int64_t completion_tokens = 0;
};

struct LlmReply {
    std::string rationale_text;
    TokenUsage usage;
};

// Deterministic flattening of a bundle into the single user message sent to
// the backend. Appends the strict <answer> instruction when a numeric answer
// is expected.
std::string render_prompt(const PromptBundle& bundle);

std::uint64_t bundle_digest(const PromptBundle& bundle);

class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    virtual LlmReply complete(const PromptBundle& bundle,
                              const SamplingParams& params,
                              int sample_index) = 0;
    virtual std::string name() const = 0;
};

// Thin gateway entry point; rejects empty completions.
LlmReply complete(ChatBackend& backend,
                  const PromptBundle& bundle,
                  const SamplingParams& params,
                  int sample_index = 0);

// Test-friendly backend wrapping a callable.
class LambdaBackend final : public ChatBackend {
public:
    using Fn = std::function<LlmReply(const PromptBundle&, const SamplingParams&, int)>;
    explicit LambdaBackend(Fn fn) : fn_(std::move(fn)) {}
    LlmReply complete(const PromptBundle& b, const SamplingParams& p, int i) override {
        return fn_(b, p, i);
    }
    std::string name() const override { return "lambda"; }

private:
    Fn fn_;
};

} // namespace expcast
