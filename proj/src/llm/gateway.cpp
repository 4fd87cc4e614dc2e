#include "expcast/llm/gateway.hpp"

#include "expcast/errors.hpp"
#include "expcast/util.hpp"

namespace expcast {

std::string render_prompt(const PromptBundle& bundle) {
    std::string out;
    out += "[Role & Task]\n" + bundle.role_block + "\n\n";
    out += "[In-Context Memory]\n" + bundle.memory_block + "\n\n";
    out += "[Input Context]\n" + bundle.context_block + "\n";
    if (!bundle.feedback_block.empty()) {
        out += "\n[Feedback & Constraints]\n" + bundle.feedback_block + "\n";
    }
    if (bundle.answer_contract > 0) {
        out += "\n[Instruction]\nThink step by step, then give the final forecast as exactly " +
               std::to_string(bundle.answer_contract) +
               " comma-separated values in the strict format <answer>v1, v2, ...</answer>.\n";
    }
    return out;
}

std::uint64_t bundle_digest(const PromptBundle& bundle) {
    return fnv1a64(render_prompt(bundle));
}

LlmReply complete(ChatBackend& backend,
                  const PromptBundle& bundle,
                  const SamplingParams& params,
                  int sample_index) {
    LlmReply reply = backend.complete(bundle, params, sample_index);
    if (reply.rationale_text.empty()) {
        throw TransportError("backend '" + backend.name() + "' returned an empty completion");
    }
    return reply;
}

} // namespace expcast
