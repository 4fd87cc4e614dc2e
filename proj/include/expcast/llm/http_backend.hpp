#pragma once

#include <mutex>
#include <string>

#include "expcast/llm/gateway.hpp"

namespace expcast {

struct HttpBackendConfig {
    std::string base_url;                         // e.g. "http://localhost:8089"
    std::string chat_path = "/v1/chat/completions";
    std::string model = "gpt-5";
    std::string api_key_env = "EXPCAST_API_KEY";  // env var name; value is never logged
    int max_attempts = 3;
    int backoff_base_ms = 250;
    int timeout_s = 120;
    std::string audit_path;                       // optional JSONL request/response log
};

// OpenAI-compatible chat-completions client. Transient failures (connection
// errors, 429, 5xx) retry with bounded exponential backoff; anything else is
// surfaced immediately.
class HttpBackend final : public ChatBackend {
public:
    explicit HttpBackend(HttpBackendConfig cfg);

    LlmReply complete(const PromptBundle& bundle,
                      const SamplingParams& params,
                      int sample_index) override;
    std::string name() const override { return "http:" + cfg_.model; }

private:
    void audit(const PromptBundle& bundle, int sample_index, int attempts, int status,
               const std::string& reply_or_error, bool ok);

    HttpBackendConfig cfg_;
    std::string api_key_;
    std::mutex audit_mutex_;
};

} // namespace expcast
