#include "expcast/llm/http_backend.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "expcast/errors.hpp"
#include "expcast/util.hpp"

namespace expcast {

using nlohmann::json;

HttpBackend::HttpBackend(HttpBackendConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.base_url.empty()) throw ConfigError("http backend requires a base_url");
    if (!cfg_.api_key_env.empty()) {
        if (const char* v = std::getenv(cfg_.api_key_env.c_str())) api_key_ = v;
    }
}

void HttpBackend::audit(const PromptBundle& bundle, int sample_index, int attempts, int status,
                        const std::string& reply_or_error, bool ok) {
    if (cfg_.audit_path.empty()) return;
    std::lock_guard<std::mutex> lock(audit_mutex_);
    std::ofstream out(cfg_.audit_path, std::ios::app);
    if (!out) return;
    json rec;
    rec["backend"] = "http";
    rec["model"] = cfg_.model;
    rec["digest"] = bundle_digest(bundle);
    rec["sample_index"] = sample_index;
    rec["attempts"] = attempts;
    rec["status"] = status;
    rec["ok"] = ok;
    // Bodies only; headers (and thus credentials) are never recorded.
    rec["request"] = render_prompt(bundle);
    rec["reply"] = reply_or_error;
    out << rec.dump() << "\n";
}

LlmReply HttpBackend::complete(const PromptBundle& bundle, const SamplingParams& params,
                               int sample_index) {
    json body;
    body["model"] = params.model.empty() ? cfg_.model : params.model;
    body["temperature"] = params.temperature;
    body["top_p"] = params.top_p;
    body["max_tokens"] = params.max_tokens;
    body["messages"] = json::array({json{{"role", "user"}, {"content", render_prompt(bundle)}}});
    const std::string payload = body.dump();

    std::string last_error = "no attempt made";
    int last_status = 0;
    for (int attempt = 0; attempt < cfg_.max_attempts; ++attempt) {
        if (attempt > 0) {
            const auto wait = std::chrono::milliseconds(cfg_.backoff_base_ms * (1 << (attempt - 1)));
            std::this_thread::sleep_for(wait);
        }
        httplib::Client client(cfg_.base_url);
        client.set_connection_timeout(cfg_.timeout_s, 0);
        client.set_read_timeout(cfg_.timeout_s, 0);
        httplib::Headers headers;
        if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

        auto res = client.Post(cfg_.chat_path, headers, payload, "application/json");
        if (!res) {
            last_error = "connection failure: " + httplib::to_string(res.error());
            last_status = 0;
            continue;  // transient
        }
        last_status = res->status;
        if (res->status == 200) {
            try {
                json parsed = json::parse(res->body);
                LlmReply reply;
                reply.rationale_text =
                    parsed.at("choices").at(0).at("message").at("content").get<std::string>();
                if (parsed.contains("usage")) {
                    reply.usage.prompt_tokens = parsed["usage"].value("prompt_tokens", 0);
                    reply.usage.completion_tokens = parsed["usage"].value("completion_tokens", 0);
                }
                audit(bundle, sample_index, attempt + 1, res->status, reply.rationale_text, true);
                return reply;
            } catch (const json::exception& ex) {
                audit(bundle, sample_index, attempt + 1, res->status, ex.what(), false);
                throw TransportError(std::string("malformed chat-completions response: ") + ex.what());
            }
        }
        last_error = "HTTP " + std::to_string(res->status);
        if (res->status != 429 && res->status < 500) {
            // Client errors are not retryable.
            audit(bundle, sample_index, attempt + 1, res->status, res->body, false);
            throw TransportError("chat-completions request rejected: " + last_error);
        }
    }
    audit(bundle, sample_index, cfg_.max_attempts, last_status, last_error, false);
    throw TransportError("chat-completions request failed after " +
                         std::to_string(cfg_.max_attempts) + " attempts: " + last_error);
}

} // namespace expcast
