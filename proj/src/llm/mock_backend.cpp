#include "expcast/llm/mock_backend.hpp"

#include <algorithm>
#include <fstream>

#include "expcast/errors.hpp"
#include "expcast/llm/prompts.hpp"
#include "expcast/util.hpp"

namespace expcast {

using nlohmann::json;

namespace {

// Collect the numbers that follow `marker`, stopping at end of line.
std::vector<double> numbers_after(const std::string& text, const std::string& marker) {
    std::vector<double> out;
    const std::size_t at = text.find(marker);
    if (at == std::string::npos) return out;
    std::size_t pos = at + marker.size();
    const std::size_t eol = text.find('\n', pos);
    const std::string line = text.substr(pos, eol == std::string::npos ? std::string::npos : eol - pos);
    std::string token;
    auto flush = [&] {
        while (!token.empty() && (token.back() == '.' || token.back() == '-' || token.back() == '+')) {
            token.pop_back();
        }
        if (token.empty()) return;
        double v = 0.0;
        if (parse_finite_double(token, v)) out.push_back(v);
        token.clear();
    };
    for (char c : line) {
        if ((c >= '0' && c <= '9') || c == '-' || c == '+' || c == '.' || c == 'e' || c == 'E') {
            token.push_back(c);
        } else {
            flush();
        }
    }
    flush();
    return out;
}

// Every number that follows any occurrence of `label` (e.g. "minimum ").
std::vector<double> numbers_labelled(const std::string& text, const std::string& label) {
    std::vector<double> out;
    std::size_t pos = 0;
    while ((pos = text.find(label, pos)) != std::string::npos) {
        pos += label.size();
        std::string token;
        while (pos < text.size()) {
            const char c = text[pos];
            if ((c >= '0' && c <= '9') || c == '-' || c == '+' || c == '.' || c == 'e' || c == 'E') {
                token.push_back(c);
                ++pos;
            } else {
                break;
            }
        }
        // Sentence-final punctuation may ride along ("8.0000.").
        while (!token.empty() && (token.back() == '.' || token.back() == '-' || token.back() == '+')) {
            token.pop_back();
        }
        double v = 0.0;
        if (parse_finite_double(token, v)) out.push_back(v);
    }
    return out;
}

// History target values as serialized into the forecast context block.
std::vector<double> history_targets(const PromptBundle& bundle) {
    return numbers_labelled(bundle.context_block, "target=");
}

std::vector<double> fit_horizon(std::vector<double> v, std::size_t horizon) {
    if (horizon == 0 || v.empty()) return v;
    if (v.size() > horizon) v.resize(horizon);
    while (v.size() < horizon) v.push_back(v.back());
    return v;
}

} // namespace

MockBackend MockBackend::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open mock script: " + path);
    json spec;
    try {
        in >> spec;
    } catch (const json::exception& ex) {
        throw ConfigError("mock script " + path + " is not valid JSON: " + ex.what());
    }
    return from_json(spec);
}

MockBackend MockBackend::from_json(const json& spec) {
    MockBackend mock;
    const std::string mode = spec.value("mode", "rules");
    if (mode == "sequence") {
        mock.mode_ = Mode::sequence;
        mock.sequence_ = spec.at("replies").get<std::vector<std::string>>();
        if (mock.sequence_.empty()) throw ConfigError("mock sequence script has no replies");
        return mock;
    }
    if (mode != "rules") throw ConfigError("mock script mode must be 'rules' or 'sequence'");
    mock.mode_ = Mode::rules;
    if (!spec.contains("rules") || !spec.at("rules").is_array() || spec.at("rules").empty()) {
        throw ConfigError("mock rules script has no rules");
    }
    for (const auto& jr : spec.at("rules")) {
        Rule rule;
        if (jr.contains("when")) {
            const auto& w = jr.at("when");
            if (w.contains("role_contains")) rule.when.role_contains = w.at("role_contains").get<std::string>();
            if (w.contains("memory_contains")) rule.when.memory_contains = w.at("memory_contains").get<std::string>();
            if (w.contains("context_contains")) rule.when.context_contains = w.at("context_contains").get<std::string>();
            if (w.contains("feedback_contains")) rule.when.feedback_contains = w.at("feedback_contains").get<std::string>();
            if (w.contains("prompt_contains")) rule.when.prompt_contains = w.at("prompt_contains").get<std::string>();
            if (w.contains("prompt_matches")) {
                rule.when.prompt_matches = std::regex(w.at("prompt_matches").get<std::string>());
            }
            if (w.contains("feedback_present")) rule.when.feedback_present = w.at("feedback_present").get<bool>();
            if (w.contains("sample_index")) rule.when.sample_index = w.at("sample_index").get<int>();
            if (w.contains("sample_index_mod")) {
                const auto arr = w.at("sample_index_mod").get<std::vector<int>>();
                if (arr.size() != 2 || arr[0] <= 0) throw ConfigError("sample_index_mod wants [m, r]");
                rule.when.sample_index_mod = std::make_pair(arr[0], arr[1]);
            }
        }
        const auto& r = jr.at("reply");
        rule.reply.behavior = r.at("behavior").get<std::string>();
        rule.reply.text = r.value("text", "");
        if (r.contains("values")) rule.reply.values = r.at("values").get<std::vector<double>>();
        rule.reply.offset = r.value("offset", 0.0);
        rule.reply.rate = r.value("rate", 0.0);
        rule.reply.pad = r.value("pad", 0.0);
        rule.reply.prefix = r.value("prefix", "");
        mock.rules_.push_back(std::move(rule));
    }
    return mock;
}

bool MockBackend::matches(const Condition& c, const PromptBundle& bundle,
                          const std::string& rendered, int sample_index) const {
    auto has = [](const std::string& hay, const std::string& needle) {
        return hay.find(needle) != std::string::npos;
    };
    if (c.role_contains && !has(bundle.role_block, *c.role_contains)) return false;
    if (c.memory_contains && !has(bundle.memory_block, *c.memory_contains)) return false;
    if (c.context_contains && !has(bundle.context_block, *c.context_contains)) return false;
    if (c.feedback_contains && !has(bundle.feedback_block, *c.feedback_contains)) return false;
    if (c.prompt_contains && !has(rendered, *c.prompt_contains)) return false;
    if (c.prompt_matches && !std::regex_search(rendered, *c.prompt_matches)) return false;
    if (c.feedback_present && *c.feedback_present != !bundle.feedback_block.empty()) return false;
    if (c.sample_index && *c.sample_index != sample_index) return false;
    if (c.sample_index_mod) {
        const auto [m, r] = *c.sample_index_mod;
        if (sample_index % m != r) return false;
    }
    return true;
}

std::string MockBackend::generate(const Reply& r, const PromptBundle& bundle) const {
    const std::size_t horizon = bundle.answer_contract;
    auto with_answer = [&](const std::string& rationale, std::vector<double> values) {
        return (r.prefix.empty() ? rationale : r.prefix) + "\n" +
               serialize_answer(fit_horizon(std::move(values), horizon));
    };

    if (r.behavior == "literal") return r.text;
    if (r.behavior == "answer") {
        return with_answer("Scripted forecast.", r.values);
    }
    if (r.behavior == "repeat_last" || r.behavior == "extrapolate_linear" || r.behavior == "drift") {
        const auto hist = history_targets(bundle);
        if (hist.empty()) throw ConfigError("mock behavior '" + r.behavior +
                                            "' found no target= values in the prompt");
        std::vector<double> values;
        values.reserve(horizon);
        if (r.behavior == "repeat_last") {
            for (std::size_t i = 0; i < horizon; ++i) values.push_back(hist.back() + r.offset);
            return with_answer("Holding the last observed level.", std::move(values));
        }
        if (r.behavior == "extrapolate_linear") {
            const double last = hist.back();
            const double slope = hist.size() >= 2 ? hist.back() - hist[hist.size() - 2] : 0.0;
            for (std::size_t i = 0; i < horizon; ++i) {
                values.push_back(last + slope * static_cast<double>(i + 1));
            }
            return with_answer("Extending the most recent linear trend.", std::move(values));
        }
        for (std::size_t i = 0; i < horizon; ++i) {
            values.push_back(hist.back() + r.rate * static_cast<double>(i + 1));
        }
        return with_answer("Applying a generic drift from the last observation.", std::move(values));
    }
    if (r.behavior == "echo_continuation") {
        auto cont = numbers_after(bundle.memory_block, "continuation:");
        if (cont.empty()) {
            throw ConfigError("mock behavior 'echo_continuation' found no continuation in memory");
        }
        return with_answer("Following the top retrieved regime continuation.", std::move(cont));
    }
    if (r.behavior == "summary_echo") {
        auto window = numbers_after(bundle.context_block, "Window values:");
        if (window.empty()) throw ConfigError("mock behavior 'summary_echo' found no window values");
        const auto [lo_it, hi_it] = std::minmax_element(window.begin(), window.end());
        std::string text = "Trend runs from " + fmt4(window.front()) + " to " + fmt4(window.back()) +
                           "; volatility span " + fmt4(*hi_it - *lo_it) + "; peak value " +
                           fmt4(*hi_it) + ". continuation: " + join_fmt4(window);
        return text;
    }
    if (r.behavior == "law_from_stats") {
        const std::string full = bundle.context_block;
        const auto mins = numbers_labelled(full, "minimum ");
        const auto maxs = numbers_labelled(full, "maximum ");
        if (mins.empty() || maxs.empty()) {
            throw ConfigError("mock behavior 'law_from_stats' found no minimum/maximum stats");
        }
        const double lo = *std::min_element(mins.begin(), mins.end()) - r.pad;
        const double hi = *std::max_element(maxs.begin(), maxs.end()) + r.pad;
        json law;
        law["type"] = "range";
        law["lo"] = lo;
        law["hi"] = hi;
        return "Observed spans suggest a stable operating range.\n" + law.dump();
    }
    throw ConfigError("unknown mock behavior: " + r.behavior);
}

LlmReply MockBackend::complete(const PromptBundle& bundle, const SamplingParams& params,
                               int sample_index) {
    (void)params;
    calls_.fetch_add(1);
    if (mode_ == Mode::sequence) {
        const std::size_t idx = seq_pos_.fetch_add(1);
        if (idx >= sequence_.size()) {
            throw ConfigError("mock script underrun: " + std::to_string(sequence_.size()) +
                              " replies scripted, call " + std::to_string(idx + 1) + " requested");
        }
        return LlmReply{sequence_[idx], {}};
    }
    const std::string rendered = render_prompt(bundle);
    for (const auto& rule : rules_) {
        if (matches(rule.when, bundle, rendered, sample_index)) {
            return LlmReply{generate(rule.reply, bundle), {}};
        }
    }
    throw ConfigError("no mock rule matched the prompt (role: " +
                      bundle.role_block.substr(0, 60) + "...)");
}

} // namespace expcast
