#include "expcast/harness/config.hpp"

#include <fstream>

#include "expcast/errors.hpp"
#include "expcast/llm/mock_backend.hpp"

namespace expcast {

using nlohmann::json;

namespace {

template <typename T>
void maybe(const json& j, const char* key, T& out) {
    if (j.contains(key) && !j.at(key).is_null()) out = j.at(key).get<T>();
}

} // namespace

RunConfig run_config_from_json(const json& j) {
    RunConfig cfg;

    if (j.contains("dataset")) {
        const auto& d = j.at("dataset");
        maybe(d, "name", cfg.dataset.name);
        maybe(d, "path", cfg.dataset.path);
        maybe(d, "timestamp_column", cfg.dataset.timestamp_column);
        maybe(d, "target_column", cfg.dataset.target_column);
        maybe(d, "covariate_columns", cfg.dataset.covariate_columns);
        maybe(d, "frequency", cfg.dataset.frequency);
        maybe(d, "preset", cfg.dataset.preset);
        maybe(d, "L", cfg.dataset.lookback_len);
        maybe(d, "H", cfg.dataset.horizon_len);
        maybe(d, "stride", cfg.dataset.stride);
        if (d.contains("split")) {
            const auto& s = d.at("split");
            maybe(s, "train", cfg.dataset.split.train_len);
            maybe(s, "val", cfg.dataset.split.val_len);
            maybe(s, "test", cfg.dataset.split.test_len);
        }
        if (d.contains("static_context")) {
            for (const auto& [k, v] : d.at("static_context").items()) {
                cfg.dataset.static_context[k] = v.get<std::string>();
            }
        }
    }

    if (j.contains("similarity")) {
        const auto& s = j.at("similarity");
        maybe(s, "alpha", cfg.similarity.alpha);
        if (s.contains("dtw_tau") && !s.at("dtw_tau").is_null()) {
            cfg.similarity.dtw_tau = s.at("dtw_tau").get<double>();
            cfg.dtw_tau_pinned = true;
        }
        maybe(s, "cosine_clamp", cfg.similarity.cosine_clamp);
        maybe(s, "autocorr_depth", cfg.similarity.autocorr_depth);
    }

    if (j.contains("accumulation")) {
        const auto& a = j.at("accumulation");
        if (a.contains("error_tau") && !a.at("error_tau").is_null()) {
            cfg.accumulation.error_tau = a.at("error_tau").get<double>();
        }
        maybe(a, "error_tau_quantile", cfg.accumulation.error_tau_quantile);
        maybe(a, "law_cluster_count", cfg.accumulation.law_cluster_count);
        maybe(a, "law_samples_per_cluster", cfg.accumulation.law_samples_per_cluster);
        maybe(a, "dtw_tau_sample_pairs", cfg.accumulation.dtw_tau_sample_pairs);
        maybe(a, "summary_model", cfg.accumulation.summary_model);
        maybe(a, "reasoning_model", cfg.accumulation.reasoning_model);
    }

    if (j.contains("inference")) {
        const auto& i = j.at("inference");
        maybe(i, "k", cfg.inference.k);
        maybe(i, "M", cfg.inference.trajectory_count);
        maybe(i, "max_retries", cfg.inference.max_retries);
        maybe(i, "phi_pos_weight", cfg.inference.phi_pos_weight);
        maybe(i, "phi_neg_weight", cfg.inference.phi_neg_weight);
        maybe(i, "ma_window", cfg.inference.ma_window);
        maybe(i, "beta", cfg.inference.beta);
        maybe(i, "use_pattern", cfg.inference.use_pattern);
        maybe(i, "use_wisdom", cfg.inference.use_wisdom);
        maybe(i, "use_law", cfg.inference.use_law);
        maybe(i, "use_adapt", cfg.inference.use_adapt);
        maybe(i, "parallel_samples", cfg.inference.parallel_samples);
        if (i.contains("aggregate")) {
            const std::string agg = i.at("aggregate").get<std::string>();
            if (agg == "mean") {
                cfg.inference.aggregate = InferenceConfig::Aggregate::mean;
            } else if (agg == "select") {
                cfg.inference.aggregate = InferenceConfig::Aggregate::select;
            } else {
                throw ConfigError("inference.aggregate must be 'select' or 'mean'");
            }
        }
    }

    if (j.contains("sampling")) {
        const auto& s = j.at("sampling");
        maybe(s, "temperature", cfg.sampling.temperature);
        maybe(s, "top_p", cfg.sampling.top_p);
        maybe(s, "max_tokens", cfg.sampling.max_tokens);
        if (s.contains("seed") && !s.at("seed").is_null()) {
            cfg.sampling.seed = s.at("seed").get<std::uint64_t>();
        }
        maybe(s, "model", cfg.sampling.model);
    }

    if (j.contains("backend")) {
        const auto& b = j.at("backend");
        maybe(b, "kind", cfg.backend.kind);
        maybe(b, "mock_script", cfg.backend.mock_script);
        maybe(b, "base_url", cfg.backend.http.base_url);
        maybe(b, "chat_path", cfg.backend.http.chat_path);
        maybe(b, "model", cfg.backend.http.model);
        maybe(b, "api_key_env", cfg.backend.http.api_key_env);
        maybe(b, "max_attempts", cfg.backend.http.max_attempts);
        maybe(b, "backoff_base_ms", cfg.backend.http.backoff_base_ms);
        maybe(b, "timeout_s", cfg.backend.http.timeout_s);
        maybe(b, "audit_path", cfg.backend.http.audit_path);
    }

    maybe(j, "seed", cfg.seed);
    maybe(j, "memory_path", cfg.memory_path);
    maybe(j, "report_path", cfg.report_path);
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& ex) {
        throw ParseError("config file " + path + " is not valid JSON: " + ex.what());
    }
    return run_config_from_json(j);
}

json run_config_to_json(const RunConfig& cfg) {
    const WindowSpec window = resolve_window_spec(cfg.dataset);
    json j;
    j["dataset"] = {
        {"name", cfg.dataset.name},
        {"path", cfg.dataset.path},
        {"timestamp_column", cfg.dataset.timestamp_column},
        {"target_column", cfg.dataset.target_column},
        {"covariate_columns", cfg.dataset.covariate_columns},
        {"frequency", cfg.dataset.frequency},
        {"preset", cfg.dataset.preset},
        {"L", window.lookback_len},
        {"H", window.horizon_len},
        {"stride", window.stride},
        {"split",
         {{"train", cfg.dataset.split.train_len},
          {"val", cfg.dataset.split.val_len},
          {"test", cfg.dataset.split.test_len}}},
        // Metrics are computed on this single endogenous channel; covariates
        // never enter the loss.
        {"evaluated_channel", cfg.dataset.target_column},
    };
    j["similarity"] = {{"alpha", cfg.similarity.alpha},
                       {"dtw_tau", cfg.similarity.dtw_tau},
                       {"dtw_tau_pinned", cfg.dtw_tau_pinned},
                       {"cosine_clamp", cfg.similarity.cosine_clamp},
                       {"autocorr_depth", cfg.similarity.autocorr_depth}};
    json acc = {{"error_tau_quantile", cfg.accumulation.error_tau_quantile},
                {"law_cluster_count", cfg.accumulation.law_cluster_count},
                {"law_samples_per_cluster", cfg.accumulation.law_samples_per_cluster},
                {"dtw_tau_sample_pairs", cfg.accumulation.dtw_tau_sample_pairs},
                {"summary_model", cfg.accumulation.summary_model},
                {"reasoning_model", cfg.accumulation.reasoning_model}};
    if (cfg.accumulation.error_tau) acc["error_tau"] = *cfg.accumulation.error_tau;
    j["accumulation"] = acc;
    j["inference"] = {
        {"k", cfg.inference.k},
        {"M", cfg.inference.trajectory_count},
        {"max_retries", cfg.inference.max_retries},
        {"phi_pos_weight", cfg.inference.phi_pos_weight},
        {"phi_neg_weight", cfg.inference.phi_neg_weight},
        {"ma_window", cfg.inference.ma_window > 0 ? cfg.inference.ma_window : window.horizon_len},
        {"beta", cfg.inference.beta},
        {"use_pattern", cfg.inference.use_pattern},
        {"use_wisdom", cfg.inference.use_wisdom},
        {"use_law", cfg.inference.use_law},
        {"use_adapt", cfg.inference.use_adapt},
        {"parallel_samples", cfg.inference.parallel_samples},
        {"aggregate",
         cfg.inference.aggregate == InferenceConfig::Aggregate::mean ? "mean" : "select"}};
    json sampling = {{"temperature", cfg.sampling.temperature},
                     {"top_p", cfg.sampling.top_p},
                     {"max_tokens", cfg.sampling.max_tokens},
                     {"model", cfg.sampling.model}};
    if (cfg.sampling.seed) sampling["seed"] = *cfg.sampling.seed;
    j["sampling"] = sampling;
    json backend = {{"kind", cfg.backend.kind}};
    if (cfg.backend.kind == "mock") {
        backend["mock_script"] = cfg.backend.mock_script;
    } else {
        backend["base_url"] = cfg.backend.http.base_url;
        backend["chat_path"] = cfg.backend.http.chat_path;
        backend["model"] = cfg.backend.http.model;
        backend["api_key_env"] = cfg.backend.http.api_key_env;  // env var NAME only
        backend["max_attempts"] = cfg.backend.http.max_attempts;
    }
    j["backend"] = backend;
    j["seed"] = cfg.seed;
    j["memory_path"] = cfg.memory_path;
    j["report_path"] = cfg.report_path;
    return j;
}

void validate_run_config(const RunConfig& cfg) {
    if (cfg.backend.kind == "mock") {
        if (cfg.backend.mock_script.empty()) {
            throw ConfigError("mock backend requires a script path (--mock-script or backend.mock_script)");
        }
    } else if (cfg.backend.kind == "http") {
        if (cfg.backend.http.base_url.empty()) {
            throw ConfigError("http backend requires backend.base_url");
        }
        if (cfg.backend.http.api_key_env.empty()) {
            throw ConfigError("http backend requires backend.api_key_env (credential env var name)");
        }
    } else {
        throw ConfigError("backend.kind must be 'mock' or 'http'");
    }
    if (cfg.inference.k == 0) throw ConfigError("inference.k must be >= 1");
    if (cfg.inference.trajectory_count == 0) throw ConfigError("inference.M must be >= 1");
    if (cfg.similarity.alpha < 0.0 || cfg.similarity.alpha > 1.0) {
        throw ConfigError("similarity.alpha must lie in [0, 1]");
    }
    if (cfg.dtw_tau_pinned && cfg.similarity.dtw_tau <= 0.0) {
        throw ConfigError("similarity.dtw_tau must be positive");
    }
}

std::unique_ptr<ChatBackend> make_backend(const RunConfig& cfg) {
    validate_run_config(cfg);
    if (cfg.backend.kind == "mock") {
        return std::make_unique<MockBackend>(MockBackend::from_file(cfg.backend.mock_script));
    }
    return std::make_unique<HttpBackend>(cfg.backend.http);
}

} // namespace expcast
