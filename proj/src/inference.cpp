#include "expcast/inference.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <limits>

#include "expcast/errors.hpp"
#include "expcast/util.hpp"

namespace expcast {

using nlohmann::json;

namespace {

constexpr std::size_t kHashBuckets = 4096;
// Re-prompt after a parse failure must hit a distinct (digest, index) key so
// a deterministic backend can answer differently.
constexpr int kParseRetryOffset = 1000;

std::vector<double> token_histogram(const std::string& text) {
    std::vector<double> hist(kHashBuckets, 0.0);
    for (const auto& tok : word_tokens(text)) {
        hist[fnv1a64(tok) % kHashBuckets] += 1.0;
    }
    return hist;
}

std::size_t effective_ma_window(const InferenceConfig& cfg, const ForecastInstance& inst) {
    const std::size_t horizon = inst.target.empty()
                                    ? inst.dynamic_context.rows.size() - inst.lookback.size()
                                    : inst.target.size();
    std::size_t w = cfg.ma_window > 0 ? cfg.ma_window : horizon;
    return std::min(w, inst.lookback.size());
}

std::size_t instance_horizon(const ForecastInstance& inst) {
    if (!inst.target.empty()) return inst.target.size();
    if (inst.dynamic_context.rows.size() > inst.lookback.size()) {
        return inst.dynamic_context.rows.size() - inst.lookback.size();
    }
    throw ValidationError("cannot determine horizon for instance " + inst.id);
}

} // namespace

double hashed_token_cosine(const std::string& a, const std::string& b) {
    const auto ha = token_histogram(a);
    const auto hb = token_histogram(b);
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < kHashBuckets; ++i) {
        dot += ha[i] * hb[i];
        na += ha[i] * ha[i];
        nb += hb[i] * hb[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

double score_trajectory_phi(const std::string& trajectory_text,
                            const std::vector<std::string>& pos_wisdom,
                            const std::vector<std::string>& neg_wisdom,
                            const InferenceConfig& cfg) {
    double best_pos = 0.0, best_neg = 0.0;
    for (const auto& w : pos_wisdom) best_pos = std::max(best_pos, hashed_token_cosine(trajectory_text, w));
    for (const auto& w : neg_wisdom) best_neg = std::max(best_neg, hashed_token_cosine(trajectory_text, w));
    return cfg.phi_pos_weight * best_pos - cfg.phi_neg_weight * best_neg;
}

std::vector<LawViolation> check_laws(const std::vector<double>& prediction,
                                     double last_observation,
                                     const std::vector<GeneralLaw>& laws) {
    std::vector<LawViolation> violations;
    for (const auto& law : laws) {
        switch (law.law_type) {
            case LawType::non_negativity:
                for (std::size_t i = 0; i < prediction.size(); ++i) {
                    if (prediction[i] < 0.0) {
                        violations.push_back({law.id, law.law_type, i, prediction[i],
                                              "non-negativity (value must be >= 0)"});
                    }
                }
                break;
            case LawType::range:
                for (std::size_t i = 0; i < prediction.size(); ++i) {
                    if (prediction[i] < law.range_lo || prediction[i] > law.range_hi) {
                        violations.push_back({law.id, law.law_type, i, prediction[i],
                                              "strictly bounded within [" + fmt4(law.range_lo) +
                                                  ", " + fmt4(law.range_hi) + "]"});
                    }
                }
                break;
            case LawType::max_step:
                if (law.step_reference == StepReference::vs_last_observation) {
                    if (!prediction.empty() &&
                        std::fabs(prediction[0] - last_observation) > law.step_limit) {
                        violations.push_back({law.id, law.law_type, 0, prediction[0],
                                              "first step within " + fmt4(law.step_limit) +
                                                  " of last observation " + fmt4(last_observation)});
                    }
                } else {
                    for (std::size_t i = 1; i < prediction.size(); ++i) {
                        if (std::fabs(prediction[i] - prediction[i - 1]) > law.step_limit) {
                            violations.push_back({law.id, law.law_type, i, prediction[i],
                                                  "consecutive steps within " + fmt4(law.step_limit)});
                        }
                    }
                }
                break;
        }
    }
    return violations;
}

ExplorationResult explore_and_select(const ForecastInstance& instance,
                                     const MemoryStore& memory,
                                     ChatBackend& backend,
                                     const InferenceConfig& cfg,
                                     const SamplingParams& sampling,
                                     const std::vector<LawViolation>& feedback) {
    ExplorationResult result;
    const std::size_t horizon = instance_horizon(instance);

    auto collect = [&](MemoryKind kind) {
        std::vector<RetrievedItem> items;
        for (const auto& r : memory.retrieve(instance.lookback, kind, cfg.k, cfg.beta)) {
            items.push_back({r.entry_id, r.similarity, memory.entry(r.entry_id).summary_text});
        }
        return items;
    };
    if (cfg.use_pattern && memory.count(MemoryKind::pattern) > 0) {
        result.patterns = collect(MemoryKind::pattern);
    }
    if (cfg.use_wisdom) {
        if (memory.count(MemoryKind::wisdom_pos) > 0) result.pos_wisdom = collect(MemoryKind::wisdom_pos);
        if (memory.count(MemoryKind::wisdom_neg) > 0) result.neg_wisdom = collect(MemoryKind::wisdom_neg);
    }

    const std::vector<GeneralLaw> laws =
        cfg.use_law ? memory.laws() : std::vector<GeneralLaw>{};
    const FeatureVector features =
        extract_features(instance.lookback, memory.similarity_config().autocorr_depth);
    const PromptBundle bundle = build_forecast_prompt(instance, result.patterns, result.pos_wisdom,
                                                      result.neg_wisdom, laws, features, feedback);

    auto sample_one = [&](int idx) -> TrajectoryOutcome {
        TrajectoryOutcome t;
        t.sample_index = idx;
        LlmReply reply = complete(backend, bundle, sampling, idx);
        t.rationale_text = reply.rationale_text;
        try {
            t.prediction = parse_answer(reply, horizon);
            t.parsed = true;
        } catch (const ParseError&) {
            // One automatic re-prompt, then the trajectory counts as failed.
            LlmReply retry = complete(backend, bundle, sampling, idx + kParseRetryOffset);
            t.rationale_text = retry.rationale_text;
            try {
                t.prediction = parse_answer(retry, horizon);
                t.parsed = true;
            } catch (const ParseError& ex) {
                log_warn("instance " + instance.id + " sample " + std::to_string(idx) +
                         " unparseable after re-prompt: " + ex.what());
            }
        }
        return t;
    };

    const int M = static_cast<int>(cfg.trajectory_count);
    result.trajectories.resize(static_cast<std::size_t>(M));
    if (cfg.parallel_samples && M > 1) {
        std::vector<std::future<TrajectoryOutcome>> futures;
        futures.reserve(static_cast<std::size_t>(M));
        for (int i = 0; i < M; ++i) {
            futures.push_back(std::async(std::launch::async, sample_one, i));
        }
        for (int i = 0; i < M; ++i) result.trajectories[static_cast<std::size_t>(i)] = futures[static_cast<std::size_t>(i)].get();
    } else {
        for (int i = 0; i < M; ++i) result.trajectories[static_cast<std::size_t>(i)] = sample_one(i);
    }

    std::vector<std::string> pos_texts, neg_texts;
    for (const auto& w : result.pos_wisdom) pos_texts.push_back(w.text);
    for (const auto& w : result.neg_wisdom) neg_texts.push_back(w.text);

    int best = -1;
    for (auto& t : result.trajectories) {
        if (!t.parsed) continue;
        t.phi = score_trajectory_phi(t.rationale_text, pos_texts, neg_texts, cfg);
        if (best < 0 || t.phi > result.trajectories[static_cast<std::size_t>(best)].phi) {
            best = t.sample_index;
        }
    }

    if (best < 0) {
        result.fallback_ma = true;
        result.prediction = moving_average_forecast(instance.lookback, horizon,
                                                    effective_ma_window(cfg, instance));
        return result;
    }
    result.selected_index = best;

    if (cfg.aggregate == InferenceConfig::Aggregate::mean) {
        std::vector<double> mean_pred(horizon, 0.0);
        std::size_t parsed = 0;
        for (const auto& t : result.trajectories) {
            if (!t.parsed) continue;
            ++parsed;
            for (std::size_t i = 0; i < horizon; ++i) mean_pred[i] += t.prediction[i];
        }
        for (double& v : mean_pred) v /= static_cast<double>(parsed);
        result.prediction = std::move(mean_pred);
    } else {
        result.prediction = result.trajectories[static_cast<std::size_t>(best)].prediction;
    }
    return result;
}

InstanceOutcome reflect_loop(const ForecastInstance& instance,
                             const MemoryStore& memory,
                             ChatBackend& backend,
                             const InferenceConfig& cfg,
                             const SamplingParams& sampling) {
    InstanceOutcome outcome;
    outcome.instance_id = instance.id;
    outcome.last_observation = instance.lookback.empty() ? 0.0 : instance.lookback.back();
    outcome.truth = instance.target;

    ExplorationResult res = explore_and_select(instance, memory, backend, cfg, sampling);
    outcome.exploration_rounds = 1;

    std::vector<LawViolation> violations;
    if (cfg.use_law) {
        violations = check_laws(res.prediction, outcome.last_observation, memory.laws());
        while (!violations.empty() && outcome.retries_used < cfg.max_retries) {
            ++outcome.retries_used;
            ++outcome.exploration_rounds;
            res = explore_and_select(instance, memory, backend, cfg, sampling, violations);
            violations = check_laws(res.prediction, outcome.last_observation, memory.laws());
        }
    }

    outcome.final_prediction = res.prediction;
    outcome.selected_trajectory = res.selected_index;
    outcome.fallback_ma = res.fallback_ma;
    outcome.laws_satisfied = violations.empty();
    outcome.final_violations = std::move(violations);
    for (const auto& t : res.trajectories) outcome.phi_scores.push_back(t.parsed ? t.phi : 0.0);
    outcome.retrieved_patterns = res.patterns;
    outcome.retrieved_wisdom = res.pos_wisdom;
    outcome.retrieved_wisdom.insert(outcome.retrieved_wisdom.end(), res.neg_wisdom.begin(),
                                    res.neg_wisdom.end());
    return outcome;
}

void adapt_confidence(InstanceOutcome& outcome,
                      const ForecastInstance& instance,
                      MemoryStore& memory,
                      const InferenceConfig& cfg) {
    if (!instance.has_target()) return;
    outcome.llm_loss = mae(outcome.final_prediction, instance.target);
    const auto ma_pred = moving_average_forecast(instance.lookback, instance.target.size(),
                                                 effective_ma_window(cfg, instance));
    outcome.ma_loss = mae(ma_pred, instance.target);
    outcome.losses_valid = true;
    if (!cfg.use_adapt) return;
    if (outcome.llm_loss < outcome.ma_loss) {  // strict: ties earn nothing
        std::vector<std::uint64_t> ids;
        for (const auto& p : outcome.retrieved_patterns) ids.push_back(p.id);
        for (const auto& w : outcome.retrieved_wisdom) ids.push_back(w.id);
        if (!ids.empty()) {
            memory.bump_confidence(ids);
            outcome.confidence_bumped_ids = std::move(ids);
        }
    }
}

RunReport run_test_stream(const std::vector<ForecastInstance>& test_instances,
                          MemoryStore& memory,
                          ChatBackend& backend,
                          const InferenceConfig& cfg,
                          const SamplingParams& sampling,
                          nlohmann::json config_snapshot) {
    RunReport report;
    report.config_snapshot = std::move(config_snapshot);
    double sum_mse = 0.0, sum_mae = 0.0;
    for (const auto& inst : test_instances) {
        try {
            InstanceOutcome outcome = reflect_loop(inst, memory, backend, cfg, sampling);
            adapt_confidence(outcome, inst, memory, cfg);
            if (outcome.losses_valid) {
                const MetricPair m = compute_metrics(outcome.final_prediction, inst.target);
                sum_mse += m.mse;
                sum_mae += m.mae;
                ++report.evaluated;
            }
            report.total_bumps += outcome.confidence_bumped_ids.size();
            report.outcomes.push_back(std::move(outcome));
        } catch (const TransportError& ex) {
            log_warn("instance " + inst.id + " excluded: " + ex.what());
            ++report.exclusions;
        }
    }
    if (report.outcomes.empty() && report.exclusions > 0) {
        throw TransportError("every test instance failed; backend unreachable?");
    }
    if (report.evaluated > 0) {
        report.aggregate_mse = sum_mse / static_cast<double>(report.evaluated);
        report.aggregate_mae = sum_mae / static_cast<double>(report.evaluated);
    }
    return report;
}

namespace {

json outcome_to_json(const InstanceOutcome& o) {
    json j;
    j["record"] = "instance";
    j["id"] = o.instance_id;
    j["prediction"] = o.final_prediction;
    j["truth"] = o.truth;
    j["last_observation"] = o.last_observation;
    j["selected_trajectory"] = o.selected_trajectory;
    j["phi_scores"] = o.phi_scores;
    j["retries_used"] = o.retries_used;
    j["exploration_rounds"] = o.exploration_rounds;
    j["laws_satisfied"] = o.laws_satisfied;
    j["fallback_ma"] = o.fallback_ma;
    if (o.losses_valid) {
        j["llm_loss"] = o.llm_loss;
        j["ma_loss"] = o.ma_loss;
    }
    json pats = json::array();
    for (const auto& p : o.retrieved_patterns) {
        pats.push_back(json{{"id", p.id}, {"similarity", p.similarity}});
    }
    j["retrieved_patterns"] = pats;
    json wis = json::array();
    for (const auto& w : o.retrieved_wisdom) {
        wis.push_back(json{{"id", w.id}, {"similarity", w.similarity}});
    }
    j["retrieved_wisdom"] = wis;
    j["confidence_bumped_ids"] = o.confidence_bumped_ids;
    json viols = json::array();
    for (const auto& v : o.final_violations) {
        viols.push_back(json{{"law_id", v.law_id},
                             {"type", to_string(v.law_type)},
                             {"index", v.index},
                             {"value", v.value},
                             {"bound", v.bound_text}});
    }
    j["violations"] = viols;
    return j;
}

InstanceOutcome outcome_from_json(const json& j) {
    InstanceOutcome o;
    o.instance_id = j.at("id").get<std::string>();
    o.final_prediction = j.at("prediction").get<std::vector<double>>();
    o.truth = j.at("truth").get<std::vector<double>>();
    o.last_observation = j.value("last_observation", 0.0);
    o.selected_trajectory = j.value("selected_trajectory", -1);
    o.phi_scores = j.value("phi_scores", std::vector<double>{});
    o.retries_used = j.value("retries_used", std::size_t{0});
    o.exploration_rounds = j.value("exploration_rounds", std::size_t{0});
    o.laws_satisfied = j.value("laws_satisfied", true);
    o.fallback_ma = j.value("fallback_ma", false);
    if (j.contains("llm_loss")) {
        o.llm_loss = j.at("llm_loss").get<double>();
        o.ma_loss = j.at("ma_loss").get<double>();
        o.losses_valid = true;
    }
    for (const auto& p : j.value("retrieved_patterns", json::array())) {
        o.retrieved_patterns.push_back({p.at("id").get<std::uint64_t>(),
                                        p.at("similarity").get<double>(), ""});
    }
    for (const auto& w : j.value("retrieved_wisdom", json::array())) {
        o.retrieved_wisdom.push_back({w.at("id").get<std::uint64_t>(),
                                      w.at("similarity").get<double>(), ""});
    }
    o.confidence_bumped_ids = j.value("confidence_bumped_ids", std::vector<std::uint64_t>{});
    return o;
}

} // namespace

void write_run_report(const RunReport& report, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ValidationError("cannot open report file for writing: " + path);
    json header;
    header["record"] = "header";
    header["config"] = report.config_snapshot;
    out << header.dump() << "\n";
    for (const auto& o : report.outcomes) out << outcome_to_json(o).dump() << "\n";
    json footer;
    footer["record"] = "aggregate";
    footer["mse"] = report.aggregate_mse;
    footer["mae"] = report.aggregate_mae;
    footer["instances"] = report.evaluated;
    footer["exclusions"] = report.exclusions;
    footer["total_bumps"] = report.total_bumps;
    out << footer.dump() << "\n";
    if (!out) throw ValidationError("failed while writing report file: " + path);
}

RunReport read_run_report(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open report file: " + path);
    RunReport report;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& ex) {
            throw ParseError("report file " + path + " line " + std::to_string(line_no) + ": " +
                             ex.what());
        }
        const std::string record = j.value("record", "");
        if (record == "header") {
            report.config_snapshot = j.value("config", json::object());
        } else if (record == "instance") {
            report.outcomes.push_back(outcome_from_json(j));
        } else if (record == "aggregate") {
            report.aggregate_mse = j.value("mse", 0.0);
            report.aggregate_mae = j.value("mae", 0.0);
            report.evaluated = j.value("instances", std::size_t{0});
            report.exclusions = j.value("exclusions", std::size_t{0});
            report.total_bumps = j.value("total_bumps", std::size_t{0});
        } else {
            throw ParseError("report file " + path + " line " + std::to_string(line_no) +
                             ": unknown record type");
        }
    }
    return report;
}

} // namespace expcast
