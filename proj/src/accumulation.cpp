#include "expcast/accumulation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "expcast/errors.hpp"
#include "expcast/kmeans.hpp"
#include "expcast/util.hpp"

namespace expcast {

using nlohmann::json;

std::string textualize_features(const FeatureVector& fv) {
    const auto names = feature_field_names(fv.autocorr_depth());
    std::string out = "the window has";
    for (std::size_t i = 0; i < names.size(); ++i) {
        out += (i == 0 ? " " : ", ");
        if (i + 1 == names.size()) out += "and ";
        out += names[i] + " " + fmt4(fv.values[i]);
    }
    out += ".";
    return out;
}

GeneralLaw compile_law(const json& record) {
    if (!record.is_object() || !record.contains("type")) {
        throw ParseError("law record must be an object with a 'type' field");
    }
    const std::string type = record.at("type").get<std::string>();
    GeneralLaw law;
    if (type == "non_negativity") {
        law.law_type = LawType::non_negativity;
    } else if (type == "range") {
        law.law_type = LawType::range;
        if (!record.contains("lo") || !record.contains("hi")) {
            throw ParseError("range law requires 'lo' and 'hi'");
        }
        law.range_lo = record.at("lo").get<double>();
        law.range_hi = record.at("hi").get<double>();
        if (!(law.range_lo <= law.range_hi)) {
            throw ParseError("range law has lo > hi: [" + fmt4(law.range_lo) + ", " +
                             fmt4(law.range_hi) + "]");
        }
    } else if (type == "max_step") {
        law.law_type = LawType::max_step;
        if (!record.contains("limit")) throw ParseError("max_step law requires 'limit'");
        law.step_limit = record.at("limit").get<double>();
        if (!(law.step_limit > 0.0)) {
            throw ParseError("max_step law limit must be positive, got " + fmt4(law.step_limit));
        }
        const std::string ref = record.value("reference", "vs_last_observation");
        if (ref == "vs_last_observation") {
            law.step_reference = StepReference::vs_last_observation;
        } else if (ref == "vs_previous_prediction") {
            law.step_reference = StepReference::vs_previous_prediction;
        } else {
            throw ParseError("unknown max_step reference: " + ref);
        }
    } else {
        throw ParseError("unknown law type: " + type);
    }
    law.description_text = record.dump();
    return law;
}

std::vector<json> extract_law_records(const std::string& reply_text) {
    std::vector<json> records;
    std::size_t start = 0;
    while (start <= reply_text.size()) {
        std::size_t end = reply_text.find('\n', start);
        if (end == std::string::npos) end = reply_text.size();
        const std::string line = reply_text.substr(start, end - start);
        const std::size_t brace = line.find('{');
        if (brace != std::string::npos) {
            const std::size_t close = line.rfind('}');
            if (close != std::string::npos && close > brace) {
                json j = json::parse(line.substr(brace, close - brace + 1), nullptr, false);
                if (!j.is_discarded() && j.is_object() && j.contains("type")) {
                    records.push_back(std::move(j));
                }
            }
        }
        start = end + 1;
    }
    return records;
}

double quantile(std::vector<double> values, double q) {
    if (values.empty()) throw ValidationError("quantile of empty sample");
    q = std::clamp(q, 0.0, 1.0);
    std::sort(values.begin(), values.end());
    const double pos = q * static_cast<double>(values.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = static_cast<std::size_t>(std::ceil(pos));
    if (lo == hi) return values[lo];
    const double frac = pos - static_cast<double>(lo);
    return values[lo] * (1.0 - frac) + values[hi] * frac;
}

double calibrate_dtw_tau(const std::vector<ForecastInstance>& train,
                         std::size_t sample_pairs,
                         std::uint64_t seed) {
    if (train.size() < 2) {
        log_warn("dtw_tau calibration needs >= 2 train instances; using 1.0");
        return 1.0;
    }
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, train.size() - 1);
    std::vector<double> distances;
    distances.reserve(sample_pairs);
    for (std::size_t s = 0; s < sample_pairs; ++s) {
        std::size_t i = pick(rng), j = pick(rng);
        if (i == j) j = (j + 1) % train.size();
        const double d = dtw_distance(train[i].lookback, train[j].lookback);
        if (d > 0.0) distances.push_back(d);
    }
    if (distances.empty()) {
        log_warn("all sampled DTW distances were zero; dtw_tau falls back to 1.0");
        return 1.0;
    }
    return quantile(std::move(distances), 0.5);
}

std::size_t abstract_patterns(const std::vector<ForecastInstance>& train,
                              MemoryStore& store,
                              ChatBackend& backend,
                              const SamplingParams& sampling,
                              AccumulationManifest& manifest) {
    std::size_t inserted = 0;
    const std::size_t depth = store.similarity_config().autocorr_depth;
    for (const auto& inst : train) {
        if (!inst.has_target()) {
            throw ValidationError("abstract_patterns: train instance " + inst.id +
                                  " has no ground-truth target");
        }
        try {
            const PromptBundle bundle = build_summary_prompt(inst.target);
            const LlmReply reply = complete(backend, bundle, sampling, 0);
            store.insert_pattern(inst.lookback, reply.rationale_text,
                                 extract_features(inst.lookback, depth));
            ++inserted;
        } catch (const std::exception& ex) {
            log_warn("pattern abstraction skipped instance " + inst.id + ": " + ex.what());
            ++manifest.skipped_summaries;
        }
    }
    if (inserted == 0 && manifest.skipped_summaries > 0) {
        throw TransportError("pattern abstraction failed for every train instance");
    }
    manifest.pattern_count = store.count(MemoryKind::pattern);
    return inserted;
}

namespace {

void distill_polarity(const std::vector<ForecastInstance>& train,
                      const std::vector<TrajectoryRecord*>& records,
                      bool positive,
                      MemoryStore& store,
                      ChatBackend& backend,
                      const SamplingParams& sampling,
                      const AccumulationConfig& cfg,
                      std::uint64_t seed,
                      AccumulationManifest& manifest) {
    if (records.empty()) {
        log_info(std::string(positive ? "positive" : "negative") +
                 " partition is empty; no wisdom of that polarity");
        return;
    }
    const std::size_t depth = store.similarity_config().autocorr_depth;

    std::vector<std::vector<double>> anchor_features;
    anchor_features.reserve(records.size());
    for (const auto* r : records) {
        anchor_features.push_back(
            extract_features(train[r->instance_index].lookback, depth).values);
    }
    const std::size_t k = std::min(cfg.law_cluster_count, records.size());
    const KMeansResult clusters = kmeans_zscore(anchor_features, std::max<std::size_t>(k, 1), seed);
    if (positive) {
        manifest.pos_trajectories = records.size();
    } else {
        manifest.neg_trajectories = records.size();
    }

    FusionCallback fuse = [&](const std::string& a, const std::string& b) {
        const PromptBundle bundle = build_fusion_prompt(a, b);
        return complete(backend, bundle, sampling, 0).rationale_text;
    };

    for (std::size_t c = 0; c < clusters.clusters; ++c) {
        std::vector<TrajectorySample> group;
        std::vector<std::size_t> member_rows;
        for (std::size_t i = 0; i < records.size(); ++i) {
            if (clusters.assignment[i] != c) continue;
            group.push_back({records[i]->rationale_text, records[i]->error});
            member_rows.push_back(i);
        }
        if (group.empty()) continue;
        // Anchor of the distilled lesson: the cluster member nearest its centroid.
        const auto reps = representatives_near_centroids(anchor_features, clusters, 1);
        std::size_t rep_row = member_rows.front();
        for (std::size_t rep : reps) {
            if (clusters.assignment[rep] == c) {
                rep_row = rep;
                break;
            }
        }
        const auto& anchor = train[records[rep_row]->instance_index].lookback;
        try {
            const PromptBundle bundle = build_wisdom_prompt(group, positive);
            const LlmReply reply = complete(backend, bundle, sampling, 0);
            store.insert_wisdom_filtered(positive ? MemoryKind::wisdom_pos : MemoryKind::wisdom_neg,
                                         anchor, reply.rationale_text,
                                         extract_features(anchor, depth), fuse);
        } catch (const std::exception& ex) {
            log_warn(std::string("wisdom distillation failed for a ") +
                     (positive ? "positive" : "negative") + " cluster: " + ex.what());
        }
    }
}

} // namespace

std::vector<TrajectoryRecord> distill_wisdom(const std::vector<ForecastInstance>& train,
                                             MemoryStore& store,
                                             ChatBackend& backend,
                                             const SamplingParams& sampling,
                                             const AccumulationConfig& cfg,
                                             const InferenceConfig& inference_cfg,
                                             std::uint64_t seed,
                                             AccumulationManifest& manifest) {
    // Training-time sweep: single trajectory, no reflection, no wisdom yet.
    InferenceConfig sweep = inference_cfg;
    sweep.trajectory_count = 1;
    sweep.max_retries = 0;
    sweep.use_law = false;
    sweep.use_wisdom = false;
    sweep.use_adapt = false;

    std::vector<TrajectoryRecord> records;
    records.reserve(train.size());
    for (std::size_t i = 0; i < train.size(); ++i) {
        const auto& inst = train[i];
        try {
            const ExplorationResult res =
                explore_and_select(inst, store, backend, sweep, sampling);
            if (res.fallback_ma || res.trajectories.empty() || !res.trajectories[0].parsed) {
                log_warn("training sweep produced no parseable trajectory for " + inst.id);
                ++manifest.skipped_trajectories;
                continue;
            }
            TrajectoryRecord rec;
            rec.instance_id = inst.id;
            rec.instance_index = i;
            rec.rationale_text = res.trajectories[0].rationale_text;
            rec.prediction = res.trajectories[0].prediction;
            rec.error = mae(rec.prediction, inst.target);
            records.push_back(std::move(rec));
        } catch (const std::exception& ex) {
            log_warn("training sweep failed for " + inst.id + ": " + ex.what());
            ++manifest.skipped_trajectories;
        }
    }

    double tau = 0.0;
    if (cfg.error_tau.has_value()) {
        tau = *cfg.error_tau;
        manifest.error_tau_source = "fixed";
    } else {
        if (records.empty()) {
            log_warn("no trajectories recorded; wisdom distillation skipped");
            return records;
        }
        std::vector<double> errors;
        errors.reserve(records.size());
        for (const auto& r : records) errors.push_back(r.error);
        tau = quantile(std::move(errors), cfg.error_tau_quantile);
        manifest.error_tau_source = "quantile(" + fmt4(cfg.error_tau_quantile) + ")";
    }
    manifest.error_tau = tau;

    // Strict-< / weak->= partition.
    std::vector<TrajectoryRecord*> pos, neg;
    for (auto& r : records) {
        r.positive = r.error < tau;
        (r.positive ? pos : neg).push_back(&r);
    }

    distill_polarity(train, pos, true, store, backend, sampling, cfg, seed, manifest);
    distill_polarity(train, neg, false, store, backend, sampling, cfg, seed + 1, manifest);

    manifest.wisdom_pos_count = store.count(MemoryKind::wisdom_pos);
    manifest.wisdom_neg_count = store.count(MemoryKind::wisdom_neg);
    return records;
}

std::size_t induce_laws(const std::vector<ForecastInstance>& train,
                        MemoryStore& store,
                        ChatBackend& backend,
                        const SamplingParams& sampling,
                        const AccumulationConfig& cfg,
                        std::uint64_t seed,
                        AccumulationManifest& manifest) {
    if (train.empty()) throw ValidationError("induce_laws: empty training split");
    const std::size_t depth = store.similarity_config().autocorr_depth;

    // Features over the full window (lookback followed by target) so induced
    // bounds cover what predictions are asked to produce.
    std::vector<FeatureVector> fvs;
    std::vector<std::vector<double>> points;
    fvs.reserve(train.size());
    for (const auto& inst : train) {
        std::vector<double> full = inst.lookback;
        full.insert(full.end(), inst.target.begin(), inst.target.end());
        fvs.push_back(extract_features(full, depth));
        points.push_back(fvs.back().values);
    }

    const KMeansResult clusters =
        kmeans_zscore(points, std::min(cfg.law_cluster_count, points.size()), seed);
    const auto reps = representatives_near_centroids(points, clusters, cfg.law_samples_per_cluster);

    std::vector<std::string> texts;
    texts.reserve(reps.size());
    for (std::size_t idx : reps) texts.push_back(textualize_features(fvs[idx]));

    std::size_t compiled = 0;
    try {
        const PromptBundle bundle = build_law_prompt(texts);
        const LlmReply reply = complete(backend, bundle, sampling, 0);
        const auto records = extract_law_records(reply.rationale_text);
        if (records.empty()) {
            manifest.rejected_laws.push_back("no parseable law records in completion");
        }
        for (const auto& rec : records) {
            try {
                store.insert_law(compile_law(rec));
                ++compiled;
            } catch (const std::exception& ex) {
                manifest.rejected_laws.push_back(std::string(ex.what()) + " in " + rec.dump());
                log_warn(std::string("rejected law record: ") + ex.what());
            }
        }
    } catch (const std::exception& ex) {
        manifest.rejected_laws.push_back(std::string("law induction failed: ") + ex.what());
        log_warn(std::string("law induction failed: ") + ex.what());
    }

    if (compiled == 0) {
        // Reflection needs at least one checkable rule.
        double lo = std::numeric_limits<double>::infinity();
        double hi = -std::numeric_limits<double>::infinity();
        double sum = 0.0, sum2 = 0.0;
        std::size_t n = 0;
        auto fold = [&](double v) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
            sum += v;
            sum2 += v * v;
            ++n;
        };
        for (const auto& inst : train) {
            for (double v : inst.lookback) fold(v);
            for (double v : inst.target) fold(v);
        }
        const double mean = sum / static_cast<double>(n);
        const double var = std::max(0.0, sum2 / static_cast<double>(n) - mean * mean);
        const double sd = std::sqrt(var);
        GeneralLaw law;
        law.law_type = LawType::range;
        law.range_lo = lo - 3.0 * sd;
        law.range_hi = hi + 3.0 * sd;
        law.description_text = "fallback operating range from training data";
        store.insert_law(law);
        manifest.used_fallback_laws = true;
        compiled = 1;
        log_info("no compilable induced laws; installed fallback range [" + fmt4(law.range_lo) +
                 ", " + fmt4(law.range_hi) + "]");
    }
    manifest.law_count = store.laws().size();
    return compiled;
}

AccumulationManifest accumulate_experience(const std::vector<ForecastInstance>& train,
                                           MemoryStore& store,
                                           ChatBackend& backend,
                                           const SamplingParams& sampling,
                                           const AccumulationConfig& cfg,
                                           const InferenceConfig& inference_cfg,
                                           std::uint64_t seed,
                                           bool calibrate_tau) {
    if (train.empty()) throw ValidationError("accumulate_experience: empty training split");
    AccumulationManifest manifest;
    manifest.train_instances = train.size();

    SimilarityConfig sim = store.similarity_config();
    if (calibrate_tau) {
        sim.dtw_tau = calibrate_dtw_tau(train, cfg.dtw_tau_sample_pairs, seed);
        manifest.dtw_tau_source = "median-pairwise-dtw";
        store.set_similarity_config(sim);
    } else {
        manifest.dtw_tau_source = "config";
    }
    manifest.dtw_tau = sim.dtw_tau;

    SamplingParams summary_params = sampling;
    summary_params.model = cfg.summary_model;
    SamplingParams reasoning_params = sampling;
    reasoning_params.model = cfg.reasoning_model;

    abstract_patterns(train, store, backend, summary_params, manifest);
    distill_wisdom(train, store, backend, reasoning_params, cfg, inference_cfg, seed, manifest);
    induce_laws(train, store, backend, summary_params, cfg, seed, manifest);

    for (const auto& inst : train) {
        manifest.max_source_row = std::max(manifest.max_source_row, inst.last_source_row());
    }
    return manifest;
}

void write_manifest(const AccumulationManifest& m, const std::string& path) {
    json j;
    j["config"] = m.config_snapshot;
    j["dtw_tau"] = m.dtw_tau;
    j["dtw_tau_source"] = m.dtw_tau_source;
    j["error_tau"] = m.error_tau;
    j["error_tau_source"] = m.error_tau_source;
    j["train_instances"] = m.train_instances;
    j["counts"] = {{"pattern", m.pattern_count},
                   {"wisdom_pos", m.wisdom_pos_count},
                   {"wisdom_neg", m.wisdom_neg_count},
                   {"law", m.law_count}};
    j["skipped_summaries"] = m.skipped_summaries;
    j["skipped_trajectories"] = m.skipped_trajectories;
    j["pos_trajectories"] = m.pos_trajectories;
    j["neg_trajectories"] = m.neg_trajectories;
    j["wisdom_batching"] = m.wisdom_batching;
    j["rejected_laws"] = m.rejected_laws;
    j["used_fallback_laws"] = m.used_fallback_laws;
    j["max_source_row"] = m.max_source_row;
    j["test_target_start"] = m.test_target_start;
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ValidationError("cannot open manifest file for writing: " + path);
    out << j.dump(2) << "\n";
}

} // namespace expcast
